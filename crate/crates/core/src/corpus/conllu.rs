use std::collections::BTreeMap;
use std::io::BufRead;

use super::{CorpusError, FeatureSchema, Result, WordSample, NA_LABEL};

/// Leading lines dropped from the Finnish UD 1.4 training file, whose first
/// sentences were used to build the segmentation test set.
pub const FINNISH_SKIP_LINES: usize = 520;

/// One token row before schema filtering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawToken {
    pub line: usize,
    pub form: String,
    pub feats: Vec<(String, String)>,
}

/// Reads token rows of a CoNLL-U stream, skipping the first `skip_lines`
/// physical lines, comments, blank lines, multi-word ranges and empty nodes.
pub fn read_conllu_tokens<R: BufRead>(reader: R, skip_lines: usize) -> Result<Vec<RawToken>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if i < skip_lines {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(CorpusError::Malformed {
                line: lineno,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        if id.parse::<usize>().is_err() {
            return Err(CorpusError::Malformed {
                line: lineno,
                message: format!("bad token id {id:?}"),
            });
        }
        let form = cols[1];
        if form.is_empty() {
            return Err(CorpusError::Malformed {
                line: lineno,
                message: "empty FORM".into(),
            });
        }
        let mut feats = Vec::new();
        if cols[5] != "_" {
            for kv in cols[5].split('|') {
                let (k, v) = kv.split_once('=').ok_or_else(|| CorpusError::Malformed {
                    line: lineno,
                    message: format!("feature {kv:?} is not Key=Value"),
                })?;
                feats.push((k.to_string(), v.to_string()));
            }
        }
        out.push(RawToken {
            line: lineno,
            form: form.to_string(),
            feats,
        });
    }
    Ok(out)
}

/// Parses a CoNLL-U stream into one [`WordSample`] per token row, keeping
/// only the classes of `schema` and filling the rest with NA.
pub fn parse_conllu<R: BufRead>(reader: R, skip_lines: usize, schema: &FeatureSchema) -> Result<Vec<WordSample>> {
    read_conllu_tokens(reader, skip_lines)?
        .into_iter()
        .map(|tok| {
            let mut features: BTreeMap<String, String> = schema
                .classes
                .iter()
                .map(|c| (c.name.clone(), NA_LABEL.to_string()))
                .collect();
            for (k, v) in tok.feats {
                let Some(class) = schema.class(&k) else { continue };
                if class.label_index(&v).is_none() {
                    return Err(CorpusError::UnknownValue { class: k, value: v });
                }
                features.insert(k, v);
            }
            Ok(WordSample::new(tok.form, features))
        })
        .collect()
}

/// Writes each sample as a one-token sentence; NA features are omitted.
pub fn write_conllu<W: std::io::Write>(mut w: W, samples: &[WordSample]) -> std::io::Result<()> {
    for s in samples {
        let feats: Vec<String> = s
            .features
            .iter()
            .filter(|(_, v)| v.as_str() != NA_LABEL)
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let feats = if feats.is_empty() {
            "_".to_string()
        } else {
            feats.join("|")
        };
        writeln!(w, "1\t{}\t_\t_\t_\t{feats}\t_\t_\t_\t_\n", s.surface)?;
    }
    Ok(())
}
