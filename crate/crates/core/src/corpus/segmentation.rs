use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{CorpusError, FeatureSchema, Result};

/// A word/feature pair and the character positions (0-based, into the raw
/// surface) realising that feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentAnnotation {
    pub surface: String,
    pub class: String,
    pub value: String,
    /// Sorted, unique, non-empty.
    pub indices: Vec<usize>,
}

impl SegmentAnnotation {
    pub fn new(surface: &str, class: &str, value: &str, mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        SegmentAnnotation {
            surface: surface.to_string(),
            class: class.to_string(),
            value: value.to_string(),
            indices,
        }
    }

    pub fn is_consecutive(&self) -> bool {
        self.indices.windows(2).all(|w| w[1] == w[0] + 1)
    }
}

/// Reads `surface<TAB>Class=Value<TAB>i,j,k` lines. Blank lines and `#`
/// comments are ignored, as are `lemma=` segments.
pub fn parse_segmentation<R: BufRead>(reader: R, schema: &FeatureSchema) -> Result<Vec<SegmentAnnotation>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(CorpusError::Malformed {
                line: lineno,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        let surface = cols[0];
        let (class, value) = cols[1].split_once('=').ok_or_else(|| CorpusError::Malformed {
            line: lineno,
            message: format!("feature {:?} is not Class=Value", cols[1]),
        })?;
        if class.eq_ignore_ascii_case("lemma") {
            continue;
        }
        let fc = schema
            .class(class)
            .ok_or_else(|| CorpusError::UnknownClass(class.to_string()))?;
        if fc.label_index(value).is_none() {
            return Err(CorpusError::UnknownValue {
                class: class.to_string(),
                value: value.to_string(),
            });
        }
        let len = surface.chars().count();
        let mut indices = Vec::new();
        for tok in cols[2].split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let index: usize = tok.parse().map_err(|_| CorpusError::Malformed {
                line: lineno,
                message: format!("bad index {tok:?}"),
            })?;
            if index >= len {
                return Err(CorpusError::IndexOutOfRange {
                    line: lineno,
                    surface: surface.to_string(),
                    index,
                    len,
                });
            }
            indices.push(index);
        }
        if indices.is_empty() {
            return Err(CorpusError::Malformed {
                line: lineno,
                message: "empty index set".into(),
            });
        }
        out.push(SegmentAnnotation::new(surface, class, value, indices));
    }
    Ok(out)
}

pub fn write_segmentation<W: Write>(mut w: W, annotations: &[SegmentAnnotation]) -> std::io::Result<()> {
    for a in annotations {
        let idx: Vec<String> = a.indices.iter().map(usize::to_string).collect();
        writeln!(w, "{}\t{}={}\t{}", a.surface, a.class, a.value, idx.join(","))?;
    }
    Ok(())
}

/// Spelled-out values seen in hand-written segmentations.
const VALUE_ALIASES: &[(&str, &str)] = &[
    ("feminine", "Fem"),
    ("masculine", "Masc"),
    ("neuter", "Neut"),
    ("common", "Com"),
    ("singular", "Sing"),
    ("plural", "Plur"),
    ("past", "Past"),
    ("present", "Pres"),
    ("future", "Fut"),
    ("definite", "Def"),
    ("indefinite", "Ind"),
];

fn resolve_feature(schema: &FeatureSchema, class: &str, value: &str, line: usize) -> Result<(String, String)> {
    let fc = schema
        .classes
        .iter()
        .find(|c| c.name.eq_ignore_ascii_case(class))
        .ok_or_else(|| CorpusError::UnknownClass(class.to_string()))?;
    let value = VALUE_ALIASES
        .iter()
        .find(|(alias, _)| alias.eq_ignore_ascii_case(value))
        .map_or(value, |&(_, v)| v);
    let label = fc
        .labels
        .iter()
        .find(|l| l.eq_ignore_ascii_case(value))
        .ok_or_else(|| CorpusError::Malformed {
            line,
            message: format!("value {value:?} not in class {}", fc.name),
        })?;
    Ok((fc.name.clone(), label.clone()))
}

/// Converts a segment listing into annotations. Each block names the word on
/// its first line, then lists its segments in order:
///
/// ```text
/// económicas
/// económic : lemma=económico
/// a : gender=feminine
/// s : number=plural
/// ```
///
/// Segments must concatenate to the word. A line may carry several
/// features separated by `,` or `;`; a feature repeated on several segments
/// gets the union of their positions. Lemma entries are dropped.
pub fn convert_segment_listing<R: BufRead>(reader: R, schema: &FeatureSchema) -> Result<Vec<SegmentAnnotation>> {
    struct Block {
        surface: String,
        start_line: usize,
        covered: String,
        features: Vec<(String, String, Vec<usize>)>,
    }
    fn finish(block: Block, out: &mut Vec<SegmentAnnotation>) -> Result<()> {
        if block.covered != block.surface {
            return Err(CorpusError::Malformed {
                line: block.start_line,
                message: format!("segments {:?} do not spell {:?}", block.covered, block.surface),
            });
        }
        for (class, value, indices) in block.features {
            out.push(SegmentAnnotation::new(&block.surface, &class, &value, indices));
        }
        Ok(())
    }

    let mut out = Vec::new();
    let mut block: Option<Block> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let line = line.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if let Some(b) = block.take() {
                finish(b, &mut out)?;
            }
            continue;
        }
        let Some(b) = block.as_mut() else {
            block = Some(Block {
                surface: line.to_string(),
                start_line: lineno,
                covered: String::new(),
                features: Vec::new(),
            });
            continue;
        };
        let (segment, feats) = line.split_once(" : ").ok_or_else(|| CorpusError::Malformed {
            line: lineno,
            message: format!("expected `segment : feature=value`, found {line:?}"),
        })?;
        let start = b.covered.chars().count();
        b.covered.push_str(segment.trim());
        let positions: Vec<usize> = (start..b.covered.chars().count()).collect();
        for feat in feats.split([',', ';']).map(str::trim).filter(|f| !f.is_empty()) {
            let (class, value) = feat.split_once('=').ok_or_else(|| CorpusError::Malformed {
                line: lineno,
                message: format!("feature {feat:?} is not class=value"),
            })?;
            if class.trim().eq_ignore_ascii_case("lemma") {
                continue;
            }
            let (class, value) = resolve_feature(schema, class.trim(), value.trim(), lineno)?;
            match b.features.iter_mut().find(|(c, v, _)| *c == class && *v == value) {
                Some((_, _, idx)) => idx.extend(&positions),
                None => b.features.push((class, value, positions.clone())),
            }
        }
    }
    if let Some(b) = block {
        finish(b, &mut out)?;
    }
    Ok(out)
}
