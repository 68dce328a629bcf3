//! Model file layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes
//! version    u32
//! header_len u64
//! header     JSON {architecture, config, d2, schema, vocab, tensors: [{name, shape}]}
//! tensors    f64 values in header order
//! checksum   SHA-256 of everything above
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Architecture, EncoderConfig, Model, ModelError, Result};
use crate::corpus::{CharVocab, FeatureSchema};
use crate::tensor::{ParamStore, Tensor};

pub const MAGIC: &[u8; 8] = b"CHCDMDL\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    config: EncoderConfig,
    d2: usize,
    schema: FeatureSchema,
    vocab: CharVocab,
    tensors: Vec<TensorEntry>,
}

fn encode(model: &Model) -> Result<Vec<u8>> {
    let header = Header {
        architecture: model.architecture(),
        config: model.config.clone(),
        d2: model.output_dim(),
        schema: model.schema.clone(),
        vocab: model.vocab.clone(),
        tensors: model
            .params
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| ModelError::Corrupt(e.to_string()))?;
    let mut buf = Vec::with_capacity(json.len() + 8 * model.params.num_scalars() + 64);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for t in model.params.tensors() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(ModelError::Corrupt(format!("truncated {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn decode(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let mut rest = &bytes[MAGIC.len()..];
    let version = u32::from_le_bytes(take(&mut rest, 4, "version")?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(ModelError::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < MAGIC.len() + 12 + 32 {
        return Err(ModelError::Corrupt("truncated file".into()));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(ModelError::Checksum);
    }
    let mut rest = &body[MAGIC.len() + 4..];
    let header_len = u64::from_le_bytes(take(&mut rest, 8, "header length")?.try_into().unwrap());
    let header_bytes = take(&mut rest, header_len as usize, "header")?;
    let header: Header = serde_json::from_slice(header_bytes).map_err(|e| ModelError::Corrupt(e.to_string()))?;
    if header.architecture != header.config.architecture() || header.d2 != header.config.output_dim() {
        return Err(ModelError::Corrupt("header fields disagree with encoder config".into()));
    }
    let mut params = ParamStore::new();
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        let raw = take(&mut rest, n * 8, &entry.name)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.add(entry.name, Tensor::new(entry.shape, data)?);
    }
    if !rest.is_empty() {
        return Err(ModelError::Corrupt(format!("{} trailing bytes", rest.len())));
    }
    Model::from_parts(header.config, header.schema, header.vocab, params)
}

pub fn write_model(model: &Model, mut w: impl Write) -> Result<()> {
    w.write_all(&encode(model)?)?;
    Ok(())
}

pub fn read_model(mut r: impl Read) -> Result<Model> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    fn model(cfg: EncoderConfig) -> Model {
        let mut m = Model::init(
            cfg,
            FeatureSchema::builtin("sv").unwrap(),
            CharVocab::from_chars("abcåö".chars()),
            &mut Rng::seeded(5),
        )
        .unwrap();
        let mut rng = Rng::seeded(6);
        for id in m.params.ids().collect::<Vec<_>>() {
            for v in m.params.get_mut(id).data_mut() {
                *v += rng.normal() * 0.1;
            }
        }
        m
    }

    fn small_cnn() -> EncoderConfig {
        EncoderConfig::Cnn {
            embed_dim: 4,
            banks: vec![(1, 3), (2, 3)],
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        for cfg in [
            small_cnn(),
            EncoderConfig::Bilstm {
                embed_dim: 4,
                hidden: 3,
            },
        ] {
            let m = model(cfg);
            let mut a = Vec::new();
            write_model(&m, &mut a).unwrap();
            let loaded = read_model(a.as_slice()).unwrap();
            assert_eq!(loaded, m);
            let mut b = Vec::new();
            write_model(&loaded, &mut b).unwrap();
            assert_eq!(a, b);
            for w in ["abö", "c", "åååå"] {
                assert_eq!(m.logits(w).unwrap(), loaded.logits(w).unwrap());
            }
        }
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = Vec::new();
        write_model(&model(small_cnn()), &mut bytes).unwrap();
        bytes[0] ^= 0xff;
        assert!(matches!(read_model(bytes.as_slice()), Err(ModelError::BadMagic)));
    }

    #[test]
    fn wrong_version() {
        let mut bytes = Vec::new();
        write_model(&model(small_cnn()), &mut bytes).unwrap();
        bytes[8] = 9;
        assert!(matches!(
            read_model(bytes.as_slice()),
            Err(ModelError::UnsupportedVersion { found: 9, .. })
        ));
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let mut bytes = Vec::new();
        write_model(&model(small_cnn()), &mut bytes).unwrap();
        let k = bytes.len() - 40;
        bytes[k] ^= 1;
        assert!(matches!(read_model(bytes.as_slice()), Err(ModelError::Checksum)));
        assert!(matches!(read_model(&bytes[..20]), Err(ModelError::Corrupt(_))));
    }
}
