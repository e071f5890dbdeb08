use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::normalize::Normalizer;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CTCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model together with everything needed to run it on raw data.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model_config: ModelConfig,
    pub params: ModelParams,
    pub normalizer: Normalizer,
    /// Hex SHA-256 of the canonical JSON of the training configuration.
    pub train_config_digest: String,
}

impl Checkpoint {
    pub fn new(
        model_config: ModelConfig,
        params: ModelParams,
        normalizer: Normalizer,
        train_config_digest: String,
    ) -> Result<Self> {
        params.check_config(&model_config)?;
        if normalizer.n_locations() != model_config.n_locations {
            return Err(Error::shape(
                "checkpoint normalizer",
                format!(
                    "{} locations, model has {}",
                    normalizer.n_locations(),
                    model_config.n_locations
                ),
            ));
        }
        Ok(Self {
            format_version: CHECKPOINT_VERSION,
            model_config,
            params,
            normalizer,
            train_config_digest,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    model_config: ModelConfig,
    train_config_digest: String,
}

/// Layout (little-endian): magic, `u32` version, `u32` header length, JSON
/// header, `N` means, `N` stds, then every parameter tensor in canonical
/// order as raw `f64`.
pub fn encode_checkpoint(cp: &Checkpoint) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        model_config: cp.model_config.clone(),
        train_config_digest: cp.train_config_digest.clone(),
    })
    .map_err(|e| Error::Corrupt(format!("cannot serialize checkpoint header: {e}")))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.write_u32::<LittleEndian>(cp.format_version)?;
    buf.write_u32::<LittleEndian>(header.len() as u32)?;
    buf.extend_from_slice(&header);
    for &v in cp.normalizer.mean.iter().chain(&cp.normalizer.std) {
        buf.write_f64::<LittleEndian>(v)?;
    }
    for t in cp.params.tensors() {
        for &v in t.data() {
            buf.write_f64::<LittleEndian>(v)?;
        }
    }
    Ok(buf)
}

fn truncated(e: std::io::Error) -> Error {
    Error::Corrupt(format!("truncated checkpoint: {e}"))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut cur = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic).map_err(truncated)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = cur.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let header_len = cur.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    if header_len > bytes.len() {
        return Err(Error::Corrupt(format!("header length {header_len} exceeds file size")));
    }
    let mut header = vec![0u8; header_len];
    cur.read_exact(&mut header).map_err(truncated)?;
    let header: Header = serde_json::from_slice(&header)
        .map_err(|e| Error::Corrupt(format!("bad checkpoint header: {e}")))?;
    let config = header.model_config;
    let mut params = ModelParams::zeros(&config)?;

    let n = config.n_locations;
    let expected = 8 * (2 * n + params.n_params());
    let remaining = bytes.len() - cur.position() as usize;
    if remaining != expected {
        return Err(Error::shape(
            "checkpoint body",
            format!("config implies {expected} bytes of values, file has {remaining}"),
        ));
    }
    let mut mean = vec![0.0; n];
    let mut std = vec![0.0; n];
    cur.read_f64_into::<LittleEndian>(&mut mean).map_err(truncated)?;
    cur.read_f64_into::<LittleEndian>(&mut std).map_err(truncated)?;
    for t in params.tensors_mut() {
        cur.read_f64_into::<LittleEndian>(t.data_mut()).map_err(truncated)?;
    }
    if std.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Corrupt("normalizer std must be positive".into()));
    }
    Checkpoint::new(config, params, Normalizer { mean, std }, header.train_config_digest)
}

pub fn save_checkpoint(cp: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(cp)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    fn sample() -> Checkpoint {
        let config = ModelConfig::new(3, 4).with_seed(11);
        let params = init_params(&config).unwrap();
        let normalizer = Normalizer {
            mean: vec![0.1, -2.5, 1.0 / 3.0],
            std: vec![1.0, 0.7, 1e-8],
        };
        Checkpoint::new(config, params, normalizer, "ab12".into()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let cp = sample();
        let back = decode_checkpoint(&encode_checkpoint(&cp).unwrap()).unwrap();
        assert_eq!(back, cp);
        let bits = |c: &Checkpoint| c.params.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&cp));
    }

    #[test]
    fn disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let cp = sample();
        save_checkpoint(&cp, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), cp);
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let mut bytes = encode_checkpoint(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn future_version_is_rejected() {
        let mut bytes = encode_checkpoint(&sample()).unwrap();
        bytes[4..8].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(Error::UnsupportedVersion { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn body_must_match_config() {
        let mut bytes = encode_checkpoint(&sample()).unwrap();
        bytes.truncate(bytes.len() - 8);
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn params_must_match_config() {
        let cp = sample();
        let other = ModelConfig::new(3, 5);
        assert!(Checkpoint::new(other, cp.params, cp.normalizer, String::new()).is_err());
    }
}
