//! Binary checkpoint file.
//!
//! Layout, all integers little-endian:
//!
//! | field            | encoding                                       |
//! |------------------|------------------------------------------------|
//! | magic            | `SMCK`                                         |
//! | format version   | u32, currently 1                               |
//! | manifest         | u64 length + UTF-8 TOML (version, seed, step, policy, model config) |
//! | tensor count     | u32                                            |
//! | each tensor      | u32 name length, name, u32 rank, u64 dims, f64 data row-major |
//! | checksum         | SHA-256 of every preceding byte                |

use super::TrainError;
use crate::encoder::{ModelConfig, Parameters};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"SMCK";
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Parameters,
    pub seed: u64,
    pub step: u64,
    /// Whether HEADER tokens were global during training (and analysis).
    pub global_attention: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    seed: u64,
    step: u64,
    global_attention: bool,
    model: ModelConfig,
}

impl Checkpoint {
    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = Manifest {
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            step: self.step,
            global_attention: self.global_attention,
            model: self.params.config.clone(),
        };
        let manifest = toml::to_string(&manifest).expect("manifest serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        out.extend_from_slice(&(self.params.tensor_count() as u32).to_le_bytes());
        self.params.for_each(|name, shape, data| {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &dim in shape {
                out.extend_from_slice(&(dim as u64).to_le_bytes());
            }
            for &x in data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        });
        let digest = Sha256::digest(&out);
        out.extend_from_slice(digest.as_slice());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        let corrupt = |why: &str| TrainError::CorruptFile(why.to_string());
        if bytes.len() < 8 + CHECKSUM_LEN || &bytes[..4] != MAGIC {
            return Err(corrupt("missing checkpoint header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(TrainError::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
        }
        let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != checksum {
            return Err(corrupt("checksum mismatch"));
        }
        let mut reader = Reader { bytes: body, pos: 8 };
        let manifest_len = reader.u64()? as usize;
        let manifest = std::str::from_utf8(reader.take(manifest_len)?).map_err(|_| corrupt("manifest is not UTF-8"))?;
        let manifest: Manifest = toml::from_str(manifest).map_err(|e| corrupt(&format!("manifest: {e}")))?;
        if manifest.version != CHECKPOINT_VERSION {
            return Err(TrainError::VersionMismatch { found: manifest.version, expected: CHECKPOINT_VERSION });
        }
        let mut params = Parameters::init(&manifest.model, 0).map_err(|e| corrupt(&e.to_string()))?;
        let mut expected = Vec::new();
        params.for_each(|name, shape, _| expected.push((name.to_string(), shape.to_vec())));
        let count = reader.u32()? as usize;
        if count != expected.len() {
            return Err(corrupt("tensor count does not match the model config"));
        }
        for ((name, shape), dst) in expected.iter().zip(params.slices_mut()) {
            let name_len = reader.u32()? as usize;
            if reader.take(name_len)? != name.as_bytes() {
                return Err(corrupt(&format!("expected tensor {name}")));
            }
            let rank = reader.u32()? as usize;
            let dims = (0..rank).map(|_| reader.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            if &dims != shape {
                return Err(corrupt(&format!("tensor {name} has shape {dims:?}, expected {shape:?}")));
            }
            for x in dst.iter_mut() {
                *x = f64::from_le_bytes(reader.take(8)?.try_into().expect("8 bytes"));
            }
        }
        if reader.pos != body.len() {
            return Err(corrupt("trailing bytes after tensors"));
        }
        Ok(Self {
            params,
            seed: manifest.seed,
            step: manifest.step,
            global_attention: manifest.global_attention,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| TrainError::CorruptFile("unexpected end of data".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<(), TrainError> {
    crate::store::write_atomic(path, &checkpoint.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let bytes = std::fs::read(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
    Checkpoint::from_bytes(&bytes)
}
