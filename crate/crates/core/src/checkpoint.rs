//! Self-describing network checkpoints: version tag, config hash, and one
//! flat `f64` vector per named tensor. Loading rejects shape mismatches; the
//! config hash is provenance only (instability studies intentionally load
//! checkpoints into differently-configured runs).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mlp;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorBlob {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub tensors: Vec<TensorBlob>,
}

impl Checkpoint {
    pub fn from_net(net: &Mlp, config_hash: &str) -> Self {
        let mut tensors = Vec::new();
        net.visit(&mut |name, shape, data| {
            tensors.push(TensorBlob {
                name: name.to_string(),
                shape: shape.to_vec(),
                data: data.to_vec(),
            });
        });
        Checkpoint { version: CHECKPOINT_VERSION, config_hash: config_hash.to_string(), tensors }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let json = serde_json::to_string(self)
            .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("parse {}: {e}", path.display())))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    /// Writes the stored tensors into `net`. Every tensor must exist with an
    /// identical shape, in both directions.
    pub fn load_into(&self, net: &mut Mlp) -> Result<()> {
        let mut by_name: HashMap<&str, &TensorBlob> =
            self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        let mut err: Option<Error> = None;
        net.visit_mut(&mut |name, shape, data| {
            if err.is_some() {
                return;
            }
            match by_name.remove(name) {
                None => err = Some(Error::Checkpoint(format!("missing tensor '{name}'"))),
                Some(blob) => {
                    if blob.shape != shape || blob.data.len() != data.len() {
                        err = Some(Error::Checkpoint(format!(
                            "shape mismatch for '{name}': checkpoint {:?}, network {:?}",
                            blob.shape, shape
                        )));
                    } else {
                        data.copy_from_slice(&blob.data);
                    }
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor '{extra}' in checkpoint")));
        }
        Ok(())
    }
}

/// Convenience wrapper: save a network directly to `path`.
pub fn save_net(net: &Mlp, config_hash: &str, path: &Path) -> Result<()> {
    Checkpoint::from_net(net, config_hash).save(path)
}

/// Convenience wrapper: load tensors from `path` into `net`.
pub fn load_net(net: &mut Mlp, path: &Path) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(path)?;
    ckpt.load_into(net)?;
    Ok(ckpt)
}
