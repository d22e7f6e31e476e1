use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AdamState, Gate, NetDims, PolicyParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "cutplan-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Saved training state: weights, optimizer moments, generator state and
/// the episode counter.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: PolicyParams,
    pub adam: Option<AdamState>,
    pub rng: Option<ChaCha8Rng>,
    /// Episodes completed when the snapshot was taken.
    pub episode: u32,
    /// Total reward of the episode that produced this snapshot, if any.
    pub total_reward: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    dims: NetDims,
    tensors: Vec<Tensor>,
    adam: Option<AdamState>,
    rng: Option<ChaCha8Rng>,
    episode: u32,
    total_reward: Option<f64>,
}

fn layout(dims: NetDims) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    for gate in Gate::ALL {
        let g = gate.name();
        out.push((format!("W_{g}"), dims.hidden, dims.input));
        out.push((format!("U_{g}"), dims.hidden, dims.hidden));
        out.push((format!("b_{g}"), dims.hidden, 1));
    }
    out.push(("W_out".into(), dims.output, dims.hidden));
    out.push(("b_out".into(), dims.output, 1));
    out
}

impl Checkpoint {
    pub fn new(params: PolicyParams) -> Self {
        Checkpoint {
            params,
            adam: None,
            rng: None,
            episode: 0,
            total_reward: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let dims = self.params.dims();
        let mut offset = 0;
        let tensors = layout(dims)
            .into_iter()
            .map(|(name, rows, cols)| {
                let data = self.params.as_slice()[offset..offset + rows * cols].to_vec();
                offset += rows * cols;
                Tensor {
                    name,
                    rows,
                    cols,
                    data,
                }
            })
            .collect();
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dims,
            tensors,
            adam: self.adam.clone(),
            rng: self.rng.clone(),
            episode: self.episode,
            total_reward: self.total_reward,
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", file.format)));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                file.version
            )));
        }
        let expected = layout(file.dims);
        if expected.len() != file.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                file.tensors.len()
            )));
        }
        let mut data = Vec::with_capacity(file.dims.param_count());
        for ((name, rows, cols), t) in expected.into_iter().zip(file.tensors) {
            if t.name != name || t.rows != rows || t.cols != cols || t.data.len() != rows * cols {
                return Err(Error::Checkpoint(format!(
                    "tensor {} is {}x{} with {} values, expected {name} {rows}x{cols}",
                    t.name,
                    t.rows,
                    t.cols,
                    t.data.len()
                )));
            }
            data.extend(t.data);
        }
        let params = PolicyParams::from_vec(file.dims, data)?;
        if let Some(adam) = &file.adam {
            if adam.m.len() != params.len() || adam.v.len() != params.len() {
                return Err(Error::Checkpoint("optimizer state does not match weights".into()));
            }
        }
        Ok(Checkpoint {
            params,
            adam: file.adam,
            rng: file.rng,
            episode: file.episode,
            total_reward: file.total_reward,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Checkpoint::from_json(&text)
    }

    /// Loads and insists on the given layer widths.
    pub fn load_expecting(path: impl AsRef<Path>, dims: NetDims) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        if ck.params.dims() != dims {
            return Err(Error::Checkpoint(format!(
                "checkpoint dims {:?} do not match expected {dims:?}",
                ck.params.dims()
            )));
        }
        Ok(ck)
    }
}
