use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frap::{FrapConfig, ParamStore, Tensor, PARAM_NAMES};

pub const CHECKPOINT_FORMAT: &str = "movelight-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Text dump of every parameter tensor; JSON floats round-trip exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub network: FrapConfig,
    pub train_step: u64,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(params: &ParamStore, network: &FrapConfig, train_step: u64) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            network: network.clone(),
            train_step,
            tensors: params
                .named()
                .map(|(name, t)| NamedTensor { name: name.into(), shape: t.shape.clone(), data: t.data.clone() })
                .collect(),
        }
    }

    pub fn into_params(self) -> Result<(ParamStore, FrapConfig, u64)> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        self.network.check()?;
        let mut params = ParamStore::zeros(&self.network);
        if self.tensors.len() != PARAM_NAMES.len() {
            return Err(Error::Checkpoint(format!("expected {} tensors, found {}", PARAM_NAMES.len(), self.tensors.len())));
        }
        for ((slot, name), nt) in params.tensors_mut().into_iter().zip(PARAM_NAMES).zip(self.tensors) {
            if nt.name != name {
                return Err(Error::Checkpoint(format!("expected tensor {name}, found {}", nt.name)));
            }
            let t = Tensor::from_vec(&nt.shape, nt.data)
                .ok_or_else(|| Error::Checkpoint(format!("{name}: data does not fill shape {:?}", nt.shape)))?;
            if t.shape != slot.shape {
                return Err(Error::Checkpoint(format!("{name}: shape {:?}, expected {:?}", t.shape, slot.shape)));
            }
            *slot = t;
        }
        if !params.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok((params, self.network, self.train_step))
    }
}

pub fn save_checkpoint(path: &Path, params: &ParamStore, network: &FrapConfig, train_step: u64) -> Result<()> {
    if !params.is_finite() {
        return Err(Error::Checkpoint("refusing to save non-finite parameters".into()));
    }
    let text = serde_json::to_string(&Checkpoint::new(params, network, train_step))
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, FrapConfig, u64)> {
    let text = std::fs::read_to_string(path)?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    ck.into_params()
}
