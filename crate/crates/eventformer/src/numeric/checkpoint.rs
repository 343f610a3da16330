//! Parameter checkpoints: versioned JSON map of name -> shape + row-major values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::param::ParamStore;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamCheckpoint {
    pub version: u32,
    pub params: Vec<ParamRecord>,
}

pub fn snapshot(store: &ParamStore) -> ParamCheckpoint {
    ParamCheckpoint {
        version: CHECKPOINT_VERSION,
        params: store
            .iter()
            .map(|(_, e)| ParamRecord {
                name: e.name.clone(),
                shape: [e.rows, e.cols],
                data: e.data.clone(),
            })
            .collect(),
    }
}

/// Load values into a store with matching registration. Every name must exist
/// with the exact shape; extra or missing names are errors.
pub fn restore(store: &mut ParamStore, ck: &ParamCheckpoint) -> Result<()> {
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            ck.version
        )));
    }
    if ck.params.len() != store.len() {
        return Err(Error::Data(format!(
            "checkpoint has {} parameters, model expects {}",
            ck.params.len(),
            store.len()
        )));
    }
    for rec in &ck.params {
        let id = store
            .id(&rec.name)
            .ok_or_else(|| Error::Data(format!("checkpoint parameter not in model: {}", rec.name)))?;
        let e = store.entry_mut(id);
        if [e.rows, e.cols] != rec.shape {
            return Err(Error::Data(format!(
                "shape mismatch for {}: checkpoint {:?}, model [{}, {}]",
                rec.name, rec.shape, e.rows, e.cols
            )));
        }
        if rec.data.len() != rec.shape[0] * rec.shape[1] {
            return Err(Error::Data(format!(
                "data length {} does not match shape {:?} for {}",
                rec.data.len(),
                rec.shape,
                rec.name
            )));
        }
        e.data = rec.data.clone();
    }
    Ok(())
}
