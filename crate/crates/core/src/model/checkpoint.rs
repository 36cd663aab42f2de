use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use crate::data::FeatureKind;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "inforank-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// FNV-1a over the canonical JSON of the slot layout, as hex.
pub fn schema_hash(slots: &[FeatureKind]) -> String {
    let json = serde_json::to_string(slots).expect("slot layout serializes");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in json.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: u32,
    pub schema_hash: String,
    pub params: ModelParams<T>,
}

pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>, path: &Path) -> Result<()> {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        schema_hash: schema_hash(&params.config.slots),
        params: params.clone(),
    };
    let text = serde_json::to_string(&ck)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint and checks it against the slot layout it will be
/// applied to.
pub fn load_checkpoint<T: Scalar>(path: &Path, expected: &[FeatureKind]) -> Result<ModelParams<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint<T> = serde_json::from_str(&text)?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(Error::Schema(format!(
            "{}: not a version {CHECKPOINT_VERSION} checkpoint",
            path.display()
        )));
    }
    if ck.schema_hash != schema_hash(&ck.params.config.slots) {
        return Err(Error::Schema(
            "checkpoint hash does not match its own slot layout".into(),
        ));
    }
    let want = schema_hash(expected);
    if ck.schema_hash != want {
        return Err(Error::Schema(format!(
            "checkpoint schema {} does not match data schema {want}",
            ck.schema_hash
        )));
    }
    if let Some(name) = ck.params.first_non_finite() {
        return Err(Error::NonFinite(format!("checkpoint tensor {name}")));
    }
    Ok(ck.params)
}
