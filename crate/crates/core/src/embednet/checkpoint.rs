//! `checkpoint.json`: head parameters plus provenance.
//!
//! Numbers are written with shortest round-trip formatting, so loading a saved
//! checkpoint reproduces every parameter bit for bit.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::head::{HeadDims, HeadParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "xmodal-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Which training stage produced a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageTag {
    /// Freshly initialized, untrained.
    Init,
    Stage1,
    Stage2,
}

/// A named sub-seed and its value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedEntry {
    pub stage: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: StageTag,
    /// Root seed first, then each derived sub-seed in the order it was used.
    pub seed_lineage: Vec<SeedEntry>,
    /// Training configuration that produced the parameters, if any.
    pub config: Option<serde_json::Value>,
    pub params: HeadParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    wc: Vec<f64>,
    bc: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCheckpoint {
    format: String,
    version: u32,
    stage: StageTag,
    dims: HeadDims,
    seed_lineage: Vec<SeedEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
    params: RawParams,
}

fn matrix(name: &str, rows: usize, cols: usize, data: Vec<f64>) -> Result<Array2<f64>> {
    if data.len() != rows * cols {
        return Err(Error::data(format!(
            "checkpoint {name}: {} values for a {rows}x{cols} matrix",
            data.len()
        )));
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::data(e.to_string()))
}

fn vector(name: &str, len: usize, data: Vec<f64>) -> Result<Array1<f64>> {
    if data.len() != len {
        return Err(Error::data(format!(
            "checkpoint {name}: {} values, expected {len}",
            data.len()
        )));
    }
    Ok(Array1::from(data))
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let p = &self.params;
        let raw = RawCheckpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            stage: self.stage,
            dims: p.dims(),
            seed_lineage: self.seed_lineage.clone(),
            config: self.config.clone(),
            params: RawParams {
                w1: p.w1.iter().copied().collect(),
                b1: p.b1.to_vec(),
                w2: p.w2.iter().copied().collect(),
                b2: p.b2.to_vec(),
                wc: p.wc.iter().copied().collect(),
                bc: p.bc.to_vec(),
            },
        };
        Ok(serde_json::to_string(&raw)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawCheckpoint = serde_json::from_str(text)?;
        if raw.format != CHECKPOINT_FORMAT {
            return Err(Error::data(format!("not a checkpoint (format {:?})", raw.format)));
        }
        if raw.version != CHECKPOINT_VERSION {
            return Err(Error::data(format!("unsupported checkpoint version {}", raw.version)));
        }
        let d = raw.dims;
        d.validate()?;
        let r = raw.params;
        let params = HeadParams {
            w1: matrix("w1", d.hidden, d.input, r.w1)?,
            b1: vector("b1", d.hidden, r.b1)?,
            w2: matrix("w2", d.embedding, d.hidden, r.w2)?,
            b2: vector("b2", d.embedding, r.b2)?,
            wc: matrix("wc", d.classes, d.embedding, r.wc)?,
            bc: vector("bc", d.classes, r.bc)?,
        };
        params.validate()?;
        Ok(Checkpoint {
            stage: raw.stage,
            seed_lineage: raw.seed_lineage,
            config: raw.config,
            params,
        })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let text = ckpt.to_json()?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)
}

/// Load and require the stored head to have exactly `expected` dimensions.
pub fn load_checkpoint_checked(path: &Path, expected: HeadDims) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    let got = ckpt.params.dims();
    if got != expected {
        return Err(Error::invalid(format!(
            "checkpoint dims {got:?} do not match configured dims {expected:?}"
        )));
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embednet::head::init_head;

    fn sample(stage: StageTag) -> Checkpoint {
        let dims = HeadDims { input: 5, hidden: 4, embedding: 3, classes: 2 };
        let mut params = init_head(dims, 99).unwrap();
        params.b1[0] = 1.0 / 3.0;
        params.bc[1] = -2.5e-310;
        Checkpoint {
            stage,
            seed_lineage: vec![
                SeedEntry { stage: "root".into(), seed: 42 },
                SeedEntry { stage: "init".into(), seed: u64::MAX },
            ],
            config: Some(serde_json::json!({"lr": 0.01})),
            params,
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        for stage in [StageTag::Init, StageTag::Stage1, StageTag::Stage2] {
            let c = sample(stage);
            let back = Checkpoint::from_json(&c.to_json().unwrap()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.stage, stage);
            let bits = |p: &HeadParams| -> Vec<u64> {
                let mut p = p.clone();
                let mut out = Vec::new();
                p.for_each_slice_mut(|_, s| out.extend(s.iter().map(|v| v.to_bits())));
                out
            };
            assert_eq!(bits(&back.params), bits(&c.params));
        }
    }

    #[test]
    fn stage_tag_spelling() {
        let text = sample(StageTag::Stage2).to_json().unwrap();
        assert!(text.contains("\"stage\":\"stage2\""));
    }

    #[test]
    fn checked_load_rejects_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let c = sample(StageTag::Stage1);
        save_checkpoint(&path, &c).unwrap();
        assert!(load_checkpoint_checked(&path, c.params.dims()).is_ok());
        let wrong = HeadDims { input: 6, ..c.params.dims() };
        let err = load_checkpoint_checked(&path, wrong).unwrap_err();
        assert!(err.to_string().contains("do not match"), "{err}");
    }

    #[test]
    fn corrupt_shapes_rejected() {
        let text = sample(StageTag::Stage1).to_json().unwrap();
        let bad = text.replace("\"hidden\":4", "\"hidden\":3");
        assert!(Checkpoint::from_json(&bad).is_err());
    }
}
