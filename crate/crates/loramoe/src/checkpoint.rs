//! Versioned JSON container for a single layer.
//!
//! ```json
//! {
//!   "format": "loramoe-layer",
//!   "version": 1,
//!   "d_in": 3, "d_out": 2, "n_experts": 2, "rank": 1, "alpha": 2.0,
//!   "base":  { "rows": 2, "cols": 3, "data": [ ...row-major... ] },
//!   "experts": [ { "a": { ... }, "b": { ... } }, ... ],
//!   "gate":  { "rows": 2, "cols": 3, "data": [ ... ] }
//! }
//! ```
//!
//! The header dimensions are redundant with the matrices; loading rejects
//! any disagreement between the two.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{LayerError, Result};
use crate::layer::{LoRAMoELayer, LoraExpert};
use crate::matrix::DenseMatrix;

pub const FORMAT_NAME: &str = "loramoe-layer";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    d_in: usize,
    d_out: usize,
    n_experts: usize,
    rank: usize,
    alpha: f64,
    base: DenseMatrix,
    experts: Vec<LoraExpert>,
    gate: DenseMatrix,
}

pub fn to_json(layer: &LoRAMoELayer) -> String {
    let shape = layer.shape();
    let container = Container {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        d_in: shape.d_in,
        d_out: shape.d_out,
        n_experts: shape.n_experts,
        rank: shape.rank,
        alpha: shape.alpha,
        base: layer.base().clone(),
        experts: layer.experts().to_vec(),
        gate: layer.gate_weights().clone(),
    };
    serde_json::to_string_pretty(&container).expect("layer serializes")
}

pub fn from_json(text: &str) -> Result<LoRAMoELayer> {
    let c: Container = serde_json::from_str(text).map_err(|e| LayerError::Checkpoint(e.to_string()))?;
    if c.format != FORMAT_NAME {
        return Err(LayerError::Checkpoint(format!("unexpected format {:?}", c.format)));
    }
    if c.version != FORMAT_VERSION {
        return Err(LayerError::Checkpoint(format!("unsupported version {}", c.version)));
    }
    let layer = LoRAMoELayer::new(c.base, c.experts, c.gate, c.alpha, c.rank)?;
    let shape = layer.shape();
    if (shape.d_in, shape.d_out, shape.n_experts) != (c.d_in, c.d_out, c.n_experts) {
        return Err(LayerError::Checkpoint(format!(
            "header dims (d_in={}, d_out={}, n={}) disagree with matrices (d_in={}, d_out={}, n={})",
            c.d_in, c.d_out, c.n_experts, shape.d_in, shape.d_out, shape.n_experts
        )));
    }
    Ok(layer)
}

pub fn save<W: Write>(layer: &LoRAMoELayer, mut writer: W) -> std::io::Result<()> {
    writer.write_all(to_json(layer).as_bytes())
}

pub fn load<R: Read>(mut reader: R) -> Result<LoRAMoELayer> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| LayerError::Checkpoint(e.to_string()))?;
    from_json(&text)
}
