//! Residual feed-forward block built from two LoRA-MoE layers.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::layer::LoRAMoELayer;

/// Elementwise nonlinearity between the two projections. All variants map
/// 0 to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    /// tanh approximation of GELU
    Gelu,
    Silu,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Gelu => {
                let c = (2.0 / std::f64::consts::PI).sqrt();
                0.5 * v * (1.0 + (c * (v + 0.044715 * v * v * v)).tanh())
            }
            Activation::Silu => v / (1.0 + (-v).exp()),
        }
    }
}

/// `f(x) = x + down(act(up(x)))` with `up`: d → h and `down`: h → d.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnBlock {
    up: LoRAMoELayer,
    down: LoRAMoELayer,
    activation: Activation,
}

impl FfnBlock {
    pub fn new(up: LoRAMoELayer, down: LoRAMoELayer, activation: Activation) -> Result<Self> {
        if up.d_in() != down.d_out() {
            return Err(shape_err("ffn residual width", up.d_in(), down.d_out()));
        }
        if up.d_out() != down.d_in() {
            return Err(shape_err("ffn hidden width", up.d_out(), down.d_in()));
        }
        Ok(Self {
            up,
            down,
            activation,
        })
    }

    pub fn up(&self) -> &LoRAMoELayer {
        &self.up
    }

    pub fn down(&self) -> &LoRAMoELayer {
        &self.down
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let hidden: Vec<f64> = self
            .up
            .forward(x)?
            .into_iter()
            .map(|v| self.activation.apply(v))
            .collect();
        let inner = self.down.forward(&hidden)?;
        Ok(x.iter().zip(inner).map(|(a, b)| a + b).collect())
    }
}

pub fn ffn_block_forward(block: &FfnBlock, x: &[f64]) -> Result<Vec<f64>> {
    block.forward(x)
}
