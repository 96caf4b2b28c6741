//! The LoRA mixture-of-experts linear layer.
//!
//! A frozen base map `W0` (d_out × d_in) is augmented by `N` low-rank
//! experts, each contributing `(alpha / r) · B_i · A_i · x`, mixed by a dense
//! softmax gate over `Wg · x`:
//!
//! ```text
//! o = W0·x + (alpha / r) · Σ_i w_i(x) · B_i·A_i·x,   w(x) = softmax(Wg·x)
//! ```
//!
//! The factored forward never materializes `B_i·A_i`; [`dense_equivalent`]
//! does, and serves as the oracle for it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, LayerError, Result};
use crate::matrix::DenseMatrix;

/// Softmax-normalized per-expert mixing coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct GateWeights(Vec<f64>);

impl GateWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Gate weights for input `x`: `softmax(Wg · x)`, max-shifted.
pub fn gate(x: &[f64], gate_weights: &DenseMatrix) -> Result<GateWeights> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LayerError::NonFinite("gate input"));
    }
    let logits = gate_weights.matvec(x)?;
    Ok(GateWeights(softmax(&logits)))
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// One low-rank expert: `A` is r × d_in, `B` is d_out × r.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraExpert {
    a: DenseMatrix,
    b: DenseMatrix,
}

impl LoraExpert {
    pub fn new(a: DenseMatrix, b: DenseMatrix) -> Result<Self> {
        if a.rows() != b.cols() {
            return Err(shape_err("lora expert rank", a.rows(), b.cols()));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub(crate) fn a_mut(&mut self) -> &mut DenseMatrix {
        &mut self.a
    }

    pub(crate) fn b_mut(&mut self) -> &mut DenseMatrix {
        &mut self.b
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    pub fn d_in(&self) -> usize {
        self.a.cols()
    }

    pub fn d_out(&self) -> usize {
        self.b.rows()
    }

    /// The dense update `B·A` (d_out × d_in).
    pub fn dense_update(&self) -> DenseMatrix {
        self.b
            .matmul(&self.a)
            .expect("expert factors share a rank by construction")
    }
}

/// `(alpha / r) · B · (A · x)`, computed factor-first.
pub fn expert_delta(expert: &LoraExpert, alpha: f64, rank: usize, x: &[f64]) -> Result<Vec<f64>> {
    if rank != expert.rank() {
        return Err(shape_err("expert rank", rank, expert.rank()));
    }
    let projected = expert.a.matvec(x)?;
    let scale = alpha / rank as f64;
    let mut out = expert.b.matvec(&projected)?;
    for v in &mut out {
        *v *= scale;
    }
    Ok(out)
}

/// Dimensions and scaling of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub d_in: usize,
    pub d_out: usize,
    pub n_experts: usize,
    pub rank: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoRAMoELayer {
    base: DenseMatrix,
    experts: Vec<LoraExpert>,
    gate: DenseMatrix,
    alpha: f64,
    rank: usize,
}

impl LoRAMoELayer {
    pub fn new(
        base: DenseMatrix,
        experts: Vec<LoraExpert>,
        gate: DenseMatrix,
        alpha: f64,
        rank: usize,
    ) -> Result<Self> {
        let layer = Self {
            base,
            experts,
            gate,
            alpha,
            rank,
        };
        layer.check_invariants()?;
        Ok(layer)
    }

    pub(crate) fn check_invariants(&self) -> Result<()> {
        self.base.validate("base weights")?;
        self.gate.validate("gate weights")?;
        if self.experts.is_empty() {
            return Err(LayerError::Invalid("a layer needs at least one expert".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(LayerError::Invalid(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if self.rank == 0 {
            return Err(LayerError::Invalid("rank must be positive".into()));
        }
        let (d_out, d_in) = self.base.shape();
        for e in &self.experts {
            e.a.validate("expert A")?;
            e.b.validate("expert B")?;
            let expected = (self.rank, d_in, d_out);
            let actual = (e.a.rows(), e.a.cols(), e.b.rows());
            if expected != actual || e.b.cols() != self.rank {
                return Err(shape_err(
                    "expert (rank, d_in, d_out)",
                    format!("{expected:?}"),
                    format!("{actual:?} with B cols {}", e.b.cols()),
                ));
            }
        }
        if self.gate.shape() != (self.experts.len(), d_in) {
            return Err(shape_err(
                "gate weights",
                format!("{}x{}", self.experts.len(), d_in),
                format!("{}x{}", self.gate.rows(), self.gate.cols()),
            ));
        }
        Ok(())
    }

    /// Random layer with entries uniform in `[-1, 1)`.
    pub fn random<R: Rng + ?Sized>(shape: LayerShape, rng: &mut R) -> Self {
        let base = DenseMatrix::random(shape.d_out, shape.d_in, 1.0, rng);
        let experts = (0..shape.n_experts)
            .map(|_| LoraExpert {
                a: DenseMatrix::random(shape.rank, shape.d_in, 1.0, rng),
                b: DenseMatrix::random(shape.d_out, shape.rank, 1.0, rng),
            })
            .collect();
        let gate = DenseMatrix::random(shape.n_experts, shape.d_in, 1.0, rng);
        Self::new(base, experts, gate, shape.alpha, shape.rank)
            .expect("random layer satisfies its own shape")
    }

    pub fn shape(&self) -> LayerShape {
        LayerShape {
            d_in: self.d_in(),
            d_out: self.d_out(),
            n_experts: self.experts.len(),
            rank: self.rank,
            alpha: self.alpha,
        }
    }

    pub fn d_in(&self) -> usize {
        self.base.cols()
    }

    pub fn d_out(&self) -> usize {
        self.base.rows()
    }

    pub fn base(&self) -> &DenseMatrix {
        &self.base
    }

    pub fn experts(&self) -> &[LoraExpert] {
        &self.experts
    }

    pub fn gate_weights(&self) -> &DenseMatrix {
        &self.gate
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub(crate) fn experts_mut(&mut self) -> &mut [LoraExpert] {
        &mut self.experts
    }

    pub(crate) fn gate_mut(&mut self) -> &mut DenseMatrix {
        &mut self.gate
    }

    pub(crate) fn base_mut(&mut self) -> &mut DenseMatrix {
        &mut self.base
    }

    /// Replaces every expert's `B` with zeros.
    pub fn with_zero_b(mut self) -> Self {
        for e in &mut self.experts {
            e.b = DenseMatrix::zeros(e.b.rows(), e.b.cols());
        }
        self
    }

    /// Same layer with a different frozen base.
    pub fn with_base(mut self, base: DenseMatrix) -> Result<Self> {
        self.base = base;
        self.check_invariants()?;
        Ok(self)
    }

    pub fn gate(&self, x: &[f64]) -> Result<GateWeights> {
        gate(x, &self.gate)
    }

    /// Factored forward pass. Experts whose `B` is identically zero add
    /// nothing and are skipped, so a layer with all-zero `B` returns exactly
    /// `W0 · x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in() {
            return Err(shape_err("layer input", self.d_in(), x.len()));
        }
        let mut out = self.base.matvec(x)?;
        if self.experts.iter().all(|e| e.b.is_zero()) {
            return Ok(out);
        }
        let weights = self.gate(x)?;
        for (expert, &w) in self.experts.iter().zip(weights.as_slice()) {
            if expert.b.is_zero() {
                continue;
            }
            let delta = expert_delta(expert, self.alpha, self.rank, x)?;
            for (o, d) in out.iter_mut().zip(delta) {
                *o += w * d;
            }
        }
        Ok(out)
    }
}

/// Free-function form of [`LoRAMoELayer::forward`].
pub fn loramoe_forward(layer: &LoRAMoELayer, x: &[f64]) -> Result<Vec<f64>> {
    layer.forward(x)
}

/// Oracle: materializes each `ΔW_i = (alpha / r) · B_i · A_i` and evaluates
/// `W0·x + Σ_i w_i(x) · ΔW_i·x` with explicit dense products.
pub fn dense_equivalent(layer: &LoRAMoELayer, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != layer.d_in() {
        return Err(shape_err("layer input", layer.d_in(), x.len()));
    }
    let weights = layer.gate(x)?;
    let scale = layer.alpha / layer.rank as f64;
    let mut update = DenseMatrix::zeros(layer.d_out(), layer.d_in());
    for (expert, &w) in layer.experts.iter().zip(weights.as_slice()) {
        let delta_w = expert.dense_update().scaled(scale);
        update = update.add(&delta_w.scaled(w))?;
    }
    layer.base.add(&update)?.matvec(x)
}
