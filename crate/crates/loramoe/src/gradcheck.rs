//! Analytic gradients of a scalar loss over a layer's trainable parameters
//! (every `A_i`, `B_i` and the gate weights), checked against central finite
//! differences. The frozen base `W0` has no [`ParamRef`] and is never
//! perturbed.
//!
//! With `s = alpha / r`, `u_i = A_i·x`, `v_i = B_i·u_i`, `g = ∂L/∂o` and
//! `c_i = s · gᵀv_i`:
//!
//! ```text
//! ∂L/∂B_i  = s · w_i · g · u_iᵀ
//! ∂L/∂A_i  = s · w_i · (B_iᵀ g) · xᵀ
//! ∂L/∂Wg_k = w_k · (c_k − Σ_j w_j c_j) · xᵀ
//! ```

use serde::Serialize;

use crate::error::{shape_err, LayerError, Result};
use crate::layer::{softmax, LoRAMoELayer};
use crate::matrix::DenseMatrix;

/// Denominator floor for the relative error, so entries whose true
/// gradient is ~0 are scored by absolute error instead.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

pub const MIN_EPS: f64 = 1e-7;
pub const MAX_EPS: f64 = 1e-3;

/// A twice-differentiable scalar loss over the layer output.
pub trait Loss {
    fn value(&self, output: &[f64]) -> f64;
    fn gradient(&self, output: &[f64]) -> Vec<f64>;
}

/// `½ · Σ o_j²`
#[derive(Debug, Clone, Copy, Default)]
pub struct SumOfSquares;

impl Loss for SumOfSquares {
    fn value(&self, output: &[f64]) -> f64 {
        0.5 * output.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, output: &[f64]) -> Vec<f64> {
        output.to_vec()
    }
}

/// A trainable scalar in a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "param", rename_all = "snake_case")]
pub enum ParamRef {
    ExpertA { expert: usize, row: usize, col: usize },
    ExpertB { expert: usize, row: usize, col: usize },
    Gate { row: usize, col: usize },
}

impl ParamRef {
    fn slot<'a>(&self, layer: &'a mut LoRAMoELayer) -> &'a mut f64 {
        let (m, row, col): (&mut DenseMatrix, usize, usize) = match *self {
            ParamRef::ExpertA { expert, row, col } => (layer.experts_mut()[expert].a_mut(), row, col),
            ParamRef::ExpertB { expert, row, col } => (layer.experts_mut()[expert].b_mut(), row, col),
            ParamRef::Gate { row, col } => (layer.gate_mut(), row, col),
        };
        let cols = m.cols();
        &mut m.as_mut_slice()[row * cols + col]
    }
}

impl std::fmt::Display for ParamRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamRef::ExpertA { expert, row, col } => write!(f, "A[{expert}][{row},{col}]"),
            ParamRef::ExpertB { expert, row, col } => write!(f, "B[{expert}][{row},{col}]"),
            ParamRef::Gate { row, col } => write!(f, "Wg[{row},{col}]"),
        }
    }
}

/// Every trainable parameter of `layer`, experts first then gate.
pub fn trainable_params(layer: &LoRAMoELayer) -> Vec<ParamRef> {
    let mut params = Vec::new();
    for (expert, e) in layer.experts().iter().enumerate() {
        for row in 0..e.a().rows() {
            for col in 0..e.a().cols() {
                params.push(ParamRef::ExpertA { expert, row, col });
            }
        }
        for row in 0..e.b().rows() {
            for col in 0..e.b().cols() {
                params.push(ParamRef::ExpertB { expert, row, col });
            }
        }
    }
    let g = layer.gate_weights();
    for row in 0..g.rows() {
        for col in 0..g.cols() {
            params.push(ParamRef::Gate { row, col });
        }
    }
    params
}

/// Analytic gradient of `loss(layer.forward(x))` w.r.t. each trainable
/// parameter, in [`trainable_params`] order.
pub fn analytic_gradients(layer: &LoRAMoELayer, x: &[f64], loss: &dyn Loss) -> Result<Vec<(ParamRef, f64)>> {
    if x.len() != layer.d_in() {
        return Err(shape_err("layer input", layer.d_in(), x.len()));
    }
    let scale = layer.alpha() / layer.rank() as f64;
    let output = layer.forward(x)?;
    let g = loss.gradient(&output);
    let weights = softmax(&layer.gate_weights().matvec(x)?);

    let mut grads = Vec::new();
    let mut contributions = Vec::with_capacity(layer.experts().len());
    for (i, e) in layer.experts().iter().enumerate() {
        let u = e.a().matvec(x)?;
        let v = e.b().matvec(&u)?;
        let bt_g = e.b().matvec_transposed(&g)?;
        let w = weights[i];
        for (row, &bg) in bt_g.iter().enumerate() {
            for (col, &xc) in x.iter().enumerate() {
                grads.push((ParamRef::ExpertA { expert: i, row, col }, scale * w * bg * xc));
            }
        }
        for (row, &gr) in g.iter().enumerate() {
            for (col, &uc) in u.iter().enumerate() {
                grads.push((ParamRef::ExpertB { expert: i, row, col }, scale * w * gr * uc));
            }
        }
        contributions.push(scale * g.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>());
    }
    let mean: f64 = weights.iter().zip(&contributions).map(|(w, c)| w * c).sum();
    for (k, (&w, &c)) in weights.iter().zip(&contributions).enumerate() {
        let dlogit = w * (c - mean);
        for (col, &xc) in x.iter().enumerate() {
            grads.push((ParamRef::Gate { row: k, col }, dlogit * xc));
        }
    }
    Ok(grads)
}

/// Central difference `(L(θ+ε) − L(θ−ε)) / 2ε` for one parameter.
pub fn numeric_gradient(layer: &LoRAMoELayer, x: &[f64], loss: &dyn Loss, param: ParamRef, eps: f64) -> Result<f64> {
    let mut probe = layer.clone();
    let original = *param.slot(&mut probe);
    *param.slot(&mut probe) = original + eps;
    let plus = loss.value(&probe.forward(x)?);
    *param.slot(&mut probe) = original - eps;
    let minus = loss.value(&probe.forward(x)?);
    Ok((plus - minus) / (2.0 * eps))
}

#[derive(Debug, Clone, Serialize)]
pub struct GradEntry {
    #[serde(flatten)]
    pub param: ParamRef,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub eps: f64,
    pub entries: Vec<GradEntry>,
    pub max_relative_error: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&GradEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares analytic and central-difference gradients for every trainable
/// parameter of `layer` at input `x`.
pub fn grad_check(layer: &LoRAMoELayer, x: &[f64], loss: &dyn Loss, eps: f64) -> Result<GradCheckReport> {
    if !(MIN_EPS..=MAX_EPS).contains(&eps) {
        return Err(LayerError::Invalid(format!(
            "eps must lie in [{MIN_EPS:e}, {MAX_EPS:e}], got {eps:e}"
        )));
    }
    let analytic = analytic_gradients(layer, x, loss)?;
    let mut entries = Vec::with_capacity(analytic.len());
    let mut max_rel: f64 = 0.0;
    for (param, a) in analytic {
        let n = numeric_gradient(layer, x, loss, param, eps)?;
        if !a.is_finite() || !n.is_finite() {
            return Err(LayerError::NonFiniteGradient {
                param: param.to_string(),
                analytic: a,
                numeric: n,
            });
        }
        let rel = relative_error(a, n);
        max_rel = max_rel.max(rel);
        entries.push(GradEntry {
            param,
            analytic: a,
            numeric: n,
            relative_error: rel,
        });
    }
    Ok(GradCheckReport {
        eps,
        entries,
        max_relative_error: max_rel,
    })
}

/// Gradient of the loss w.r.t. the frozen base, used only to show that the
/// check would notice `W0` if it were trainable.
pub fn base_gradient(layer: &LoRAMoELayer, x: &[f64], loss: &dyn Loss) -> Result<DenseMatrix> {
    let g = loss.gradient(&layer.forward(x)?);
    let mut out = DenseMatrix::zeros(layer.d_out(), layer.d_in());
    for (row, &gr) in g.iter().enumerate() {
        for (col, &xc) in x.iter().enumerate() {
            out.set(row, col, gr * xc);
        }
    }
    Ok(out)
}

/// Central difference w.r.t. one base entry.
pub fn numeric_base_gradient(layer: &LoRAMoELayer, x: &[f64], loss: &dyn Loss, row: usize, col: usize, eps: f64) -> Result<f64> {
    let mut probe = layer.clone();
    let original = probe.base().get(row, col);
    probe.base_mut().set(row, col, original + eps);
    let plus = loss.value(&probe.forward(x)?);
    probe.base_mut().set(row, col, original - eps);
    let minus = loss.value(&probe.forward(x)?);
    Ok((plus - minus) / (2.0 * eps))
}
