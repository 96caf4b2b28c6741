//! LoRA mixture-of-experts layer.
//!
//! A frozen base linear map plus `N` low-rank experts mixed by a dense
//! softmax gate. The crate carries the factored forward pass, a dense
//! oracle that materializes every expert update, a residual two-layer FFN
//! block, analytic gradients checked against central finite differences,
//! and a JSON checkpoint format.

pub mod checkpoint;
mod error;
pub mod ffn;
pub mod gradcheck;
pub mod layer;
pub mod matrix;

pub use error::{LayerError, Result};
pub use ffn::{ffn_block_forward, Activation, FfnBlock};
pub use gradcheck::{grad_check, GradCheckReport, Loss, ParamRef, SumOfSquares};
pub use layer::{
    dense_equivalent, expert_delta, gate, loramoe_forward, GateWeights, LayerShape, LoRAMoELayer,
    LoraExpert,
};
pub use matrix::{max_relative_error, DenseMatrix};
