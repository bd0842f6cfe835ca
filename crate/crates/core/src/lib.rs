//! Quantum-inspired compound adapters for parameter-efficient fine-tuning.
//!
//! * [`compound`]: minors and k-th order compound matrices with exact gradients.
//! * [`ortho`]: Cayley-transform orthogonal base matrices.
//! * [`adapter`]: block-diagonal multiplicative adapters, stacking and counting.
//! * [`lora`]: additive low-rank baseline.
//! * [`trainer`]: toy frozen models, backpropagation and gradient descent.
//! * [`quantum`]: Hamming-weight sector simulation of RBS/FBS circuits.

pub mod adapter;
pub mod combinatorics;
pub mod compound;
pub mod error;
pub mod export;
pub mod gradcheck;
pub mod lora;
pub mod ortho;
pub mod quantum;
pub mod trainer;

#[cfg(test)]
pub(crate) mod test_util;

pub use adapter::{
    apply_adapter, build_adapter, build_block, fit_base_dim, param_count, stack_adapters, Adapter,
    AdapterConfig, AdapterParams, BlockSpec, FrozenLayer,
};
pub use combinatorics::{binom, enumerate_subsets, SubsetBasis};
pub use compound::{compound, compound_vjp, compound_vjp_op, minor, CompoundMatrix, MinorOp};
pub use error::{Error, Result};
pub use lora::{lora_delta, LoraParams};
pub use ortho::{cayley, cayley_vjp, is_orthogonal, skew, BaseParams, Orthogonality};
