//! Hamming-weight preserving circuits simulated on fixed-weight sectors.
//!
//! States live on a union of weight-`k` sectors of `n` qubits; each sector's
//! basis is ordered like the lexicographic [`SubsetBasis`](crate::SubsetBasis)
//! of the positions of ones. Qubit 0 is the leftmost character of a bitstring.

mod circuit;
mod layout;
mod loader;
mod state;

pub use circuit::{
    apply_fbs, apply_rbs, givens, layer_unary_matrix, sector_action, simulate, verify_compound_equivalence,
    GateKind,
};
pub use layout::{butterfly_layout, pyramid_layout, CircuitLayout, Gate, LayoutKind};
pub use loader::{hw_k_load, load_sectors, loader_cost, run_unary_loader, unary_load, unary_loader_circuit};
pub use state::{hw_basis, HWState, Sector};
