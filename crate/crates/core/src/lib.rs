//! Simulation and numerical verification for the d-dimensional Curie-Weiss
//! model of self-organized criticality.
//!
//! The model draws `(x_1, …, x_n)` in `(ℝ^d)^n` with density
//! `exp(½⟨T_n⁻¹ S_n, S_n⟩)` with respect to `ρ^{⊗n}` on the set where
//! `T_n = Σ x_i ᵗx_i` is invertible, `S_n = Σ x_i`.

pub mod diagnostics;
pub mod error;
pub mod gof;
pub mod ising;
pub mod ldp;
pub mod limit;
pub mod linalg;
pub mod measure;
pub mod quadrature;
pub mod rng;
pub mod soc;

pub use error::{Error, Result};
pub use linalg::SymMat;
pub use measure::{FourthMomentTensor, MeasureSpec};
