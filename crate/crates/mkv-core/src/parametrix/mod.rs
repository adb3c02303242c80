//! Heat kernels of `L = a_ij ∂_ij + b_i ∂_i` by the truncated parametrix series
//! `p = Σ_n p₀ ⊗ Φ^{⊗n}`, `Φ = (L − L₀)p₀`, and numerical certificates for their bounds.

mod certify;
mod convolve;
mod engine;
mod field;
mod gaussian;
mod kernel;

pub use certify::*;
pub use convolve::*;
pub use engine::{propagate, Propagation, Row, Sampling, SeriesConfig, SeriesReport};
pub use field::{Admissibility, CoefficientField, FnModel, LinearModel, Regularity};
pub use kernel::{heat_kernel, propagate_measure, KernelGrid};
pub use gaussian::{frozen_gaussian, parametrix_term, FrozenGauss, MAX_DIM};
