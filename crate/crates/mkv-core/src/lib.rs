//! Numerical core for distribution-dependent SDEs
//! `dX = b(t, X, [X_t]) dt + σ(t, X, [X_t]) dW`.
//!
//! The crate builds transition densities of the linearised (frozen) equation by a
//! parametrix series, evaluates Kato-type functionals of singular drifts, iterates the
//! measure-flow map `ψ` towards fixed points and cross-checks everything against an
//! interacting-particle simulator and a finite-volume Fokker–Planck solver.
//!
//! `no_std` compatible (with `alloc`) when the default `std` feature is disabled.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod error;
pub mod fokker_planck;
pub mod grid;
pub mod kato;
pub mod measures;
pub mod mkv;
pub mod num;
pub mod parametrix;
pub mod particles;
pub mod scenarios;

/// Crate version, echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, ErrorKind, Result};
pub use grid::Grid;
pub use measures::{Measure, MeasureFlow, WeightFunction, WeightKind};
