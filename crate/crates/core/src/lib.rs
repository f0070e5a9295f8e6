//! Numerical laboratory for finite-time blow-up of critical semilinear wave
//! equations `u_tt - Delta_g u = |u|^p` with exponentially decaying,
//! radially isotropic metric perturbations.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the double-precision instantiation used by the CLI.

pub mod eigenfunction;
pub mod error;
pub mod functional;
pub mod grid;
pub mod iteration;
pub mod metric;
pub mod quadrature;
pub mod scalar;
pub mod special;
pub mod testfn;
pub mod tridiag;
pub mod wavesolver;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Exact rational arithmetic for the slicing sequences.
pub type Rational = num_rational::BigRational;

pub type MetricField64 = metric::MetricField<f64>;
pub type RadialGrid64 = grid::RadialGrid<f64>;
pub type EigenfunctionTable64 = eigenfunction::EigenfunctionTable<f64>;
pub type TestFunctionEvaluator64 = testfn::TestFunctionEvaluator<f64>;
pub type IterationSchedule64 = iteration::IterationSchedule<f64>;
pub type RunRecord64 = wavesolver::RunRecord<f64>;
pub type FunctionalTrace64 = functional::FunctionalTrace<f64>;
