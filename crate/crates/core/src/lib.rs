//! Two-species annihilating–branching reflected random walks on lattice
//! approximations of bounded domains, with the discrete Neumann spectral
//! tools and diagnostics used to compare empirical densities against the
//! normalized heat flow.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the common double-precision choice.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. The numeric kernels
// index several arrays in step, which reads better as index loops.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod domain;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod lattice;
pub mod operator;
pub mod scalar;
pub mod spectral;

pub use domain::{BoundaryProjection, DomainSpec, Shape};
pub use error::{Error, Result};
pub use lattice::{build_lattice, ConstraintReport, Lattice, TimeScale};
pub use operator::{adjoint_laplacian, discrete_laplacian, LinearOperator, OperatorKind};
pub use scalar::Scalar;

pub type DomainSpec64 = DomainSpec<f64>;
pub type DomainSpec32 = DomainSpec<f32>;
pub type Lattice64 = Lattice<f64>;
pub type Lattice32 = Lattice<f32>;
pub type LinearOperator64 = LinearOperator<f64>;
pub type LinearOperator32 = LinearOperator<f32>;
pub type SpectralBasis64 = spectral::SpectralBasis<f64>;
pub type SpectralBasis32 = spectral::SpectralBasis<f32>;
pub type HeatEvolver64 = spectral::HeatEvolver<f64>;
pub type HeatEvolver32 = spectral::HeatEvolver<f32>;
