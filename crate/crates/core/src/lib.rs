//! Direct and inverse spectral problems for self-adjoint matrix Dirac systems
//! with rational Weyl functions.
//!
//! The inverse direction goes realization → stabilizing Riccati solution →
//! generating quadruple → potential. The direct direction goes quadruple →
//! Weyl function realization, with numerical certificates for both.

// `!(x < limit)` is used on purpose: NaN must fail every acceptance test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod direct;
pub mod fixtures;
pub mod io;
pub mod numerics;
pub mod potential;
pub mod quadruple;
pub mod realization;
pub mod riccati;
pub mod stability_lab;

pub use numerics::{ComplexMatrix, ToleranceConfig, C64};

/// Any failure of the library, by originating module.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
    #[error(transparent)]
    Realization(#[from] realization::RealizationError),
    #[error(transparent)]
    Riccati(#[from] riccati::RiccatiError),
    #[error(transparent)]
    Quadruple(#[from] quadruple::QuadrupleError),
    #[error(transparent)]
    Potential(#[from] potential::PotentialError),
    #[error(transparent)]
    Direct(#[from] direct::DirectError),
    #[error(transparent)]
    Stability(#[from] stability_lab::StabilityError),
    #[error(transparent)]
    Schema(#[from] io::SchemaError),
}
