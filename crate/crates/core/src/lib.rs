//! Periodic solution branches of delay-perturbed separated-variables
//! equations `ζ̇ = a(t)Φ(ζ) + λ Ξ(t, ζ(t), ζ(t−r))` on implicitly defined
//! manifolds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod continuation;
pub mod degree;
pub mod error;
pub mod expr;
pub mod fields;
pub mod integrate;
pub mod linalg;
pub mod manifold;
pub mod map;
pub mod poincare;
pub mod problems;
pub mod quadrature;
pub mod region;
pub mod verify;

pub use error::{Error, Result};
