//! Numerical analysis of planar vector fields defined outside a disk:
//! spectral conditions, trajectories and escape, leaf foliations, curve
//! tangencies, the index at infinity and the attractor/repellor dichotomy.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod flow;
pub mod foliation;
pub mod geom;
pub mod index;
pub mod infinity;
pub mod parallel;
pub mod quadrature;
pub mod runner;
pub mod tangency;
pub mod verify;

pub use error::{Error, Result};
pub use field::{Component, FieldRegistry, FieldSpec, VectorField};
pub use geom::{Mat2, Rect, Vec2};
