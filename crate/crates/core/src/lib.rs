//! Extrinsic geometry of parametrized submanifolds of Euclidean and
//! hyperbolic space forms.
//!
//! The crate is organised bottom-up:
//!
//! * [`jets`]: second-order forward-mode AD used for every derivative.
//! * [`expr`]: a small chart language so immersions can be supplied as text.
//! * [`spaceform`]: ambient distance, comparison functions and model volumes.
//! * [`immersion`]: induced metric, second fundamental form, radial split and
//!   sectional curvatures at a point.
//! * [`mesh`]: sampled parameter grids, intrinsic distances, extrinsic balls
//!   and ends.
//! * [`invariants`]: tameness invariants and the pinching machinery.
//! * [`volumetrics`]: extrinsic ball and sphere volumes and verdicts.
//! * [`catalog`]: built-in immersions with closed-form ground truth.
//! * [`battery`]: the self-check suite run by `tamed verify`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod battery;
pub mod catalog;
pub mod chart;
pub mod curve;
pub mod error;
pub mod exec;
pub mod expr;
pub mod immersion;
pub mod invariants;
pub mod jets;
pub mod mesh;
pub mod quadrature;
pub mod spaceform;
pub mod volumetrics;

pub use chart::{AxisDomain, Chart, SpaceKind};
pub use error::{Error, Result};
pub use exec::Exec;
pub use jets::{Jet2, Scalar};
pub use spaceform::Ambient;
