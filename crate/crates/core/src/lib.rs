//! Dominating path-gain-information (PGI) feedback for FDD cell-free downlink.
//!
//! The crate covers the full link: multi-path channel generation, AoD
//! acquisition by MUSIC, alternating dominating-path selection with SLNR
//! precoding, precoded downlink pilots with LMMSE gain estimation, RVQ
//! feedback, closed-form rate/distortion theory, and a seeded Monte Carlo
//! harness that runs paired comparisons against baselines.
//!
//! Indices are 0-based throughout: BS `m`, user `k`, path `i`.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aod;
pub mod bounds;
pub mod config;
pub mod error;
pub mod feedback;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod pilot;
pub mod rate;
pub mod rng;
pub mod selection;

pub use nalgebra::Complex;

/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<Complex<f64>>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<Complex<f64>>;

pub use config::{Baseline, SystemConfig};
pub use error::{Error, Result};
pub use model::{BsUserGrid, ChannelRealization, Geometry};
pub use selection::SelectionState;
