//! Streaming line-by-line anomaly detection for push-broom hyperspectral
//! imagery.
//!
//! Lines are pushed one at a time through a [`Detector`]; every detector
//! emits exactly one [`ScoredLine`] per input line.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod cube;
pub mod datagen;
pub mod detectors;
pub mod error;
pub mod erx;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod projection;

pub use cube::{
    DataCube, Direction, GroundTruthMask, LineStream, ScoredLine, SpectralLine, StreamConfig,
    DEFAULT_BUFFER_LEN,
};
pub use detectors::{run_detector, Detector, DetectorKind, DetectorSpec, RunOutput, ScoreKind};
pub use error::{Error, Result};
pub use erx::{Erx, ErxConfig, ErxState};
pub use metrics::{auc_td_bs, roc_auc, roc_curve, RocCurve};
pub use datagen::{gen_random_cube, gen_synthetic, SyntheticSpec};
pub use projection::{generate_srp, Projection, SrpMatrix};
