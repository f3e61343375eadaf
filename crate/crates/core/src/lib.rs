//! Bistatic backscatter simulator: channel synthesis, nullspace projection at
//! the carrier emitter, GLRT detection at the reader, and a seeded Monte
//! Carlo harness.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod emitter;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod reader;
pub mod scene;
pub mod waveform;

pub use emitter::{build_projector, ls_estimate_direct, Projector};
pub use error::{Error, Result};
pub use harness::{load_config, run_scenario, Preset, RunArtifact, ScenarioConfig};
pub use metrics::{DynamicRangeReport, ProjectionMode, RocCurve, RocPoint};
pub use numerics::{
    best_rank_one, frob2, solve_identity_plus_projector, svd_thin, ComplexMatrix, RankOne, ThinSvd,
};
pub use reader::{DetectorMode, DirectLink, GlrtResult, H1Estimate, ReaderSideInfo};
pub use scene::{
    mean_path_gains, normalize_backscatter, steering_vector, synthesize_channels, ChannelSet, Scene,
};
pub use waveform::{Hypothesis, Observation, PhasePlan, Waveforms};

pub use num_complex::Complex64;
