//! Bounds for white-noise mixing thresholds of multipartite quantum states.
//!
//! The crate combines a factorization-based heuristic (LADMM), a cutting-plane
//! method over product-state rays with a branch-and-bound linear minimization
//! oracle, and SDP outer approximations of the separable cone.

pub mod conic;
pub mod cutting_plane;
pub mod error;
pub mod lbfgs;
pub mod lift;
pub mod pipeline;
pub mod ray;
pub mod refine;
pub mod relax;
pub mod sbb;
pub mod states;
pub mod tensor;

pub use error::{Error, Result};
pub use lift::{FactorPoint, LadmmConfig, LadmmState};
pub use pipeline::{run, Algorithm, RunConfig, RunRecord, RunStatus};
pub use ray::ExtremeRay;
pub use sbb::{sbb_solve, BssProblem, LmoResult, LmoStatus, SbbConfig};
pub use states::{
    cluster_state, dicke_state, ghz_state, ghz_threshold_exact, noise_interpolate, ThresholdInstance,
};
pub use tensor::{Dims, HermitianMatrix, SubsystemIndexMap, C64};
