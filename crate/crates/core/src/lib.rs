//! Near-field localization, bistatic sensing and partial-blockage detection
//! for an extremely large array split into analog subarrays.
//!
//! The crate is organized bottom-up:
//!
//! * [`scenario`]: system parameters, array geometry, propagation paths
//! * [`channel`]: far-field and near-field OFDM channels with blockage masks
//! * [`signal`]: combiners, pilots and noisy combined observations
//! * [`model`]: noise-free observation templates used by every estimator
//! * [`estimator`]: coarse subarray estimates, triangulation, MLE refinement, CRB
//! * [`mismatch`]: pseudotrue state and bias under ignored blockage
//! * [`blockage`]: blockage cost, heuristic scan, thresholding, oracle
//! * [`harness`]: Monte-Carlo experiments and result tables

pub mod blockage;
pub mod channel;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod mismatch;
pub mod model;
pub mod optim;
pub mod rng;
pub mod scenario;
pub mod signal;

pub use num_complex::Complex64 as C64;

pub use channel::{ChannelTensor, Mask, MaskKind};
pub use error::{Error, Result};
pub use estimator::{EstimationReport, SaEstimate, StateVector};
pub use harness::{ExperimentPlan, Preset, ResultTable};
pub use scenario::{pt, ArrayLayout, PathSet, Point, Scenario, ScenarioConfig};
pub use signal::{CombinerKind, CombinerSchedule, ObservationTensor, PilotSchedule};
