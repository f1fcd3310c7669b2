//! Expert-guided augmentation of traffic scenarios for cross-view
//! self-supervised representation learning.
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`] and [`geometry`] hold the scenario model (objects with
//!   trajectories, lane pieces with topology) and its validation.
//! * [`ingest`] parses the scenario JSON format and mines maneuver labels.
//! * [`expert`] implements connectivity-based and sensor-based scenario
//!   augmentation and their combination.
//! * [`raster`] renders EGO-fixed occupancy-grid sequences.
//! * [`base_aug`] holds the image-space baseline augmentations.
//! * [`ssl`] trains an encoder/projector pair with Barlow Twins or VICReg.
//! * [`eval`] computes clustering accuracy, linear and few-shot accuracy and
//!   representation-space stability.
//! * [`synth`] generates labeled synthetic scenarios.

// Validation uses negated comparisons so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod base_aug;
pub mod error;
pub mod eval;
pub mod expert;
pub mod geometry;
pub mod ingest;
pub mod raster;
pub mod rng;
pub mod scenario;
pub mod ssl;
pub mod synth;

pub use error::{Error, Result};
pub use scenario::{MapElement, ObjectClass, Scenario, SceneObject, Trajectory, TrajectoryPoint};
