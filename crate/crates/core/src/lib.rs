//! Multi-cup suction grasp planning on affordance maps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod candidate;
pub mod config;
pub mod decode;
pub mod conv;
pub mod error;
pub mod gripper;
pub mod image;
pub mod kernel;
pub mod npy;
pub mod oracle;
pub mod orientation;
pub mod planner;
pub mod ply;
pub mod rank;
pub mod real;
pub mod report;
pub mod rotation;
pub mod scene;
pub mod spatial;
pub mod synth;
pub mod voxel;

pub use candidate::{CandidateSource, GraspCandidate, Pixel};
pub use config::PlannerConfig;
pub use error::{Error, Result};
pub use gripper::GripperSpec;
pub use image::Image;
pub use orientation::{NormalOrientationMap, OrientationSamples};
pub use planner::{plan, PlanCounters, PlanKind, PlanOutcome, PlanRequest};
pub use rank::{RankedEntry, RankedPlan, ScoreBreakdown};
pub use real::Real;
pub use scene::{AffordanceScene, CameraIntrinsics};
pub use voxel::VoxelGrid;

/// Double-precision aliases.
pub type Scene = AffordanceScene<f64>;
pub type Intrinsics = CameraIntrinsics<f64>;
pub type Gripper = GripperSpec<f64>;
pub type Config = PlannerConfig<f64>;
pub type Candidate = GraspCandidate<f64>;
pub type Grid = VoxelGrid<f64>;
pub type Outcome = PlanOutcome<f64>;
pub type Plan = RankedPlan<f64>;
