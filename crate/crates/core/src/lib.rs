//! Hardware-free toolkit for multi-sensor hand tracking.
//!
//! The crate covers two halves of the same workflow:
//!
//! * **Placement**: a 28-marker kinematic hand ([`hand_model`]) produces
//!   Monte Carlo pose datasets, the [`visibility`] engine ray-traces every
//!   finger marker against palm and finger occluders for each sensor, and
//!   [`placement`] scores and optimizes four sensor poses with a particle
//!   swarm ([`swarm`]).
//! * **Fusion**: [`sensor_sim`] turns ground-truth poses into per-sensor
//!   streams with variable sampling, internal-model fallback and the 250 mm
//!   axis cut; [`fusion`] resamples them to 100 Hz with cubic B-splines,
//!   realigns them into the world frame and fuses them with a NaN-skipping
//!   Kalman filter; [`metrics`] computes finger lengths, joint angles, range
//!   of motion and agreement statistics.
//!
//! World frame: origin at the table surface in the centre of the workspace,
//! `y` up, `z` pointing towards the subject. All lengths are millimetres and
//! all angles in the public API are degrees.

pub mod error;
pub mod fusion;
pub mod geometry;
pub mod hand_model;
pub mod io;
pub mod metrics;
pub mod placement;
pub mod sensor_sim;
pub mod swarm;
pub mod visibility;

pub use error::{Error, Result};
pub use hand_model::{Finger, HandDimensions, HandModel, HandPose, MarkerFrame, PoseDataset};
pub use placement::{Layout, MetricValue, SwarmConfig};
pub use visibility::{FieldOfView, SensorPlacement};

/// Three-component vector used for points and directions (mm).
pub type Vec3 = nalgebra::Vector3<f64>;
