//! Speed-and-separation monitoring for a serial arm with on-link
//! time-of-flight rings.

// `!(x > 0.0)` style guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod controller;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod kinematics;
pub mod latency;
pub mod lidar;
pub mod metrics;
pub mod scene;
pub mod sim;
pub mod ssm;
pub mod tof;
pub mod trace;

pub use config::Config;
pub use controller::{SpeedProfile, TaskProgram};
pub use error::{Diagnostic, Error, Result};
pub use experiment::{run_matrix, RunMatrix};
pub use kinematics::{KinematicChain, RingId, RobotState};
pub use metrics::MetricsReport;
pub use scene::{HumanAvatar, Scene, ScenePrimitive, Tag, Trajectory};
pub use sim::{Approach, SimConfig, TrialResult, TrialSummary};
pub use ssm::{Mode, Psi, SafetyState, SsmParams};
pub use tof::{RingReading, ToFRing};
pub use trace::TraceRecord;
