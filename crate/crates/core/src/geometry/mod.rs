//! Rigid transforms, serial kinematic chains, forward kinematics and a
//! damped least-squares IK solver.

mod chain;
mod ik;
mod se3;

use std::path::PathBuf;

pub use chain::{JointLimits, JointVector, KinematicChain, RevoluteJoint};
pub use ik::{apply_eef_perturbation, pose_error, solve_ik_lm, IkConfig, IkOutcome, IkReport};
pub use se3::SE3Pose;

#[derive(Debug, thiserror::Error)]
pub enum KinematicsError {
    #[error("joint vector has {got} entries, chain expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid kinematic chain: {0}")]
    InvalidChain(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
