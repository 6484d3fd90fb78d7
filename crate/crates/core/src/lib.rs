//! Offline augmentation for eye-to-hand bimanual demonstration datasets.
//!
//! The pipeline perturbs end-effector poses, relabels actions through
//! inverse kinematics, renders camera-aligned skeleton images of the new
//! poses, and rebuilds datasets in which every `k`-th state is replaced.
//! Timesteps are split into contactless and contact-rich phases from
//! joint-torque residuals; the two phases use different samplers.

pub mod buffer;
pub mod camera;
pub mod config;
pub mod contact;
pub mod dataset;
pub mod geometry;
pub mod perturb;
pub mod render;
pub mod synthetic;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Left,
    Right,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Left, Arm::Right];
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arm::Left => "left",
            Arm::Right => "right",
        })
    }
}

/// A value per arm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmPair<T> {
    pub left: T,
    pub right: T,
}

impl<T> ArmPair<T> {
    pub fn new(left: T, right: T) -> Self {
        Self { left, right }
    }

    pub fn get(&self, arm: Arm) -> &T {
        match arm {
            Arm::Left => &self.left,
            Arm::Right => &self.right,
        }
    }

    pub fn get_mut(&mut self, arm: Arm) -> &mut T {
        match arm {
            Arm::Left => &mut self.left,
            Arm::Right => &mut self.right,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Arm, &T) -> U) -> ArmPair<U> {
        ArmPair {
            left: f(Arm::Left, &self.left),
            right: f(Arm::Right, &self.right),
        }
    }

    pub fn try_map<U, E>(&self, mut f: impl FnMut(Arm, &T) -> Result<U, E>) -> Result<ArmPair<U>, E> {
        Ok(ArmPair {
            left: f(Arm::Left, &self.left)?,
            right: f(Arm::Right, &self.right)?,
        })
    }
}
