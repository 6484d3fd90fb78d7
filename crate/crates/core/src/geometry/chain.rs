//! Serial revolute chains and forward kinematics.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::{KinematicsError, SE3Pose};

/// Joint angles in radians, ordered base to tip.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector(pub Vec<f64>);

impl JointVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dof: usize) -> Self {
        Self(vec![0.0; dof])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Largest absolute per-joint difference.
    pub fn max_abs_diff(&self, other: &JointVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<Vec<f64>> for JointVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl fmt::Display for JointVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:.6}")?;
        }
        write!(f, "]")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct JointLimits {
    pub lower: f64,
    pub upper: f64,
}

impl JointLimits {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.lower && q <= self.upper
    }

    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.lower, self.upper)
    }
}

impl From<[f64; 2]> for JointLimits {
    fn from([lower, upper]: [f64; 2]) -> Self {
        Self { lower, upper }
    }
}

impl From<JointLimits> for [f64; 2] {
    fn from(l: JointLimits) -> Self {
        [l.lower, l.upper]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RevoluteJoint {
    pub name: String,
    /// Rotation axis in the joint's own frame.
    pub axis: Unit<Vector3<f64>>,
    /// Transform from the previous frame to this joint's frame at zero angle.
    pub origin: SE3Pose,
    pub limits: JointLimits,
}

impl RevoluteJoint {
    pub fn new(name: impl Into<String>, axis: Vector3<f64>, origin: SE3Pose, limits: JointLimits) -> Self {
        Self {
            name: name.into(),
            axis: Unit::new_normalize(axis),
            origin,
            limits,
        }
    }
}

/// One arm: a base pose, an ordered list of revolute joints, and a fixed
/// tool offset from the last joint frame to the end-effector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KinematicChain {
    pub name: String,
    pub base_pose: SE3Pose,
    pub joints: Vec<RevoluteJoint>,
    pub tool: SE3Pose,
}

#[derive(Deserialize)]
struct ChainRepr {
    name: String,
    base_pose: SE3Pose,
    joints: Vec<JointRepr>,
    #[serde(default)]
    tool: Option<SE3Pose>,
}

#[derive(Deserialize)]
struct JointRepr {
    #[serde(default)]
    name: String,
    axis: [f64; 3],
    origin: SE3Pose,
    limits: [f64; 2],
}

impl<'de> Deserialize<'de> for KinematicChain {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = ChainRepr::deserialize(deserializer)?;
        let mut joints = Vec::with_capacity(repr.joints.len());
        for (i, j) in repr.joints.into_iter().enumerate() {
            let axis = Vector3::from(j.axis);
            let n = axis.norm();
            if !n.is_finite() || n < 1e-12 {
                return Err(serde::de::Error::custom(format!("joint {i}: axis must be nonzero")));
            }
            joints.push(RevoluteJoint {
                name: if j.name.is_empty() { format!("joint{i}") } else { j.name },
                axis: Unit::new_normalize(axis),
                origin: j.origin,
                limits: j.limits.into(),
            });
        }
        let chain = KinematicChain {
            name: repr.name,
            base_pose: repr.base_pose,
            joints,
            tool: repr.tool.unwrap_or_default(),
        };
        chain.validate().map_err(serde::de::Error::custom)?;
        Ok(chain)
    }
}

impl KinematicChain {
    pub fn new(name: impl Into<String>, base_pose: SE3Pose, joints: Vec<RevoluteJoint>, tool: SE3Pose) -> Result<Self, KinematicsError> {
        let chain = Self {
            name: name.into(),
            base_pose,
            joints,
            tool,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn from_json_str(s: &str) -> Result<Self, KinematicsError> {
        serde_json::from_str(s).map_err(|e| KinematicsError::InvalidChain(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self, KinematicsError> {
        let text = std::fs::read_to_string(path).map_err(|e| KinematicsError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if self.joints.is_empty() {
            return Err(KinematicsError::InvalidChain(format!("{}: chain has no joints", self.name)));
        }
        if !self.base_pose.is_finite() || !self.tool.is_finite() {
            return Err(KinematicsError::InvalidChain(format!("{}: non-finite base or tool pose", self.name)));
        }
        for (i, j) in self.joints.iter().enumerate() {
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(KinematicsError::InvalidChain(format!("{}: joint {i} axis not unit", self.name)));
            }
            if !(j.limits.lower < j.limits.upper) {
                return Err(KinematicsError::InvalidChain(format!(
                    "{}: joint {i} limits must satisfy lo < hi",
                    self.name
                )));
            }
            if !j.origin.is_finite() {
                return Err(KinematicsError::InvalidChain(format!("{}: joint {i} origin not finite", self.name)));
            }
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn check_dof(&self, q: &JointVector) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &JointVector) -> bool {
        q.len() == self.dof() && self.joints.iter().zip(&q.0).all(|(j, v)| j.limits.contains(*v))
    }

    pub fn clamp(&self, q: &mut JointVector) {
        for (j, v) in self.joints.iter().zip(q.0.iter_mut()) {
            *v = j.limits.clamp(*v);
        }
    }

    /// Index of the first joint whose value lies outside its limits.
    pub fn first_limit_violation(&self, q: &JointVector) -> Option<usize> {
        self.joints
            .iter()
            .zip(&q.0)
            .position(|(j, v)| !j.limits.contains(*v))
    }

    /// World-frame pose of every joint frame (after its rotation is applied)
    /// followed by the end-effector pose. Returns `dof + 1` poses.
    pub fn forward_kinematics(&self, q: &JointVector) -> Result<Vec<SE3Pose>, KinematicsError> {
        self.check_dof(q)?;
        Ok(self.fk_unchecked(q.as_slice()))
    }

    pub fn end_effector(&self, q: &JointVector) -> Result<SE3Pose, KinematicsError> {
        self.check_dof(q)?;
        Ok(self.eef_unchecked(q.as_slice()))
    }

    pub(crate) fn fk_unchecked(&self, q: &[f64]) -> Vec<SE3Pose> {
        let mut frames = Vec::with_capacity(self.joints.len() + 1);
        let mut t = self.base_pose;
        for (joint, angle) in self.joints.iter().zip(q) {
            t = t.compose(&joint.origin).compose(&SE3Pose::from_axis_angle(&joint.axis, *angle));
            frames.push(t);
        }
        frames.push(t.compose(&self.tool));
        frames
    }

    pub(crate) fn eef_unchecked(&self, q: &[f64]) -> SE3Pose {
        let mut t = self.base_pose;
        for (joint, angle) in self.joints.iter().zip(q) {
            t = t.compose(&joint.origin).compose(&SE3Pose::from_axis_angle(&joint.axis, *angle));
        }
        t.compose(&self.tool)
    }

    /// Geometric Jacobian (6 x dof, linear rows first) of the end-effector
    /// in the world frame.
    pub(crate) fn jacobian_from_frames(&self, frames: &[SE3Pose]) -> DMatrix<f64> {
        let n = self.dof();
        let p_eef = frames[n].translation;
        let mut jac = DMatrix::zeros(6, n);
        for (i, joint) in self.joints.iter().enumerate() {
            let axis = frames[i].rotation * joint.axis.into_inner();
            let lin = axis.cross(&(p_eef - frames[i].translation));
            for r in 0..3 {
                jac[(r, i)] = lin[r];
                jac[(r + 3, i)] = axis[r];
            }
        }
        jac
    }

    /// Distances between consecutive FK frames at zero configuration equal
    /// these offsets for every configuration.
    pub fn link_offsets(&self) -> Vec<f64> {
        let mut offsets: Vec<f64> = self.joints.iter().skip(1).map(|j| j.origin.translation.norm()).collect();
        offsets.push(self.tool.translation.norm());
        offsets
    }

    /// Sum of link offsets, an upper bound on the distance from the first
    /// joint to the end-effector.
    pub fn reach(&self) -> f64 {
        self.link_offsets().iter().sum()
    }
}
