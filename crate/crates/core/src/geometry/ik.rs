//! Levenberg-Marquardt (damped least squares) inverse kinematics.
//!
//! Each iteration solves `(J^T J + lambda I) dq = J^T e` for the stacked
//! position / rotation-vector error `e`, clamps the trial configuration to
//! the joint limits and keeps it only if the squared error shrinks. The
//! damping grows on rejected steps and shrinks on accepted ones.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::{JointVector, KinematicChain, KinematicsError, SE3Pose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkConfig {
    pub max_iterations: usize,
    /// Meters.
    pub position_tolerance: f64,
    /// Radians.
    pub orientation_tolerance: f64,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    pub min_damping: f64,
    pub max_damping: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            position_tolerance: 1e-4,
            orientation_tolerance: 1e-3,
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 0.3,
            min_damping: 1e-9,
            max_damping: 1e8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IkReport {
    pub joints: JointVector,
    pub iterations: usize,
    pub position_error: f64,
    pub orientation_error: f64,
}

/// Outcome of an IK solve. Failing to reach the target is a regular
/// outcome, not an error.
#[derive(Clone, Debug, PartialEq)]
pub enum IkOutcome {
    Solved(IkReport),
    Infeasible(IkReport),
}

impl IkOutcome {
    pub fn is_solved(&self) -> bool {
        matches!(self, IkOutcome::Solved(_))
    }

    pub fn solution(&self) -> Option<&JointVector> {
        match self {
            IkOutcome::Solved(r) => Some(&r.joints),
            IkOutcome::Infeasible(_) => None,
        }
    }

    pub fn into_solution(self) -> Option<JointVector> {
        match self {
            IkOutcome::Solved(r) => Some(r.joints),
            IkOutcome::Infeasible(_) => None,
        }
    }

    pub fn report(&self) -> &IkReport {
        match self {
            IkOutcome::Solved(r) | IkOutcome::Infeasible(r) => r,
        }
    }
}

struct Residual {
    error: DVector<f64>,
    position: f64,
    orientation: f64,
}

impl Residual {
    fn between(current: &SE3Pose, target: &SE3Pose) -> Self {
        let dp = target.translation - current.translation;
        let dr: Vector3<f64> = (target.rotation * current.rotation.inverse()).scaled_axis();
        Self {
            error: DVector::from_column_slice(&[dp.x, dp.y, dp.z, dr.x, dr.y, dr.z]),
            position: dp.norm(),
            orientation: dr.norm(),
        }
    }

    fn cost(&self) -> f64 {
        self.error.norm_squared()
    }

    fn within(&self, cfg: &IkConfig) -> bool {
        self.position <= cfg.position_tolerance && self.orientation <= cfg.orientation_tolerance
    }
}

/// Solve for joint angles whose end-effector pose matches `target`,
/// starting from `seed` (clamped into limits first).
pub fn solve_ik_lm(
    chain: &KinematicChain,
    target: &SE3Pose,
    seed: &JointVector,
    cfg: &IkConfig,
) -> Result<IkOutcome, KinematicsError> {
    chain.check_dof(seed)?;
    if !target.is_finite() {
        return Err(KinematicsError::NonFinite("IK target"));
    }
    if !seed.is_finite() {
        return Err(KinematicsError::NonFinite("IK seed"));
    }

    let n = chain.dof();
    let mut q = seed.clone();
    chain.clamp(&mut q);
    let mut frames = chain.fk_unchecked(q.as_slice());
    let mut res = Residual::between(&frames[n], target);
    let mut lambda = cfg.initial_damping;

    let report = |q: &JointVector, res: &Residual, it: usize| IkReport {
        joints: q.clone(),
        iterations: it,
        position_error: res.position,
        orientation_error: res.orientation,
    };

    if res.within(cfg) {
        return Ok(IkOutcome::Solved(report(&q, &res, 0)));
    }

    for it in 1..=cfg.max_iterations {
        let jac = chain.jacobian_from_frames(&frames);
        let jt = jac.transpose();
        let mut lhs = &jt * &jac;
        for i in 0..n {
            lhs[(i, i)] += lambda;
        }
        let rhs = &jt * &res.error;
        let step = match lhs.cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                lambda = (lambda * cfg.damping_increase).min(cfg.max_damping);
                continue;
            }
        };

        let mut trial = JointVector::new(q.0.iter().zip(step.iter()).map(|(a, d)| a + d).collect());
        chain.clamp(&mut trial);
        let trial_frames = chain.fk_unchecked(trial.as_slice());
        let trial_res = Residual::between(&trial_frames[n], target);

        if trial_res.cost() < res.cost() {
            q = trial;
            frames = trial_frames;
            res = trial_res;
            lambda = (lambda * cfg.damping_decrease).max(cfg.min_damping);
            if res.within(cfg) {
                return Ok(IkOutcome::Solved(report(&q, &res, it)));
            }
        } else {
            if lambda >= cfg.max_damping {
                return Ok(IkOutcome::Infeasible(report(&q, &res, it)));
            }
            lambda = (lambda * cfg.damping_increase).min(cfg.max_damping);
        }
    }

    Ok(IkOutcome::Infeasible(report(&q, &res, cfg.max_iterations)))
}

/// Move the end-effector by `delta`, expressed in the source end-effector
/// frame, and solve for the joints seeded from `q_src`.
pub fn apply_eef_perturbation(
    chain: &KinematicChain,
    q_src: &JointVector,
    delta: &SE3Pose,
    cfg: &IkConfig,
) -> Result<IkOutcome, KinematicsError> {
    let src = chain.end_effector(q_src)?;
    solve_ik_lm(chain, &src.compose(delta), q_src, cfg)
}

/// Independent sanity check used after an IK success: the pose error of
/// `q` against `target` measured with a fresh FK pass.
pub fn pose_error(chain: &KinematicChain, q: &JointVector, target: &SE3Pose) -> Result<(f64, f64), KinematicsError> {
    let eef = chain.end_effector(q)?;
    Ok((eef.distance_to(target), eef.angle_to(target)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{JointLimits, RevoluteJoint};
    use std::f64::consts::PI;

    fn planar(lengths: &[f64]) -> KinematicChain {
        let mut joints = Vec::new();
        for i in 0..lengths.len() {
            let offset = if i == 0 { 0.0 } else { lengths[i - 1] };
            joints.push(RevoluteJoint::new(
                format!("j{i}"),
                Vector3::z(),
                SE3Pose::from_translation(Vector3::new(offset, 0.0, 0.0)),
                JointLimits::new(-PI, PI),
            ));
        }
        let tool = SE3Pose::from_translation(Vector3::new(*lengths.last().unwrap(), 0.0, 0.0));
        KinematicChain::new("planar", SE3Pose::identity(), joints, tool).unwrap()
    }

    #[test]
    fn fixed_point_returns_seed() {
        let c = planar(&[1.0, 1.0]);
        let q0 = JointVector::new(vec![0.4, -0.9]);
        let target = c.end_effector(&q0).unwrap();
        let out = solve_ik_lm(&c, &target, &q0, &IkConfig::default()).unwrap();
        match out {
            IkOutcome::Solved(r) => {
                assert_eq!(r.iterations, 0);
                assert_eq!(r.joints, q0);
            }
            other => panic!("expected solve, got {other:?}"),
        }
    }

    #[test]
    fn noisy_seed_converges() {
        let c = planar(&[1.0, 0.8, 0.5]);
        let q_star = JointVector::new(vec![0.3, 0.7, -0.4]);
        let target = c.end_effector(&q_star).unwrap();
        let seed = JointVector::new(vec![0.35, 0.62, -0.31]);
        let cfg = IkConfig::default();
        let out = solve_ik_lm(&c, &target, &seed, &cfg).unwrap();
        let q = out.solution().expect("converged");
        let (dp, dr) = pose_error(&c, q, &target).unwrap();
        assert!(dp <= cfg.position_tolerance && dr <= cfg.orientation_tolerance);
    }

    #[test]
    fn unreachable_target_is_infeasible() {
        let c = planar(&[1.0, 1.0]);
        let target = SE3Pose::from_translation(Vector3::new(3.0, 0.0, 0.0));
        let out = solve_ik_lm(&c, &target, &JointVector::new(vec![0.1, 0.1]), &IkConfig::default()).unwrap();
        assert!(!out.is_solved());
    }

    #[test]
    fn errors_on_bad_input() {
        let c = planar(&[1.0, 1.0]);
        let cfg = IkConfig::default();
        assert!(matches!(
            solve_ik_lm(&c, &SE3Pose::identity(), &JointVector::zeros(3), &cfg),
            Err(KinematicsError::DimensionMismatch { .. })
        ));
        let bad = SE3Pose::from_translation(Vector3::new(f64::NAN, 0.0, 0.0));
        assert!(matches!(
            solve_ik_lm(&c, &bad, &JointVector::zeros(2), &cfg),
            Err(KinematicsError::NonFinite(_))
        ));
    }

    #[test]
    fn identity_perturbation_keeps_joints() {
        let c = planar(&[1.0, 1.0]);
        let q = JointVector::new(vec![0.2, 0.5]);
        let out = apply_eef_perturbation(&c, &q, &SE3Pose::identity(), &IkConfig::default()).unwrap();
        assert_eq!(out.solution(), Some(&q));
    }

    #[test]
    fn small_translation_verified_by_fk() {
        // Planar arm can only realize in-plane moves with a consistent
        // orientation, so give it an extra joint and move along the arm.
        let c = planar(&[1.0, 1.0, 0.5]);
        let q = JointVector::new(vec![0.2, 0.5, -0.3]);
        let delta = SE3Pose::from_translation(Vector3::new(0.05, 0.0, 0.0));
        let cfg = IkConfig::default();
        let out = apply_eef_perturbation(&c, &q, &delta, &cfg).unwrap();
        let sol = out.solution().expect("reachable");
        let target = c.end_effector(&q).unwrap().compose(&delta);
        let (dp, dr) = pose_error(&c, sol, &target).unwrap();
        assert!(dp <= cfg.position_tolerance && dr <= cfg.orientation_tolerance);
    }

    #[test]
    fn perturbation_beyond_reach_is_infeasible() {
        let c = planar(&[1.0, 1.0]);
        let q = JointVector::new(vec![0.0, 0.0]);
        let delta = SE3Pose::from_translation(Vector3::new(0.5, 0.0, 0.0));
        let out = apply_eef_perturbation(&c, &q, &delta, &IkConfig::default()).unwrap();
        assert!(!out.is_solved());
    }

    #[test]
    fn solution_respects_limits() {
        let mut c = planar(&[1.0, 1.0]);
        c.joints[1].limits = JointLimits::new(-0.2, 0.2);
        let target = c.end_effector(&JointVector::new(vec![0.0, 1.5])).unwrap();
        let out = solve_ik_lm(&c, &target, &JointVector::new(vec![0.1, 0.1]), &IkConfig::default()).unwrap();
        assert!(c.within_limits(&out.report().joints));
        assert!(!out.is_solved());
    }
}
