use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{JointVector, KinematicChain, KinematicsError, SE3Pose};
use crate::ArmPair;

pub type Rgb = [u8; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleConfig {
    /// Meters.
    pub sphere_radius: f64,
    /// Meters.
    pub cylinder_radius: f64,
    pub left_color: Rgb,
    pub right_color: Rgb,
    pub stripe_color: Rgb,
    pub stripe_count: u32,
}

impl Default for StyleConfig {
    fn default() -> Self {
        Self {
            sphere_radius: 0.035,
            cylinder_radius: 0.015,
            left_color: [220, 40, 40],
            right_color: [40, 90, 220],
            stripe_color: [255, 255, 255],
            stripe_count: 8,
        }
    }
}

/// Longitudinal bands around `axis`. The band boundaries are meridians
/// measured from `reference`, which rotates with the joint angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StripePattern {
    pub axis: Unit<Vector3<f64>>,
    pub reference: Unit<Vector3<f64>>,
    pub bands: u32,
    pub primary: Rgb,
    pub secondary: Rgb,
}

impl StripePattern {
    pub fn solid(color: Rgb) -> Self {
        Self {
            axis: Vector3::z_axis(),
            reference: Vector3::x_axis(),
            bands: 1,
            primary: color,
            secondary: color,
        }
    }

    /// Color of the surface at offset `v` from the sphere center.
    pub fn color_at(&self, v: &Vector3<f64>) -> Rgb {
        if self.bands <= 1 {
            return self.primary;
        }
        let side = self.axis.cross(&self.reference);
        let phi = v.dot(&side).atan2(v.dot(&self.reference));
        let frac = (phi + std::f64::consts::PI) / std::f64::consts::TAU;
        let band = ((frac * self.bands as f64).floor() as u32).min(self.bands - 1);
        if band % 2 == 0 {
            self.primary
        } else {
            self.secondary
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    Sphere {
        center: Vector3<f64>,
        radius: f64,
        stripes: StripePattern,
    },
    /// Capped cylinder between `start` and `end`.
    Cylinder {
        start: Vector3<f64>,
        end: Vector3<f64>,
        radius: f64,
        color: Rgb,
    },
}

impl Primitive {
    /// Bounding sphere `(center, radius)`.
    pub fn bounds(&self) -> (Vector3<f64>, f64) {
        match self {
            Primitive::Sphere { center, radius, .. } => (*center, *radius),
            Primitive::Cylinder { start, end, radius, .. } => ((start + end) / 2.0, (end - start).norm() / 2.0 + radius),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonJoint {
    pub position: Vector3<f64>,
    /// World-frame orientation of the joint frame, including its rotation.
    pub frame: SE3Pose,
    /// World-frame axis the stripes wrap around.
    pub axis: Unit<Vector3<f64>>,
    /// Zero-phase stripe direction, rotated by the joint angle.
    pub reference: Unit<Vector3<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmSkeleton {
    pub joints: Vec<SkeletonJoint>,
    /// Consecutive joint index pairs.
    pub bones: Vec<(usize, usize)>,
    pub color: Rgb,
}

impl ArmSkeleton {
    pub fn bone_segments(&self) -> impl Iterator<Item = (Vector3<f64>, Vector3<f64>)> + '_ {
        self.bones
            .iter()
            .map(|&(a, b)| (self.joints[a].position, self.joints[b].position))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonScene {
    pub arms: Vec<ArmSkeleton>,
    pub style: StyleConfig,
}

/// A unit vector perpendicular to `axis`, chosen deterministically.
fn perpendicular(axis: &Vector3<f64>) -> Unit<Vector3<f64>> {
    let pick = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    Unit::new_normalize(pick - axis * axis.dot(&pick))
}

fn arm_skeleton(chain: &KinematicChain, q: &JointVector, color: Rgb) -> Result<ArmSkeleton, KinematicsError> {
    let frames = chain.forward_kinematics(q)?;
    let n = chain.dof();
    let mut joints = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let local_axis = if i < n { chain.joints[i].axis.into_inner() } else { Vector3::z() };
        let local_ref = perpendicular(&local_axis);
        joints.push(SkeletonJoint {
            position: frame.translation,
            frame: *frame,
            axis: Unit::new_normalize(frame.rotation * local_axis),
            reference: Unit::new_normalize(frame.rotation * local_ref.into_inner()),
        });
    }
    let bones = (0..frames.len() - 1).map(|i| (i, i + 1)).collect();
    Ok(ArmSkeleton { joints, bones, color })
}

/// Skeleton of both arms: a sphere per FK frame and a bone between each
/// pair of consecutive frames.
pub fn build_skeleton_scene(
    chains: &ArmPair<KinematicChain>,
    q: &ArmPair<JointVector>,
    style: &StyleConfig,
) -> Result<SkeletonScene, KinematicsError> {
    Ok(SkeletonScene {
        arms: vec![
            arm_skeleton(&chains.left, &q.left, style.left_color)?,
            arm_skeleton(&chains.right, &q.right, style.right_color)?,
        ],
        style: style.clone(),
    })
}

/// Darker tint of the arm color used for bones.
fn bone_color(c: Rgb) -> Rgb {
    [(c[0] as u16 * 3 / 4) as u8, (c[1] as u16 * 3 / 4) as u8, (c[2] as u16 * 3 / 4) as u8]
}

impl SkeletonScene {
    pub fn single_arm(chain: &KinematicChain, q: &JointVector, style: &StyleConfig) -> Result<Self, KinematicsError> {
        Ok(Self {
            arms: vec![arm_skeleton(chain, q, style.left_color)?],
            style: style.clone(),
        })
    }

    pub fn empty(style: &StyleConfig) -> Self {
        Self {
            arms: Vec::new(),
            style: style.clone(),
        }
    }

    /// Bones first, then joint spheres. Primitive order is also the
    /// tie-break order of the depth test.
    pub fn primitives(&self) -> Vec<Primitive> {
        let mut out = Vec::new();
        for arm in &self.arms {
            for (a, b) in arm.bone_segments() {
                if (b - a).norm() > 1e-12 {
                    out.push(Primitive::Cylinder {
                        start: a,
                        end: b,
                        radius: self.style.cylinder_radius,
                        color: bone_color(arm.color),
                    });
                }
            }
        }
        for arm in &self.arms {
            for j in &arm.joints {
                out.push(Primitive::Sphere {
                    center: j.position,
                    radius: self.style.sphere_radius,
                    stripes: StripePattern {
                        axis: j.axis,
                        reference: j.reference,
                        bands: self.style.stripe_count,
                        primary: arm.color,
                        secondary: self.style.stripe_color,
                    },
                });
            }
        }
        out
    }

    /// Indices into `primitives()` of the joint spheres, per arm.
    pub fn sphere_indices(&self) -> Vec<Vec<usize>> {
        let bones: usize = self
            .arms
            .iter()
            .map(|a| a.bone_segments().filter(|(s, e)| (e - s).norm() > 1e-12).count())
            .sum();
        let mut next = bones;
        self.arms
            .iter()
            .map(|a| {
                let ids = (next..next + a.joints.len()).collect();
                next += a.joints.len();
                ids
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{JointLimits, RevoluteJoint};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn planar2() -> KinematicChain {
        let joints = vec![
            RevoluteJoint::new("a", Vector3::z(), SE3Pose::identity(), JointLimits::new(-PI, PI)),
            RevoluteJoint::new(
                "b",
                Vector3::z(),
                SE3Pose::from_translation(Vector3::new(1.0, 0.0, 0.0)),
                JointLimits::new(-PI, PI),
            ),
        ];
        KinematicChain::new("p", SE3Pose::identity(), joints, SE3Pose::from_translation(Vector3::x())).unwrap()
    }

    #[test]
    fn two_link_bones() {
        let scene = SkeletonScene::single_arm(&planar2(), &JointVector::new(vec![FRAC_PI_2, 0.0]), &StyleConfig::default()).unwrap();
        let segs: Vec<_> = scene.arms[0].bone_segments().collect();
        assert_eq!(segs.len(), 2);
        let expect = [Vector3::zeros(), Vector3::new(0.0, 1.0, 0.0), Vector3::new(0.0, 2.0, 0.0)];
        assert!((segs[0].0 - expect[0]).norm() < 1e-12);
        assert!((segs[0].1 - expect[1]).norm() < 1e-12);
        assert!((segs[1].0 - segs[0].1).norm() < 1e-9);
        assert!((segs[1].1 - expect[2]).norm() < 1e-12);
    }

    #[test]
    fn stripe_phase_follows_joint_angle() {
        let style = StyleConfig::default();
        let c = planar2();
        let a = SkeletonScene::single_arm(&c, &JointVector::new(vec![0.0, 0.0]), &style).unwrap();
        let b = SkeletonScene::single_arm(&c, &JointVector::new(vec![0.3, 0.0]), &style).unwrap();
        let ra = a.arms[0].joints[0].reference.into_inner();
        let rb = b.arms[0].joints[0].reference.into_inner();
        assert!((ra.angle(&rb) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn stripes_alternate() {
        let p = StripePattern {
            axis: Vector3::z_axis(),
            reference: Vector3::x_axis(),
            bands: 4,
            primary: [1, 1, 1],
            secondary: [2, 2, 2],
        };
        // Four quadrants starting at phi = -pi.
        assert_eq!(p.color_at(&Vector3::new(-1.0, -0.1, 0.0)), [1, 1, 1]);
        assert_eq!(p.color_at(&Vector3::new(0.1, -1.0, 0.0)), [2, 2, 2]);
        assert_eq!(p.color_at(&Vector3::new(1.0, 0.1, 0.0)), [1, 1, 1]);
        assert_eq!(p.color_at(&Vector3::new(-0.1, 1.0, 0.0)), [2, 2, 2]);
    }

    #[test]
    fn sphere_indices_point_at_spheres() {
        let chains = ArmPair::new(planar2(), planar2());
        let q = ArmPair::new(JointVector::zeros(2), JointVector::zeros(2));
        let scene = build_skeleton_scene(&chains, &q, &StyleConfig::default()).unwrap();
        let prims = scene.primitives();
        for ids in scene.sphere_indices() {
            assert_eq!(ids.len(), 3);
            for i in ids {
                assert!(matches!(prims[i], Primitive::Sphere { .. }));
            }
        }
        assert_eq!(prims.len(), 4 + 6);
    }
}
