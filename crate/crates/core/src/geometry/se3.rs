//! Rigid transforms stored as a unit quaternion plus a translation.

use std::ops::Mul;

use nalgebra::{Isometry3, Quaternion, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Rigid-body transform. Composition follows the usual `parent_T_child`
/// convention: `a.compose(&b)` applies `b` first, expressed in `a`'s frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SE3Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for SE3Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl SE3Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    /// Rotation of `angle` radians about `axis`, no translation.
    pub fn from_axis_angle(axis: &Unit<Vector3<f64>>, angle: f64) -> Self {
        Self::from_rotation(UnitQuaternion::from_axis_angle(axis, angle))
    }

    pub fn compose(&self, other: &SE3Pose) -> SE3Pose {
        SE3Pose {
            rotation: self.rotation * other.rotation,
            translation: self.translation + self.rotation * other.translation,
        }
    }

    pub fn inverse(&self) -> SE3Pose {
        let inv = self.rotation.inverse();
        SE3Pose {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Angle of the rotation part in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        self.rotation.angle()
    }

    /// Rotation angle between the orientations of two poses.
    pub fn angle_to(&self, other: &SE3Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    pub fn distance_to(&self, other: &SE3Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(iso.rotation, iso.translation.vector)
    }

    /// Quaternion as `[w, x, y, z]`.
    pub fn quat_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }
}

impl Mul for SE3Pose {
    type Output = SE3Pose;

    fn mul(self, rhs: SE3Pose) -> SE3Pose {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a SE3Pose> for &'a SE3Pose {
    type Output = SE3Pose;

    fn mul(self, rhs: &'a SE3Pose) -> SE3Pose {
        self.compose(rhs)
    }
}

/// On-disk form: `{"quat": [w, x, y, z], "trans": [x, y, z]}`.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    quat: [f64; 4],
    trans: [f64; 3],
}

impl Serialize for SE3Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PoseRepr {
            quat: self.quat_wxyz(),
            trans: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SE3Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(deserializer)?;
        let [w, x, y, z] = repr.quat;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(serde::de::Error::custom("quaternion must be finite and nonzero"));
        }
        if repr.trans.iter().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("translation must be finite"));
        }
        Ok(SE3Pose::new(
            UnitQuaternion::from_quaternion(q),
            Vector3::from(repr.trans),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn arb_pose() -> impl Strategy<Value = SE3Pose> {
        (
            prop::array::uniform3(-3.0f64..3.0),
            prop::array::uniform3(-2.0f64..2.0),
        )
            .prop_map(|(rv, t)| {
                SE3Pose::new(
                    UnitQuaternion::from_scaled_axis(Vector3::from(rv)),
                    Vector3::from(t),
                )
            })
    }

    fn pose_close(a: &SE3Pose, b: &SE3Pose, tol: f64) -> bool {
        a.angle_to(b) <= tol && a.distance_to(b) <= tol
    }

    proptest! {
        #[test]
        fn compose_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let lhs = a.compose(&b).compose(&c);
            let rhs = a.compose(&b.compose(&c));
            prop_assert!(pose_close(&lhs, &rhs, 1e-9));
        }

        #[test]
        fn inverse_cancels(a in arb_pose()) {
            let id = SE3Pose::identity();
            prop_assert!(pose_close(&a.compose(&a.inverse()), &id, 1e-9));
            prop_assert!(pose_close(&a.inverse().compose(&a), &id, 1e-9));
            prop_assert!((a.rotation.norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn json_roundtrip(a in arb_pose()) {
            let s = serde_json::to_string(&a).unwrap();
            let back: SE3Pose = serde_json::from_str(&s).unwrap();
            prop_assert!(pose_close(&a, &back, 1e-12));
        }
    }

    #[test]
    fn transform_point_rotates_then_translates() {
        let p = SE3Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2),
            Vector3::new(1.0, 0.0, 0.0),
        );
        let out = p.transform_point(&Vector3::new(1.0, 0.0, 0.0));
        assert!((out - Vector3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn json_normalizes_quaternion_and_rejects_zero() {
        let p: SE3Pose = serde_json::from_str(r#"{"quat":[2,0,0,0],"trans":[1,2,3]}"#).unwrap();
        assert!((p.rotation.norm() - 1.0).abs() < 1e-12);
        assert!(serde_json::from_str::<SE3Pose>(r#"{"quat":[0,0,0,0],"trans":[0,0,0]}"#).is_err());
    }
}
