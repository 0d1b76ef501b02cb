use nalgebra::{Matrix3, Matrix4, Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::{lit, to_f64, Real};

/// Rigid body transform: rotation followed by translation.
///
/// The rotation is stored as a unit quaternion and renormalized after every
/// construction and composition. Serialized as
/// `{"translation": [x, y, z], "rotation": [w, x, y, z]}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<T: Real> {
    pub translation: Vector3<T>,
    pub rotation: UnitQuaternion<T>,
}

impl<T: Real> Default for RigidTransform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn new(translation: Vector3<T>, rotation: UnitQuaternion<T>) -> Self {
        Self {
            translation,
            rotation: renormalize(rotation),
        }
    }

    pub fn from_translation(x: T, y: T, z: T) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    pub fn from_rotation(rotation: UnitQuaternion<T>) -> Self {
        Self::new(Vector3::zeros(), rotation)
    }

    /// Rotation by `angle` about `axis` (normalized here), no translation.
    pub fn from_axis_angle(axis: &Vector3<T>, angle: T) -> Self {
        Self::from_rotation(UnitQuaternion::from_axis_angle(
            &Unit::new_normalize(*axis),
            angle,
        ))
    }

    /// Builds a transform from a quaternion given as `(w, x, y, z)`. The
    /// quaternion does not need to be normalized but must be nonzero.
    pub fn from_wxyz(translation: Vector3<T>, wxyz: [T; 4]) -> Option<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !(norm > T::default_epsilon()) {
            return None;
        }
        Some(Self::new(translation, UnitQuaternion::new_unchecked(q / norm)))
    }

    /// URDF style origin: roll/pitch/yaw about fixed x, y, z axes.
    pub fn from_xyz_rpy(xyz: Vector3<T>, rpy: Vector3<T>) -> Self {
        Self::new(xyz, UnitQuaternion::from_euler_angles(rpy.x, rpy.y, rpy.z))
    }

    pub fn wxyz(&self) -> [T; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            self.translation + self.rotation * other.translation,
            self.rotation * other.rotation,
        )
    }

    pub fn invert(&self) -> Self {
        let inv = self.rotation.inverse();
        Self::new(-(inv * self.translation), inv)
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<T>) -> Vector3<T> {
        self.rotation * v
    }

    pub fn rotation_matrix(&self) -> Matrix3<T> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn to_homogeneous(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Translation distance plus the angle of the relative rotation.
    pub fn distance(&self, other: &Self) -> (T, T) {
        (
            (self.translation - other.translation).norm(),
            self.rotation.angle_to(&other.rotation),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.wxyz().iter().all(|v| v.is_finite())
    }

    /// Converts the scalar type without renormalizing.
    pub fn cast<U: Real>(&self) -> RigidTransform<U> {
        let [w, x, y, z] = self.wxyz().map(|v| lit::<U>(to_f64(v)));
        RigidTransform {
            translation: self.translation.map(|v| lit::<U>(to_f64(v))),
            rotation: UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z)),
        }
    }
}

fn renormalize<T: Real>(q: UnitQuaternion<T>) -> UnitQuaternion<T> {
    let raw = q.into_inner();
    UnitQuaternion::new_unchecked(raw / raw.norm())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformRepr {
    translation: [f64; 3],
    rotation: [f64; 4],
}

impl<T: Real> Serialize for RigidTransform<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TransformRepr {
            translation: [
                to_f64(self.translation.x),
                to_f64(self.translation.y),
                to_f64(self.translation.z),
            ],
            rotation: self.wxyz().map(to_f64),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real> Deserialize<'de> for RigidTransform<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = TransformRepr::deserialize(deserializer)?;
        if repr
            .translation
            .iter()
            .chain(repr.rotation.iter())
            .any(|v| !v.is_finite())
        {
            return Err(D::Error::custom("non-finite value in transform"));
        }
        let [x, y, z] = repr.translation;
        let t = Vector3::new(lit(x), lit(y), lit(z));
        let [qw, qx, qy, qz] = repr.rotation;
        // Stored quaternions are unit already; skip renormalizing so documents
        // round-trip bit for bit.
        let q = Quaternion::new(lit::<T>(qw), lit(qx), lit(qy), lit(qz));
        let norm = to_f64(q.norm());
        if (norm - 1.0).abs() > 1e-6 {
            return Err(D::Error::custom(format!(
                "rotation quaternion is not unit length (norm {norm})"
            )));
        }
        Ok(Self {
            translation: t,
            rotation: UnitQuaternion::new_unchecked(q),
        })
    }
}
