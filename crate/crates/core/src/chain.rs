//! Serial kinematic chains: forward kinematics and geometric Jacobians.

use nalgebra::{DVector, Matrix6xX, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::KinematicsError;
use crate::scalar::Real;
use crate::transform::RigidTransform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec<T: Real> {
    pub name: String,
    pub kind: JointKind,
    /// Unit axis in the joint frame. Ignored for fixed joints.
    pub axis: Vector3<T>,
    /// Pose of the joint frame relative to the previous joint frame.
    pub origin: RigidTransform<T>,
    pub lower: T,
    pub upper: T,
    pub velocity_limit: T,
}

impl<T: Real> JointSpec<T> {
    pub fn revolute(name: impl Into<String>, origin: RigidTransform<T>, axis: Vector3<T>, lower: T, upper: T) -> Self {
        Self {
            name: name.into(),
            kind: JointKind::Revolute,
            axis,
            origin,
            lower,
            upper,
            velocity_limit: T::one(),
        }
    }

    pub fn prismatic(name: impl Into<String>, origin: RigidTransform<T>, axis: Vector3<T>, lower: T, upper: T) -> Self {
        Self {
            kind: JointKind::Prismatic,
            ..Self::revolute(name, origin, axis, lower, upper)
        }
    }

    pub fn fixed(name: impl Into<String>, origin: RigidTransform<T>) -> Self {
        Self {
            name: name.into(),
            kind: JointKind::Fixed,
            axis: Vector3::z(),
            origin,
            lower: T::zero(),
            upper: T::zero(),
            velocity_limit: T::zero(),
        }
    }

    /// Motion of the child frame for joint value `value`.
    pub fn motion(&self, value: T) -> RigidTransform<T> {
        match self.kind {
            JointKind::Revolute => RigidTransform::from_rotation(UnitQuaternion::from_axis_angle(
                &nalgebra::Unit::new_unchecked(self.axis),
                value,
            )),
            JointKind::Prismatic => {
                let t = self.axis * value;
                RigidTransform::from_translation(t.x, t.y, t.z)
            }
            JointKind::Fixed => RigidTransform::identity(),
        }
    }

    fn validate(&self) -> Result<(), KinematicsError> {
        if self.kind != JointKind::Fixed {
            let n = self.axis.norm();
            if !n.is_finite() || (n - T::one()).abs() > crate::scalar::lit(1e-9) {
                return Err(KinematicsError::InvalidAxis(self.name.clone()));
            }
            if !(self.lower <= self.upper) {
                return Err(KinematicsError::InvalidLimits(self.name.clone()));
            }
        }
        Ok(())
    }
}

/// Joint positions with optional velocities, one entry per degree of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct JointConfig<T: Real> {
    pub q: DVector<T>,
    pub dq: Option<DVector<T>>,
}

impl<T: Real> JointConfig<T> {
    pub fn new(q: DVector<T>) -> Self {
        Self { q, dq: None }
    }

    pub fn from_slice(q: &[T]) -> Self {
        Self::new(DVector::from_column_slice(q))
    }

    pub fn zeros(dof: usize) -> Self {
        Self::new(DVector::zeros(dof))
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Geometric Jacobian at the tool point, in the base frame.
///
/// Rows 0..3 map joint rates to linear velocity, rows 3..6 to angular velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian<T: Real>(pub Matrix6xX<T>);

impl<T: Real> Jacobian<T> {
    pub fn matrix(&self) -> &Matrix6xX<T> {
        &self.0
    }

    pub fn column(&self, j: usize) -> Vector6<T> {
        self.0.column(j).into_owned()
    }
}

/// A serial chain from base link to tip link.
///
/// Fixed joints never appear in `joints`: they are folded into the origin of
/// the next movable joint, or into `tool_offset` when they trail the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain<T: Real> {
    pub name: String,
    pub joints: Vec<JointSpec<T>>,
    /// Links on the base to tip path, base first.
    pub link_names: Vec<String>,
    pub tool_offset: RigidTransform<T>,
    /// Opaque `(link, filename)` mesh references; never loaded here.
    pub meshes: Vec<(String, String)>,
}

impl<T: Real> KinematicChain<T> {
    /// Builds a chain from joints listed base to tip. Fixed joints are folded away.
    pub fn new(
        name: impl Into<String>,
        joints: Vec<JointSpec<T>>,
        tool_offset: RigidTransform<T>,
    ) -> Result<Self, KinematicsError> {
        let mut movable: Vec<JointSpec<T>> = Vec::with_capacity(joints.len());
        let mut pending = RigidTransform::identity();
        for joint in joints {
            joint.validate()?;
            if joint.kind == JointKind::Fixed {
                pending = pending.compose(&joint.origin);
            } else {
                let origin = pending.compose(&joint.origin);
                pending = RigidTransform::identity();
                movable.push(JointSpec { origin, ..joint });
            }
        }
        let link_names = (0..=movable.len()).map(|i| format!("link{i}")).collect();
        Ok(Self {
            name: name.into(),
            joints: movable,
            link_names,
            tool_offset: pending.compose(&tool_offset),
            meshes: Vec::new(),
        })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn with_tool_offset(mut self, tool_offset: RigidTransform<T>) -> Self {
        self.tool_offset = tool_offset;
        self
    }

    pub fn lower_limits(&self) -> DVector<T> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.lower))
    }

    pub fn upper_limits(&self) -> DVector<T> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.upper))
    }

    fn check_len(&self, q: &DVector<T>) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Clamps every coordinate into its joint limits.
    pub fn clamp(&self, q: &mut DVector<T>) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.lower, j.upper);
        }
    }

    pub fn clamped(&self, q: &DVector<T>) -> DVector<T> {
        let mut out = q.clone();
        self.clamp(&mut out);
        out
    }

    /// Largest limit violation of `q` (zero when inside all limits).
    pub fn limit_violation(&self, q: &DVector<T>) -> T {
        q.iter()
            .zip(&self.joints)
            .map(|(&v, j)| (j.lower - v).max(v - j.upper).max(T::zero()))
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Frames after each joint's motion, base first, followed by the tool frame.
    /// The returned vector has `dof + 1` entries.
    pub fn link_frames(&self, q: &DVector<T>) -> Result<Vec<RigidTransform<T>>, KinematicsError> {
        self.check_len(q)?;
        let mut frames = Vec::with_capacity(self.dof() + 1);
        let mut current = RigidTransform::identity();
        for (joint, &value) in self.joints.iter().zip(q.iter()) {
            current = current.compose(&joint.origin).compose(&joint.motion(value));
            frames.push(current);
        }
        frames.push(current.compose(&self.tool_offset));
        Ok(frames)
    }

    pub fn forward_kinematics(&self, q: &DVector<T>) -> Result<RigidTransform<T>, KinematicsError> {
        self.check_len(q)?;
        let mut current = RigidTransform::identity();
        for (joint, &value) in self.joints.iter().zip(q.iter()) {
            current = current.compose(&joint.origin).compose(&joint.motion(value));
        }
        Ok(current.compose(&self.tool_offset))
    }

    pub fn jacobian(&self, q: &DVector<T>) -> Result<Jacobian<T>, KinematicsError> {
        self.check_len(q)?;
        let mut axes = Vec::with_capacity(self.dof());
        let mut current = RigidTransform::identity();
        for (joint, &value) in self.joints.iter().zip(q.iter()) {
            let frame = current.compose(&joint.origin);
            axes.push((joint.kind, frame.transform_vector(&joint.axis), frame.translation));
            current = frame.compose(&joint.motion(value));
        }
        let tool = current.compose(&self.tool_offset).translation;
        let mut m = Matrix6xX::zeros(self.dof());
        for (j, (kind, z, p)) in axes.into_iter().enumerate() {
            let (lin, ang) = match kind {
                JointKind::Revolute => (z.cross(&(tool - p)), z),
                _ => (z, Vector3::zeros()),
            };
            m.fixed_view_mut::<3, 1>(0, j).copy_from(&lin);
            m.fixed_view_mut::<3, 1>(3, j).copy_from(&ang);
        }
        Ok(Jacobian(m))
    }
}

pub fn forward_kinematics<T: Real>(
    chain: &KinematicChain<T>,
    q: &JointConfig<T>,
) -> Result<RigidTransform<T>, KinematicsError> {
    chain.forward_kinematics(&q.q)
}

pub fn jacobian<T: Real>(chain: &KinematicChain<T>, q: &JointConfig<T>) -> Result<Jacobian<T>, KinematicsError> {
    chain.jacobian(&q.q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn planar_2r() -> KinematicChain<f64> {
        KinematicChain::new(
            "planar_2r",
            vec![
                JointSpec::revolute("j1", RigidTransform::identity(), Vector3::z(), -PI, PI),
                JointSpec::revolute("j2", RigidTransform::from_translation(1.0, 0.0, 0.0), Vector3::z(), -PI, PI),
            ],
            RigidTransform::from_translation(1.0, 0.0, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn straight_arm() {
        let chain = planar_2r();
        let t = chain.forward_kinematics(&DVector::from_vec(vec![0.0, 0.0])).unwrap();
        assert_relative_eq!(t.translation, Vector3::new(2.0, 0.0, 0.0));
        assert_eq!(t.wxyz(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn quarter_turn() {
        let chain = planar_2r();
        let t = chain.forward_kinematics(&DVector::from_vec(vec![FRAC_PI_2, 0.0])).unwrap();
        assert_relative_eq!(t.translation, Vector3::new(0.0, 2.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(t.rotation.angle(), FRAC_PI_2, epsilon = 1e-12);
        assert_relative_eq!(t.rotation.axis().unwrap().into_inner(), Vector3::z(), epsilon = 1e-12);
    }

    #[test]
    fn planar_jacobian_at_zero() {
        let j = planar_2r().jacobian(&DVector::zeros(2)).unwrap();
        let expected = Matrix6xX::from_column_slice(&[
            0.0, 2.0, 0.0, 0.0, 0.0, 1.0, //
            0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
        ]);
        assert_relative_eq!(j.0, expected, epsilon = 1e-15);
    }

    #[test]
    fn prismatic_between_fixed_joints() {
        let chain = KinematicChain::new(
            "slider",
            vec![
                JointSpec::fixed("f0", RigidTransform::from_translation(0.0, 0.0, 0.5)),
                JointSpec::prismatic("p", RigidTransform::identity(), Vector3::x(), -1.0, 1.0),
                JointSpec::fixed("f1", RigidTransform::from_translation(0.0, 0.3, 0.0)),
            ],
            RigidTransform::identity(),
        )
        .unwrap();
        assert_eq!(chain.dof(), 1);
        let j = chain.jacobian(&DVector::from_element(1, 0.2)).unwrap();
        assert_eq!(j.column(0), Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        let t = chain.forward_kinematics(&DVector::from_element(1, 0.2)).unwrap();
        assert_relative_eq!(t.translation, Vector3::new(0.2, 0.3, 0.5), epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let err = planar_2r().forward_kinematics(&DVector::zeros(3)).unwrap_err();
        assert_eq!(err, KinematicsError::DimensionMismatch { expected: 2, got: 3 });
    }

    #[test]
    fn rejects_inverted_limits() {
        let err = KinematicChain::new(
            "bad",
            vec![JointSpec::revolute("j", RigidTransform::identity(), Vector3::z(), 1.0, -1.0)],
            RigidTransform::identity(),
        )
        .unwrap_err();
        assert!(matches!(err, KinematicsError::InvalidLimits(_)));
    }

    #[test]
    fn generic_over_f32() {
        let chain = KinematicChain::<f32>::new(
            "planar_2r",
            vec![
                JointSpec::revolute("j1", RigidTransform::identity(), Vector3::z(), -3.0, 3.0),
                JointSpec::revolute("j2", RigidTransform::from_translation(1.0, 0.0, 0.0), Vector3::z(), -3.0, 3.0),
            ],
            RigidTransform::from_translation(1.0, 0.0, 0.0),
        )
        .unwrap();
        let t = chain
            .forward_kinematics(&DVector::from_vec(vec![std::f32::consts::FRAC_PI_2, 0.0]))
            .unwrap();
        assert!((t.translation - Vector3::new(0.0, 2.0, 0.0)).norm() < 1e-6);
    }
}
