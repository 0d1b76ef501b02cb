//! Gaussian keypoints: via-point poses whose allowed positional spread is an
//! ellipsoid, turned into precision matrices for the planner cost.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::PlannerError;
use crate::scalar::{lit, to_f64, Real};
use crate::transform::RigidTransform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperAction {
    #[default]
    None,
    Grasp,
    Release,
}

/// Inverse of a keypoint's position covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionMatrix<T: Real>(pub Matrix3<T>);

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKeypoint<T: Real> {
    pub id: String,
    /// Mean position and target orientation, in the planning frame.
    pub pose: RigidTransform<T>,
    /// Position covariance, m².
    pub covariance: Matrix3<T>,
    /// Weight on the squared orientation error, rad⁻². Zero disables it.
    pub orientation_precision: T,
    pub gripper_action: GripperAction,
}

impl<T: Real> GaussianKeypoint<T> {
    /// Keypoint with isotropic standard deviation `sigma` (meters) and the
    /// default orientation weight of 1e3.
    pub fn isotropic(id: impl Into<String>, pose: RigidTransform<T>, sigma: T) -> Self {
        Self {
            id: id.into(),
            pose,
            covariance: Matrix3::identity() * (sigma * sigma),
            orientation_precision: lit(1e3),
            gripper_action: GripperAction::None,
        }
    }

    pub fn with_action(mut self, action: GripperAction) -> Self {
        self.gripper_action = action;
        self
    }

    pub fn with_orientation_precision(mut self, w: T) -> Self {
        self.orientation_precision = w;
        self
    }

    pub fn precision(&self) -> Result<PrecisionMatrix<T>, PlannerError> {
        precision_from_covariance(&self.covariance)
    }

    /// Checks symmetry, definiteness and the eigenvalue range `[1e-8, 1e2]`.
    pub fn validate(&self) -> Result<(), PlannerError> {
        let c = &self.covariance;
        if !c.iter().all(|v| v.is_finite()) || (c - c.transpose()).amax() > lit::<T>(1e-9) * c.amax().max(T::one()) {
            return Err(PlannerError::NotPositiveDefinite);
        }
        let eig = c.symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        if lo < lit::<T>(1e-8 * (1.0 - 1e-9)) || hi > lit::<T>(1e2 * (1.0 + 1e-9)) {
            return Err(PlannerError::NotPositiveDefinite);
        }
        if !(self.orientation_precision >= T::zero()) || !self.pose.is_finite() {
            return Err(PlannerError::InvalidParams(format!("keypoint `{}`", self.id)));
        }
        Ok(())
    }
}

/// `R · diag(s²) · Rᵀ`: semi-axes are one standard deviation along the
/// ellipsoid's principal axes.
pub fn covariance_from_ellipsoid<T: Real>(
    rotation: &UnitQuaternion<T>,
    semi_axes: &Vector3<T>,
) -> Result<Matrix3<T>, PlannerError> {
    if !semi_axes.iter().all(|&s| s > T::zero() && s.is_finite()) {
        return Err(PlannerError::NonPositiveAxis);
    }
    let r = rotation.to_rotation_matrix().into_inner();
    let d = Matrix3::from_diagonal(&semi_axes.component_mul(semi_axes));
    let c = r * d * r.transpose();
    Ok((c + c.transpose()) * lit::<T>(0.5))
}

/// `Σ⁻¹` through a Cholesky factorization.
pub fn precision_from_covariance<T: Real>(covariance: &Matrix3<T>) -> Result<PrecisionMatrix<T>, PlannerError> {
    if (covariance - covariance.transpose()).amax() > lit::<T>(1e-9) * covariance.amax().max(T::one()) {
        return Err(PlannerError::NotPositiveDefinite);
    }
    let inv = covariance
        .cholesky()
        .ok_or(PlannerError::NotPositiveDefinite)?
        .inverse();
    Ok(PrecisionMatrix((inv + inv.transpose()) * lit::<T>(0.5)))
}

/// Step index for each of `count` keypoints over `horizon` steps: keypoint k
/// (1-based) lands on `round(k·T/K)`, so the last one is at `T`.
pub fn allocate_keypoint_times(count: usize, horizon: usize) -> Result<Vec<usize>, PlannerError> {
    if count == 0 {
        return Err(PlannerError::NoKeypoints);
    }
    if count > horizon {
        return Err(PlannerError::TooManyKeypoints {
            keypoints: count,
            horizon,
        });
    }
    Ok((1..=count).map(|k| (2 * k * horizon + count) / (2 * count)).collect())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeypointRepr {
    id: String,
    pose: RigidTransform<f64>,
    covariance: [[f64; 3]; 3],
    orientation_precision: f64,
    #[serde(default)]
    gripper_action: GripperAction,
}

impl<T: Real> Serialize for GaussianKeypoint<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let c = &self.covariance;
        KeypointRepr {
            id: self.id.clone(),
            pose: self.pose.cast(),
            covariance: [0, 1, 2].map(|r| [0, 1, 2].map(|k| to_f64(c[(r, k)]))),
            orientation_precision: to_f64(self.orientation_precision),
            gripper_action: self.gripper_action,
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real> Deserialize<'de> for GaussianKeypoint<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = KeypointRepr::deserialize(deserializer)?;
        if !r.covariance.iter().flatten().all(|v| v.is_finite()) || !r.orientation_precision.is_finite() {
            return Err(D::Error::custom(format!("non-finite value in keypoint `{}`", r.id)));
        }
        let kp = GaussianKeypoint {
            pose: r.pose.cast(),
            covariance: Matrix3::from_fn(|i, j| lit(r.covariance[i][j])),
            orientation_precision: lit(r.orientation_precision),
            gripper_action: r.gripper_action,
            id: r.id,
        };
        kp.validate()
            .map_err(|e| D::Error::custom(format!("keypoint `{}`: {e}", kp.id)))?;
        Ok(kp)
    }
}
