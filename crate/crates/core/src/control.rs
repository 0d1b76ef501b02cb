//! Interactive motion control: weighted differential IK, plane-constrained
//! motion, nullspace joint jogging and the joint impedance law that tracks
//! joint-space targets.

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::chain::KinematicChain;
use crate::error::ControlError;
use crate::scalar::{lit, to_f64, Real};
use crate::transform::RigidTransform;

/// Six-vector `(linear, angular)` taking `current` to `target`.
///
/// The angular part is the rotation vector of `target * current⁻¹` with angle
/// in `(-π, π]`. For half turns the axis sign is fixed so that its first
/// nonzero component is positive.
pub fn pose_error<T: Real>(current: &RigidTransform<T>, target: &RigidTransform<T>) -> Vector6<T> {
    let lin = target.translation - current.translation;
    let ang = rotation_log(&(target.rotation * current.rotation.inverse()));
    Vector6::new(lin.x, lin.y, lin.z, ang.x, ang.y, ang.z)
}

/// Rotation vector (axis times angle) of a unit quaternion.
pub fn rotation_log<T: Real>(q: &UnitQuaternion<T>) -> Vector3<T> {
    let raw = q.quaternion();
    let (mut w, mut v) = (raw.w, raw.imag());
    if w < T::zero() {
        w = -w;
        v = -v;
    }
    let s = v.norm();
    if s <= T::default_epsilon() {
        // small angle: log ≈ 2v
        return v * lit::<T>(2.0);
    }
    let angle = lit::<T>(2.0) * s.atan2(w);
    let mut axis = v / s;
    if w <= T::default_epsilon() {
        let first = axis.iter().copied().find(|c| c.abs() > T::default_epsilon());
        if first.is_some_and(|c| c < T::zero()) {
            axis = -axis;
        }
    }
    axis * angle
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkWeights<T: Real> {
    /// Symmetric positive definite joint weighting; larger weight means the
    /// joint moves less.
    pub joint_weights: DMatrix<T>,
    pub damping: T,
    /// Elementwise bound on a single step, radians or meters.
    pub max_step: T,
    /// Ignore the orientation rows of the task.
    pub position_only: bool,
    /// When set, [`solve_ik`] restarts from a fresh seed after this many
    /// iterations without a 10% residual improvement.
    pub restart_after: Option<usize>,
}

impl<T: Real> IkWeights<T> {
    pub fn new(dof: usize) -> Self {
        Self {
            joint_weights: DMatrix::identity(dof, dof),
            damping: lit(0.05),
            max_step: lit(0.1),
            position_only: false,
            restart_after: None,
        }
    }

    pub fn with_damping(mut self, damping: T) -> Self {
        self.damping = damping;
        self
    }

    pub fn with_max_step(mut self, max_step: T) -> Self {
        self.max_step = max_step;
        self
    }

    pub fn with_joint_weights(mut self, w: DMatrix<T>) -> Self {
        self.joint_weights = w;
        self
    }

    pub fn with_restarts(mut self, stall_iterations: usize) -> Self {
        self.restart_after = Some(stall_iterations.max(1));
        self
    }

    pub fn position_only(mut self) -> Self {
        self.position_only = true;
        self
    }

    fn inverse_weights(&self) -> Result<DMatrix<T>, ControlError> {
        let w = &self.joint_weights;
        if !w.is_square() || (w - w.transpose()).amax() > lit(1e-12) || !(self.damping >= T::zero()) {
            return Err(ControlError::InvalidWeights);
        }
        w.clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or(ControlError::InvalidWeights)
    }
}

/// Damped weighted least squares: `W⁻¹Jᵀ (J W⁻¹ Jᵀ + λ² I)⁻¹ e` for a task of any size.
pub fn weighted_dls<T: Real>(
    jacobian: &DMatrix<T>,
    error: &DVector<T>,
    weights: &IkWeights<T>,
) -> Result<DVector<T>, ControlError> {
    let w_inv = weights.inverse_weights()?;
    if w_inv.nrows() != jacobian.ncols() || error.len() != jacobian.nrows() {
        return Err(ControlError::InvalidParameter("weight, jacobian and error sizes disagree".into()));
    }
    let wj = &w_inv * jacobian.transpose();
    let mut a = jacobian * &wj;
    let damp2 = weights.damping * weights.damping;
    for i in 0..a.nrows() {
        a[(i, i)] += damp2;
    }
    let y = match a.clone().cholesky() {
        Some(c) => c.solve(error),
        // singular and undamped: minimum-norm solution
        None => a
            .pseudo_inverse(lit(1e-12))
            .map_err(|e| ControlError::InvalidParameter(e.to_string()))?
            * error,
    };
    Ok(wj * y)
}

fn task_rows<T: Real>(
    chain: &KinematicChain<T>,
    q: &DVector<T>,
    target: &RigidTransform<T>,
    position_only: bool,
) -> Result<(DMatrix<T>, DVector<T>), ControlError> {
    let e = pose_error(&chain.forward_kinematics(q)?, target);
    let j = chain.jacobian(q)?.0;
    let rows = if position_only { 3 } else { 6 };
    Ok((
        DMatrix::from(j.rows(0, rows)),
        DVector::from_iterator(rows, e.iter().copied().take(rows)),
    ))
}

/// One damped weighted least-squares step toward `target`, scaled so no element exceeds `max_step`.
pub fn weighted_ik_step<T: Real>(
    chain: &KinematicChain<T>,
    q: &DVector<T>,
    target: &RigidTransform<T>,
    weights: &IkWeights<T>,
) -> Result<DVector<T>, ControlError> {
    let (j, e) = task_rows(chain, q, target, weights.position_only)?;
    let step = weighted_dls(&j, &e, weights)?;
    Ok(limit_step(step, weights.max_step))
}

/// Scales `step` down so no element exceeds `max_step`, keeping its direction.
fn limit_step<T: Real>(step: DVector<T>, max_step: T) -> DVector<T> {
    let peak = step.amax();
    if peak > max_step {
        step * (max_step / peak)
    } else {
        step
    }
}

fn residual<T: Real>(
    chain: &KinematicChain<T>,
    q: &DVector<T>,
    target: &RigidTransform<T>,
    position_only: bool,
) -> Result<T, ControlError> {
    let e = pose_error(&chain.forward_kinematics(q)?, target);
    Ok(if position_only {
        e.fixed_rows::<3>(0).norm()
    } else {
        e.norm()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution<T: Real> {
    pub q: DVector<T>,
    pub iterations: usize,
    pub residual: T,
}

/// Weighted step where joints resting on a limit and pushed outward are
/// frozen, so the remaining joints take over their share of the task.
fn limit_aware_step<T: Real>(
    chain: &KinematicChain<T>,
    q: &DVector<T>,
    target: &RigidTransform<T>,
    weights: &IkWeights<T>,
) -> Result<DVector<T>, ControlError> {
    let (mut j, e) = task_rows(chain, q, target, weights.position_only)?;
    let mut frozen = vec![false; chain.dof()];
    loop {
        let step = weighted_dls(&j, &e, weights)?;
        let mut changed = false;
        for (i, joint) in chain.joints.iter().enumerate() {
            let outward = (q[i] <= joint.lower && step[i] < T::zero()) || (q[i] >= joint.upper && step[i] > T::zero());
            if outward && !frozen[i] {
                frozen[i] = true;
                j.column_mut(i).fill(T::zero());
                changed = true;
            }
        }
        if !changed {
            return Ok(limit_step(step, weights.max_step));
        }
    }
}

/// Point `index` of the Halton sequence in the box spanned by the joint limits.
fn restart_seed<T: Real>(chain: &KinematicChain<T>, index: usize) -> DVector<T> {
    const BASES: [usize; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    DVector::from_iterator(
        chain.dof(),
        chain.joints.iter().enumerate().map(|(k, joint)| {
            let base = BASES[k % BASES.len()];
            let (mut f, mut r, mut i) = (1.0, 0.0, index);
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            let pi = std::f64::consts::PI;
            let lo = to_f64(joint.lower).max(-pi);
            let hi = to_f64(joint.upper).min(pi).max(lo);
            lit(lo + (hi - lo) * r)
        }),
    )
}

/// Iterates the weighted step with joint-limit clamping until the pose
/// error norm drops below `tol`.
///
/// With [`IkWeights::with_restarts`] a stalled descent restarts from a
/// deterministic seed; `max_iter` bounds the total across restarts and the
/// best iterate over all attempts is reported on failure.
pub fn solve_ik<T: Real>(
    chain: &KinematicChain<T>,
    q0: &DVector<T>,
    target: &RigidTransform<T>,
    weights: &IkWeights<T>,
    tol: T,
    max_iter: usize,
) -> Result<IkSolution<T>, ControlError> {
    if !(tol > T::zero()) {
        return Err(ControlError::InvalidParameter("tolerance must be positive".into()));
    }
    weights.inverse_weights()?;
    let mut q = q0.clone();
    let mut best = (T::max_value().unwrap_or(T::one() / T::default_epsilon()), q.clone());
    let (mut attempt_best, mut stalled, mut restarts) = (best.0, 0usize, 0usize);
    for iteration in 0..=max_iter {
        let res = residual(chain, &q, target, weights.position_only)?;
        if res < best.0 {
            best = (res, q.clone());
        }
        if res < tol {
            return Ok(IkSolution {
                q,
                iterations: iteration,
                residual: res,
            });
        }
        if iteration == max_iter {
            break;
        }
        if let Some(window) = weights.restart_after {
            if res < attempt_best * lit(0.9) {
                attempt_best = res;
                stalled = 0;
            } else {
                stalled += 1;
            }
            if stalled >= window {
                restarts += 1;
                q = restart_seed(chain, restarts);
                attempt_best = T::max_value().unwrap_or(best.0);
                stalled = 0;
                continue;
            }
        }
        q += limit_aware_step(chain, &q, target, weights)?;
        chain.clamp(&mut q);
    }
    Err(ControlError::NoConvergence {
        iterations: max_iter,
        best_residual: to_f64(best.0),
        best_q: best.1.iter().map(|&v| to_f64(v)).collect(),
    })
}

/// Removes the component of `dx` along the unit `normal`.
pub fn project_to_plane<T: Real>(dx: &Vector3<T>, normal: &Vector3<T>) -> Vector3<T> {
    dx - normal * normal.dot(dx)
}

/// `I − J⁺J` with `J⁺ = Jᵀ(JJᵀ + λ²I)⁻¹`.
pub fn nullspace_projector<T: Real>(jacobian: &DMatrix<T>, damping: T) -> Result<DMatrix<T>, ControlError> {
    let n = jacobian.ncols();
    let unit = IkWeights::new(n).with_damping(damping);
    let mut pinv_j = DMatrix::zeros(n, n);
    for c in 0..n {
        let col = weighted_dls(jacobian, &jacobian.column(c).into_owned(), &unit)?;
        pinv_j.set_column(c, &col);
    }
    Ok(DMatrix::identity(n, n) - pinv_j)
}

/// Joint jog of `delta` on `joint`. In nullspace mode the jog is projected so
/// the tool pose is preserved to first order. The result keeps `q + Δq` inside
/// the joint limits.
pub fn nullspace_jog<T: Real>(
    chain: &KinematicChain<T>,
    q: &DVector<T>,
    joint: usize,
    delta: T,
    nullspace: bool,
    weights: &IkWeights<T>,
) -> Result<DVector<T>, ControlError> {
    let n = chain.dof();
    if joint >= n {
        return Err(ControlError::InvalidParameter(format!("joint index {joint} out of range for {n} joints")));
    }
    let mut raw = DVector::zeros(n);
    raw[joint] = delta;
    let step = if nullspace {
        let j = chain.jacobian(q)?.0;
        let rows = if weights.position_only { 3 } else { 6 };
        nullspace_projector(&DMatrix::from(j.rows(0, rows)), weights.damping)? * raw
    } else {
        raw
    };
    Ok(chain.clamped(&(q + step)) - q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceGains<T: Real> {
    /// Stiffness per joint, 1/s².
    pub kp: DVector<T>,
    /// Damping per joint, 1/s.
    pub kd: DVector<T>,
}

impl<T: Real> ImpedanceGains<T> {
    pub fn new(kp: DVector<T>, kd: DVector<T>) -> Result<Self, ControlError> {
        if kp.len() != kd.len() || kp.iter().chain(kd.iter()).any(|&g| !(g > T::zero())) {
            return Err(ControlError::InvalidParameter("gains must be positive and of equal length".into()));
        }
        Ok(Self { kp, kd })
    }

    pub fn uniform(dof: usize, kp: T, kd: T) -> Result<Self, ControlError> {
        Self::new(DVector::from_element(dof, kp), DVector::from_element(dof, kd))
    }
}

/// One semi-implicit Euler step of the unit-mass joint impedance law.
/// Joints that hit a limit stop there with zero velocity.
pub fn impedance_step<T: Real>(
    chain: &KinematicChain<T>,
    q: &DVector<T>,
    dq: &DVector<T>,
    q_target: &DVector<T>,
    gains: &ImpedanceGains<T>,
    dt: T,
) -> Result<(DVector<T>, DVector<T>), ControlError> {
    let n = chain.dof();
    if !(dt > T::zero()) {
        return Err(ControlError::InvalidParameter("time step must be positive".into()));
    }
    if [q.len(), dq.len(), q_target.len(), gains.kp.len()].iter().any(|&l| l != n) {
        return Err(crate::error::KinematicsError::DimensionMismatch {
            expected: n,
            got: q.len(),
        }
        .into());
    }
    let ddq = gains.kp.component_mul(&(q_target - q)) - gains.kd.component_mul(dq);
    let mut dq_next = dq + ddq * dt;
    let mut q_next = q + &dq_next * dt;
    for (i, joint) in chain.joints.iter().enumerate() {
        if q_next[i] <= joint.lower {
            q_next[i] = joint.lower;
            dq_next[i] = T::zero();
        } else if q_next[i] >= joint.upper {
            q_next[i] = joint.upper;
            dq_next[i] = T::zero();
        }
    }
    Ok((q_next, dq_next))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit<T: Real>(self) -> Vector3<T> {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }
}

/// Interactive handle the operator is dragging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlMode {
    /// Payload: one displacement in meters along the base-frame axis.
    TranslateAxis { axis: Axis },
    /// Payload: one angle in radians about the base-frame axis through the tool point.
    RotateRing { axis: Axis },
    /// Payload: a 3-D displacement, projected onto the plane.
    Plane { normal: [f64; 3] },
    /// Payload: one joint increment. `nullspace` defaults to true for redundant chains.
    JointJog {
        joint: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nullspace: Option<bool>,
    },
}

impl ControlMode {
    pub fn validate(&self, dof: usize) -> Result<(), ControlError> {
        match self {
            ControlMode::Plane { normal } => {
                let n = Vector3::from(*normal).norm();
                if (n - 1.0).abs() > 1e-9 {
                    return Err(ControlError::InvalidParameter("plane normal must be unit length".into()));
                }
            }
            ControlMode::JointJog { joint, .. } if *joint >= dof => {
                return Err(ControlError::InvalidParameter(format!("joint index {joint} out of range")));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Turns a handle drag into a new joint-space target starting from `q`.
///
/// Cartesian handles displace the current tool pose and resolve it with
/// [`solve_ik`]; if IK does not converge the best iterate is used.
pub fn jog_target<T: Real>(
    chain: &KinematicChain<T>,
    q: &DVector<T>,
    mode: &ControlMode,
    payload: &[T],
    weights: &IkWeights<T>,
) -> Result<DVector<T>, ControlError> {
    mode.validate(chain.dof())?;
    let need = match mode {
        ControlMode::Plane { .. } => 3,
        _ => 1,
    };
    if payload.len() != need {
        return Err(ControlError::InvalidParameter(format!("expected {need} payload values, got {}", payload.len())));
    }
    let current = chain.forward_kinematics(q)?;
    let target = match mode {
        ControlMode::TranslateAxis { axis } => {
            let mut t = current;
            t.translation += axis.unit::<T>() * payload[0];
            t
        }
        ControlMode::RotateRing { axis } => RigidTransform::new(
            current.translation,
            UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_unchecked(axis.unit()), payload[0]) * current.rotation,
        ),
        ControlMode::Plane { normal } => {
            let n = Vector3::from(*normal).map(lit::<T>);
            let mut t = current;
            t.translation += project_to_plane(&Vector3::new(payload[0], payload[1], payload[2]), &n);
            t
        }
        ControlMode::JointJog { joint, nullspace } => {
            let ns = nullspace.unwrap_or(chain.dof() > 6);
            return Ok(q + nullspace_jog(chain, q, *joint, payload[0], ns, weights)?);
        }
    };
    match solve_ik(chain, q, &target, weights, lit(1e-6), 200) {
        Ok(sol) => Ok(sol.q),
        Err(ControlError::NoConvergence { best_q, .. }) => Ok(DVector::from_iterator(best_q.len(), best_q.into_iter().map(lit::<T>))),
        Err(e) => Err(e),
    }
}
