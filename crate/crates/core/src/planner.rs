//! Via-point trajectory planning with iLQR.
//!
//! The robot is modeled as a joint-space single integrator
//! `q[t+1] = q[t] + u[t]·Δt`. The cost is
//!
//! ```text
//! Σ_k  e_p(t_k)ᵀ Λ_k e_p(t_k) + w_k ‖e_o(t_k)‖²   +   r Σ_t ‖u_t‖²
//! ```
//!
//! where `e_p` is the tool position error against keypoint `k` at its
//! allotted step, `Λ_k` the keypoint precision and `e_o` the orientation
//! log-error. Each iteration linearizes the forward kinematics at the
//! keypoint steps (Gauss–Newton), runs a Riccati backward pass and a
//! backtracking forward roll-out that clamps to joint limits.

use std::collections::BTreeMap;
use std::fmt::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::chain::KinematicChain;
use crate::control::pose_error;
use crate::error::PlannerError;
use crate::gaussian::{allocate_keypoint_times, GaussianKeypoint, PrecisionMatrix};
use crate::scalar::{lit, to_f64, Real};
use crate::transform::RigidTransform;

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerParams<T: Real> {
    /// Number of control steps `T`; the trajectory has `T + 1` configurations.
    pub horizon: usize,
    pub dt: T,
    pub control_cost: T,
    pub max_iterations: usize,
    pub cost_tolerance: T,
    pub line_search_shrink: T,
}

impl<T: Real> Default for PlannerParams<T> {
    fn default() -> Self {
        Self {
            horizon: 100,
            dt: lit(0.02),
            control_cost: lit(1e-4),
            max_iterations: 100,
            cost_tolerance: lit(1e-8),
            line_search_shrink: lit(0.5),
        }
    }
}

impl<T: Real> PlannerParams<T> {
    pub fn validate(&self, keypoints: usize) -> Result<(), PlannerError> {
        let bad = |m: &str| Err(PlannerError::InvalidParams(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be at least one step");
        }
        if keypoints > self.horizon {
            return Err(PlannerError::TooManyKeypoints {
                keypoints,
                horizon: self.horizon,
            });
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return bad("dt must be positive");
        }
        if !(self.control_cost > T::zero()) {
            return bad("control cost must be positive");
        }
        if !(self.cost_tolerance >= T::zero()) {
            return bad("cost tolerance must be non-negative");
        }
        if !(self.line_search_shrink > T::zero() && self.line_search_shrink < T::one()) {
            return bad("line search shrink must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Uniformly sampled joint trajectory starting at t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrajectory<T: Real> {
    pub timestamps: Vec<T>,
    pub configs: Vec<DVector<T>>,
    /// Keypoint id to the step at which it is targeted.
    pub keypoint_indices: BTreeMap<String, usize>,
}

impl<T: Real> JointTrajectory<T> {
    pub fn new(dt: T, configs: Vec<DVector<T>>, keypoint_indices: BTreeMap<String, usize>) -> Self {
        let timestamps = (0..configs.len()).map(|i| dt * lit::<T>(i as f64)).collect();
        Self {
            timestamps,
            configs,
            keypoint_indices,
        }
    }

    pub fn stationary(q0: &DVector<T>, horizon: usize, dt: T) -> Self {
        Self::new(dt, vec![q0.clone(); horizon + 1], BTreeMap::new())
    }

    /// Number of control steps.
    pub fn horizon(&self) -> usize {
        self.configs.len().saturating_sub(1)
    }

    pub fn dof(&self) -> usize {
        self.configs.first().map_or(0, |c| c.len())
    }

    pub fn dt(&self) -> T {
        match self.timestamps.as_slice() {
            [a, b, ..] => *b - *a,
            _ => T::zero(),
        }
    }

    /// Velocity controls that reproduce the configurations.
    pub fn controls(&self) -> Vec<DVector<T>> {
        let dt = self.dt();
        self.configs.windows(2).map(|w| (&w[1] - &w[0]) / dt).collect()
    }

    /// Checks the structural invariants; with a chain, also dimensions and limits.
    pub fn validate(&self, chain: Option<&KinematicChain<T>>) -> Result<(), String> {
        if self.configs.is_empty() || self.timestamps.len() != self.configs.len() {
            return Err("timestamps and configs must be non-empty and of equal length".into());
        }
        let dof = self.dof();
        if self.configs.iter().any(|c| c.len() != dof) {
            return Err("configs have inconsistent lengths".into());
        }
        if self.configs.iter().flat_map(|c| c.iter()).chain(&self.timestamps).any(|v| !v.is_finite()) {
            return Err("non-finite value".into());
        }
        if self.configs.len() > 1 {
            let dt = self.dt();
            if !(dt > T::zero()) {
                return Err("timestamps must be strictly increasing".into());
            }
            let tol = dt * lit(1e-6);
            for (i, w) in self.timestamps.windows(2).enumerate() {
                if !(w[1] > w[0]) || ((w[1] - w[0]) - dt).abs() > tol {
                    return Err(format!("non-uniform time step at index {}", i + 1));
                }
            }
        }
        if let Some((id, &step)) = self.keypoint_indices.iter().find(|(_, &s)| s >= self.configs.len()) {
            return Err(format!("keypoint `{id}` step {step} is past the end"));
        }
        if let Some(chain) = chain {
            if dof != chain.dof() {
                return Err(format!("trajectory has {dof} joints, chain has {}", chain.dof()));
            }
            let tol: T = lit(1e-9);
            if let Some(i) = self.configs.iter().position(|c| chain.limit_violation(c) > tol) {
                return Err(format!("config {i} violates joint limits"));
            }
        }
        Ok(())
    }

    /// CSV with header `t,q1,…,qn` and one row per step.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for j in 1..=self.dof() {
            let _ = write!(out, ",q{j}");
        }
        out.push('\n');
        for (t, q) in self.timestamps.iter().zip(&self.configs) {
            out.push_str(&format_significant(to_f64(*t)));
            for v in q.iter() {
                out.push(',');
                out.push_str(&format_significant(to_f64(*v)));
            }
            out.push('\n');
        }
        out
    }
}

/// Plain decimal notation with at least twelve significant digits.
pub fn format_significant(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{:.12}", if v == 0.0 { 0.0 } else { v });
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).clamp(1, 40) as usize;
    format!("{v:.decimals$}")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryRepr {
    timestamps: Vec<f64>,
    configs: Vec<Vec<f64>>,
    #[serde(default)]
    keypoint_indices: BTreeMap<String, usize>,
}

impl<T: Real> Serialize for JointTrajectory<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TrajectoryRepr {
            timestamps: self.timestamps.iter().map(|&t| to_f64(t)).collect(),
            configs: self.configs.iter().map(|c| c.iter().map(|&v| to_f64(v)).collect()).collect(),
            keypoint_indices: self.keypoint_indices.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real> Deserialize<'de> for JointTrajectory<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = TrajectoryRepr::deserialize(deserializer)?;
        let traj = JointTrajectory {
            timestamps: r.timestamps.into_iter().map(lit).collect(),
            configs: r
                .configs
                .into_iter()
                .map(|c| DVector::from_iterator(c.len(), c.into_iter().map(lit)))
                .collect(),
            keypoint_indices: r.keypoint_indices,
        };
        traj.validate(None).map_err(serde::de::Error::custom)?;
        Ok(traj)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult<T: Real> {
    pub trajectory: JointTrajectory<T>,
    pub cost: T,
    /// Accepted iterations.
    pub iterations: usize,
    /// Cost before the first iteration and after every accepted one.
    pub cost_history: Vec<T>,
}

struct Target<T: Real> {
    step: usize,
    pose: RigidTransform<T>,
    precision: PrecisionMatrix<T>,
    orientation_weight: T,
}

struct Problem<'a, T: Real> {
    chain: &'a KinematicChain<T>,
    q0: DVector<T>,
    params: &'a PlannerParams<T>,
    targets: Vec<Target<T>>,
}

impl<T: Real> Problem<'_, T> {
    fn task_cost(&self, target: &Target<T>, q: &DVector<T>) -> Result<T, PlannerError> {
        let e = pose_error(&self.chain.forward_kinematics(q)?, &target.pose);
        let ep = e.fixed_rows::<3>(0);
        let eo = e.fixed_rows::<3>(3);
        Ok((ep.transpose() * target.precision.0 * ep)[(0, 0)] + target.orientation_weight * eo.norm_squared())
    }

    fn cost(&self, states: &[DVector<T>], controls: &[DVector<T>]) -> Result<T, PlannerError> {
        let mut c = T::zero();
        for target in &self.targets {
            c += self.task_cost(target, &states[target.step])?;
        }
        let effort = controls.iter().fold(T::zero(), |acc, u| acc + u.norm_squared());
        Ok(c + self.params.control_cost * effort)
    }

    /// Roll out controls from `q0` with limit clamping; returns the states and
    /// the controls actually applied.
    fn rollout(&self, controls: &[DVector<T>]) -> (Vec<DVector<T>>, Vec<DVector<T>>) {
        let dt = self.params.dt;
        let mut states = Vec::with_capacity(controls.len() + 1);
        let mut applied = Vec::with_capacity(controls.len());
        let mut x = self.q0.clone();
        states.push(x.clone());
        for u in controls {
            let next = self.chain.clamped(&(&x + u * dt));
            applied.push((&next - &x) / dt);
            x = next;
            states.push(x.clone());
        }
        (states, applied)
    }

    /// Gauss–Newton gradient and Hessian of a keypoint term.
    fn task_derivatives(&self, target: &Target<T>, q: &DVector<T>) -> Result<(DVector<T>, DMatrix<T>), PlannerError> {
        let e = pose_error(&self.chain.forward_kinematics(q)?, &target.pose);
        let jac = self.chain.jacobian(q)?.0;
        let jv = jac.rows(0, 3);
        let jw = jac.rows(3, 3);
        // residuals point from target to current pose
        let rp = -e.fixed_rows::<3>(0).into_owned();
        let ro = -e.fixed_rows::<3>(3).into_owned();
        let lam = &target.precision.0;
        let w = target.orientation_weight;
        let two: T = lit(2.0);
        let grad = (jv.transpose() * (lam * rp) + jw.transpose() * ro * w) * two;
        let hess = (jv.transpose() * lam * jv + jw.transpose() * jw * w) * two;
        Ok((grad, hess))
    }

    fn backward(
        &self,
        states: &[DVector<T>],
        controls: &[DVector<T>],
    ) -> Result<(Vec<DVector<T>>, Vec<DMatrix<T>>), PlannerError> {
        let n = self.chain.dof();
        let horizon = controls.len();
        let dt = self.params.dt;
        let two_r = self.params.control_cost * lit(2.0);
        let mut lx: Vec<DVector<T>> = vec![DVector::zeros(n); horizon + 1];
        let mut lxx: Vec<DMatrix<T>> = vec![DMatrix::zeros(n, n); horizon + 1];
        for target in &self.targets {
            let (g, h) = self.task_derivatives(target, &states[target.step])?;
            lx[target.step] += g;
            lxx[target.step] += h;
        }
        let mut vx = lx[horizon].clone();
        let mut vxx = lxx[horizon].clone();
        let mut ff = vec![DVector::zeros(n); horizon];
        let mut fb = vec![DMatrix::zeros(n, n); horizon];
        for t in (0..horizon).rev() {
            let qx = &lx[t] + &vx;
            let qu = &controls[t] * two_r + &vx * dt;
            let qxx = &lxx[t] + &vxx;
            let qux = &vxx * dt;
            let mut quu = &vxx * (dt * dt);
            for i in 0..n {
                quu[(i, i)] += two_r;
            }
            let chol = quu.clone().cholesky().ok_or(PlannerError::NotPositiveDefinite)?;
            let k = -chol.solve(&qu);
            let gain = -chol.solve(&qux);
            let kt = gain.transpose();
            vx = &qx + &kt * (&quu * &k) + &kt * &qu + qux.transpose() * &k;
            let v = &qxx + &kt * &quu * &gain + &kt * &qux + qux.transpose() * &gain;
            vxx = (&v + v.transpose()) * lit::<T>(0.5);
            ff[t] = k;
            fb[t] = gain;
        }
        Ok((ff, fb))
    }

    fn forward(
        &self,
        states: &[DVector<T>],
        controls: &[DVector<T>],
        ff: &[DVector<T>],
        fb: &[DMatrix<T>],
        alpha: T,
    ) -> (Vec<DVector<T>>, Vec<DVector<T>>) {
        let dt = self.params.dt;
        let mut new_states = Vec::with_capacity(states.len());
        let mut new_controls = Vec::with_capacity(controls.len());
        let mut x = self.q0.clone();
        new_states.push(x.clone());
        for t in 0..controls.len() {
            let u = &controls[t] + &ff[t] * alpha + &fb[t] * (&x - &states[t]);
            let next = self.chain.clamped(&(&x + &u * dt));
            new_controls.push((&next - &x) / dt);
            x = next;
            new_states.push(x.clone());
        }
        (new_states, new_controls)
    }
}

fn to_f64_rows<T: Real>(states: &[DVector<T>]) -> Vec<Vec<f64>> {
    states.iter().map(|s| s.iter().map(|&v| to_f64(v)).collect()).collect()
}

/// Plans a trajectory from `q0` through `keypoints` (expressed in the chain's
/// base frame) from zero initial controls.
pub fn plan_ilqr<T: Real>(
    chain: &KinematicChain<T>,
    q0: &DVector<T>,
    keypoints: &[GaussianKeypoint<T>],
    params: &PlannerParams<T>,
) -> Result<PlanResult<T>, PlannerError> {
    replan_incremental(chain, q0, keypoints, params, None)
}

/// Same as [`plan_ilqr`] but seeded with the controls of `warm_start`,
/// truncated or zero-padded to the horizon.
pub fn replan_incremental<T: Real>(
    chain: &KinematicChain<T>,
    q0: &DVector<T>,
    keypoints: &[GaussianKeypoint<T>],
    params: &PlannerParams<T>,
    warm_start: Option<&JointTrajectory<T>>,
) -> Result<PlanResult<T>, PlannerError> {
    params.validate(keypoints.len())?;
    let n = chain.dof();
    if q0.len() != n {
        return Err(crate::error::KinematicsError::DimensionMismatch {
            expected: n,
            got: q0.len(),
        }
        .into());
    }
    if chain.limit_violation(q0) > lit(1e-9) {
        return Err(PlannerError::InvalidParams("q0 violates joint limits".into()));
    }
    let horizon = params.horizon;
    let mut targets = Vec::with_capacity(keypoints.len());
    let mut indices = BTreeMap::new();
    if !keypoints.is_empty() {
        let steps = allocate_keypoint_times(keypoints.len(), horizon)?;
        for (kp, step) in keypoints.iter().zip(steps) {
            kp.validate()?;
            indices.insert(kp.id.clone(), step);
            targets.push(Target {
                step,
                pose: kp.pose,
                precision: kp.precision()?,
                orientation_weight: kp.orientation_precision,
            });
        }
    }
    let problem = Problem {
        chain,
        q0: q0.clone(),
        params,
        targets,
    };

    let mut controls = vec![DVector::zeros(n); horizon];
    if let Some(warm) = warm_start {
        if warm.dof() != n && warm.horizon() > 0 {
            return Err(PlannerError::InvalidParams(format!(
                "warm start has {} joints, chain has {n}",
                warm.dof()
            )));
        }
        for (slot, u) in controls.iter_mut().zip(warm.controls()) {
            *slot = u;
        }
    }
    let (mut states, applied) = problem.rollout(&controls);
    controls = applied;
    let mut cost = problem.cost(&states, &controls)?;
    if !cost.is_finite() {
        return Err(PlannerError::Diverged {
            iteration: 0,
            last_finite: to_f64_rows(&states),
        });
    }
    let mut history = vec![cost];
    let mut accepted = 0;
    let min_alpha: T = lit(1e-10);

    for iteration in 0..params.max_iterations {
        let (ff, fb) = problem.backward(&states, &controls)?;
        let mut alpha = T::one();
        let mut candidate = None;
        while alpha > min_alpha {
            let (s, u) = problem.forward(&states, &controls, &ff, &fb, alpha);
            let c = problem.cost(&s, &u)?;
            if !c.is_finite() {
                return Err(PlannerError::Diverged {
                    iteration,
                    last_finite: to_f64_rows(&states),
                });
            }
            if c < cost {
                candidate = Some((s, u, c));
                break;
            }
            alpha *= params.line_search_shrink;
        }
        let Some((s, u, c)) = candidate else {
            break;
        };
        let improvement = cost - c;
        states = s;
        controls = u;
        cost = c;
        history.push(cost);
        accepted += 1;
        if improvement < params.cost_tolerance {
            break;
        }
    }

    Ok(PlanResult {
        trajectory: JointTrajectory::new(params.dt, states, indices),
        cost,
        iterations: accepted,
        cost_history: history,
    })
}

/// Tool pose at every step of the trajectory.
pub fn task_path<T: Real>(chain: &KinematicChain<T>, traj: &JointTrajectory<T>) -> Result<Vec<RigidTransform<T>>, PlannerError> {
    traj.configs
        .iter()
        .map(|q| chain.forward_kinematics(q).map_err(PlannerError::from))
        .collect()
}

/// Achieved `(position, orientation)` error of each keypoint at its step.
/// Keypoints missing from the trajectory's index map are skipped.
pub fn keypoint_errors<T: Real>(
    chain: &KinematicChain<T>,
    traj: &JointTrajectory<T>,
    keypoints: &[GaussianKeypoint<T>],
) -> Result<Vec<(String, T, T)>, PlannerError> {
    let mut out = Vec::new();
    for kp in keypoints {
        if let Some(&step) = traj.keypoint_indices.get(&kp.id) {
            let e = pose_error(&chain.forward_kinematics(&traj.configs[step])?, &kp.pose);
            out.push((kp.id.clone(), e.fixed_rows::<3>(0).norm(), e.fixed_rows::<3>(3).norm()));
        }
    }
    Ok(out)
}
