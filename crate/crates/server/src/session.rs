//! The simulated robot and everything a client can ask of it. A session is
//! a deterministic state machine: messages and ticks in, messages out.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::DVector;
use robench_core::workspace::follow_tool;
use robench_core::{
    apply_gripper_action, impedance_step, jog_target, load_workspace, save_workspace, Chain, Gains, GripperAction,
    Trajectory, Weights, Workspace,
};

use crate::protocol::{parse_client_line, ClientMessage, GripperState, Mode, Role, ServerMessage, PROTOCOL_VERSION};

pub type ClientId = u64;

/// Where an outgoing message goes.
#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    To(ClientId, ServerMessage),
    All(ServerMessage),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    /// Simulation steps per second of simulated time.
    pub tick_rate: f64,
    /// Joint stiffness, 1/s².
    pub stiffness: f64,
    /// Joint damping, 1/s.
    pub damping: f64,
    /// Largest allowed change of the commanded target between ticks, rad.
    pub jump_limit: f64,
    /// Allowed joint limit violation, rad.
    pub limit_tolerance: f64,
    /// A target counts as reached when every joint is this close, rad.
    pub settle_tolerance: f64,
    /// Simulated seconds to wait for the robot to settle before giving up.
    pub settle_timeout: f64,
    /// Joint speed used to move to the start of a trajectory, rad/s.
    pub approach_speed: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            tick_rate: 500.0,
            stiffness: 400.0,
            damping: 40.0,
            jump_limit: 0.5,
            limit_tolerance: 1e-6,
            settle_tolerance: 1e-3,
            settle_timeout: 5.0,
            approach_speed: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    /// Moving the target toward the first configuration.
    Approach,
    /// Following the trajectory; `clock` is trajectory time.
    Stream { clock: f64 },
    /// Holding at a step until settled, then applying its gripper action.
    Dwell { clock: f64, step: usize, since: f64 },
    /// Holding the last configuration until settled.
    Finish { since: f64 },
}

#[derive(Debug, Clone)]
struct Execution {
    name: String,
    traj: Trajectory,
    /// Gripper actions by step, in step order.
    actions: BTreeMap<usize, GripperAction>,
    phase: Phase,
}

pub struct Session {
    config: SessionConfig,
    chain: Chain,
    workspace: Workspace,
    base_dir: Option<PathBuf>,
    gains: Gains,
    weights: Weights,
    q: DVector<f64>,
    dq: DVector<f64>,
    target: DVector<f64>,
    mode: Mode,
    gripper: GripperState,
    execution: Option<Execution>,
    ticks: u64,
    operator: Option<ClientId>,
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

impl Session {
    /// Starts at the workspace home configuration, at rest.
    pub fn new(
        chain: Chain,
        workspace: Workspace,
        base_dir: Option<PathBuf>,
        config: SessionConfig,
    ) -> Result<Self, String> {
        if !(config.tick_rate > 0.0) || !(config.stiffness > 0.0) || !(config.damping > 0.0) {
            return Err("tick rate and gains must be positive".into());
        }
        if workspace.robot.home.len() != chain.dof() {
            return Err(format!(
                "workspace home has {} joints, robot has {}",
                workspace.robot.home.len(),
                chain.dof()
            ));
        }
        let gains = Gains::uniform(chain.dof(), config.stiffness, config.damping).map_err(|e| e.to_string())?;
        let q = chain.clamped(&workspace.home());
        let gripper = if workspace.attached_object().is_some() {
            GripperState::Closed
        } else {
            GripperState::Open
        };
        Ok(Self {
            weights: Weights::new(chain.dof()),
            dq: DVector::zeros(chain.dof()),
            target: q.clone(),
            q,
            gains,
            chain,
            workspace,
            base_dir,
            config,
            mode: Mode::Idle,
            gripper,
            execution: None,
            ticks: 0,
            operator: None,
        })
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.config.tick_rate
    }

    /// Simulated time.
    pub fn time(&self) -> f64 {
        self.ticks as f64 / self.config.tick_rate
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn operator(&self) -> Option<ClientId> {
        self.operator
    }

    pub fn state(&self) -> ServerMessage {
        ServerMessage::State {
            t: self.time(),
            q: to_vec(&self.q),
            dq: to_vec(&self.dq),
            mode: self.mode,
            gripper: self.gripper,
            attached_object: self.workspace.attached_object().map(|o| o.id.clone()),
        }
    }

    /// Releases the operator role if `client` held it.
    pub fn disconnect(&mut self, client: ClientId) {
        if self.operator == Some(client) {
            self.operator = None;
        }
    }

    /// Handles one raw line from `client`.
    pub fn handle_line(&mut self, client: ClientId, line: &str) -> Vec<Envelope> {
        match parse_client_line(line) {
            Ok(msg) => self.handle_message(client, msg),
            Err((id, text)) => vec![Envelope::To(client, ServerMessage::error(id, "bad_request", text))],
        }
    }

    /// Handles one message. The reply to the sender always contains exactly
    /// one ack or error referencing the message id.
    pub fn handle_message(&mut self, client: ClientId, msg: ClientMessage) -> Vec<Envelope> {
        let id = msg.id();
        let mut out = Vec::new();
        let reply = self.dispatch(client, msg, &mut out);
        let reply = match reply {
            Ok(doc) => ServerMessage::Ack {
                reference: id,
                document: doc,
            },
            Err((code, text)) => ServerMessage::error(Some(id), code, text),
        };
        out.insert(0, Envelope::To(client, reply));
        // the welcome goes before its ack
        if let Some(pos) = out.iter().position(|e| matches!(e, Envelope::To(_, ServerMessage::Welcome { .. }))) {
            let welcome = out.remove(pos);
            out.insert(0, welcome);
        }
        out
    }

    fn dispatch(
        &mut self,
        client: ClientId,
        msg: ClientMessage,
        out: &mut Vec<Envelope>,
    ) -> Result<Option<String>, (&'static str, String)> {
        if self.mode == Mode::SafetyStop && msg.is_motion() {
            return Err(("stopped", "safety stop active; send reset".into()));
        }
        let needs_operator = msg.is_motion() && !matches!(msg, ClientMessage::Stop { .. });
        if needs_operator && self.operator != Some(client) {
            return Err(("not_operator", "another client holds the operator role".into()));
        }
        match msg {
            ClientMessage::Hello { .. } => {
                let role = match self.operator {
                    None => {
                        self.operator = Some(client);
                        Role::Operator
                    }
                    Some(op) if op == client => Role::Operator,
                    Some(_) => Role::Observer,
                };
                out.push(Envelope::To(
                    client,
                    ServerMessage::Welcome {
                        robot_name: self.chain.name.clone(),
                        dof: self.chain.dof(),
                        protocol_version: PROTOCOL_VERSION,
                        role,
                    },
                ));
                Ok(None)
            }
            ClientMessage::GetWorkspace { .. } => Ok(Some(save_workspace(&self.workspace))),
            ClientMessage::SetWorkspace { document, .. } => {
                self.ensure_not_executing()?;
                let ws = load_workspace(&document).map_err(|e| ("workspace", e.to_string()))?;
                let chain = ws
                    .load_chain(self.base_dir.as_deref())
                    .map_err(|e| ("workspace", e.to_string()))?;
                if chain.dof() != self.chain.dof() {
                    return Err((
                        "workspace",
                        format!("workspace robot has {} joints, server robot has {}", chain.dof(), self.chain.dof()),
                    ));
                }
                self.gripper = if ws.attached_object().is_some() {
                    GripperState::Closed
                } else {
                    GripperState::Open
                };
                self.chain = chain;
                self.workspace = ws;
                Ok(None)
            }
            ClientMessage::SetJointTarget { q, .. } => {
                self.ensure_not_executing()?;
                if q.len() != self.chain.dof() {
                    return Err(("bad_request", format!("expected {} joint values", self.chain.dof())));
                }
                if q.iter().any(|v| !v.is_finite()) {
                    return Err(("bad_request", "non-finite joint value".into()));
                }
                let q = DVector::from_vec(q);
                let violation = self.chain.limit_violation(&q);
                if violation > self.config.limit_tolerance {
                    return Err(("limits", format!("target outside joint limits by {violation:.6} rad")));
                }
                let q = self.chain.clamped(&q);
                self.command(q, out)?;
                self.mode = Mode::Jogging;
                Ok(None)
            }
            ClientMessage::Jog { mode, payload, .. } => {
                self.ensure_not_executing()?;
                let q = jog_target(&self.chain, &self.target, &mode, &payload, &self.weights)
                    .map_err(|e| ("bad_request", e.to_string()))?;
                let q = self.chain.clamped(&q);
                self.command(q, out)?;
                self.mode = Mode::Jogging;
                Ok(None)
            }
            ClientMessage::ExecuteTrajectory { name, trajectory, .. } => {
                self.ensure_not_executing()?;
                let (name, traj) = match (name, trajectory) {
                    (_, Some(t)) => ("inline".to_string(), t),
                    (Some(n), None) => {
                        let t = self
                            .workspace
                            .trajectories
                            .get(&n)
                            .cloned()
                            .ok_or(("unknown_trajectory", format!("no trajectory named `{n}`")))?;
                        (n, t)
                    }
                    (None, None) => return Err(("bad_request", "give a trajectory name or an inline trajectory".into())),
                };
                traj.validate(Some(&self.chain)).map_err(|e| ("bad_trajectory", e))?;
                let mut actions = BTreeMap::new();
                for kp in &self.workspace.keypoints {
                    if kp.gripper_action != GripperAction::None {
                        if let Some(&step) = traj.keypoint_indices.get(&kp.id) {
                            actions.insert(step, kp.gripper_action);
                        }
                    }
                }
                self.execution = Some(Execution {
                    name,
                    traj,
                    actions,
                    phase: Phase::Approach,
                });
                self.mode = Mode::Executing;
                Ok(None)
            }
            ClientMessage::Gripper { action, .. } => {
                self.ensure_not_executing()?;
                if action == GripperAction::None {
                    return Err(("bad_request", "gripper action must be grasp or release".into()));
                }
                self.gripper_action(action)?;
                Ok(None)
            }
            ClientMessage::Stop { .. } => {
                self.cancel_execution(out);
                self.target = self.q.clone();
                if self.mode != Mode::SafetyStop {
                    self.mode = Mode::Idle;
                }
                Ok(None)
            }
            ClientMessage::Reset { .. } => {
                self.cancel_execution(out);
                self.dq.fill(0.0);
                self.target = self.q.clone();
                self.mode = Mode::Idle;
                Ok(None)
            }
        }
    }

    fn ensure_not_executing(&self) -> Result<(), (&'static str, String)> {
        if self.execution.is_some() {
            return Err(("busy", "a trajectory is executing; send stop first".into()));
        }
        Ok(())
    }

    fn gripper_action(&mut self, action: GripperAction) -> Result<(), (&'static str, String)> {
        let (ws, _) = apply_gripper_action(&self.workspace, &self.chain, &self.q, action)
            .map_err(|e| ("workspace", e.to_string()))?;
        self.workspace = ws;
        self.gripper = match action {
            GripperAction::Grasp => GripperState::Closed,
            _ => GripperState::Open,
        };
        Ok(())
    }

    /// Sets a new target, or enters the safety stop if it jumps too far.
    fn command(&mut self, q: DVector<f64>, out: &mut Vec<Envelope>) -> Result<(), (&'static str, String)> {
        let jump = (&q - &self.target).amax();
        if jump > self.config.jump_limit {
            let text = format!("commanded jump of {jump:.3} rad exceeds {} rad", self.config.jump_limit);
            self.safety_stop(&text, out);
            return Err(("safety_stop", text));
        }
        self.target = q;
        Ok(())
    }

    fn safety_stop(&mut self, text: &str, out: &mut Vec<Envelope>) {
        log::warn!("safety stop: {text}");
        self.cancel_execution(out);
        self.mode = Mode::SafetyStop;
        self.dq.fill(0.0);
        self.target = self.q.clone();
        out.push(Envelope::All(ServerMessage::error(None, "safety_stop", text)));
    }

    fn cancel_execution(&mut self, out: &mut Vec<Envelope>) {
        if let Some(exec) = self.execution.take() {
            out.push(Envelope::All(ServerMessage::ExecutionDone {
                name: exec.name,
                success: false,
            }));
        }
    }

    fn finish_execution(&mut self, success: bool, out: &mut Vec<Envelope>) {
        if let Some(exec) = self.execution.take() {
            out.push(Envelope::All(ServerMessage::ExecutionDone {
                name: exec.name,
                success,
            }));
        }
        self.target = if success { self.target.clone() } else { self.q.clone() };
        self.mode = Mode::Idle;
    }

    fn settled(&self, target: &DVector<f64>) -> bool {
        (&self.q - target).amax() < self.config.settle_tolerance && self.dq.amax() < 10.0 * self.config.settle_tolerance
    }

    /// Moves the commanded target along the running trajectory.
    fn advance_execution(&mut self, out: &mut Vec<Envelope>) {
        let dt = self.dt();
        let now = self.time();
        let Some(mut exec) = self.execution.take() else { return };
        let traj = &exec.traj;
        let last = traj.configs.len() - 1;
        let end_time = traj.timestamps[last];
        let mut next_target = self.target.clone();
        let mut action = None;
        let mut done = None;
        match exec.phase.clone() {
            Phase::Approach => {
                let goal = &traj.configs[0];
                let delta = goal - &self.target;
                let step = self.config.approach_speed * dt;
                if delta.amax() <= step {
                    next_target = goal.clone();
                    exec.phase = Phase::Stream { clock: 0.0 };
                } else {
                    next_target = &self.target + &delta * (step / delta.amax());
                }
            }
            Phase::Stream { clock } => {
                let clock = clock + dt;
                let pending = exec.actions.keys().next().copied();
                match pending {
                    Some(step) if traj.timestamps[step] <= clock + 1e-12 => {
                        next_target = traj.configs[step].clone();
                        exec.phase = Phase::Dwell {
                            clock: traj.timestamps[step],
                            step,
                            since: now,
                        };
                    }
                    _ if clock >= end_time - 1e-12 => {
                        next_target = traj.configs[last].clone();
                        exec.phase = Phase::Finish { since: now };
                    }
                    _ => {
                        next_target = interpolate(traj, clock);
                        exec.phase = Phase::Stream { clock };
                    }
                }
            }
            Phase::Dwell { clock, step, since } => {
                if self.settled(&traj.configs[step]) {
                    action = Some(exec.actions[&step]);
                    exec.actions.remove(&step);
                    exec.phase = if step == last {
                        Phase::Finish { since: now }
                    } else {
                        Phase::Stream { clock }
                    };
                } else if now - since > self.config.settle_timeout {
                    done = Some(false);
                }
            }
            Phase::Finish { since } => {
                if self.settled(&traj.configs[last]) {
                    done = Some(true);
                } else if now - since > self.config.settle_timeout {
                    done = Some(false);
                }
            }
        }
        self.execution = Some(exec);
        if let Some(success) = done {
            self.finish_execution(success, out);
            return;
        }
        if let Some(action) = action {
            if let Err((_, text)) = self.gripper_action(action) {
                log::warn!("gripper action failed: {text}");
            }
        }
        let _ = self.command(next_target, out);
    }

    /// Advances the simulation by one tick.
    pub fn tick(&mut self) -> Vec<Envelope> {
        let mut out = Vec::new();
        if self.mode == Mode::Executing {
            self.advance_execution(&mut out);
        }
        if self.mode != Mode::SafetyStop {
            match impedance_step(&self.chain, &self.q, &self.dq, &self.target, &self.gains, self.dt()) {
                Ok((q, dq)) => {
                    self.q = q;
                    self.dq = dq;
                }
                Err(e) => self.safety_stop(&e.to_string(), &mut out),
            }
            if self.workspace.attached_object().is_some() {
                let _ = follow_tool(&mut self.workspace, &self.chain, &self.q);
            }
            let violation = self.chain.limit_violation(&self.q);
            if violation > self.config.limit_tolerance {
                self.safety_stop(&format!("joint limits violated by {violation:.6} rad"), &mut out);
            }
            if self.mode == Mode::Jogging && self.settled(&self.target) {
                self.mode = Mode::Idle;
            }
        }
        self.ticks += 1;
        out
    }
}

fn interpolate(traj: &Trajectory, time: f64) -> DVector<f64> {
    let last = traj.configs.len() - 1;
    let dt = traj.dt();
    if last == 0 || time <= 0.0 {
        return traj.configs[0].clone();
    }
    let s = (time / dt).clamp(0.0, last as f64);
    let i = (s.floor() as usize).min(last - 1);
    let f = s - i as f64;
    &traj.configs[i] * (1.0 - f) + &traj.configs[i + 1] * f
}
