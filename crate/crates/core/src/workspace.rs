//! The virtual workspace: robot placement, scene objects and obstacles,
//! keypoints and named trajectories, plus its on-disk document format.
//!
//! Positions and poses are in the world frame. The planner works in the
//! robot base frame, see [`Workspace::keypoints_in_base`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chain::KinematicChain;
use crate::collision::ShapePrimitive;
use crate::error::WorkspaceError;
use crate::fixtures;
use crate::gaussian::{GaussianKeypoint, GripperAction};
use crate::planner::JointTrajectory;
use crate::transform::RigidTransform;
use crate::urdf::parse_urdf;

pub const WORKSPACE_VERSION: u64 = 1;

/// Grasp reaches objects whose surface is within this distance of the tool point.
pub const GRASP_DISTANCE: f64 = 0.02;

/// Radius of the spheres placed at joint frames and the tool point.
pub const DEFAULT_LINK_RADIUS: f64 = 0.05;

type Transform = RigidTransform<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectRole {
    Object,
    Obstacle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub id: String,
    pub shape: ShapePrimitive,
    pub pose: Transform,
    pub role: ObjectRole,
    #[serde(default)]
    pub attached_to_gripper: bool,
}

impl SceneObject {
    pub fn new(id: impl Into<String>, shape: ShapePrimitive, pose: Transform, role: ObjectRole) -> Self {
        Self {
            id: id.into(),
            shape,
            pose,
            role,
            attached_to_gripper: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSetup {
    /// `builtin:<name>` for a bundled description, otherwise a URDF path
    /// relative to the workspace file.
    pub urdf: String,
    /// Pose of the robot base in the world.
    pub placement: Transform,
    /// Replaces the tool offset of the description when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_offset: Option<Transform>,
    /// Initial joint configuration; planning starts here.
    pub home: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerCalibration {
    pub marker_to_base: Transform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub version: u64,
    pub robot: RobotSetup,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub keypoints: Vec<GaussianKeypoint<f64>>,
    #[serde(default)]
    pub trajectories: BTreeMap<String, JointTrajectory<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker: Option<MarkerCalibration>,
}

impl Workspace {
    pub fn new(robot: RobotSetup) -> Self {
        Self {
            version: WORKSPACE_VERSION,
            robot,
            objects: Vec::new(),
            keypoints: Vec::new(),
            trajectories: BTreeMap::new(),
            marker: None,
        }
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn attached_object(&self) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.attached_to_gripper)
    }

    /// Loads the robot description and applies the tool offset override.
    pub fn load_chain(&self, base_dir: Option<&Path>) -> Result<KinematicChain<f64>, WorkspaceError> {
        let chain = load_robot(&self.robot.urdf, base_dir)?;
        let chain = match self.robot.tool_offset {
            Some(t) => chain.with_tool_offset(t),
            None => chain,
        };
        if chain.dof() != self.robot.home.len() {
            return Err(WorkspaceError::Schema(format!(
                "robot.home has {} values, robot has {} joints",
                self.robot.home.len(),
                chain.dof()
            )));
        }
        Ok(chain)
    }

    pub fn home(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.robot.home)
    }

    /// Keypoints re-expressed in the robot base frame.
    pub fn keypoints_in_base(&self) -> Vec<GaussianKeypoint<f64>> {
        let to_base = self.robot.placement.invert();
        let r = to_base.rotation_matrix();
        self.keypoints
            .iter()
            .map(|kp| GaussianKeypoint {
                pose: to_base.compose(&kp.pose),
                covariance: r * kp.covariance * r.transpose(),
                ..kp.clone()
            })
            .collect()
    }

    /// Tool frame in the world for configuration `q`.
    pub fn tool_pose(&self, chain: &KinematicChain<f64>, q: &DVector<f64>) -> Result<Transform, WorkspaceError> {
        let tool = chain
            .forward_kinematics(q)
            .map_err(|e| WorkspaceError::Schema(e.to_string()))?;
        Ok(self.robot.placement.compose(&tool))
    }

    /// Every invariant violation, in document order.
    pub fn violations(&self) -> Vec<WorkspaceError> {
        let mut out = Vec::new();
        if self.version != WORKSPACE_VERSION {
            out.push(WorkspaceError::UnknownVersion(self.version));
        }
        if let Some(i) = self.robot.home.iter().position(|v| !v.is_finite()) {
            out.push(WorkspaceError::NonFinite(format!("robot.home[{i}]")));
        }
        let mut ids = BTreeSet::new();
        for (i, obj) in self.objects.iter().enumerate() {
            if !ids.insert(obj.id.as_str()) {
                out.push(WorkspaceError::DuplicateId(obj.id.clone()));
            }
            if !obj.shape.is_valid() {
                out.push(WorkspaceError::InvalidDimensions(format!("objects[{i}] `{}`", obj.id)));
            }
            if obj.role == ObjectRole::Obstacle && obj.attached_to_gripper {
                out.push(WorkspaceError::Schema(format!("obstacle `{}` cannot be attached", obj.id)));
            }
        }
        if self.objects.iter().filter(|o| o.attached_to_gripper).count() > 1 {
            out.push(WorkspaceError::Schema("more than one object attached to the gripper".into()));
        }
        let mut kp_ids = BTreeSet::new();
        for (i, kp) in self.keypoints.iter().enumerate() {
            if !kp_ids.insert(kp.id.as_str()) {
                out.push(WorkspaceError::DuplicateId(kp.id.clone()));
            }
            if let Err(e) = kp.validate() {
                out.push(WorkspaceError::Schema(format!("keypoints[{i}] `{}`: {e}", kp.id)));
            }
        }
        for (name, traj) in &self.trajectories {
            if let Err(e) = traj.validate(None) {
                out.push(WorkspaceError::InvalidTrajectory(format!("{name}: {e}")));
            }
            if traj.dof() != self.robot.home.len() {
                out.push(WorkspaceError::InvalidTrajectory(format!("{name}: joint count differs from robot.home")));
            }
            for id in traj.keypoint_indices.keys() {
                if !kp_ids.contains(id.as_str()) {
                    out.push(WorkspaceError::UnknownKeypoint {
                        trajectory: name.clone(),
                        keypoint: id.clone(),
                    });
                }
            }
        }
        out
    }
}

/// Loads a robot reference: `builtin:<name>` or a URDF path, relative
/// paths resolved against `base_dir`.
pub fn load_robot(reference: &str, base_dir: Option<&Path>) -> Result<KinematicChain<f64>, WorkspaceError> {
    match reference.strip_prefix("builtin:") {
        Some("arm7") => Ok(fixtures::arm7()),
        Some("planar_2r") => Ok(fixtures::planar_2r()),
        Some("identity6") => Ok(fixtures::identity6()),
        Some(other) => Err(WorkspaceError::Schema(format!("unknown builtin robot `{other}`"))),
        None => {
            let path = base_dir.map_or_else(|| Path::new(reference).to_path_buf(), |d| d.join(reference));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| WorkspaceError::Schema(format!("cannot read {}: {e}", path.display())))?;
            parse_urdf(&text).map_err(|e| WorkspaceError::Schema(format!("{}: {e}", path.display())))
        }
    }
}

/// A starting configuration for a robot reference: the bundled home pose for
/// the seven-axis arm, otherwise zero clamped into the limits.
pub fn default_home(reference: &str, chain: &KinematicChain<f64>) -> Vec<f64> {
    if reference == "builtin:arm7" {
        return fixtures::ARM7_HOME.to_vec();
    }
    chain.clamped(&DVector::zeros(chain.dof())).iter().copied().collect()
}

/// Sets the robot placement from a point on the ground plane and a yaw about world z.
pub fn place_robot_manual(ws: &Workspace, ground_point: Vector3<f64>, yaw: f64) -> Workspace {
    let mut out = ws.clone();
    out.robot.placement = RigidTransform::new(
        ground_point,
        nalgebra::UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
    );
    out
}

/// Base pose in the world from the observed marker pose and the marker to base offset.
pub fn calibrate_from_marker(world_marker: &Transform, marker_base: &Transform) -> Transform {
    world_marker.compose(marker_base)
}

/// Inserts `obj`, replacing any object with the same id.
pub fn upsert_object(ws: &Workspace, obj: SceneObject) -> Result<Workspace, WorkspaceError> {
    if !obj.shape.is_valid() {
        return Err(WorkspaceError::InvalidDimensions(obj.id));
    }
    if obj.role == ObjectRole::Obstacle && obj.attached_to_gripper {
        return Err(WorkspaceError::Schema(format!("obstacle `{}` cannot be attached", obj.id)));
    }
    let mut out = ws.clone();
    match out.objects.iter_mut().find(|o| o.id == obj.id) {
        Some(slot) => *slot = obj,
        None => out.objects.push(obj),
    }
    Ok(out)
}

pub fn remove_object(ws: &Workspace, id: &str) -> Result<Workspace, WorkspaceError> {
    let mut out = ws.clone();
    let before = out.objects.len();
    out.objects.retain(|o| o.id != id);
    if out.objects.len() == before {
        return Err(WorkspaceError::NoSuchObject(id.to_string()));
    }
    Ok(out)
}

pub fn save_workspace(ws: &Workspace) -> String {
    let mut text = serde_json::to_string_pretty(ws).expect("workspace serializes");
    text.push('\n');
    text
}

const NON_FINITE_MARK: &str = "\u{0}non-finite";

/// Swaps bare non-finite literals (`NaN`, `Infinity`, overflowing numbers)
/// for a marker string so the document still parses and the offending
/// field can be named.
fn mark_non_finite(document: &str) -> String {
    let mut out = String::with_capacity(document.len());
    let mut chars = document.char_indices().peekable();
    let mut in_string = false;
    let mut escaped = false;
    while let Some((i, c)) = chars.next() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        if c == '"' {
            in_string = true;
            out.push(c);
            continue;
        }
        if c.is_ascii_alphanumeric() || c == '-' || c == '+' || c == '.' {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = chars.peek() {
                if d.is_ascii_alphanumeric() || d == '-' || d == '+' || d == '.' {
                    end = j + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let token = &document[i..end];
            let lower = token.trim_start_matches(['-', '+']).to_ascii_lowercase();
            let non_finite = matches!(lower.as_str(), "nan" | "inf" | "infinity")
                || (token.starts_with(|ch: char| ch.is_ascii_digit() || ch == '-')
                    && token.parse::<f64>().is_ok_and(|v| !v.is_finite()));
            if non_finite {
                out.push_str("\"\\u0000non-finite\"");
            } else {
                out.push_str(token);
            }
            continue;
        }
        out.push(c);
    }
    out
}

fn find_marked(value: &Value, path: &mut String) -> Option<String> {
    match value {
        Value::String(s) if s == NON_FINITE_MARK => Some(path.clone()),
        Value::Array(items) => items.iter().enumerate().find_map(|(i, v)| {
            let len = path.len();
            path.push_str(&format!("[{i}]"));
            let found = find_marked(v, path);
            path.truncate(len);
            found
        }),
        Value::Object(map) => map.iter().find_map(|(k, v)| {
            let len = path.len();
            if !path.is_empty() {
                path.push('.');
            }
            path.push_str(k);
            let found = find_marked(v, path);
            path.truncate(len);
            found
        }),
        _ => None,
    }
}

/// Parses a workspace document and checks every invariant.
pub fn load_workspace(document: &str) -> Result<Workspace, WorkspaceError> {
    let value: Value =
        serde_json::from_str(&mark_non_finite(document)).map_err(|e| WorkspaceError::Schema(e.to_string()))?;
    if let Some(path) = find_marked(&value, &mut String::new()) {
        return Err(WorkspaceError::NonFinite(path));
    }
    match value.get("version").and_then(Value::as_u64) {
        Some(WORKSPACE_VERSION) => {}
        Some(v) => return Err(WorkspaceError::UnknownVersion(v)),
        None => return Err(WorkspaceError::Schema("missing or invalid `version`".into())),
    }
    if let Some(objects) = value.get("objects").and_then(Value::as_array) {
        for (i, obj) in objects.iter().enumerate() {
            if let Ok(shape) = serde_json::from_value::<ShapePrimitive>(obj.get("shape").cloned().unwrap_or(Value::Null)) {
                if !shape.is_valid() {
                    let id = obj.get("id").and_then(Value::as_str).unwrap_or("?");
                    return Err(WorkspaceError::InvalidDimensions(format!("objects[{i}] `{id}`")));
                }
            }
        }
    }
    let ws: Workspace = serde_json::from_value(value).map_err(|e| WorkspaceError::Schema(e.to_string()))?;
    match ws.violations().into_iter().next() {
        Some(err) => Err(err),
        None => Ok(ws),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEntry {
    pub step: usize,
    /// Sphere index: joint frames first, the tool point last.
    pub link: usize,
    pub obstacle: String,
    pub penetration: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub entries: Vec<CollisionEntry>,
}

impl CollisionReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Checks sphere proxies at every joint frame and the tool point against
/// the obstacles of the workspace, at every step of `traj`.
pub fn check_collisions(
    chain: &KinematicChain<f64>,
    traj: &JointTrajectory<f64>,
    ws: &Workspace,
    link_radius: f64,
) -> Result<CollisionReport, WorkspaceError> {
    let obstacles: Vec<&SceneObject> = ws.objects.iter().filter(|o| o.role == ObjectRole::Obstacle).collect();
    let mut report = CollisionReport::default();
    if obstacles.is_empty() {
        return Ok(report);
    }
    for (step, q) in traj.configs.iter().enumerate() {
        let frames = chain
            .link_frames(q)
            .map_err(|e| WorkspaceError::InvalidTrajectory(e.to_string()))?;
        for (link, frame) in frames.iter().enumerate() {
            let center = ws.robot.placement.transform_point(&frame.translation);
            for obs in &obstacles {
                let penetration = obs.shape.sphere_penetration(&obs.pose, &center, link_radius);
                if penetration > 0.0 {
                    report.entries.push(CollisionEntry {
                        step,
                        link,
                        obstacle: obs.id.clone(),
                        penetration,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GripperOutcome {
    Grasped(String),
    Released(String),
    NothingGrasped,
    NothingToRelease,
    AlreadyHolding(String),
}

/// Grasps the nearest object within [`GRASP_DISTANCE`] of the tool point, or
/// releases the held object where the tool is. Obstacles are never touched.
pub fn apply_gripper_action(
    ws: &Workspace,
    chain: &KinematicChain<f64>,
    q: &DVector<f64>,
    action: GripperAction,
) -> Result<(Workspace, GripperOutcome), WorkspaceError> {
    let tool = ws.tool_pose(chain, q)?;
    let mut out = ws.clone();
    let outcome = match action {
        GripperAction::None => return Ok((out, GripperOutcome::NothingGrasped)),
        GripperAction::Grasp => {
            if let Some(held) = ws.attached_object() {
                GripperOutcome::AlreadyHolding(held.id.clone())
            } else {
                let nearest = out
                    .objects
                    .iter_mut()
                    .filter(|o| o.role == ObjectRole::Object)
                    .map(|o| (o.shape.signed_distance(&o.pose, &tool.translation).max(0.0), o))
                    .filter(|(d, _)| *d <= GRASP_DISTANCE)
                    .min_by(|a, b| a.0.total_cmp(&b.0));
                match nearest {
                    Some((_, obj)) => {
                        obj.attached_to_gripper = true;
                        obj.pose = tool;
                        GripperOutcome::Grasped(obj.id.clone())
                    }
                    None => GripperOutcome::NothingGrasped,
                }
            }
        }
        GripperAction::Release => match out.objects.iter_mut().find(|o| o.attached_to_gripper) {
            Some(obj) => {
                obj.attached_to_gripper = false;
                obj.pose = tool;
                GripperOutcome::Released(obj.id.clone())
            }
            None => GripperOutcome::NothingToRelease,
        },
    };
    Ok((out, outcome))
}

/// Moves the held object, if any, to the tool frame for configuration `q`.
pub fn follow_tool(ws: &mut Workspace, chain: &KinematicChain<f64>, q: &DVector<f64>) -> Result<(), WorkspaceError> {
    if ws.attached_object().is_none() {
        return Ok(());
    }
    let tool = ws.tool_pose(chain, q)?;
    if let Some(obj) = ws.objects.iter_mut().find(|o| o.attached_to_gripper) {
        obj.pose = tool;
    }
    Ok(())
}
