//! Core of the robot programming workbench: kinematic chains parsed from
//! URDF, weighted inverse kinematics and the interactive control modes,
//! a via-point iLQR planner driven by Gaussian keypoints, and the workspace
//! model with its file format.
//!
//! The numeric code is generic over [`Real`] (`f32` or `f64`). The aliases
//! below fix the scalar to `f64`, which is what the file formats and the
//! server use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod collision;
pub mod control;
pub mod error;
pub mod fixtures;
pub mod gaussian;
pub mod planner;
pub mod scalar;
pub mod transform;
pub mod urdf;
pub mod workspace;

pub use chain::{forward_kinematics, jacobian, JointConfig, JointKind, JointSpec, KinematicChain};
pub use control::{
    impedance_step, jog_target, nullspace_jog, pose_error, project_to_plane, solve_ik, weighted_ik_step, Axis,
    ControlMode, IkWeights, ImpedanceGains,
};
pub use gaussian::{
    allocate_keypoint_times, covariance_from_ellipsoid, precision_from_covariance, GaussianKeypoint, GripperAction,
    PrecisionMatrix,
};
pub use planner::{keypoint_errors, plan_ilqr, replan_incremental, task_path, JointTrajectory, PlanResult, PlannerParams};
pub use error::{ControlError, KinematicsError, PlannerError, WorkspaceError};
pub use scalar::Real;
pub use transform::RigidTransform;
pub use collision::ShapePrimitive;
pub use workspace::{
    apply_gripper_action, calibrate_from_marker, check_collisions, load_workspace, place_robot_manual, remove_object,
    save_workspace, upsert_object, CollisionReport, GripperOutcome, ObjectRole, RobotSetup, SceneObject, Workspace,
};
pub use urdf::{parse_urdf, parse_urdf_to_tip, to_urdf};

pub type Transform = RigidTransform<f64>;
pub type Chain = KinematicChain<f64>;
pub type Joint = JointSpec<f64>;
pub type Config = JointConfig<f64>;
pub type Weights = IkWeights<f64>;
pub type Gains = ImpedanceGains<f64>;
pub type Keypoint = GaussianKeypoint<f64>;
pub type Trajectory = JointTrajectory<f64>;
pub type Params = PlannerParams<f64>;
