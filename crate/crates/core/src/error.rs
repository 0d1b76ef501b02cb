use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("no unique base to tip path: {0}")]
    Branching(String),
    #[error("missing joint axis on non-fixed joint `{0}`")]
    MissingAxis(String),
    #[error("joint `{0}` axis is not unit length")]
    InvalidAxis(String),
    #[error("invalid limits on joint `{0}`")]
    InvalidLimits(String),
    #[error("unsupported joint type `{kind}` on joint `{joint}`")]
    UnsupportedJoint { joint: String, kind: String },
    #[error("dimension mismatch: expected {expected} joint values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("invalid weights: joint weighting matrix is not symmetric positive definite")]
    InvalidWeights,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no convergence after {iterations} iterations (best residual {best_residual})")]
    NoConvergence {
        iterations: usize,
        best_residual: f64,
        best_q: Vec<f64>,
    },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlannerError {
    #[error("semi-axes must be positive")]
    NonPositiveAxis,
    #[error("covariance is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("no keypoints")]
    NoKeypoints,
    #[error("K > T: {keypoints} keypoints do not fit in a horizon of {horizon} steps")]
    TooManyKeypoints { keypoints: usize, horizon: usize },
    #[error("invalid planner parameters: {0}")]
    InvalidParams(String),
    #[error("diverged at iteration {iteration}: cost is not finite")]
    Diverged {
        iteration: usize,
        /// Last iterate whose cost was finite.
        last_finite: Vec<Vec<f64>>,
    },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkspaceError {
    #[error("unsupported workspace version {0}")]
    UnknownVersion(u64),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("non-finite number at {0}")]
    NonFinite(String),
    #[error("invalid dimensions for `{0}`")]
    InvalidDimensions(String),
    #[error("no such object `{0}`")]
    NoSuchObject(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("trajectory `{trajectory}` references unknown keypoint `{keypoint}`")]
    UnknownKeypoint { trajectory: String, keypoint: String },
    #[error("invalid trajectory `{0}`")]
    InvalidTrajectory(String),
}
