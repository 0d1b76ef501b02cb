//! Wire messages. Each message is one JSON object on its own line; the
//! `type` field selects the variant.

use robench_core::{ControlMode, GripperAction, Trajectory};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        id: u64,
        client_name: String,
    },
    GetWorkspace {
        id: u64,
    },
    SetWorkspace {
        id: u64,
        document: String,
    },
    SetJointTarget {
        id: u64,
        q: Vec<f64>,
    },
    Jog {
        id: u64,
        mode: ControlMode,
        payload: Vec<f64>,
    },
    /// Runs a stored trajectory by `name`, or an inline `trajectory`.
    ExecuteTrajectory {
        id: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trajectory: Option<Trajectory>,
    },
    Gripper {
        id: u64,
        action: GripperAction,
    },
    Stop {
        id: u64,
    },
    Reset {
        id: u64,
    },
}

impl ClientMessage {
    pub fn id(&self) -> u64 {
        match *self {
            ClientMessage::Hello { id, .. }
            | ClientMessage::GetWorkspace { id }
            | ClientMessage::SetWorkspace { id, .. }
            | ClientMessage::SetJointTarget { id, .. }
            | ClientMessage::Jog { id, .. }
            | ClientMessage::ExecuteTrajectory { id, .. }
            | ClientMessage::Gripper { id, .. }
            | ClientMessage::Stop { id }
            | ClientMessage::Reset { id } => id,
        }
    }

    /// Messages that move the robot or change what it holds.
    pub fn is_motion(&self) -> bool {
        !matches!(
            self,
            ClientMessage::Hello { .. } | ClientMessage::GetWorkspace { .. } | ClientMessage::Reset { .. }
        )
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Idle,
    Jogging,
    Executing,
    SafetyStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperState {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Operator,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome {
        robot_name: String,
        dof: usize,
        protocol_version: u32,
        role: Role,
    },
    State {
        t: f64,
        q: Vec<f64>,
        dq: Vec<f64>,
        mode: Mode,
        gripper: GripperState,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        attached_object: Option<String>,
    },
    Ack {
        #[serde(rename = "ref")]
        reference: u64,
        /// Workspace document, only in replies to `get_workspace`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        document: Option<String>,
    },
    Error {
        #[serde(rename = "ref")]
        reference: Option<u64>,
        code: String,
        text: String,
    },
    ExecutionDone {
        name: String,
        success: bool,
    },
}

impl ServerMessage {
    pub fn ack(reference: u64) -> Self {
        ServerMessage::Ack {
            reference,
            document: None,
        }
    }

    pub fn error(reference: Option<u64>, code: &str, text: impl Into<String>) -> Self {
        ServerMessage::Error {
            reference,
            code: code.into(),
            text: text.into(),
        }
    }

    /// The client message id this answers, for acks and errors.
    pub fn reference(&self) -> Option<u64> {
        match self {
            ServerMessage::Ack { reference, .. } => Some(*reference),
            ServerMessage::Error { reference, .. } => *reference,
            _ => None,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }
}

/// Parses one line. On failure returns the message id, if one could be
/// read, and a description.
pub fn parse_client_line(line: &str) -> Result<ClientMessage, (Option<u64>, String)> {
    let value: Value = serde_json::from_str(line).map_err(|e| (None, e.to_string()))?;
    let id = value.get("id").and_then(Value::as_u64);
    serde_json::from_value(value).map_err(|e| (id, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use robench_core::Axis;

    #[test]
    fn field_names() {
        let msg = ClientMessage::Jog {
            id: 4,
            mode: ControlMode::TranslateAxis { axis: Axis::Z },
            payload: vec![0.01],
        };
        assert_eq!(
            msg.to_line(),
            r#"{"type":"jog","id":4,"mode":{"kind":"translate_axis","axis":"z"},"payload":[0.01]}"#
        );
        assert_eq!(ServerMessage::ack(4).to_line(), r#"{"type":"ack","ref":4}"#);
        assert_eq!(
            ServerMessage::error(None, "stopped", "x").to_line(),
            r#"{"type":"error","ref":null,"code":"stopped","text":"x"}"#
        );
        let hello = parse_client_line(r#"{"type":"hello","id":1,"client_name":"ui"}"#).unwrap();
        assert_eq!(
            hello,
            ClientMessage::Hello {
                id: 1,
                client_name: "ui".into()
            }
        );
    }

    #[test]
    fn bad_lines_keep_the_id() {
        assert_eq!(parse_client_line(r#"{"type":"warp","id":9}"#).unwrap_err().0, Some(9));
        assert_eq!(parse_client_line(r#"{"type":"set_joint_target","id":3}"#).unwrap_err().0, Some(3));
        assert_eq!(parse_client_line("{").unwrap_err().0, None);
    }
}
