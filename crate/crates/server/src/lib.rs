//! Simulated robot server. A [`Session`] owns the robot and the workspace
//! and advances an impedance-controlled joint model; [`serve`] exposes it
//! to any number of clients over TCP, one JSON message per line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod net;
pub mod protocol;
pub mod session;

pub use net::{serve, ServerConfig, ServerError, ServerHandle};
pub use protocol::{parse_client_line, ClientMessage, GripperState, Mode, Role, ServerMessage, PROTOCOL_VERSION};
pub use session::{ClientId, Envelope, Session, SessionConfig};
