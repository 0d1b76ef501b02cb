//! Client side of `robench replay`.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::Path;
use std::time::{Duration, Instant};

use robench_core::save_workspace;
use robench_server::{ClientMessage, ServerMessage};

use crate::{fail, read_workspace, Failure, Outcome};

const UNREACHABLE: u8 = 2;
const EXECUTION_FAILED: u8 = 3;

struct Connection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    deadline: Instant,
}

impl Connection {
    fn send(&mut self, msg: &ClientMessage) -> Outcome {
        writeln!(self.writer, "{}", msg.to_line()).map_err(|e| Failure(UNREACHABLE, format!("connection lost: {e}")))
    }

    fn recv(&mut self) -> Result<ServerMessage, Failure> {
        loop {
            let left = self.deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(Failure(EXECUTION_FAILED, "timed out".into()));
            }
            self.reader.get_ref().set_read_timeout(Some(left)).map_err(fail)?;
            let mut line = String::new();
            match self.reader.read_line(&mut line) {
                Ok(0) => return Err(Failure(UNREACHABLE, "server closed the connection".into())),
                Ok(_) => match serde_json::from_str::<ServerMessage>(&line) {
                    Ok(msg) => return Ok(msg),
                    Err(e) => log::warn!("ignoring unreadable line: {e}"),
                },
                Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                    return Err(Failure(EXECUTION_FAILED, "timed out".into()))
                }
                Err(e) => return Err(Failure(UNREACHABLE, format!("connection lost: {e}"))),
            }
        }
    }

    /// Waits for the reply to `id`; execution done and safety stops seen on
    /// the way are returned as failures.
    fn expect_ack(&mut self, id: u64) -> Outcome {
        loop {
            match self.recv()? {
                ServerMessage::Ack { reference, .. } if reference == id => return Ok(()),
                ServerMessage::Error {
                    reference: Some(r),
                    code,
                    text,
                } if r == id => return Err(Failure(EXECUTION_FAILED, format!("{code}: {text}"))),
                ServerMessage::Error { reference: None, code, text } if code == "safety_stop" => {
                    return Err(Failure(EXECUTION_FAILED, format!("{code}: {text}")))
                }
                _ => {}
            }
        }
    }
}

pub fn run(path: &Path, name: &str, address: &str, timeout: f64) -> Outcome {
    let ws = read_workspace(path)?;
    if !ws.trajectories.contains_key(name) {
        return Err(fail(format!("no trajectory `{name}`")));
    }
    let unreachable = |e: std::io::Error| Failure(UNREACHABLE, format!("cannot reach {address}: {e}"));
    let addr = address
        .to_socket_addrs()
        .map_err(unreachable)?
        .next()
        .ok_or_else(|| Failure(UNREACHABLE, format!("cannot resolve {address}")))?;
    let stream = TcpStream::connect_timeout(&addr, Duration::from_secs(5)).map_err(unreachable)?;
    stream.set_nodelay(true).map_err(fail)?;
    let mut conn = Connection {
        reader: BufReader::new(stream.try_clone().map_err(fail)?),
        writer: stream,
        deadline: Instant::now() + Duration::from_secs_f64(timeout.max(0.0)),
    };

    conn.send(&ClientMessage::Hello {
        id: 1,
        client_name: "robench replay".into(),
    })?;
    conn.expect_ack(1)?;
    conn.send(&ClientMessage::SetWorkspace {
        id: 2,
        document: save_workspace(&ws),
    })?;
    conn.expect_ack(2)?;
    conn.send(&ClientMessage::ExecuteTrajectory {
        id: 3,
        name: Some(name.to_string()),
        trajectory: None,
    })?;
    conn.expect_ack(3)?;
    let started = Instant::now();
    loop {
        match conn.recv()? {
            ServerMessage::ExecutionDone { success: true, .. } => {
                println!("done in {:.2} s", started.elapsed().as_secs_f64());
                return Ok(());
            }
            ServerMessage::ExecutionDone { success: false, .. } => {
                return Err(Failure(EXECUTION_FAILED, "execution failed".into()))
            }
            ServerMessage::Error { code, text, .. } => return Err(Failure(EXECUTION_FAILED, format!("{code}: {text}"))),
            _ => {}
        }
    }
}
