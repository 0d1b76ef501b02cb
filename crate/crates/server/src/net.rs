//! TCP front end. One thread owns the [`Session`] and runs the simulation
//! loop; every connection gets a reader thread feeding it and a writer
//! thread draining its outgoing lines.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use robench_core::workspace::{default_home, load_robot};
use robench_core::{load_workspace, RobotSetup, Transform, Workspace, WorkspaceError};

use crate::session::{ClientId, Envelope, Session, SessionConfig};

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot bind {address}: {source}")]
    Bind { address: String, source: io::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub address: String,
    /// Simulation ticks per simulated second.
    pub tick_rate: f64,
    /// State broadcasts per simulated second.
    pub state_rate: f64,
    /// Robot description: `builtin:<name>` or a URDF path.
    pub urdf: String,
    /// Workspace document loaded at start.
    pub workspace: Option<PathBuf>,
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
    pub stiffness: f64,
    pub damping: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        let session = SessionConfig::default();
        Self {
            address: "127.0.0.1:7878".into(),
            tick_rate: session.tick_rate,
            state_rate: 50.0,
            urdf: "builtin:arm7".into(),
            workspace: None,
            speed: 1.0,
            stiffness: session.stiffness,
            damping: session.damping,
        }
    }
}

impl ServerConfig {
    /// Builds the session this configuration describes.
    pub fn session(&self) -> Result<Session, ServerError> {
        for (name, v) in [
            ("tick rate", self.tick_rate),
            ("state rate", self.state_rate),
            ("speed", self.speed),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ServerError::Config(format!("{name} must be positive")));
            }
        }
        if self.state_rate > self.tick_rate {
            return Err(ServerError::Config("state rate cannot exceed tick rate".into()));
        }
        let (workspace, base_dir) = match &self.workspace {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ServerError::Config(format!("cannot read {}: {e}", path.display())))?;
                (load_workspace(&text)?, path.parent().map(|p| p.to_path_buf()))
            }
            None => {
                let chain = load_robot(&self.urdf, None)?;
                let ws = Workspace::new(RobotSetup {
                    urdf: self.urdf.clone(),
                    placement: Transform::identity(),
                    tool_offset: None,
                    home: default_home(&self.urdf, &chain),
                });
                (ws, None)
            }
        };
        let mut chain = load_robot(&self.urdf, None)?;
        if let Some(t) = workspace.robot.tool_offset {
            chain = chain.with_tool_offset(t);
        }
        let config = SessionConfig {
            tick_rate: self.tick_rate,
            stiffness: self.stiffness,
            damping: self.damping,
            ..SessionConfig::default()
        };
        Session::new(chain, workspace, base_dir, config).map_err(ServerError::Config)
    }
}

enum Event {
    Connect(ClientId, Sender<String>),
    Line(ClientId, String),
    Disconnect(ClientId),
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Asks the server to stop; clients get a final state, then the connection closes.
    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    pub fn join(self) {
        for t in self.threads {
            let _ = t.join();
        }
    }
}

/// Binds `config.address` and starts serving in background threads.
pub fn serve(config: ServerConfig) -> Result<ServerHandle, ServerError> {
    let session = config.session()?;
    let listener = TcpListener::bind(&config.address).map_err(|source| ServerError::Bind {
        address: config.address.clone(),
        source,
    })?;
    let addr = listener.local_addr().map_err(|source| ServerError::Bind {
        address: config.address.clone(),
        source,
    })?;
    listener.set_nonblocking(true).map_err(|source| ServerError::Bind {
        address: config.address.clone(),
        source,
    })?;
    log::info!("serving {} on {addr}", session.chain().name);
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();
    let accept = {
        let stop = stop.clone();
        thread::spawn(move || accept_loop(listener, tx, stop))
    };
    let sim = {
        let stop = stop.clone();
        thread::spawn(move || sim_loop(session, rx, stop, &config))
    };
    Ok(ServerHandle {
        addr,
        stop,
        threads: vec![accept, sim],
    })
}

fn accept_loop(listener: TcpListener, events: Sender<Event>, stop: Arc<AtomicBool>) {
    let mut next_id: ClientId = 1;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = next_id;
                next_id += 1;
                log::info!("client {id} connected from {peer}");
                if let Err(e) = start_client(id, stream, &events) {
                    log::warn!("client {id}: {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(50));
            }
        }
    }
}

fn start_client(id: ClientId, stream: TcpStream, events: &Sender<Event>) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let reader = stream.try_clone()?;
    let (out_tx, out_rx) = mpsc::channel::<String>();
    if events.send(Event::Connect(id, out_tx)).is_err() {
        return Ok(());
    }
    thread::spawn(move || write_loop(stream, out_rx));
    let events = events.clone();
    thread::spawn(move || {
        for line in BufReader::new(reader).lines() {
            let Ok(line) = line else { break };
            if line.trim().is_empty() {
                continue;
            }
            if events.send(Event::Line(id, line)).is_err() {
                return;
            }
        }
        let _ = events.send(Event::Disconnect(id));
    });
    Ok(())
}

fn write_loop(mut stream: TcpStream, lines: Receiver<String>) {
    for line in lines {
        if stream.write_all(line.as_bytes()).and_then(|_| stream.write_all(b"\n")).is_err() {
            break;
        }
    }
    let _ = stream.flush();
    let _ = stream.shutdown(Shutdown::Both);
}

fn deliver(clients: &BTreeMap<ClientId, Sender<String>>, envelopes: Vec<Envelope>) {
    for env in envelopes {
        match env {
            Envelope::To(id, msg) => {
                if let Some(tx) = clients.get(&id) {
                    let _ = tx.send(msg.to_line());
                }
            }
            Envelope::All(msg) => {
                let line = msg.to_line();
                for tx in clients.values() {
                    let _ = tx.send(line.clone());
                }
            }
        }
    }
}

fn sim_loop(mut session: Session, events: Receiver<Event>, stop: Arc<AtomicBool>, config: &ServerConfig) {
    let period = Duration::from_secs_f64(1.0 / (config.tick_rate * config.speed));
    let state_every = ((config.tick_rate / config.state_rate).round() as u64).max(1);
    let mut clients: BTreeMap<ClientId, Sender<String>> = BTreeMap::new();
    let start = Instant::now();
    let mut ticks: u64 = 0;
    loop {
        while let Ok(event) = events.try_recv() {
            match event {
                Event::Connect(id, tx) => {
                    clients.insert(id, tx);
                }
                Event::Line(id, line) => {
                    let out = session.handle_line(id, &line);
                    deliver(&clients, out);
                }
                Event::Disconnect(id) => {
                    log::info!("client {id} disconnected");
                    clients.remove(&id);
                    session.disconnect(id);
                }
            }
        }
        if stop.load(Ordering::SeqCst) {
            deliver(&clients, vec![Envelope::All(session.state())]);
            break;
        }
        let out = session.tick();
        deliver(&clients, out);
        ticks += 1;
        if ticks.is_multiple_of(state_every) {
            deliver(&clients, vec![Envelope::All(session.state())]);
        }
        let deadline = start + period.mul_f64(ticks as f64);
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        }
    }
    log::info!("server stopped after {ticks} ticks");
}
