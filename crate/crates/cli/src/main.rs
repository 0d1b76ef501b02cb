use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use robench_core::workspace::{load_robot, DEFAULT_LINK_RADIUS};
use robench_core::{check_collisions, keypoint_errors, load_workspace, plan_ilqr, save_workspace, Params, Workspace};
use robench_server::{serve, ServerConfig};

mod replay;

#[derive(Parser)]
#[command(name = "robench", version, about = "Robot programming workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a trajectory through the workspace keypoints and store it in the file.
    Plan(PlanArgs),
    /// Execute a stored trajectory on a running server.
    Replay {
        workspace: PathBuf,
        trajectory: String,
        #[arg(long, env = "ROBENCH_ADDRESS", default_value = "127.0.0.1:7878")]
        address: String,
        /// Give up after this many wall-clock seconds.
        #[arg(long, default_value_t = 300.0)]
        timeout: f64,
    },
    /// Check a workspace file.
    Validate { workspace: PathBuf },
    /// Write a stored trajectory as CSV.
    Export {
        workspace: PathBuf,
        trajectory: String,
        /// Output path; standard output when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the simulated robot server.
    Serve(ServeArgs),
    /// Print the tool pose for a joint configuration.
    Fk {
        /// `builtin:<name>` or a URDF path.
        urdf: String,
        #[arg(allow_negative_numbers = true)]
        q: Vec<f64>,
    },
}

#[derive(Args)]
struct PlanArgs {
    workspace: PathBuf,
    /// Name of the stored trajectory.
    #[arg(long, default_value = "plan")]
    out: String,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    control_cost: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    cost_tolerance: Option<f64>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "ROBENCH_ADDRESS", default_value = "127.0.0.1:7878")]
    address: String,
    #[arg(long, default_value_t = 500.0)]
    tick_rate: f64,
    #[arg(long, default_value_t = 50.0)]
    state_rate: f64,
    #[arg(long, default_value = "builtin:arm7")]
    urdf: String,
    #[arg(long)]
    workspace: Option<PathBuf>,
    /// Simulated seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
}

/// Exit status with the message printed on standard error.
struct Failure(u8, String);

fn fail(msg: impl ToString) -> Failure {
    Failure(1, msg.to_string())
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan(args) => plan(args),
        Command::Replay {
            workspace,
            trajectory,
            address,
            timeout,
        } => replay::run(&workspace, &trajectory, &address, timeout),
        Command::Validate { workspace } => validate(&workspace),
        Command::Export {
            workspace,
            trajectory,
            csv,
        } => export(&workspace, &trajectory, csv.as_deref()),
        Command::Serve(args) => run_server(args),
        Command::Fk { urdf, q } => fk(&urdf, &q),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

pub(crate) fn read_workspace(path: &Path) -> Result<Workspace, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| fail(format!("cannot read {}: {e}", path.display())))?;
    load_workspace(&text).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn plan(args: PlanArgs) -> Outcome {
    let ws = read_workspace(&args.workspace)?;
    let chain = ws.load_chain(args.workspace.parent()).map_err(fail)?;
    let keypoints = ws.keypoints_in_base();
    if keypoints.is_empty() {
        return Err(fail("no keypoints"));
    }
    let mut params = Params::default();
    if let Some(v) = args.horizon {
        params.horizon = v;
    }
    if let Some(v) = args.dt {
        params.dt = v;
    }
    if let Some(v) = args.control_cost {
        params.control_cost = v;
    }
    if let Some(v) = args.max_iterations {
        params.max_iterations = v;
    }
    if let Some(v) = args.cost_tolerance {
        params.cost_tolerance = v;
    }
    let result = plan_ilqr(&chain, &ws.home(), &keypoints, &params).map_err(fail)?;
    println!("cost {:.9e} after {} iterations", result.cost, result.iterations);
    for (id, position, _) in keypoint_errors(&chain, &result.trajectory, &keypoints).map_err(fail)? {
        println!("{id} {position:.9e}");
    }
    let collisions = check_collisions(&chain, &result.trajectory, &ws, DEFAULT_LINK_RADIUS).map_err(fail)?;
    for c in &collisions.entries {
        log::warn!("step {}: link {} penetrates `{}` by {:.4} m", c.step, c.link, c.obstacle, c.penetration);
    }
    let mut out = ws.clone();
    out.trajectories.insert(args.out, result.trajectory);
    write_atomically(&args.workspace, &save_workspace(&out))
}

fn write_atomically(path: &Path, contents: &str) -> Outcome {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(contents.as_bytes()).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

fn validate(path: &Path) -> Outcome {
    let ws = read_workspace(path)?;
    let chain = ws.load_chain(path.parent()).map_err(fail)?;
    let mut problems = Vec::new();
    for (name, traj) in &ws.trajectories {
        if let Err(e) = traj.validate(Some(&chain)) {
            problems.push(format!("trajectory `{name}`: {e}"));
            continue;
        }
        let report = check_collisions(&chain, traj, &ws, DEFAULT_LINK_RADIUS).map_err(fail)?;
        if let Some(c) = report.entries.first() {
            problems.push(format!(
                "trajectory `{name}`: {} colliding steps, first at step {} with `{}`",
                report.entries.len(),
                c.step,
                c.obstacle
            ));
        }
    }
    if problems.is_empty() {
        println!(
            "ok: {} objects, {} keypoints, {} trajectories",
            ws.objects.len(),
            ws.keypoints.len(),
            ws.trajectories.len()
        );
        Ok(())
    } else {
        for p in &problems {
            println!("{p}");
        }
        Err(fail(format!("{} problems", problems.len())))
    }
}

fn export(path: &Path, name: &str, csv: Option<&Path>) -> Outcome {
    let ws = read_workspace(path)?;
    let traj = ws
        .trajectories
        .get(name)
        .ok_or_else(|| fail(format!("no trajectory `{name}`")))?;
    match csv {
        Some(out) => std::fs::write(out, traj.to_csv()).map_err(fail),
        None => {
            print!("{}", traj.to_csv());
            Ok(())
        }
    }
}

fn run_server(args: ServeArgs) -> Outcome {
    let config = ServerConfig {
        address: args.address,
        tick_rate: args.tick_rate,
        state_rate: args.state_rate,
        urdf: args.urdf,
        workspace: args.workspace,
        speed: args.speed,
        ..ServerConfig::default()
    };
    let server = serve(config).map_err(fail)?;
    println!("listening on {}", server.local_addr());
    let stop = server.stop_flag();
    ctrlc::set_handler(move || stop.store(true, std::sync::atomic::Ordering::SeqCst)).map_err(fail)?;
    server.join();
    Ok(())
}

fn fk(urdf: &str, q: &[f64]) -> Outcome {
    let chain = load_robot(urdf, None).map_err(fail)?;
    let q = DVector::from_column_slice(q);
    let pose = chain.forward_kinematics(&q).map_err(fail)?;
    let mut wxyz = pose.wxyz();
    if wxyz[0] < 0.0 {
        wxyz = wxyz.map(|v| -v);
    }
    let t: Vec<String> = pose.translation.iter().map(|&v| significant(v)).collect();
    let r: Vec<String> = wxyz.iter().map(|&v| trim(significant(v))).collect();
    println!("{} | {}", t.join(" "), r.join(" "));
    Ok(())
}

/// Ten significant digits; values below 1e-12 print as `0`.
fn significant(v: f64) -> String {
    if v.abs() < 1e-12 {
        return "0".into();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (9 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
