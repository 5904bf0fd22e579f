use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use feasicap_cli::{CliError, SimulateRequest};
use feasicap_core::demosim::{DemoProfile, Task};

/// Demonstration-feasibility station: live guidance, recording, analysis and replay.
#[derive(Parser)]
#[command(name = "feasicap", version)]
struct Cli {
    /// Station configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Robot description; overrides the config file.
    #[arg(long, global = true)]
    urdf: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Accept a tracker stream, give live guidance, record episodes, serve the API.
    Serve,
    /// Feasibility statistics and timeline exports for a recorded episode.
    Analyze {
        #[arg(long)]
        episode: PathBuf,
        /// Output directory for the timeline files (default: next to the episode).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay an episode on the simulated robot.
    Replay {
        #[arg(long)]
        episode: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        speed_scale: f64,
        /// Write the execution report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the per-frame pipeline over synthetic frames.
    Profile {
        #[arg(long, default_value_t = 2880)]
        frames: usize,
    },
    /// Closed-loop simulated demonstrations, guided against unguided.
    Simulate {
        /// pick_place or toss (default: both).
        #[arg(long)]
        task: Option<String>,
        /// Only guided (or with =false only unguided) runs; default both.
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        guided: Option<bool>,
        #[arg(long, default_value = "0..20")]
        seeds: String,
        /// Demonstration profile as JSON instead of a built-in task.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Directory for summary.json and the simulated episodes.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stream a synthetic demonstration to a running station.
    Send {
        #[arg(long, default_value = "127.0.0.1:7420")]
        to: String,
        /// Station API used to set calibration and base anchor first.
        #[arg(long, default_value = "http://127.0.0.1:7421")]
        api: String,
        /// Keep the station's current calibration and base anchor.
        #[arg(long)]
        no_setup: bool,
        #[arg(long, default_value = "pick_place")]
        task: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Send as fast as acknowledgements allow instead of at the frame rate.
        #[arg(long)]
        fast: bool,
    },
    /// List stations announced on the local network.
    Browse {
        #[arg(long, default_value_t = 1000)]
        timeout_ms: u64,
        /// Also look on the loopback interface.
        #[arg(long)]
        loopback: bool,
    },
}

fn parse_task(s: &str) -> Result<Task, CliError> {
    Task::parse(s).ok_or_else(|| CliError::Config(format!("unknown task {s:?} (pick_place or toss)")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let settings = || feasicap_cli::load_settings(cli.config.as_deref(), cli.urdf.as_deref());
    match cli.command {
        Command::Serve => feasicap_cli::serve(&settings()?),
        Command::Analyze { episode, out } => {
            let a = feasicap_cli::analyze(&episode, out.as_deref())?;
            println!("{}", feasicap_cli::render_stats(&a.stats));
            println!("timeline: {} {}", a.csv.display(), a.svg.display());
            Ok(())
        }
        Command::Replay { episode, speed_scale, out } => {
            let report = feasicap_cli::replay(&settings()?, &episode, speed_scale)?;
            println!("{}", feasicap_cli::render_report(&report));
            if let Some(path) = out {
                let json = serde_json::to_string_pretty(&report).expect("report serializes");
                std::fs::write(&path, json).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            }
            Ok(())
        }
        Command::Profile { frames } => {
            let report = feasicap_cli::profile(&settings()?, frames)?;
            println!("{}", report.render());
            Ok(())
        }
        Command::Simulate { task, guided, seeds, profile, out } => {
            let settings = settings()?;
            let profile: Option<DemoProfile> = profile.as_deref().map(feasicap_cli::load_profile).transpose()?;
            let tasks = match &task {
                Some(t) => vec![parse_task(t)?],
                None => vec![Task::PickPlace, Task::Toss],
            };
            let modes = match guided {
                Some(g) => vec![g],
                None => vec![true, false],
            };
            let req = SimulateRequest { tasks, modes, seeds: feasicap_cli::parse_seeds(&seeds)?, profile: profile.as_ref(), out: out.as_deref() };
            let summaries = feasicap_cli::simulate(&settings, &req)?;
            print!("{}", feasicap_cli::render_summaries(&summaries));
            Ok(())
        }
        Command::Send { to, api, no_setup, task, seed, fast } => {
            let settings = settings()?;
            let profile = DemoProfile::builtin(parse_task(&task)?, &settings.model);
            let s = feasicap_cli::send(&to, (!no_setup).then_some(api.as_str()), &profile, seed, !fast)?;
            println!(
                "sent {} frames: {} infeasible, {} rejected, median echo {:.2} ms",
                s.frames,
                s.infeasible,
                s.rejected,
                s.median_echo.as_secs_f64() * 1e3
            );
            Ok(())
        }
        Command::Browse { timeout_ms, loopback } => {
            let found = feasicap_cli::browse(Duration::from_millis(timeout_ms), loopback)?;
            if found.is_empty() {
                println!("no stations found");
            }
            for a in found {
                println!("{}  {}  stream {}  http {}  proto {}", a.instance_id, a.host, a.stream_port, a.http_port, a.protocol_version);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
