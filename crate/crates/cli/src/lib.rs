//! Command implementations behind the `feasicap` binary.

pub mod config;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use feasicap_core::demosim::{self, BatchSummary, DemoProfile, ReactionModel, Task};
use feasicap_core::guidance::{FeasibilityState, GuidanceConfig, GuidanceSession};
use feasicap_core::profiling::{run_profile, ProfileReport};
use feasicap_core::recording::{
    compute_stats, export_timeline, read_episode, write_episode, EpisodeError, FeasibilityStats, FramePacket,
    TimelineFormat,
};
use feasicap_core::replay::{execute, plan_episode, recorded_remap, ExecutionReport, SimulatedRobot};
use feasicap_core::robots::ready_configuration;
use feasicap_transport::{Server, ServiceAnnouncement, StreamClient, TransportError};
use nalgebra::DVector;
use thiserror::Error;

pub use config::{load_settings, Settings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Network(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Network(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Guidance(_) => CliError::Config(e.to_string()),
            TransportError::Episode(_) | TransportError::PacketCorrupt(_) => CliError::Data(e.to_string()),
            _ => CliError::Network(e.to_string()),
        }
    }
}

fn data_err(path: &Path) -> impl Fn(EpisodeError) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

/// Runs the station until Ctrl-C.
pub fn serve(settings: &Settings) -> Result<(), CliError> {
    let handle = Server::start(settings.server_config())?;
    let ann = handle.announcement();
    println!("streaming on {}  api on {}  instance {}", handle.stream_addr(), handle.http_url(), ann.instance_id);
    handle.wait_for_interrupt();
    println!("shutting down");
    handle.shutdown();
    Ok(())
}

pub struct Analysis {
    pub stats: FeasibilityStats,
    pub csv: PathBuf,
    pub svg: PathBuf,
}

/// Feasibility statistics plus CSV/SVG timelines written next to the episode (or into `out`).
pub fn analyze(episode: &Path, out: Option<&Path>) -> Result<Analysis, CliError> {
    let ep = read_episode(episode).map_err(data_err(episode))?;
    let stats = compute_stats(&ep).map_err(data_err(episode))?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| episode.parent().unwrap_or(Path::new(".")).to_path_buf());
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let stem = episode.file_stem().and_then(|s| s.to_str()).unwrap_or("episode");
    let csv = dir.join(format!("{stem}.timeline.csv"));
    let svg = dir.join(format!("{stem}.timeline.svg"));
    for (path, fmt) in [(&csv, TimelineFormat::Csv), (&svg, TimelineFormat::Svg)] {
        let text = export_timeline(&ep, fmt).map_err(data_err(episode))?;
        std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    Ok(Analysis { stats, csv, svg })
}

pub fn render_stats(s: &FeasibilityStats) -> String {
    format!(
        "frames {}\nfeasible {} ({:.1}%)\nwarning {} ({:.1}%)\ninfeasible {} ({:.1}%)\nlongest infeasible run {}",
        s.frames,
        s.feasible_frames,
        100.0 * s.feasible_ratio,
        s.warning_frames,
        100.0 * s.warning_ratio,
        s.infeasible_frames,
        100.0 * s.infeasible_ratio,
        s.longest_infeasible_run
    )
}

/// Replays an episode offline on the simulated robot, anchored at its start configuration.
pub fn replay(settings: &Settings, episode: &Path, speed_scale: f64) -> Result<ExecutionReport, CliError> {
    if !(speed_scale > 0.0 && speed_scale.is_finite()) {
        return Err(CliError::Config(format!("speed scale must be positive, got {speed_scale}")));
    }
    let ep = read_episode(episode).map_err(data_err(episode))?;
    let remap = recorded_remap(&ep).map_err(|e| CliError::Data(e.to_string()))?.unwrap_or(settings.remap);
    let q0 = match &settings.robot_initial_q {
        Some(q) => DVector::from_column_slice(q),
        None => ready_configuration(&settings.model),
    };
    let mut robot = SimulatedRobot::new((*settings.model).clone(), q0).map_err(|e| CliError::Config(e.to_string()))?;
    let plan = plan_episode(&ep, &robot.tcp(), &remap, &settings.replay_limits, speed_scale)
        .map_err(|e| CliError::Data(format!("{}: {e}", episode.display())))?;
    execute(&plan, &mut robot).map_err(|e| CliError::Data(e.to_string()))
}

pub fn render_report(r: &ExecutionReport) -> String {
    format!(
        "ticks {}/{} ({:.2} s)\nsuccess {}\ntracking error max {:.4} m mean {:.4} m\nmax orientation error {:.4} rad\nsaturated ticks {}\ninfeasible ticks {}",
        r.ticks,
        r.planned_ticks,
        r.duration,
        r.success,
        r.max_tracking_error,
        r.mean_tracking_error,
        r.max_orientation_error,
        r.saturated_ticks,
        r.infeasible_ticks.len()
    )
}

pub fn profile(settings: &Settings, frames: usize) -> Result<ProfileReport, CliError> {
    if frames == 0 {
        return Err(CliError::Config("frame count must be positive".into()));
    }
    run_profile(settings.model.clone(), settings.guidance.clone(), frames).map_err(|e| CliError::Config(e.to_string()))
}

/// Seeds as `a..b`, `a..=b`, or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Config(format!("invalid seed list {s:?} (use 0..20, 0..=19 or 1,2,3)"));
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..=") {
        (a.trim().parse().map_err(|_| bad())?..=b.trim().parse().map_err(|_| bad())?).collect()
    } else if let Some((a, b)) = s.split_once("..") {
        (a.trim().parse().map_err(|_| bad())?..b.trim().parse().map_err(|_| bad())?).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

pub fn load_profile(path: &Path) -> Result<DemoProfile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    DemoProfile::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub struct SimulateRequest<'a> {
    pub tasks: Vec<Task>,
    pub modes: Vec<bool>,
    pub seeds: Vec<u64>,
    pub profile: Option<&'a DemoProfile>,
    /// Writes `summary.json` and every closed-loop episode here.
    pub out: Option<&'a Path>,
}

/// Closed-loop demonstrations, one batch per task × guidance mode.
pub fn simulate(settings: &Settings, req: &SimulateRequest) -> Result<Vec<BatchSummary>, CliError> {
    let mut summaries = Vec::new();
    let tasks: Vec<DemoProfile> = match req.profile {
        Some(p) => vec![p.clone()],
        None => req.tasks.iter().map(|&t| DemoProfile::builtin(t, &settings.model)).collect(),
    };
    if let Some(dir) = req.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    for profile in &tasks {
        for &guided in &req.modes {
            let reaction = if guided { ReactionModel::default() } else { ReactionModel::unguided() };
            let config = GuidanceConfig {
                initial_q: profile.initial_q.clone().or_else(|| settings.guidance.initial_q.clone()),
                ..settings.guidance.clone()
            };
            let (summary, runs) =
                demosim::run_batch(profile, &reaction, &req.seeds, || GuidanceSession::new(settings.model.clone(), config.clone()))
                    .map_err(|e| CliError::Config(e.to_string()))?;
            if let Some(dir) = req.out {
                let mode = if guided { "guided" } else { "unguided" };
                for (seed, run) in req.seeds.iter().zip(&runs) {
                    let path = dir.join(format!("{}-{mode}-{seed}.{}", profile.task.as_str(), settings.episode_format.extension()));
                    write_episode(&path, &run.episode).map_err(data_err(&path))?;
                }
            }
            summaries.push(summary);
        }
    }
    if let Some(dir) = req.out {
        let path = dir.join("summary.json");
        let json = serde_json::to_string_pretty(&summaries).expect("summaries serialize");
        std::fs::write(&path, json).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    Ok(summaries)
}

pub fn render_summaries(summaries: &[BatchSummary]) -> String {
    let mut out = format!("{:<11} {:<9} {:>6} {:>22}\n", "task", "mode", "seeds", "infeasible ratio");
    for s in summaries {
        out += &format!(
            "{:<11} {:<9} {:>6} {:>14.4} ± {:.4}\n",
            s.task.as_str(),
            if s.guided { "guided" } else { "unguided" },
            s.seeds.len(),
            s.mean,
            s.sd
        );
    }
    out
}

pub struct SendSummary {
    pub frames: usize,
    pub rejected: usize,
    pub infeasible: usize,
    pub median_echo: Duration,
}

/// Streams an open-loop synthetic demonstration to a running station.
///
/// With `api` (the station's base URL) the profile's calibration and base anchor are set
/// first; with `realtime` the frames are paced at the profile's frame rate.
pub fn send(addr: &str, api: Option<&str>, profile: &DemoProfile, seed: u64, realtime: bool) -> Result<SendSummary, CliError> {
    let frames = demosim::generate(profile, seed).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(api) = api {
        let http = reqwest::blocking::Client::new();
        let api = api.trim_end_matches('/');
        for (path, body) in [
            ("session/calibration", serde_json::json!({ "cam_to_tcp": profile.calibration })),
            ("session/base_anchor", serde_json::json!({ "pose": profile.base })),
        ] {
            let resp = http
                .post(format!("{api}/{path}"))
                .json(&body)
                .send()
                .map_err(|e| CliError::Network(format!("{api}/{path}: {e}")))?;
            if !resp.status().is_success() {
                return Err(CliError::Network(format!("{api}/{path}: {}", resp.status())));
            }
        }
    }
    let mut client = StreamClient::connect(addr)?;
    let t0 = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let start = Instant::now();
    let mut echoes = Vec::with_capacity(frames.len());
    let (mut rejected, mut infeasible) = (0, 0);
    for f in &frames {
        if realtime {
            let due = Duration::from_secs_f64(f.tracker_timestamp.max(0.0));
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        let mut packet = FramePacket::from_frame(f);
        packet.wall_clock = t0 + f.tracker_timestamp;
        let sent = Instant::now();
        let ack = client.send(&packet)?;
        echoes.push(sent.elapsed());
        rejected += usize::from(ack.rejected);
        infeasible += usize::from(ack.state == FeasibilityState::Infeasible);
    }
    client.finish()?;
    echoes.sort();
    Ok(SendSummary { frames: frames.len(), rejected, infeasible, median_echo: echoes.get(echoes.len() / 2).copied().unwrap_or_default() })
}

pub fn browse(timeout: Duration, loopback: bool) -> Result<Vec<ServiceAnnouncement>, CliError> {
    Ok(feasicap_transport::browse(timeout, loopback)?)
}
