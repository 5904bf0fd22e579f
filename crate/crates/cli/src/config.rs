//! Station configuration: one TOML document, every field optional.
//!
//! Both syntax errors and out-of-range values are reported as `file:line:column: message`,
//! pointing at the offending value.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use feasicap_core::guidance::{GuidanceConfig, RateSmoothing};
use feasicap_core::kinematics::{load_urdf, IkParams, NullspaceBias, RobotModel};
use feasicap_core::recording::EpisodeFormat;
use feasicap_core::replay::{FrameRemap, ReplayLimits};
use feasicap_core::robots::arm7;
use feasicap_core::{Pose, PoseRecord};
use feasicap_transport::{BeaconConfig, ServerConfig};
use nalgebra::{DVector, Matrix3};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    urdf: Option<PathBuf>,
    data_dir: Option<PathBuf>,
    episode_format: Option<String>,
    #[serde(default)]
    network: Network,
    #[serde(default)]
    guidance: Guidance,
    #[serde(default)]
    ik: Ik,
    calibration: Option<PoseRecord>,
    base_anchor: Option<PoseRecord>,
    #[serde(default)]
    replay: Replay,
    #[serde(default)]
    feed: Feed,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Network {
    bind: Option<String>,
    stream_port: Option<u16>,
    http_port: Option<u16>,
    instance_id: Option<String>,
    mdns: Option<bool>,
    beacon_port: Option<u16>,
    beacon_interval_ms: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Guidance {
    tau_r: Option<f64>,
    tau_w: Option<f64>,
    rate_window: Option<usize>,
    rate_smoothing: Option<RateSmoothing>,
    debounce_frames: Option<usize>,
    margin: Option<f64>,
    jump_threshold: Option<f64>,
    initial_q: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Ik {
    damping: Option<f64>,
    max_iterations: Option<usize>,
    residual_threshold: Option<f64>,
    position_tolerance_m: Option<f64>,
    orientation_tolerance_deg: Option<f64>,
    orientation_weight: Option<f64>,
    rest_posture: Option<Vec<f64>>,
    rest_gain: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Replay {
    max_translation_speed: Option<f64>,
    max_rotation_speed: Option<f64>,
    rate_hz: Option<f64>,
    time_scale: Option<f64>,
    remap: Option<[[f64; 3]; 3]>,
    initial_q: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Feed {
    max_hz: Option<f64>,
}

/// Fully resolved settings shared by all commands.
#[derive(Debug, Clone)]
pub struct Settings {
    pub model: Arc<RobotModel<f64>>,
    pub guidance: GuidanceConfig,
    pub data_dir: PathBuf,
    pub episode_format: EpisodeFormat,
    pub bind: IpAddr,
    pub stream_port: u16,
    pub http_port: u16,
    pub instance_id: String,
    pub mdns: bool,
    pub beacon: Option<BeaconConfig>,
    pub calibration: Pose<f64>,
    pub base_anchor: Pose<f64>,
    pub remap: FrameRemap<f64>,
    pub replay_limits: ReplayLimits<f64>,
    pub replay_time_scale: f64,
    pub robot_initial_q: Option<Vec<f64>>,
    pub feed_max_hz: f64,
}

impl Settings {
    /// Defaults with the bundled 7-joint arm.
    pub fn defaults() -> Self {
        let model = Arc::new(arm7());
        let s = ServerConfig::new(model.clone(), "episodes");
        Settings {
            model,
            guidance: s.guidance,
            data_dir: s.data_dir,
            episode_format: s.episode_format,
            bind: s.bind,
            stream_port: s.stream_port,
            http_port: s.http_port,
            instance_id: s.instance_id,
            mdns: s.mdns,
            beacon: None,
            calibration: s.calibration,
            base_anchor: s.base_anchor,
            remap: s.remap,
            replay_limits: s.replay_limits,
            replay_time_scale: s.replay_time_scale,
            robot_initial_q: None,
            feed_max_hz: s.feed_max_hz,
        }
    }

    pub fn server_config(&self) -> ServerConfig {
        ServerConfig {
            bind: self.bind,
            stream_port: self.stream_port,
            http_port: self.http_port,
            data_dir: self.data_dir.clone(),
            episode_format: self.episode_format,
            model: self.model.clone(),
            guidance: self.guidance.clone(),
            calibration: self.calibration,
            base_anchor: self.base_anchor,
            remap: self.remap,
            replay_limits: self.replay_limits,
            replay_time_scale: self.replay_time_scale,
            robot_initial_q: self.robot_initial_q.clone(),
            feed_max_hz: self.feed_max_hz,
            instance_id: self.instance_id.clone(),
            mdns: self.mdns,
            beacon: self.beacon.clone(),
        }
    }
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

struct Doc<'a> {
    path: &'a Path,
    src: &'a str,
    tree: toml_edit::ImDocument<&'a str>,
}

impl Doc<'_> {
    /// Error located at the value under the dotted `key`.
    fn err(&self, key: &str, msg: impl std::fmt::Display) -> CliError {
        let mut item = Some(self.tree.as_item());
        for k in key.split('.') {
            item = item.and_then(|i| i.get(k));
        }
        let span = item.and_then(|i| i.span());
        match span {
            Some(s) => {
                let (l, c) = line_col(self.src, s.start);
                CliError::Config(format!("{}:{l}:{c}: {key}: {msg}", self.path.display()))
            }
            None => CliError::Config(format!("{}: {key}: {msg}", self.path.display())),
        }
    }
}

/// Loads `config` (when given) over the defaults; `urdf` overrides the file's robot.
pub fn load_settings(config: Option<&Path>, urdf: Option<&Path>) -> Result<Settings, CliError> {
    let mut s = Settings::defaults();
    let (file, doc_src) = match config {
        Some(path) => {
            let src = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            let file: FileConfig = toml::from_str(&src).map_err(|e| {
                let at = e.span().map(|sp| line_col(&src, sp.start));
                match at {
                    Some((l, c)) => CliError::Config(format!("{}:{l}:{c}: {}", path.display(), e.message().trim())),
                    None => CliError::Config(format!("{}: {}", path.display(), e.message().trim())),
                }
            })?;
            (file, Some((path.to_path_buf(), src)))
        }
        None => (FileConfig::default(), None),
    };
    let base_dir = config.and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default();
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };

    let empty = String::new();
    let (path, src) = doc_src.as_ref().map_or((Path::new("<defaults>"), &empty), |(p, s)| (p.as_path(), s));
    let tree = toml_edit::ImDocument::parse(src.as_str()).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let doc = Doc { path, src, tree };

    let urdf_path = match (urdf, &file.urdf) {
        (Some(p), _) => Some(p.to_path_buf()),
        (None, Some(p)) => Some(resolve(p)),
        _ => None,
    };
    if let Some(p) = urdf_path {
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::Config(format!("cannot read URDF {}: {e}", p.display())))?;
        let model: RobotModel<f64> =
            load_urdf(&text).map_err(|e| CliError::Config(format!("invalid URDF {}: {e}", p.display())))?;
        s.model = Arc::new(model);
    }
    let dof = s.model.dof;

    if let Some(d) = &file.data_dir {
        s.data_dir = resolve(d);
    }
    if let Some(f) = &file.episode_format {
        s.episode_format = match f.as_str() {
            "mcap" => EpisodeFormat::Mcap,
            "ndjson" => EpisodeFormat::Ndjson,
            _ => return Err(doc.err("episode_format", "expected \"mcap\" or \"ndjson\"")),
        };
    }

    let n = &file.network;
    if let Some(b) = &n.bind {
        s.bind = b.parse().map_err(|_| doc.err("network.bind", format!("{b:?} is not an IP address")))?;
    }
    s.stream_port = n.stream_port.unwrap_or(s.stream_port);
    s.http_port = n.http_port.unwrap_or(s.http_port);
    if s.stream_port != 0 && s.stream_port == s.http_port {
        return Err(doc.err("network.http_port", "stream and HTTP ports must differ"));
    }
    if let Some(id) = &n.instance_id {
        if id.is_empty() || id.contains('.') {
            return Err(doc.err("network.instance_id", "must be a non-empty label without dots"));
        }
        s.instance_id = id.clone();
    }
    s.mdns = n.mdns.unwrap_or(s.mdns);
    if let Some(port) = n.beacon_port {
        let ms = n.beacon_interval_ms.unwrap_or(1000);
        if ms == 0 {
            return Err(doc.err("network.beacon_interval_ms", "must be positive"));
        }
        s.beacon = Some(BeaconConfig {
            target: SocketAddr::new(IpAddr::V4(Ipv4Addr::BROADCAST), port),
            interval: Duration::from_millis(ms),
        });
    }

    let g = &file.guidance;
    let gc = &mut s.guidance;
    check(&doc, "guidance.tau_r", g.tau_r, |v| v > 0.0 && v < 1.0, "must lie in (0, 1)")?;
    check(&doc, "guidance.tau_w", g.tau_w, |v| v >= 0.0, "must be non-negative")?;
    check(&doc, "guidance.margin", g.margin, |v| v >= 0.0, "must be non-negative")?;
    check(&doc, "guidance.jump_threshold", g.jump_threshold, |v| v > 0.0, "must be positive")?;
    if g.rate_window == Some(0) {
        return Err(doc.err("guidance.rate_window", "must be at least 1"));
    }
    if g.debounce_frames.is_some_and(|d| !(1..=10).contains(&d)) {
        return Err(doc.err("guidance.debounce_frames", "must lie in 1..=10"));
    }
    gc.tau_r = g.tau_r.unwrap_or(gc.tau_r);
    gc.tau_w = g.tau_w.unwrap_or(gc.tau_w);
    gc.margin = g.margin.unwrap_or(gc.margin);
    gc.jump_threshold = g.jump_threshold.unwrap_or(gc.jump_threshold);
    gc.rate_window = g.rate_window.unwrap_or(gc.rate_window);
    gc.rate_smoothing = g.rate_smoothing.unwrap_or(gc.rate_smoothing);
    gc.debounce_frames = g.debounce_frames.unwrap_or(gc.debounce_frames);
    if let Some(q) = &g.initial_q {
        check_q(&doc, "guidance.initial_q", q, &s.model)?;
        s.guidance.initial_q = Some(q.clone());
    }

    let k = &file.ik;
    let ik: &mut IkParams<f64> = &mut s.guidance.ik_params;
    for (key, v) in [
        ("ik.damping", k.damping),
        ("ik.residual_threshold", k.residual_threshold),
        ("ik.position_tolerance_m", k.position_tolerance_m),
        ("ik.orientation_tolerance_deg", k.orientation_tolerance_deg),
        ("ik.orientation_weight", k.orientation_weight),
    ] {
        check(&doc, key, v, |v| v > 0.0, "must be positive")?;
    }
    if k.max_iterations == Some(0) {
        return Err(doc.err("ik.max_iterations", "must be positive"));
    }
    ik.damping = k.damping.unwrap_or(ik.damping);
    ik.max_iterations = k.max_iterations.unwrap_or(ik.max_iterations);
    ik.residual_threshold = k.residual_threshold.unwrap_or(ik.residual_threshold);
    ik.position_tolerance = k.position_tolerance_m.unwrap_or(ik.position_tolerance);
    ik.orientation_tolerance = k.orientation_tolerance_deg.map_or(ik.orientation_tolerance, f64::to_radians);
    ik.orientation_weight = k.orientation_weight.unwrap_or(ik.orientation_weight);
    check(&doc, "ik.rest_gain", k.rest_gain, |v| v >= 0.0, "must be non-negative")?;
    if let Some(rest) = &k.rest_posture {
        if rest.len() != dof {
            return Err(doc.err("ik.rest_posture", format!("expected {dof} joint values, got {}", rest.len())));
        }
        s.guidance.ik_params.nullspace =
            Some(NullspaceBias { rest: DVector::from_column_slice(rest), gain: k.rest_gain.unwrap_or(0.1) });
    } else if k.rest_gain.is_some() {
        return Err(doc.err("ik.rest_gain", "needs ik.rest_posture"));
    }

    if let Some(p) = &file.calibration {
        s.calibration = pose(&doc, "calibration", p)?;
    }
    if let Some(p) = &file.base_anchor {
        s.base_anchor = pose(&doc, "base_anchor", p)?;
    }

    let r = &file.replay;
    check(&doc, "replay.max_translation_speed", r.max_translation_speed, |v| v > 0.0 && v.is_finite(), "must be positive")?;
    check(&doc, "replay.max_rotation_speed", r.max_rotation_speed, |v| v > 0.0 && v.is_finite(), "must be positive")?;
    check(&doc, "replay.rate_hz", r.rate_hz, |v| v > 0.0 && v.is_finite(), "must be positive")?;
    check(&doc, "replay.time_scale", r.time_scale, |v| v > 0.0, "must be positive (inf runs ticks back to back)")?;
    let l = &mut s.replay_limits;
    l.max_translation_speed = r.max_translation_speed.unwrap_or(l.max_translation_speed);
    l.max_rotation_speed = r.max_rotation_speed.unwrap_or(l.max_rotation_speed);
    l.tick = r.rate_hz.map_or(l.tick, |hz| 1.0 / hz);
    s.replay_time_scale = r.time_scale.unwrap_or(s.replay_time_scale);
    if let Some(m) = r.remap {
        let m = Matrix3::from_fn(|i, j| m[i][j]);
        s.remap = FrameRemap::from_matrix(&m).map_err(|e| doc.err("replay.remap", e))?;
    }
    if let Some(q) = &r.initial_q {
        check_q(&doc, "replay.initial_q", q, &s.model)?;
        s.robot_initial_q = Some(q.clone());
    }

    check(&doc, "feed.max_hz", file.feed.max_hz, |v| v > 0.0 && v.is_finite(), "must be positive")?;
    s.feed_max_hz = file.feed.max_hz.unwrap_or(s.feed_max_hz);

    s.guidance.validate().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(s)
}

fn check(doc: &Doc, key: &str, v: Option<f64>, ok: impl Fn(f64) -> bool, msg: &str) -> Result<(), CliError> {
    match v {
        Some(x) if !ok(x) => Err(doc.err(key, format!("{x} {msg}"))),
        _ => Ok(()),
    }
}

fn check_q(doc: &Doc, key: &str, q: &[f64], model: &RobotModel<f64>) -> Result<(), CliError> {
    if q.len() != model.dof {
        return Err(doc.err(key, format!("expected {} joint values, got {}", model.dof, q.len())));
    }
    if !model.within_limits(&DVector::from_column_slice(q)) {
        return Err(doc.err(key, "outside the joint limits"));
    }
    Ok(())
}

fn pose(doc: &Doc, key: &str, p: &PoseRecord) -> Result<Pose<f64>, CliError> {
    let n = p.quaternion.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !p.translation.iter().all(|x| x.is_finite()) {
        return Err(doc.err(&format!("{key}.translation"), "must be finite"));
    }
    if !((n - 1.0).abs() < 1e-6) {
        return Err(doc.err(&format!("{key}.quaternion"), format!("must be a unit quaternion [x, y, z, w] (norm {n})")));
    }
    Ok(Pose::from(p))
}
