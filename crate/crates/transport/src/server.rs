use std::io::{Read, Write};
use std::net::{IpAddr, Ipv4Addr, Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use feasicap_core::guidance::GuidanceConfig;
use feasicap_core::kinematics::RobotModel;
use feasicap_core::recording::{EpisodeFormat, PacketDecoder};
use feasicap_core::replay::{FrameRemap, ReplayLimits, SimulatedRobot};
use feasicap_core::robots::ready_configuration;
use feasicap_core::Pose;
use nalgebra::DVector;
use tokio::sync::{oneshot, watch};

use crate::discovery::{Announcer, Beacon, ServiceAnnouncement, SERVICE_TYPE};
use crate::http::{router, AppState};
use crate::jobs::{ReplayService, ReplaySettings};
use crate::store::EpisodeStore;
use crate::stream::{decode_hello, encode_hello, HELLO_BUSY, HELLO_LEN, HELLO_OK, HELLO_VERSION_MISMATCH, PROTOCOL_VERSION};
use crate::worker::{Msg, SessionStatus, WorkerHandle, WorkerSettings};
use crate::TransportError;

#[derive(Debug, Clone)]
pub struct BeaconConfig {
    pub target: SocketAddr,
    pub interval: Duration,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: IpAddr,
    /// 0 picks a free port.
    pub stream_port: u16,
    pub http_port: u16,
    pub data_dir: PathBuf,
    pub episode_format: EpisodeFormat,
    pub model: Arc<RobotModel<f64>>,
    pub guidance: GuidanceConfig,
    pub calibration: Pose<f64>,
    pub base_anchor: Pose<f64>,
    /// Tracker→robot axes, stored with each episode for replay.
    pub remap: FrameRemap<f64>,
    pub replay_limits: ReplayLimits<f64>,
    /// Replay speed relative to wall time; `f64::INFINITY` runs ticks back to back.
    pub replay_time_scale: f64,
    /// Simulated arm's starting posture; the model's ready posture when absent.
    pub robot_initial_q: Option<Vec<f64>>,
    pub feed_max_hz: f64,
    pub instance_id: String,
    pub mdns: bool,
    pub beacon: Option<BeaconConfig>,
}

impl ServerConfig {
    pub fn new(model: Arc<RobotModel<f64>>, data_dir: impl Into<PathBuf>) -> Self {
        ServerConfig {
            bind: IpAddr::V4(Ipv4Addr::UNSPECIFIED),
            stream_port: 7420,
            http_port: 7421,
            data_dir: data_dir.into(),
            episode_format: EpisodeFormat::Mcap,
            model,
            guidance: GuidanceConfig::default(),
            calibration: Pose::identity(),
            base_anchor: Pose::identity(),
            remap: FrameRemap::tracker_to_robot(),
            replay_limits: ReplayLimits::default(),
            replay_time_scale: 1.0,
            robot_initial_q: None,
            feed_max_hz: 60.0,
            instance_id: "feasicap".into(),
            mdns: true,
            beacon: None,
        }
    }

    /// Loopback-only, ephemeral ports, no announcement: for harnesses.
    pub fn local(model: Arc<RobotModel<f64>>, data_dir: impl Into<PathBuf>) -> Self {
        ServerConfig {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            stream_port: 0,
            http_port: 0,
            mdns: false,
            ..Self::new(model, data_dir)
        }
    }
}

pub struct Server;

impl Server {
    /// Binds both ports, starts the guidance worker, the stream acceptor and the HTTP service,
    /// then announces. Returns once everything is listening.
    pub fn start(config: ServerConfig) -> Result<ServerHandle, TransportError> {
        if !(config.feed_max_hz > 0.0) || !(config.replay_time_scale > 0.0) {
            return Err(TransportError::Guidance("feed rate and replay time scale must be positive".into()));
        }
        let store = EpisodeStore::open(&config.data_dir)?;
        let stream_listener =
            TcpListener::bind((config.bind, config.stream_port)).map_err(|e| TransportError::from_bind(e, config.stream_port))?;
        let http_listener =
            TcpListener::bind((config.bind, config.http_port)).map_err(|e| TransportError::from_bind(e, config.http_port))?;
        http_listener.set_nonblocking(true)?;
        let stream_addr = stream_listener.local_addr()?;
        let http_addr = http_listener.local_addr()?;

        let q0 = match &config.robot_initial_q {
            Some(q) => DVector::from_column_slice(q),
            None => ready_configuration(&config.model),
        };
        let robot = SimulatedRobot::new((*config.model).clone(), q0).map_err(|e| TransportError::Guidance(e.to_string()))?;
        let replay = ReplayService::new(
            robot,
            store.clone(),
            ReplaySettings { limits: config.replay_limits, remap: config.remap, time_scale: config.replay_time_scale },
        );

        let worker = WorkerHandle::spawn(WorkerSettings {
            model: config.model.clone(),
            guidance: config.guidance.clone(),
            calibration: config.calibration,
            base_anchor: config.base_anchor,
            remap: config.remap,
            data_dir: config.data_dir.clone(),
            format: config.episode_format,
        })
        .map_err(TransportError::Guidance)?;

        let busy = Arc::new(AtomicBool::new(false));
        let stop = Arc::new(AtomicBool::new(false));
        let acceptor = {
            let (tx, busy, stop) = (worker.tx.clone(), busy.clone(), stop.clone());
            std::thread::Builder::new()
                .name("feasicap-stream".into())
                .spawn(move || accept_loop(stream_listener, tx, busy, stop))?
        };

        let host = if config.bind.is_unspecified() { local_ip().unwrap_or(config.bind) } else { config.bind };
        let announcement = ServiceAnnouncement {
            service_name: SERVICE_TYPE.trim_end_matches('.').to_string(),
            instance_id: config.instance_id.clone(),
            host,
            stream_port: stream_addr.port(),
            http_port: http_addr.port(),
            protocol_version: PROTOCOL_VERSION,
        };
        let state = AppState {
            store,
            replay,
            worker: Arc::new(Mutex::new(worker.tx.clone())),
            status: worker.status.clone(),
            feed: worker.feed.clone(),
            busy,
            feed_period: Duration::from_secs_f64(1.0 / config.feed_max_hz),
            announcement: Arc::new(Mutex::new(Some(announcement.clone()))),
        };
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .thread_name("feasicap-http")
            .enable_all()
            .build()?;
        let (shutdown_tx, shutdown_rx) = watch::channel(false);
        let app = router(state);
        let listener = {
            let _guard = runtime.enter();
            tokio::net::TcpListener::from_std(http_listener)?
        };
        let (ready_tx, ready_rx) = oneshot::channel();
        runtime.spawn(async move {
            let _ = ready_tx.send(());
            let mut rx = shutdown_rx;
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async move {
                    let _ = rx.wait_for(|v| *v).await;
                })
                .await;
        });
        let _ = ready_rx.blocking_recv();

        let announcer = if config.mdns { Some(Announcer::announce(&announcement)?) } else { None };
        let beacon = match &config.beacon {
            Some(b) => Some(Beacon::start(&announcement, b.target, b.interval)?),
            None => None,
        };
        Ok(ServerHandle {
            stream_addr,
            http_addr,
            announcement,
            status: worker.status.clone(),
            worker: Some(worker),
            runtime: Some(runtime),
            shutdown: shutdown_tx,
            stop,
            acceptor: Some(acceptor),
            _announcer: announcer,
            _beacon: beacon,
        })
    }
}

/// Running station; stops everything on [`ServerHandle::shutdown`] or drop.
pub struct ServerHandle {
    stream_addr: SocketAddr,
    http_addr: SocketAddr,
    announcement: ServiceAnnouncement,
    status: Arc<Mutex<SessionStatus>>,
    worker: Option<WorkerHandle>,
    runtime: Option<tokio::runtime::Runtime>,
    shutdown: watch::Sender<bool>,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
    _announcer: Option<Announcer>,
    _beacon: Option<Beacon>,
}

impl ServerHandle {
    pub fn stream_addr(&self) -> SocketAddr {
        self.stream_addr
    }

    pub fn http_addr(&self) -> SocketAddr {
        self.http_addr
    }

    pub fn http_url(&self) -> String {
        format!("http://{}", self.http_addr)
    }

    pub fn announcement(&self) -> &ServiceAnnouncement {
        &self.announcement
    }

    pub fn session_status(&self) -> SessionStatus {
        self.status.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    /// Blocks until Ctrl-C.
    pub fn wait_for_interrupt(&self) {
        if let Some(rt) = &self.runtime {
            let _ = rt.block_on(tokio::signal::ctrl_c());
        }
    }

    pub fn shutdown(mut self) {
        self.stop_all();
    }

    fn stop_all(&mut self) {
        self.stop.store(true, Ordering::Release);
        // wake the blocking accept
        let _ = TcpStream::connect_timeout(&wake_addr(self.stream_addr), Duration::from_millis(200));
        if let Some(t) = self.acceptor.take() {
            let _ = t.join();
        }
        // finishing the worker closes the recording and ends feed streams
        if let Some(mut w) = self.worker.take() {
            w.shutdown();
        }
        let _ = self.shutdown.send(true);
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_timeout(Duration::from_secs(2));
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_all();
    }
}

fn wake_addr(a: SocketAddr) -> SocketAddr {
    if a.ip().is_unspecified() {
        SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), a.port())
    } else {
        a
    }
}

/// Address of the interface that routes outward; no packets are sent.
fn local_ip() -> Option<IpAddr> {
    let s = std::net::UdpSocket::bind((Ipv4Addr::UNSPECIFIED, 0)).ok()?;
    s.connect((Ipv4Addr::new(192, 0, 2, 1), 9)).ok()?;
    s.local_addr().ok().map(|a| a.ip())
}

fn accept_loop(listener: TcpListener, tx: std::sync::mpsc::Sender<Msg>, busy: Arc<AtomicBool>, stop: Arc<AtomicBool>) {
    for conn in listener.incoming() {
        if stop.load(Ordering::Acquire) {
            break;
        }
        let Ok(mut conn) = conn else { continue };
        if busy.swap(true, Ordering::AcqRel) {
            let _ = conn.write_all(&encode_hello(PROTOCOL_VERSION, HELLO_BUSY));
            let _ = conn.shutdown(Shutdown::Both);
            continue;
        }
        let (tx, flag) = (tx.clone(), busy.clone());
        let spawned = std::thread::Builder::new().name("feasicap-conn".into()).spawn(move || {
            if let Some(error) = serve_connection(conn, &tx) {
                tracing::warn!("stream session ended: {error}");
            }
            flag.store(false, Ordering::Release);
        });
        if spawned.is_err() {
            busy.store(false, Ordering::Release);
        }
    }
}

/// Runs one stream session; returns the reason if it ended abnormally.
fn serve_connection(mut conn: TcpStream, tx: &std::sync::mpsc::Sender<Msg>) -> Option<String> {
    let _ = conn.set_nodelay(true);
    let _ = conn.set_read_timeout(Some(Duration::from_secs(5)));
    let mut hello = [0; HELLO_LEN];
    if conn.read_exact(&mut hello).is_err() {
        return Some("no stream hello".into());
    }
    match decode_hello(&hello) {
        Ok((v, _)) if v == PROTOCOL_VERSION => {}
        Ok((v, _)) => {
            let _ = conn.write_all(&encode_hello(PROTOCOL_VERSION, HELLO_VERSION_MISMATCH));
            return Some(format!("VersionMismatch: client speaks {v}"));
        }
        Err(e) => return Some(e.to_string()),
    }
    if conn.write_all(&encode_hello(PROTOCOL_VERSION, HELLO_OK)).is_err() {
        return Some("client left during hello".into());
    }
    let _ = conn.set_read_timeout(None);
    let source = conn.peer_addr().map_or_else(|_| "tcp".to_string(), |a| a.to_string());
    if tx.send(Msg::Open { source }).is_err() {
        return Some("guidance worker stopped".into());
    }
    let error = pump(&mut conn, tx);
    if error.is_some() {
        // reset rather than a clean close
        let _ = conn.shutdown(Shutdown::Both);
    }
    let _ = tx.send(Msg::Close { error: error.clone() });
    error
}

fn pump(conn: &mut TcpStream, tx: &std::sync::mpsc::Sender<Msg>) -> Option<String> {
    let mut decoder = PacketDecoder::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = match conn.read(&mut buf) {
            Ok(0) => return None,
            Ok(n) => n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Some(format!("read failed: {e}")),
        };
        decoder.push(&buf[..n]);
        loop {
            match decoder.next_packet() {
                Ok(Some(packet)) => {
                    let (reply, rx) = oneshot::channel();
                    if tx.send(Msg::Frame { packet, reply }).is_err() {
                        return Some("guidance worker stopped".into());
                    }
                    let Ok(ack) = rx.blocking_recv() else { return Some("guidance worker stopped".into()) };
                    if conn.write_all(&ack.encode()).is_err() {
                        return None;
                    }
                }
                Ok(None) => break,
                Err(e) => return Some(format!("PacketCorrupt: {e}")),
            }
        }
    }
}
