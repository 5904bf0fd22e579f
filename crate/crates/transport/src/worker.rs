//! The single owner of the guidance session.
//!
//! Stream connections submit frames and HTTP handlers submit control commands through one
//! queue, so everything touching the session is serialized. Each processed frame is acked,
//! published to the feed (latest value only) and handed to the recorder thread over an
//! unbounded channel.

use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};

use feasicap_core::guidance::{
    Calibration, FeasibilityState, FrameRecord, GuidanceConfig, GuidanceOutput, GuidanceSession,
};
use feasicap_core::kinematics::RobotModel;
use feasicap_core::recording::{EpisodeFormat, EpisodeWriter, FramePacket};
use feasicap_core::replay::{remap_metadata, FrameRemap, CALIBRATION_KEY, REMAP_KEY};
use feasicap_core::{Pose, PoseRecord};
use serde::{Deserialize, Serialize};
use tokio::sync::{oneshot, watch};

use crate::stream::Ack;

pub(crate) type Feed = watch::Receiver<Option<Arc<GuidanceOutput>>>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub active: bool,
    pub source: Option<String>,
    /// Episode being recorded, or the last one finished.
    pub episode_id: Option<String>,
    pub frames: u64,
    pub rejected_frames: u64,
    pub state: Option<FeasibilityState>,
    pub clutch_engaged: bool,
    pub episodes_recorded: u64,
    /// Why the last session ended abnormally.
    pub last_error: Option<String>,
    pub calibration: PoseRecord,
    pub base_anchor: PoseRecord,
}

pub(crate) enum Control {
    Clutch(bool),
    BaseAnchor(Pose<f64>),
    Calibration(Pose<f64>),
}

pub(crate) enum Msg {
    Open { source: String },
    Frame { packet: FramePacket, reply: oneshot::Sender<Ack> },
    Close { error: Option<String> },
    Control { cmd: Control, reply: oneshot::Sender<Result<SessionStatus, String>> },
    Shutdown,
}

pub(crate) struct WorkerSettings {
    pub model: Arc<RobotModel<f64>>,
    pub guidance: GuidanceConfig,
    pub calibration: Pose<f64>,
    pub base_anchor: Pose<f64>,
    pub remap: FrameRemap<f64>,
    pub data_dir: PathBuf,
    pub format: EpisodeFormat,
}

pub(crate) struct WorkerHandle {
    pub tx: Sender<Msg>,
    pub status: Arc<Mutex<SessionStatus>>,
    pub feed: Feed,
    thread: Option<JoinHandle<()>>,
}

impl WorkerHandle {
    pub fn spawn(settings: WorkerSettings) -> Result<Self, String> {
        // fail at startup rather than on the first connection
        GuidanceSession::new(settings.model.clone(), settings.guidance.clone()).map_err(|e| e.to_string())?;
        let (tx, rx) = mpsc::channel();
        let (feed_tx, feed) = watch::channel(None);
        let status = Arc::new(Mutex::new(SessionStatus {
            calibration: PoseRecord::from(&settings.calibration),
            base_anchor: PoseRecord::from(&settings.base_anchor),
            ..Default::default()
        }));
        let st = status.clone();
        let thread = std::thread::Builder::new()
            .name("feasicap-guidance".into())
            .spawn(move || Worker { settings, status: st, feed: feed_tx, live: None, clutch: true, episode_seq: 0 }.run(rx))
            .map_err(|e| e.to_string())?;
        Ok(WorkerHandle { tx, status, feed, thread: Some(thread) })
    }

    pub fn shutdown(&mut self) {
        let _ = self.tx.send(Msg::Shutdown);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for WorkerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

struct Live {
    session: GuidanceSession,
    recorder: Recorder,
}

struct Worker {
    settings: WorkerSettings,
    status: Arc<Mutex<SessionStatus>>,
    feed: watch::Sender<Option<Arc<GuidanceOutput>>>,
    live: Option<Live>,
    clutch: bool,
    episode_seq: u64,
}

impl Worker {
    fn run(mut self, rx: Receiver<Msg>) {
        while let Ok(msg) = rx.recv() {
            match msg {
                Msg::Open { source } => self.open(source),
                Msg::Frame { packet, reply } => {
                    let _ = reply.send(self.frame(packet));
                }
                Msg::Close { error } => self.close(error),
                Msg::Control { cmd, reply } => {
                    let _ = reply.send(self.control(cmd));
                }
                Msg::Shutdown => break,
            }
        }
        self.close(None);
    }

    fn status(&self) -> std::sync::MutexGuard<'_, SessionStatus> {
        self.status.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn open(&mut self, source: String) {
        self.close(Some("superseded by a new session".into()));
        let s = &self.settings;
        let mut session = match GuidanceSession::new(s.model.clone(), s.guidance.clone()) {
            Ok(x) => x,
            Err(e) => {
                self.status().last_error = Some(e.to_string());
                return;
            }
        };
        session.set_calibration(Calibration { cam_to_tcp: s.calibration });
        session.set_base_anchor(&s.base_anchor);
        session.set_clutch(self.clutch);

        self.episode_seq += 1;
        let id = format!("ep-{}-{}", unix_millis(), self.episode_seq);
        let mut meta = vec![
            ("robot".to_string(), s.model.name.clone()),
            ("source".to_string(), source.clone()),
            (REMAP_KEY.to_string(), remap_metadata(&s.remap)),
            (
                CALIBRATION_KEY.to_string(),
                serde_json::to_string(&PoseRecord::from(&s.calibration)).expect("pose record serializes"),
            ),
        ];
        meta.push(("base_anchor".into(), serde_json::to_string(&PoseRecord::from(&s.base_anchor)).expect("serializes")));
        let recorder = Recorder::start(&s.data_dir, &id, s.format, meta);
        let mut st = self.status();
        st.active = true;
        st.source = Some(source);
        st.episode_id = Some(id);
        st.frames = 0;
        st.rejected_frames = 0;
        st.state = None;
        st.last_error = None;
        drop(st);
        self.live = Some(Live { session, recorder });
    }

    fn frame(&mut self, packet: FramePacket) -> Ack {
        let Some(live) = self.live.as_mut() else {
            return rejected(FeasibilityState::Infeasible, 0);
        };
        let result = packet
            .to_tracker_frame()
            .map_err(|e| e.to_string())
            .and_then(|f| live.session.process_frame(&f).map_err(|e| e.to_string()));
        match result {
            Ok(out) => {
                let record = out.record();
                live.recorder.frame(out.frame_index, packet, record);
                let ack = Ack { frame_index: out.frame_index, state: out.state, raw_state: out.raw_state, rejected: false };
                let mut st = self.status.lock().unwrap_or_else(|p| p.into_inner());
                st.frames += 1;
                st.state = Some(out.state);
                drop(st);
                self.feed.send_replace(Some(Arc::new(out)));
                ack
            }
            Err(e) => {
                let n = live.session.frames_processed();
                let last = self.status().state.unwrap_or(FeasibilityState::Infeasible);
                let mut st = self.status();
                st.rejected_frames += 1;
                st.last_error = Some(e);
                rejected(last, n)
            }
        }
    }

    fn close(&mut self, error: Option<String>) {
        let Some(live) = self.live.take() else { return };
        let finished = live.recorder.finish();
        let mut st = self.status();
        st.active = false;
        match finished {
            Ok(()) => st.episodes_recorded += 1,
            Err(e) => st.last_error = Some(format!("recording failed: {e}")),
        }
        if error.is_some() {
            st.last_error = error;
        }
    }

    fn control(&mut self, cmd: Control) -> Result<SessionStatus, String> {
        match cmd {
            Control::Clutch(engaged) => {
                self.clutch = engaged;
                if let Some(l) = self.live.as_mut() {
                    l.session.set_clutch(engaged);
                }
                self.status().clutch_engaged = engaged;
            }
            Control::BaseAnchor(p) => {
                self.settings.base_anchor = p;
                if let Some(l) = self.live.as_mut() {
                    l.session.set_base_anchor(&p);
                }
                self.status().base_anchor = PoseRecord::from(&p);
            }
            Control::Calibration(p) => {
                // the recorded calibration must hold for the whole episode
                if self.live.is_some() {
                    return Err("calibration cannot change while an episode is recording".into());
                }
                self.settings.calibration = p;
                self.status().calibration = PoseRecord::from(&p);
            }
        }
        Ok(self.status().clone())
    }
}

fn rejected(state: FeasibilityState, frame_index: u64) -> Ack {
    Ack { frame_index, state, raw_state: state, rejected: true }
}

pub(crate) fn unix_millis() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

enum RecMsg {
    Frame(u64, FramePacket, FrameRecord),
    Finish(oneshot::Sender<Result<(), String>>),
}

/// Episode writer on its own thread; the guidance path only pushes onto an unbounded queue.
struct Recorder {
    tx: Sender<RecMsg>,
}

impl Recorder {
    fn start(dir: &std::path::Path, id: &str, format: EpisodeFormat, meta: Vec<(String, String)>) -> Self {
        let (tx, rx) = mpsc::channel::<RecMsg>();
        let partial = dir.join(format!(".recording-{id}.{}", format.extension()));
        let target = dir.join(format!("{id}.{}", format.extension()));
        let id = id.to_string();
        std::thread::Builder::new()
            .name("feasicap-recorder".into())
            .spawn(move || {
                let mut writer = EpisodeWriter::create(&partial, id).map_err(|e| e.to_string());
                if let Ok(w) = writer.as_mut() {
                    for (k, v) in meta {
                        w.set_metadata(k, v);
                    }
                }
                let mut failure: Option<String> = writer.as_ref().err().cloned();
                while let Ok(msg) = rx.recv() {
                    match msg {
                        RecMsg::Frame(index, packet, record) => {
                            if let (Ok(w), None) = (writer.as_mut(), &failure) {
                                if let Err(e) = w.write_frame(index, &packet).and_then(|_| w.write_feasibility(&record)) {
                                    failure = Some(e.to_string());
                                }
                            }
                        }
                        RecMsg::Finish(reply) => {
                            let result = match (writer, failure) {
                                (_, Some(e)) | (Err(e), _) => Err(e),
                                (Ok(w), None) => w
                                    .finish()
                                    .map_err(|e| e.to_string())
                                    .and_then(|_| std::fs::rename(&partial, &target).map_err(|e| e.to_string())),
                            };
                            let _ = reply.send(result);
                            return;
                        }
                    }
                }
            })
            .expect("spawn recorder thread");
        Recorder { tx }
    }

    fn frame(&self, index: u64, packet: FramePacket, record: FrameRecord) {
        let _ = self.tx.send(RecMsg::Frame(index, packet, record));
    }

    /// Flushes everything queued and moves the file into place.
    fn finish(self) -> Result<(), String> {
        let (tx, rx) = oneshot::channel();
        self.tx.send(RecMsg::Finish(tx)).map_err(|_| "recorder stopped".to_string())?;
        rx.blocking_recv().map_err(|_| "recorder stopped".to_string())?
    }
}
