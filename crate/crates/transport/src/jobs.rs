//! Replay jobs against the simulated arm; one at a time, since there is one robot.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use feasicap_core::replay::{execute_with, plan_episode, recorded_remap, ExecutionReport, FrameRemap, ReplayLimits, SimulatedRobot};
use serde::{Deserialize, Serialize};

use crate::store::EpisodeStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
    Cancelled,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed | JobStatus::Cancelled)
    }

    /// Forward moves only, plus cancellation of an unfinished job.
    pub fn can_become(self, next: JobStatus) -> bool {
        use JobStatus::*;
        matches!((self, next), (Queued, Running) | (Running, Done) | (Running, Failed) | (Queued, Failed) | (Queued | Running, Cancelled))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayJobView {
    pub job_id: String,
    pub episode_id: String,
    pub speed_scale: f64,
    pub status: JobStatus,
    /// Every status the job has held, in order.
    pub history: Vec<JobStatus>,
    pub ticks_done: usize,
    pub planned_ticks: usize,
    pub progress: f64,
    pub report: Option<ExecutionReport>,
    pub error: Option<String>,
}

impl ReplayJobView {
    fn advance(&mut self, next: JobStatus) -> bool {
        let ok = self.status.can_become(next);
        if ok {
            self.status = next;
            self.history.push(next);
        }
        ok
    }
}

pub(crate) enum StartError {
    UnknownEpisode,
    Busy(String),
}

pub(crate) enum CancelError {
    UnknownJob,
    Finished(JobStatus),
}

struct Job {
    view: ReplayJobView,
    cancel: Arc<AtomicBool>,
}

pub(crate) struct ReplaySettings {
    pub limits: ReplayLimits<f64>,
    pub remap: FrameRemap<f64>,
    /// Executor speed relative to wall time; infinity runs ticks back to back.
    pub time_scale: f64,
}

pub(crate) struct ReplayService {
    jobs: Mutex<BTreeMap<String, Job>>,
    active: Mutex<Option<String>>,
    robot: Arc<Mutex<SimulatedRobot<f64>>>,
    store: EpisodeStore,
    settings: ReplaySettings,
    next_id: std::sync::atomic::AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl ReplayService {
    pub fn new(robot: SimulatedRobot<f64>, store: EpisodeStore, settings: ReplaySettings) -> Arc<Self> {
        Arc::new(ReplayService {
            jobs: Mutex::new(BTreeMap::new()),
            active: Mutex::new(None),
            robot: Arc::new(Mutex::new(robot)),
            store,
            settings,
            next_id: 1.into(),
        })
    }

    pub fn robot_q(&self) -> Vec<f64> {
        lock(&self.robot).q().iter().copied().collect()
    }

    pub fn get(&self, job: &str) -> Option<ReplayJobView> {
        lock(&self.jobs).get(job).map(|j| j.view.clone())
    }

    pub fn start(self: &Arc<Self>, episode_id: &str, speed_scale: f64) -> Result<ReplayJobView, StartError> {
        if self.store.path(episode_id).is_none() {
            return Err(StartError::UnknownEpisode);
        }
        let mut active = lock(&self.active);
        if let Some(a) = active.as_ref() {
            if self.get(a).is_some_and(|v| !v.status.is_terminal()) {
                return Err(StartError::Busy(a.clone()));
            }
        }
        let job_id = format!("job-{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let view = ReplayJobView {
            job_id: job_id.clone(),
            episode_id: episode_id.to_string(),
            speed_scale,
            status: JobStatus::Queued,
            history: vec![JobStatus::Queued],
            ticks_done: 0,
            planned_ticks: 0,
            progress: 0.0,
            report: None,
            error: None,
        };
        let cancel = Arc::new(AtomicBool::new(false));
        lock(&self.jobs).insert(job_id.clone(), Job { view: view.clone(), cancel: cancel.clone() });
        *active = Some(job_id.clone());
        drop(active);
        let svc = self.clone();
        std::thread::Builder::new()
            .name("feasicap-replay".into())
            .spawn(move || svc.run(&job_id, cancel))
            .expect("spawn replay thread");
        Ok(view)
    }

    pub fn cancel(&self, job: &str) -> Result<ReplayJobView, CancelError> {
        let mut jobs = lock(&self.jobs);
        let j = jobs.get_mut(job).ok_or(CancelError::UnknownJob)?;
        if !j.view.advance(JobStatus::Cancelled) {
            return Err(CancelError::Finished(j.view.status));
        }
        j.cancel.store(true, Ordering::Relaxed);
        Ok(j.view.clone())
    }

    fn update(&self, job: &str, f: impl FnOnce(&mut ReplayJobView)) {
        if let Some(j) = lock(&self.jobs).get_mut(job) {
            f(&mut j.view);
        }
    }

    fn run(&self, job: &str, cancel: Arc<AtomicBool>) {
        let mut started = false;
        self.update(job, |v| started = v.advance(JobStatus::Running));
        if !started {
            return;
        }
        let Some(view) = self.get(job) else { return };
        let episode = match self.store.read(&view.episode_id) {
            Ok(Some(ep)) => ep,
            Ok(None) => return self.fail(job, "episode disappeared".into()),
            Err(e) => return self.fail(job, e.to_string()),
        };
        let remap = match recorded_remap(&episode) {
            Ok(r) => r.unwrap_or(self.settings.remap),
            Err(e) => return self.fail(job, e.to_string()),
        };
        let mut robot = lock(&self.robot);
        let plan = match plan_episode(&episode, &robot.tcp(), &remap, &self.settings.limits, view.speed_scale) {
            Ok(p) => p,
            Err(e) => return self.fail(job, e.to_string()),
        };
        let planned = plan.len();
        self.update(job, |v| v.planned_ticks = planned);
        let tick = Duration::from_secs_f64(
            if self.settings.time_scale.is_finite() { self.settings.limits.tick / self.settings.time_scale } else { 0.0 },
        );
        let t0 = Instant::now();
        let result = execute_with(&plan, &mut robot, |t| {
            let done = t.tick + 1;
            self.update(job, |v| {
                v.ticks_done = done;
                v.progress = done as f64 / planned.max(1) as f64;
            });
            if !tick.is_zero() {
                let due = t0 + tick * done as u32;
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    std::thread::sleep(wait);
                }
            }
            !cancel.load(Ordering::Relaxed)
        });
        drop(robot);
        match result {
            Ok(report) => self.update(job, |v| {
                if planned == 0 {
                    v.progress = 1.0;
                }
                v.report = Some(report);
                v.advance(JobStatus::Done);
            }),
            Err(e) => self.fail(job, e.to_string()),
        }
    }

    fn fail(&self, job: &str, error: String) {
        self.update(job, |v| {
            if v.advance(JobStatus::Failed) {
                v.error = Some(error);
            }
        });
    }
}
