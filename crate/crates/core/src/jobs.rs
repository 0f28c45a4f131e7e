//! Background jobs over adapters and pipeline steps, with persisted
//! records and session-scoped output artifacts.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::adapters::{remote, AdapterRegistry, Capability};
use crate::media::MediaStore;
use crate::project::{Asset, Project};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JobError {
    #[error("unresolved input {name}: {reference}")]
    UnresolvedInput { name: String, reference: String },
    #[error("unknown job kind {0}")]
    UnknownKind(String),
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("job {0} already finished")]
    AlreadyTerminal(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("job store: {0}")]
    Io(String),
}

impl JobError {
    pub fn code(&self) -> &'static str {
        match self {
            JobError::UnresolvedInput { .. } => "UnresolvedInput",
            JobError::UnknownKind(_) => "UnknownKind",
            JobError::UnknownJob(_) => "UnknownJob",
            JobError::AlreadyTerminal(_) => "AlreadyTerminal",
            JobError::UnknownSession(_) => "UnknownSession",
            JobError::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, JobError>;

fn io_err(e: impl std::fmt::Display) -> JobError {
    JobError::Io(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobState {
    Pending,
    Running,
    Done,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed | JobState::Cancelled)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    /// Assigned on submit.
    #[serde(default)]
    pub id: String,
    /// A capability name or a registered step name.
    pub kind: String,
    #[serde(default)]
    pub params: Value,
    /// Input name to asset id or store uri.
    #[serde(default)]
    pub input_artifact_refs: BTreeMap<String, String>,
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub state: JobState,
    pub progress: f64,
    pub output_artifact_refs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_message: Option<String>,
}

/// A named output of a finished job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobArtifact {
    pub name: String,
    pub asset: Asset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub spec: JobSpec,
    pub inputs: BTreeMap<String, Asset>,
    pub status: JobStatus,
    pub artifacts: Vec<JobArtifact>,
    #[serde(default)]
    pub metadata: Value,
    /// Times the job was started, counting restarts after a crash.
    pub attempts: u32,
    #[serde(default)]
    pub executions: u32,
}

/// What a job handler sees.
pub struct JobContext<'a> {
    pub store: &'a MediaStore,
    pub registry: &'a AdapterRegistry,
    pub spec: &'a JobSpec,
    pub inputs: &'a BTreeMap<String, Asset>,
    progress: &'a dyn Fn(f64),
    cancelled: &'a AtomicBool,
}

impl JobContext<'_> {
    pub fn report_progress(&self, p: f64) {
        (self.progress)(p)
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancelled.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Default)]
pub struct JobOutput {
    pub artifacts: Vec<(String, Asset)>,
    pub metadata: Value,
}

pub type JobHandler = Arc<dyn Fn(&JobContext) -> std::result::Result<JobOutput, String> + Send + Sync>;

#[derive(Debug, Clone)]
pub struct JobConfig {
    pub workers: usize,
    /// Directory for job records.
    pub state_dir: PathBuf,
}

impl JobConfig {
    pub fn new(state_dir: impl Into<PathBuf>) -> Self {
        JobConfig { workers: 2, state_dir: state_dir.into() }
    }
}

struct Inner {
    records: HashMap<String, JobRecord>,
    queue: VecDeque<String>,
    sessions: BTreeSet<String>,
    closed: BTreeSet<String>,
    catalog: HashMap<String, Asset>,
    cancel_flags: HashMap<String, Arc<AtomicBool>>,
    shutdown: bool,
}

struct Shared {
    store: MediaStore,
    registry: AdapterRegistry,
    handlers: Mutex<HashMap<String, JobHandler>>,
    state_dir: PathBuf,
    inner: Mutex<Inner>,
    changed: Condvar,
    seq: AtomicU64,
}

/// Job queue with a fixed worker pool.
pub struct JobService {
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
}

fn session_dir(session: &str) -> String {
    format!("sessions/{session}")
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Shared {
    fn record_path(&self, id: &str) -> PathBuf {
        self.state_dir.join(format!("{id}.json"))
    }

    fn persist(&self, rec: &JobRecord) {
        let path = self.record_path(&rec.spec.id);
        let tmp = path.with_extension("json.partial");
        let text = serde_json::to_string_pretty(rec).expect("record serializes");
        if let Err(e) = std::fs::write(&tmp, text).and_then(|_| std::fs::rename(&tmp, &path)) {
            log::error!("cannot persist job {}: {e}", rec.spec.id);
        }
    }

    fn run(&self, spec: &JobSpec, inputs: &BTreeMap<String, Asset>, cancelled: &AtomicBool) -> std::result::Result<JobOutput, String> {
        let id = spec.id.clone();
        let progress = |p: f64| {
            let mut inner = self.inner.lock().expect("job lock");
            if let Some(rec) = inner.records.get_mut(&id) {
                if rec.status.state == JobState::Running && p.is_finite() {
                    rec.status.progress = rec.status.progress.max(p.clamp(0.0, 1.0));
                }
            }
            drop(inner);
            self.changed.notify_all();
        };
        let ctx = JobContext { store: &self.store, registry: &self.registry, spec, inputs, progress: &progress, cancelled };
        let handler = self.handlers.lock().expect("handler lock").get(&spec.kind).cloned();
        match handler {
            Some(h) => h(&ctx),
            None => {
                let cap = Capability::from_str(&spec.kind).map_err(|_| format!("unknown job kind {}", spec.kind))?;
                let (artifacts, metadata) =
                    remote::execute(&self.registry, &self.store, cap, &spec.params, inputs).map_err(|e| format!("{}: {e}", e.code()))?;
                Ok(JobOutput { artifacts, metadata })
            }
        }
    }

    /// Copies outputs into the job's session directory.
    fn scope(&self, session: &str, out: JobOutput) -> std::result::Result<Vec<JobArtifact>, String> {
        out.artifacts
            .into_iter()
            .map(|(name, asset)| {
                let media = self.store.load(&asset).map_err(|e| e.to_string())?;
                let scoped = self.store.put(&media, &session_dir(session)).map_err(|e| e.to_string())?;
                Ok(JobArtifact { name, asset: scoped })
            })
            .collect()
    }

    fn worker(self: &Arc<Self>) {
        loop {
            let (spec, inputs, flag) = {
                let mut inner = self.inner.lock().expect("job lock");
                let id = loop {
                    if inner.shutdown {
                        return;
                    }
                    if let Some(id) = inner.queue.pop_front() {
                        break id;
                    }
                    inner = self.changed.wait(inner).expect("job lock");
                };
                let Some(rec) = inner.records.get_mut(&id) else { continue };
                if rec.status.state != JobState::Pending {
                    continue;
                }
                rec.status.state = JobState::Running;
                rec.attempts += 1;
                rec.executions += 1;
                let (spec, inputs) = (rec.spec.clone(), rec.inputs.clone());
                let snapshot = rec.clone();
                let flag = inner.cancel_flags.entry(id).or_default().clone();
                drop(inner);
                self.persist(&snapshot);
                self.changed.notify_all();
                (spec, inputs, flag)
            };
            let result = self.run(&spec, &inputs, &flag).and_then(|out| {
                let metadata = out.metadata.clone();
                Ok((self.scope(&spec.session_id, out)?, metadata))
            });
            let mut inner = self.inner.lock().expect("job lock");
            let rec = inner.records.get_mut(&spec.id).expect("record exists");
            match (rec.status.state, result) {
                (JobState::Running, Ok((artifacts, metadata))) => {
                    rec.status.state = JobState::Done;
                    rec.status.progress = 1.0;
                    rec.status.output_artifact_refs = artifacts.iter().map(|a| a.asset.uri.clone()).collect();
                    rec.artifacts = artifacts;
                    rec.metadata = metadata;
                }
                (JobState::Running, Err(message)) => {
                    rec.status.state = JobState::Failed;
                    rec.status.error_message = Some(message);
                }
                (_, Ok((artifacts, _))) => {
                    for a in artifacts {
                        if let Err(e) = self.store.remove(&a.asset.uri) {
                            log::warn!("cannot delete artifact {}: {e}", a.asset.uri);
                        }
                    }
                }
                (_, Err(_)) => {}
            }
            let rec = rec.clone();
            for a in &rec.artifacts {
                inner.catalog.insert(a.asset.id.clone(), a.asset.clone());
                inner.catalog.insert(a.asset.uri.clone(), a.asset.clone());
            }
            inner.cancel_flags.remove(&spec.id);
            drop(inner);
            self.persist(&rec);
            self.changed.notify_all();
        }
    }
}

impl JobService {
    /// Opens the service, reloading persisted jobs. Pending jobs and jobs
    /// interrupted while running are queued again.
    pub fn open(store: MediaStore, registry: AdapterRegistry, config: JobConfig) -> Result<Self> {
        Self::open_with_handlers(store, registry, config, HashMap::new())
    }

    /// Like [`JobService::open`], with handlers in place before any resumed
    /// job can start.
    pub fn open_with_handlers(
        store: MediaStore,
        registry: AdapterRegistry,
        config: JobConfig,
        handlers: HashMap<String, JobHandler>,
    ) -> Result<Self> {
        std::fs::create_dir_all(&config.state_dir).map_err(io_err)?;
        let mut records = HashMap::new();
        let mut max_seq = 0;
        for entry in std::fs::read_dir(&config.state_dir).map_err(io_err)? {
            let path = entry.map_err(io_err)?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(io_err)?;
            let rec: JobRecord = serde_json::from_str(&text).map_err(|e| JobError::Io(format!("{}: {e}", path.display())))?;
            if let Some(n) = rec.spec.id.strip_prefix('j').and_then(|n| n.parse::<u64>().ok()) {
                max_seq = max_seq.max(n);
            }
            records.insert(rec.spec.id.clone(), rec);
        }
        let mut resumed: Vec<&mut JobRecord> = records.values_mut().filter(|r| !r.status.state.is_terminal()).collect();
        resumed.sort_by_key(|r| r.spec.id.strip_prefix('j').and_then(|n| n.parse::<u64>().ok()).unwrap_or(0));
        let mut queue = VecDeque::new();
        for rec in resumed {
            rec.status.state = JobState::Pending;
            rec.status.progress = 0.0;
            queue.push_back(rec.spec.id.clone());
        }
        let mut catalog = HashMap::new();
        let mut sessions = BTreeSet::new();
        for rec in records.values() {
            sessions.insert(rec.spec.session_id.clone());
            for a in rec.inputs.values().chain(rec.artifacts.iter().map(|a| &a.asset)) {
                catalog.insert(a.id.clone(), a.clone());
                catalog.insert(a.uri.clone(), a.clone());
            }
        }
        let shared = Arc::new(Shared {
            store,
            registry,
            handlers: Mutex::new(handlers),
            state_dir: config.state_dir,
            inner: Mutex::new(Inner {
                records,
                queue,
                sessions,
                closed: BTreeSet::new(),
                catalog,
                cancel_flags: HashMap::new(),
                shutdown: false,
            }),
            changed: Condvar::new(),
            seq: AtomicU64::new(max_seq),
        });
        let workers = (0..config.workers)
            .map(|_| {
                let s = shared.clone();
                std::thread::spawn(move || s.worker())
            })
            .collect();
        Ok(JobService { shared, workers })
    }

    pub fn store(&self) -> &MediaStore {
        &self.shared.store
    }

    pub fn registry(&self) -> &AdapterRegistry {
        &self.shared.registry
    }

    /// Adds a handler for a job kind; it overrides a capability of the
    /// same name.
    pub fn register_handler(&self, kind: impl Into<String>, handler: JobHandler) {
        self.shared.handlers.lock().expect("handler lock").insert(kind.into(), handler);
    }

    /// Makes an asset resolvable by id and by uri.
    pub fn register_asset(&self, asset: &Asset) {
        let mut inner = self.shared.inner.lock().expect("job lock");
        inner.catalog.insert(asset.id.clone(), asset.clone());
        inner.catalog.insert(asset.uri.clone(), asset.clone());
    }

    pub fn resolve(&self, reference: &str) -> Option<Asset> {
        self.shared.inner.lock().expect("job lock").catalog.get(reference).cloned()
    }

    pub fn open_session(&self, session_id: &str) -> Result<()> {
        if !valid_session_id(session_id) {
            return Err(JobError::UnknownSession(session_id.to_string()));
        }
        let mut inner = self.shared.inner.lock().expect("job lock");
        inner.closed.remove(session_id);
        inner.sessions.insert(session_id.to_string());
        Ok(())
    }

    pub fn submit(&self, mut spec: JobSpec) -> Result<String> {
        let known_kind = self.shared.handlers.lock().expect("handler lock").contains_key(&spec.kind)
            || Capability::from_str(&spec.kind).is_ok();
        if !known_kind {
            return Err(JobError::UnknownKind(spec.kind));
        }
        if !valid_session_id(&spec.session_id) {
            return Err(JobError::UnknownSession(spec.session_id));
        }
        let mut inner = self.shared.inner.lock().expect("job lock");
        let inputs = spec
            .input_artifact_refs
            .iter()
            .map(|(name, r)| {
                let asset = inner.catalog.get(r).cloned().filter(|a| self.shared.store.resolve(&a.uri).exists());
                asset
                    .map(|a| (name.clone(), a))
                    .ok_or_else(|| JobError::UnresolvedInput { name: name.clone(), reference: r.clone() })
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        spec.id = format!("j{}", self.shared.seq.fetch_add(1, Ordering::SeqCst) + 1);
        let id = spec.id.clone();
        inner.closed.remove(&spec.session_id);
        inner.sessions.insert(spec.session_id.clone());
        let rec = JobRecord {
            spec,
            inputs,
            status: JobStatus { state: JobState::Pending, progress: 0.0, output_artifact_refs: vec![], error_message: None },
            artifacts: vec![],
            metadata: Value::Null,
            attempts: 0,
            executions: 0,
        };
        self.shared.persist(&rec);
        inner.records.insert(id.clone(), rec);
        inner.queue.push_back(id.clone());
        drop(inner);
        self.shared.changed.notify_all();
        Ok(id)
    }

    pub fn poll(&self, job_id: &str) -> Result<JobStatus> {
        self.record(job_id).map(|r| r.status)
    }

    pub fn record(&self, job_id: &str) -> Result<JobRecord> {
        let inner = self.shared.inner.lock().expect("job lock");
        inner.records.get(job_id).cloned().ok_or_else(|| JobError::UnknownJob(job_id.to_string()))
    }

    pub fn jobs(&self) -> Vec<JobRecord> {
        let inner = self.shared.inner.lock().expect("job lock");
        let mut all: Vec<JobRecord> = inner.records.values().cloned().collect();
        all.sort_by_key(|r| r.spec.id.strip_prefix('j').and_then(|n| n.parse::<u64>().ok()).unwrap_or(0));
        all
    }

    pub fn cancel(&self, job_id: &str) -> Result<JobStatus> {
        let mut inner = self.shared.inner.lock().expect("job lock");
        let flag = inner.cancel_flags.get(job_id).cloned();
        let rec = inner.records.get_mut(job_id).ok_or_else(|| JobError::UnknownJob(job_id.to_string()))?;
        if rec.status.state.is_terminal() {
            return Err(JobError::AlreadyTerminal(job_id.to_string()));
        }
        rec.status.state = JobState::Cancelled;
        if let Some(f) = flag {
            f.store(true, Ordering::SeqCst);
        }
        let rec = rec.clone();
        drop(inner);
        self.shared.persist(&rec);
        self.shared.changed.notify_all();
        Ok(rec.status)
    }

    /// Blocks until the job is terminal or the timeout passes.
    pub fn wait(&self, job_id: &str, timeout: Duration) -> Result<JobStatus> {
        let deadline = Instant::now() + timeout;
        let mut inner = self.shared.inner.lock().expect("job lock");
        loop {
            let status = inner.records.get(job_id).ok_or_else(|| JobError::UnknownJob(job_id.to_string()))?.status.clone();
            let now = Instant::now();
            if status.state.is_terminal() || now >= deadline {
                return Ok(status);
            }
            inner = self.shared.changed.wait_timeout(inner, deadline - now).expect("job lock").0;
        }
    }

    /// Outputs of the session's finished jobs.
    pub fn list_session_artifacts(&self, session_id: &str) -> Result<Vec<JobArtifact>> {
        let inner = self.shared.inner.lock().expect("job lock");
        if !inner.sessions.contains(session_id) || inner.closed.contains(session_id) {
            return Err(JobError::UnknownSession(session_id.to_string()));
        }
        let mut recs: Vec<&JobRecord> = inner
            .records
            .values()
            .filter(|r| r.spec.session_id == session_id && r.status.state == JobState::Done)
            .collect();
        recs.sort_by_key(|r| r.spec.id.strip_prefix('j').and_then(|n| n.parse::<u64>().ok()).unwrap_or(0));
        let mut seen = BTreeSet::new();
        Ok(recs
            .into_iter()
            .flat_map(|r| r.artifacts.iter().cloned())
            .filter(|a| self.shared.store.resolve(&a.asset.uri).exists() && seen.insert(a.asset.uri.clone()))
            .collect())
    }

    /// Closes a session, deleting outputs the project does not use.
    /// Returns the deleted uris.
    pub fn close_session(&self, session_id: &str, project: Option<&Project>) -> Result<Vec<String>> {
        let artifacts = self.list_session_artifacts(session_id)?;
        let placed: BTreeSet<&str> = project.map(|p| p.assets.values().map(|a| a.uri.as_str()).collect()).unwrap_or_default();
        let mut deleted = Vec::new();
        for a in artifacts {
            if !placed.contains(a.asset.uri.as_str()) {
                self.shared.store.remove(&a.asset.uri).map_err(io_err)?;
                deleted.push(a.asset.uri);
            }
        }
        self.shared.inner.lock().expect("job lock").closed.insert(session_id.to_string());
        Ok(deleted)
    }

    pub fn state_dir(&self) -> &Path {
        &self.shared.state_dir
    }
}

impl Drop for JobService {
    fn drop(&mut self) {
        self.shared.inner.lock().expect("job lock").shutdown = true;
        self.shared.changed.notify_all();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}
