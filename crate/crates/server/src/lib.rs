//! HTTP front of the job service: projects, pipeline sessions, jobs, export
//! and the remote adapter endpoint.
//!
//! Layout under the server root: `media/` is the media store, `jobs/` holds
//! job records, `projects/` and `sessions/` hold the editable documents.

use std::collections::{BTreeMap, HashMap};
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post, put};
use axum::{Json, Router};
use dubedit::adapters::remote::{self, ArtifactRef, MediaPart, RemoteResponse};
use dubedit::adapters::{AdapterError, AdapterRegistry, Capability};
use dubedit::jobs::{JobConfig, JobError, JobHandler, JobOutput, JobService, JobSpec};
use dubedit::media::{self, ExportSettings, MediaError, MediaStore, Quality};
use dubedit::project::{Clip, Project, ProjectError, ProjectHandle, TimeRange, TrackKind};
use dubedit::s2s::{Operation, PipelineSession, S2sError, SessionState, TextDoc};
use dubedit::time::{Fps, Speed, Time};
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{message}")]
    Status { status: StatusCode, code: String, message: String },
}

impl ApiError {
    pub fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError::Status { status, code: code.into(), message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }

    fn not_found(code: &str, what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, what)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let ApiError::Status { status, code, message } = self;
        (status, Json(json!({ "code": code, "message": message }))).into_response()
    }
}

impl From<JobError> for ApiError {
    fn from(e: JobError) -> Self {
        let status = match e {
            JobError::UnknownJob(_) | JobError::UnknownSession(_) => StatusCode::NOT_FOUND,
            JobError::AlreadyTerminal(_) => StatusCode::CONFLICT,
            JobError::UnresolvedInput { .. } | JobError::UnknownKind(_) => StatusCode::UNPROCESSABLE_ENTITY,
            JobError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl From<AdapterError> for ApiError {
    fn from(e: AdapterError) -> Self {
        let status = match e {
            AdapterError::AdapterFailure(_) | AdapterError::Media(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        let wire = remote::WireError::from(&e);
        Self::new(status, wire.code, wire.message)
    }
}

impl From<S2sError> for ApiError {
    fn from(e: S2sError) -> Self {
        match e {
            S2sError::Adapter(a) => a.into(),
            S2sError::WrongState { .. } => Self::new(StatusCode::CONFLICT, e.code(), e.to_string()),
            S2sError::UnknownSegment(_) => Self::new(StatusCode::NOT_FOUND, e.code(), e.to_string()),
            S2sError::Io(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.code(), e.to_string()),
        }
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        let status = match e {
            ProjectError::UnknownClip(_) | ProjectError::UnknownTrack(_) | ProjectError::UnknownAsset(_) => StatusCode::NOT_FOUND,
            ProjectError::Overlap(_) | ProjectError::OverlapAfterRetime(_) | ProjectError::RevisionConflict { .. } => StatusCode::CONFLICT,
            ProjectError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl From<MediaError> for ApiError {
    fn from(e: MediaError) -> Self {
        let (status, code) = match e {
            MediaError::NotFound(_) => (StatusCode::NOT_FOUND, "NotFound"),
            MediaError::Undecodable(_) => (StatusCode::UNPROCESSABLE_ENTITY, "Undecodable"),
            MediaError::InvalidSettings(_) => (StatusCode::UNPROCESSABLE_ENTITY, "InvalidSettings"),
            MediaError::EncoderFailure(_) => (StatusCode::INTERNAL_SERVER_ERROR, "EncoderFailure"),
            _ => (StatusCode::UNPROCESSABLE_ENTITY, "MediaError"),
        };
        Self::new(status, code, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
pub struct ServerConfig {
    pub root: PathBuf,
    pub workers: usize,
    pub registry: AdapterRegistry,
}

impl ServerConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ServerConfig { root: root.into(), workers: 2, registry: AdapterRegistry::with_stubs() }
    }
}

type Sessions = Arc<Mutex<BTreeMap<String, PipelineSession>>>;
type Projects = Arc<Mutex<BTreeMap<String, ProjectHandle>>>;

pub struct AppState {
    jobs: JobService,
    projects: Projects,
    sessions: Sessions,
    root: PathBuf,
}

fn io_error(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Io", e.to_string())
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn session_path(root: &Path, id: &str) -> PathBuf {
    root.join("sessions").join(format!("{id}.json"))
}

fn project_path(root: &Path, id: &str) -> PathBuf {
    root.join("projects").join(format!("{id}.json"))
}

fn load_dir<T>(dir: &Path, load: impl Fn(&Path) -> Option<T>) -> BTreeMap<String, T> {
    let Ok(entries) = std::fs::read_dir(dir) else { return BTreeMap::new() };
    entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
        .filter_map(|p| Some((p.file_stem()?.to_str()?.to_string(), load(&p)?)))
        .collect()
}

fn s2s_handler(step: Operation, sessions: Sessions, root: PathBuf) -> JobHandler {
    Arc::new(move |ctx| {
        let sid = ctx.spec.session_id.clone();
        let engine = ctx.spec.params.get("engine").and_then(Value::as_str);
        let mut all = sessions.lock().expect("session lock");
        if step == Operation::RunAsr && !all.contains_key(&sid) {
            let lang = |k: &str| ctx.spec.params.get(k).and_then(Value::as_str).map(str::to_string);
            let (src, tgt) = (lang("source_lang").ok_or("missing source_lang")?, lang("target_lang").ok_or("missing target_lang")?);
            all.insert(sid.clone(), PipelineSession::new(sid.clone(), src, tgt));
        }
        let session = all.get_mut(&sid).ok_or_else(|| format!("unknown session {sid}"))?;
        let mut draft = session.clone();
        let mut artifacts = Vec::new();
        let result = match step {
            Operation::RunAsr => {
                let audio = ctx.inputs.get("audio").ok_or("missing input audio")?;
                draft.run_asr(ctx.store, ctx.registry, audio, engine)
            }
            Operation::RunNmt => draft.run_nmt(ctx.registry, engine),
            Operation::RunTts => {
                let voice = ctx.spec.params.get("voice").and_then(Value::as_str).unwrap_or("default");
                let r = draft.run_tts(ctx.store, ctx.registry, voice, engine);
                artifacts = draft.tts_assets.iter().map(|u| (format!("tts/{}", u.segment_id), u.asset.clone())).collect();
                r
            }
            _ => return Err(format!("{step} is not a job step")),
        };
        result.map_err(|e| format!("{}: {e}", e.code()))?;
        draft.save(&session_path(&root, &sid)).map_err(|e| e.to_string())?;
        *session = draft;
        ctx.report_progress(1.0);
        Ok(JobOutput { artifacts, metadata: json!({ "state": session.state }) })
    })
}

fn export_handler(projects: Projects) -> JobHandler {
    Arc::new(move |ctx| {
        let pid = ctx.spec.params.get("project_id").and_then(Value::as_str).ok_or("missing project_id")?;
        let project = projects.lock().expect("project lock").get(pid).map(ProjectHandle::snapshot).ok_or_else(|| format!("unknown project {pid}"))?;
        let settings = export_settings(&project, &ctx.spec.params).map_err(|e| format!("{e}"))?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out = dir.path().join("export.mzv");
        media::export(ctx.store, &project, &settings, &out).map_err(|e| format!("{e}"))?;
        let asset = ctx.store.import(&out, "exports").map_err(|e| e.to_string())?;
        Ok(JobOutput { artifacts: vec![("video".into(), asset)], metadata: json!({ "project_revision": project.revision }) })
    })
}

/// Export settings from request parameters, defaulting to the first
/// visual asset's fps and resolution.
fn export_settings(project: &Project, params: &Value) -> ApiResult<ExportSettings> {
    let quality = match params.get("quality").and_then(Value::as_str) {
        Some(q) => Quality::from_str(q)?,
        None => Quality::Medium,
    };
    let visual = project.assets.values().find(|a| a.resolution.is_some());
    let fps = match params.get("fps") {
        Some(v) => {
            let n = v.as_f64().ok_or_else(|| ApiError::bad_request("fps must be a number"))?;
            if n <= 0.0 || n.fract() != 0.0 {
                return Err(MediaError::InvalidSettings(format!("fps {n} must be a positive integer")).into());
            }
            Fps::integer(n as u32)
        }
        None => visual.and_then(|a| a.fps).unwrap_or(Fps::integer(25)),
    };
    let resolution = match params.get("resolution") {
        Some(r) => serde_json::from_value(r.clone()).map_err(|e| ApiError::bad_request(e.to_string()))?,
        None => visual.and_then(|a| a.resolution).ok_or(MediaError::EmptyProject)?,
    };
    let settings = ExportSettings { quality, fps, resolution };
    settings.validate()?;
    Ok(settings)
}

impl AppState {
    pub fn open(config: ServerConfig) -> ApiResult<Arc<AppState>> {
        let root = config.root;
        for sub in ["projects", "sessions"] {
            std::fs::create_dir_all(root.join(sub)).map_err(io_error)?;
        }
        let projects: Projects = Arc::new(Mutex::new(load_dir(&root.join("projects"), |p| {
            Project::load(p).ok().map(ProjectHandle::new)
        })));
        let sessions: Sessions = Arc::new(Mutex::new(load_dir(&root.join("sessions"), |p| PipelineSession::load(p).ok())));
        let mut handlers: HashMap<String, JobHandler> = HashMap::new();
        for (kind, op) in [("s2s.asr", Operation::RunAsr), ("s2s.nmt", Operation::RunNmt), ("s2s.tts", Operation::RunTts)] {
            handlers.insert(kind.into(), s2s_handler(op, sessions.clone(), root.clone()));
        }
        handlers.insert("export".into(), export_handler(projects.clone()));
        let store = MediaStore::open(root.join("media"))?;
        let jobs = JobService::open_with_handlers(
            store,
            config.registry,
            JobConfig { workers: config.workers, state_dir: root.join("jobs") },
            handlers,
        )?;
        for handle in projects.lock().expect("project lock").values() {
            for asset in handle.snapshot().assets.values() {
                jobs.register_asset(asset);
            }
        }
        Ok(Arc::new(AppState { jobs, projects, sessions, root }))
    }

    pub fn jobs(&self) -> &JobService {
        &self.jobs
    }

    fn project(&self, id: &str) -> ApiResult<ProjectHandle> {
        self.projects.lock().expect("project lock").get(id).cloned().ok_or_else(|| ApiError::not_found("UnknownProject", format!("unknown project {id}")))
    }

    fn persist_project(&self, project: &Project) -> ApiResult<()> {
        project.save(&project_path(&self.root, &project.id))?;
        Ok(())
    }

    fn mutate<T>(&self, id: &str, f: impl FnOnce(&mut Project) -> Result<T, ProjectError>) -> ApiResult<(T, Project)> {
        let handle = self.project(id)?;
        let out = handle.mutate(f)?;
        let snapshot = handle.snapshot();
        self.persist_project(&snapshot)?;
        Ok((out, snapshot))
    }

    fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut PipelineSession) -> Result<T, S2sError>) -> ApiResult<T> {
        let mut all = self.sessions.lock().expect("session lock");
        let session = all.get_mut(id).ok_or_else(|| ApiError::not_found("UnknownSession", format!("unknown session {id}")))?;
        let mut draft = session.clone();
        let out = f(&mut draft)?;
        draft.save(&session_path(&self.root, id))?;
        *session = draft;
        Ok(out)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(get_project).put(put_project))
        .route("/projects/{id}/media", post(upload_media))
        .route("/projects/{id}/tracks", post(add_track))
        .route("/projects/{id}/clips", post(place_clip))
        .route("/projects/{id}/markers", put(set_markers))
        .route("/projects/{id}/jobs", post(submit_job))
        .route("/jobs/{id}", get(poll_job).delete(cancel_job))
        .route("/sessions/{id}", get(get_session).delete(close_session))
        .route("/sessions/{id}/artifacts", get(session_artifacts))
        .route("/sessions/{id}/s2s/{step}", post(s2s_step))
        .route("/sessions/{id}/text/{doc}/{segment}", put(edit_text))
        .route("/export", post(export))
        .route("/adapters/{capability}", post(run_adapter))
        .route("/artifacts/{*reference}", get(get_artifact))
        .route("/health", get(|| async { Json(json!({ "ok": true })) }))
        .route("/jobs", get(list_jobs))
        .route("/projects/{id}/clips/{clip}", delete(remove_clip))
        .layer(DefaultBodyLimit::max(512 * 1024 * 1024))
        .with_state(state)
}

/// Runs blocking library work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
}

#[derive(Deserialize, Default)]
struct CreateProject {
    id: Option<String>,
}

async fn create_project(State(st): State<Arc<AppState>>, body: Option<Json<CreateProject>>) -> ApiResult<(StatusCode, Json<Project>)> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let mut all = st.projects.lock().expect("project lock");
    let id = match req.id {
        Some(id) if !valid_id(&id) => return Err(ApiError::bad_request(format!("invalid project id {id:?}"))),
        Some(id) if all.contains_key(&id) => return Err(ApiError::new(StatusCode::CONFLICT, "ProjectExists", format!("project {id} exists"))),
        Some(id) => id,
        None => (1..).map(|n| format!("p{n}")).find(|id| !all.contains_key(id)).expect("unbounded"),
    };
    let project = Project::new(id.clone());
    st.persist_project(&project)?;
    all.insert(id, ProjectHandle::new(project.clone()));
    Ok((StatusCode::CREATED, Json(project)))
}

async fn get_project(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Project>> {
    Ok(Json(st.project(&id)?.snapshot()))
}

/// Replaces the whole document. The body's revision must match the stored
/// one, so a stale editor cannot overwrite newer work.
async fn put_project(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, Json(doc): Json<Project>) -> ApiResult<Json<Project>> {
    if doc.id != id {
        return Err(ApiError::bad_request(format!("document id {} does not match {id}", doc.id)));
    }
    doc.validate()?;
    let (_, project) = st.mutate(&id, |p| {
        if p.revision != doc.revision {
            return Err(ProjectError::RevisionConflict { given: doc.revision, current: p.revision });
        }
        let revision = p.revision + 1;
        *p = Project { revision, ..doc };
        Ok(())
    })?;
    for asset in project.assets.values() {
        st.jobs.register_asset(asset);
    }
    Ok(Json(project))
}

async fn read_parts(mut multipart: Multipart) -> ApiResult<(Vec<MediaPart>, Value)> {
    let mut parts: Vec<MediaPart> = Vec::new();
    let mut faces: HashMap<String, Vec<u8>> = HashMap::new();
    let mut params = Value::Null;
    while let Some(field) = multipart.next_field().await.map_err(|e| ApiError::bad_request(e.to_string()))? {
        let name = field.name().unwrap_or_default().to_string();
        let filename = field.file_name().map(str::to_string);
        let bytes = field.bytes().await.map_err(|e| ApiError::bad_request(e.to_string()))?.to_vec();
        if name == "params" {
            params = serde_json::from_slice(&bytes).map_err(|e| ApiError::bad_request(format!("params: {e}")))?;
        } else if let Some(base) = name.strip_suffix(".faces") {
            faces.insert(base.to_string(), bytes);
        } else {
            let filename = filename.ok_or_else(|| ApiError::bad_request(format!("part {name} has no file name")))?;
            parts.push(MediaPart { name, filename, bytes, faces: None });
        }
    }
    for p in &mut parts {
        p.faces = faces.remove(&p.name);
    }
    Ok((parts, params))
}

async fn upload_media(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, multipart: Multipart) -> ApiResult<Json<Value>> {
    st.project(&id)?;
    let (parts, _) = read_parts(multipart).await?;
    if parts.is_empty() {
        return Err(ApiError::bad_request("no media part"));
    }
    blocking(move || {
        let assets = remote::ingest_parts(st.jobs.store(), parts)?;
        st.mutate(&id, |p| {
            for a in assets.values() {
                if !p.assets.contains_key(&a.id) {
                    p.register_asset(a.clone())?;
                }
            }
            Ok(())
        })?;
        for a in assets.values() {
            st.jobs.register_asset(a);
        }
        Ok(Json(json!({ "assets": assets })))
    })
    .await
}

#[derive(Deserialize)]
struct NewTrack {
    kind: TrackKind,
}

async fn add_track(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, Json(req): Json<NewTrack>) -> ApiResult<Json<Value>> {
    let (track_id, _) = st.mutate(&id, |p| Ok(p.add_track(req.kind)))?;
    Ok(Json(json!({ "track_id": track_id })))
}

#[derive(Deserialize)]
struct PlaceClip {
    track_id: String,
    /// Asset id or uri; job artifacts are registered on first use.
    asset: String,
    /// Seconds; defaults to the whole asset.
    source_start: Option<f64>,
    source_end: Option<f64>,
    at: f64,
    speed: Option<f64>,
}

async fn place_clip(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, Json(req): Json<PlaceClip>) -> ApiResult<Json<Clip>> {
    let asset = st.jobs.resolve(&req.asset).ok_or_else(|| ApiError::not_found("UnknownAsset", format!("unknown asset {}", req.asset)))?;
    let (clip, _) = st.mutate(&id, |p| {
        if !p.assets.contains_key(&asset.id) {
            p.register_asset(asset.clone())?;
        }
        let start = req.source_start.map(Time::from_secs_f64).unwrap_or(Time::ZERO);
        let end = req.source_end.map(Time::from_secs_f64).unwrap_or(asset.duration);
        let mut clip = Clip::new(asset.id.clone(), TimeRange::new(start, end)?);
        if let Some(s) = req.speed {
            clip = clip.with_speed(Speed::from_f64(s));
        }
        p.place_clip(&req.track_id, clip, Time::from_secs_f64(req.at))
    })?;
    Ok(Json(clip))
}

async fn remove_clip(State(st): State<Arc<AppState>>, UrlPath((id, clip)): UrlPath<(String, String)>) -> ApiResult<Json<Clip>> {
    let (clip, _) = st.mutate(&id, |p| p.remove_clip(&clip))?;
    Ok(Json(clip))
}

#[derive(Deserialize)]
struct Markers {
    start: f64,
    end: f64,
}

async fn set_markers(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, Json(m): Json<Markers>) -> ApiResult<Json<Value>> {
    let (range, _) = st.mutate(&id, |p| p.set_markers(Time::from_secs_f64(m.start), Time::from_secs_f64(m.end)))?;
    Ok(Json(json!({ "start": range.start.as_secs_f64(), "end": range.end.as_secs_f64(), "range": range })))
}

#[derive(Deserialize)]
struct SubmitJob {
    kind: String,
    #[serde(default)]
    params: Value,
    #[serde(default)]
    inputs: BTreeMap<String, String>,
    session_id: String,
}

async fn submit_job(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, Json(req): Json<SubmitJob>) -> ApiResult<(StatusCode, Json<Value>)> {
    st.project(&id)?;
    let mut params = if req.params.is_null() { json!({}) } else { req.params };
    if let Some(obj) = params.as_object_mut() {
        obj.entry("project_id").or_insert(json!(id));
    }
    let spec = JobSpec { id: String::new(), kind: req.kind, params, input_artifact_refs: req.inputs, session_id: req.session_id };
    let job_id = st.jobs.submit(spec)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id }))))
}

async fn list_jobs(State(st): State<Arc<AppState>>) -> Json<Value> {
    let jobs: Vec<Value> = st.jobs.jobs().into_iter().map(|r| json!({ "id": r.spec.id, "kind": r.spec.kind, "status": r.status })).collect();
    Json(json!({ "jobs": jobs }))
}

async fn poll_job(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let rec = st.jobs.record(&id)?;
    let mut body = serde_json::to_value(&rec.status).map_err(io_error)?;
    body["id"] = json!(id);
    body["metadata"] = rec.metadata;
    Ok(Json(body))
}

async fn cancel_job(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    Ok(Json(serde_json::to_value(st.jobs.cancel(&id)?).map_err(io_error)?))
}

async fn session_artifacts(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let artifacts = st.jobs.list_session_artifacts(&id)?;
    Ok(Json(json!({ "artifacts": artifacts })))
}

#[derive(Deserialize)]
struct CloseQuery {
    project: Option<String>,
}

async fn close_session(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, Query(q): Query<CloseQuery>) -> ApiResult<Json<Value>> {
    let project = q.project.map(|p| st.project(&p).map(|h| h.snapshot())).transpose()?;
    let deleted = blocking(move || Ok(st.jobs.close_session(&id, project.as_ref())?)).await?;
    Ok(Json(json!({ "deleted": deleted })))
}

async fn get_session(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<PipelineSession>> {
    st.sessions.lock().expect("session lock").get(&id).cloned().map(Json).ok_or_else(|| ApiError::not_found("UnknownSession", format!("unknown session {id}")))
}

async fn s2s_step(
    State(st): State<Arc<AppState>>,
    UrlPath((id, step)): UrlPath<(String, String)>,
    body: Option<Json<Value>>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    if !valid_id(&id) {
        return Err(ApiError::bad_request(format!("invalid session id {id:?}")));
    }
    let params = body.map(|Json(v)| v).unwrap_or(json!({}));
    let op = match step.as_str() {
        "asr" => Operation::RunAsr,
        "nmt" => Operation::RunNmt,
        "tts" => Operation::RunTts,
        "chunks" => {
            let face = params.get("face_available").and_then(Value::as_bool).unwrap_or(false);
            let pairs = st.with_session(&id, |s| s.session_chunks(face))?;
            return Ok((StatusCode::OK, Json(json!({ "pairs": pairs }))));
        }
        "reset" => {
            let to: SessionState = serde_json::from_value(params.get("to").cloned().unwrap_or(Value::Null))
                .map_err(|e| ApiError::bad_request(format!("reset target: {e}")))?;
            let state = st.with_session(&id, |s| s.reset(to).map(|_| s.state))?;
            return Ok((StatusCode::OK, Json(json!({ "state": state }))));
        }
        other => return Err(ApiError::not_found("UnknownStep", format!("unknown step {other}"))),
    };
    let state = st.sessions.lock().expect("session lock").get(&id).map(|s| s.state).unwrap_or(SessionState::New);
    if !op.permitted_in(state) {
        return Err(S2sError::WrongState { op, state }.into());
    }
    let mut inputs = BTreeMap::new();
    if op == Operation::RunAsr {
        let audio = params.get("audio").and_then(Value::as_str).ok_or_else(|| ApiError::bad_request("asr needs an audio reference"))?;
        inputs.insert("audio".to_string(), audio.to_string());
    }
    let spec = JobSpec { id: String::new(), kind: format!("s2s.{step}"), params, input_artifact_refs: inputs, session_id: id };
    let job_id = st.jobs.submit(spec)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id }))))
}

#[derive(Deserialize)]
struct TextEdit {
    text: String,
}

async fn edit_text(
    State(st): State<Arc<AppState>>,
    UrlPath((id, doc, segment)): UrlPath<(String, String, u32)>,
    Json(edit): Json<TextEdit>,
) -> ApiResult<Json<Value>> {
    let doc = TextDoc::from_str(&doc).map_err(|e| ApiError::not_found("UnknownDocument", e))?;
    let (state, cues) = st.with_session(&id, |s| {
        s.edit_text(doc, segment, &edit.text)?;
        Ok((s.state, s.cues(doc)))
    })?;
    Ok(Json(json!({ "state": state, "cues": cues })))
}

#[derive(Deserialize)]
struct ExportRequest {
    project_id: String,
    #[serde(default = "default_session")]
    session_id: String,
    #[serde(flatten)]
    settings: Value,
}

fn default_session() -> String {
    "exports".into()
}

async fn export(State(st): State<Arc<AppState>>, Json(req): Json<ExportRequest>) -> ApiResult<(StatusCode, Json<Value>)> {
    let project = st.project(&req.project_id)?.snapshot();
    export_settings(&project, &req.settings)?;
    let mut params = req.settings;
    params["project_id"] = json!(req.project_id);
    let spec = JobSpec { id: String::new(), kind: "export".into(), params, input_artifact_refs: BTreeMap::new(), session_id: req.session_id };
    let job_id = st.jobs.submit(spec)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id }))))
}

async fn run_adapter(
    State(st): State<Arc<AppState>>,
    UrlPath(capability): UrlPath<String>,
    multipart: Multipart,
) -> ApiResult<Json<RemoteResponse>> {
    let cap = Capability::from_str(&capability).map_err(|_| ApiError::not_found("UnknownCapability", format!("unknown capability {capability}")))?;
    let (parts, params) = read_parts(multipart).await?;
    blocking(move || {
        let store = st.jobs.store();
        let inputs = remote::ingest_parts(store, parts)?;
        let (artifacts, metadata) = remote::execute(st.jobs.registry(), store, cap, &params, &inputs)?;
        let artifacts = artifacts
            .into_iter()
            .map(|(name, asset)| {
                st.jobs.register_asset(&asset);
                ArtifactRef { reference: asset.uri.clone(), name, kind: asset.kind }
            })
            .collect();
        Ok(Json(RemoteResponse { artifacts, metadata }))
    })
    .await
}

/// A store-relative path that cannot climb out of the store.
fn safe_reference(reference: &str) -> Option<PathBuf> {
    let path = Path::new(reference);
    let ok = !reference.is_empty() && path.components().all(|c| matches!(c, Component::Normal(_)));
    ok.then(|| path.to_path_buf())
}

async fn get_artifact(State(st): State<Arc<AppState>>, UrlPath(reference): UrlPath<String>) -> ApiResult<Response> {
    let rel = safe_reference(&reference).ok_or_else(|| ApiError::bad_request(format!("invalid artifact reference {reference:?}")))?;
    let path = st.jobs.store().root().join(rel);
    let bytes = tokio::fs::read(&path).await.map_err(|_| ApiError::not_found("NotFound", format!("no artifact {reference}")))?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], Body::from(bytes)).into_response())
}

/// Binds and serves until the process ends.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
