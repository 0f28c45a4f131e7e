//! Python bindings: sync planning, project editing, speech sessions and lecture translation.

use std::path::PathBuf;

use dubedit::adapters::remote::{RemoteAdapter, RemoteConfig};
use dubedit::adapters::AdapterRegistry;
use dubedit::fixtures;
use dubedit::lecture::{self, LectureOptions};
use dubedit::media::{self, Media, MediaStore};
use dubedit::s2s::{PipelineSession, SessionState, TextDoc};
use dubedit::sync::{self, SegmentPair};
use dubedit::{Clip, Speed, Time, TimeRange, TrackKind};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(dubedit_py, DubeditError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    DubeditError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn registry(remote: Option<&str>) -> PyResult<AdapterRegistry> {
    let mut registry = AdapterRegistry::with_stubs();
    if let Some(url) = remote {
        for adapter in RemoteAdapter::all(&RemoteConfig::new(url.to_string())).map_err(err)? {
            registry.register_selected(adapter);
        }
    }
    Ok(registry)
}

/// `(chunk_id, video_seconds, audio_seconds, face_available)` tuples.
type PairTuple = (u32, f64, f64, bool);

fn pairs_from(pairs: Vec<PairTuple>) -> Vec<SegmentPair> {
    pairs
        .into_iter()
        .map(|(chunk_id, video_duration, audio_duration, face_available)| SegmentPair { chunk_id, video_duration, audio_duration, face_available })
        .collect()
}

/// Planner weights and bounds. Keyword overrides use the same keys as `--policy`.
#[pyclass(name = "SyncPolicy", from_py_object)]
#[derive(Clone)]
struct PySyncPolicy {
    inner: sync::SyncPolicy,
}

#[pymethods]
impl PySyncPolicy {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let mut inner = sync::SyncPolicy::default();
        if let Some(map) = overrides {
            for (k, v) in map.iter() {
                let key: String = k.extract()?;
                let value = if let Ok(b) = v.extract::<bool>() { b.to_string() } else { v.str()?.to_string() };
                inner.set(&key, &value).map_err(err)?;
            }
        }
        Ok(PySyncPolicy { inner })
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }
}

#[pyclass(name = "SyncPlan")]
struct PySyncPlan {
    inner: sync::SyncPlan,
}

#[pymethods]
impl PySyncPlan {
    #[getter]
    fn total_cost(&self) -> f64 {
        self.inner.total_cost
    }

    #[getter]
    fn actions<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.actions)
    }

    fn to_edl(&self) -> String {
        self.inner.to_edl()
    }

    #[staticmethod]
    fn from_edl(text: &str) -> PyResult<Self> {
        Ok(PySyncPlan { inner: sync::SyncPlan::from_edl(text).map_err(err)? })
    }

    /// Findings as dicts; empty when the plan is consistent with `pairs`.
    fn validate<'py>(&self, py: Python<'py>, pairs: Vec<PairTuple>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &sync::validate_plan(&self.inner, &pairs_from(pairs)).findings)
    }
}

#[pyfunction]
#[pyo3(signature = (pairs, policy=None))]
fn compute_sync_plan(pairs: Vec<PairTuple>, policy: Option<PySyncPolicy>) -> PyResult<PySyncPlan> {
    let policy = policy.map(|p| p.inner).unwrap_or_default();
    Ok(PySyncPlan { inner: sync::compute_sync_plan(&pairs_from(pairs), &policy).map_err(err)? })
}

#[pyclass(name = "MediaStore")]
struct PyMediaStore {
    inner: MediaStore,
}

#[pymethods]
impl PyMediaStore {
    #[new]
    fn new(root: PathBuf) -> PyResult<Self> {
        Ok(PyMediaStore { inner: MediaStore::open(root).map_err(err)? })
    }

    fn resolve(&self, uri: &str) -> PathBuf {
        self.inner.resolve(uri)
    }
}

#[pyclass(name = "Project")]
struct PyProject {
    inner: dubedit::Project,
}

fn track_kind(kind: &str) -> PyResult<TrackKind> {
    match kind {
        "video" => Ok(TrackKind::Video),
        "audio" => Ok(TrackKind::Audio),
        other => Err(err(format!("unknown track kind {other:?}"))),
    }
}

#[pymethods]
impl PyProject {
    #[new]
    fn new(id: &str) -> Self {
        PyProject { inner: dubedit::Project::new(id) }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyProject { inner: dubedit::Project::load(&path).map_err(err)? })
    }

    #[staticmethod]
    fn from_document(text: &str) -> PyResult<Self> {
        Ok(PyProject { inner: dubedit::Project::from_document(text).map_err(err)? })
    }

    fn to_document(&self) -> String {
        self.inner.to_document()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn revision(&self) -> u64 {
        self.inner.revision
    }

    #[getter]
    fn timeline_length(&self) -> f64 {
        self.inner.timeline_length().as_secs_f64()
    }

    /// Copies a media file into `store` and registers it; returns the asset id.
    fn import_media(&mut self, store: &PyMediaStore, path: PathBuf) -> PyResult<String> {
        let asset = store.inner.import(&path, "imports").map_err(err)?;
        let id = asset.id.clone();
        self.inner.register_asset(asset).map_err(err)?;
        Ok(id)
    }

    fn add_track(&mut self, kind: &str) -> PyResult<String> {
        Ok(self.inner.add_track(track_kind(kind)?))
    }

    #[pyo3(signature = (track_id, asset_id, source_start, source_end, at, speed=1.0))]
    fn place_clip(&mut self, track_id: &str, asset_id: &str, source_start: f64, source_end: f64, at: f64, speed: f64) -> PyResult<String> {
        let range = TimeRange::secs(source_start, source_end).map_err(err)?;
        let clip = Clip::new(asset_id, range).with_speed(Speed::from_f64(speed));
        Ok(self.inner.place_clip(track_id, clip, Time::from_secs_f64(at)).map_err(err)?.id)
    }

    fn split_clip(&mut self, clip_id: &str, at: f64) -> PyResult<(String, String)> {
        let (a, b) = self.inner.split_clip(clip_id, Time::from_secs_f64(at)).map_err(err)?;
        Ok((a.id, b.id))
    }

    fn retime_clip(&mut self, clip_id: &str, speed: f64) -> PyResult<f64> {
        Ok(self.inner.retime_clip(clip_id, Speed::from_f64(speed)).map_err(err)?.duration().as_secs_f64())
    }

    fn remove_clip(&mut self, clip_id: &str) -> PyResult<()> {
        self.inner.remove_clip(clip_id).map(|_| ()).map_err(err)
    }

    fn set_markers(&mut self, start: f64, end: f64) -> PyResult<()> {
        self.inner.set_markers(Time::from_secs_f64(start), Time::from_secs_f64(end)).map(|_| ()).map_err(err)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    /// Renders the project to `out` at the given frame rate and resolution.
    #[pyo3(signature = (store, out, fps, width, height, quality="medium"))]
    #[allow(clippy::too_many_arguments)]
    fn export(&self, py: Python<'_>, store: &PyMediaStore, out: PathBuf, fps: u32, width: u32, height: u32, quality: &str) -> PyResult<f64> {
        if fps == 0 {
            return Err(err("fps must be positive"));
        }
        let quality: media::Quality = quality.parse().map_err(err)?;
        let settings = media::ExportSettings { quality, fps: dubedit::Fps::integer(fps), resolution: dubedit::Resolution { width, height } };
        let probe = py.detach(|| media::export(&store.inner, &self.inner, &settings, &out)).map_err(err)?;
        Ok(probe.duration.as_secs_f64())
    }
}

fn text_doc(doc: &str) -> PyResult<TextDoc> {
    doc.parse().map_err(err)
}

/// Speech translation session driven one step at a time.
#[pyclass(name = "Session")]
struct PySession {
    inner: PipelineSession,
    remote: Option<String>,
}

#[pymethods]
impl PySession {
    #[new]
    #[pyo3(signature = (id, source_lang, target_lang, remote=None))]
    fn new(id: &str, source_lang: &str, target_lang: &str, remote: Option<String>) -> Self {
        PySession { inner: PipelineSession::new(id, source_lang, target_lang), remote }
    }

    #[getter]
    fn state(&self) -> String {
        self.inner.state.to_string()
    }

    fn run_asr(&mut self, store: &PyMediaStore, audio: PathBuf) -> PyResult<()> {
        let registry = registry(self.remote.as_deref())?;
        let asset = store.inner.import(&audio, "inputs").map_err(err)?;
        self.inner.run_asr(&store.inner, &registry, &asset, None).map_err(err)
    }

    fn edit_text(&mut self, doc: &str, segment_id: u32, text: &str) -> PyResult<()> {
        self.inner.edit_text(text_doc(doc)?, segment_id, text).map_err(err)
    }

    fn run_nmt(&mut self) -> PyResult<()> {
        let registry = registry(self.remote.as_deref())?;
        self.inner.run_nmt(&registry, None).map_err(err)
    }

    #[pyo3(signature = (store, voice="default"))]
    fn run_tts(&mut self, store: &PyMediaStore, voice: &str) -> PyResult<()> {
        let registry = registry(self.remote.as_deref())?;
        self.inner.run_tts(&store.inner, &registry, voice, None).map_err(err)
    }

    fn cues<'py>(&self, py: Python<'py>, doc: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.cues(text_doc(doc)?))
    }

    #[pyo3(signature = (face_available=false))]
    fn chunks(&self, face_available: bool) -> PyResult<Vec<PairTuple>> {
        let pairs = self.inner.session_chunks(face_available).map_err(err)?;
        Ok(pairs.into_iter().map(|p| (p.chunk_id, p.video_duration, p.audio_duration, p.face_available)).collect())
    }

    fn reset(&mut self, to: &str) -> PyResult<()> {
        let state: SessionState = serde_json::from_value(serde_json::Value::String(to.into())).map_err(err)?;
        self.inner.reset(state).map_err(err)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }
}

/// Translates a lecture video; returns the per-chunk sync summary.
#[pyfunction]
#[pyo3(signature = (input, out, src, tgt, *, work=None, lipsync=false, bg_translate=false, separate_music=false, policy=None, remote=None))]
#[allow(clippy::too_many_arguments)]
fn translate_lecture<'py>(
    py: Python<'py>,
    input: PathBuf,
    out: PathBuf,
    src: &str,
    tgt: &str,
    work: Option<PathBuf>,
    lipsync: bool,
    bg_translate: bool,
    separate_music: bool,
    policy: Option<PySyncPolicy>,
    remote: Option<String>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut opts = LectureOptions::new(src, tgt);
    opts.lipsync = lipsync;
    opts.bg_translate = bg_translate;
    opts.separate_music = separate_music;
    if let Some(p) = policy {
        opts.policy = p.inner;
    }
    let registry = registry(remote.as_deref())?;
    let work = work.unwrap_or_else(|| out.with_extension("work"));
    let report = py
        .detach(|| {
            let store = MediaStore::open(&work).map_err(lecture::LectureError::from)?;
            lecture::translate_lecture(&store, &registry, &input, &out, &opts)
        })
        .map_err(err)?;
    report.project.save(&work.join("project.json")).map_err(err)?;
    let summary = serde_json::json!({
        "timeline_length": report.project.timeline_length().as_secs_f64(),
        "output_duration": report.output.duration.as_secs_f64(),
        "project": work.join("project.json"),
        "chunks": report.applied.iter().map(|a| serde_json::json!({
            "chunk_id": a.chunk_id,
            "video_duration": a.video_duration.as_secs_f64(),
            "audio_duration": a.audio_duration.as_secs_f64(),
            "mismatch": a.mismatch(),
        })).collect::<Vec<_>>(),
    });
    to_py(py, &summary)
}

/// Writes the synthetic two-slide lecture used in tests.
#[pyfunction]
fn write_lecture_fixture(path: PathBuf, seconds: u32) -> PyResult<()> {
    media::write_media(&fixtures::lecture(seconds).media, &path).map_err(err)
}

/// Writes synthetic speech as a WAV file.
#[pyfunction]
#[pyo3(signature = (path, seconds, sample_rate=16_000))]
fn write_speech_fixture(path: PathBuf, seconds: f64, sample_rate: u32) -> PyResult<()> {
    media::write_media(&Media::Audio(fixtures::speech_audio(sample_rate, seconds)), &path).map_err(err)
}

#[pymodule]
fn dubedit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DubeditError", m.py().get_type::<DubeditError>())?;
    m.add_class::<PySyncPolicy>()?;
    m.add_class::<PySyncPlan>()?;
    m.add_class::<PyMediaStore>()?;
    m.add_class::<PyProject>()?;
    m.add_class::<PySession>()?;
    m.add_function(wrap_pyfunction!(compute_sync_plan, m)?)?;
    m.add_function(wrap_pyfunction!(translate_lecture, m)?)?;
    m.add_function(wrap_pyfunction!(write_lecture_fixture, m)?)?;
    m.add_function(wrap_pyfunction!(write_speech_fixture, m)?)?;
    Ok(())
}
