//! Headless lecture translation: speech-to-speech, synchronisation,
//! optional slide translation and lipsync, then export.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::AdapterRegistry;
use crate::face::{self, FaceError, LipsyncOptions};
use crate::geometry::PixelRect;
use crate::media::{self, ExportSettings, MediaError, MediaProbe, MediaStore, StreamSelect};
use crate::project::{Asset, AssetKind, Clip, Project, ProjectError, TimeRange, TrackKind};
use crate::s2s::{PipelineSession, S2sError, TextDoc};
use crate::slides::{self, OverlaySpec, SlideError};
use crate::sync::{self, AppliedChunk, ApplyTargets, ChunkMedia, SyncError, SyncPlan, SyncPolicy};
use crate::time::{Speed, Time};

#[derive(Debug, Error)]
pub enum LectureError {
    #[error("input error: {0}")]
    Input(String),
    #[error("adapter failure: {0}")]
    Adapter(String),
    #[error("encoder failure: {0}")]
    Encoder(String),
}

impl LectureError {
    /// Process exit code for the failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            LectureError::Input(_) => 2,
            LectureError::Adapter(_) => 3,
            LectureError::Encoder(_) => 4,
        }
    }
}

impl From<MediaError> for LectureError {
    fn from(e: MediaError) -> Self {
        match e {
            MediaError::EncoderFailure(m) => LectureError::Encoder(m),
            MediaError::Undecodable(m) => LectureError::Input(format!("undecodable input: {m}")),
            other => LectureError::Input(other.to_string()),
        }
    }
}

impl From<ProjectError> for LectureError {
    fn from(e: ProjectError) -> Self {
        LectureError::Input(e.to_string())
    }
}

macro_rules! adapter_failure {
    ($($t:ty),*) => {$(
        impl From<$t> for LectureError {
            fn from(e: $t) -> Self {
                LectureError::Adapter(e.to_string())
            }
        }
    )*};
}
adapter_failure!(SlideError, FaceError, crate::adapters::AdapterError);

impl From<S2sError> for LectureError {
    fn from(e: S2sError) -> Self {
        match e {
            S2sError::Adapter(a) => a.into(),
            other => LectureError::Input(other.to_string()),
        }
    }
}

impl From<SyncError> for LectureError {
    fn from(e: SyncError) -> Self {
        match e {
            SyncError::InvalidPolicy(_) | SyncError::InvalidPair(..) | SyncError::Project(_) => LectureError::Input(e.to_string()),
            SyncError::Media(m) => m.into(),
            other => LectureError::Adapter(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, LectureError>;

/// Corrected text per document, keyed by segment id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EditsSidecar {
    #[serde(default)]
    pub transcript: BTreeMap<u32, String>,
    #[serde(default)]
    pub translation: BTreeMap<u32, String>,
}

impl EditsSidecar {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LectureError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LectureError::Input(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct LectureOptions {
    pub src_lang: String,
    pub tgt_lang: String,
    pub voice: String,
    pub lipsync: bool,
    pub bg_translate: bool,
    pub separate_music: bool,
    pub policy: SyncPolicy,
    pub edits: EditsSidecar,
    /// Export settings; `None` keeps the input's fps and resolution.
    pub export: Option<ExportSettings>,
    pub quality: media::Quality,
}

impl LectureOptions {
    pub fn new(src_lang: &str, tgt_lang: &str) -> Self {
        LectureOptions {
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
            voice: "default".into(),
            lipsync: false,
            bg_translate: false,
            separate_music: false,
            policy: SyncPolicy::default(),
            edits: EditsSidecar::default(),
            export: None,
            quality: media::Quality::Medium,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LectureReport {
    pub project: Project,
    pub session: PipelineSession,
    pub plan: Option<SyncPlan>,
    pub applied: Vec<AppliedChunk>,
    pub overlays: Vec<OverlaySpec>,
    pub output: MediaProbe,
}

/// Union of the video's face boxes over all frames, padded a little.
fn face_region(store: &MediaStore, video: &Asset) -> Result<Option<PixelRect>> {
    let (v, _, faces) = store.load(video)?.into_video()?;
    let mut region: Option<PixelRect> = None;
    for track in &faces {
        for i in 0..track.offsets.len() {
            let Some(points) = track.landmarks_at(i) else { continue };
            if let Some(b) = PixelRect::bounding(&points, v.width, v.height) {
                region = Some(match region {
                    Some(r) => PixelRect::new(r.x0.min(b.x0), r.y0.min(b.y0), r.x1.max(b.x1), r.y1.max(b.y1)),
                    None => b,
                });
            }
        }
    }
    Ok(region.map(|r| r.pad(4, v.width, v.height)))
}

fn translate_slides(
    store: &MediaStore,
    registry: &AdapterRegistry,
    project: &mut Project,
    video: &Asset,
    opts: &LectureOptions,
) -> Result<Vec<OverlaySpec>> {
    let spans = slides::detect_constant_slide_spans(
        store,
        video,
        &TimeRange::new(Time::ZERO, video.duration)?,
        slides::DEFAULT_STABILITY_THRESHOLD,
    )?;
    let preserve = face_region(store, video)?;
    let mut specs = Vec::new();
    for (k, span) in spans.iter().enumerate() {
        let frame = slides::reference_frame(store, video, span)?;
        let regions = slides::extract_slide_text(registry, &frame, None)?;
        let regions: Vec<_> = regions.into_iter().filter(|r| preserve.is_none_or(|p| !p.overlaps(&r.bbox))).collect();
        if regions.is_empty() {
            continue;
        }
        let translated = slides::translate_regions(registry, &regions, &opts.src_lang, &opts.tgt_lang, None)?;
        let spec = OverlaySpec::from_regions(&frame, &translated);
        let overlaid = slides::render_overlay(&frame, &spec)?;
        slides::apply_overlay_span(store, project, span, &overlaid, preserve)?;
        project.set_annotation(
            format!("overlay/{k}"),
            serde_json::json!({ "span": span, "spec": spec }),
        );
        specs.push(spec);
    }
    Ok(specs)
}

/// Replaces the video under each chunk's first clip with a lipsynced
/// version driven by the placed translation.
fn lipsync_chunks(
    store: &MediaStore,
    registry: &AdapterRegistry,
    project: &mut Project,
    chunks: &[ChunkMedia],
    applied: &[AppliedChunk],
    plan: &SyncPlan,
    separate_music: bool,
) -> Result<()> {
    let vtrack = project.first_track(TrackKind::Video).map(|t| t.id.clone()).ok_or(ProjectError::UnknownTrack("video".into()))?;
    let options = LipsyncOptions { separate_music, ..LipsyncOptions::default() };
    for (chunk, placed) in chunks.iter().zip(applied) {
        let Some(clip) = project.track(&vtrack)?.clip_at(placed.range.start).cloned() else { continue };
        if project.asset(&clip.asset_id)?.kind != AssetKind::Video {
            continue;
        }
        let end = clip.timeline_end().min(placed.range.end);
        let range = TimeRange::new(placed.range.start, end)?;
        let effect = sync::ChunkEffect::of(plan.chunk_actions(chunk.chunk_id));
        let speech = media::retime_render(store, &chunk.audio, Speed::from_f64(effect.audio_factor))?;
        let len = range.duration().min(speech.duration);
        let speech = media::extract_segment(store, &speech, &TimeRange::new(Time::ZERO, len)?, StreamSelect::Audio)?;
        let result = match face::lipsync_segment(store, registry, project, &range, None, &speech, &options) {
            Ok(r) => r,
            Err(FaceError::Adapter(crate::adapters::AdapterError::NoFaceFound)) => {
                log::warn!("chunk {}: no face to lipsync", chunk.chunk_id);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        project.register_asset(result.asset.clone())?;
        let mut middle = clip.id.clone();
        if range.start > clip.timeline_start {
            middle = project.split_clip(&middle, range.start)?.1.id;
        }
        if range.end < clip.timeline_end() {
            project.split_clip(&middle, range.end)?;
        }
        project.remove_clip(&middle)?;
        let used = range.duration().min(result.asset.duration);
        project.place_clip(&vtrack, Clip::new(result.asset.id.clone(), TimeRange::new(Time::ZERO, used)?), range.start)?;
        if used < range.duration() {
            let still = media::extract_frame(store, &result.asset, result.asset.duration)?;
            project.register_asset(still.clone())?;
            project.place_clip(&vtrack, Clip::new(still.id, TimeRange::new(Time::ZERO, range.duration() - used)?), range.start + used)?;
        }
    }
    Ok(())
}

/// Translates a lecture video end to end and writes the result to `out`.
pub fn translate_lecture(
    store: &MediaStore,
    registry: &AdapterRegistry,
    input: &Path,
    out: &Path,
    opts: &LectureOptions,
) -> Result<LectureReport> {
    opts.policy.validate()?;
    if let Some(s) = &opts.export {
        s.validate()?;
    }
    let video = store.import(input, "imports")?;
    if video.kind != AssetKind::Video {
        return Err(LectureError::Input(format!("{} is not a video", input.display())));
    }
    let mut project = Project::new("lecture");
    project.register_asset(video.clone())?;
    let vtrack = project.add_track(TrackKind::Video);
    project.place_clip(&vtrack, Clip::new(video.id.clone(), TimeRange::new(Time::ZERO, video.duration)?), Time::ZERO)?;

    let mut session = PipelineSession::new("batch", &opts.src_lang, &opts.tgt_lang);
    if video.has_audio() {
        let full = TimeRange::new(Time::ZERO, video.duration)?;
        let speech = media::extract_segment(store, &video, &full, StreamSelect::Audio)?;
        if opts.separate_music {
            let (_, music) = registry.vocal_separator()?.separate_vocals(store, &speech)?;
            project.register_asset(music.clone())?;
            let mtrack = project.add_track(TrackKind::Audio);
            project.place_clip(&mtrack, Clip::new(music.id.clone(), TimeRange::new(Time::ZERO, music.duration)?), Time::ZERO)?;
        }
        session.run_asr(store, registry, &speech, None)?;
    } else {
        log::warn!("{} has no audio; nothing to translate", input.display());
        let n = video.duration.sample_round(16_000) as usize;
        let silence = store.put(&media::Media::Audio(media::Audio::silence(16_000, n)), "imports")?;
        session.run_asr(store, registry, &silence, None)?;
    }
    for (id, text) in &opts.edits.transcript {
        session.edit_text(TextDoc::Transcript, *id, text)?;
    }
    session.run_nmt(registry, None)?;
    for (id, text) in &opts.edits.translation {
        session.edit_text(TextDoc::Translation, *id, text)?;
    }
    session.run_tts(store, registry, &opts.voice, None)?;

    let overlays = if opts.bg_translate { translate_slides(store, registry, &mut project, &video, opts)? } else { Vec::new() };

    let mut chunks = Vec::new();
    for unit in &session.tts_assets {
        let seg = session
            .transcript
            .segments
            .iter()
            .find(|s| s.id == unit.segment_id)
            .expect("synthesized units come from segments");
        let end = seg.end.min(video.duration);
        if end <= seg.start {
            continue;
        }
        let still = media::extract_frame(store, &video, seg.start)?;
        let has_face = !store.load(&still)?.faces().is_empty();
        chunks.push(ChunkMedia {
            chunk_id: seg.id,
            range: TimeRange::new(seg.start, end)?,
            audio: unit.asset.clone(),
            face_image: has_face.then_some(still),
            driving_video: None,
        });
    }

    let (plan, applied) = if chunks.is_empty() {
        (None, Vec::new())
    } else {
        let pairs: Vec<_> = chunks
            .iter()
            .map(|c| sync::SegmentPair {
                chunk_id: c.chunk_id,
                video_duration: c.range.duration().as_secs_f64(),
                audio_duration: c.audio.duration.as_secs_f64(),
                face_available: c.face_image.is_some(),
            })
            .collect();
        let plan = sync::compute_sync_plan(&pairs, &opts.policy)?;
        let targets = ApplyTargets { video_track: Some(vtrack.clone()), audio_track: None };
        let (p, applied) = sync::apply_sync_plan(store, registry, &project, &chunks, &plan, &targets)?;
        project = p;
        if opts.lipsync {
            lipsync_chunks(store, registry, &mut project, &chunks, &applied, &plan, opts.separate_music)?;
        }
        (Some(plan), applied)
    };
    project.validate()?;

    let settings = opts.export.unwrap_or(ExportSettings {
        quality: opts.quality,
        fps: video.fps.expect("video assets have fps"),
        resolution: video.resolution.expect("video assets have a resolution"),
    });
    let output = media::export(store, &project, &settings, out)?;
    Ok(LectureReport { project, session, plan, applied, overlays, output })
}
