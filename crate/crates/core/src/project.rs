//! The editable timeline: assets, tracks of non-overlapping clips, the
//! marker pair, and the segment operations everything else builds on.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{Fps, Speed, Time};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("split point {0} is on a clip boundary")]
    SplitAtBoundary(Time),
    #[error("unknown clip {0}")]
    UnknownClip(String),
    #[error("unknown track {0}")]
    UnknownTrack(String),
    #[error("unknown asset {0}")]
    UnknownAsset(String),
    #[error("speed must be positive")]
    NonPositiveSpeed,
    #[error("retimed clip {0} would overlap a neighbour")]
    OverlapAfterRetime(String),
    #[error("clip overlaps existing clip {0}")]
    Overlap(String),
    #[error("degenerate asset {0}: {1}")]
    DegenerateAsset(String, String),
    #[error("asset {asset} cannot go on a {track:?} track")]
    KindMismatch { asset: String, track: TrackKind },
    #[error("unsupported schema version {0}")]
    UnsupportedSchema(u32),
    #[error("corrupt project document: {0}")]
    Corrupt(String),
    #[error("revision {given} is stale; current revision is {current}")]
    RevisionConflict { given: u64, current: u64 },
    #[error("io error: {0}")]
    Io(String),
}

impl ProjectError {
    pub fn code(&self) -> &'static str {
        match self {
            ProjectError::InvalidRange(_) => "InvalidRange",
            ProjectError::SplitAtBoundary(_) => "SplitAtBoundary",
            ProjectError::UnknownClip(_) => "UnknownClip",
            ProjectError::UnknownTrack(_) => "UnknownTrack",
            ProjectError::UnknownAsset(_) => "UnknownAsset",
            ProjectError::NonPositiveSpeed => "NonPositiveSpeed",
            ProjectError::OverlapAfterRetime(_) => "OverlapAfterRetime",
            ProjectError::Overlap(_) => "Overlap",
            ProjectError::DegenerateAsset(..) => "DegenerateAsset",
            ProjectError::KindMismatch { .. } => "KindMismatch",
            ProjectError::UnsupportedSchema(_) => "UnsupportedSchema",
            ProjectError::Corrupt(_) => "Corrupt",
            ProjectError::RevisionConflict { .. } => "RevisionConflict",
            ProjectError::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, ProjectError>;

/// Half-open interval `[start, end)` in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: Time,
    pub end: Time,
}

impl TimeRange {
    pub fn new(start: Time, end: Time) -> Result<Self> {
        if start.is_negative() {
            return Err(ProjectError::InvalidRange(format!("start {start} is negative")));
        }
        if end <= start {
            return Err(ProjectError::InvalidRange(format!("end {end} is not after start {start}")));
        }
        Ok(TimeRange { start, end })
    }

    pub fn secs(start: f64, end: f64) -> Result<Self> {
        if !start.is_finite() || !end.is_finite() {
            return Err(ProjectError::InvalidRange("non-finite bound".into()));
        }
        TimeRange::new(Time::from_secs_f64(start), Time::from_secs_f64(end))
    }

    pub fn duration(&self) -> Time {
        self.end - self.start
    }

    pub fn contains_range(&self, other: &TimeRange) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// Strict interior intersection; touching ranges do not overlap.
    pub fn overlaps(&self, other: &TimeRange) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn intersect(&self, other: &TimeRange) -> Option<TimeRange> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (end > start).then_some(TimeRange { start, end })
    }

    fn is_valid(&self) -> bool {
        !self.start.is_negative() && self.end > self.start
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssetKind {
    Video,
    Audio,
    Image,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Resolution {
    pub const fn new(width: u32, height: u32) -> Self {
        Resolution { width, height }
    }
}

/// A media file the timeline can reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Asset {
    pub id: String,
    pub kind: AssetKind,
    /// Storage path, relative to the project's media root.
    pub uri: String,
    pub duration: Time,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<Fps>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Resolution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<u32>,
}

impl Asset {
    pub fn has_audio(&self) -> bool {
        self.sample_rate.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(ProjectError::DegenerateAsset(self.id.clone(), why.into()));
        if self.duration.is_negative() {
            return bad("negative duration");
        }
        if self.sample_rate == Some(0) {
            return bad("zero sample rate");
        }
        if let Some(r) = self.resolution {
            if r.width == 0 || r.height == 0 {
                return bad("zero resolution");
            }
        }
        match self.kind {
            AssetKind::Video => {
                if self.duration.is_zero() {
                    return bad("zero-length video");
                }
                if !self.fps.map(|f| f.is_valid()).unwrap_or(false) {
                    return bad("video without a positive frame rate");
                }
                if self.resolution.is_none() {
                    return bad("video without a resolution");
                }
            }
            AssetKind::Audio => {
                if self.duration.is_zero() {
                    return bad("zero-length audio");
                }
                if self.sample_rate.is_none() {
                    return bad("audio without a sample rate");
                }
            }
            AssetKind::Image => {
                if self.resolution.is_none() {
                    return bad("image without a resolution");
                }
            }
        }
        Ok(())
    }

    /// Whether `range` lies inside the asset. Stills can be held for any span.
    pub fn covers(&self, range: &TimeRange) -> bool {
        match self.kind {
            AssetKind::Image => !range.start.is_negative(),
            _ => !range.start.is_negative() && range.end <= self.duration,
        }
    }
}

/// A placed, possibly retimed, window onto an asset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub id: String,
    pub asset_id: String,
    pub source_range: TimeRange,
    pub timeline_start: Time,
    pub speed: Speed,
}

impl Clip {
    /// A clip that has not been placed yet; `place_clip` assigns its id.
    pub fn new(asset_id: impl Into<String>, source_range: TimeRange) -> Self {
        Clip {
            id: String::new(),
            asset_id: asset_id.into(),
            source_range,
            timeline_start: Time::ZERO,
            speed: Speed::ONE,
        }
    }

    pub fn with_speed(mut self, speed: Speed) -> Self {
        self.speed = speed;
        self
    }

    pub fn duration(&self) -> Time {
        self.source_range.duration() / self.speed
    }

    pub fn timeline_end(&self) -> Time {
        self.timeline_start + self.duration()
    }

    pub fn timeline_range(&self) -> TimeRange {
        TimeRange { start: self.timeline_start, end: self.timeline_end() }
    }

    /// Source time shown at timeline time `t`.
    pub fn source_time_at(&self, t: Time) -> Time {
        self.source_range.start + (t - self.timeline_start) * self.speed
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackKind {
    Video,
    Audio,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: String,
    pub kind: TrackKind,
    pub clips: Vec<Clip>,
}

impl Track {
    pub fn end(&self) -> Time {
        self.clips.last().map(|c| c.timeline_end()).unwrap_or(Time::ZERO)
    }

    /// Clip covering timeline time `t`, if any.
    pub fn clip_at(&self, t: Time) -> Option<&Clip> {
        let idx = self.clips.partition_point(|c| c.timeline_start <= t);
        idx.checked_sub(1)
            .map(|i| &self.clips[i])
            .filter(|c| t < c.timeline_end())
    }

    /// First clip whose timeline extent strictly intersects `range`.
    fn first_overlap(&self, range: &TimeRange, ignore: Option<&str>) -> Option<&Clip> {
        self.clips
            .iter()
            .filter(|c| Some(c.id.as_str()) != ignore)
            .find(|c| c.timeline_range().overlaps(range))
    }

    /// Pieces of this track's clips restricted to `range`, trimmed so each
    /// piece shows exactly the material inside the window.
    pub fn slice(&self, range: &TimeRange) -> Vec<Clip> {
        self.clips
            .iter()
            .filter_map(|c| {
                let cut = c.timeline_range().intersect(range)?;
                let src_start = c.source_time_at(cut.start);
                let src_end = c.source_time_at(cut.end);
                Some(Clip {
                    id: c.id.clone(),
                    asset_id: c.asset_id.clone(),
                    source_range: TimeRange { start: src_start, end: src_end },
                    timeline_start: cut.start,
                    speed: c.speed,
                })
            })
            .collect()
    }

    fn check_sorted_disjoint(&self) -> Result<()> {
        for pair in self.clips.windows(2) {
            if pair[1].timeline_start < pair[0].timeline_end() {
                return Err(ProjectError::Corrupt(format!(
                    "track {}: clips {} and {} overlap or are unsorted",
                    self.id, pair[0].id, pair[1].id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub schema_version: u32,
    pub id: String,
    pub assets: BTreeMap<String, Asset>,
    pub tracks: Vec<Track>,
    pub markers: Option<TimeRange>,
    pub revision: u64,
    /// Counter behind generated clip ids.
    #[serde(default)]
    pub clip_seq: u64,
    /// Editable side documents keyed by name, such as slide overlays.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotations: BTreeMap<String, serde_json::Value>,
}

impl Project {
    pub fn new(id: impl Into<String>) -> Self {
        Project {
            schema_version: SCHEMA_VERSION,
            id: id.into(),
            assets: BTreeMap::new(),
            tracks: Vec::new(),
            markers: None,
            revision: 0,
            clip_seq: 0,
            annotations: BTreeMap::new(),
        }
    }

    fn bump(&mut self) {
        self.revision += 1;
    }

    fn next_clip_id(&mut self) -> String {
        self.clip_seq += 1;
        format!("c{}", self.clip_seq)
    }

    pub fn register_asset(&mut self, asset: Asset) -> Result<()> {
        asset.validate()?;
        if let Some(existing) = self.assets.get(&asset.id) {
            if *existing == asset {
                return Ok(());
            }
        }
        self.assets.insert(asset.id.clone(), asset);
        self.bump();
        Ok(())
    }

    pub fn asset(&self, id: &str) -> Result<&Asset> {
        self.assets.get(id).ok_or_else(|| ProjectError::UnknownAsset(id.to_string()))
    }

    pub fn add_track(&mut self, kind: TrackKind) -> String {
        let prefix = match kind {
            TrackKind::Video => "v",
            TrackKind::Audio => "a",
        };
        let n = self.tracks.iter().filter(|t| t.kind == kind).count() + 1;
        let id = format!("{prefix}{n}");
        self.tracks.push(Track { id: id.clone(), kind, clips: Vec::new() });
        self.bump();
        id
    }

    pub fn track(&self, track_id: &str) -> Result<&Track> {
        self.tracks
            .iter()
            .find(|t| t.id == track_id)
            .ok_or_else(|| ProjectError::UnknownTrack(track_id.to_string()))
    }

    fn track_mut(&mut self, track_id: &str) -> Result<&mut Track> {
        self.tracks
            .iter_mut()
            .find(|t| t.id == track_id)
            .ok_or_else(|| ProjectError::UnknownTrack(track_id.to_string()))
    }

    pub fn first_track(&self, kind: TrackKind) -> Option<&Track> {
        self.tracks.iter().find(|t| t.kind == kind)
    }

    /// Locates a clip as (track index, clip index).
    fn locate(&self, clip_id: &str) -> Result<(usize, usize)> {
        for (ti, track) in self.tracks.iter().enumerate() {
            if let Some(ci) = track.clips.iter().position(|c| c.id == clip_id) {
                return Ok((ti, ci));
            }
        }
        Err(ProjectError::UnknownClip(clip_id.to_string()))
    }

    pub fn clip(&self, clip_id: &str) -> Result<&Clip> {
        let (ti, ci) = self.locate(clip_id)?;
        Ok(&self.tracks[ti].clips[ci])
    }

    /// End of the last clip on any track.
    pub fn timeline_length(&self) -> Time {
        self.tracks.iter().map(Track::end).fold(Time::ZERO, Time::max)
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.iter().all(|t| t.clips.is_empty())
    }

    pub fn set_markers(&mut self, start: Time, end: Time) -> Result<TimeRange> {
        let range = TimeRange::new(start, end)?;
        let length = self.timeline_length();
        if range.end > length {
            return Err(ProjectError::InvalidRange(format!(
                "markers end {} past timeline end {}",
                range.end, length
            )));
        }
        self.markers = Some(range);
        self.bump();
        Ok(range)
    }

    pub fn clear_markers(&mut self) {
        self.markers = None;
        self.bump();
    }

    /// Splits a clip at timeline time `at` into two clips that together show
    /// exactly the original source range.
    pub fn split_clip(&mut self, clip_id: &str, at: Time) -> Result<(Clip, Clip)> {
        let (ti, ci) = self.locate(clip_id)?;
        let original = self.tracks[ti].clips[ci].clone();
        if at == original.timeline_start || at == original.timeline_end() {
            return Err(ProjectError::SplitAtBoundary(at));
        }
        if at < original.timeline_start || at > original.timeline_end() {
            return Err(ProjectError::InvalidRange(format!(
                "split point {at} outside clip {clip_id}"
            )));
        }
        let cut = original.source_time_at(at);
        let left = Clip {
            source_range: TimeRange { start: original.source_range.start, end: cut },
            ..original.clone()
        };
        let right = Clip {
            id: self.next_clip_id(),
            source_range: TimeRange { start: cut, end: original.source_range.end },
            timeline_start: at,
            ..original
        };
        let clips = &mut self.tracks[ti].clips;
        clips[ci] = left.clone();
        clips.insert(ci + 1, right.clone());
        self.bump();
        Ok((left, right))
    }

    pub fn retime_clip(&mut self, clip_id: &str, speed: Speed) -> Result<Clip> {
        if !speed.is_positive() {
            return Err(ProjectError::NonPositiveSpeed);
        }
        let (ti, ci) = self.locate(clip_id)?;
        let mut clip = self.tracks[ti].clips[ci].clone();
        clip.speed = speed;
        if self.tracks[ti].first_overlap(&clip.timeline_range(), Some(clip_id)).is_some() {
            return Err(ProjectError::OverlapAfterRetime(clip_id.to_string()));
        }
        self.tracks[ti].clips[ci] = clip.clone();
        self.bump();
        Ok(clip)
    }

    /// Places `clip` on a track at `at`. An empty clip id is assigned.
    pub fn place_clip(&mut self, track_id: &str, mut clip: Clip, at: Time) -> Result<Clip> {
        if at.is_negative() {
            return Err(ProjectError::InvalidRange(format!("placement {at} is negative")));
        }
        if !clip.speed.is_positive() {
            return Err(ProjectError::NonPositiveSpeed);
        }
        if !clip.source_range.is_valid() {
            return Err(ProjectError::InvalidRange("clip source range".into()));
        }
        let asset = self.asset(&clip.asset_id)?;
        if !asset.covers(&clip.source_range) {
            return Err(ProjectError::InvalidRange(format!(
                "source range outside asset {}",
                asset.id
            )));
        }
        let asset_kind = asset.kind;
        let asset_has_audio = asset.has_audio();
        let track = self.track(track_id)?;
        let fits = match track.kind {
            TrackKind::Video => matches!(asset_kind, AssetKind::Video | AssetKind::Image),
            TrackKind::Audio => asset_has_audio,
        };
        if !fits {
            return Err(ProjectError::KindMismatch { asset: clip.asset_id.clone(), track: track.kind });
        }
        clip.timeline_start = at;
        if let Some(other) = track.first_overlap(&clip.timeline_range(), None) {
            return Err(ProjectError::Overlap(other.id.clone()));
        }
        if clip.id.is_empty() || self.locate(&clip.id).is_ok() {
            clip.id = self.next_clip_id();
        }
        let track = self.track_mut(track_id)?;
        let idx = track.clips.partition_point(|c| c.timeline_start < clip.timeline_start);
        track.clips.insert(idx, clip.clone());
        self.bump();
        Ok(clip)
    }

    /// Narrows a clip's source range; the timeline start stays put.
    pub fn trim_clip(&mut self, clip_id: &str, new_source_range: TimeRange) -> Result<Clip> {
        if !new_source_range.is_valid() {
            return Err(ProjectError::InvalidRange("inverted or negative range".into()));
        }
        let (ti, ci) = self.locate(clip_id)?;
        let clip = &self.tracks[ti].clips[ci];
        let asset = self.asset(&clip.asset_id)?;
        if !asset.covers(&new_source_range) || !clip.source_range.contains_range(&new_source_range) {
            return Err(ProjectError::InvalidRange(format!(
                "trim range outside clip {clip_id}"
            )));
        }
        let clip = &mut self.tracks[ti].clips[ci];
        clip.source_range = new_source_range;
        let trimmed = clip.clone();
        self.bump();
        Ok(trimmed)
    }

    /// Moves every clip of a track starting at or after `from` by `delta`.
    pub fn shift_clips(&mut self, track_id: &str, from: Time, delta: Time) -> Result<()> {
        if delta.is_zero() {
            return Ok(());
        }
        let mut track = self.track(track_id)?.clone();
        for clip in track.clips.iter_mut().filter(|c| c.timeline_start >= from) {
            clip.timeline_start = clip.timeline_start + delta;
            if clip.timeline_start.is_negative() {
                return Err(ProjectError::InvalidRange(format!("clip {} would start before zero", clip.id)));
            }
        }
        if let Err(ProjectError::Corrupt(_)) = track.check_sorted_disjoint() {
            let blocker = track.clips.iter().find(|c| c.timeline_start < from).map(|c| c.id.clone()).unwrap_or_default();
            return Err(ProjectError::Overlap(blocker));
        }
        *self.track_mut(track_id)? = track;
        self.bump();
        Ok(())
    }

    pub fn set_annotation(&mut self, key: impl Into<String>, value: serde_json::Value) {
        self.annotations.insert(key.into(), value);
        self.bump();
    }

    pub fn remove_clip(&mut self, clip_id: &str) -> Result<Clip> {
        let (ti, ci) = self.locate(clip_id)?;
        let clip = self.tracks[ti].clips.remove(ci);
        self.bump();
        Ok(clip)
    }

    /// Checks every structural invariant of a loaded document.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ProjectError::UnsupportedSchema(self.schema_version));
        }
        for (id, asset) in &self.assets {
            if id != &asset.id {
                return Err(ProjectError::Corrupt(format!("asset key {id} != id {}", asset.id)));
            }
            asset.validate()?;
        }
        if let Some(m) = &self.markers {
            if !m.is_valid() {
                return Err(ProjectError::Corrupt("invalid markers".into()));
            }
        }
        for track in &self.tracks {
            for clip in &track.clips {
                let asset = self.asset(&clip.asset_id)?;
                if !clip.speed.is_positive() || !clip.source_range.is_valid() || !asset.covers(&clip.source_range) {
                    return Err(ProjectError::Corrupt(format!("clip {} is malformed", clip.id)));
                }
            }
            track.check_sorted_disjoint()?;
        }
        Ok(())
    }

    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("project serializes")
    }

    pub fn from_document(text: &str) -> Result<Project> {
        let project: Project =
            serde_json::from_str(text).map_err(|e| ProjectError::Corrupt(e.to_string()))?;
        project.validate()?;
        Ok(project)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_document()).map_err(|e| ProjectError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Project> {
        let text = std::fs::read_to_string(path).map_err(|e| ProjectError::Io(e.to_string()))?;
        Project::from_document(&text)
    }
}

/// Shared project with a single writer; readers get consistent snapshots.
#[derive(Clone)]
pub struct ProjectHandle {
    inner: Arc<RwLock<Project>>,
}

impl ProjectHandle {
    pub fn new(project: Project) -> Self {
        ProjectHandle { inner: Arc::new(RwLock::new(project)) }
    }

    pub fn snapshot(&self) -> Project {
        self.inner.read().expect("project lock poisoned").clone()
    }

    pub fn revision(&self) -> u64 {
        self.inner.read().expect("project lock poisoned").revision
    }

    /// Runs a mutation under the writer lock. On error the project is
    /// left exactly as it was.
    pub fn mutate<T>(&self, f: impl FnOnce(&mut Project) -> Result<T>) -> Result<T> {
        let mut guard = self.inner.write().expect("project lock poisoned");
        let mut draft = guard.clone();
        let out = f(&mut draft)?;
        *guard = draft;
        Ok(out)
    }
}
