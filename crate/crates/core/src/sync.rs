//! Per-chunk synchronisation of translated audio with the original video.
//!
//! For a chunk with video length `V` and audio length `A`, the planner
//! picks speed factors `f_v`, `f_a` within the policy bounds. Retimed
//! lengths are `V / f_v` and `A / f_a`; any remaining difference is closed
//! by synthetic fill or a held frame when the video is short, and by
//! padding the audio with silence (a held frame on the video side of the
//! cut) when the audio is short. The cost
//!
//! ```text
//! w_r * |1 - f_v| + w_r * |1 - f_a| + w_f * fill + w_h * hold
//! ```
//!
//! is minimised exactly. Inside a region where the gap keeps its sign the
//! cost separates into one function of `f_v` and one of `f_a`, so any
//! minimiser with a non-zero gap pairs 1-D local minima (bounds, the kink
//! at 1, stationary points). The only other candidates lie on the
//! zero-gap curve `f_a = (A / V) f_v`, which is again a 1-D problem.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{AdapterError, AdapterRegistry};
use crate::media::{self, MediaError, MediaStore, StreamSelect};
use crate::project::{Asset, AssetKind, Clip, Project, ProjectError, TimeRange, TrackKind};
use crate::time::{Speed, Time};

/// Factors closer than this to 1 count as no retime.
const FACTOR_TOL: f64 = 1e-12;
/// Gaps shorter than this (seconds) need no fill.
const GAP_TOL: f64 = 1e-9;
/// Costs closer than this tie.
const COST_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("no chunks to plan")]
    EmptyInput,
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("chunk {0}: {1}")]
    InvalidPair(u32, String),
    #[error("chunk {0} cannot be synchronised")]
    InfeasibleChunk(u32),
    #[error("plan references unknown chunk {0}")]
    UnknownChunk(u32),
    #[error("plan does not validate: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Project(#[from] ProjectError),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
}

pub type Result<T> = std::result::Result<T, SyncError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillKind {
    TalkingHead,
    Reenact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncPolicy {
    pub speed_bounds: [f64; 2],
    pub retime_cost_weight: f64,
    pub fill_cost_weight: f64,
    pub hold_cost_weight: f64,
    /// Largest tolerated video/audio mismatch per chunk, in seconds.
    pub epsilon: f64,
    /// Penalise retiming by `w_r * (1 - f)^2` instead of `w_r * |1 - f|`.
    #[serde(default)]
    pub quadratic_retime: bool,
    #[serde(default = "default_fill_kind")]
    pub fill_kind: FillKind,
}

fn default_fill_kind() -> FillKind {
    FillKind::TalkingHead
}

impl Default for SyncPolicy {
    fn default() -> Self {
        SyncPolicy {
            speed_bounds: [0.9, 1.1],
            retime_cost_weight: 1.0,
            fill_cost_weight: 0.1,
            hold_cost_weight: 0.2,
            epsilon: 0.05,
            quadratic_retime: false,
            fill_kind: FillKind::TalkingHead,
        }
    }
}

impl SyncPolicy {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.speed_bounds;
        let bad = |m: &str| Err(SyncError::InvalidPolicy(m.to_string()));
        if !(lo > 0.0 && lo <= 1.0 && 1.0 <= hi && hi.is_finite()) {
            return bad("speed bounds must satisfy 0 < min <= 1 <= max");
        }
        let weights = [self.retime_cost_weight, self.fill_cost_weight, self.hold_cost_weight];
        if !weights.iter().all(|w| *w > 0.0 && w.is_finite()) {
            return bad("weights must be positive");
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be non-negative");
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || value.parse::<f64>().map_err(|_| SyncError::InvalidPolicy(format!("{key}: not a number")));
        match key {
            "s_min" | "speed_min" => self.speed_bounds[0] = num()?,
            "s_max" | "speed_max" => self.speed_bounds[1] = num()?,
            "w_r" | "retime_cost_weight" => self.retime_cost_weight = num()?,
            "w_f" | "fill_cost_weight" => self.fill_cost_weight = num()?,
            "w_h" | "hold_cost_weight" => self.hold_cost_weight = num()?,
            "epsilon" => self.epsilon = num()?,
            "quadratic_retime" => {
                self.quadratic_retime = value
                    .parse()
                    .map_err(|_| SyncError::InvalidPolicy(format!("{key}: expected true or false")))?
            }
            "fill_kind" => {
                self.fill_kind = match value {
                    "talking_head" => FillKind::TalkingHead,
                    "reenact" => FillKind::Reenact,
                    _ => return Err(SyncError::InvalidPolicy(format!("{key}: unknown fill kind {value}"))),
                }
            }
            _ => return Err(SyncError::InvalidPolicy(format!("unknown key {key}"))),
        }
        self.validate()
    }

    fn retime_cost(&self, f: f64) -> f64 {
        if self.quadratic_retime {
            self.retime_cost_weight * (1.0 - f) * (1.0 - f)
        } else {
            self.retime_cost_weight * (1.0 - f).abs()
        }
    }

    /// Derivative of the retime cost away from the kink at 1.
    fn retime_slope(&self, f: f64) -> f64 {
        if self.quadratic_retime {
            -2.0 * self.retime_cost_weight * (1.0 - f)
        } else if f < 1.0 {
            -self.retime_cost_weight
        } else {
            self.retime_cost_weight
        }
    }

    /// Per-second cost of closing a gap where the video is short, and
    /// whether that uses synthetic fill.
    fn short_video_rate(&self, face_available: bool) -> (f64, bool) {
        if face_available && self.fill_cost_weight <= self.hold_cost_weight {
            (self.fill_cost_weight, true)
        } else {
            (self.hold_cost_weight, false)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentPair {
    pub chunk_id: u32,
    pub video_duration: f64,
    pub audio_duration: f64,
    pub face_available: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HoldStream {
    /// Freeze the last video frame.
    Video,
    /// Pad the audio with silence while the video plays on.
    Audio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionKind {
    Place,
    RetimeVideo { factor: f64 },
    RetimeAudio { factor: f64 },
    FillTalkingHead { duration: f64 },
    FillReenact { duration: f64 },
    HoldFrame { duration: f64, stream: HoldStream },
}

impl ActionKind {
    /// Preference rank; lower is preferred when costs tie.
    pub fn rank(&self) -> u32 {
        match self {
            ActionKind::Place => 0,
            ActionKind::RetimeVideo { .. } => 1,
            ActionKind::RetimeAudio { .. } => 2,
            ActionKind::FillTalkingHead { .. } | ActionKind::FillReenact { .. } => 3,
            ActionKind::HoldFrame { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncAction {
    pub chunk_id: u32,
    #[serde(flatten)]
    pub kind: ActionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncPlan {
    pub actions: Vec<SyncAction>,
    pub policy: SyncPolicy,
    pub total_cost: f64,
}

impl SyncPlan {
    pub fn chunk_actions(&self, chunk_id: u32) -> impl Iterator<Item = &ActionKind> {
        self.actions.iter().filter(move |a| a.chunk_id == chunk_id).map(|a| &a.kind)
    }

    pub fn chunk_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.actions.iter().map(|a| a.chunk_id).collect();
        ids.dedup();
        ids
    }

    /// The plan as a declarative edit decision list.
    pub fn to_edl(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_edl(text: &str) -> Result<SyncPlan> {
        serde_json::from_str(text).map_err(|e| SyncError::InvalidPlan(e.to_string()))
    }
}

/// The effect of a chunk's actions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChunkEffect {
    pub video_factor: f64,
    pub audio_factor: f64,
    pub fill: f64,
    pub hold_video: f64,
    pub hold_audio: f64,
}

impl ChunkEffect {
    pub fn of<'a>(actions: impl Iterator<Item = &'a ActionKind>) -> ChunkEffect {
        let mut e = ChunkEffect { video_factor: 1.0, audio_factor: 1.0, ..Default::default() };
        for a in actions {
            match *a {
                ActionKind::Place => {}
                ActionKind::RetimeVideo { factor } => e.video_factor = factor,
                ActionKind::RetimeAudio { factor } => e.audio_factor = factor,
                ActionKind::FillTalkingHead { duration } | ActionKind::FillReenact { duration } => e.fill += duration,
                ActionKind::HoldFrame { duration, stream: HoldStream::Video } => e.hold_video += duration,
                ActionKind::HoldFrame { duration, stream: HoldStream::Audio } => e.hold_audio += duration,
            }
        }
        e
    }

    pub fn video_out(&self, pair: &SegmentPair) -> f64 {
        pair.video_duration / self.video_factor + self.fill + self.hold_video
    }

    pub fn audio_out(&self, pair: &SegmentPair) -> f64 {
        pair.audio_duration / self.audio_factor + self.hold_audio
    }

    pub fn cost(&self, policy: &SyncPolicy) -> f64 {
        policy.retime_cost(self.video_factor)
            + policy.retime_cost(self.audio_factor)
            + policy.fill_cost_weight * self.fill
            + policy.hold_cost_weight * (self.hold_video + self.hold_audio)
    }
}

/// Cost of factors `(f_v, f_a)` with the remaining gap closed at the
/// cheapest admissible rate.
pub fn chunk_cost(policy: &SyncPolicy, pair: &SegmentPair, f_v: f64, f_a: f64) -> f64 {
    let gap = pair.audio_duration / f_a - pair.video_duration / f_v;
    let gap_cost = if gap > 0.0 {
        policy.short_video_rate(pair.face_available).0 * gap
    } else {
        policy.hold_cost_weight * -gap
    };
    policy.retime_cost(f_v) + policy.retime_cost(f_a) + gap_cost
}

/// Candidate local minimisers of a 1-D function on `[lo, hi]` given its
/// derivative: the interval ends, interior kinks, and sign changes of the
/// derivative from negative to positive.
fn local_minima(lo: f64, hi: f64, kinks: &[f64], deriv: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    pts.extend(kinks.iter().copied().filter(|k| *k > lo && *k < hi));
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    let mut out = pts.clone();
    const STEPS: usize = 64;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        let at = |i: usize| a + (b - a) * i as f64 / STEPS as f64;
        // Probe strictly inside the piece so kinks do not confuse the sign.
        let probe = |x: f64| deriv(x.clamp(a + (b - a) * 1e-9, b - (b - a) * 1e-9));
        for i in 0..STEPS {
            let (mut x0, mut x1) = (at(i), at(i + 1));
            let (d0, d1) = (probe(x0), probe(x1));
            if !(d0 < 0.0 && d1 > 0.0) {
                continue;
            }
            for _ in 0..200 {
                let mid = 0.5 * (x0 + x1);
                if probe(mid) < 0.0 {
                    x0 = mid;
                } else {
                    x1 = mid;
                }
            }
            out.push(0.5 * (x0 + x1));
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    f_v: f64,
    f_a: f64,
    cost: f64,
    mask: u32,
}

fn actions_for(policy: &SyncPolicy, pair: &SegmentPair, f_v: f64, f_a: f64) -> Vec<ActionKind> {
    let mut out = Vec::new();
    if (f_v - 1.0).abs() > FACTOR_TOL {
        out.push(ActionKind::RetimeVideo { factor: f_v });
    }
    if (f_a - 1.0).abs() > FACTOR_TOL {
        out.push(ActionKind::RetimeAudio { factor: f_a });
    }
    let gap = pair.audio_duration / f_a - pair.video_duration / f_v;
    if gap > GAP_TOL {
        match policy.short_video_rate(pair.face_available) {
            (_, true) => out.push(match policy.fill_kind {
                FillKind::TalkingHead => ActionKind::FillTalkingHead { duration: gap },
                FillKind::Reenact => ActionKind::FillReenact { duration: gap },
            }),
            (_, false) => out.push(ActionKind::HoldFrame { duration: gap, stream: HoldStream::Video }),
        }
    } else if gap < -GAP_TOL {
        out.push(ActionKind::HoldFrame { duration: -gap, stream: HoldStream::Audio });
    }
    if out.is_empty() {
        out.push(ActionKind::Place);
    }
    out
}

fn mask_of(actions: &[ActionKind]) -> u32 {
    actions.iter().fold(0, |m, a| m | 1 << a.rank())
}

/// Optimal `(f_v, f_a)` for one chunk.
pub fn solve_chunk(pair: &SegmentPair, policy: &SyncPolicy) -> Result<(f64, f64, f64)> {
    let (v, a) = (pair.video_duration, pair.audio_duration);
    if !(v >= 0.0 && a >= 0.0 && v.is_finite() && a.is_finite()) {
        return Err(SyncError::InvalidPair(pair.chunk_id, "durations must be finite and non-negative".into()));
    }
    let [lo, hi] = policy.speed_bounds;
    let (c_short, _) = policy.short_video_rate(pair.face_available);
    let c_long = policy.hold_cost_weight;
    let slope = |f: f64| policy.retime_slope(f);

    let mut points: Vec<(f64, f64)> = Vec::new();
    // Video short (gap >= 0): R(f_v) - c V / f_v and R(f_a) + c A / f_a.
    // Audio short (gap <= 0): R(f_v) + c V / f_v and R(f_a) - c A / f_a.
    for (cv, ca) in [(-c_short * v, c_short * a), (c_long * v, -c_long * a)] {
        let fv = local_minima(lo, hi, &[1.0], |f| slope(f) - cv / (f * f));
        let fa = local_minima(lo, hi, &[1.0], |f| slope(f) - ca / (f * f));
        for &x in &fv {
            for &y in &fa {
                points.push((x, y));
            }
        }
    }
    // Zero gap: f_a = r f_v.
    if v > 0.0 && a > 0.0 {
        let r = a / v;
        let (clo, chi) = (lo.max(lo / r), hi.min(hi / r));
        if clo <= chi {
            for f in local_minima(clo, chi, &[1.0, 1.0 / r], |f| slope(f) + r * slope(r * f)) {
                points.push((f, (r * f).clamp(lo, hi)));
            }
        }
    }

    let best = points
        .into_iter()
        .map(|(f_v, f_a)| Candidate {
            f_v,
            f_a,
            cost: chunk_cost(policy, pair, f_v, f_a),
            mask: mask_of(&actions_for(policy, pair, f_v, f_a)),
        })
        .filter(|c| c.cost.is_finite())
        .reduce(|best, c| {
            if c.cost < best.cost - COST_TOL {
                return c;
            }
            if c.cost > best.cost + COST_TOL {
                return best;
            }
            let dev = |x: &Candidate| (x.f_v - 1.0).abs() + (x.f_a - 1.0).abs();
            let key = |x: &Candidate| (x.mask, dev(x), x.cost);
            if key(&c).partial_cmp(&key(&best)) == Some(std::cmp::Ordering::Less) {
                c
            } else {
                best
            }
        })
        .ok_or(SyncError::InfeasibleChunk(pair.chunk_id))?;
    Ok((best.f_v, best.f_a, best.cost))
}

pub fn compute_sync_plan(pairs: &[SegmentPair], policy: &SyncPolicy) -> Result<SyncPlan> {
    if pairs.is_empty() {
        return Err(SyncError::EmptyInput);
    }
    policy.validate()?;
    let mut actions = Vec::new();
    let mut total_cost = 0.0;
    for pair in pairs {
        let (f_v, f_a, cost) = solve_chunk(pair, policy)?;
        total_cost += cost;
        actions.extend(actions_for(policy, pair, f_v, f_a).into_iter().map(|kind| SyncAction { chunk_id: pair.chunk_id, kind }));
    }
    Ok(SyncPlan { actions, policy: policy.clone(), total_cost })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "finding", rename_all = "snake_case")]
pub enum Finding {
    BoundsViolation { chunk_id: u32, factor: f64 },
    Mismatch { chunk_id: u32, video: f64, audio: f64 },
    NonPositiveDuration { chunk_id: u32 },
    UnknownChunk { chunk_id: u32 },
    MissingChunk { chunk_id: u32 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Recomputes every chunk's output lengths and flags problems.
pub fn validate_plan(plan: &SyncPlan, pairs: &[SegmentPair]) -> ValidationReport {
    let policy = &plan.policy;
    let [lo, hi] = policy.speed_bounds;
    let mut findings = Vec::new();
    for id in plan.chunk_ids() {
        if !pairs.iter().any(|p| p.chunk_id == id) {
            findings.push(Finding::UnknownChunk { chunk_id: id });
        }
    }
    for pair in pairs {
        let id = pair.chunk_id;
        if plan.chunk_actions(id).next().is_none() {
            findings.push(Finding::MissingChunk { chunk_id: id });
            continue;
        }
        for a in plan.chunk_actions(id) {
            match *a {
                ActionKind::RetimeVideo { factor } | ActionKind::RetimeAudio { factor } => {
                    if !(factor >= lo - 1e-12 && factor <= hi + 1e-12) {
                        findings.push(Finding::BoundsViolation { chunk_id: id, factor });
                    }
                }
                ActionKind::FillTalkingHead { duration }
                | ActionKind::FillReenact { duration }
                | ActionKind::HoldFrame { duration, .. } => {
                    if duration.is_nan() || duration <= 0.0 {
                        findings.push(Finding::NonPositiveDuration { chunk_id: id });
                    }
                }
                ActionKind::Place => {}
            }
        }
        let e = ChunkEffect::of(plan.chunk_actions(id));
        let (video, audio) = (e.video_out(pair), e.audio_out(pair));
        let gap = (video - audio).abs();
        if gap.is_nan() || gap > policy.epsilon {
            findings.push(Finding::Mismatch { chunk_id: id, video, audio });
        }
    }
    ValidationReport { findings }
}

/// Media for one chunk of the timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkMedia {
    pub chunk_id: u32,
    /// Span of the chunk on the timeline before any edits.
    pub range: TimeRange,
    /// Translated speech for the chunk.
    pub audio: Asset,
    /// Still with a face, used for talking-head fill.
    #[serde(default)]
    pub face_image: Option<Asset>,
    /// Motion source for re-enactment fill.
    #[serde(default)]
    pub driving_video: Option<Asset>,
}

/// Where a chunk ended up and how long its two streams are. Silence
/// padding counts towards the audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedChunk {
    pub chunk_id: u32,
    pub range: TimeRange,
    pub video_duration: Time,
    pub audio_duration: Time,
}

impl AppliedChunk {
    pub fn mismatch(&self) -> f64 {
        (self.video_duration - self.audio_duration).as_secs_f64().abs()
    }
}

/// Timeline track ids the plan is applied to.
#[derive(Debug, Clone, Default)]
pub struct ApplyTargets {
    /// Defaults to the first video track.
    pub video_track: Option<String>,
    /// Defaults to a new audio track.
    pub audio_track: Option<String>,
}

fn add_asset(project: &mut Project, asset: &Asset) -> Result<()> {
    Ok(project.register_asset(asset.clone())?)
}

/// Last frame shown by a clip, as a still.
fn last_frame_still(store: &MediaStore, project: &Project, clip: &Clip) -> Result<Asset> {
    let asset = project.asset(&clip.asset_id)?;
    if asset.kind == AssetKind::Image {
        return Ok(asset.clone());
    }
    let fps = asset.fps.ok_or(MediaError::MissingStream("video"))?;
    let t = (clip.source_range.end - fps.frame_duration()).max(clip.source_range.start);
    Ok(media::extract_frame(store, asset, t)?)
}

/// Places a still for `duration` at `at`.
fn place_still(project: &mut Project, track: &str, still: &Asset, at: Time, duration: Time) -> Result<()> {
    add_asset(project, still)?;
    project.place_clip(track, Clip::new(still.id.clone(), TimeRange::new(Time::ZERO, duration)?), at)?;
    Ok(())
}

/// Rewrites the timeline so each chunk's video and translated audio line
/// up as the plan prescribes. Chunks are processed in timeline order and
/// later material shifts by each chunk's change in length.
pub fn apply_sync_plan(
    store: &MediaStore,
    registry: &AdapterRegistry,
    project: &Project,
    chunks: &[ChunkMedia],
    plan: &SyncPlan,
    targets: &ApplyTargets,
) -> Result<(Project, Vec<AppliedChunk>)> {
    for id in plan.chunk_ids() {
        if !chunks.iter().any(|c| c.chunk_id == id) {
            return Err(SyncError::UnknownChunk(id));
        }
    }
    let pairs: Vec<SegmentPair> = chunks
        .iter()
        .map(|c| SegmentPair {
            chunk_id: c.chunk_id,
            video_duration: c.range.duration().as_secs_f64(),
            audio_duration: c.audio.duration.as_secs_f64(),
            face_available: c.face_image.is_some() || c.driving_video.is_some(),
        })
        .collect();
    let report = validate_plan(plan, &pairs);
    if !report.is_clean() {
        return Err(SyncError::InvalidPlan(format!("{:?}", report.findings)));
    }

    let mut p = project.clone();
    let vtrack = match &targets.video_track {
        Some(t) => t.clone(),
        None => p.first_track(TrackKind::Video).map(|t| t.id.clone()).ok_or(ProjectError::UnknownTrack("video".into()))?,
    };
    let atrack = match &targets.audio_track {
        Some(t) => t.clone(),
        None => p.add_track(TrackKind::Audio),
    };
    let mut order: Vec<&ChunkMedia> = chunks.iter().collect();
    order.sort_by_key(|c| c.range.start);
    let mut shift = Time::ZERO;
    let mut applied = Vec::new();

    for chunk in order {
        let effect = ChunkEffect::of(plan.chunk_actions(chunk.chunk_id));
        let sv = Speed::from_f64(effect.video_factor);
        let sa = Speed::from_f64(effect.audio_factor);
        let r = TimeRange::new(chunk.range.start + shift, chunk.range.end + shift)?;
        let v_len = r.duration();
        let video_main = v_len / sv;
        let audio_main = chunk.audio.duration / sa;
        let gap = audio_main - video_main;
        let fills = plan.chunk_actions(chunk.chunk_id).find_map(|a| match a {
            ActionKind::FillTalkingHead { .. } => Some(FillKind::TalkingHead),
            ActionKind::FillReenact { .. } => Some(FillKind::Reenact),
            _ => None,
        });
        let holds_video = effect.hold_video > 0.0;
        let pad = if (fills.is_some() || holds_video) && gap > Time::ZERO { gap } else { Time::ZERO };
        let video_total = video_main + pad;
        let total = video_total.max(audio_main);

        if sv != Speed::ONE || !pad.is_zero() {
            let splits: Vec<(String, Time)> = p
                .track(&vtrack)?
                .clips
                .iter()
                .flat_map(|c| {
                    let cr = c.timeline_range();
                    [r.start, r.end]
                        .into_iter()
                        .filter(move |t| *t > cr.start && *t < cr.end)
                        .map(move |t| (c.id.clone(), t))
                })
                .collect();
            for (id, at) in splits.into_iter().rev() {
                p.split_clip(&id, at)?;
            }
            let inside: Vec<Clip> = p
                .track(&vtrack)?
                .clips
                .iter()
                .filter(|c| r.contains_range(&c.timeline_range()))
                .cloned()
                .collect();
            for c in &inside {
                p.remove_clip(&c.id)?;
            }
            let track_ids: Vec<String> = p.tracks.iter().map(|t| t.id.clone()).collect();
            for t in &track_ids {
                p.shift_clips(t, r.end, total - v_len)?;
            }
            for c in &inside {
                let at = r.start + (c.timeline_start - r.start) / sv;
                let placed = Clip { id: String::new(), speed: c.speed * sv, ..c.clone() };
                p.place_clip(&vtrack, placed, at)?;
            }
            let cursor = r.start + video_main;
            if !pad.is_zero() {
                match fills {
                    Some(kind) => {
                        let generated = match kind {
                            FillKind::TalkingHead => {
                                let image = chunk.face_image.as_ref().ok_or(AdapterError::NoFaceFound)?;
                                let speech = media::retime_render(store, &chunk.audio, sa)?;
                                let tail = TimeRange::new(video_main.min(speech.duration), speech.duration)
                                    .ok()
                                    .map(|tr| media::extract_segment(store, &speech, &tr, StreamSelect::Audio))
                                    .transpose()?
                                    .unwrap_or(speech);
                                registry.talking_head()?.talking_head(store, image, &tail)?
                            }
                            FillKind::Reenact => {
                                let image = chunk.face_image.as_ref().ok_or(AdapterError::NoFaceFound)?;
                                let driving = chunk.driving_video.as_ref().ok_or(AdapterError::NoFaceFound)?;
                                registry.reenactor()?.reenact(store, image, driving)?
                            }
                        };
                        add_asset(&mut p, &generated)?;
                        let used = pad.min(generated.duration);
                        p.place_clip(&vtrack, Clip::new(generated.id.clone(), TimeRange::new(Time::ZERO, used)?), cursor)?;
                        if used < pad {
                            let still = media::extract_frame(store, &generated, generated.duration)?;
                            place_still(&mut p, &vtrack, &still, cursor + used, pad - used)?;
                        }
                    }
                    None => {
                        let last = inside.last().ok_or(MediaError::MissingStream("video"))?;
                        let still = last_frame_still(store, &p, last)?;
                        place_still(&mut p, &vtrack, &still, cursor, pad)?;
                    }
                }
            }
        }

        add_asset(&mut p, &chunk.audio)?;
        let audio_clip = Clip::new(chunk.audio.id.clone(), TimeRange::new(Time::ZERO, chunk.audio.duration)?).with_speed(sa);
        p.place_clip(&atrack, audio_clip, r.start)?;
        applied.push(AppliedChunk {
            chunk_id: chunk.chunk_id,
            range: TimeRange::new(r.start, r.start + total)?,
            video_duration: video_total,
            audio_duration: if effect.hold_audio > 0.0 { total } else { audio_main },
        });
        shift = shift + (total - v_len);
    }
    Ok((p, applied))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(v: f64, a: f64, face: bool) -> SegmentPair {
        SegmentPair { chunk_id: 1, video_duration: v, audio_duration: a, face_available: face }
    }

    #[test]
    fn aligned_chunk_is_placed() {
        let plan = compute_sync_plan(&[pair(10.0, 10.0, true)], &SyncPolicy::default()).unwrap();
        assert_eq!(plan.actions, vec![SyncAction { chunk_id: 1, kind: ActionKind::Place }]);
        assert_eq!(plan.total_cost, 0.0);
    }

    #[test]
    fn small_gap_is_pure_video_retime() {
        let plan = compute_sync_plan(&[pair(10.0, 10.5, true)], &SyncPolicy::default()).unwrap();
        assert_eq!(plan.actions.len(), 1);
        match plan.actions[0].kind {
            ActionKind::RetimeVideo { factor } => assert!((factor - 10.0 / 10.5).abs() < 1e-9),
            ref other => panic!("unexpected {other:?}"),
        }
        let e = ChunkEffect::of(plan.chunk_actions(1));
        assert!((e.video_out(&pair(10.0, 10.5, true)) - 10.5).abs() < 1e-9);
    }

    #[test]
    fn large_gap_retimes_to_bounds_and_fills() {
        let p = pair(10.0, 13.0, true);
        let plan = compute_sync_plan(&[p], &SyncPolicy::default()).unwrap();
        let kinds: Vec<_> = plan.chunk_actions(1).copied().collect();
        assert_eq!(kinds[0], ActionKind::RetimeVideo { factor: 0.9 });
        assert_eq!(kinds[1], ActionKind::RetimeAudio { factor: 1.1 });
        match kinds[2] {
            ActionKind::FillTalkingHead { duration } => assert!((duration - (13.0 / 1.1 - 10.0 / 0.9)).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
        assert!(validate_plan(&plan, &[p]).is_clean());
    }

    #[test]
    fn no_face_holds_the_frame() {
        let plan = compute_sync_plan(&[pair(10.0, 13.0, false)], &SyncPolicy::default()).unwrap();
        assert!(plan
            .chunk_actions(1)
            .any(|a| matches!(a, ActionKind::HoldFrame { stream: HoldStream::Video, .. })));
        assert!(!plan.chunk_actions(1).any(|a| matches!(a, ActionKind::FillTalkingHead { .. })));
    }

    #[test]
    fn validation_flags_bounds_and_mismatch() {
        let p = pair(10.0, 10.0, false);
        let bad = SyncPlan {
            actions: vec![SyncAction { chunk_id: 1, kind: ActionKind::RetimeVideo { factor: 0.5 } }],
            policy: SyncPolicy::default(),
            total_cost: 0.0,
        };
        let report = validate_plan(&bad, &[p]);
        assert!(report.findings.iter().any(|f| matches!(f, Finding::BoundsViolation { .. })));
        let short = SyncPlan {
            actions: vec![SyncAction { chunk_id: 1, kind: ActionKind::Place }],
            policy: SyncPolicy::default(),
            total_cost: 0.0,
        };
        let report = validate_plan(&short, &[pair(10.0, 10.2, false)]);
        assert!(matches!(report.findings[0], Finding::Mismatch { .. }));
    }

    #[test]
    fn edl_round_trips() {
        let second = SegmentPair { chunk_id: 2, ..pair(3.0, 2.0, false) };
        let plan = compute_sync_plan(&[pair(10.0, 10.5, true), second], &SyncPolicy::default()).unwrap();
        assert_eq!(plan.chunk_ids(), vec![1, 2]);
        let text = plan.to_edl();
        assert!(text.contains("\"stream\": \"audio\""));
        assert!(text.contains("\"action\": \"RETIME_VIDEO\""));
        assert_eq!(SyncPlan::from_edl(&text).unwrap(), plan);
    }

    #[test]
    fn policy_overrides() {
        let mut p = SyncPolicy::default();
        p.set("w_f", "0.5").unwrap();
        assert_eq!(p.fill_cost_weight, 0.5);
        assert!(p.set("s_min", "1.2").is_err());
        assert!(p.set("bogus", "1").is_err());
        assert!(compute_sync_plan(&[], &SyncPolicy::default()).is_err());
    }
}
