//! Background translation of slide lectures: find spans where the slide
//! holds still, read its text lines, translate them and stamp one
//! re-rendered slide across the span.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{ocr::INK_THRESHOLD, AdapterError, AdapterRegistry, Capability, TextRegion};
use crate::geometry::PixelRect;
use crate::media::{self, Media, MediaError, MediaStore, StreamSelect};
use crate::project::{Asset, AssetKind, Clip, Project, ProjectError, TimeRange, TrackKind};
use crate::text::{draw_line, fit_text, CELL};
use crate::time::{Fps, Time};

/// Mean absolute difference, per channel and normalised to [0, 1], below
/// which two frames show the same slide.
pub const DEFAULT_STABILITY_THRESHOLD: f64 = 2.0 / 255.0;
/// Width of the ring around a region sampled for its background.
const RING: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlideError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("region {index} cannot fit {text:?}")]
    RegionOverflow { index: usize, text: String },
    #[error("region {0} lies outside the frame")]
    RegionOutOfFrame(usize),
    #[error("regions {0} and {1} overlap")]
    OverlappingRegions(usize, usize),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Project(#[from] ProjectError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
}

pub type Result<T> = std::result::Result<T, SlideError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideSpan {
    pub range: TimeRange,
    pub reference_frame_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRegion {
    pub bbox: PixelRect,
    pub translated_text: String,
    /// Largest glyph height tried, in pixels.
    pub font_size: u32,
    pub fill_color: [u8; 3],
    pub text_color: [u8; 3],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlaySpec {
    pub regions: Vec<OverlayRegion>,
}

/// Mean absolute per-channel difference, in [0, 1].
pub fn frame_difference(a: &RgbImage, b: &RgbImage) -> f64 {
    if a.dimensions() != b.dimensions() {
        return 1.0;
    }
    let total: u64 = a.as_raw().iter().zip(b.as_raw()).map(|(x, y)| x.abs_diff(*y) as u64).sum();
    total as f64 / (a.as_raw().len().max(1) as f64 * 255.0)
}

fn frame_span(range: &TimeRange, fps: Fps, frames: usize) -> Result<(usize, usize)> {
    let first = range.start.frame_round(fps) as usize;
    let last = (range.end.frame_round(fps) as usize).min(frames);
    if range.start.is_negative() || first >= last {
        return Err(SlideError::InvalidRange(format!("{}..{} holds no frames", range.start, range.end)));
    }
    Ok((first, last))
}

/// Maximal runs of frames that stay within `threshold` of the run's
/// first frame. A threshold of 1 or more never splits.
pub fn detect_constant_slide_spans(store: &MediaStore, video: &Asset, range: &TimeRange, threshold: f64) -> Result<Vec<SlideSpan>> {
    if range.end > video.duration || range.start.is_negative() || range.end <= range.start {
        return Err(SlideError::InvalidRange(format!("{}..{} outside {}", range.start, range.end, video.id)));
    }
    let (v, _, _) = store.load(video)?.into_video()?;
    let (first, last) = frame_span(range, v.fps, v.frames.len())?;
    let mut starts = vec![first];
    let mut reference = first;
    for i in first + 1..last {
        if threshold < 1.0 && frame_difference(&v.frames[reference], &v.frames[i]) >= threshold {
            starts.push(i);
            reference = i;
        }
    }
    let time_of = |i: usize| Time::from_frames(i as u64, v.fps);
    let spans = starts
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let start = if k == 0 { range.start } else { time_of(s) };
            let end = starts.get(k + 1).map_or(range.end, |&n| time_of(n));
            Ok(SlideSpan { range: TimeRange::new(start, end)?, reference_frame_index: s as u64 })
        })
        .collect::<std::result::Result<Vec<_>, ProjectError>>()?;
    Ok(spans)
}

pub fn reference_frame(store: &MediaStore, video: &Asset, span: &SlideSpan) -> Result<RgbImage> {
    let (v, _, _) = store.load(video)?.into_video()?;
    v.frames
        .into_iter()
        .nth(span.reference_frame_index as usize)
        .ok_or_else(|| SlideError::InvalidRange(format!("no frame {}", span.reference_frame_index)))
}

/// Text lines of the span's reference frame, in reading order.
pub fn extract_slide_text(registry: &AdapterRegistry, frame: &RgbImage, engine: Option<&str>) -> Result<Vec<TextRegion>> {
    let mut registry = registry.clone();
    if let Some(name) = engine {
        registry.select(Capability::OcrLines, name);
    }
    let mut regions = registry.line_reader()?.ocr_lines(frame)?;
    regions.sort_by_key(|r| (r.bbox.y0, r.bbox.x0));
    Ok(regions)
}

pub fn translate_regions(
    registry: &AdapterRegistry,
    regions: &[TextRegion],
    src_lang: &str,
    tgt_lang: &str,
    engine: Option<&str>,
) -> Result<Vec<TextRegion>> {
    let mut registry = registry.clone();
    if let Some(name) = engine {
        registry.select(Capability::Nmt, name);
    }
    let nmt = registry.translator()?;
    regions
        .iter()
        .map(|r| Ok(TextRegion { line_text: nmt.translate(&r.line_text, src_lang, tgt_lang)?, ..r.clone() }))
        .collect()
}

fn median(mut v: Vec<u8>) -> u8 {
    v.sort_unstable();
    v[v.len() / 2]
}

/// Per-channel median of the ring just outside `bbox`, or just inside it
/// when the box touches every frame edge.
pub fn ring_color(frame: &RgbImage, bbox: &PixelRect) -> [u8; 3] {
    let (w, h) = frame.dimensions();
    let outer = bbox.pad(RING, w, h);
    let mut px: Vec<[u8; 3]> = Vec::new();
    for y in outer.y0..outer.y1 {
        for x in outer.x0..outer.x1 {
            if !bbox.contains(x, y) {
                px.push(frame.get_pixel(x, y).0);
            }
        }
    }
    if px.is_empty() {
        for y in bbox.y0..bbox.y1 {
            for x in bbox.x0..bbox.x1 {
                let edge = x < bbox.x0 + RING || y < bbox.y0 + RING || x + RING >= bbox.x1 || y + RING >= bbox.y1;
                if edge {
                    px.push(frame.get_pixel(x, y).0);
                }
            }
        }
    }
    if px.is_empty() {
        return [0, 0, 0];
    }
    std::array::from_fn(|c| median(px.iter().map(|p| p[c]).collect()))
}

/// Most common colour inside `bbox` that differs from `background`.
pub fn ink_color(frame: &RgbImage, bbox: &PixelRect, background: [u8; 3]) -> Option<[u8; 3]> {
    let mut counts = std::collections::BTreeMap::new();
    for y in bbox.y0..bbox.y1.min(frame.height()) {
        for x in bbox.x0..bbox.x1.min(frame.width()) {
            let p = frame.get_pixel(x, y).0;
            if p.iter().zip(background).any(|(a, b)| a.abs_diff(b) > INK_THRESHOLD) {
                *counts.entry(p).or_insert(0usize) += 1;
            }
        }
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(c, _)| c)
}

impl OverlaySpec {
    /// Overlay for `translated` regions, taking colours and the largest
    /// font size from the original frame.
    pub fn from_regions(frame: &RgbImage, translated: &[TextRegion]) -> OverlaySpec {
        let regions = translated
            .iter()
            .map(|r| {
                let fill = ring_color(frame, &r.bbox);
                let ink = ink_color(frame, &r.bbox, fill).unwrap_or(if fill.iter().map(|c| *c as u32).sum::<u32>() > 384 {
                    [0, 0, 0]
                } else {
                    [255, 255, 255]
                });
                OverlayRegion {
                    bbox: r.bbox,
                    translated_text: r.line_text.clone(),
                    font_size: (r.bbox.height() / CELL).max(1) * CELL,
                    fill_color: fill,
                    text_color: ink,
                }
            })
            .collect();
        OverlaySpec { regions }
    }

    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        for (i, r) in self.regions.iter().enumerate() {
            if !r.bbox.fits_in(width, height) || r.bbox.is_empty() {
                return Err(SlideError::RegionOutOfFrame(i));
            }
            for (j, o) in self.regions.iter().enumerate().skip(i + 1) {
                if r.bbox.overlaps(&o.bbox) {
                    return Err(SlideError::OverlappingRegions(i, j));
                }
            }
        }
        Ok(())
    }
}

/// Where the text of each region lands; every box lies inside its region.
pub fn layout_boxes(spec: &OverlaySpec) -> Result<Vec<Vec<PixelRect>>> {
    spec.regions
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let layout = fit_text(&r.translated_text, r.bbox.width(), r.bbox.height(), (r.font_size / CELL).max(1))
                .ok_or_else(|| SlideError::RegionOverflow { index: i, text: r.translated_text.clone() })?;
            let top = r.bbox.y0 + (r.bbox.height() - layout.height()) / 2;
            Ok(layout
                .lines
                .iter()
                .enumerate()
                .map(|(k, line)| {
                    PixelRect::from_size(
                        r.bbox.x0,
                        top + k as u32 * layout.line_pitch(),
                        crate::text::text_width(line, layout.scale),
                        CELL * layout.scale,
                    )
                })
                .collect())
        })
        .collect()
}

/// Fills each region with its background and draws its text left-aligned
/// and vertically centred. Pixels outside the regions are untouched.
pub fn render_overlay(frame: &RgbImage, spec: &OverlaySpec) -> Result<RgbImage> {
    spec.validate(frame.width(), frame.height())?;
    let boxes = layout_boxes(spec)?;
    let mut out = frame.clone();
    for (r, lines) in spec.regions.iter().zip(boxes) {
        for y in r.bbox.y0..r.bbox.y1 {
            for x in r.bbox.x0..r.bbox.x1 {
                out.put_pixel(x, y, Rgb(r.fill_color));
            }
        }
        let layout = fit_text(&r.translated_text, r.bbox.width(), r.bbox.height(), (r.font_size / CELL).max(1))
            .expect("fit checked above");
        for (line, b) in layout.lines.iter().zip(lines) {
            draw_line(&mut out, b.x0, b.y0, line, layout.scale, Rgb(r.text_color));
        }
    }
    Ok(out)
}

/// Replaces every frame of the span with `overlaid`, keeping `preserve`
/// (such as a speaker inset) from the original frames. The span is in
/// timeline time and must lie inside one clip of the first video track.
/// On error the project is left unchanged.
pub fn apply_overlay_span(
    store: &MediaStore,
    project: &mut Project,
    span: &SlideSpan,
    overlaid: &RgbImage,
    preserve: Option<PixelRect>,
) -> Result<Asset> {
    let mut p = project.clone();
    let track = p
        .first_track(TrackKind::Video)
        .ok_or_else(|| SlideError::InvalidRange("project has no video track".into()))?;
    let track_id = track.id.clone();
    let clip = track
        .clips
        .iter()
        .find(|c| c.timeline_range().contains_range(&span.range))
        .cloned()
        .ok_or_else(|| SlideError::InvalidRange("span is not inside a single clip".into()))?;
    let asset = p.asset(&clip.asset_id)?.clone();
    if asset.kind != AssetKind::Video {
        return Err(SlideError::InvalidRange("span is not over video".into()));
    }
    let fps = asset.fps.ok_or(MediaError::MissingStream("video"))?;
    let src = TimeRange::new(clip.source_time_at(span.range.start), clip.source_time_at(span.range.end))?;
    let aligned = |t: Time| Time::from_frames(t.frame_round(fps), fps) == t;
    if !aligned(src.start) || !aligned(src.end) {
        return Err(SlideError::InvalidRange("span is not frame aligned".into()));
    }
    let segment = media::extract_segment(store, &asset, &src, StreamSelect::Both)?;
    let Media::Video { mut video, audio, faces } = store.load(&segment)? else {
        return Err(MediaError::MissingStream("video").into());
    };
    if overlaid.dimensions() != (video.width, video.height) {
        return Err(SlideError::InvalidRange("overlay size differs from the video".into()));
    }
    for frame in &mut video.frames {
        let mut stamped = overlaid.clone();
        if let Some(r) = preserve {
            for y in r.y0..r.y1.min(video.height) {
                for x in r.x0..r.x1.min(video.width) {
                    stamped.put_pixel(x, y, *frame.get_pixel(x, y));
                }
            }
        }
        *frame = stamped;
    }
    let replaced = store.put(&Media::Video { video, audio, faces }, "overlay")?;
    p.register_asset(replaced.clone())?;

    let mut middle = clip.id.clone();
    if span.range.start > clip.timeline_start {
        middle = p.split_clip(&middle, span.range.start)?.1.id;
    }
    if span.range.end < clip.timeline_end() {
        p.split_clip(&middle, span.range.end)?;
    }
    let old = p.remove_clip(&middle)?;
    let source = TimeRange::new(Time::ZERO, src.duration())?;
    p.place_clip(&track_id, Clip::new(replaced.id.clone(), source).with_speed(old.speed), old.timeline_start)?;
    *project = p;
    Ok(replaced)
}
