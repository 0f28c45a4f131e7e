//! Face selection, landmark-hull masks and feathered paste-back.
//!
//! Pixel centres sit on the integer lattice: pixel `(x, y)` is the point
//! `(x, y)`. A mask pixel is fully opaque when that point lies inside or
//! on the hull of the jawline and brow landmarks (indices 0 to 26 of the
//! 68-point layout). With a feather radius `r`, alpha ramps linearly with
//! the signed distance `d` to the hull edge: `clamp(0.5 - d / 2r, 0, 1)`.

use std::path::PathBuf;

use image::{GrayImage, Luma, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{AdapterError, AdapterRegistry};
use crate::geometry::PixelRect;
use crate::media::{self, FaceTrack, Media, MediaError, MediaStore, StreamSelect, Video};
use crate::project::{Asset, AssetKind, Clip, Project, ProjectError, TimeRange, TrackKind};
use crate::time::Time;

pub const LANDMARK_COUNT: usize = 68;
/// Jawline (0..=16) and brows (17..=26).
pub const BOUNDARY_LANDMARKS: std::ops::Range<usize> = 0..27;
/// Feather radius at the reference face width.
pub const REFERENCE_FEATHER: f32 = 3.0;
pub const REFERENCE_FACE_WIDTH: f32 = 256.0;
/// Growth of the selection box when re-detecting a face in later frames.
pub const REDETECT_EXPANSION: f64 = 1.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FaceError {
    #[error("rectangle {0:?} is outside the frame")]
    OutOfFrame(PixelRect),
    #[error("frame {0} does not exist")]
    NoSuchFrame(u64),
    #[error("landmarks do not span an area")]
    DegenerateHull,
    #[error("crop is {got:?}, expected {expected:?}")]
    ShapeMismatch { got: (u32, u32), expected: (u32, u32) },
    #[error("several faces are present; select one first")]
    NoSelection,
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("expected {LANDMARK_COUNT} landmarks inside the frame")]
    BadKeypoints,
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Project(#[from] ProjectError),
}

pub type Result<T> = std::result::Result<T, FaceError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceSelection {
    pub frame_index: u64,
    pub bbox: PixelRect,
    /// `bbox` divided by the frame size.
    pub normalized: [f64; 4],
}

/// The timeline's first video asset, which defines frame numbering.
fn reference_video(project: &Project) -> Option<&Asset> {
    project
        .tracks
        .iter()
        .filter(|t| t.kind == TrackKind::Video)
        .flat_map(|t| t.clips.iter())
        .filter_map(|c| project.assets.get(&c.asset_id))
        .find(|a| a.kind == AssetKind::Video)
}

/// Validates a user-drawn box against frame `frame_index` of the timeline.
pub fn select_face(project: &Project, frame_index: u64, bbox: PixelRect) -> Result<FaceSelection> {
    let asset = reference_video(project).ok_or(FaceError::NoSuchFrame(frame_index))?;
    let (fps, res) = match (asset.fps, asset.resolution) {
        (Some(f), Some(r)) => (f, r),
        _ => return Err(FaceError::NoSuchFrame(frame_index)),
    };
    if Time::from_frames(frame_index, fps) >= project.timeline_length() {
        return Err(FaceError::NoSuchFrame(frame_index));
    }
    selection_in_frame(frame_index, bbox, res.width, res.height)
}

pub fn selection_in_frame(frame_index: u64, bbox: PixelRect, width: u32, height: u32) -> Result<FaceSelection> {
    if !bbox.fits_in(width, height) {
        return Err(FaceError::OutOfFrame(bbox));
    }
    Ok(FaceSelection { frame_index, bbox, normalized: bbox.normalized(width, height) })
}

/// 68 landmark positions in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub points: Vec<[f32; 2]>,
}

impl KeypointSet {
    pub fn new(points: Vec<[f32; 2]>, width: u32, height: u32) -> Result<Self> {
        let inside = |p: &[f32; 2]| p[0] >= 0.0 && p[1] >= 0.0 && p[0] < width as f32 && p[1] < height as f32;
        if points.len() != LANDMARK_COUNT || !points.iter().all(inside) {
            return Err(FaceError::BadKeypoints);
        }
        Ok(KeypointSet { points })
    }

    pub fn boundary(&self) -> &[[f32; 2]] {
        &self.points[BOUNDARY_LANDMARKS]
    }

    /// Width of the boundary landmarks' extent.
    pub fn face_width(&self) -> f32 {
        let xs = self.boundary().iter().map(|p| p[0]);
        let (lo, hi) = xs.fold((f32::MAX, f32::MIN), |(lo, hi), x| (lo.min(x), hi.max(x)));
        hi - lo
    }
}

/// Feather radius proportional to face width.
pub fn default_feather(face_width: f32) -> f32 {
    REFERENCE_FEATHER * face_width / REFERENCE_FACE_WIDTH
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (in y-down pixel space, clockwise on
/// screen) without collinear vertices.
pub fn convex_hull(points: &[[f32; 2]]) -> Result<Vec<[f64; 2]>> {
    let mut pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0] as f64, p[1] as f64]).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite landmarks"));
    pts.dedup();
    if pts.len() < 3 {
        return Err(FaceError::DegenerateHull);
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        return Err(FaceError::DegenerateHull);
    }
    Ok(hull)
}

/// Signed distance from `p` to a convex hull: negative inside, zero on
/// the boundary.
pub fn signed_distance(hull: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let n = hull.len();
    let mut inside = true;
    let mut best = f64::INFINITY;
    for i in 0..n {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        if cross(a, b, p) < 0.0 {
            inside = false;
        }
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
        let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
        best = best.min((qx * qx + qy * qy).sqrt());
    }
    if inside {
        -best
    } else {
        best
    }
}

/// True when `p` is inside or on the hull.
pub fn hull_contains(hull: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = hull.len();
    (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0.0)
}

/// Per-pixel alpha over a rectangle of the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeMask {
    pub rect: PixelRect,
    pub alpha: Vec<f32>,
    pub feather_radius: f32,
}

impl CompositeMask {
    pub fn alpha_at(&self, x: u32, y: u32) -> f32 {
        if !self.rect.contains(x, y) {
            return 0.0;
        }
        self.alpha[((y - self.rect.y0) * self.rect.width() + (x - self.rect.x0)) as usize]
    }

    /// Pixels with alpha 1.
    pub fn opaque_count(&self) -> usize {
        self.alpha.iter().filter(|a| **a == 1.0).count()
    }

    /// Pixels with non-zero alpha.
    pub fn support_count(&self) -> usize {
        self.alpha.iter().filter(|a| **a > 0.0).count()
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.rect.width(), self.rect.height(), |x, y| {
            Luma([(self.alpha_at(self.rect.x0 + x, self.rect.y0 + y) * 255.0).round() as u8])
        })
    }
}

/// Mask over the hull of `points`, clipped to a `width x height` frame.
pub fn hull_mask(points: &[[f32; 2]], feather: f32, width: u32, height: u32) -> Result<CompositeMask> {
    let hull = convex_hull(points)?;
    let r = feather.max(0.0) as f64;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in &hull {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    let clip = |v: f64, hi: u32| (v.max(0.0) as u32).min(hi);
    let rect = PixelRect::new(
        clip((x0 - r).ceil(), width),
        clip((y0 - r).ceil(), height),
        clip((x1 + r).floor() + 1.0, width),
        clip((y1 + r).floor() + 1.0, height),
    );
    let mut alpha = Vec::with_capacity(rect.area() as usize);
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            let p = [x as f64, y as f64];
            let a = if r == 0.0 {
                if hull_contains(&hull, p) {
                    1.0
                } else {
                    0.0
                }
            } else {
                (0.5 - signed_distance(&hull, p) / (2.0 * r)).clamp(0.0, 1.0)
            };
            alpha.push(a as f32);
        }
    }
    Ok(CompositeMask { rect, alpha, feather_radius: feather.max(0.0) })
}

/// Mask over the jawline-and-brow hull of a landmark set.
pub fn build_face_mask(keypoints: &KeypointSet, feather: f32, width: u32, height: u32) -> Result<CompositeMask> {
    hull_mask(keypoints.boundary(), feather, width, height)
}

/// Blends `generated` (covering `bbox`) into `original`:
/// `out = o + alpha * (g - o)` inside `bbox`, untouched elsewhere.
pub fn composite_face(original: &RgbImage, generated: &RgbImage, mask: &CompositeMask, bbox: PixelRect) -> Result<RgbImage> {
    if !bbox.fits_in(original.width(), original.height()) {
        return Err(FaceError::OutOfFrame(bbox));
    }
    if generated.dimensions() != (bbox.width(), bbox.height()) {
        return Err(FaceError::ShapeMismatch {
            got: generated.dimensions(),
            expected: (bbox.width(), bbox.height()),
        });
    }
    let mut out = original.clone();
    for y in bbox.y0..bbox.y1 {
        for x in bbox.x0..bbox.x1 {
            let a = mask.alpha_at(x, y);
            if a == 0.0 {
                continue;
            }
            let g = generated.get_pixel(x - bbox.x0, y - bbox.y0);
            let o = out.get_pixel_mut(x, y);
            for c in 0..3 {
                let (ov, gv) = (o.0[c] as f32, g.0[c] as f32);
                o.0[c] = (ov + a * (gv - ov)).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(out)
}

/// Cut `rect` out of a frame.
pub fn crop(frame: &RgbImage, rect: PixelRect) -> RgbImage {
    image::imageops::crop_imm(frame, rect.x0, rect.y0, rect.width(), rect.height()).to_image()
}

/// Ground-truth landmark lookup for fixture media: the face whose box
/// centre lies in `search`.
pub fn detect_keypoints(faces: &[FaceTrack], frame: usize, search: PixelRect, width: u32, height: u32) -> Option<KeypointSet> {
    faces.iter().find_map(|t| {
        let lm = t.landmarks_at(frame)?;
        let (cx, cy) = PixelRect::bounding(&lm, width, height)?.center();
        let inside = cx >= search.x0 as f64 && cx < search.x1 as f64 && cy >= search.y0 as f64 && cy < search.y1 as f64;
        if inside {
            KeypointSet::new(lm, width, height).ok()
        } else {
            None
        }
    })
}

#[derive(Debug, Clone, Default)]
pub struct LipsyncOptions {
    pub separate_music: bool,
    /// Overrides the width-scaled default feather.
    pub feather: Option<f32>,
    /// Writes each frame's mask as a grayscale PNG here.
    pub mask_dump_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct LipsyncResult {
    pub asset: Asset,
    /// Unplaced clip over the whole composited asset.
    pub clip: Clip,
    /// Frames whose mask was borrowed from a neighbour.
    pub borrowed_masks: Vec<usize>,
}

/// Extracts the timeline video under `range` (a single clip), runs the
/// selected lipsync engine on it and pastes back only the facial region.
pub fn lipsync_segment(
    store: &MediaStore,
    registry: &AdapterRegistry,
    project: &Project,
    range: &TimeRange,
    selection: Option<&FaceSelection>,
    audio: &Asset,
    options: &LipsyncOptions,
) -> Result<LipsyncResult> {
    if range.end > project.timeline_length() || range.end <= range.start {
        return Err(FaceError::InvalidRange(format!("[{}, {}) is outside the timeline", range.start, range.end)));
    }
    let track = project
        .tracks
        .iter()
        .find(|t| t.kind == TrackKind::Video && t.clip_at(range.start).is_some())
        .ok_or_else(|| FaceError::InvalidRange("no video under the range".into()))?;
    let clip = track.clip_at(range.start).expect("checked above");
    if range.end > clip.timeline_end() {
        return Err(FaceError::InvalidRange("range spans several clips".into()));
    }
    let source = project.asset(&clip.asset_id)?;
    let src_range = TimeRange::new(clip.source_time_at(range.start), clip.source_time_at(range.end))?;
    let mut segment = media::extract_segment(store, source, &src_range, StreamSelect::Video)?;
    if clip.speed != crate::time::Speed::ONE {
        segment = media::retime_render(store, &segment, clip.speed)?;
    }
    let (orig, _, orig_faces) = store.load(&segment)?.into_video()?;
    let (w, h) = (orig.width, orig.height);
    if selection.is_none() && orig_faces.len() > 1 {
        return Err(FaceError::NoSelection);
    }
    let roi = selection.map(|s| s.bbox);

    let (speech, music) = if options.separate_music {
        let (s, m) = registry.vocal_separator()?.separate_vocals(store, audio)?;
        (s, Some(m))
    } else {
        (audio.clone(), None)
    };
    let generated = registry.lipsyncer()?.lipsync(store, &segment, &speech, roi)?;
    let (gen, gen_audio, gen_faces) = store.load(&generated)?.into_video()?;
    if (gen.width, gen.height) != (w, h) {
        return Err(FaceError::ShapeMismatch { got: (gen.width, gen.height), expected: (w, h) });
    }

    let search = roi.map(|r| r.expand(REDETECT_EXPANSION, w, h)).unwrap_or(PixelRect::new(0, 0, w, h));
    let n = gen.frames.len();
    let mut masks: Vec<Option<CompositeMask>> = (0..n)
        .map(|i| {
            let kp = detect_keypoints(&gen_faces, i, search, w, h)
                .or_else(|| detect_keypoints(&orig_faces, i.min(orig.frames.len() - 1), search, w, h))?;
            let feather = options.feather.unwrap_or_else(|| default_feather(kp.face_width()));
            build_face_mask(&kp, feather, w, h).ok()
        })
        .collect();
    let borrowed_masks: Vec<usize> = (0..n).filter(|&i| masks[i].is_none()).collect();
    if borrowed_masks.len() == n {
        return Err(AdapterError::NoFaceFound.into());
    }
    for &i in &borrowed_masks {
        let nearest = (1..n)
            .flat_map(|d| [i.checked_sub(d), Some(i + d)])
            .flatten()
            .find(|&j| j < n && masks[j].is_some())
            .expect("some frame has a mask");
        log::warn!("no keypoints on frame {i}; reusing the mask of frame {nearest}");
        masks[i] = masks[nearest].clone();
    }

    if let Some(dir) = &options.mask_dump_dir {
        std::fs::create_dir_all(dir).map_err(|e| MediaError::Io(e.to_string()))?;
        for (i, m) in masks.iter().enumerate() {
            let m = m.as_ref().expect("filled");
            m.to_image()
                .save(dir.join(format!("mask_{i:05}.png")))
                .map_err(|e| MediaError::Io(e.to_string()))?;
        }
    }

    let frames = (0..n)
        .map(|i| {
            let original = &orig.frames[i.min(orig.frames.len() - 1)];
            let mask = masks[i].as_ref().expect("filled");
            composite_face(original, &crop(&gen.frames[i], mask.rect), mask, mask.rect)
        })
        .collect::<Result<Vec<_>>>()?;
    let out_audio = match (gen_audio, music) {
        (Some(a), Some(m)) => Some(a.mix(&store.load(&m)?.into_audio()?)),
        (a, _) => a,
    };
    let faces = orig_faces.iter().map(|t| t.remap((0..n).map(|i| i.min(orig.frames.len() - 1)))).collect();
    let out = Media::Video { video: Video { frames, ..orig }, audio: out_audio, faces };
    let asset = store.put(&out, "lipsync")?;
    let clip = Clip::new(asset.id.clone(), TimeRange::new(Time::ZERO, asset.duration)?);
    Ok(LipsyncResult { asset, clip, borrowed_masks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_keypoints() -> KeypointSet {
        let ring = [[10.0, 10.0], [15.0, 10.0], [20.0, 10.0], [20.0, 15.0], [20.0, 20.0], [15.0, 20.0], [10.0, 20.0], [10.0, 15.0]];
        let mut pts: Vec<[f32; 2]> = (0..27).map(|i| ring[i % ring.len()]).collect();
        pts.extend(std::iter::repeat_n([15.0, 15.0], 41));
        KeypointSet::new(pts, 64, 64).unwrap()
    }

    #[test]
    fn square_hull_fills_inclusive_lattice() {
        let m = build_face_mask(&square_keypoints(), 0.0, 64, 64).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                let inside = (10..=20).contains(&x) && (10..=20).contains(&y);
                assert_eq!(m.alpha_at(x, y), if inside { 1.0 } else { 0.0 }, "({x},{y})");
            }
        }
        assert_eq!(m.opaque_count(), 121);
    }

    #[test]
    fn feather_is_half_on_the_edge() {
        let m = build_face_mask(&square_keypoints(), 2.0, 64, 64).unwrap();
        assert!((m.alpha_at(10, 15) - 0.5).abs() <= 0.1);
        assert_eq!(m.alpha_at(15, 15), 1.0);
        assert_eq!(m.alpha_at(7, 15), 0.0);
    }

    #[test]
    fn collinear_is_degenerate() {
        let pts: Vec<[f32; 2]> = (0..10).map(|i| [i as f32, 2.0 * i as f32]).collect();
        assert_eq!(hull_mask(&pts, 0.0, 64, 64), Err(FaceError::DegenerateHull));
    }

    #[test]
    fn selection_normalizes() {
        let s = selection_in_frame(0, PixelRect::new(10, 10, 110, 110), 320, 240).unwrap();
        let expect = [10.0 / 320.0, 10.0 / 240.0, 110.0 / 320.0, 110.0 / 240.0];
        assert_eq!(s.normalized, expect);
        assert!((s.normalized[0] - 0.031).abs() < 5e-4 && (s.normalized[3] - 0.458).abs() < 5e-4);
        assert!(selection_in_frame(0, PixelRect::new(300, 200, 400, 300), 320, 240).is_err());
        assert!(selection_in_frame(0, PixelRect::new(5, 5, 5, 9), 320, 240).is_err());
    }

    #[test]
    fn composite_shape_checked() {
        let img = RgbImage::new(20, 20);
        let m = hull_mask(&[[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]], 0.0, 20, 20).unwrap();
        let r = composite_face(&img, &RgbImage::new(3, 3), &m, PixelRect::new(0, 0, 6, 6));
        assert!(matches!(r, Err(FaceError::ShapeMismatch { .. })));
    }
}
