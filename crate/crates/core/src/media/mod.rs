//! Media probing, segment extraction, retiming and export.
//!
//! Everything the rest of the crate knows about containers and codecs is
//! behind this module. Working media lives in a [`MediaStore`] directory
//! under content-hash file names: video in the lossless `.mzv` mezzanine
//! container, audio as 32-bit float WAV, stills as PNG. MP4 is read and
//! written through [`ffmpeg::Ffmpeg`] when a binary is available.

mod container;
pub mod ffmpeg;
mod render;
pub mod stretch;

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::project::{Asset, AssetKind, Project, Resolution, TimeRange};
use crate::time::{Fps, Speed, Time};

pub use render::{linear_resample, render_timeline, RenderedTimeline};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MediaError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("undecodable input: {0}")]
    Undecodable(String),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("speed must be positive")]
    NonPositiveSpeed,
    #[error("asset has no {0} stream")]
    MissingStream(&'static str),
    #[error("project is empty")]
    EmptyProject,
    #[error("invalid export settings: {0}")]
    InvalidSettings(String),
    #[error("encoder failure: {0}")]
    EncoderFailure(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, MediaError>;

/// Mono PCM audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

impl Audio {
    pub fn silence(sample_rate: u32, len: usize) -> Self {
        Audio { sample_rate, samples: vec![0.0; len] }
    }

    pub fn duration(&self) -> Time {
        Time::from_samples(self.samples.len() as u64, self.sample_rate)
    }

    /// Same signal at another sample rate.
    pub fn resampled(&self, sample_rate: u32) -> Audio {
        Audio { sample_rate, samples: linear_resample(&self.samples, self.sample_rate, sample_rate) }
    }

    /// Sample-wise sum at `self`'s rate; the result is as long as the longer input.
    pub fn mix(&self, other: &Audio) -> Audio {
        let other = other.resampled(self.sample_rate);
        let n = self.samples.len().max(other.samples.len());
        let at = |v: &[f32], i: usize| v.get(i).copied().unwrap_or(0.0);
        Audio {
            sample_rate: self.sample_rate,
            samples: (0..n).map(|i| at(&self.samples, i) + at(&other.samples, i)).collect(),
        }
    }

    pub fn sample_index(&self, t: Time) -> usize {
        (t.sample_round(self.sample_rate) as usize).min(self.samples.len())
    }
}

/// Decoded RGB24 frames at a constant rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub fps: Fps,
    pub width: u32,
    pub height: u32,
    pub frames: Vec<RgbImage>,
}

impl Video {
    pub fn duration(&self) -> Time {
        Time::from_frames(self.frames.len() as u64, self.fps)
    }

    pub fn resolution(&self) -> Resolution {
        Resolution::new(self.width, self.height)
    }
}

/// Ground-truth facial landmarks carried by synthetic media: a 68-point
/// template plus a per-frame translation (`None` where the face is not
/// detectable in that frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceTrack {
    pub id: u32,
    pub template: Vec<[f32; 2]>,
    pub offsets: Vec<Option<[f32; 2]>>,
}

impl FaceTrack {
    pub fn landmarks_at(&self, frame: usize) -> Option<Vec<[f32; 2]>> {
        let off = (*self.offsets.get(frame)?)?;
        Some(self.template.iter().map(|p| [p[0] + off[0], p[1] + off[1]]).collect())
    }

    /// Same face over a different frame mapping (`map[i]` = source frame).
    pub fn remap(&self, map: impl Iterator<Item = usize>) -> FaceTrack {
        FaceTrack {
            id: self.id,
            template: self.template.clone(),
            offsets: map.map(|i| self.offsets.get(i).copied().flatten()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Media {
    Video { video: Video, audio: Option<Audio>, faces: Vec<FaceTrack> },
    Audio(Audio),
    Image { image: RgbImage, faces: Vec<FaceTrack> },
}

impl Media {
    pub fn kind(&self) -> AssetKind {
        match self {
            Media::Video { .. } => AssetKind::Video,
            Media::Audio(_) => AssetKind::Audio,
            Media::Image { .. } => AssetKind::Image,
        }
    }

    pub fn duration(&self) -> Time {
        match self {
            Media::Video { video, .. } => video.duration(),
            Media::Audio(a) => a.duration(),
            Media::Image { .. } => Time::ZERO,
        }
    }

    pub fn audio(&self) -> Option<&Audio> {
        match self {
            Media::Video { audio, .. } => audio.as_ref(),
            Media::Audio(a) => Some(a),
            Media::Image { .. } => None,
        }
    }

    pub fn video(&self) -> Option<&Video> {
        match self {
            Media::Video { video, .. } => Some(video),
            _ => None,
        }
    }

    pub fn faces(&self) -> &[FaceTrack] {
        match self {
            Media::Video { faces, .. } | Media::Image { faces, .. } => faces,
            Media::Audio(_) => &[],
        }
    }

    pub fn into_audio(self) -> Result<Audio> {
        match self {
            Media::Video { audio: Some(a), .. } | Media::Audio(a) => Ok(a),
            _ => Err(MediaError::MissingStream("audio")),
        }
    }

    pub fn into_video(self) -> Result<(Video, Option<Audio>, Vec<FaceTrack>)> {
        match self {
            Media::Video { video, audio, faces } => Ok((video, audio, faces)),
            _ => Err(MediaError::MissingStream("video")),
        }
    }

    pub fn into_image(self) -> Result<(RgbImage, Vec<FaceTrack>)> {
        match self {
            Media::Image { image, faces } => Ok((image, faces)),
            _ => Err(MediaError::MissingStream("image")),
        }
    }

    fn probe(&self) -> MediaProbe {
        match self {
            Media::Video { video, audio, .. } => MediaProbe {
                duration: video.duration(),
                fps: Some(video.fps),
                resolution: Some(video.resolution()),
                has_audio: audio.is_some(),
                sample_rate: audio.as_ref().map(|a| a.sample_rate),
            },
            Media::Audio(a) => MediaProbe {
                duration: a.duration(),
                fps: None,
                resolution: None,
                has_audio: true,
                sample_rate: Some(a.sample_rate),
            },
            Media::Image { image, .. } => MediaProbe {
                duration: Time::ZERO,
                fps: None,
                resolution: Some(Resolution::new(image.width(), image.height())),
                has_audio: false,
                sample_rate: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaProbe {
    pub duration: Time,
    pub fps: Option<Fps>,
    pub resolution: Option<Resolution>,
    pub has_audio: bool,
    pub sample_rate: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Low,
    Medium,
    High,
}

impl Quality {
    /// Fixed (video, audio) bitrate tiers used for MP4 export.
    pub fn bitrates(&self) -> (&'static str, &'static str) {
        match self {
            Quality::Low => ("1000k", "96k"),
            Quality::Medium => ("2500k", "128k"),
            Quality::High => ("5000k", "192k"),
        }
    }
}

impl std::str::FromStr for Quality {
    type Err = MediaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Quality::Low),
            "medium" => Ok(Quality::Medium),
            "high" => Ok(Quality::High),
            other => Err(MediaError::InvalidSettings(format!("unknown quality {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExportSettings {
    pub quality: Quality,
    pub fps: Fps,
    pub resolution: Resolution,
}

impl ExportSettings {
    pub fn validate(&self) -> Result<()> {
        if !self.fps.is_valid() {
            return Err(MediaError::InvalidSettings("fps must be positive".into()));
        }
        if self.resolution.width == 0 || self.resolution.height == 0 {
            return Err(MediaError::InvalidSettings("resolution must be positive".into()));
        }
        Ok(())
    }
}

/// Which streams `extract_segment` keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamSelect {
    Video,
    Audio,
    Both,
}

fn io_err(e: impl std::fmt::Display) -> MediaError {
    MediaError::Io(e.to_string())
}

fn encode_wav(audio: &Audio) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut buf, spec).expect("in-memory wav");
        for s in &audio.samples {
            w.write_sample(*s).expect("in-memory wav");
        }
        w.finalize().expect("in-memory wav");
    }
    buf.into_inner()
}

fn decode_wav(bytes: &[u8]) -> Result<Audio> {
    let mut r = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| MediaError::Undecodable(e.to_string()))?;
    let spec = r.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => r.samples::<f32>().collect::<std::result::Result<_, _>>(),
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f32;
            r.samples::<i32>().map(|s| s.map(|v| v as f32 / scale)).collect()
        }
    }
    .map_err(|e| MediaError::Undecodable(e.to_string()))?;
    let samples = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f32>() / channels as f32)
        .collect();
    Ok(Audio { sample_rate: spec.sample_rate, samples })
}

fn encode_png(image: &RgbImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    image.write_to(&mut buf, image::ImageFormat::Png).expect("in-memory png");
    buf.into_inner()
}

fn faces_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".faces.json");
    PathBuf::from(s)
}

/// Encodes media into its canonical on-disk bytes plus file extension.
fn encode_media(media: &Media) -> (Vec<u8>, Option<Vec<u8>>, &'static str) {
    match media {
        Media::Video { video, audio, faces } => (container::encode(video, audio.as_ref(), faces), None, "mzv"),
        Media::Audio(a) => (encode_wav(a), None, "wav"),
        Media::Image { image, faces } => {
            let sidecar = (!faces.is_empty()).then(|| serde_json::to_vec(faces).expect("faces serialize"));
            (encode_png(image), sidecar, "png")
        }
    }
}

/// Reads any supported media file.
pub fn read_media(path: &Path) -> Result<Media> {
    if !path.exists() {
        return Err(MediaError::NotFound(path.display().to_string()));
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "mzv" => {
            let bytes = std::fs::read(path).map_err(io_err)?;
            let (video, audio, faces) = container::decode(&bytes)?;
            Ok(Media::Video { video, audio, faces })
        }
        "wav" => Ok(Media::Audio(decode_wav(&std::fs::read(path).map_err(io_err)?)?)),
        "png" | "jpg" | "jpeg" => {
            let image = image::open(path).map_err(|e| MediaError::Undecodable(e.to_string()))?.to_rgb8();
            let sidecar = faces_sidecar(path);
            let faces = if sidecar.exists() {
                let text = std::fs::read(&sidecar).map_err(io_err)?;
                serde_json::from_slice(&text).map_err(|e| MediaError::Undecodable(e.to_string()))?
            } else {
                Vec::new()
            };
            Ok(Media::Image { image, faces })
        }
        _ => {
            let ff = ffmpeg::Ffmpeg::locate()
                .ok_or_else(|| MediaError::Undecodable(format!("no decoder for {}", path.display())))?;
            let (video, audio) = ff.decode(path)?;
            Ok(Media::Video { video, audio, faces: Vec::new() })
        }
    }
}

/// Writes media to an explicit path (extension must match the media kind,
/// or be `.mp4` for video).
pub fn write_media(media: &Media, path: &Path) -> Result<()> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    if ext == "mp4" {
        let (video, audio, _) = media.clone().into_video()?;
        let settings = ExportSettings { quality: Quality::High, fps: video.fps, resolution: video.resolution() };
        let ff = ffmpeg::Ffmpeg::locate().ok_or_else(|| MediaError::EncoderFailure("ffmpeg not found".into()))?;
        return ff.encode_mp4(&video, audio.as_ref(), &settings, path);
    }
    let (bytes, sidecar, expected) = encode_media(media);
    if ext != expected {
        return Err(MediaError::EncoderFailure(format!("{} media cannot be written as .{ext}", expected)));
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    std::fs::write(path, bytes).map_err(io_err)?;
    if let Some(s) = sidecar {
        std::fs::write(faces_sidecar(path), s).map_err(io_err)?;
    }
    Ok(())
}

/// Reads stream parameters without decoding frames where possible.
pub fn probe(path: &Path) -> Result<MediaProbe> {
    if !path.exists() {
        return Err(MediaError::NotFound(path.display().to_string()));
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "mzv" => {
            let bytes = std::fs::read(path).map_err(io_err)?;
            let (h, _) = container::read_header(&bytes)?;
            Ok(MediaProbe {
                duration: Time::from_frames(h.frame_count, h.fps),
                fps: Some(h.fps),
                resolution: Some(Resolution::new(h.width, h.height)),
                has_audio: h.sample_rate.is_some(),
                sample_rate: h.sample_rate,
            })
        }
        "wav" | "png" | "jpg" | "jpeg" => Ok(read_media(path)?.probe()),
        _ => {
            let ff = ffmpeg::Ffmpeg::locate()
                .ok_or_else(|| MediaError::Undecodable(format!("no decoder for {}", path.display())))?;
            let info = ff.stream_info(path)?;
            Ok(MediaProbe {
                duration: Time::from_secs_f64(info.duration_secs),
                fps: Some(info.fps),
                resolution: Some(Resolution::new(info.width, info.height)),
                has_audio: info.sample_rate.is_some(),
                sample_rate: info.sample_rate,
            })
        }
    }
}

/// Content-addressed media directory. Asset URIs are relative to its root.
#[derive(Debug, Clone)]
pub struct MediaStore {
    root: PathBuf,
}

impl MediaStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(io_err)?;
        Ok(MediaStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, uri: &str) -> PathBuf {
        self.root.join(uri)
    }

    /// Stores media under `subdir` with a content-hash name and returns the
    /// matching asset record. Identical content yields an identical asset.
    pub fn put(&self, media: &Media, subdir: &str) -> Result<Asset> {
        let (bytes, sidecar, ext) = encode_media(media);
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        if let Some(s) = &sidecar {
            hasher.update(s);
        }
        let digest = hex::encode(hasher.finalize());
        let name = &digest[..16];
        let uri = if subdir.is_empty() { format!("{name}.{ext}") } else { format!("{subdir}/{name}.{ext}") };
        let path = self.resolve(&uri);
        if !path.exists() {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(io_err)?;
            }
            let tmp = path.with_extension(format!("{ext}.partial"));
            std::fs::write(&tmp, &bytes).map_err(io_err)?;
            if let Some(s) = &sidecar {
                std::fs::write(faces_sidecar(&path), s).map_err(io_err)?;
            }
            std::fs::rename(&tmp, &path).map_err(io_err)?;
        }
        let p = media.probe();
        Ok(Asset {
            id: format!("m{name}"),
            kind: media.kind(),
            uri,
            duration: p.duration,
            fps: p.fps,
            resolution: p.resolution,
            sample_rate: p.sample_rate,
        })
    }

    pub fn load(&self, asset: &Asset) -> Result<Media> {
        read_media(&self.resolve(&asset.uri))
    }

    /// Copies an external file into the store.
    pub fn import(&self, path: &Path, subdir: &str) -> Result<Asset> {
        self.put(&read_media(path)?, subdir)
    }

    pub fn remove(&self, uri: &str) -> Result<()> {
        let path = self.resolve(uri);
        if path.exists() {
            std::fs::remove_file(&path).map_err(io_err)?;
        }
        let sidecar = faces_sidecar(&path);
        if sidecar.exists() {
            std::fs::remove_file(sidecar).map_err(io_err)?;
        }
        Ok(())
    }

    pub fn probe_asset(&self, asset: &Asset) -> Result<MediaProbe> {
        probe(&self.resolve(&asset.uri))
    }
}

fn check_range(asset: &Asset, range: &TimeRange) -> Result<()> {
    if range.start.is_negative() || range.end <= range.start || range.end > asset.duration {
        return Err(MediaError::InvalidRange(format!(
            "[{}, {}) outside asset {} of length {}",
            range.start, range.end, asset.id, asset.duration
        )));
    }
    Ok(())
}

/// Cuts `[range.start, range.end)` out of an asset into a new asset.
pub fn extract_segment(store: &MediaStore, asset: &Asset, range: &TimeRange, kind: StreamSelect) -> Result<Asset> {
    check_range(asset, range)?;
    let media = store.load(asset)?;
    let cut_audio = |a: &Audio| Audio {
        sample_rate: a.sample_rate,
        samples: a.samples[a.sample_index(range.start)..a.sample_index(range.end)].to_vec(),
    };
    let out = match (media, kind) {
        (Media::Audio(a), StreamSelect::Audio | StreamSelect::Both) => Media::Audio(cut_audio(&a)),
        (Media::Audio(_), StreamSelect::Video) => return Err(MediaError::MissingStream("video")),
        (Media::Video { audio, .. }, StreamSelect::Audio) => {
            Media::Audio(cut_audio(audio.as_ref().ok_or(MediaError::MissingStream("audio"))?))
        }
        (Media::Video { video, audio, faces }, sel) => {
            let n = video.frames.len();
            let first = (range.start.frame_round(video.fps) as usize).min(n - 1);
            let last = (range.end.frame_round(video.fps) as usize).clamp(first + 1, n);
            let frames = video.frames[first..last].to_vec();
            let faces = faces.iter().map(|f| f.remap(first..last)).collect();
            let audio = match sel {
                StreamSelect::Both => audio.as_ref().map(cut_audio),
                _ => None,
            };
            Media::Video { video: Video { frames, ..video }, audio, faces }
        }
        (Media::Image { .. }, _) => return Err(MediaError::InvalidRange("stills have no time axis".into())),
    };
    store.put(&out, "segments")
}

/// The frame shown at `t` as a still, with its face annotations.
pub fn extract_frame(store: &MediaStore, asset: &Asset, t: Time) -> Result<Asset> {
    let (video, _, faces) = store.load(asset)?.into_video()?;
    if video.frames.is_empty() || t.is_negative() {
        return Err(MediaError::InvalidRange(format!("no frame at {t}")));
    }
    let idx = (t.frame_floor(video.fps) as usize).min(video.frames.len() - 1);
    let faces = faces
        .iter()
        .map(|f| f.remap(std::iter::once(idx)))
        .filter(|f| f.offsets[0].is_some())
        .collect();
    store.put(&Media::Image { image: video.frames[idx].clone(), faces }, "frames")
}

/// Renders a speed change: frames are resampled, audio is time-stretched.
pub fn retime_render(store: &MediaStore, asset: &Asset, speed: Speed) -> Result<Asset> {
    if !speed.is_positive() {
        return Err(MediaError::NonPositiveSpeed);
    }
    if speed == Speed::ONE {
        return Ok(asset.clone());
    }
    let media = store.load(asset)?;
    let stretch_audio = |a: &Audio| {
        let out_len = (a.duration() / speed).sample_round(a.sample_rate) as usize;
        Audio { sample_rate: a.sample_rate, samples: stretch::time_stretch(&a.samples, out_len) }
    };
    let out = match media {
        Media::Audio(a) => Media::Audio(stretch_audio(&a)),
        Media::Video { video, audio, faces } => {
            let n = video.frames.len();
            let out_n = ((video.duration() / speed).frame_round(video.fps) as usize).max(1);
            let f = speed.as_f64();
            let map: Vec<usize> = (0..out_n).map(|i| ((i as f64 * f) as usize).min(n - 1)).collect();
            let frames = map.iter().map(|&i| video.frames[i].clone()).collect();
            let faces = faces.iter().map(|t| t.remap(map.iter().copied())).collect();
            Media::Video { video: Video { frames, ..video }, audio: audio.as_ref().map(stretch_audio), faces }
        }
        Media::Image { .. } => return Ok(asset.clone()),
    };
    store.put(&out, "retimed")
}

/// Renders the project timeline and writes it to `out`. `.mzv` is written
/// natively; `.mp4` goes through ffmpeg.
pub fn export(store: &MediaStore, project: &Project, settings: &ExportSettings, out: &Path) -> Result<MediaProbe> {
    if project.is_empty() {
        return Err(MediaError::EmptyProject);
    }
    settings.validate()?;
    let rendered = render_timeline(store, project, settings.fps, settings.resolution)?;
    let ext = out.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    match ext.as_str() {
        "mzv" => {
            let bytes = container::encode(&rendered.video, rendered.audio.as_ref(), &[]);
            std::fs::write(out, bytes).map_err(io_err)?;
        }
        "mp4" => {
            let ff = ffmpeg::Ffmpeg::locate().ok_or_else(|| MediaError::EncoderFailure("ffmpeg not found".into()))?;
            ff.encode_mp4(&rendered.video, rendered.audio.as_ref(), settings, out)?;
        }
        other => return Err(MediaError::EncoderFailure(format!("unsupported container .{other}"))),
    }
    probe(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_is_exact() {
        let a = Audio { sample_rate: 16000, samples: vec![0.25, -0.5, 0.125] };
        assert_eq!(decode_wav(&encode_wav(&a)).unwrap(), a);
    }

    #[test]
    fn store_is_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let store = MediaStore::open(dir.path()).unwrap();
        let a = Media::Audio(Audio { sample_rate: 8000, samples: vec![0.1; 800] });
        let x = store.put(&a, "s").unwrap();
        let y = store.put(&a, "s").unwrap();
        assert_eq!(x, y);
        assert_eq!(x.duration, Time::new(1, 10));
        assert_eq!(store.load(&x).unwrap(), a);
    }

    #[test]
    fn image_faces_travel_in_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let store = MediaStore::open(dir.path()).unwrap();
        let face = FaceTrack { id: 1, template: vec![[1.0, 2.0]; 68], offsets: vec![Some([0.0, 0.0])] };
        let m = Media::Image { image: RgbImage::new(8, 8), faces: vec![face] };
        let asset = store.put(&m, "").unwrap();
        assert_eq!(store.load(&asset).unwrap(), m);
        store.remove(&asset.uri).unwrap();
        assert!(matches!(store.load(&asset), Err(MediaError::NotFound(_))));
    }

    #[test]
    fn probe_missing_file() {
        assert!(matches!(probe(Path::new("/nonexistent/x.mzv")), Err(MediaError::NotFound(_))));
    }
}
