//! Deterministic stand-ins for every capability.
//!
//! Rules:
//! - ASR: the audio is cut into 2 s windows. Windows with RMS below
//!   `SILENCE_RMS` are skipped. The text of window `k` (id `k + 1`) is built
//!   from the sha256 of its samples as little-endian PCM16: one 5-hex-digit
//!   word per started 0.5 s, at most four words.
//! - NMT: identity when languages match, `""` passes through, otherwise
//!   `⟦tgt⟧text`.
//! - TTS: 16 kHz mono. Every character lasts 60 ms: letters are tones at
//!   `1000 + (code % 32) * 50` Hz plus a per-voice offset, whitespace is
//!   silence. `,` and `.` are 200 ms pauses.
//! - Lipsync: one output frame per source frame until the audio ends, the
//!   last frame held when the audio is longer. Faces are brightened and get
//!   a mouth whose opening follows the audio RMS.
//! - Talking head: 25 fps, frame 0 is the still, later frames animate the
//!   mouth.
//! - Reenact: the still is translated by the driving face's motion.
//! - Vocal separation: FFT brick-wall split at 700 Hz, speech above.
//! - OCR: see [`super::ocr`].

use std::collections::BTreeSet;
use std::sync::Arc;

use image::{Rgb, RgbImage};
use sha2::{Digest, Sha256};

use super::{
    AdapterDescriptor, AdapterError, AdapterImpl, Capability, LineReader, LipSyncer, Reenactor, Result, Synthesizer,
    TalkingHeadGenerator, TextRegion, TimedTranscript, Transcriber, TranscriptSegment, Translator, VocalSeparator,
};
use crate::dsp;
use crate::geometry::PixelRect;
use crate::media::{Audio, FaceTrack, Media, MediaStore, Video};
use crate::project::Asset;
use crate::time::{Fps, Time};

pub const ASR_NAME: &str = "stub-asr";
pub const NMT_NAME: &str = "stub-nmt";
pub const TTS_NAME: &str = "stub-tts";
pub const LIPSYNC_NAME: &str = "stub-lipsync";
pub const TALKING_HEAD_NAME: &str = "stub-talking-head";
pub const REENACT_NAME: &str = "stub-reenact";
pub const SEPARATOR_NAME: &str = "stub-separator";
pub const OCR_NAME: &str = "stub-ocr";

/// Store subdirectory for adapter outputs.
pub const OUTPUT_DIR: &str = "generated";

pub const ASR_WINDOW_SECS: i64 = 2;
pub const SILENCE_RMS: f32 = 1e-3;
pub const TTS_SAMPLE_RATE: u32 = 16_000;
pub const TTS_CHAR_MS: i64 = 60;
pub const TTS_PAUSE_MS: i64 = 200;
pub const TTS_AMPLITUDE: f32 = 0.3;
pub const TALKING_HEAD_FPS: Fps = Fps::integer(25);
pub const SEPARATION_CUTOFF_HZ: f32 = 700.0;

/// Languages the text stubs accept.
pub const LANGUAGES: &[&str] = &[
    "ar", "bn", "de", "en", "es", "fr", "gu", "hi", "it", "ja", "kn", "ml", "mr", "pa", "pt", "ru", "ta", "te", "ur",
    "xx", "zh",
];

fn descriptor(capability: Capability, name: &str, languages: bool) -> AdapterDescriptor {
    AdapterDescriptor {
        capability,
        name: name.to_string(),
        is_stub: true,
        supported_languages: if languages { LANGUAGES.iter().map(|s| s.to_string()).collect() } else { BTreeSet::new() },
        max_parallelism: None,
    }
}

/// One instance of every stub.
pub fn all() -> Vec<AdapterImpl> {
    vec![
        AdapterImpl::Transcriber(Arc::new(StubTranscriber::new())),
        AdapterImpl::Translator(Arc::new(StubTranslator::new())),
        AdapterImpl::Synthesizer(Arc::new(StubSynthesizer::new())),
        AdapterImpl::LipSyncer(Arc::new(StubLipSyncer::new())),
        AdapterImpl::TalkingHead(Arc::new(StubTalkingHead::new())),
        AdapterImpl::Reenactor(Arc::new(StubReenactor::new())),
        AdapterImpl::VocalSeparator(Arc::new(StubSeparator::new())),
        AdapterImpl::LineReader(Arc::new(StubLineReader::new())),
    ]
}

fn load_audio(store: &MediaStore, asset: &Asset) -> Result<Audio> {
    Ok(store.load(asset)?.into_audio()?)
}

/// Samples as little-endian 16-bit PCM.
pub fn pcm16_bytes(samples: &[f32]) -> Vec<u8> {
    samples
        .iter()
        .flat_map(|s| ((s.clamp(-1.0, 1.0) * 32767.0).round() as i16).to_le_bytes())
        .collect()
}

pub struct StubTranscriber(AdapterDescriptor);

impl StubTranscriber {
    pub fn new() -> Self {
        StubTranscriber(descriptor(Capability::Asr, ASR_NAME, true))
    }

    pub fn transcribe_audio(audio: &Audio) -> TimedTranscript {
        let total = audio.duration();
        let window = Time::from_secs(ASR_WINDOW_SECS);
        let mut segments = Vec::new();
        let mut k = 0u32;
        let mut start = Time::ZERO;
        while start < total {
            let end = (start + window).min(total);
            let samples = &audio.samples[audio.sample_index(start)..audio.sample_index(end)];
            if dsp::rms(samples) >= SILENCE_RMS {
                let digest = hex::encode(Sha256::digest(pcm16_bytes(samples)));
                let words = ((end - start).as_secs_f64() / 0.5).ceil().clamp(1.0, 4.0) as usize;
                let text = (0..words).map(|w| &digest[w * 5..w * 5 + 5]).collect::<Vec<_>>().join(" ");
                segments.push(TranscriptSegment { id: k + 1, start, end, text });
            }
            k += 1;
            start = end;
        }
        TimedTranscript { segments }
    }
}

impl Transcriber for StubTranscriber {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.0
    }

    fn transcribe(&self, store: &MediaStore, audio: &Asset, language: &str) -> Result<TimedTranscript> {
        self.0.require_language(language)?;
        Ok(Self::transcribe_audio(&load_audio(store, audio)?))
    }
}

pub struct StubTranslator(AdapterDescriptor);

impl StubTranslator {
    pub fn new() -> Self {
        StubTranslator(descriptor(Capability::Nmt, NMT_NAME, true))
    }
}

impl Translator for StubTranslator {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.0
    }

    fn translate(&self, text: &str, src_lang: &str, tgt_lang: &str) -> Result<String> {
        self.0.require_language(src_lang)?;
        self.0.require_language(tgt_lang)?;
        if text.is_empty() || super::primary_subtag(src_lang) == super::primary_subtag(tgt_lang) {
            return Ok(text.to_string());
        }
        Ok(format!("⟦{tgt_lang}⟧{text}"))
    }
}

pub struct StubSynthesizer(AdapterDescriptor);

impl StubSynthesizer {
    pub fn new() -> Self {
        StubSynthesizer(descriptor(Capability::Tts, TTS_NAME, true))
    }

    /// Pitch offset in Hz derived from the voice name.
    pub fn voice_offset(voice: &str) -> f32 {
        (voice.bytes().fold(0u32, |a, b| a.wrapping_add(b as u32)) % 8) as f32 * 10.0
    }

    pub fn char_frequency(c: char, voice: &str) -> f32 {
        1000.0 + (c as u32 % 32) as f32 * 50.0 + Self::voice_offset(voice)
    }

    pub fn render(text: &str, voice: &str) -> Result<Audio> {
        if text.trim().is_empty() {
            return Err(AdapterError::EmptyText);
        }
        let sr = TTS_SAMPLE_RATE;
        let char_len = Time::from_millis(TTS_CHAR_MS).sample_round(sr) as usize;
        let pause_len = Time::from_millis(TTS_PAUSE_MS).sample_round(sr) as usize;
        let mut samples = Vec::new();
        for c in text.chars() {
            match c {
                ',' | '.' => samples.extend(std::iter::repeat_n(0.0, pause_len)),
                c if c.is_whitespace() => samples.extend(std::iter::repeat_n(0.0, char_len)),
                c => samples.extend(dsp::tone_burst(Self::char_frequency(c, voice), TTS_AMPLITUDE, sr, char_len)),
            }
        }
        Ok(Audio { sample_rate: sr, samples })
    }
}

impl Synthesizer for StubSynthesizer {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.0
    }

    fn synthesize(&self, store: &MediaStore, text: &str, voice: &str) -> Result<Asset> {
        let audio = Self::render(text, voice)?;
        Ok(store.put(&Media::Audio(audio), OUTPUT_DIR)?)
    }
}

/// Mouth opening in `[0, 1]` for an audio window.
pub fn mouth_openness(samples: &[f32]) -> f32 {
    (dsp::rms(samples) * 4.0).clamp(0.0, 1.0)
}

/// Draws a filled mouth ellipse between the mouth corners (landmarks 48
/// and 54 of the 68-point layout).
pub fn paint_mouth(img: &mut RgbImage, landmarks: &[[f32; 2]], openness: f32) {
    if landmarks.len() < 68 {
        return;
    }
    let (l, r) = (landmarks[48], landmarks[54]);
    let cx = (l[0] + r[0]) / 2.0;
    let cy = (l[1] + r[1]) / 2.0;
    let rx = ((r[0] - l[0]).abs() / 2.0).max(1.0);
    let ry = (openness * rx * 0.6).max(0.5);
    let x0 = (cx - rx).floor().max(0.0) as u32;
    let y0 = (cy - ry).floor().max(0.0) as u32;
    let x1 = ((cx + rx).ceil().max(0.0) as u32 + 1).min(img.width());
    let y1 = ((cy + ry).ceil().max(0.0) as u32 + 1).min(img.height());
    for y in y0..y1 {
        for x in x0..x1 {
            let dx = (x as f32 - cx) / rx;
            let dy = (y as f32 - cy) / ry;
            if dx * dx + dy * dy <= 1.0 {
                img.put_pixel(x, y, Rgb([70, 15, 25]));
            }
        }
    }
}

fn brighten(img: &mut RgbImage, rect: PixelRect, amount: u8) {
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            let p = img.get_pixel_mut(x, y);
            for c in p.0.iter_mut() {
                *c = c.saturating_add(amount);
            }
        }
    }
}

/// Audio samples under frame `i`.
fn frame_window(audio: &Audio, fps: Fps, i: usize) -> &[f32] {
    let a = audio.sample_index(Time::from_frames(i as u64, fps));
    let b = audio.sample_index(Time::from_frames(i as u64 + 1, fps));
    &audio.samples[a.min(b)..b]
}

fn face_bbox(track: &FaceTrack, frame: usize, w: u32, h: u32) -> Option<PixelRect> {
    PixelRect::bounding(&track.landmarks_at(frame)?, w, h)
}

fn first_face_frame(track: &FaceTrack) -> Option<usize> {
    track.offsets.iter().position(Option::is_some)
}

pub struct StubLipSyncer(AdapterDescriptor);

impl StubLipSyncer {
    pub fn new() -> Self {
        StubLipSyncer(descriptor(Capability::Lipsync, LIPSYNC_NAME, false))
    }

    /// Face tracks whose box centre lies inside `roi` on some frame.
    pub fn faces_in_roi<'a>(video: &Video, faces: &'a [FaceTrack], roi: Option<PixelRect>) -> Vec<&'a FaceTrack> {
        faces
            .iter()
            .filter(|t| {
                (0..t.offsets.len()).any(|i| match face_bbox(t, i, video.width, video.height) {
                    None => false,
                    Some(b) => match roi {
                        None => true,
                        Some(r) => {
                            let (cx, cy) = b.center();
                            cx >= r.x0 as f64 && cx < r.x1 as f64 && cy >= r.y0 as f64 && cy < r.y1 as f64
                        }
                    },
                })
            })
            .collect()
    }

    pub fn render(video: &Video, faces: &[FaceTrack], audio: &Audio, roi: Option<PixelRect>) -> Result<Media> {
        let selected = Self::faces_in_roi(video, faces, roi);
        if selected.is_empty() || video.frames.is_empty() {
            return Err(AdapterError::NoFaceFound);
        }
        let n_src = video.frames.len();
        let n_out = (audio.duration().frame_round(video.fps) as usize).max(1);
        let map: Vec<usize> = (0..n_out).map(|i| i.min(n_src - 1)).collect();
        let frames = map
            .iter()
            .enumerate()
            .map(|(i, &src)| {
                let mut img = video.frames[src].clone();
                let openness = mouth_openness(frame_window(audio, video.fps, i));
                for t in &selected {
                    if let (Some(b), Some(lm)) = (face_bbox(t, src, video.width, video.height), t.landmarks_at(src)) {
                        brighten(&mut img, b.pad(4, video.width, video.height), 6);
                        paint_mouth(&mut img, &lm, openness);
                    }
                }
                img
            })
            .collect();
        Ok(Media::Video {
            video: Video { frames, ..video.clone() },
            audio: Some(audio.clone()),
            faces: faces.iter().map(|t| t.remap(map.iter().copied())).collect(),
        })
    }
}

impl LipSyncer for StubLipSyncer {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.0
    }

    fn lipsync(&self, store: &MediaStore, video: &Asset, audio: &Asset, roi: Option<PixelRect>) -> Result<Asset> {
        let (v, _, faces) = store.load(video)?.into_video()?;
        let a = load_audio(store, audio)?;
        Ok(store.put(&Self::render(&v, &faces, &a, roi)?, OUTPUT_DIR)?)
    }
}

pub struct StubTalkingHead(AdapterDescriptor);

impl StubTalkingHead {
    pub fn new() -> Self {
        StubTalkingHead(descriptor(Capability::TalkingHead, TALKING_HEAD_NAME, false))
    }

    pub fn render(image: &RgbImage, faces: &[FaceTrack], audio: &Audio) -> Result<Media> {
        let face = faces
            .iter()
            .find_map(|t| first_face_frame(t).map(|i| (t, i)))
            .ok_or(AdapterError::NoFaceFound)?;
        let (track, at) = face;
        let landmarks = track.landmarks_at(at).expect("frame has landmarks");
        let fps = TALKING_HEAD_FPS;
        let n = (audio.duration().frame_round(fps) as usize).max(1);
        let frames = (0..n)
            .map(|i| {
                let mut img = image.clone();
                if i > 0 {
                    paint_mouth(&mut img, &landmarks, mouth_openness(frame_window(audio, fps, i)));
                }
                img
            })
            .collect();
        let track = FaceTrack { id: track.id, template: track.template.clone(), offsets: vec![track.offsets[at]; n] };
        Ok(Media::Video {
            video: Video { fps, width: image.width(), height: image.height(), frames },
            audio: Some(audio.clone()),
            faces: vec![track],
        })
    }
}

impl TalkingHeadGenerator for StubTalkingHead {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.0
    }

    fn talking_head(&self, store: &MediaStore, image: &Asset, audio: &Asset) -> Result<Asset> {
        let (img, faces) = store.load(image)?.into_image()?;
        let a = load_audio(store, audio)?;
        Ok(store.put(&Self::render(&img, &faces, &a)?, OUTPUT_DIR)?)
    }
}

pub struct StubReenactor(AdapterDescriptor);

impl StubReenactor {
    pub fn new() -> Self {
        StubReenactor(descriptor(Capability::Reenact, REENACT_NAME, false))
    }

    fn translate(src: &RgbImage, dx: i64, dy: i64) -> RgbImage {
        let (w, h) = (src.width() as i64, src.height() as i64);
        RgbImage::from_fn(src.width(), src.height(), |x, y| {
            let sx = (x as i64 - dx).clamp(0, w - 1) as u32;
            let sy = (y as i64 - dy).clamp(0, h - 1) as u32;
            *src.get_pixel(sx, sy)
        })
    }

    pub fn render(
        image: &RgbImage,
        source_faces: &[FaceTrack],
        driving: &Video,
        driving_audio: Option<&Audio>,
        driving_faces: &[FaceTrack],
    ) -> Result<Media> {
        let (src_track, src_at) = source_faces
            .iter()
            .find_map(|t| first_face_frame(t).map(|i| (t, i)))
            .ok_or(AdapterError::NoFaceFound)?;
        let (drv, drv_at) = driving_faces
            .iter()
            .find_map(|t| first_face_frame(t).map(|i| (t, i)))
            .ok_or(AdapterError::NoFaceFound)?;
        let src_off = src_track.offsets[src_at].expect("first face frame");
        let base = drv.offsets[drv_at].expect("first face frame");
        let mut delta = [0.0f32; 2];
        let mut frames = Vec::with_capacity(driving.frames.len());
        let mut offsets = Vec::with_capacity(driving.frames.len());
        for i in 0..driving.frames.len() {
            if let Some(Some(o)) = drv.offsets.get(i) {
                delta = [o[0] - base[0], o[1] - base[1]];
            }
            let (dx, dy) = (delta[0].round() as i64, delta[1].round() as i64);
            frames.push(Self::translate(image, dx, dy));
            offsets.push(Some([src_off[0] + dx as f32, src_off[1] + dy as f32]));
        }
        Ok(Media::Video {
            video: Video { fps: driving.fps, width: image.width(), height: image.height(), frames },
            audio: driving_audio.cloned(),
            faces: vec![FaceTrack { id: src_track.id, template: src_track.template.clone(), offsets }],
        })
    }
}

impl Reenactor for StubReenactor {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.0
    }

    fn reenact(&self, store: &MediaStore, source_image: &Asset, driving_video: &Asset) -> Result<Asset> {
        let (img, src_faces) = store.load(source_image)?.into_image()?;
        let (v, a, faces) = store.load(driving_video)?.into_video()?;
        Ok(store.put(&Self::render(&img, &src_faces, &v, a.as_ref(), &faces)?, OUTPUT_DIR)?)
    }
}

pub struct StubSeparator(AdapterDescriptor);

impl StubSeparator {
    pub fn new() -> Self {
        StubSeparator(descriptor(Capability::VocalSeparation, SEPARATOR_NAME, false))
    }

    /// `(speech, music)`.
    pub fn split(audio: &Audio) -> (Audio, Audio) {
        let (low, high) = dsp::band_split(&audio.samples, audio.sample_rate, SEPARATION_CUTOFF_HZ);
        (
            Audio { sample_rate: audio.sample_rate, samples: high },
            Audio { sample_rate: audio.sample_rate, samples: low },
        )
    }
}

impl VocalSeparator for StubSeparator {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.0
    }

    fn separate_vocals(&self, store: &MediaStore, audio: &Asset) -> Result<(Asset, Asset)> {
        let (speech, music) = Self::split(&load_audio(store, audio)?);
        Ok((store.put(&Media::Audio(speech), OUTPUT_DIR)?, store.put(&Media::Audio(music), OUTPUT_DIR)?))
    }
}

pub struct StubLineReader(AdapterDescriptor);

impl StubLineReader {
    pub fn new() -> Self {
        StubLineReader(descriptor(Capability::OcrLines, OCR_NAME, false))
    }
}

impl LineReader for StubLineReader {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.0
    }

    fn ocr_lines(&self, frame: &RgbImage) -> Result<Vec<TextRegion>> {
        Ok(super::ocr::read_lines(frame))
    }
}

macro_rules! impl_default {
    ($($t:ident),*) => {
        $(impl Default for $t {
            fn default() -> Self {
                Self::new()
            }
        })*
    };
}

impl_default!(
    StubTranscriber,
    StubTranslator,
    StubSynthesizer,
    StubLipSyncer,
    StubTalkingHead,
    StubReenactor,
    StubSeparator,
    StubLineReader
);

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(len: usize, seed: u32) -> Vec<f32> {
        let mut x = seed.wrapping_mul(2654435761).max(1);
        (0..len)
            .map(|_| {
                x ^= x << 13;
                x ^= x >> 17;
                x ^= x << 5;
                (x as f32 / u32::MAX as f32 - 0.5) * 0.2
            })
            .collect()
    }

    #[test]
    fn asr_windows_and_silence() {
        let silent = Audio::silence(16000, 32000);
        assert!(StubTranscriber::transcribe_audio(&silent).segments.is_empty());

        let audio = Audio { sample_rate: 8000, samples: noise(8000 * 5, 7) };
        let t = StubTranscriber::transcribe_audio(&audio);
        assert_eq!(t.segments.len(), 3);
        assert!(t.is_well_formed());
        assert_eq!(t.segments[2].start, Time::from_secs(4));
        assert_eq!(t.segments[2].end, Time::from_secs(5));
        assert_eq!(t.segments[2].text.split(' ').count(), 2);
        assert_eq!(t.segments[0].text.split(' ').count(), 4);
    }

    #[test]
    fn nmt_rules() {
        let s = StubTranslator::new();
        assert_eq!(s.translate("hello", "en", "en").unwrap(), "hello");
        assert_eq!(s.translate("hello", "en", "xx").unwrap(), "⟦xx⟧hello");
        assert_eq!(s.translate("", "en", "hi").unwrap(), "");
        assert_eq!(
            s.translate("a", "en", "qq"),
            Err(AdapterError::UnsupportedLanguage("qq".into()))
        );
    }

    #[test]
    fn tts_lengths() {
        let a = StubSynthesizer::render("hello", "default").unwrap();
        assert_eq!(a.samples.len(), 4800);
        let b = StubSynthesizer::render("a,b", "default").unwrap();
        assert_eq!(b.samples.len(), 960 + 3200 + 960);
        assert!(b.samples[960..960 + 3200].iter().all(|s| *s == 0.0));
        assert_eq!(StubSynthesizer::render("", "v"), Err(AdapterError::EmptyText));
    }

    #[test]
    fn separator_splits_bands() {
        let mut x = dsp::sine(440.0, 0.3, 16000, 16000);
        for (a, b) in x.iter_mut().zip(dsp::sine(1500.0, 0.3, 16000, 16000)) {
            *a += b;
        }
        let (speech, music) = StubSeparator::split(&Audio { sample_rate: 16000, samples: x });
        assert!((dsp::dominant_frequency(&music.samples, 16000) - 440.0).abs() < 2.0);
        assert!((dsp::dominant_frequency(&speech.samples, 16000) - 1500.0).abs() < 2.0);
    }

    #[test]
    fn pcm16_is_little_endian() {
        assert_eq!(pcm16_bytes(&[1.0, -1.0, 0.0]), vec![0xFF, 0x7F, 0x01, 0x80, 0, 0]);
    }
}
