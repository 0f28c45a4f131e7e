//! Synthetic media with known ground truth: drawn faces that carry their
//! 68 landmarks, slides rendered with the bundled font, tones and cuts.
//!
//! Tests, the CLI `fixture` command and the Python smoke test all build
//! their inputs here.

use image::{Rgb, RgbImage};

use crate::dsp;
use crate::face::{convex_hull, hull_contains, BOUNDARY_LANDMARKS};
use crate::geometry::PixelRect;
use crate::media::{Audio, FaceTrack, Media, Video};
use crate::text::draw_line;
use crate::time::Fps;

pub const SKIN: Rgb<u8> = Rgb([224, 172, 140]);
pub const FEATURE: Rgb<u8> = Rgb([40, 30, 30]);
pub const LIPS: Rgb<u8> = Rgb([150, 60, 60]);
pub const SLIDE_BG: Rgb<u8> = Rgb([245, 245, 235]);
pub const SLIDE_INK: Rgb<u8> = Rgb([20, 30, 90]);

fn ellipse(cx: f32, cy: f32, rx: f32, ry: f32, from: f32, n: usize) -> impl Iterator<Item = [f32; 2]> {
    (0..n).map(move |j| {
        let a = from - j as f32 * std::f32::consts::TAU / n as f32;
        [cx + rx * a.cos(), cy - ry * a.sin()]
    })
}

/// 68 landmarks of a frontal face `width` pixels wide, centred on the
/// origin at eye level and rounded to whole pixels.
pub fn face_template(width: f32) -> Vec<[f32; 2]> {
    let w = width;
    let mut pts: Vec<[f32; 2]> = Vec::with_capacity(68);
    // Jaw 0..=16, ear to ear through the chin.
    for k in 0..17 {
        let t = std::f32::consts::PI * k as f32 / 16.0;
        pts.push([-w / 2.0 * t.cos(), 0.55 * w * t.sin()]);
    }
    // Brows 17..=26.
    for side in [-1.0f32, 1.0] {
        for k in 0..5 {
            let u = k as f32 / 4.0;
            let x = if side < 0.0 { -0.42 + 0.32 * u } else { 0.10 + 0.32 * u } * w;
            let arch = 0.04 * w * (std::f32::consts::PI * u).sin();
            pts.push([x, -0.22 * w - arch]);
        }
    }
    // Nose bridge 27..=30 and base 31..=35.
    for k in 0..4 {
        pts.push([0.0, -0.14 * w + k as f32 * 0.08 * w]);
    }
    for k in 0..5 {
        pts.push([-0.1 * w + k as f32 * 0.05 * w, 0.15 * w]);
    }
    // Eyes 36..=47.
    pts.extend(ellipse(-0.22 * w, -0.08 * w, 0.08 * w, 0.03 * w, std::f32::consts::PI, 6));
    pts.extend(ellipse(0.22 * w, -0.08 * w, 0.08 * w, 0.03 * w, std::f32::consts::PI, 6));
    // Outer lips 48..=59 start at the left corner; inner lips 60..=67.
    pts.extend(ellipse(0.0, 0.32 * w, 0.18 * w, 0.05 * w, std::f32::consts::PI, 12));
    pts.extend(ellipse(0.0, 0.32 * w, 0.12 * w, 0.025 * w, std::f32::consts::PI, 8));
    pts.iter().map(|p| [p[0].round(), p[1].round()]).collect()
}

fn fill_polygon(img: &mut RgbImage, points: &[[f32; 2]], color: Rgb<u8>) {
    let Ok(hull) = convex_hull(points) else { return };
    let Some(rect) = PixelRect::bounding(points, img.width(), img.height()) else { return };
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            if hull_contains(&hull, [x as f64, y as f64]) {
                img.put_pixel(x, y, color);
            }
        }
    }
}

/// Paints a face from its landmarks.
pub fn draw_face(img: &mut RgbImage, landmarks: &[[f32; 2]]) {
    fill_polygon(img, &landmarks[BOUNDARY_LANDMARKS], SKIN);
    fill_polygon(img, &landmarks[36..42], FEATURE);
    fill_polygon(img, &landmarks[42..48], FEATURE);
    fill_polygon(img, &landmarks[48..60], LIPS);
    for b in [17..22, 22..27] {
        for p in &landmarks[b] {
            let (x, y) = (p[0].round() as i64, p[1].round() as i64);
            if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
                img.put_pixel(x as u32, y as u32, FEATURE);
            }
        }
    }
}

/// Deterministic textured backdrop so paste-back errors are visible.
pub fn backdrop(width: u32, height: u32, seed: u32) -> RgbImage {
    RgbImage::from_fn(width, height, |x, y| {
        let v = x.wrapping_mul(7).wrapping_add(y.wrapping_mul(13)).wrapping_add(seed.wrapping_mul(31));
        Rgb([(40 + v % 60) as u8, (70 + (v / 3) % 50) as u8, (90 + (v / 7) % 40) as u8])
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacePlacement {
    pub center: [f32; 2],
    pub width: f32,
    /// Peak drift in pixels; the face sways on a slow Lissajous path.
    pub sway: f32,
}

impl FacePlacement {
    pub fn offset_at(&self, frame: usize) -> [f32; 2] {
        let t = frame as f32;
        [
            (self.center[0] + self.sway * (0.4 * t).sin()).round(),
            (self.center[1] + self.sway * (0.3 * t).cos()).round(),
        ]
    }
}

/// Video of faces on a textured backdrop, with ground-truth tracks.
pub fn face_video(width: u32, height: u32, fps: Fps, frames: usize, faces: &[FacePlacement], audio: Option<Audio>) -> Media {
    let tracks: Vec<FaceTrack> = faces
        .iter()
        .enumerate()
        .map(|(i, f)| FaceTrack {
            id: i as u32 + 1,
            template: face_template(f.width),
            offsets: (0..frames).map(|k| Some(f.offset_at(k))).collect(),
        })
        .collect();
    let frames = (0..frames)
        .map(|k| {
            let mut img = backdrop(width, height, 0);
            for t in &tracks {
                draw_face(&mut img, &t.landmarks_at(k).expect("every frame has a face"));
            }
            img
        })
        .collect();
    Media::Video { video: Video { fps, width, height, frames }, audio, faces: tracks }
}

/// Still portrait with one centred face.
pub fn face_image(width: u32, height: u32, face_width: f32) -> Media {
    let template = face_template(face_width);
    let off = [(width / 2) as f32, (height * 2 / 5) as f32];
    let track = FaceTrack { id: 1, template, offsets: vec![Some(off)] };
    let mut image = backdrop(width, height, 3);
    draw_face(&mut image, &track.landmarks_at(0).expect("one frame"));
    Media::Image { image, faces: vec![track] }
}

/// Uniformly coloured still without a face.
pub fn blank_image(width: u32, height: u32) -> Media {
    Media::Image { image: RgbImage::from_pixel(width, height, Rgb([128, 128, 128])), faces: vec![] }
}

pub fn sine_audio(freq: f32, amplitude: f32, sample_rate: u32, seconds: f64) -> Audio {
    let n = (seconds * sample_rate as f64).round() as usize;
    Audio { sample_rate, samples: dsp::sine(freq, amplitude, sample_rate, n) }
}

/// Syllable-like tone bursts in the 1 to 3 kHz band: 350 ms on, 150 ms off.
pub fn speech_audio(sample_rate: u32, seconds: f64) -> Audio {
    let n = (seconds * sample_rate as f64).round() as usize;
    let syllable = sample_rate as usize / 2;
    let on = syllable * 7 / 10;
    let mut samples = Vec::with_capacity(n);
    let mut k = 0;
    while samples.len() < n {
        let freq = 1000.0 + 200.0 * (k % 11) as f32;
        samples.extend(dsp::tone_burst(freq, 0.25, sample_rate, on));
        samples.extend(std::iter::repeat_n(0.0, syllable - on));
        k += 1;
    }
    samples.truncate(n);
    Audio { sample_rate, samples }
}

/// Speech-band bursts over a 440 Hz "music" bed.
pub fn speech_over_music(sample_rate: u32, seconds: f64) -> Audio {
    speech_audio(sample_rate, seconds).mix(&sine_audio(440.0, 0.2, sample_rate, seconds))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlideLine {
    pub x: u32,
    pub y: u32,
    pub text: String,
    pub scale: u32,
}

impl SlideLine {
    pub fn new(x: u32, y: u32, text: &str, scale: u32) -> Self {
        SlideLine { x, y, text: text.to_string(), scale }
    }
}

/// Renders a slide and returns the cell box of every line.
pub fn slide_frame(width: u32, height: u32, background: Rgb<u8>, ink: Rgb<u8>, lines: &[SlideLine]) -> (RgbImage, Vec<PixelRect>) {
    let mut img = RgbImage::from_pixel(width, height, background);
    let boxes = lines.iter().map(|l| draw_line(&mut img, l.x, l.y, &l.text, l.scale, ink)).collect();
    (img, boxes)
}

/// Slide number `k` of a deck: a title and one body line.
pub fn deck_slide(k: usize) -> Vec<SlideLine> {
    const TITLES: [&str; 6] = ["Fourier", "Sampling", "Convolution", "Filters", "Z transform", "Summary"];
    const BODIES: [&str; 6] = [
        "x(t) = sum a_k",
        "fs > 2 fmax",
        "y = x * h",
        "low pass, high pass",
        "X(z) = sum x[n]",
        "questions?",
    ];
    vec![SlideLine::new(12, 16, TITLES[k % 6], 3), SlideLine::new(12, 60, BODIES[k % 6], 2)]
}

fn slide_colors(k: usize) -> (Rgb<u8>, Rgb<u8>) {
    let bgs = [SLIDE_BG, Rgb([230, 240, 250]), Rgb([250, 235, 225]), Rgb([235, 250, 235])];
    (bgs[k % bgs.len()], SLIDE_INK)
}

/// Slide video that cuts to the next slide at each frame in `cuts`.
pub fn cut_video(width: u32, height: u32, fps: Fps, frames: usize, cuts: &[usize]) -> Media {
    let mut slide = 0;
    let mut current = None;
    let mut out = Vec::with_capacity(frames);
    for i in 0..frames {
        if cuts.contains(&i) {
            slide += 1;
            current = None;
        }
        let img = current.get_or_insert_with(|| {
            let (bg, ink) = slide_colors(slide);
            slide_frame(width, height, bg, ink, &deck_slide(slide)).0
        });
        out.push(img.clone());
    }
    Media::Video { video: Video { fps, width, height, frames: out }, audio: None, faces: vec![] }
}

/// The synthetic lecture: two slides with rendered text, the speaker in a
/// picture-in-picture inset and speech-band audio.
#[derive(Debug, Clone)]
pub struct Lecture {
    pub media: Media,
    pub fps: Fps,
    /// First frame of the second slide.
    pub cut_frame: usize,
    /// Picture-in-picture rectangle holding the speaker.
    pub inset: PixelRect,
    /// Rendered line boxes per slide.
    pub line_boxes: Vec<Vec<PixelRect>>,
    pub slides: Vec<Vec<SlideLine>>,
}

pub const LECTURE_WIDTH: u32 = 320;
pub const LECTURE_HEIGHT: u32 = 180;
pub const LECTURE_FPS: Fps = Fps::integer(10);
pub const LECTURE_SAMPLE_RATE: u32 = 16_000;

pub fn lecture(seconds: u32) -> Lecture {
    let (w, h, fps) = (LECTURE_WIDTH, LECTURE_HEIGHT, LECTURE_FPS);
    let frames = (seconds * fps.num / fps.den) as usize;
    let cut_frame = frames / 2;
    let inset = PixelRect::new(w - 84, h - 84, w - 4, h - 4);
    let slides = vec![deck_slide(0), deck_slide(1)];
    let mut line_boxes = Vec::new();
    let mut bases = Vec::new();
    for (k, lines) in slides.iter().enumerate() {
        let (bg, ink) = slide_colors(k);
        let (img, boxes) = slide_frame(w, h, bg, ink, lines);
        bases.push(img);
        line_boxes.push(boxes);
    }
    let speaker = FacePlacement {
        center: [(inset.x0 + 40) as f32, (inset.y0 + 34) as f32],
        width: 48.0,
        sway: 1.0,
    };
    let template = face_template(speaker.width);
    let offsets: Vec<Option<[f32; 2]>> = (0..frames).map(|i| Some(speaker.offset_at(i))).collect();
    let track = FaceTrack { id: 1, template, offsets };
    let inset_bg = backdrop(inset.width(), inset.height(), 5);
    let video_frames = (0..frames)
        .map(|i| {
            let mut img = bases[usize::from(i >= cut_frame)].clone();
            image::imageops::replace(&mut img, &inset_bg, inset.x0 as i64, inset.y0 as i64);
            draw_face(&mut img, &track.landmarks_at(i).expect("speaker in every frame"));
            img
        })
        .collect();
    let audio = speech_audio(LECTURE_SAMPLE_RATE, seconds as f64);
    Lecture {
        media: Media::Video {
            video: Video { fps, width: w, height: h, frames: video_frames },
            audio: Some(audio),
            faces: vec![track],
        },
        fps,
        cut_frame,
        inset,
        line_boxes,
        slides,
    }
}
