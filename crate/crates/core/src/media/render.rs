//! Flattens a project timeline into one video stream and one audio mix.
//!
//! Video tracks stack in declaration order (later tracks cover earlier
//! ones); gaps are black. Audio tracks are summed; gaps are silence.

use std::collections::HashMap;

use image::imageops::FilterType;
use image::RgbImage;

use super::{stretch, Audio, Media, MediaError, MediaStore, Result, Video};
use crate::project::{AssetKind, Clip, Project, Resolution, TrackKind};
use crate::time::{Fps, Time};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone)]
pub struct RenderedTimeline {
    pub video: Video,
    pub audio: Option<Audio>,
}

pub fn linear_resample(samples: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || samples.is_empty() {
        return samples.to_vec();
    }
    let out_len = (samples.len() as u64 * to as u64 / from as u64) as usize;
    let step = from as f64 / to as f64;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let j = pos as usize;
            let frac = (pos - j as f64) as f32;
            let a = samples[j.min(samples.len() - 1)];
            let b = samples[(j + 1).min(samples.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}

fn clip_audio(clip: &Clip, audio: &Audio, out_rate: u32) -> Vec<f32> {
    let a = audio.sample_index(clip.source_range.start);
    let b = audio.sample_index(clip.source_range.end);
    let segment = &audio.samples[a..b.max(a)];
    let target = clip.duration().sample_round(audio.sample_rate) as usize;
    let stretched = stretch::time_stretch(segment, target);
    linear_resample(&stretched, audio.sample_rate, out_rate)
}

pub fn render_timeline(store: &MediaStore, project: &Project, fps: Fps, resolution: Resolution) -> Result<RenderedTimeline> {
    let mut cache: HashMap<String, Media> = HashMap::new();
    let mut load = |id: &str| -> Result<()> {
        if !cache.contains_key(id) {
            let asset = project.asset(id).map_err(|e| MediaError::NotFound(e.to_string()))?;
            cache.insert(id.to_string(), store.load(asset)?);
        }
        Ok(())
    };
    for track in &project.tracks {
        for clip in &track.clips {
            load(&clip.asset_id)?;
        }
    }

    let length = project.timeline_length();
    let frame_count = length.frame_round(fps).max(1) as usize;
    let black = RgbImage::new(resolution.width, resolution.height);
    let fit = |img: &RgbImage| -> RgbImage {
        if img.width() == resolution.width && img.height() == resolution.height {
            img.clone()
        } else {
            image::imageops::resize(img, resolution.width, resolution.height, FilterType::Nearest)
        }
    };
    let video_tracks: Vec<_> = project.tracks.iter().filter(|t| t.kind == TrackKind::Video).collect();
    let mut frames = Vec::with_capacity(frame_count);
    let mut last_key: Option<(String, usize)> = None;
    for i in 0..frame_count {
        let t = Time::from_frames(i as u64, fps);
        let hit = video_tracks.iter().rev().find_map(|track| track.clip_at(t));
        let frame = match hit {
            None => {
                last_key = None;
                black.clone()
            }
            Some(clip) => {
                let media = &cache[&clip.asset_id];
                let (key, img) = match media {
                    Media::Image { image, .. } => (0, image),
                    Media::Video { video, .. } => {
                        let src = clip.source_time_at(t);
                        let idx = (src.frame_floor(video.fps) as usize).min(video.frames.len() - 1);
                        (idx, &video.frames[idx])
                    }
                    Media::Audio(_) => unreachable!("audio asset on a video track"),
                };
                let cache_key = (clip.asset_id.clone(), key);
                // Reuse the previous output when the same source frame repeats.
                if last_key.as_ref() == Some(&cache_key) {
                    frames.last().cloned().expect("previous frame")
                } else {
                    last_key = Some(cache_key);
                    fit(img)
                }
            }
        };
        frames.push(frame);
    }

    let audio_tracks: Vec<_> = project.tracks.iter().filter(|t| t.kind == TrackKind::Audio).collect();
    let audio = if audio_tracks.is_empty() {
        None
    } else {
        let out_rate = audio_tracks
            .iter()
            .flat_map(|t| t.clips.iter())
            .filter_map(|c| project.assets.get(&c.asset_id).and_then(|a| a.sample_rate))
            .max()
            .unwrap_or(DEFAULT_SAMPLE_RATE);
        let total = Time::from_frames(frame_count as u64, fps).sample_round(out_rate) as usize;
        let mut mix = vec![0.0f32; total];
        for track in audio_tracks {
            for clip in &track.clips {
                let asset = project.asset(&clip.asset_id).map_err(|e| MediaError::NotFound(e.to_string()))?;
                if asset.kind == AssetKind::Image {
                    continue;
                }
                let Some(src) = cache[&clip.asset_id].audio() else { continue };
                let rendered = clip_audio(clip, src, out_rate);
                let offset = clip.timeline_start.sample_round(out_rate) as usize;
                for (k, s) in rendered.iter().enumerate() {
                    if let Some(slot) = mix.get_mut(offset + k) {
                        *slot += s;
                    }
                }
            }
        }
        for s in &mut mix {
            *s = s.clamp(-1.0, 1.0);
        }
        Some(Audio { sample_rate: out_rate, samples: mix })
    };

    Ok(RenderedTimeline {
        video: Video { fps, width: resolution.width, height: resolution.height, frames },
        audio,
    })
}
