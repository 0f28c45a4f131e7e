//! Shell-out wrapper around the `ffmpeg` binary for MP4 interchange.
//!
//! The binary is taken from `$DUBEDIT_FFMPEG`, then `ffmpeg` on `PATH`,
//! then the copy bundled with the `imageio-ffmpeg` Python package.
//!
//! Command templates (placeholders in braces):
//!
//! ```text
//! probe:   ffmpeg -hide_banner -i {input}
//! decode:  ffmpeg -v error -i {input} -f rawvideo -pix_fmt rgb24 -
//!          ffmpeg -v error -i {input} -vn -f f32le -ac 1 -ar {sample_rate} -
//! encode:  ffmpeg -y -v error -f rawvideo -pix_fmt rgb24 -s {w}x{h} -framerate {fps}
//!                 -i {frames.rgb} [-f f32le -ar {sample_rate} -ac 1 -i {audio.f32}]
//!                 -map 0:v [-map 1:a] -c:v libx264 -preset medium -threads 1
//!                 -pix_fmt yuv420p -b:v {video_bitrate} [-c:a aac -b:a {audio_bitrate}]
//!                 -movflags +faststart {output}
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use image::RgbImage;

use super::{Audio, ExportSettings, MediaError, Video};
use crate::time::Fps;

/// Sample rate audio is decoded at when importing external media.
pub const IMPORT_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone)]
pub struct Ffmpeg {
    bin: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamInfo {
    pub width: u32,
    pub height: u32,
    pub fps: Fps,
    pub sample_rate: Option<u32>,
    pub duration_secs: f64,
}

impl Ffmpeg {
    pub fn at(bin: impl Into<PathBuf>) -> Self {
        Ffmpeg { bin: bin.into() }
    }

    pub fn locate() -> Option<Ffmpeg> {
        if let Ok(p) = std::env::var("DUBEDIT_FFMPEG") {
            if !p.is_empty() {
                return Some(Ffmpeg::at(p));
            }
        }
        if Command::new("ffmpeg").arg("-version").output().map(|o| o.status.success()).unwrap_or(false) {
            return Some(Ffmpeg::at("ffmpeg"));
        }
        let out = Command::new("python3")
            .args(["-c", "import imageio_ffmpeg; print(imageio_ffmpeg.get_ffmpeg_exe())"])
            .output()
            .ok()?;
        if !out.status.success() {
            return None;
        }
        let path = String::from_utf8_lossy(&out.stdout).trim().to_string();
        (!path.is_empty() && Path::new(&path).exists()).then(|| Ffmpeg::at(path))
    }

    pub fn binary(&self) -> &Path {
        &self.bin
    }

    pub fn stream_info(&self, input: &Path) -> Result<StreamInfo, MediaError> {
        let out = Command::new(&self.bin)
            .args(["-hide_banner", "-i"])
            .arg(input)
            .output()
            .map_err(|e| MediaError::EncoderFailure(format!("cannot run ffmpeg: {e}")))?;
        parse_stream_info(&String::from_utf8_lossy(&out.stderr))
    }

    pub fn decode(&self, input: &Path) -> Result<(Video, Option<Audio>), MediaError> {
        let info = self.stream_info(input)?;
        let out = Command::new(&self.bin)
            .args(["-v", "error", "-i"])
            .arg(input)
            .args(["-f", "rawvideo", "-pix_fmt", "rgb24", "-"])
            .output()
            .map_err(|e| MediaError::Undecodable(e.to_string()))?;
        if !out.status.success() {
            return Err(MediaError::Undecodable(String::from_utf8_lossy(&out.stderr).into_owned()));
        }
        let frame_len = (info.width * info.height * 3) as usize;
        let frames: Vec<RgbImage> = out
            .stdout
            .chunks_exact(frame_len)
            .map(|c| RgbImage::from_raw(info.width, info.height, c.to_vec()).expect("exact chunk"))
            .collect();
        if frames.is_empty() {
            return Err(MediaError::Undecodable("no video frames".into()));
        }
        let audio = match info.sample_rate {
            Some(_) => {
                let out = Command::new(&self.bin)
                    .args(["-v", "error", "-i"])
                    .arg(input)
                    .args(["-vn", "-f", "f32le", "-ac", "1", "-ar"])
                    .arg(IMPORT_SAMPLE_RATE.to_string())
                    .arg("-")
                    .output()
                    .map_err(|e| MediaError::Undecodable(e.to_string()))?;
                let samples = out
                    .stdout
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Some(Audio { sample_rate: IMPORT_SAMPLE_RATE, samples })
            }
            None => None,
        };
        let video = Video { fps: info.fps, width: info.width, height: info.height, frames };
        Ok((video, audio))
    }

    pub fn encode_mp4(
        &self,
        video: &Video,
        audio: Option<&Audio>,
        settings: &ExportSettings,
        output: &Path,
    ) -> Result<(), MediaError> {
        if !video.width.is_multiple_of(2) || !video.height.is_multiple_of(2) {
            return Err(MediaError::EncoderFailure("H.264 output needs even dimensions".into()));
        }
        let dir = tempfile::tempdir().map_err(|e| MediaError::Io(e.to_string()))?;
        let frames_path = dir.path().join("frames.rgb");
        let audio_path = dir.path().join("audio.f32");
        {
            let mut f = std::io::BufWriter::new(
                std::fs::File::create(&frames_path).map_err(|e| MediaError::Io(e.to_string()))?,
            );
            for frame in &video.frames {
                f.write_all(frame.as_raw()).map_err(|e| MediaError::Io(e.to_string()))?;
            }
        }
        if let Some(a) = audio {
            let bytes: Vec<u8> = a.samples.iter().flat_map(|s| s.to_le_bytes()).collect();
            std::fs::write(&audio_path, bytes).map_err(|e| MediaError::Io(e.to_string()))?;
        }
        let args = encode_args(
            video.width,
            video.height,
            video.fps,
            &frames_path,
            audio.map(|a| (a.sample_rate, audio_path.as_path())),
            settings,
            output,
        );
        let out = Command::new(&self.bin)
            .args(&args)
            .output()
            .map_err(|e| MediaError::EncoderFailure(format!("cannot run ffmpeg: {e}")))?;
        if !out.status.success() {
            return Err(MediaError::EncoderFailure(String::from_utf8_lossy(&out.stderr).into_owned()));
        }
        Ok(())
    }
}

/// Arguments for the encode template.
pub fn encode_args(
    width: u32,
    height: u32,
    fps: Fps,
    frames: &Path,
    audio: Option<(u32, &Path)>,
    settings: &ExportSettings,
    output: &Path,
) -> Vec<String> {
    let (vb, ab) = settings.quality.bitrates();
    let mut args: Vec<String> = vec![
        "-y".into(),
        "-v".into(),
        "error".into(),
        "-f".into(),
        "rawvideo".into(),
        "-pix_fmt".into(),
        "rgb24".into(),
        "-s".into(),
        format!("{width}x{height}"),
        "-framerate".into(),
        format!("{}/{}", fps.num, fps.den),
        "-i".into(),
        frames.display().to_string(),
    ];
    if let Some((sr, path)) = audio {
        args.extend(["-f", "f32le", "-ar"].map(String::from));
        args.push(sr.to_string());
        args.extend(["-ac", "1", "-i"].map(String::from));
        args.push(path.display().to_string());
    }
    args.extend(["-map", "0:v"].map(String::from));
    if audio.is_some() {
        args.extend(["-map", "1:a"].map(String::from));
    }
    args.extend(
        ["-c:v", "libx264", "-preset", "medium", "-threads", "1", "-pix_fmt", "yuv420p", "-b:v"]
            .map(String::from),
    );
    args.push(vb.to_string());
    if audio.is_some() {
        args.extend(["-c:a", "aac", "-b:a"].map(String::from));
        args.push(ab.to_string());
    }
    args.extend(["-movflags", "+faststart"].map(String::from));
    args.push(output.display().to_string());
    args
}

fn parse_fps(token: &str) -> Option<Fps> {
    let value: f64 = token.trim().strip_suffix("fps")?.trim().parse().ok()?;
    if value <= 0.0 {
        return None;
    }
    if (value - value.round()).abs() < 1e-6 {
        return Some(Fps::integer(value.round() as u32));
    }
    // NTSC family rates such as 29.97.
    let ntsc = (value * 1.001).round();
    if (ntsc / 1.001 - value).abs() < 0.01 {
        return Some(Fps::new(ntsc as u32 * 1000, 1001));
    }
    Some(Fps::new((value * 1000.0).round() as u32, 1000))
}

fn parse_duration(line: &str) -> Option<f64> {
    let rest = line.trim().strip_prefix("Duration:")?.trim();
    let stamp = rest.split(',').next()?.trim();
    let mut parts = stamp.split(':');
    let h: f64 = parts.next()?.parse().ok()?;
    let m: f64 = parts.next()?.parse().ok()?;
    let s: f64 = parts.next()?.parse().ok()?;
    Some(h * 3600.0 + m * 60.0 + s)
}

/// Parses the stream summary `ffmpeg -i` prints on stderr.
pub fn parse_stream_info(stderr: &str) -> Result<StreamInfo, MediaError> {
    if stderr.contains("No such file or directory") {
        return Err(MediaError::NotFound(stderr.lines().last().unwrap_or_default().to_string()));
    }
    let mut info: Option<(u32, u32, Fps)> = None;
    let mut sample_rate = None;
    let mut duration_secs = 0.0;
    for line in stderr.lines() {
        if let Some(d) = parse_duration(line) {
            duration_secs = d;
        }
        if let Some(idx) = line.find("Video:") {
            let tokens: Vec<&str> = line[idx..].split(", ").collect();
            let dims = tokens.iter().find_map(|t| {
                let t = t.split_whitespace().next()?;
                let (w, h) = t.split_once('x')?;
                Some((w.parse::<u32>().ok()?, h.parse::<u32>().ok()?))
            });
            let fps = tokens.iter().find_map(|t| parse_fps(t));
            if let (Some((w, h)), Some(fps)) = (dims, fps) {
                info.get_or_insert((w, h, fps));
            }
        }
        if let Some(idx) = line.find("Audio:") {
            sample_rate = sample_rate.or_else(|| {
                line[idx..]
                    .split(", ")
                    .find_map(|t| t.trim().strip_suffix(" Hz")?.parse::<u32>().ok())
            });
        }
    }
    let (width, height, fps) =
        info.ok_or_else(|| MediaError::Undecodable("no decodable video stream".into()))?;
    Ok(StreamInfo { width, height, fps, sample_rate, duration_secs })
}
