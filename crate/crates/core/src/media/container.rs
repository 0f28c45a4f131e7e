//! `.mzv` mezzanine container: lossless RGB24 frames (deflate, with
//! repeated frames stored as back-references), mono f32 PCM and face
//! annotations in a single file.
//!
//! Layout (little endian):
//!
//! ```text
//! "MZV1" | u32 header_len | header JSON
//! per frame: u8 tag (0 = same as previous, 1 = data) [u32 len | deflate(rgb24)]
//! sample_count x f32
//! ```

use std::io::{Read, Write};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{Audio, FaceTrack, MediaError, Video};
use crate::time::Fps;

const MAGIC: &[u8; 4] = b"MZV1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Header {
    pub width: u32,
    pub height: u32,
    pub fps: Fps,
    pub frame_count: u64,
    pub sample_rate: Option<u32>,
    pub sample_count: u64,
    #[serde(default)]
    pub faces: Vec<FaceTrack>,
}

pub(crate) fn encode(video: &Video, audio: Option<&Audio>, faces: &[FaceTrack]) -> Vec<u8> {
    let header = Header {
        width: video.width,
        height: video.height,
        fps: video.fps,
        frame_count: video.frames.len() as u64,
        sample_rate: audio.map(|a| a.sample_rate),
        sample_count: audio.map(|a| a.samples.len() as u64).unwrap_or(0),
        faces: faces.to_vec(),
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(64 + header_json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    let mut previous: Option<&RgbImage> = None;
    for frame in &video.frames {
        if previous.map(|p| p.as_raw() == frame.as_raw()).unwrap_or(false) {
            out.push(0);
            continue;
        }
        let mut enc = ZlibEncoder::new(Vec::new(), Compression::fast());
        enc.write_all(frame.as_raw()).expect("in-memory write");
        let data = enc.finish().expect("in-memory write");
        out.push(1);
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(&data);
        previous = Some(frame);
    }
    if let Some(a) = audio {
        for s in &a.samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MediaError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| MediaError::Undecodable("truncated container".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, MediaError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub(crate) fn read_header(bytes: &[u8]) -> Result<(Header, usize), MediaError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(MediaError::Undecodable("not an mzv container".into()));
    }
    let len = cur.u32()? as usize;
    let header: Header = serde_json::from_slice(cur.take(len)?)
        .map_err(|e| MediaError::Undecodable(format!("bad header: {e}")))?;
    if !header.fps.is_valid() || header.width == 0 || header.height == 0 {
        return Err(MediaError::Undecodable("invalid stream parameters".into()));
    }
    Ok((header, cur.pos))
}

pub(crate) fn decode(bytes: &[u8]) -> Result<(Video, Option<Audio>, Vec<FaceTrack>), MediaError> {
    let (header, offset) = read_header(bytes)?;
    let mut cur = Cursor { buf: bytes, pos: offset };
    let frame_bytes = header.width as usize * header.height as usize * 3;
    let mut frames: Vec<RgbImage> = Vec::with_capacity(header.frame_count as usize);
    for _ in 0..header.frame_count {
        match cur.take(1)?[0] {
            0 => {
                let prev = frames
                    .last()
                    .cloned()
                    .ok_or_else(|| MediaError::Undecodable("repeat tag on first frame".into()))?;
                frames.push(prev);
            }
            1 => {
                let len = cur.u32()? as usize;
                let mut raw = Vec::with_capacity(frame_bytes);
                ZlibDecoder::new(cur.take(len)?)
                    .read_to_end(&mut raw)
                    .map_err(|e| MediaError::Undecodable(e.to_string()))?;
                let img = RgbImage::from_raw(header.width, header.height, raw)
                    .ok_or_else(|| MediaError::Undecodable("frame size mismatch".into()))?;
                frames.push(img);
            }
            t => return Err(MediaError::Undecodable(format!("bad frame tag {t}"))),
        }
    }
    let audio = match header.sample_rate {
        Some(sample_rate) => {
            let raw = cur.take(header.sample_count as usize * 4)?;
            let samples = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Some(Audio { sample_rate, samples })
        }
        None => None,
    };
    let video = Video { fps: header.fps, width: header.width, height: header.height, frames };
    Ok((video, audio, header.faces))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_repeats() {
        let a = RgbImage::from_pixel(4, 3, image::Rgb([1, 2, 3]));
        let b = RgbImage::from_pixel(4, 3, image::Rgb([9, 8, 7]));
        let video = Video { fps: Fps::integer(25), width: 4, height: 3, frames: vec![a.clone(), a, b] };
        let audio = Audio { sample_rate: 16000, samples: vec![0.0, 0.5, -0.25] };
        let bytes = encode(&video, Some(&audio), &[]);
        let (v, au, faces) = decode(&bytes).unwrap();
        assert_eq!(v.frames, video.frames);
        assert_eq!(au.unwrap().samples, audio.samples);
        assert!(faces.is_empty());
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode(b"hello world").is_err());
        assert!(decode(b"MZV1\xff\xff\x00\x00").is_err());
    }
}
