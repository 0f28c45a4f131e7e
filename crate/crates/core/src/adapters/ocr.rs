//! Line reader for frames rendered with the bundled bitmap font.
//!
//! Ink is anything that differs from the dominant colour. Ink components
//! are grouped into lines, and each line is decoded by finding a glyph
//! scale and cell alignment under which every cell matches a known glyph
//! and re-rendering reproduces the ink exactly.

use std::collections::HashMap;

use image::RgbImage;

use super::TextRegion;
use crate::geometry::PixelRect;
use crate::text::{char_for_key, glyph, CELL};

/// Per-channel difference from the background that counts as ink.
pub const INK_THRESHOLD: u8 = 24;
/// Largest horizontal gap between components of one line, in line heights.
pub const LINE_GAP_FACTOR: f64 = 2.5;

pub fn background_color(img: &RgbImage) -> [u8; 3] {
    let mut counts: HashMap<[u8; 3], usize> = HashMap::new();
    for p in img.pixels() {
        *counts.entry(p.0).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(c, _)| c)
        .unwrap_or([0, 0, 0])
}

struct InkMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl InkMask {
    fn new(img: &RgbImage) -> Self {
        let bg = background_color(img);
        let bits = img
            .pixels()
            .map(|p| p.0.iter().zip(bg).any(|(a, b)| a.abs_diff(b) > INK_THRESHOLD))
            .collect();
        InkMask { width: img.width(), height: img.height(), bits }
    }

    fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.bits[(y * self.width + x) as usize]
    }
}

/// Bounding boxes of 8-connected ink components.
fn components(mask: &InkMask) -> Vec<PixelRect> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; mask.bits.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.bits.len() {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (sx, sy) = ((start as u32) % w, (start as u32) / w);
        let mut r = PixelRect::new(sx, sy, sx + 1, sy + 1);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i as u32) % w, (i as u32) / w);
            r = PixelRect::new(r.x0.min(x), r.y0.min(y), r.x1.max(x + 1), r.y1.max(y + 1));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = (ny as u32 * w + nx as u32) as usize;
                    if mask.bits[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(r);
    }
    out
}

fn union(a: PixelRect, b: PixelRect) -> PixelRect {
    PixelRect::new(a.x0.min(b.x0), a.y0.min(b.y0), a.x1.max(b.x1), a.y1.max(b.y1))
}

fn same_line(a: &PixelRect, b: &PixelRect) -> bool {
    // Touching counts, so underscores join the line above them.
    let v_overlap = a.y0 <= b.y1 && b.y0 <= a.y1;
    let gap = if a.x1 <= b.x0 {
        b.x0 - a.x1
    } else { a.x0.saturating_sub(b.x1) };
    let height = a.height().max(b.height()) as f64;
    v_overlap && gap as f64 <= LINE_GAP_FACTOR * height
}

/// Merges components into line boxes until no pair qualifies.
fn group_lines(mut boxes: Vec<PixelRect>) -> Vec<PixelRect> {
    loop {
        let mut merged = false;
        'outer: for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if same_line(&boxes[i], &boxes[j]) {
                    let b = boxes.swap_remove(j);
                    boxes[i] = union(boxes[i], b);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            return boxes;
        }
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Gcd of ink run lengths and interior gap lengths inside `r`.
fn run_gcd(mask: &InkMask, r: &PixelRect) -> u32 {
    let mut g = 0;
    let mut scan = |cells: &mut dyn Iterator<Item = bool>| {
        let mut run = 0u32;
        let mut cur: Option<bool> = None;
        let mut touched_start = true;
        for v in cells {
            if Some(v) == cur {
                run += 1;
                continue;
            }
            if let Some(prev) = cur {
                if prev || !touched_start {
                    g = gcd(g, run);
                }
                touched_start = false;
            }
            cur = Some(v);
            run = 1;
        }
        if cur == Some(true) {
            g = gcd(g, run);
        }
    };
    for y in r.y0..r.y1 {
        scan(&mut (r.x0..r.x1).map(|x| mask.get(x, y)));
    }
    for x in r.x0..r.x1 {
        scan(&mut (r.y0..r.y1).map(|y| mask.get(x, y)));
    }
    g
}

fn decode_at(mask: &InkMask, line: &PixelRect, ox: i64, oy: i64, scale: u32) -> Option<(String, PixelRect)> {
    if ox < 0 || oy < 0 {
        return None;
    }
    let (ox, oy) = (ox as u32, oy as u32);
    let cell = CELL * scale;
    if line.y1 > oy + cell {
        return None;
    }
    let n = (line.x1 - ox).div_ceil(cell);
    let mut text = String::new();
    for i in 0..n {
        let cx = ox + i * cell;
        let mut rows = [0u8; 8];
        for (r, row) in rows.iter_mut().enumerate() {
            for col in 0..CELL {
                if mask.get(cx + col * scale, oy + r as u32 * scale) {
                    *row |= 1 << col;
                }
            }
        }
        text.push(char_for_key(u64::from_le_bytes(rows))?);
    }
    let bbox = PixelRect::from_size(ox, oy, n * cell, cell);
    // Every pixel of the cell box must match the re-rendered text.
    for (i, c) in text.chars().enumerate() {
        let rows = glyph(c);
        for y in 0..cell {
            for x in 0..cell {
                let on = rows[(y / scale) as usize] & (1 << (x / scale)) != 0;
                if mask.get(ox + i as u32 * cell + x, oy + y) != on {
                    return None;
                }
            }
        }
    }
    Some((text, bbox))
}

fn decode_line(mask: &InkMask, line: &PixelRect) -> Option<(String, PixelRect)> {
    let g = run_gcd(mask, line);
    let scales = (1..=g).rev().filter(|s| g.is_multiple_of(*s));
    for scale in scales {
        for ay in 0..CELL as i64 {
            for ax in 0..CELL as i64 {
                let ox = line.x0 as i64 - ax * scale as i64;
                let oy = line.y0 as i64 - ay * scale as i64;
                if let Some(found) = decode_at(mask, line, ox, oy, scale) {
                    return Some(found);
                }
            }
        }
    }
    None
}

/// Reads every decodable text line, top to bottom then left to right.
pub fn read_lines(img: &RgbImage) -> Vec<TextRegion> {
    let mask = InkMask::new(img);
    let lines = group_lines(components(&mask));
    let mut out: Vec<TextRegion> = lines
        .iter()
        .filter_map(|l| decode_line(&mask, l))
        .map(|(text, bbox)| TextRegion {
            bbox: PixelRect::new(bbox.x0, bbox.y0, bbox.x1.min(img.width()), bbox.y1.min(img.height())),
            line_text: text.trim().to_string(),
            confidence: 1.0,
        })
        .filter(|r| !r.line_text.is_empty())
        .collect();
    out.sort_by_key(|r| (r.bbox.y0, r.bbox.x0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::draw_line;
    use image::Rgb;

    fn canvas() -> RgbImage {
        RgbImage::from_pixel(320, 180, Rgb([245, 245, 240]))
    }

    #[test]
    fn blank_frame_has_no_lines() {
        assert!(read_lines(&canvas()).is_empty());
    }

    #[test]
    fn reads_two_lines_exactly() {
        let mut img = canvas();
        let a = draw_line(&mut img, 20, 20, "Fourier series", 2, Rgb([20, 20, 90]));
        let b = draw_line(&mut img, 20, 60, "x(t) = a_k", 3, Rgb([10, 10, 10]));
        let lines = read_lines(&img);
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].line_text, "Fourier series");
        assert_eq!(lines[1].line_text, "x(t) = a_k");
        assert!(lines[0].bbox.iou(&a) >= 0.8);
        assert!(lines[1].bbox.iou(&b) >= 0.8);
    }

    #[test]
    fn reads_language_tags() {
        let mut img = canvas();
        draw_line(&mut img, 5, 100, "⟦hi⟧Welcome", 2, Rgb([0, 0, 0]));
        draw_line(&mut img, 5, 140, "a_b", 2, Rgb([0, 0, 0]));
        let lines = read_lines(&img);
        assert_eq!(lines[0].line_text, "⟦hi⟧Welcome");
        assert_eq!(lines[1].line_text, "a_b");
    }
}
