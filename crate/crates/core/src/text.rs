//! The bundled bitmap font: 8x8 glyph cells drawn at integer scales.
//!
//! Covers printable ASCII plus the `⟦` `⟧` brackets the translation stub
//! uses for language tags. The same glyph table backs slide rendering and
//! the stub line reader, so rendered text can be read back exactly.

use std::collections::HashMap;
use std::sync::OnceLock;

use font8x8::legacy::BASIC_LEGACY;
use image::{Rgb, RgbImage};

use crate::geometry::PixelRect;

pub const CELL: u32 = 8;

const LEFT_WHITE_BRACKET: [u8; 8] = [0x1E, 0x16, 0x16, 0x16, 0x16, 0x16, 0x1E, 0x00];
const RIGHT_WHITE_BRACKET: [u8; 8] = [0x78, 0x68, 0x68, 0x68, 0x68, 0x68, 0x78, 0x00];
const MISSING: [u8; 8] = [0x7E, 0x42, 0x42, 0x42, 0x42, 0x42, 0x7E, 0x00];

/// Glyph rows, least significant bit leftmost.
pub fn glyph(c: char) -> [u8; 8] {
    match c {
        '⟦' => LEFT_WHITE_BRACKET,
        '⟧' => RIGHT_WHITE_BRACKET,
        ' '..='~' => BASIC_LEGACY[c as usize],
        _ => MISSING,
    }
}

pub fn has_glyph(c: char) -> bool {
    matches!(c, ' '..='~' | '⟦' | '⟧')
}

/// Packs glyph rows into one key, row 0 in the low byte.
pub fn glyph_key(rows: [u8; 8]) -> u64 {
    u64::from_le_bytes(rows)
}

fn reverse_table() -> &'static HashMap<u64, char> {
    static TABLE: OnceLock<HashMap<u64, char>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut map = HashMap::new();
        for c in (' '..='~').chain(['⟦', '⟧']) {
            map.entry(glyph_key(glyph(c))).or_insert(c);
        }
        map
    })
}

/// Character whose glyph matches `key` exactly.
pub fn char_for_key(key: u64) -> Option<char> {
    reverse_table().get(&key).copied()
}

pub fn text_width(text: &str, scale: u32) -> u32 {
    text.chars().count() as u32 * CELL * scale
}

/// Draws a single line with its cell grid anchored at (`x`, `y`); pixels
/// outside the image are skipped. Returns the cell box.
pub fn draw_line(img: &mut RgbImage, x: u32, y: u32, text: &str, scale: u32, color: Rgb<u8>) -> PixelRect {
    for (i, c) in text.chars().enumerate() {
        let rows = glyph(c);
        let cx = x + i as u32 * CELL * scale;
        for (r, bits) in rows.iter().enumerate() {
            for col in 0..CELL {
                if bits & (1 << col) == 0 {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let px = cx + col * scale + dx;
                        let py = y + r as u32 * scale + dy;
                        if px < img.width() && py < img.height() {
                            img.put_pixel(px, py, color);
                        }
                    }
                }
            }
        }
    }
    PixelRect::from_size(x, y, text_width(text, scale), CELL * scale)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextLayout {
    pub scale: u32,
    pub lines: Vec<String>,
}

impl TextLayout {
    pub fn line_pitch(&self) -> u32 {
        CELL * self.scale + self.scale
    }

    pub fn width(&self) -> u32 {
        self.lines.iter().map(|l| text_width(l, self.scale)).max().unwrap_or(0)
    }

    pub fn height(&self) -> u32 {
        match self.lines.len() {
            0 => 0,
            n => (n as u32 - 1) * self.line_pitch() + CELL * self.scale,
        }
    }

    pub fn font_size(&self) -> u32 {
        CELL * self.scale
    }
}

fn wrap(text: &str, max_chars: usize) -> Vec<String> {
    let mut lines = Vec::new();
    let mut current = String::new();
    for word in text.split_whitespace() {
        let mut word: Vec<char> = word.chars().collect();
        // Hard-break words longer than a line.
        while word.len() > max_chars {
            if !current.is_empty() {
                lines.push(std::mem::take(&mut current));
            }
            lines.push(word.drain(..max_chars).collect());
        }
        let word: String = word.into_iter().collect();
        if word.is_empty() {
            continue;
        }
        let needed = if current.is_empty() { word.chars().count() } else { current.chars().count() + 1 + word.chars().count() };
        if needed > max_chars && !current.is_empty() {
            lines.push(std::mem::take(&mut current));
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(&word);
    }
    if !current.is_empty() {
        lines.push(current);
    }
    lines
}

/// Largest single-line scale (up to `max_scale`) that fits the box; at the
/// 8 px floor the text is word-wrapped instead. `None` means it cannot fit.
pub fn fit_text(text: &str, max_width: u32, max_height: u32, max_scale: u32) -> Option<TextLayout> {
    if text.is_empty() {
        return Some(TextLayout { scale: 1, lines: Vec::new() });
    }
    for scale in (1..=max_scale.max(1)).rev() {
        if text_width(text, scale) <= max_width && CELL * scale <= max_height {
            return Some(TextLayout { scale, lines: vec![text.to_string()] });
        }
    }
    let max_chars = (max_width / CELL) as usize;
    if max_chars == 0 {
        return None;
    }
    let layout = TextLayout { scale: 1, lines: wrap(text, max_chars) };
    (layout.height() <= max_height && layout.width() <= max_width).then_some(layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyphs_are_distinguishable() {
        // Every printable glyph except space must map back to itself.
        for c in ('!'..='~').chain(['⟦', '⟧']) {
            let back = char_for_key(glyph_key(glyph(c)));
            assert_eq!(back, Some(c), "glyph for {c:?} collides");
        }
        assert_eq!(char_for_key(0), Some(' '));
    }

    #[test]
    fn fit_prefers_large_single_line() {
        let l = fit_text("Hello", 100, 30, 4).unwrap();
        assert_eq!(l.scale, 2);
        assert_eq!(l.lines, vec!["Hello"]);
        assert!(l.width() <= 100 && l.height() <= 30);
    }

    #[test]
    fn fit_wraps_at_floor() {
        let l = fit_text("one two three four", 48, 40, 3).unwrap();
        assert_eq!(l.scale, 1);
        assert_eq!(l.lines, vec!["one", "two", "three", "four"]);
        assert!(fit_text("one two three four", 48, 20, 3).is_none());
    }

    #[test]
    fn draw_is_clipped_to_image() {
        let mut img = RgbImage::new(10, 10);
        let cell = draw_line(&mut img, 4, 4, "A", 1, Rgb([255, 255, 255]));
        assert_eq!(cell, PixelRect::new(4, 4, 12, 12));
        assert!(img.pixels().any(|p| p.0 == [255, 255, 255]));
    }
}
