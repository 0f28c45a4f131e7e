use serde::{Deserialize, Serialize};

/// Pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub const fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        PixelRect { x0, y0, x1, y1 }
    }

    pub fn from_size(x: u32, y: u32, w: u32, h: u32) -> Self {
        PixelRect { x0: x, y0: y, x1: x + w, y1: y + h }
    }

    /// Smallest rectangle holding every point's pixel, clipped to the frame.
    pub fn bounding(points: &[[f32; 2]], width: u32, height: u32) -> Option<PixelRect> {
        let mut it = points.iter();
        let first = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first[0], first[1], first[0], first[1]);
        for p in it {
            x0 = x0.min(p[0]);
            y0 = y0.min(p[1]);
            x1 = x1.max(p[0]);
            y1 = y1.max(p[1]);
        }
        let clamp = |v: f32, hi: u32| (v.floor().max(0.0) as u32).min(hi);
        let r = PixelRect {
            x0: clamp(x0, width),
            y0: clamp(y0, height),
            x1: clamp(x1 + 1.0, width),
            y1: clamp(y1 + 1.0, height),
        };
        (!r.is_empty()).then_some(r)
    }

    /// Grows every side by `pad` pixels, clamped to the frame.
    pub fn pad(&self, pad: u32, width: u32, height: u32) -> PixelRect {
        PixelRect {
            x0: self.x0.saturating_sub(pad),
            y0: self.y0.saturating_sub(pad),
            x1: (self.x1 + pad).min(width),
            y1: (self.y1 + pad).min(height),
        }
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) as f64 / 2.0, (self.y0 + self.y1) as f64 / 2.0)
    }

    pub fn width(&self) -> u32 {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> u32 {
        self.y1.saturating_sub(self.y0)
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn contains_rect(&self, other: &PixelRect) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    /// True when the rectangle is non-empty and inside a `width x height` frame.
    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        !self.is_empty() && self.x1 <= width && self.y1 <= height
    }

    pub fn intersect(&self, other: &PixelRect) -> Option<PixelRect> {
        let r = PixelRect {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        };
        (r.x1 > r.x0 && r.y1 > r.y0).then_some(r)
    }

    pub fn overlaps(&self, other: &PixelRect) -> bool {
        self.intersect(other).is_some()
    }

    pub fn iou(&self, other: &PixelRect) -> f64 {
        let inter = self.intersect(other).map(|r| r.area()).unwrap_or(0) as f64;
        let union = (self.area() + other.area()) as f64 - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Grows the rectangle around its centre by `factor`, clamped to the frame.
    pub fn expand(&self, factor: f64, width: u32, height: u32) -> PixelRect {
        let cx = (self.x0 + self.x1) as f64 / 2.0;
        let cy = (self.y0 + self.y1) as f64 / 2.0;
        let hw = self.width() as f64 * factor / 2.0;
        let hh = self.height() as f64 * factor / 2.0;
        PixelRect {
            x0: (cx - hw).floor().max(0.0) as u32,
            y0: (cy - hh).floor().max(0.0) as u32,
            x1: ((cx + hw).ceil() as u32).min(width),
            y1: ((cy + hh).ceil() as u32).min(height),
        }
    }

    /// Coordinates divided by the frame dimensions.
    pub fn normalized(&self, width: u32, height: u32) -> [f64; 4] {
        let (w, h) = (width as f64, height as f64);
        [self.x0 as f64 / w, self.y0 as f64 / h, self.x1 as f64 / w, self.y1 as f64 / h]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_and_intersection() {
        let a = PixelRect::new(0, 0, 10, 10);
        let b = PixelRect::new(5, 0, 15, 10);
        assert_eq!(a.intersect(&b), Some(PixelRect::new(5, 0, 10, 10)));
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        assert!(!a.overlaps(&PixelRect::new(10, 0, 20, 10)));
    }

    #[test]
    fn bounding_box_of_points() {
        let r = PixelRect::bounding(&[[2.5, 3.0], [7.9, 1.2]], 100, 100).unwrap();
        assert_eq!(r, PixelRect::new(2, 1, 8, 4));
        assert!(PixelRect::bounding(&[[-5.0, -5.0]], 10, 10).is_none());
        assert!(PixelRect::bounding(&[], 10, 10).is_none());
    }

    #[test]
    fn expand_clamps() {
        let r = PixelRect::new(0, 0, 10, 10).expand(1.2, 100, 100);
        assert_eq!(r, PixelRect::new(0, 0, 11, 11));
    }
}
