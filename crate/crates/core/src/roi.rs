//! Region-of-interest boxes and their per-level derivation.

use serde::{Deserialize, Serialize};

use crate::image::PixelWindow;

/// Axis-aligned box given by center and size in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiBox {
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl RoiBox {
    pub fn new(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Self { cx, cy, width, height }
    }

    pub fn left(&self) -> f64 {
        self.cx - self.width / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.height / 2.0
    }

    pub fn right(&self) -> f64 {
        self.cx + self.width / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.height / 2.0
    }

    pub fn area(&self) -> f64 {
        self.width.max(0.0) * self.height.max(0.0)
    }

    /// Intersects the box with `[0, w] x [0, h]`; center moves to the middle
    /// of what remains.
    pub fn clipped(&self, w: usize, h: usize) -> Self {
        let (l, r) = (self.left().clamp(0.0, w as f64), self.right().clamp(0.0, w as f64));
        let (t, b) = (self.top().clamp(0.0, h as f64), self.bottom().clamp(0.0, h as f64));
        Self { cx: (l + r) / 2.0, cy: (t + b) / 2.0, width: r - l, height: b - t }
    }

    pub fn contained_in(&self, w: usize, h: usize) -> bool {
        self.left() >= 0.0 && self.top() >= 0.0 && self.right() <= w as f64 && self.bottom() <= h as f64
    }

    /// Pixels whose centers fall inside the box, limited to a `w x h` raster.
    pub fn window(&self, w: usize, h: usize) -> PixelWindow {
        let idx = |v: f64, hi: usize| (v.max(0.0) as usize).min(hi);
        PixelWindow {
            x0: idx((self.left() - 0.5).ceil(), w),
            y0: idx((self.top() - 0.5).ceil(), h),
            x1: idx((self.right() - 0.5).ceil(), w),
            y1: idx((self.bottom() - 0.5).ceil(), h),
        }
    }

    /// Maps a level-0 box to pyramid level `level`: the center shrinks with
    /// the image while width and height are kept, then the box is clipped
    /// into the level raster. Coarser levels therefore see a wider field of
    /// view around the same structure.
    pub fn for_level(&self, level: usize, level_dims: (usize, usize)) -> Self {
        let f = (1u64 << level) as f64;
        Self { cx: self.cx / f, cy: self.cy / f, width: self.width, height: self.height }
            .clipped(level_dims.0, level_dims.1)
    }
}

pub fn roi_for_level(roi0: &RoiBox, level: usize, level_dims: (usize, usize)) -> RoiBox {
    roi0.for_level(level, level_dims)
}
