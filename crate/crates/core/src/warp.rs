//! Resampling images and masks under rigid transforms.
//!
//! `warp(img, t)` moves content: whatever sat at `q` in `img` ends up at
//! `t(q)` in the output. Each output pixel center is pulled back through
//! `t⁻¹` and sampled from the source.

use rayon::prelude::*;

use crate::image::{BinaryMask, Image, PixelWindow};
use crate::scalar::{Scalar, BACKGROUND};
use crate::transform::Rigid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Nearest,
    #[default]
    Bilinear,
}

/// Pull-back sampler shared by every warp and fused SSD evaluation so they
/// produce bit-identical values.
pub(crate) struct Sampler<'a, S> {
    src: &'a Image<S>,
    // inverse transform coefficients
    a: [S; 6],
    interp: Interpolation,
    fill: S,
}

impl<'a, S: Scalar> Sampler<'a, S> {
    pub(crate) fn new(src: &'a Image<S>, t: &Rigid<S>, interp: Interpolation) -> Self {
        let m = t.inverse().matrix();
        Self {
            src,
            a: [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2]],
            interp,
            fill: S::lit(BACKGROUND),
        }
    }

    /// Value the warped image takes at output pixel `(x, y)`.
    #[inline]
    pub(crate) fn at(&self, x: usize, y: usize) -> S {
        let half = S::lit(0.5);
        let px = S::from_usize_lossy(x) + half;
        let py = S::from_usize_lossy(y) + half;
        let u = self.a[0] * px + self.a[1] * py + self.a[2];
        let v = self.a[3] * px + self.a[4] * py + self.a[5];
        sample(self.src, u, v, self.interp).unwrap_or(self.fill)
    }
}

/// Samples `img` at continuous coordinates `(u, v)`; `None` outside the raster.
#[inline]
pub fn sample<S: Scalar>(img: &Image<S>, u: S, v: S, interp: Interpolation) -> Option<S> {
    let w = S::from_usize_lossy(img.width());
    let h = S::from_usize_lossy(img.height());
    if !(u >= S::zero() && v >= S::zero() && u < w && v < h) {
        return None;
    }
    match interp {
        Interpolation::Nearest => {
            let x = u.floor().to_usize()?.min(img.width() - 1);
            let y = v.floor().to_usize()?.min(img.height() - 1);
            Some(img.get(x, y))
        }
        Interpolation::Bilinear => {
            let half = S::lit(0.5);
            let xf = u - half;
            let yf = v - half;
            let x0f = xf.floor();
            let y0f = yf.floor();
            let fx = xf - x0f;
            let fy = yf - y0f;
            let max_x = img.width() as isize - 1;
            let max_y = img.height() as isize - 1;
            let x0 = x0f.to_isize()?;
            let y0 = y0f.to_isize()?;
            let xa = x0.clamp(0, max_x) as usize;
            let xb = (x0 + 1).clamp(0, max_x) as usize;
            let ya = y0.clamp(0, max_y) as usize;
            let yb = (y0 + 1).clamp(0, max_y) as usize;
            let one = S::one();
            let top = img.get(xa, ya) * (one - fx) + img.get(xb, ya) * fx;
            let bottom = img.get(xa, yb) * (one - fx) + img.get(xb, yb) * fx;
            Some(top * (one - fy) + bottom * fy)
        }
    }
}

/// Warps `img` by `t`. Output has the input's dimensions; pixels whose
/// pre-image falls outside the source become white (255).
pub fn warp_image<S: Scalar>(img: &Image<S>, t: &Rigid<S>, interp: Interpolation) -> Image<S> {
    let sampler = Sampler::new(img, t, interp);
    let (w, h) = img.dims();
    let mut data = vec![S::zero(); w * h];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = sampler.at(x, y);
        }
    });
    Image::new(w, h, data).expect("dimensions preserved")
}

/// Nearest-neighbor warp of a mask; out-of-bounds pre-images are background.
pub fn warp_mask<S: Scalar>(mask: &BinaryMask, t: &Rigid<S>) -> BinaryMask {
    let m = t.inverse().matrix();
    let (w, h) = mask.dims();
    let (wf, hf) = (S::from_usize_lossy(w), S::from_usize_lossy(h));
    let half = S::lit(0.5);
    BinaryMask::from_fn(w, h, |x, y| {
        let px = S::from_usize_lossy(x) + half;
        let py = S::from_usize_lossy(y) + half;
        let u = m[0][0] * px + m[0][1] * py + m[0][2];
        let v = m[1][0] * px + m[1][1] * py + m[1][2];
        if u >= S::zero() && v >= S::zero() && u < wf && v < hf {
            let sx = u.floor().to_usize().unwrap_or(0).min(w - 1);
            let sy = v.floor().to_usize().unwrap_or(0).min(h - 1);
            mask.get(sx, sy)
        } else {
            false
        }
    })
}

/// Σ (fixed − warp(moving, t))² over `window`, summed row-major.
///
/// Returns `None` as soon as the running sum exceeds `bound`; the partial sums
/// are monotone, so a candidate abandoned this way can never win or tie.
pub(crate) fn warped_ssd<S: Scalar>(
    fixed: &Image<S>,
    moving: &Image<S>,
    t: &Rigid<S>,
    interp: Interpolation,
    window: PixelWindow,
    bound: Option<S>,
) -> Option<S> {
    let sampler = Sampler::new(moving, t, interp);
    let mut acc = S::zero();
    for y in window.y0..window.y1 {
        let row = fixed.row(y);
        for x in window.x0..window.x1 {
            let d = row[x] - sampler.at(x, y);
            acc += d * d;
        }
        if let Some(b) = bound {
            if acc > b {
                return None;
            }
        }
    }
    Some(acc)
}
