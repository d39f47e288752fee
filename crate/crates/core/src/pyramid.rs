//! Dyadic image pyramids built by 2x2 area averaging.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Halves both dimensions (rounding up). Each output pixel averages the
/// source pixels of its 2x2 block that exist, so a ragged last row or
/// column averages one or two pixels instead of four.
pub fn downsample2<S: Scalar>(img: &Image<S>) -> Image<S> {
    let (w, h) = img.dims();
    let (ow, oh) = (w.div_ceil(2), h.div_ceil(2));
    Image::from_fn(ow, oh, |x, y| {
        let mut sum = S::zero();
        let mut n = 0usize;
        for sy in 2 * y..(2 * y + 2).min(h) {
            for sx in 2 * x..(2 * x + 2).min(w) {
                sum += img.get(sx, sy);
                n += 1;
            }
        }
        sum / S::from_usize_lossy(n)
    })
}

/// Levels `0..=k`; level `r` is level 0 reduced by `2^r`.
///
/// Pixel-center coordinates scale exactly between levels: a point at `p` on
/// level 0 sits at `p / 2^r` on level `r`.
#[derive(Debug, Clone)]
pub struct Pyramid<S> {
    levels: Vec<Image<S>>,
}

impl<S: Scalar> Pyramid<S> {
    pub fn build(img: &Image<S>, k: usize) -> Result<Self> {
        let need = 1usize.checked_shl(k as u32).unwrap_or(usize::MAX);
        if img.width() < need || img.height() < need {
            return Err(Error::invalid(format!(
                "{}x{} image is too small for a {k}-level pyramid (needs {need} px per side)",
                img.width(),
                img.height()
            )));
        }
        let mut levels = Vec::with_capacity(k + 1);
        levels.push(img.clone());
        for r in 1..=k {
            let next = downsample2(&levels[r - 1]);
            levels.push(next);
        }
        Ok(Self { levels })
    }

    pub fn level(&self, r: usize) -> &Image<S> {
        &self.levels[r]
    }

    /// Index of the coarsest level.
    pub fn coarsest(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[Image<S>] {
        &self.levels
    }
}

pub fn build_pyramid<S: Scalar>(img: &Image<S>, k: usize) -> Result<Pyramid<S>> {
    Pyramid::build(img, k)
}
