//! Slide cleaning: isolate the main tissue section and whiten everything
//! outside the convex hull of its contour(s).

mod blur;
pub mod contour;
pub mod hull;
pub mod morphology;

use ::image::RgbImage;
use serde::{Deserialize, Serialize};

pub use blur::{gaussian_blur, gaussian_kernel};
pub use contour::{find_contours, label_components, Contour};
pub use hull::{convex_hull, fill_hull};
pub use morphology::{close, dilate, erode, morph_close_open, open};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, Image};
use crate::scalar::{Scalar, BACKGROUND};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Gaussian sigma applied before thresholding, in pixels.
    pub sigma: f64,
    /// Disk radius for the closing/opening pair, in pixels.
    pub morph_radius: usize,
    /// Contours scoring below this fraction of the best score are dropped.
    pub keep_ratio: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { sigma: 10.0, morph_radius: 20, keep_ratio: 0.25 }
    }
}

/// `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn to_grayscale<S: Scalar>(rgb: &RgbImage) -> Image<S> {
    let (w, h) = rgb.dimensions();
    let data = rgb
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            S::lit((0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round())
        })
        .collect();
    Image::new(w as usize, h as usize, data).expect("rgb buffer is consistent")
}

/// Foreground = pixels strictly darker than the image mean.
pub fn threshold_mean<S: Scalar>(img: &Image<S>) -> BinaryMask {
    let mean = img.mean();
    let (w, h) = img.dims();
    BinaryMask::new(w, h, img.data().iter().map(|&v| v < mean).collect()).expect("same dims")
}

/// Keeps the contours that are both large and central.
///
/// Each contour scores `area / (1 + distance from centroid to image center)`;
/// every contour scoring at least `keep_ratio` of the best is retained.
pub fn select_tissue_contours(contours: &[Contour], dims: (usize, usize), keep_ratio: f64) -> Vec<Contour> {
    let (cx, cy) = (dims.0 as f64 / 2.0, dims.1 as f64 / 2.0);
    let score = |c: &Contour| {
        let d = ((c.centroid.0 - cx).powi(2) + (c.centroid.1 - cy).powi(2)).sqrt();
        c.area / (1.0 + d)
    };
    let best = contours.iter().map(score).fold(f64::NEG_INFINITY, f64::max);
    contours.iter().filter(|c| score(c) >= keep_ratio * best).cloned().collect()
}

/// Result of [`clean_tissue_detailed`], exposing the intermediate masks.
#[derive(Debug, Clone)]
pub struct CleanedSlide<S> {
    pub image: Image<S>,
    pub tissue_mask: BinaryMask,
    pub hull_mask: BinaryMask,
    pub selected: Vec<Contour>,
}

/// Blur, threshold, close/open, select contours, and whiten everything
/// outside the convex hull of the selection. Pixels inside the hull keep
/// their original (unblurred) values.
pub fn clean_tissue_detailed<S: Scalar>(img: &Image<S>, cfg: &PreprocessConfig) -> Result<CleanedSlide<S>> {
    let blurred = gaussian_blur(img, S::lit(cfg.sigma))?;
    let tissue_mask = morph_close_open(&threshold_mean(&blurred), cfg.morph_radius);
    let contours = find_contours(&tissue_mask);
    let selected = select_tissue_contours(&contours, img.dims(), cfg.keep_ratio);
    if selected.is_empty() {
        return Err(Error::BlankSlide);
    }
    let points: Vec<(i64, i64)> = selected.iter().flat_map(|c| c.points.iter().copied()).collect();
    let hull_mask = fill_hull(&convex_hull(&points), img.width(), img.height());
    let white = S::lit(BACKGROUND);
    let data = img.data().iter().zip(hull_mask.bits()).map(|(&v, &inside)| if inside { v } else { white }).collect();
    let image = Image::new(img.width(), img.height(), data)?;
    Ok(CleanedSlide { image, tissue_mask, hull_mask, selected })
}

pub fn clean_tissue<S: Scalar>(img: &Image<S>, cfg: &PreprocessConfig) -> Result<Image<S>> {
    clean_tissue_detailed(img, cfg).map(|c| c.image)
}
