//! PNG/TIFF ingestion and export.
//!
//! Color rasters are converted to grayscale on load. Masks are 8-bit
//! single-channel files with 0 = background and anything else = foreground.

use std::path::Path;

use ::image::{DynamicImage, GrayImage as Luma8, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, Image};
use crate::preprocess::to_grayscale;
use crate::scalar::Scalar;

fn codec(path: &Path, source: ::image::ImageError) -> Error {
    Error::Codec { path: path.display().to_string(), source }
}

fn open(path: &Path) -> Result<DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| codec(path, e.into()))?
        .with_guessed_format()
        .map_err(|e| codec(path, e.into()))?
        .decode()
        .map_err(|e| codec(path, e))
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(open(path)?.into_rgb8())
}

/// Loads any supported raster as grayscale intensities on the 0..=255 scale.
pub fn load_gray<S: Scalar>(path: &Path) -> Result<Image<S>> {
    let dynimg = open(path)?;
    match dynimg {
        DynamicImage::ImageLuma8(g) => Ok(from_luma8(&g)),
        DynamicImage::ImageLuma16(g) => {
            let (w, h) = g.dimensions();
            let data = g.pixels().map(|p| S::lit(p.0[0] as f64 / 257.0)).collect();
            Image::new(w as usize, h as usize, data)
        }
        other => Ok(to_grayscale(&other.into_rgb8())),
    }
}

pub fn from_luma8<S: Scalar>(g: &Luma8) -> Image<S> {
    let (w, h) = g.dimensions();
    Image::new(w as usize, h as usize, g.pixels().map(|p| S::lit(p.0[0] as f64)).collect())
        .expect("decoded image has consistent dimensions")
}

/// Rounds and clamps to 8 bits.
pub fn to_luma8<S: Scalar>(img: &Image<S>) -> Luma8 {
    let (w, h) = img.dims();
    let raw = img.data().iter().map(|v| v.to_f64_lossy().round().clamp(0.0, 255.0) as u8).collect();
    Luma8::from_raw(w as u32, h as u32, raw).expect("buffer sized from image")
}

pub fn save_gray<S: Scalar>(img: &Image<S>, path: &Path) -> Result<()> {
    to_luma8(img).save(path).map_err(|e| codec(path, e))
}

pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| codec(path, e))
}

pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let g = open(path)?.into_luma8();
    let (w, h) = g.dimensions();
    BinaryMask::new(w as usize, h as usize, g.pixels().map(|p| p.0[0] != 0).collect())
}

pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    let (w, h) = mask.dims();
    let raw = mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }).collect();
    Luma8::from_raw(w as u32, h as u32, raw)
        .expect("buffer sized from mask")
        .save(path)
        .map_err(|e| codec(path, e))
}

/// Writes raw label indices as 8-bit pixel values.
pub fn save_labels(width: usize, height: usize, labels: &[u8], path: &Path) -> Result<()> {
    Luma8::from_raw(width as u32, height as u32, labels.to_vec())
        .ok_or_else(|| Error::invalid("label buffer does not match dimensions"))?
        .save(path)
        .map_err(|e| codec(path, e))
}

pub fn load_labels(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let g = open(path)?.into_luma8();
    let (w, h) = g.dimensions();
    Ok((w as usize, h as usize, g.into_raw()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        let img = Image::<f64>::from_fn(7, 5, |x, y| (x * 30 + y) as f64);
        save_gray(&img, &p).unwrap();
        assert_eq!(load_gray::<f64>(&p).unwrap(), img);
    }

    #[test]
    fn rgb_tiff_loads_as_gray() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.tif");
        let rgb = RgbImage::from_pixel(4, 3, ::image::Rgb([100, 150, 200]));
        save_rgb(&rgb, &p).unwrap();
        let g = load_gray::<f64>(&p).unwrap();
        assert!(g.data().iter().all(|&v| v == 141.0));
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let m = BinaryMask::from_fn(9, 4, |x, y| (x + y) % 3 == 0);
        save_mask(&m, &p).unwrap();
        assert_eq!(load_mask(&p).unwrap(), m);
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_gray::<f64>(Path::new("/nonexistent/slice_000.png")).unwrap_err();
        assert!(err.to_string().contains("slice_000.png"));
    }
}
