#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slicereg::GrayImage;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sum of random Gaussian blobs of radius around `size`, on a mid-gray base.
pub fn blobs(w: usize, h: usize, seed: u64, size: f64) -> GrayImage {
    let mut r = rng(seed);
    let n = ((w * h) as f64 / (size * size) * 0.8).ceil() as usize;
    let spots: Vec<(f64, f64, f64, f64)> = (0..n)
        .map(|_| {
            (
                r.random_range(0.0..w as f64),
                r.random_range(0.0..h as f64),
                r.random_range(0.5..1.5) * size,
                r.random_range(-90.0..90.0),
            )
        })
        .collect();
    let reach = 3.0 * 1.5 * size;
    GrayImage::from_fn(w, h, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let v: f64 = spots
            .iter()
            .filter(|s| (s.0 - px).abs() < reach && (s.1 - py).abs() < reach)
            .map(|&(cx, cy, s, a)| a * (-((px - cx).powi(2) + (py - cy).powi(2)) / (2.0 * s * s)).exp())
            .sum();
        (128.0 + v).clamp(0.0, 255.0)
    })
}

/// Plain sum of squared differences over a pixel range, raster order.
pub fn naive_ssd(a: &GrayImage, b: &GrayImage, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
    let mut acc = 0.0;
    for y in y0..y1 {
        for x in x0..x1 {
            let d = a.get(x, y) - b.get(x, y);
            acc += d * d;
        }
    }
    acc
}
