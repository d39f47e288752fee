mod common;

use rand::Rng;
use slicereg::preprocess::{clean_tissue, convex_hull, fill_hull, gaussian_blur, PreprocessConfig};
use slicereg::GrayImage;

fn dense_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    let r = (3.0 * sigma).ceil() as isize;
    let g: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = g.iter().sum::<f64>().powi(2);
    let (w, h) = (img.width() as isize, img.height() as isize);
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = 0.0;
        for j in -r..=r {
            for i in -r..=r {
                let sx = (x as isize + i).clamp(0, w - 1) as usize;
                let sy = (y as isize + j).clamp(0, h - 1) as usize;
                acc += g[(i + r) as usize] * g[(j + r) as usize] * img.get(sx, sy);
            }
        }
        acc / total
    })
}

#[test]
fn blur_matches_dense_convolution() {
    let mut r = common::rng(3);
    for sigma in [0.7, 2.0, 4.5, 10.0] {
        let img = GrayImage::from_fn(57, 43, |_, _| r.random_range(0.0..255.0));
        let fast = gaussian_blur(&img, sigma).unwrap();
        let slow = dense_blur(&img, sigma);
        let worst = fast.data().iter().zip(slow.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-6, "sigma {sigma}: {worst}");
    }
}

/// Two tissue fragments with a gap between them, and specks far away.
#[test]
fn specks_are_whitened_and_the_hull_is_untouched() {
    let (w, h) = (400usize, 300usize);
    let ellipses = [(130.0, 150.0, 70.0, 90.0), (265.0, 140.0, 55.0, 80.0)];
    let in_tissue = |x: f64, y: f64| ellipses.iter().any(|&(cx, cy, a, b)| ((x - cx) / a).powi(2) + ((y - cy) / b).powi(2) < 1.0);
    let specks = [(20.0, 20.0), (380.0, 25.0), (375.0, 280.0), (25.0, 285.0), (200.0, 290.0)];
    let in_speck = |x: f64, y: f64| specks.iter().any(|&(sx, sy)| (x - sx).hypot(y - sy) < 3.0);
    let mut r = common::rng(11);
    let img = GrayImage::from_fn(w, h, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        if in_tissue(px, py) {
            r.random_range(60.0..160.0)
        } else if in_speck(px, py) {
            40.0
        } else {
            r.random_range(240.0..=255.0)
        }
    });

    // Ideal hull of the two fragments, from densely sampled outlines.
    let outline: Vec<(i64, i64)> = ellipses
        .iter()
        .flat_map(|&(cx, cy, a, b)| {
            (0..720).map(move |k| {
                let t = k as f64 * std::f64::consts::PI / 360.0;
                ((cx + (a - 1.0) * t.cos()).floor() as i64, (cy + (b - 1.0) * t.sin()).floor() as i64)
            })
        })
        .collect();
    let hull = fill_hull(&convex_hull(&outline), w, h);

    let out = clean_tissue(&img, &PreprocessConfig::default()).unwrap();
    let (mut speck_px, mut changed_in_hull) = (0, 0);
    for y in 0..h {
        for x in 0..w {
            if in_speck(x as f64 + 0.5, y as f64 + 0.5) {
                speck_px += 1;
                assert_eq!(out.get(x, y), 255.0, "speck pixel ({x}, {y}) survived");
            }
            if hull.get(x, y) && out.get(x, y) != img.get(x, y) {
                changed_in_hull += 1;
            }
        }
    }
    assert!(speck_px > 100);
    assert_eq!(changed_in_hull, 0);
}
