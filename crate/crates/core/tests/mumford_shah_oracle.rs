mod common;

use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use slicereg::mumford_shah::{initial_means, mc_segment, ms_energy, LabelImage, MsConfig};
use slicereg::GrayImage;

/// Direct transcription: squared deviation from the phase mean at every
/// pixel plus lambda for every horizontally or vertically adjacent pixel
/// pair carrying different labels.
fn oracle(img: &GrayImage, labels: &[u8], means: &[f64], lambda: f64) -> f64 {
    let (w, h) = img.dims();
    let mut e = 0.0;
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            e += (img.get(x, y) - means[l as usize]).powi(2);
            if x + 1 < w && labels[y * w + x + 1] != l {
                e += lambda;
            }
            if y + 1 < h && labels[(y + 1) * w + x] != l {
                e += lambda;
            }
        }
    }
    e
}

fn nearest(img: &GrayImage, means: &[f64]) -> Vec<u8> {
    img.data()
        .iter()
        .map(|&v| {
            let mut best = 0;
            for (k, m) in means.iter().enumerate() {
                if (v - m).abs() < (v - means[best]).abs() {
                    best = k;
                }
            }
            best as u8
        })
        .collect()
}

/// Disk of `inner` on `outer`, plus the ground-truth membership.
fn two_value(w: usize, h: usize, inner: f64, outer: f64) -> (GrayImage, Vec<bool>) {
    let inside = |x: usize, y: usize| (x as f64 - w as f64 * 0.45).hypot(y as f64 - h as f64 * 0.55) < w as f64 * 0.3;
    let img = GrayImage::from_fn(w, h, |x, y| if inside(x, y) { inner } else { outer });
    let truth = (0..w * h).map(|i| inside(i % w, i / w)).collect();
    (img, truth)
}

/// Fraction of pixels whose phase agrees with `truth` under the better of
/// the two label assignments.
fn accuracy(lab: &LabelImage<f64>, truth: &[bool]) -> f64 {
    let agree = lab.labels().iter().zip(truth).filter(|(&l, &t)| (l == 1) == t).count();
    let n = truth.len();
    agree.max(n - agree) as f64 / n as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn energy_matches_the_oracle_exactly(
        vals in proptest::collection::vec(0u8..=255, 256),
        labs in proptest::collection::vec(0u8..4, 256),
        means in proptest::collection::vec(0u8..=255, 4),
        lambda in 0u16..2000,
    ) {
        // Integer-valued inputs keep every partial sum exact, so summation
        // order cannot matter.
        let img = GrayImage::new(16, 16, vals.iter().map(|&v| f64::from(v)).collect()).unwrap();
        let means: Vec<f64> = means.iter().map(|&m| f64::from(m)).collect();
        let lab = LabelImage::new(16, 16, labs.clone(), means.clone()).unwrap();
        let lambda = f64::from(lambda);
        prop_assert_eq!(ms_energy(&img, &lab, lambda).unwrap(), oracle(&img, &labs, &means, lambda));
    }
}

#[test]
fn noiseless_two_value_images_are_labeled_perfectly() {
    for (i, (a, b)) in [(40.0, 200.0), (180.0, 90.0), (10.0, 250.0)].into_iter().enumerate() {
        let (img, truth) = two_value(48, 40, a, b);
        let lab = mc_segment(&img, &MsConfig { phases: 2, seed: i as u64, ..Default::default() }).unwrap();
        assert_eq!(accuracy(&lab, &truth), 1.0, "case {i}");
    }
}

#[test]
fn noisy_two_value_images_are_labeled_to_99_percent() {
    let normal = Normal::new(0.0, 10.0).unwrap();
    for seed in 0..5 {
        let (clean, truth) = two_value(64, 64, 80.0, 170.0);
        let mut r = common::rng(seed);
        let img = GrayImage::from_fn(64, 64, |x, y| clean.get(x, y) + normal.sample(&mut r));
        let lab = mc_segment(&img, &MsConfig { phases: 2, seed, ..Default::default() }).unwrap();
        let acc = accuracy(&lab, &truth);
        assert!(acc >= 0.99, "seed {seed}: accuracy {acc}");
    }
}

#[test]
fn annealing_never_ends_above_the_initial_energy() {
    for seed in 0..50u64 {
        let mut r = common::rng(500 + seed);
        let levels: Vec<f64> = (0..3).map(|_| r.random_range(0.0..255.0)).collect();
        let normal = Normal::new(0.0, r.random_range(2.0..30.0)).unwrap();
        let img = GrayImage::from_fn(32, 32, |x, y| levels[(x / 11 + 2 * (y / 13)) % 3] + normal.sample(&mut r));
        let cfg = MsConfig { seed, ..Default::default() };
        let means = initial_means(&img, cfg.phases);
        let start = oracle(&img, &nearest(&img, &means), &means, cfg.lambda);
        let lab = mc_segment(&img, &cfg).unwrap();
        let end = ms_energy(&img, &lab, cfg.lambda).unwrap();
        assert!(end <= start, "seed {seed}: {end} > {start}");
    }
}
