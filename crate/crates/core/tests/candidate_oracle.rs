//! The chosen hypothesis at a level must be the SSD minimum over every
//! hypothesis that was scored, recomputed without the fused scorer.

mod common;

use slicereg::global_align::ssd_window;
use slicereg::phantom::{generate, PhantomSpec};
use slicereg::preprocess::to_grayscale;
use slicereg::roi_register::register_level;
use slicereg::sift::SiftConfig;
use slicereg::warp::warp_image;
use slicereg::{GrayImage, Interpolation};

#[test]
fn chosen_candidate_is_the_recomputed_minimum_on_twenty_phantom_pairs() {
    let mut with_features = 0;
    for seed in 0..20 {
        let ph = generate(&PhantomSpec::small(2, 100 + seed)).unwrap();
        let fixed: GrayImage = to_grayscale(&ph.slices[0]);
        let moving: GrayImage = to_grayscale(&ph.slices[1]);
        let res = register_level(&fixed, &moving, &ph.roi, &SiftConfig::default()).unwrap();
        let window = ph.roi.window(fixed.width(), fixed.height());
        let ssds: Vec<f64> = res
            .candidates
            .iter()
            .map(|c| ssd_window(&fixed, &warp_image(&moving, &c.transform, Interpolation::Bilinear), window).unwrap())
            .collect();
        let min = ssds.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(res.chosen_ssd, min, "pair {seed}");
        let first = ssds.iter().position(|&s| s == min).unwrap();
        assert_eq!(res.transform, res.candidates[first].transform, "pair {seed}");
        assert_eq!(res.candidate_count, ssds.len());
        assert_eq!(res.candidates[0].transform, slicereg::Rigid::identity());
        assert!(res.chosen_ssd <= ssds[0]);
        // Independent summation order agrees to rounding.
        let w = window;
        let naive = common::naive_ssd(&fixed, &warp_image(&moving, &res.transform, Interpolation::Bilinear), w.x0, w.y0, w.x1, w.y1);
        assert!((naive - min).abs() <= 1e-9 * min.max(1.0));
        with_features += usize::from(!res.fallback);
    }
    assert!(with_features >= 15, "only {with_features} of 20 pairs produced hypotheses");
}
