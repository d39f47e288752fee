mod common;

use proptest::prelude::*;
use slicereg::sift::{detect_and_describe, match_features, Descriptor, Feature, Keypoint, SiftConfig, DESC_LEN};
use slicereg::warp::warp_image;
use slicereg::{Interpolation, Rigid, RoiBox};

#[test]
fn keypoints_repeat_under_a_known_rotation() {
    let img = common::blobs(512, 512, 5, 7.0);
    let rot = Rigid::about_center(15f64.to_radians(), 0.0, 0.0, 256.0, 256.0);
    let rotated = warp_image(&img, &rot, Interpolation::Bilinear);
    let roi = RoiBox::new(256.0, 256.0, 512.0, 512.0);
    let cfg = SiftConfig::default();
    let a = detect_and_describe(&img, &roi, &cfg).unwrap();
    let b = detect_and_describe(&rotated, &roi, &cfg).unwrap();
    // Only keypoints that stay well inside both frames are eligible.
    let inside = |x: f64, y: f64| (x - 256.0).hypot(y - 256.0) < 200.0;
    let (mut eligible, mut repeated) = (0, 0);
    for f in &a {
        let (x, y) = (f.keypoint.x, f.keypoint.y);
        if !inside(x, y) {
            continue;
        }
        let (u, v) = rot.apply(x, y);
        eligible += 1;
        if b.iter().any(|g| (g.keypoint.x - u).hypot(g.keypoint.y - v) <= 2.0) {
            repeated += 1;
        }
    }
    let rate = repeated as f64 / eligible as f64;
    assert!(eligible >= 50, "only {eligible} eligible keypoints");
    assert!(rate >= 0.6, "repeatability {rate:.3} ({repeated}/{eligible})");
}

#[test]
fn descriptors_ignore_an_intensity_offset() {
    let img = common::blobs(256, 256, 9, 6.0);
    let brighter = img.map(|v| v + 20.0);
    let roi = RoiBox::new(128.0, 128.0, 200.0, 200.0);
    let cfg = SiftConfig::default();
    let a = detect_and_describe(&img, &roi, &cfg).unwrap();
    let b = detect_and_describe(&brighter, &roi, &cfg).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a.len(), b.len());
    for (fa, fb) in a.iter().zip(&b) {
        assert!((fa.keypoint.x - fb.keypoint.x).abs() < 1e-6 && (fa.keypoint.y - fb.keypoint.y).abs() < 1e-6);
        let worst = fa.descriptor.v.iter().zip(&fb.descriptor.v).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-3, "descriptor component moved by {worst}");
    }
}

fn feature() -> impl Strategy<Value = Feature> {
    (proptest::collection::vec(0.0f64..0.3, DESC_LEN), 0.0f64..1.0, 0.0f64..1.0).prop_map(|(v, sx, sy)| Feature {
        keypoint: Keypoint { x: 0.0, y: 0.0, scale: 1.0, orientation: 0.0, response: 0.1 },
        descriptor: Descriptor { v, sx, sy },
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn matches_are_truncated_and_one_to_one(
        a in proptest::collection::vec(feature(), 0..30),
        b in proptest::collection::vec(feature(), 0..30),
    ) {
        let cfg = SiftConfig::default();
        let m = match_features(&a, &b, &cfg);
        prop_assert!(m.len() <= cfg.max_matches);
        let mut ia: Vec<usize> = m.iter().map(|x| x.index_a).collect();
        let mut ib: Vec<usize> = m.iter().map(|x| x.index_b).collect();
        ia.sort_unstable();
        ib.sort_unstable();
        ia.dedup();
        ib.dedup();
        prop_assert_eq!(ia.len(), m.len());
        prop_assert_eq!(ib.len(), m.len());
        prop_assert!(m.windows(2).all(|w| w[0].distance <= w[1].distance));
        for x in &m {
            prop_assert!(x.index_a < a.len() && x.index_b < b.len());
        }
    }
}
