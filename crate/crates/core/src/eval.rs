//! Alignment scoring: lumen masks are moved by the registration transforms
//! and consecutive slices are compared by their overlap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::BinaryMask;
use crate::scalar::Scalar;
use crate::transform::Rigid;

pub use crate::warp::warp_mask;

/// Dice coefficient `2|A ∩ B| / (|A| + |B|)` of the foregrounds.
pub fn similarity_index(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!("masks differ in size: {:?} vs {:?}", a.dims(), b.dims())));
    }
    let total = a.count() + b.count();
    if total == 0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok(2.0 * a.intersection_count(b) as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub i: usize,
    pub j: usize,
    pub similarity: f64,
    /// Whether any pair between `i` and `j` used an identity fallback.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: Vec<PairScore>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Pairs `(i, i + 1)` whose registration fell back to identity somewhere.
    pub fallback_pairs: Vec<[usize; 2]>,
    /// Mean similarity of scored pairs with and without a fallback.
    pub mean_with_fallback: Option<f64>,
    pub mean_without_fallback: Option<f64>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Scores masks moved by `transforms` (one per slice).
///
/// Every pair `(i, j)` with `1 <= j - i <= window` is scored. `fell_back[i]`
/// marks pair `(i, i + 1)`; a scored pair is flagged if any step between its
/// slices is. Pairs where both masks end up empty are skipped.
pub fn evaluate_masks<S: Scalar>(
    masks: &[BinaryMask],
    transforms: &[Rigid<S>],
    fell_back: &[bool],
    window: usize,
) -> Result<EvalReport> {
    if masks.len() != transforms.len() {
        return Err(Error::invalid(format!("{} masks for {} transforms", masks.len(), transforms.len())));
    }
    if fell_back.len() + 1 != masks.len().max(1) {
        return Err(Error::invalid("fallback flags must cover every consecutive pair"));
    }
    if window == 0 {
        return Err(Error::invalid("window must be at least 1"));
    }
    let warped: Vec<BinaryMask> = masks.par_iter().zip(transforms).map(|(m, t)| warp_mask(m, t)).collect();
    let mut pairs = Vec::new();
    for i in 0..warped.len() {
        for j in i + 1..(i + window + 1).min(warped.len()) {
            match similarity_index(&warped[i], &warped[j]) {
                Ok(similarity) => pairs.push(PairScore { i, j, similarity, fallback: fell_back[i..j].iter().any(|&f| f) }),
                Err(Error::UndefinedSimilarity) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let values: Vec<f64> = pairs.iter().map(|p| p.similarity).collect();
    let (mean, std) = mean_std(&values);
    let subset = |flag: bool| {
        let v: Vec<f64> = pairs.iter().filter(|p| p.fallback == flag).map(|p| p.similarity).collect();
        (!v.is_empty()).then(|| mean_std(&v).0)
    };
    Ok(EvalReport {
        mean,
        std,
        fallback_pairs: fell_back.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| [i, i + 1]).collect(),
        mean_with_fallback: subset(true),
        mean_without_fallback: subset(false),
        pairs,
    })
}

/// Scores a registration chain against its slices' lumen masks.
pub fn evaluate_chain<S: Scalar>(
    masks: &[BinaryMask],
    chain: &crate::roi_register::RegistrationChain<S>,
    window: usize,
) -> Result<EvalReport> {
    if masks.len() != chain.len() {
        return Err(Error::invalid(format!("{} masks for a chain of {} slices", masks.len(), chain.len())));
    }
    let flags: Vec<bool> = (0..chain.pairs.len()).map(|i| chain.pair_fell_back(i)).collect();
    evaluate_masks(masks, &chain.totals(), &flags, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disk(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2) < r * r)
    }

    #[test]
    fn similarity_examples() {
        let a = disk(40, 40, 20.0, 20.0, 8.0);
        assert_eq!(similarity_index(&a, &a).unwrap(), 1.0);
        let b = disk(40, 40, 5.0, 5.0, 3.0);
        assert_eq!(similarity_index(&a, &b).unwrap(), 0.0);
        let half_a = BinaryMask::from_fn(20, 10, |x, _| x < 10);
        let half_b = BinaryMask::from_fn(20, 10, |x, _| (5..15).contains(&x));
        assert_eq!(similarity_index(&half_a, &half_b).unwrap(), 0.5);
        let e = BinaryMask::empty(4, 4);
        assert!(matches!(similarity_index(&e, &e), Err(Error::UndefinedSimilarity)));
        assert!(similarity_index(&e, &BinaryMask::empty(5, 4)).is_err());
    }

    #[test]
    fn rotation_round_trip_keeps_disk() {
        let m = disk(300, 300, 150.0, 150.0, 100.0);
        let t = Rigid::about_center(0.3, 0.0, 0.0, 150.0, 150.0);
        let back = warp_mask(&warp_mask(&m, &t), &t.inverse());
        assert!(similarity_index(&m, &back).unwrap() >= 0.95);
    }

    #[test]
    fn identity_transforms_on_identical_masks() {
        let m = disk(50, 50, 25.0, 25.0, 10.0);
        let masks = vec![m.clone(), m.clone(), m];
        let r = evaluate_masks(&masks, &[Rigid::<f64>::identity(); 3], &[false, false], 1).unwrap();
        assert_eq!(r.pairs.len(), 2);
        assert!(r.pairs.iter().all(|p| p.similarity == 1.0));
        assert_eq!((r.mean, r.std), (1.0, 0.0));
        let r = evaluate_masks(&masks, &[Rigid::<f64>::identity(); 3], &[false, true], 2).unwrap();
        assert_eq!(r.pairs.len(), 3);
        assert_eq!(r.fallback_pairs, vec![[1, 2]]);
        assert!(r.pairs.iter().find(|p| p.i == 0 && p.j == 2).unwrap().fallback);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let m = disk(20, 20, 10.0, 10.0, 4.0);
        assert!(evaluate_masks(&[m.clone(), m], &[Rigid::<f64>::identity()], &[false], 1).is_err());
    }

    proptest! {
        #[test]
        fn similarity_is_symmetric(a in proptest::collection::vec(any::<bool>(), 64), b in proptest::collection::vec(any::<bool>(), 64)) {
            let ma = BinaryMask::new(8, 8, a).unwrap();
            let mb = BinaryMask::new(8, 8, b).unwrap();
            if ma.count() + mb.count() > 0 {
                prop_assert_eq!(similarity_index(&ma, &mb).unwrap(), similarity_index(&mb, &ma).unwrap());
            }
        }

        #[test]
        fn shared_translation_keeps_similarity(dx in -10i32..=10, dy in -10i32..=10, off in 0.0f64..12.0) {
            let a = disk(100, 100, 50.0, 50.0, 15.0);
            let b = disk(100, 100, 50.0 + off, 48.0, 15.0);
            let t = Rigid::translation(dx as f64, dy as f64);
            let before = similarity_index(&a, &b).unwrap();
            let after = similarity_index(&warp_mask(&a, &t), &warp_mask(&b, &t)).unwrap();
            prop_assert_eq!(before, after);
        }

        #[test]
        fn shared_rigid_motion_barely_changes_similarity(theta in -0.5f64..0.5, off in 0.0f64..20.0) {
            let a = disk(200, 200, 100.0, 100.0, 30.0);
            let b = disk(200, 200, 100.0 + off, 96.0, 30.0);
            let t = Rigid::about_center(theta, 3.0, -2.0, 100.0, 100.0);
            let before = similarity_index(&a, &b).unwrap();
            let after = similarity_index(&warp_mask(&a, &t), &warp_mask(&b, &t)).unwrap();
            prop_assert!((before - after).abs() <= 0.02);
        }

        #[test]
        fn statistics_match_single_pass(values in proptest::collection::vec(0.0f64..1.0, 1..30)) {
            let (mean, std) = mean_std(&values);
            // Welford's single-pass recurrence as an independent reference.
            let (mut m, mut s2) = (0.0, 0.0);
            for (k, &v) in values.iter().enumerate() {
                let d = v - m;
                m += d / (k + 1) as f64;
                s2 += d * (v - m);
            }
            prop_assert!((mean - m).abs() < 1e-12);
            prop_assert!((std - (s2 / values.len() as f64).sqrt()).abs() < 1e-12);
        }
    }
}
