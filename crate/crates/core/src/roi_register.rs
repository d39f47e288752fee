//! Regional multi-resolution registration.
//!
//! For each pyramid level, coarsest first, SIFT matches inside the ROI
//! propose rigid hypotheses (one per 3-subset of the top matches); the
//! hypothesis with the smallest ROI SSD wins. Level transforms are scaled up
//! and composed into one full-resolution transform per slice pair, and the
//! pairs are chained down the stack.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::pyramid::Pyramid;
use crate::roi::RoiBox;
use crate::scalar::Scalar;
use crate::sift::{detect_and_describe, match_features, roi_window, SiftConfig};
use crate::transform::Rigid;
use crate::warp::{warp_image, warped_ssd, Interpolation};

/// Triples whose source triangle is smaller than this (px²) are skipped.
pub const MIN_TRIANGLE_AREA: f64 = 2.0;

/// Least-squares rotation + translation taking `src[i]` to `dst[i]`.
pub fn rigid_from_correspondences<S: Scalar>(src: &[(S, S)], dst: &[(S, S)]) -> Result<Rigid<S>> {
    if src.len() != dst.len() || src.is_empty() {
        return Err(Error::invalid("need equally many source and destination points"));
    }
    let n = S::from_usize_lossy(src.len());
    let centroid = |p: &[(S, S)]| {
        let (sx, sy) = p.iter().fold((S::zero(), S::zero()), |a, q| (a.0 + q.0, a.1 + q.1));
        (sx / n, sy / n)
    };
    let (csx, csy) = centroid(src);
    let (cdx, cdy) = centroid(dst);
    let mut spread = S::zero();
    let mut cross = S::zero();
    let mut dot = S::zero();
    for (s, d) in src.iter().zip(dst) {
        let (ax, ay) = (s.0 - csx, s.1 - csy);
        let (bx, by) = (d.0 - cdx, d.1 - cdy);
        spread += ax * ax + ay * ay;
        cross += ax * by - ay * bx;
        dot += ax * bx + ay * by;
    }
    if spread <= S::lit(1e-12) {
        return Err(Error::DegenerateCorrespondence("source points coincide"));
    }
    let theta = cross.atan2(dot);
    let (sin, cos) = theta.sin_cos();
    Ok(Rigid::new(theta, cdx - (cos * csx - sin * csy), cdy - (sin * csx + cos * csy)))
}

fn triangle_area(p: &[(f64, f64); 3]) -> f64 {
    ((p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1)).abs() / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<S> {
    pub transform: Rigid<S>,
    /// SSD inside the ROI window between fixed and the warped moving image.
    pub ssd: S,
}

/// Outcome of one level of the cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult<S> {
    pub level: usize,
    /// Winning transform in this level's pixel frame.
    pub transform: Rigid<S>,
    /// Hypotheses scored, the identity baseline included.
    pub candidate_count: usize,
    pub chosen_ssd: S,
    /// Set when too few usable matches existed and identity was used.
    pub fallback: bool,
    pub matches: usize,
    /// Every scored hypothesis in evaluation order; identity comes first.
    pub candidates: Vec<Candidate<S>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoiRegConfig {
    /// Coarsest pyramid level `k`; the cascade runs levels `k..=0`.
    pub levels: usize,
    pub sift: SiftConfig,
    pub interpolation: Interpolation,
}

impl Default for RoiRegConfig {
    fn default() -> Self {
        Self { levels: 3, sift: SiftConfig::default(), interpolation: Interpolation::Bilinear }
    }
}

/// Picks the best rigid hypothesis for aligning `moving` onto `fixed` inside
/// `roi` (given in this level's frame).
pub fn register_level<S: Scalar>(
    fixed: &Image<S>,
    moving: &Image<S>,
    roi: &RoiBox,
    sift_cfg: &SiftConfig,
) -> Result<LevelResult<S>> {
    register_level_with(fixed, moving, roi, sift_cfg, Interpolation::Bilinear, 0)
}

fn register_level_with<S: Scalar>(
    fixed: &Image<S>,
    moving: &Image<S>,
    roi: &RoiBox,
    sift_cfg: &SiftConfig,
    interp: Interpolation,
    level: usize,
) -> Result<LevelResult<S>> {
    if fixed.dims() != moving.dims() {
        return Err(Error::invalid(format!(
            "level {level}: fixed is {:?} but moving is {:?}",
            fixed.dims(),
            moving.dims()
        )));
    }
    let window = roi.window(fixed.width(), fixed.height());
    if window.is_empty() {
        return Err(Error::invalid(format!("level {level}: ROI lies outside the image")));
    }

    // Feature failure (e.g. an ROI clipped below the detector minimum)
    // leaves only the identity hypothesis.
    let matched = (|| -> Result<Vec<([f64; 2], [f64; 2])>> {
        let win = roi_window(fixed, roi)?;
        let fa = detect_and_describe(moving, roi, sift_cfg)?;
        let fb = detect_and_describe(fixed, roi, sift_cfg)?;
        let (ox, oy) = (win.x0 as f64, win.y0 as f64);
        Ok(match_features(&fa, &fb, sift_cfg)
            .into_iter()
            .map(|m| {
                let (a, b) = (fa[m.index_a].keypoint, fb[m.index_b].keypoint);
                ([a.x + ox, a.y + oy], [b.x + ox, b.y + oy])
            })
            .collect())
    })()
    .unwrap_or_default();

    let mut hypotheses = vec![Rigid::identity()];
    let m = matched.len();
    for i in 0..m {
        for j in i + 1..m {
            for k in j + 1..m {
                let idx = [i, j, k];
                let src = idx.map(|t| (matched[t].0[0], matched[t].0[1]));
                if triangle_area(&src) < MIN_TRIANGLE_AREA {
                    continue;
                }
                let dst = idx.map(|t| (matched[t].1[0], matched[t].1[1]));
                let lit = |p: [(f64, f64); 3]| p.map(|(x, y)| (S::lit(x), S::lit(y)));
                if let Ok(t) = rigid_from_correspondences(&lit(src), &lit(dst)) {
                    hypotheses.push(t);
                }
            }
        }
    }
    let fallback = hypotheses.len() == 1;
    let candidates: Vec<Candidate<S>> = hypotheses
        .par_iter()
        .map(|t| Candidate {
            transform: *t,
            ssd: warped_ssd(fixed, moving, t, interp, window, None).expect("unbounded ssd"),
        })
        .collect();
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.ssd < candidates[best].ssd {
            best = i;
        }
    }
    Ok(LevelResult {
        level,
        transform: candidates[best].transform,
        candidate_count: candidates.len(),
        chosen_ssd: candidates[best].ssd,
        fallback,
        matches: m,
        candidates,
    })
}

/// Composes per-level transforms (coarsest last in `levels[r]` order,
/// indexed by level) into the full-resolution transform: each level-`r`
/// transform is scaled by `2^r`, and coarser levels are applied first.
pub fn compose_levels<S: Scalar>(per_level: &[Rigid<S>]) -> Result<Rigid<S>> {
    let mut acc = Rigid::identity();
    for (r, t) in per_level.iter().enumerate().rev() {
        acc = t.scaled(S::lit((1u64 << r) as f64))?.compose(&acc);
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairResult<S> {
    /// Full-resolution transform taking the original moving slice onto the
    /// fixed slice, `init` included.
    pub total: Rigid<S>,
    /// `total ∘ init⁻¹`: the correction found by the cascade itself.
    pub relative: Rigid<S>,
    /// Coarsest level first.
    pub levels: Vec<LevelResult<S>>,
}

/// Runs the cascade from level `k` down to 0 on one slice pair.
pub fn register_pair<S: Scalar>(
    fixed: &Image<S>,
    moving: &Image<S>,
    roi0: &RoiBox,
    cfg: &RoiRegConfig,
) -> Result<PairResult<S>> {
    register_pair_from(fixed, moving, roi0, cfg, &Rigid::identity())
}

/// [`register_pair`] with `moving` first placed by `init`.
pub fn register_pair_from<S: Scalar>(
    fixed: &Image<S>,
    moving: &Image<S>,
    roi0: &RoiBox,
    cfg: &RoiRegConfig,
    init: &Rigid<S>,
) -> Result<PairResult<S>> {
    if fixed.dims() != moving.dims() {
        return Err(Error::invalid(format!(
            "pair dimensions differ: {:?} vs {:?}",
            fixed.dims(),
            moving.dims()
        )));
    }
    let k = cfg.levels;
    let fp = Pyramid::build(fixed, k)?;
    let mp = Pyramid::build(moving, k)?;
    let mut acc = *init;
    let mut levels = Vec::with_capacity(k + 1);
    for r in (0..=k).rev() {
        let f = S::lit((1u64 << r) as f64);
        let fixed_r = fp.level(r);
        let placed = warp_image(mp.level(r), &acc.scaled(f.recip())?, cfg.interpolation);
        let roi = roi0.for_level(r, fixed_r.dims());
        let res = register_level_with(fixed_r, &placed, &roi, &cfg.sift, cfg.interpolation, r)?;
        acc = res.transform.scaled(f)?.compose(&acc);
        levels.push(res);
    }
    Ok(PairResult { total: acc, relative: acc.compose(&init.inverse()), levels })
}

/// Per-slice transforms for a whole stack.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationChain<S> {
    /// Regional correction per slice; `cumulative[0]` is identity and
    /// `cumulative[i + 1] = pairwise[i] ∘ cumulative[i]`.
    pub cumulative: Vec<Rigid<S>>,
    /// Placement applied before the regional stage (identity if none).
    pub prior: Vec<Rigid<S>>,
    pub pairwise: Vec<Rigid<S>>,
    /// Level diagnostics for each pair `(i, i + 1)`, coarsest level first.
    pub pairs: Vec<Vec<LevelResult<S>>>,
    pub config: RoiRegConfig,
}

impl<S: Scalar> RegistrationChain<S> {
    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// Full transform applied to original slice `i`.
    pub fn total(&self, i: usize) -> Rigid<S> {
        self.cumulative[i].compose(&self.prior[i])
    }

    pub fn totals(&self) -> Vec<Rigid<S>> {
        (0..self.len()).map(|i| self.total(i)).collect()
    }

    /// Whether any level of pair `(i, i + 1)` fell back to identity.
    pub fn pair_fell_back(&self, i: usize) -> bool {
        self.pairs[i].iter().any(|l| l.fallback)
    }
}

/// Registers each slice against the previously registered one. With
/// `priors` (e.g. whole-tissue transforms) each original slice is first
/// placed by its prior; either way every slice is resampled only once.
pub fn register_stack<S: Scalar>(
    stack: &[Image<S>],
    roi0: &RoiBox,
    cfg: &RoiRegConfig,
    priors: Option<&[Rigid<S>]>,
) -> Result<RegistrationChain<S>> {
    if stack.len() < 2 {
        return Err(Error::invalid("a stack needs at least two slices"));
    }
    let prior: Vec<Rigid<S>> = match priors {
        Some(p) if p.len() != stack.len() => {
            return Err(Error::invalid(format!("{} priors for {} slices", p.len(), stack.len())))
        }
        Some(p) => p.to_vec(),
        None => vec![Rigid::identity(); stack.len()],
    };
    let dims = stack[0].dims();
    if let Some(i) = stack.iter().position(|s| s.dims() != dims) {
        return Err(Error::invalid(format!("slice {i} does not match the stack dimensions {dims:?}")));
    }
    let mut cumulative = vec![Rigid::identity()];
    let mut pairwise = Vec::with_capacity(stack.len() - 1);
    let mut pairs = Vec::with_capacity(stack.len() - 1);
    for i in 0..stack.len() - 1 {
        let fixed = warp_image(&stack[i], &cumulative[i].compose(&prior[i]), cfg.interpolation);
        let init = cumulative[i].compose(&prior[i + 1]);
        let res = register_pair_from(&fixed, &stack[i + 1], roi0, cfg, &init)?;
        // relative = total ∘ init⁻¹ is the pairwise correction.
        cumulative.push(res.relative.compose(&cumulative[i]));
        pairwise.push(res.relative);
        pairs.push(res.levels);
    }
    Ok(RegistrationChain { cumulative, prior, pairwise, pairs, config: *cfg })
}

/// Warps every original slice by its total transform.
pub fn apply_chain<S: Scalar>(stack: &[Image<S>], chain: &RegistrationChain<S>) -> Result<Vec<Image<S>>> {
    if stack.len() != chain.len() {
        return Err(Error::invalid(format!("{} slices for a chain of {}", stack.len(), chain.len())));
    }
    Ok(stack
        .par_iter()
        .enumerate()
        .map(|(i, s)| warp_image(s, &chain.total(i), chain.config.interpolation))
        .collect())
}
