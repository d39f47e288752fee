//! Whole-tissue rigid alignment by exhaustive (θ, dx, dy) search minimizing
//! the sum of squared differences between segmentation renderings.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, PixelWindow};
use crate::mumford_shah::{render_ms, LabelImage};
use crate::pyramid::Pyramid;
use crate::scalar::Scalar;
use crate::transform::Rigid;
use crate::warp::{warp_image, warped_ssd, Interpolation};

/// Σ (a − b)², summed row-major.
pub fn ssd<S: Scalar>(a: &Image<S>, b: &Image<S>) -> Result<S> {
    ssd_window(a, b, a.full_window())
}

/// Σ (a − b)² over `window`, summed row-major.
pub fn ssd_window<S: Scalar>(a: &Image<S>, b: &Image<S>, window: PixelWindow) -> Result<S> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!("ssd of {:?} and {:?} images", a.dims(), b.dims())));
    }
    if window.x1 > a.width() || window.y1 > a.height() {
        return Err(Error::invalid("ssd window exceeds the image"));
    }
    let mut acc = S::zero();
    for y in window.y0..window.y1 {
        for (p, q) in a.row(y)[window.x0..window.x1].iter().zip(&b.row(y)[window.x0..window.x1]) {
            let d = *p - *q;
            acc += d * d;
        }
    }
    Ok(acc)
}

/// One search axis. Nodes are the multiples of `step` inside `[min, max]`,
/// so zero is a node whenever the range contains it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl AxisRange {
    pub fn new(min: f64, max: f64, step: f64) -> Self {
        Self { min, max, step }
    }

    pub fn symmetric(extent: f64, step: f64) -> Self {
        Self { min: -extent, max: extent, step }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.step > 0.0) || !(self.min <= self.max) {
            return Err(Error::invalid(format!("{name} axis needs step > 0 and min <= max")));
        }
        Ok(())
    }

    pub fn nodes(&self) -> Vec<f64> {
        let lo = (self.min / self.step - 1e-9).ceil() as i64;
        let hi = (self.max / self.step + 1e-9).floor() as i64;
        let nodes: Vec<f64> = (lo..=hi).map(|i| i as f64 * self.step).collect();
        if nodes.is_empty() {
            vec![(self.min + self.max) / 2.0]
        } else {
            nodes
        }
    }
}

/// Search domain: rotation about the image center in radians, shifts in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub theta: AxisRange,
    pub dx: AxisRange,
    pub dy: AxisRange,
    /// The refinement pass divides every step by this factor.
    pub refine_factor: usize,
}

impl SearchGrid {
    /// θ ∈ ±30° in 3° steps, shifts ∈ ±W/8 in steps of max(1, W/64).
    pub fn default_for(width: usize) -> Self {
        let w = width as f64;
        let shift = AxisRange::symmetric(w / 8.0, (w / 64.0).max(1.0));
        Self {
            theta: AxisRange::symmetric(30f64.to_radians(), 3f64.to_radians()),
            dx: shift,
            dy: shift,
            refine_factor: 6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.theta.validate("theta")?;
        self.dx.validate("dx")?;
        self.dy.validate("dy")?;
        if self.refine_factor == 0 {
            return Err(Error::invalid("refine_factor must be at least 1"));
        }
        Ok(())
    }

    pub fn coarse_nodes(&self) -> [Vec<f64>; 3] {
        [self.theta.nodes(), self.dx.nodes(), self.dy.nodes()]
    }

    /// Nodes of the refinement pass: the same number of nodes per axis
    /// (rounded up to odd) centered on `center`, with steps divided by the
    /// refine factor.
    pub fn refine_nodes(&self, center: (f64, f64, f64)) -> [Vec<f64>; 3] {
        let f = self.refine_factor as f64;
        let axis = |a: &AxisRange, c: f64| {
            let half = (a.nodes().len() / 2) as i64;
            let step = a.step / f;
            (-half..=half).map(|j| c + j as f64 * step).collect::<Vec<_>>()
        };
        [axis(&self.theta, center.0), axis(&self.dx, center.1), axis(&self.dy, center.2)]
    }
}

/// Outcome of [`grid_search_rigid_detailed`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMatch<S> {
    /// Winning grid parameters: rotation about the image center, then shift.
    pub theta: f64,
    pub dx: f64,
    pub dy: f64,
    /// The winner as a transform about the origin.
    pub transform: Rigid<S>,
    pub ssd: S,
    /// Coarse-pass winner and its SSD.
    pub coarse: (f64, f64, f64),
    pub coarse_ssd: S,
}

/// Transform for grid parameters on a `w x h` raster.
pub fn grid_transform<S: Scalar>(theta: f64, dx: f64, dy: f64, dims: (usize, usize)) -> Rigid<S> {
    Rigid::about_center(
        S::lit(theta),
        S::lit(dx),
        S::lit(dy),
        S::lit(dims.0 as f64 / 2.0),
        S::lit(dims.1 as f64 / 2.0),
    )
}

/// Total order used to pick a winner: SSD, then smallest |θ|, |dx|, |dy|,
/// then the signed values so the choice never depends on evaluation order.
fn better<S: Scalar>(a: (S, [f64; 3]), b: (S, [f64; 3])) -> bool {
    let key = |p: [f64; 3]| [p[0].abs(), p[1].abs(), p[2].abs(), p[0], p[1], p[2]];
    match a.0.partial_cmp(&b.0) {
        Some(std::cmp::Ordering::Less) => true,
        Some(std::cmp::Ordering::Greater) => false,
        _ => {
            let (ka, kb) = (key(a.1), key(b.1));
            ka.partial_cmp(&kb) == Some(std::cmp::Ordering::Less)
        }
    }
}

/// Smallest SSD seen so far by any worker, stored as the bits of a
/// non-negative `f64` (their integer order matches numeric order).
struct SharedBound(AtomicU64);

impl SharedBound {
    fn new() -> Self {
        Self(AtomicU64::new(f64::INFINITY.to_bits()))
    }

    fn get<S: Scalar>(&self) -> Option<S> {
        let v = f64::from_bits(self.0.load(Ordering::Relaxed));
        v.is_finite().then(|| S::lit(v))
    }

    fn offer<S: Scalar>(&self, v: S) {
        self.0.fetch_min(v.to_f64_lossy().to_bits(), Ordering::Relaxed);
    }
}

fn search_nodes<S: Scalar>(
    fixed: &Image<S>,
    moving: &Image<S>,
    init: &Rigid<S>,
    nodes: &[Vec<f64>; 3],
    interp: Interpolation,
) -> Option<(S, [f64; 3])> {
    let dims = fixed.dims();
    let window = fixed.full_window();
    let bound = SharedBound::new();
    let per_theta: Vec<Option<(S, [f64; 3])>> = nodes[0]
        .par_iter()
        .map(|&theta| {
            let mut best: Option<(S, [f64; 3])> = None;
            for &dx in &nodes[1] {
                for &dy in &nodes[2] {
                    let t = grid_transform::<S>(theta, dx, dy, dims).compose(init);
                    // A node abandoned early has a partial sum above another
                    // node's full SSD, so it can neither win nor tie.
                    if let Some(s) = warped_ssd(fixed, moving, &t, interp, window, bound.get()) {
                        let cand = (s, [theta, dx, dy]);
                        if best.is_none_or(|b| better(cand, b)) {
                            best = Some(cand);
                            bound.offer(s);
                        }
                    }
                }
            }
            best
        })
        .collect();
    per_theta.into_iter().flatten().reduce(|a, b| if better(b, a) { b } else { a })
}

/// Exhaustive coarse search followed by one refinement pass around the
/// coarse winner. `init` is applied to `moving` before the grid transform,
/// so the returned transform is relative to the pre-warped moving image.
pub fn grid_search_rigid_detailed<S: Scalar>(
    fixed: &Image<S>,
    moving: &Image<S>,
    grid: &SearchGrid,
    init: &Rigid<S>,
    interp: Interpolation,
) -> Result<GridMatch<S>> {
    if fixed.dims() != moving.dims() {
        return Err(Error::invalid(format!(
            "grid search over {:?} and {:?} images",
            fixed.dims(),
            moving.dims()
        )));
    }
    grid.validate()?;
    let (coarse_ssd, c) = search_nodes(fixed, moving, init, &grid.coarse_nodes(), interp).expect("grid has nodes");
    let (ssd, p) = if grid.refine_factor > 1 {
        search_nodes(fixed, moving, init, &grid.refine_nodes((c[0], c[1], c[2])), interp).expect("grid has nodes")
    } else {
        (coarse_ssd, c)
    };
    Ok(GridMatch {
        theta: p[0],
        dx: p[1],
        dy: p[2],
        transform: grid_transform(p[0], p[1], p[2], fixed.dims()),
        ssd,
        coarse: (c[0], c[1], c[2]),
        coarse_ssd,
    })
}

/// The transform `T` on the grid minimizing `ssd(fixed, warp(moving, T))`.
pub fn grid_search_rigid<S: Scalar>(fixed: &Image<S>, moving: &Image<S>, grid: &SearchGrid) -> Result<Rigid<S>> {
    grid_search_rigid_detailed(fixed, moving, grid, &Rigid::identity(), Interpolation::Bilinear).map(|m| m.transform)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalConfig {
    /// `None` derives the default grid from the estimation-level width.
    pub grid: Option<SearchGrid>,
    /// Pyramid level at which the search runs; results are scaled back up.
    pub estimation_level: usize,
    pub interpolation: Interpolation,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self { grid: None, estimation_level: 2, interpolation: Interpolation::Bilinear }
    }
}

#[derive(Debug, Clone)]
pub struct GlobalAlignment<S> {
    /// Cleaned slices warped by their cumulative transforms.
    pub registered: Vec<Image<S>>,
    /// Segmentation renderings warped the same way.
    pub registered_ms: Vec<Image<S>>,
    /// `pairwise[i]` takes slice `i + 1`, already moved by `cumulative[i]`,
    /// onto registered slice `i`.
    pub pairwise: Vec<Rigid<S>>,
    /// Full-resolution transform applied to each original slice.
    pub cumulative: Vec<Rigid<S>>,
}

/// Aligns a stack slice by slice. Each pair is estimated between the
/// registered rendering of slice `i` and the rendering of slice `i + 1`
/// pre-warped by `cumulative[i]`; each output is produced by one warp of the
/// original slice.
pub fn align_whole_tissue<S: Scalar>(
    stack: &[Image<S>],
    ms_stack: &[LabelImage<S>],
    cfg: &GlobalConfig,
) -> Result<GlobalAlignment<S>> {
    if stack.is_empty() || stack.len() != ms_stack.len() {
        return Err(Error::invalid(format!(
            "{} slices but {} segmentations",
            stack.len(),
            ms_stack.len()
        )));
    }
    let dims = stack[0].dims();
    for (i, (img, ms)) in stack.iter().zip(ms_stack).enumerate() {
        if img.dims() != dims || ms.dims() != dims {
            return Err(Error::invalid(format!("slice {i} does not match the stack dimensions {dims:?}")));
        }
    }
    let level = cfg.estimation_level;
    let factor = S::lit((1u64 << level) as f64);
    let rendered: Vec<Image<S>> = ms_stack.iter().map(render_ms).collect();
    let coarse: Vec<Image<S>> = rendered
        .par_iter()
        .map(|r| Pyramid::build(r, level).map(|p| p.level(level).clone()))
        .collect::<Result<_>>()?;
    let grid = cfg.grid.unwrap_or_else(|| SearchGrid::default_for(coarse[0].width()));

    let mut cumulative = vec![Rigid::identity()];
    let mut pairwise = Vec::with_capacity(stack.len().saturating_sub(1));
    for i in 0..stack.len().saturating_sub(1) {
        let fixed = warp_image(&coarse[i], &cumulative[i].scaled(factor.recip())?, cfg.interpolation);
        let init = cumulative[i].scaled(factor.recip())?;
        let found = grid_search_rigid_detailed(&fixed, &coarse[i + 1], &grid, &init, cfg.interpolation)?;
        let pair = found.transform.scaled(factor)?;
        cumulative.push(pair.compose(&cumulative[i]));
        pairwise.push(pair);
    }
    let registered = stack
        .par_iter()
        .zip(&cumulative)
        .map(|(img, t)| warp_image(img, t, cfg.interpolation))
        .collect();
    let registered_ms = rendered
        .par_iter()
        .zip(&cumulative)
        .map(|(img, t)| warp_image(img, t, cfg.interpolation))
        .collect();
    Ok(GlobalAlignment { registered, registered_ms, pairwise, cumulative })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(w: usize, h: usize, seed: u64) -> Image<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<(f64, f64, f64, f64)> = (0..6)
            .map(|_| {
                (
                    rng.random_range(0.25..0.75) * w as f64,
                    rng.random_range(0.25..0.75) * h as f64,
                    rng.random_range(3.0..8.0),
                    rng.random_range(60.0..180.0),
                )
            })
            .collect();
        Image::from_fn(w, h, |x, y| {
            let mut v = 250.0;
            for &(cx, cy, r, depth) in &centers {
                let d2 = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2);
                v -= depth * (-d2 / (2.0 * r * r)).exp();
            }
            v.max(0.0)
        })
    }

    #[test]
    fn ssd_examples() {
        let a = blobs(16, 16, 1);
        assert_eq!(ssd(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.set(3, 4, a.get(3, 4) + 2.0);
        assert_eq!(ssd(&a, &b).unwrap(), 4.0);
        assert!(ssd(&a, &Image::filled(15, 16, 0.0)).is_err());
    }

    #[test]
    fn axis_nodes_include_zero() {
        let nodes = AxisRange::symmetric(8.0, 1.0).nodes();
        assert_eq!(nodes.len(), 17);
        assert!(nodes.contains(&0.0));
        let nodes = AxisRange::new(-5.0, 7.0, 3.0).nodes();
        assert_eq!(nodes, vec![-3.0, 0.0, 3.0, 6.0]);
        let t = AxisRange::symmetric(30f64.to_radians(), 3f64.to_radians()).nodes();
        assert_eq!(t.len(), 21);
    }

    #[test]
    fn identical_images_give_identity() {
        let a = blobs(48, 48, 2);
        let grid = SearchGrid::default_for(48);
        let m = grid_search_rigid_detailed(&a, &a, &grid, &Rigid::identity(), Interpolation::Bilinear).unwrap();
        assert_eq!((m.theta, m.dx, m.dy), (0.0, 0.0, 0.0));
        assert_eq!(m.ssd, 0.0);
    }

    #[test]
    fn recovers_known_shift() {
        let a = blobs(64, 64, 3);
        let moved = warp_image(&a, &Rigid::translation(4.0, 0.0), Interpolation::Bilinear);
        let grid = SearchGrid {
            theta: AxisRange::symmetric(0.1, 0.05),
            dx: AxisRange::symmetric(8.0, 1.0),
            dy: AxisRange::symmetric(8.0, 1.0),
            refine_factor: 1,
        };
        let t = grid_search_rigid(&a, &moved, &grid).unwrap();
        assert!(t.max_entry_diff(&Rigid::translation(-4.0, 0.0)) < 1e-12, "{t:?}");
    }

    #[test]
    fn refinement_never_worse_than_coarse() {
        let a = blobs(40, 40, 4);
        let b = warp_image(&a, &Rigid::about_center(0.05, 1.7, -0.6, 20.0, 20.0), Interpolation::Bilinear);
        let grid = SearchGrid::default_for(40);
        let m = grid_search_rigid_detailed(&a, &b, &grid, &Rigid::identity(), Interpolation::Bilinear).unwrap();
        assert!(m.ssd <= m.coarse_ssd);
        assert!(m.ssd <= ssd(&a, &b).unwrap());
    }

    #[test]
    fn tie_break_prefers_small_magnitudes() {
        let p = |t, x, y| [t, x, y];
        assert!(better((1.0, p(0.0, 1.0, 0.0)), (1.0, p(0.0, -2.0, 0.0))));
        assert!(better((1.0, p(0.0, 0.0, 5.0)), (1.0, p(0.1, 0.0, 0.0))));
        assert!(better((1.0, p(0.0, -1.0, 0.0)), (1.0, p(0.0, 1.0, 0.0))));
        assert!(better((0.5, p(0.3, 9.0, 9.0)), (1.0, p(0.0, 0.0, 0.0))));
    }

    fn ms_of(img: &Image<f64>) -> LabelImage<f64> {
        // A lossless "segmentation": one phase per distinct rounded value is
        // overkill, so use two phases split at the midpoint for the tests.
        let labels = img.data().iter().map(|&v| (v < 200.0) as u8).collect();
        let mut lab = LabelImage::new(img.width(), img.height(), labels, vec![250.0, 100.0]).unwrap();
        lab.canonicalize();
        lab
    }

    #[test]
    fn chain_recovers_stacked_shifts() {
        let base = blobs(128, 128, 5);
        let stack: Vec<Image<f64>> = (0..3)
            .map(|i| warp_image(&base, &Rigid::translation(2.0 * i as f64 * 4.0, 0.0), Interpolation::Bilinear))
            .collect();
        let ms: Vec<_> = stack.iter().map(ms_of).collect();
        let out = align_whole_tissue(&stack, &ms, &GlobalConfig::default()).unwrap();
        for p in &out.pairwise {
            assert!(p.max_entry_diff(&Rigid::translation(-8.0, 0.0)) < 1.0, "{p:?}");
        }
        let mut acc = Rigid::identity();
        for (i, p) in out.pairwise.iter().enumerate() {
            acc = p.compose(&acc);
            assert!(acc.max_entry_diff(&out.cumulative[i + 1]) < 1e-9);
        }
        assert_eq!(out.registered[0], stack[0]);
    }

    #[test]
    fn identical_stack_gives_identities() {
        let base = blobs(64, 64, 6);
        let stack = vec![base.clone(), base.clone(), base];
        let ms: Vec<_> = stack.iter().map(ms_of).collect();
        let out = align_whole_tissue(&stack, &ms, &GlobalConfig::default()).unwrap();
        for t in &out.cumulative {
            assert_eq!(*t, Rigid::identity());
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let base = blobs(32, 32, 7);
        let ms = vec![ms_of(&base)];
        assert!(align_whole_tissue(&[base.clone(), base], &ms, &GlobalConfig::default()).is_err());
    }
}
