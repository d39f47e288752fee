//! Scale-invariant keypoints restricted to a region of interest, with
//! descriptors augmented by the keypoint's normalized position.
//!
//! Coordinates follow the crate convention: pixel `i` of the ROI crop has its
//! center at `i + 0.5`.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, PixelWindow};
use crate::preprocess::gaussian_blur;
use crate::pyramid::downsample2;
use crate::roi::RoiBox;
use crate::scalar::Scalar;

/// Smallest ROI side (and smallest octave side) the detector works on.
pub const MIN_SIDE: usize = 16;

const DESC_WIDTH: usize = 4;
const DESC_BINS: usize = 8;
pub const DESC_LEN: usize = DESC_WIDTH * DESC_WIDTH * DESC_BINS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiftConfig {
    pub layers_per_octave: usize,
    /// Blur of the first scale-space image, in input pixels.
    pub sigma: f64,
    /// Divided by `layers_per_octave` to get the DoG contrast threshold.
    pub contrast_threshold: f64,
    pub edge_ratio: f64,
    /// Weight of the appended normalized coordinates.
    pub beta: f64,
    /// Nearest / second-nearest distance ratio for a good match.
    pub ratio: f64,
    pub max_matches: usize,
}

impl Default for SiftConfig {
    fn default() -> Self {
        Self {
            layers_per_octave: 10,
            sigma: 1.6,
            contrast_threshold: 0.04,
            edge_ratio: 10.0,
            beta: 0.5,
            ratio: 0.75,
            max_matches: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Position in the ROI frame.
    pub x: f64,
    pub y: f64,
    /// Gaussian scale in input pixels.
    pub scale: f64,
    /// Dominant gradient direction, radians in `[0, 2π)`.
    pub orientation: f64,
    /// Interpolated |DoG| at the extremum.
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    /// Gradient histogram, unit norm.
    pub v: Vec<f64>,
    pub sx: f64,
    pub sy: f64,
}

impl Descriptor {
    /// Euclidean distance between augmented vectors.
    pub fn distance(&self, other: &Self) -> f64 {
        let mut acc: f64 = self.v.iter().zip(&other.v).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += (self.sx - other.sx).powi(2) + (self.sy - other.sy).powi(2);
        acc.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub keypoint: Keypoint,
    pub descriptor: Descriptor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: f64,
}

/// Plain row-major `f64` plane used inside the scale space.
#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    d: Vec<f64>,
}

impl Plane {
    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.d[y * self.w + x]
    }

    fn from_image(img: &Image<f64>) -> Self {
        Self { w: img.width(), h: img.height(), d: img.data().to_vec() }
    }

    fn to_image(&self) -> Image<f64> {
        Image::new(self.w, self.h, self.d.clone()).expect("plane dims are valid")
    }

    fn blurred(&self, sigma: f64) -> Self {
        Self::from_image(&gaussian_blur(&self.to_image(), sigma).expect("positive sigma"))
    }
}

struct Octave {
    /// Pixel size in ROI pixels.
    step: f64,
    gauss: Vec<Plane>,
    dog: Vec<Plane>,
}

fn build_scale_space(base: Plane, cfg: &SiftConfig) -> Vec<Octave> {
    let s = cfg.layers_per_octave;
    let k = 2f64.powf(1.0 / s as f64);
    // incremental blurs between consecutive layers
    let incr: Vec<f64> = (1..s + 3)
        .map(|i| {
            let prev = cfg.sigma * k.powi(i as i32 - 1);
            let cur = prev * k;
            (cur * cur - prev * prev).sqrt()
        })
        .collect();
    let mut octaves = Vec::new();
    let mut first = base;
    let mut step = 1.0;
    while first.w.min(first.h) >= MIN_SIDE {
        let mut gauss = Vec::with_capacity(s + 3);
        gauss.push(first.clone());
        for &sig in &incr {
            let next = gauss.last().unwrap().blurred(sig);
            gauss.push(next);
        }
        let dog = gauss
            .windows(2)
            .map(|p| Plane { w: p[0].w, h: p[0].h, d: p[1].d.iter().zip(&p[0].d).map(|(a, b)| a - b).collect() })
            .collect();
        // Layer s carries twice the base blur; halving it starts the next octave.
        let next = Plane::from_image(&downsample2(&gauss[s].to_image()));
        octaves.push(Octave { step, gauss, dog });
        first = next;
        step *= 2.0;
    }
    octaves
}

fn is_extremum(dog: &[Plane], l: usize, x: usize, y: usize) -> bool {
    let v = dog[l].at(x, y);
    let mut ge = true;
    let mut le = true;
    for plane in &dog[l - 1..=l + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                let n = plane.at(xx, yy);
                ge &= v >= n;
                le &= v <= n;
            }
        }
        if !ge && !le {
            return false;
        }
    }
    ge || le
}

fn solve3(h: [[f64; 3]; 3], g: [f64; 3]) -> Option<[f64; 3]> {
    let det = h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1]) - h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0])
        + h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0]);
    if det.abs() < 1e-15 {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut m = h;
        for r in 0..3 {
            m[r][c] = g[r];
        }
        let dc = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        *o = dc / det;
    }
    Some(out)
}

struct Extremum {
    x: f64,
    y: f64,
    layer: f64,
    response: f64,
}

/// Quadratic refinement of a discrete extremum; `None` if it drifts out,
/// fails to converge, is too weak, or sits on an edge.
fn refine(dog: &[Plane], mut l: usize, mut x: usize, mut y: usize, cfg: &SiftConfig) -> Option<Extremum> {
    let s = cfg.layers_per_octave;
    let (w, h) = (dog[0].w, dog[0].h);
    let mut offset = [0.0; 3];
    let mut grad = [0.0; 3];
    let mut converged = false;
    let mut previous = None;
    for _ in 0..5 {
        let (p, c, n) = (&dog[l - 1], &dog[l], &dog[l + 1]);
        let v = c.at(x, y);
        grad = [
            (c.at(x + 1, y) - c.at(x - 1, y)) / 2.0,
            (c.at(x, y + 1) - c.at(x, y - 1)) / 2.0,
            (n.at(x, y) - p.at(x, y)) / 2.0,
        ];
        let dxx = c.at(x + 1, y) + c.at(x - 1, y) - 2.0 * v;
        let dyy = c.at(x, y + 1) + c.at(x, y - 1) - 2.0 * v;
        let dss = n.at(x, y) + p.at(x, y) - 2.0 * v;
        let dxy = (c.at(x + 1, y + 1) - c.at(x - 1, y + 1) - c.at(x + 1, y - 1) + c.at(x - 1, y - 1)) / 4.0;
        let dxs = (n.at(x + 1, y) - n.at(x - 1, y) - p.at(x + 1, y) + p.at(x - 1, y)) / 4.0;
        let dys = (n.at(x, y + 1) - n.at(x, y - 1) - p.at(x, y + 1) + p.at(x, y - 1)) / 4.0;
        let hess = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
        let sol = solve3(hess, grad)?;
        offset = [-sol[0], -sol[1], -sol[2]];
        if offset.iter().all(|o| o.abs() < 0.5) {
            converged = true;
            break;
        }
        if offset.iter().any(|o| o.abs() > 1e6) {
            return None;
        }
        let nx = x as f64 + offset[0].round();
        let ny = y as f64 + offset[1].round();
        let nl = l as f64 + offset[2].round();
        if nx < 1.0 || ny < 1.0 || nx > (w - 2) as f64 || ny > (h - 2) as f64 || nl < 1.0 || nl > s as f64 {
            return None;
        }
        let next = (nx as usize, ny as usize, nl as usize);
        // An extremum midway between two samples makes the step bounce back
        // and forth; the offset from either side is then within one sample.
        if previous == Some(next) && offset.iter().all(|o| o.abs() < 1.0) {
            converged = true;
            break;
        }
        previous = Some((x, y, l));
        (x, y, l) = next;
    }
    if !converged {
        return None;
    }
    let c = &dog[l];
    let v = c.at(x, y);
    let response = v + 0.5 * (grad[0] * offset[0] + grad[1] * offset[1] + grad[2] * offset[2]);
    if response.abs() < cfg.contrast_threshold / s as f64 {
        return None;
    }
    let dxx = c.at(x + 1, y) + c.at(x - 1, y) - 2.0 * v;
    let dyy = c.at(x, y + 1) + c.at(x, y - 1) - 2.0 * v;
    let dxy = (c.at(x + 1, y + 1) - c.at(x - 1, y + 1) - c.at(x + 1, y - 1) + c.at(x - 1, y - 1)) / 4.0;
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    let r = cfg.edge_ratio;
    if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
        return None;
    }
    Some(Extremum {
        x: x as f64 + offset[0],
        y: y as f64 + offset[1],
        layer: l as f64 + offset[2],
        response: response.abs(),
    })
}

#[inline]
fn gradient(g: &Plane, x: usize, y: usize) -> (f64, f64) {
    (g.at(x + 1, y) - g.at(x - 1, y), g.at(x, y + 1) - g.at(x, y - 1))
}

/// Peaks of the smoothed 36-bin gradient-orientation histogram.
fn orientations(g: &Plane, x: f64, y: f64, sigma: f64) -> Vec<f64> {
    const BINS: usize = 36;
    let radius = (3.0 * 1.5 * sigma).round() as i64;
    let wsig = 1.5 * sigma;
    let (cx, cy) = (x.round() as i64, y.round() as i64);
    let mut hist = [0.0f64; BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (px, py) = (cx + dx, cy + dy);
            if px < 1 || py < 1 || px >= g.w as i64 - 1 || py >= g.h as i64 - 1 {
                continue;
            }
            let (gx, gy) = gradient(g, px as usize, py as usize);
            let mag = (gx * gx + gy * gy).sqrt();
            let weight = (-((dx * dx + dy * dy) as f64) / (2.0 * wsig * wsig)).exp();
            let ang = gy.atan2(gx).rem_euclid(TAU);
            let bin = ((ang / TAU * BINS as f64).round() as usize) % BINS;
            hist[bin] += weight * mag;
        }
    }
    let mut smooth = [0.0f64; BINS];
    for i in 0..BINS {
        let at = |o: isize| hist[(i as isize + o).rem_euclid(BINS as isize) as usize];
        smooth[i] = (at(-2) + at(2) + 4.0 * (at(-1) + at(1)) + 6.0 * at(0)) / 16.0;
    }
    let max = smooth.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..BINS {
        let l = smooth[(i + BINS - 1) % BINS];
        let r = smooth[(i + 1) % BINS];
        let c = smooth[i];
        if c > l && c > r && c >= 0.8 * max {
            let off = 0.5 * (l - r) / (l - 2.0 * c + r);
            let bin = (i as f64 + off).rem_euclid(BINS as f64);
            out.push((bin / BINS as f64 * TAU).rem_euclid(TAU));
        }
    }
    out
}

/// 4x4x8 gradient histogram in the keypoint's rotated frame, trilinearly
/// binned, normalized, clamped at 0.2 and renormalized.
fn describe(g: &Plane, x: f64, y: f64, sigma: f64, ori: f64) -> Vec<f64> {
    let d = DESC_WIDTH as f64;
    let bins = DESC_BINS as f64;
    let hist_width = 3.0 * sigma;
    let radius = (hist_width * std::f64::consts::SQRT_2 * (d + 1.0) * 0.5).round() as i64;
    let (sin, cos) = ori.sin_cos();
    let (cx, cy) = (x.round() as i64, y.round() as i64);
    let mut hist = vec![0.0f64; (DESC_WIDTH + 2) * (DESC_WIDTH + 2) * (DESC_BINS + 2)];
    let idx = |r: usize, c: usize, o: usize| (r * (DESC_WIDTH + 2) + c) * (DESC_BINS + 2) + o;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (px, py) = (cx + dx, cy + dy);
            if px < 1 || py < 1 || px >= g.w as i64 - 1 || py >= g.h as i64 - 1 {
                continue;
            }
            // offset from the subpixel center, rotated into the keypoint frame
            let (ox, oy) = (px as f64 - x, py as f64 - y);
            let rx = (cos * ox + sin * oy) / hist_width;
            let ry = (-sin * ox + cos * oy) / hist_width;
            let rbin = ry + d / 2.0 - 0.5;
            let cbin = rx + d / 2.0 - 0.5;
            if rbin <= -1.0 || rbin >= d || cbin <= -1.0 || cbin >= d {
                continue;
            }
            let (gx, gy) = gradient(g, px as usize, py as usize);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let weight = (-(rx * rx + ry * ry) / (2.0 * (0.5 * d) * (0.5 * d))).exp();
            let obin = (gy.atan2(gx) - ori).rem_euclid(TAU) / TAU * bins;
            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
            let v = mag * weight;
            for (ri, wr) in [(0usize, 1.0 - fr), (1, fr)] {
                for (ci, wc) in [(0usize, 1.0 - fc), (1, fc)] {
                    for (oi, wo) in [(0usize, 1.0 - fo), (1, fo)] {
                        // shift by one so row/col -1 lands in the guard band
                        let r = (r0 as i64 + 1) as usize + ri;
                        let c = (c0 as i64 + 1) as usize + ci;
                        let o = (o0 as usize + oi) % DESC_BINS;
                        hist[idx(r, c, o)] += v * wr * wc * wo;
                    }
                }
            }
        }
    }
    let mut out = Vec::with_capacity(DESC_LEN);
    for r in 1..=DESC_WIDTH {
        for c in 1..=DESC_WIDTH {
            for o in 0..DESC_BINS {
                out.push(hist[idx(r, c, o)]);
            }
        }
    }
    normalize(&mut out);
    for v in &mut out {
        *v = v.min(0.2);
    }
    normalize(&mut out);
    out
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v {
            *x /= n;
        }
    }
}

/// Pixel window of the ROI inside `img`, rejected if under 16 px a side.
pub fn roi_window<S: Scalar>(img: &Image<S>, roi: &RoiBox) -> Result<PixelWindow> {
    let win = roi.window(img.width(), img.height());
    if win.width() < MIN_SIDE || win.height() < MIN_SIDE {
        return Err(Error::RoiTooSmall { width: win.width(), height: win.height(), min: MIN_SIDE });
    }
    Ok(win)
}

/// Detects keypoints inside `roi` and describes them. Positions are in the
/// ROI frame; output is ordered by response (descending), then y, then x.
pub fn detect_and_describe<S: Scalar>(img: &Image<S>, roi: &RoiBox, cfg: &SiftConfig) -> Result<Vec<Feature>> {
    if cfg.layers_per_octave < 3 {
        return Err(Error::invalid("layers_per_octave must be at least 3"));
    }
    let win = roi_window(img, roi)?;
    let crop = img.crop(win);
    let base = Plane {
        w: crop.width(),
        h: crop.height(),
        d: crop.data().iter().map(|v| v.to_f64_lossy() / 255.0).collect(),
    };
    // The input is assumed to carry a blur of 0.5 px already.
    let base = base.blurred((cfg.sigma * cfg.sigma - 0.25).sqrt());
    let octaves = build_scale_space(base, cfg);
    let s = cfg.layers_per_octave;
    let prefilter = 0.5 * cfg.contrast_threshold / s as f64;
    let (roi_w, roi_h) = (win.width() as f64, win.height() as f64);

    let mut features: Vec<Feature> = octaves
        .par_iter()
        .flat_map_iter(|oct| {
            let (w, h) = (oct.dog[0].w, oct.dog[0].h);
            let mut found = Vec::new();
            for l in 1..=s {
                for y in 1..h - 1 {
                    for x in 1..w - 1 {
                        if oct.dog[l].at(x, y).abs() > prefilter && is_extremum(&oct.dog, l, x, y) {
                            if let Some(e) = refine(&oct.dog, l, x, y, cfg) {
                                found.push(e);
                            }
                        }
                    }
                }
            }
            found.into_iter().flat_map(move |e| {
                let sigma = cfg.sigma * 2f64.powf(e.layer / s as f64);
                let g = &oct.gauss[(e.layer.round() as usize).clamp(1, s)];
                orientations(g, e.x, e.y, sigma).into_iter().map(move |ori| {
                    let v = describe(g, e.x, e.y, sigma, ori);
                    let kx = ((e.x + 0.5) * oct.step).clamp(0.0, roi_w);
                    let ky = ((e.y + 0.5) * oct.step).clamp(0.0, roi_h);
                    Feature {
                        keypoint: Keypoint { x: kx, y: ky, scale: sigma * oct.step, orientation: ori, response: e.response },
                        descriptor: Descriptor { v, sx: cfg.beta * kx / roi_w, sy: cfg.beta * ky / roi_h },
                    }
                })
            })
        })
        .collect();
    features.sort_by(|a, b| {
        let (ka, kb) = (&a.keypoint, &b.keypoint);
        kb.response
            .total_cmp(&ka.response)
            .then(ka.y.total_cmp(&kb.y))
            .then(ka.x.total_cmp(&kb.x))
            .then(ka.orientation.total_cmp(&kb.orientation))
    });
    Ok(features)
}

/// Ratio-test matches from `a` to `b`, made one-to-one greedily by
/// ascending distance and truncated to `cfg.max_matches`.
pub fn match_features(a: &[Feature], b: &[Feature], cfg: &SiftConfig) -> Vec<Match> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut good: Vec<Match> = a
        .par_iter()
        .enumerate()
        .filter_map(|(ia, fa)| {
            let mut best = (f64::INFINITY, usize::MAX);
            let mut second = f64::INFINITY;
            for (ib, fb) in b.iter().enumerate() {
                let d = fa.descriptor.distance(&fb.descriptor);
                if d < best.0 {
                    second = best.0;
                    best = (d, ib);
                } else if d < second {
                    second = d;
                }
            }
            let keep = b.len() == 1 || best.0 < cfg.ratio * second;
            keep.then_some(Match { index_a: ia, index_b: best.1, distance: best.0 })
        })
        .collect();
    good.sort_by(|m, n| m.distance.total_cmp(&n.distance).then(m.index_a.cmp(&n.index_a)));
    let mut used_b = vec![false; b.len()];
    let mut out = Vec::new();
    for m in good {
        if out.len() == cfg.max_matches {
            break;
        }
        if !used_b[m.index_b] {
            used_b[m.index_b] = true;
            out.push(m);
        }
    }
    out
}
