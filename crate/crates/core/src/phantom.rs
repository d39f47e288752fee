//! Synthetic serial-section stacks with known rigid perturbations and lumen
//! masks.
//!
//! Each slice shows an elliptical tissue section on glass: band-limited
//! texture, scattered nuclei, one vessel (pale lumen, brown endothelial wall,
//! red muscle ring) that drifts slowly through the stack, a few patches that
//! are deformed and torn differently on every slice, and stain blobs off the
//! tissue. The whole slice is then moved by a random rigid transform about
//! the image center.

use ::image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::global_align::SearchGrid;
use crate::image::BinaryMask;
use crate::roi::RoiBox;
use crate::transform::Rigid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VesselSpec {
    /// Lumen center on slice 0, before perturbation.
    pub cx: f64,
    pub cy: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Orientation of the major axis, radians.
    pub angle: f64,
    /// Endothelial (brown) ring thickness.
    pub wall: f64,
    /// Smooth-muscle (red) ring thickness outside the wall.
    pub muscle: f64,
    /// Center displacement per slice.
    pub drift: [f64; 2],
}

impl Default for VesselSpec {
    fn default() -> Self {
        Self {
            cx: 300.0,
            cy: 330.0,
            semi_major: 100.0,
            semi_minor: 80.0,
            angle: 0.4,
            wall: 12.0,
            muscle: 8.0,
            drift: [0.8, 0.6],
        }
    }
}

impl VesselSpec {
    fn center(&self, slice: usize) -> (f64, f64) {
        (self.cx + self.drift[0] * slice as f64, self.cy + self.drift[1] * slice as f64)
    }

    /// Outer semi-axes including both rings.
    fn outer_extent(&self) -> f64 {
        self.semi_major + self.wall + self.muscle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextureSpec {
    /// Relative intensity modulation of the tissue.
    pub amplitude: f64,
    /// Correlation length of the coarse noise, pixels.
    pub correlation: f64,
    /// Nuclei per 10 000 tissue pixels.
    pub nuclei_density: f64,
    /// Fraction of nuclei re-drawn independently on each slice.
    pub nuclei_turnover: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self { amplitude: 0.12, correlation: 24.0, nuclei_density: 6.0, nuclei_turnover: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistractorSpec {
    pub count: usize,
    pub radius: f64,
    /// Peak local displacement inside a patch, pixels.
    pub displacement: f64,
    /// Tears (erased strips) per patch and slice.
    pub tears: usize,
    /// Chance per patch and slice of a missing chunk of tissue.
    pub loss: f64,
    /// Radius range of a missing chunk, as fractions of `radius`.
    pub loss_radius: [f64; 2],
}

impl Default for DistractorSpec {
    fn default() -> Self {
        Self { count: 3, radius: 80.0, displacement: 25.0, tears: 2, loss: 0.5, loss_radius: [0.4, 1.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationSpec {
    pub theta_max_deg: f64,
    pub shift_max: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self { theta_max_deg: 10.0, shift_max: 40.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub slices: usize,
    pub width: usize,
    pub height: usize,
    /// Tissue ellipse semi-axes, centered in the frame.
    pub tissue_radii: [f64; 2],
    pub vessel: VesselSpec,
    pub texture: TextureSpec,
    pub distractors: DistractorSpec,
    pub perturbation: PerturbationSpec,
    pub artifact_stains: usize,
    /// Per-pixel Gaussian noise on every channel.
    pub noise_std: f64,
    /// Per-slice multiplicative brightness jitter (uniform ±).
    pub gain_jitter: f64,
    /// Side of the square ROI around the vessel.
    pub roi_size: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            slices: 20,
            width: 1024,
            height: 1024,
            tissue_radii: [470.0, 440.0],
            vessel: VesselSpec::default(),
            texture: TextureSpec::default(),
            distractors: DistractorSpec::default(),
            perturbation: PerturbationSpec::default(),
            artifact_stains: 4,
            noise_std: 3.0,
            gain_jitter: 0.04,
            roi_size: 360.0,
            seed: 7,
        }
    }
}

impl PhantomSpec {
    /// A small, quick variant used by tests and examples.
    pub fn small(slices: usize, seed: u64) -> Self {
        Self {
            slices,
            width: 256,
            height: 256,
            tissue_radii: [118.0, 110.0],
            vessel: VesselSpec {
                cx: 90.0,
                cy: 92.0,
                semi_major: 18.0,
                semi_minor: 14.0,
                wall: 3.0,
                muscle: 2.0,
                drift: [0.15, 0.1],
                ..VesselSpec::default()
            },
            texture: TextureSpec { correlation: 8.0, ..TextureSpec::default() },
            distractors: DistractorSpec { count: 1, radius: 20.0, displacement: 6.0, tears: 1, loss: 0.5, loss_radius: [0.4, 1.0] },
            perturbation: PerturbationSpec { theta_max_deg: 10.0, shift_max: 10.0 },
            artifact_stains: 2,
            roi_size: 80.0,
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.slices == 0 || self.width < 32 || self.height < 32 {
            return bad("need at least one slice of at least 32x32 pixels".into());
        }
        let v = &self.vessel;
        if !(v.semi_minor > 0.0 && v.semi_major >= v.semi_minor && v.wall >= 0.0 && v.muscle >= 0.0) {
            return bad("vessel axes must satisfy semi_major >= semi_minor > 0".into());
        }
        let grid = SearchGrid::default_for(self.width.min(self.height));
        let p = &self.perturbation;
        // Consecutive slices may be perturbed in opposite directions.
        if 2.0 * p.theta_max_deg.to_radians() > grid.theta.max + 1e-12 || 2.0 * p.shift_max > grid.dx.max {
            return bad(format!(
                "perturbations (theta {}°, shift {}) exceed the default search grid",
                p.theta_max_deg, p.shift_max
            ));
        }
        if p.theta_max_deg < 0.0 || p.shift_max < 0.0 {
            return bad("perturbation bounds must be non-negative".into());
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.texture.nuclei_turnover) || !unit.contains(&self.distractors.loss) {
            return bad("turnover and loss are probabilities in [0, 1]".into());
        }
        let [lo, hi] = self.distractors.loss_radius;
        if !(0.0 <= lo && lo <= hi) {
            return bad("loss_radius must be an increasing pair of non-negative fractions".into());
        }
        if self.noise_std < 0.0 || self.gain_jitter < 0.0 {
            return bad("noise and gain jitter must be non-negative".into());
        }
        Ok(())
    }
}

/// Generated stack with its ground truth.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub slices: Vec<RgbImage>,
    pub masks: Vec<BinaryMask>,
    /// `truth[i]` moves slice `i`'s unperturbed content into the slice.
    pub truth: Vec<Rigid<f64>>,
    /// ROI around the vessel in slice 0's frame.
    pub roi: RoiBox,
    /// Distractor centers and radius in the unperturbed frame.
    pub distractors: Vec<(f64, f64)>,
}

type Rgbf = [f64; 3];

const GLASS: Rgbf = [248.0, 248.0, 246.0];
const TISSUE: Rgbf = [205.0, 190.0, 212.0];
const NUCLEUS: Rgbf = [85.0, 80.0, 135.0];
const LUMEN: Rgbf = [242.0, 236.0, 236.0];
const WALL: Rgbf = [125.0, 82.0, 45.0];
const MUSCLE: Rgbf = [192.0, 70.0, 72.0];
const STAIN: Rgbf = [70.0, 55.0, 60.0];

fn mix(a: Rgbf, b: Rgbf, t: f64) -> Rgbf {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

/// Smooth value noise: random lattice values, smoothstep-interpolated.
struct ValueNoise {
    cell: f64,
    nx: usize,
    values: Vec<f64>,
}

impl ValueNoise {
    fn new(w: usize, h: usize, cell: f64, rng: &mut ChaCha8Rng) -> Self {
        let nx = (w as f64 / cell).ceil() as usize + 2;
        let ny = (h as f64 / cell).ceil() as usize + 2;
        let values = (0..nx * ny).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { cell, nx, values }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let (u, v) = ((x / self.cell).max(0.0), (y / self.cell).max(0.0));
        let ny = self.values.len() / self.nx;
        let (i, j) = ((u as usize).min(self.nx - 2), (v as usize).min(ny - 2));
        let s = |t: f64| t * t * (3.0 - 2.0 * t);
        let (fx, fy) = (s((u - i as f64).min(1.0)), s((v - j as f64).min(1.0)));
        let g = |a: usize, b: usize| self.values[b * self.nx + a];
        let top = g(i, j) * (1.0 - fx) + g(i + 1, j) * fx;
        let bottom = g(i, j + 1) * (1.0 - fx) + g(i + 1, j + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

struct Nucleus {
    x: f64,
    y: f64,
    r: f64,
    strength: f64,
}

/// Per-slice deformation of one distractor patch.
struct PatchWarp {
    cx: f64,
    cy: f64,
    radius: f64,
    shift: (f64, f64),
    twist: f64,
    tears: Vec<(f64, f64, f64, f64, f64)>, // x0, y0, x1, y1, half-width
    hole: Option<(f64, f64, f64)>,
}

impl PatchWarp {
    /// Pull-back position for `q` and whether `q` falls into a tear.
    fn pull(&self, x: f64, y: f64) -> Option<(f64, f64, bool)> {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let r2 = dx * dx + dy * dy;
        if r2 >= self.radius * self.radius {
            return None;
        }
        let w = {
            let t = 1.0 - r2 / (self.radius * self.radius);
            t * t
        };
        let a = self.twist * w;
        let (s, c) = a.sin_cos();
        let px = self.cx + c * dx + s * dy - self.shift.0 * w;
        let py = self.cy - s * dx + c * dy - self.shift.1 * w;
        let torn = self.tears.iter().any(|&(x0, y0, x1, y1, hw)| {
            let (vx, vy) = (x1 - x0, y1 - y0);
            let t = (((x - x0) * vx + (y - y0) * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
            let (ex, ey) = (x0 + t * vx - x, y0 + t * vy - y);
            ex * ex + ey * ey < hw * hw
        }) || self.hole.is_some_and(|(hx, hy, hr)| (x - hx).hypot(y - hy) < hr);
        Some((px, py, torn))
    }
}

struct Scene<'a> {
    spec: &'a PhantomSpec,
    coarse: ValueNoise,
    fine: ValueNoise,
    boundary: Vec<(f64, f64)>, // harmonic amplitudes/phases of the tissue outline
    stains: Vec<(f64, f64, f64)>,
}

impl Scene<'_> {
    fn in_tissue(&self, x: f64, y: f64) -> bool {
        let (cx, cy) = (self.spec.width as f64 / 2.0, self.spec.height as f64 / 2.0);
        let [a, b] = self.spec.tissue_radii;
        let (dx, dy) = ((x - cx) / a, (y - cy) / b);
        let phi = dy.atan2(dx);
        let wobble: f64 = self.boundary.iter().enumerate().map(|(k, &(amp, ph))| amp * ((k + 2) as f64 * phi + ph).sin()).sum();
        dx * dx + dy * dy < (1.0 + wobble).powi(2)
    }

    fn tissue_color(&self, x: f64, y: f64) -> Rgbf {
        let t = self.spec.texture.amplitude * (self.coarse.at(x, y) + 0.5 * self.fine.at(x, y));
        TISSUE.map(|c| c * (1.0 + t))
    }
}

fn ellipse_rho(v: &VesselSpec, center: (f64, f64), x: f64, y: f64, grow: f64) -> f64 {
    let (s, c) = v.angle.sin_cos();
    let (dx, dy) = (x - center.0, y - center.1);
    let (u, w) = (c * dx + s * dy, -s * dx + c * dy);
    (u / (v.semi_major + grow)).powi(2) + (w / (v.semi_minor + grow)).powi(2)
}

/// Unperturbed content of slice `i` at continuous position `(x, y)`.
fn content(scene: &Scene, nuclei: &[Nucleus], grid: &NucleusGrid, center: (f64, f64), x: f64, y: f64) -> Rgbf {
    let v = &scene.spec.vessel;
    if ellipse_rho(v, center, x, y, 0.0) < 1.0 {
        return LUMEN;
    }
    if ellipse_rho(v, center, x, y, v.wall) < 1.0 {
        return mix(WALL, scene.tissue_color(x, y), 0.15);
    }
    if ellipse_rho(v, center, x, y, v.wall + v.muscle) < 1.0 {
        return mix(MUSCLE, scene.tissue_color(x, y), 0.15);
    }
    if !scene.in_tissue(x, y) {
        for &(sx, sy, r) in &scene.stains {
            if (x - sx).powi(2) + (y - sy).powi(2) < r * r {
                return STAIN;
            }
        }
        return GLASS;
    }
    let mut col = scene.tissue_color(x, y);
    for &n in grid.near(x, y) {
        let nu = &nuclei[n];
        let d2 = (x - nu.x).powi(2) + (y - nu.y).powi(2);
        if d2 < 9.0 * nu.r * nu.r {
            col = mix(col, NUCLEUS, nu.strength * (-d2 / (2.0 * nu.r * nu.r)).exp());
        }
    }
    col
}

/// Bucket grid for nucleus lookup.
struct NucleusGrid {
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
    empty: Vec<usize>,
}

impl NucleusGrid {
    fn new(nuclei: &[Nucleus], w: usize, h: usize, cell: f64) -> Self {
        let nx = (w as f64 / cell).ceil() as usize + 1;
        let ny = (h as f64 / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for (i, n) in nuclei.iter().enumerate() {
            let r = 3.0 * n.r;
            let (x0, x1) = (((n.x - r) / cell).floor().max(0.0) as usize, ((n.x + r) / cell).floor().max(0.0) as usize);
            let (y0, y1) = (((n.y - r) / cell).floor().max(0.0) as usize, ((n.y + r) / cell).floor().max(0.0) as usize);
            for by in y0..=y1.min(ny - 1) {
                for bx in x0..=x1.min(nx - 1) {
                    buckets[by * nx + bx].push(i);
                }
            }
        }
        Self { cell, nx, ny, buckets, empty: Vec::new() }
    }

    fn near(&self, x: f64, y: f64) -> &[usize] {
        if x < 0.0 || y < 0.0 {
            return &self.empty;
        }
        let (bx, by) = ((x / self.cell) as usize, (y / self.cell) as usize);
        if bx >= self.nx || by >= self.ny {
            return &self.empty;
        }
        &self.buckets[by * self.nx + bx]
    }
}

fn slice_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Places distractor centers inside the tissue, far from the vessel path.
fn place_distractors(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Result<Vec<(f64, f64)>> {
    let d = &spec.distractors;
    let v = &spec.vessel;
    // Keep a gap of twice the vessel's major axis between vessel and patch.
    let clearance = v.outer_extent() + 2.0 * (2.0 * v.semi_major) + d.radius;
    let (cx, cy) = (spec.width as f64 / 2.0, spec.height as f64 / 2.0);
    let [a, b] = spec.tissue_radii;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for _ in 0..20_000 {
        if out.len() == d.count {
            break;
        }
        let (px, py) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let (x, y) = (cx + px * (a - d.radius), cy + py * (b - d.radius));
        if ((x - cx) / (a - d.radius)).powi(2) + ((y - cy) / (b - d.radius)).powi(2) > 1.0 {
            continue;
        }
        let far = (0..spec.slices).all(|i| {
            let (vx, vy) = v.center(i);
            (x - vx).hypot(y - vy) >= clearance
        });
        let apart = out.iter().all(|&(ox, oy)| (x - ox).hypot(y - oy) >= 2.0 * d.radius);
        if far && apart {
            out.push((x, y));
        }
    }
    if out.len() < d.count {
        return Err(Error::InvalidSpec(format!(
            "could only place {} of {} distractors at least {clearance:.0} px from the vessel",
            out.len(),
            d.count
        )));
    }
    Ok(out)
}

/// Generates the stack. Deterministic for a given spec.
pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = slice_rng(spec.seed, 0);
    let coarse = ValueNoise::new(w, h, spec.texture.correlation, &mut rng);
    let fine = ValueNoise::new(w, h, (spec.texture.correlation / 4.0).max(1.0), &mut rng);
    let boundary = (0..4).map(|k| (rng.random_range(0.0..0.03) / (k + 1) as f64, rng.random_range(0.0..6.3))).collect();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let [ta, tb] = spec.tissue_radii;
    let mut stains = Vec::new();
    while stains.len() < spec.artifact_stains {
        let (x, y) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
        let r = rng.random_range(0.01..0.03) * w as f64;
        if ((x - cx) / (ta + r)).powi(2) + ((y - cy) / (tb + r)).powi(2) > 1.1 {
            stains.push((x, y, r));
        }
    }
    let scene = Scene { spec, coarse, fine, boundary, stains };
    let distractors = place_distractors(spec, &mut rng)?;

    let tissue_area = std::f64::consts::PI * ta * tb;
    let n_nuclei = (spec.texture.nuclei_density * tissue_area / 10_000.0) as usize;
    let draw_nucleus = |rng: &mut ChaCha8Rng| loop {
        let (x, y) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
        if scene.in_tissue(x, y) {
            return Nucleus { x, y, r: rng.random_range(1.8..3.6), strength: rng.random_range(0.5..0.9) };
        }
    };
    let shared: Vec<Nucleus> = (0..n_nuclei).map(|_| draw_nucleus(&mut rng)).collect();

    let p = &spec.perturbation;
    let theta_max = p.theta_max_deg.to_radians();
    let truth: Vec<Rigid<f64>> = (0..spec.slices)
        .map(|i| {
            let mut r = slice_rng(spec.seed, 1_000_000 + i as u64);
            let theta = if theta_max > 0.0 { r.random_range(-theta_max..=theta_max) } else { 0.0 };
            let (dx, dy) = if p.shift_max > 0.0 {
                (r.random_range(-p.shift_max..=p.shift_max), r.random_range(-p.shift_max..=p.shift_max))
            } else {
                (0.0, 0.0)
            };
            Rigid::about_center(theta, dx, dy, cx, cy)
        })
        .collect();

    let rendered: Vec<(RgbImage, BinaryMask)> = (0..spec.slices)
        .into_par_iter()
        .map(|i| render_slice(spec, &scene, &shared, &distractors, &truth[i], i, &draw_nucleus))
        .collect();
    let (slices, masks) = rendered.into_iter().unzip();

    let (vx, vy) = truth[0].apply(spec.vessel.cx, spec.vessel.cy);
    let roi = RoiBox::new(vx, vy, spec.roi_size, spec.roi_size).clipped(w, h);
    Ok(Phantom { slices, masks, truth, roi, distractors })
}

fn render_slice(
    spec: &PhantomSpec,
    scene: &Scene,
    shared: &[Nucleus],
    distractors: &[(f64, f64)],
    truth: &Rigid<f64>,
    i: usize,
    draw_nucleus: &(dyn Fn(&mut ChaCha8Rng) -> Nucleus + Sync),
) -> (RgbImage, BinaryMask) {
    let (w, h) = (spec.width, spec.height);
    let mut rng = slice_rng(spec.seed, 1 + i as u64);
    let nuclei: Vec<Nucleus> = shared
        .iter()
        .map(|n| {
            if rng.random::<f64>() < spec.texture.nuclei_turnover {
                draw_nucleus(&mut rng)
            } else {
                Nucleus { ..*n }
            }
        })
        .collect();
    let grid = NucleusGrid::new(&nuclei, w, h, 16.0);
    let d = &spec.distractors;
    let patches: Vec<PatchWarp> = distractors
        .iter()
        .map(|&(px, py)| {
            let ang = rng.random_range(0.0..std::f64::consts::TAU);
            let mag = rng.random_range(0.5..1.0) * d.displacement;
            let tears = (0..d.tears)
                .map(|_| {
                    let a = rng.random_range(0.0..std::f64::consts::TAU);
                    let off = rng.random_range(0.0..0.6) * d.radius;
                    let (ox, oy) = (px + off * a.cos(), py + off * a.sin());
                    let b = rng.random_range(0.0..std::f64::consts::TAU);
                    let len = rng.random_range(0.3..0.7) * d.radius;
                    (ox, oy, ox + len * b.cos(), oy + len * b.sin(), rng.random_range(1.5..0.08 * d.radius + 2.0))
                })
                .collect();
            let hole = (rng.random::<f64>() < d.loss).then(|| {
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                let off = rng.random_range(0.0..0.3) * d.radius;
                let [lo, hi] = d.loss_radius;
                (px + off * a.cos(), py + off * a.sin(), rng.random_range(lo..=hi) * d.radius)
            });
            PatchWarp {
                cx: px,
                cy: py,
                radius: d.radius,
                shift: (mag * ang.cos(), mag * ang.sin()),
                twist: rng.random_range(-0.35..0.35),
                tears,
                hole,
            }
        })
        .collect();
    let gain = 1.0 + if spec.gain_jitter > 0.0 { rng.random_range(-spec.gain_jitter..spec.gain_jitter) } else { 0.0 };
    let center = spec.vessel.center(i);
    let inv = truth.inverse();

    let mut img = RgbImage::new(w as u32, h as u32);
    let mut mask = BinaryMask::empty(w, h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = inv.apply(x as f64 + 0.5, y as f64 + 0.5);
            mask.set(x, y, ellipse_rho(&spec.vessel, center, u, v, 0.0) < 1.0);
            let mut col = None;
            for p in &patches {
                if let Some((pu, pv, torn)) = p.pull(u, v) {
                    col = Some(if torn { GLASS } else { content(scene, &nuclei, &grid, center, pu, pv) });
                    break;
                }
            }
            let col = col.unwrap_or_else(|| content(scene, &nuclei, &grid, center, u, v));
            img.put_pixel(x as u32, y as u32, Rgb(col.map(|c| (c * gain).round().clamp(0.0, 255.0) as u8)));
        }
    }
    if spec.noise_std > 0.0 {
        let normal = Normal::new(0.0, spec.noise_std).expect("finite std");
        for px in img.pixels_mut() {
            for c in &mut px.0 {
                *c = (*c as f64 + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    (img, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{similarity_index, warp_mask};

    #[test]
    fn quiet_stack_has_identical_slices() {
        let spec = PhantomSpec {
            perturbation: PerturbationSpec { theta_max_deg: 0.0, shift_max: 0.0 },
            distractors: DistractorSpec { count: 0, ..DistractorSpec::default() },
            vessel: VesselSpec { drift: [0.0, 0.0], ..PhantomSpec::small(3, 1).vessel },
            texture: TextureSpec { nuclei_turnover: 0.0, ..PhantomSpec::small(3, 1).texture },
            noise_std: 0.0,
            gain_jitter: 0.0,
            ..PhantomSpec::small(3, 1)
        };
        let ph = generate(&spec).unwrap();
        assert!(ph.slices.windows(2).all(|s| s[0] == s[1]));
        assert!(ph.truth.iter().all(|t| t.max_entry_diff(&Rigid::identity()) < 1e-12));
    }

    #[test]
    fn seeded_generation_is_repeatable() {
        let spec = PhantomSpec::small(3, 11);
        let (a, b) = (generate(&spec).unwrap(), generate(&spec).unwrap());
        assert_eq!(a.slices, b.slices);
        assert_eq!(a.masks, b.masks);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn ground_truth_is_self_consistent() {
        let ph = generate(&PhantomSpec { slices: 3, ..PhantomSpec::default() }).unwrap();
        let back: Vec<_> = ph.masks.iter().zip(&ph.truth).map(|(m, t)| warp_mask(m, &t.inverse())).collect();
        for pair in back.windows(2) {
            let s = similarity_index(&pair[0], &pair[1]).unwrap();
            assert!(s >= 0.98, "{s}");
        }
    }

    #[test]
    fn distractors_stay_clear_of_the_roi() {
        let spec = PhantomSpec::small(5, 4);
        let ph = generate(&spec).unwrap();
        let v = &spec.vessel;
        let half = spec.roi_size / 2.0;
        for &(x, y) in &ph.distractors {
            for i in 0..spec.slices {
                let (vx, vy) = v.center(i);
                // nearest point of the axis-aligned ROI box to the patch center
                let nx = x.clamp(vx - half, vx + half);
                let ny = y.clamp(vy - half, vy + half);
                assert!((x - nx).hypot(y - ny) > spec.distractors.radius);
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let too_wild = PhantomSpec { perturbation: PerturbationSpec { theta_max_deg: 20.0, shift_max: 5.0 }, ..PhantomSpec::small(2, 0) };
        assert!(matches!(generate(&too_wild), Err(Error::InvalidSpec(_))));
        let crowded = PhantomSpec { distractors: DistractorSpec { count: 40, ..PhantomSpec::small(2, 0).distractors }, ..PhantomSpec::small(2, 0) };
        assert!(matches!(generate(&crowded), Err(Error::InvalidSpec(_))));
    }
}
