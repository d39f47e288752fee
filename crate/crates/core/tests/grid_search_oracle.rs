//! The grid search must return exactly the node a brute-force enumeration picks.

mod common;

use rand::Rng;
use slicereg::global_align::{grid_search_rigid, grid_search_rigid_detailed, grid_transform, AxisRange, SearchGrid};
use slicereg::warp::warp_image;
use slicereg::{GrayImage, Interpolation, Rigid};

/// Exhaustive minimum over the given node lists, ties broken by the smallest
/// |theta|, |dx|, |dy| and then by signed values.
fn enumerate(fixed: &GrayImage, moving: &GrayImage, nodes: [&[f64]; 3]) -> (f64, [f64; 3]) {
    let (w, h) = fixed.dims();
    let mut all = Vec::new();
    for &t in nodes[0] {
        for &dx in nodes[1] {
            for &dy in nodes[2] {
                let warped = warp_image(moving, &grid_transform::<f64>(t, dx, dy, (w, h)), Interpolation::Bilinear);
                all.push((common::naive_ssd(fixed, &warped, 0, 0, w, h), [t, dx, dy]));
            }
        }
    }
    let key = |p: &(f64, [f64; 3])| (p.0, p.1.map(f64::abs), p.1);
    all.into_iter().min_by(|a, b| key(a).partial_cmp(&key(b)).unwrap()).unwrap()
}

fn instance(seed: u64) -> (GrayImage, GrayImage) {
    let mut r = common::rng(1000 + seed);
    let fixed = common::blobs(64, 64, seed, 5.0);
    let truth = Rigid::about_center(r.random_range(-0.2..0.2), r.random_range(-6.0..6.0), r.random_range(-6.0..6.0), 32.0, 32.0);
    let mut moving = warp_image(&fixed, &truth.inverse(), Interpolation::Bilinear);
    for v in moving.data_mut() {
        *v += r.random_range(-4.0..4.0);
    }
    (fixed, moving)
}

fn grid(refine: usize) -> SearchGrid {
    SearchGrid {
        theta: AxisRange::symmetric(12f64.to_radians(), 3f64.to_radians()),
        dx: AxisRange::symmetric(8.0, 2.0),
        dy: AxisRange::symmetric(8.0, 2.0),
        refine_factor: refine,
    }
}

#[test]
fn single_pass_matches_enumeration_on_twenty_instances() {
    let g = grid(1);
    let nodes = g.coarse_nodes();
    for seed in 0..20 {
        let (fixed, moving) = instance(seed);
        let found = grid_search_rigid_detailed(&fixed, &moving, &g, &Rigid::identity(), Interpolation::Bilinear).unwrap();
        let (_, best) = enumerate(&fixed, &moving, [&nodes[0], &nodes[1], &nodes[2]]);
        assert_eq!([found.theta, found.dx, found.dy], best, "instance {seed}");
        let t = grid_search_rigid(&fixed, &moving, &g).unwrap();
        assert_eq!(t, grid_transform(best[0], best[1], best[2], (64, 64)));
    }
}

#[test]
fn refinement_matches_enumeration_around_the_coarse_winner() {
    let g = grid(4);
    let coarse = g.coarse_nodes();
    for seed in 0..5 {
        let (fixed, moving) = instance(seed);
        let found = grid_search_rigid_detailed(&fixed, &moving, &g, &Rigid::identity(), Interpolation::Bilinear).unwrap();
        let (_, c) = enumerate(&fixed, &moving, [&coarse[0], &coarse[1], &coarse[2]]);
        assert_eq!(found.coarse, (c[0], c[1], c[2]), "instance {seed}");
        let fine = |center: f64, n: usize, step: f64| -> Vec<f64> {
            let half = (n / 2) as i64;
            (-half..=half).map(|j| center + j as f64 * step / 4.0).collect()
        };
        let t = fine(c[0], coarse[0].len(), g.theta.step);
        let x = fine(c[1], coarse[1].len(), g.dx.step);
        let y = fine(c[2], coarse[2].len(), g.dy.step);
        let (_, best) = enumerate(&fixed, &moving, [&t, &x, &y]);
        assert_eq!([found.theta, found.dx, found.dy], best, "instance {seed}");
    }
}
