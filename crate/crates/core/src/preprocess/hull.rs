//! Convex hull of integer points and rasterization of its interior.

use crate::image::BinaryMask;

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain. Collinear boundary points are dropped; the
/// result is counter-clockwise in `(x, y)` algebraic orientation.
pub fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Pixels whose index coordinates lie inside or on the hull polygon.
pub fn fill_hull(hull: &[(i64, i64)], width: usize, height: usize) -> BinaryMask {
    let mut mask = BinaryMask::empty(width, height);
    if hull.is_empty() {
        return mask;
    }
    let min_x = hull.iter().map(|p| p.0).min().unwrap().max(0);
    let max_x = hull.iter().map(|p| p.0).max().unwrap().min(width as i64 - 1);
    let min_y = hull.iter().map(|p| p.1).min().unwrap().max(0);
    let max_y = hull.iter().map(|p| p.1).max().unwrap().min(height as i64 - 1);
    let n = hull.len();
    for y in min_y..=max_y {
        let (mut lo, mut hi) = (min_x, max_x);
        // Each edge a->b keeps the half-plane cross(a, b, p) >= 0, which for a
        // fixed row is a bound on x.
        for i in 0..n {
            let a = hull[i];
            let b = hull[(i + 1) % n];
            if a == b {
                continue;
            }
            let ex = b.0 - a.0;
            let ey = b.1 - a.1;
            // ex*(y - ay) - ey*(x - ax) >= 0
            let c = ex * (y - a.1) + ey * a.0;
            if ey == 0 {
                if ex * (y - a.1) < 0 {
                    lo = 1;
                    hi = 0;
                }
            } else if ey > 0 {
                hi = hi.min(c.div_euclid(ey));
            } else {
                // c >= -|ey| x  ->  x >= ceil(-c / |ey|)
                lo = lo.max(-(c.div_euclid(-ey)));
            }
        }
        for x in lo..=hi {
            mask.set(x as usize, y as usize, true);
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inside_naive(hull: &[(i64, i64)], p: (i64, i64)) -> bool {
        match hull.len() {
            0 => false,
            1 => hull[0] == p,
            2 => {
                cross(hull[0], hull[1], p) == 0
                    && p.0 >= hull[0].0.min(hull[1].0)
                    && p.0 <= hull[0].0.max(hull[1].0)
                    && p.1 >= hull[0].1.min(hull[1].1)
                    && p.1 <= hull[0].1.max(hull[1].1)
            }
            n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0),
        }
    }

    #[test]
    fn square_hull() {
        let pts = vec![(0, 0), (4, 0), (4, 4), (0, 4), (2, 2), (2, 0)];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        let m = fill_hull(&h, 10, 10);
        assert_eq!(m.count(), 25);
    }

    #[test]
    fn degenerate_hulls() {
        let m = fill_hull(&convex_hull(&[(3, 3)]), 8, 8);
        assert_eq!(m.count(), 1);
        assert!(m.get(3, 3));
        let m = fill_hull(&convex_hull(&[(1, 1), (5, 1)]), 8, 8);
        assert_eq!(m.count(), 5);
    }

    proptest! {
        #[test]
        fn fill_matches_half_plane_test(pts in proptest::collection::vec((0i64..40, 0i64..30), 1..25)) {
            let hull = convex_hull(&pts);
            let m = fill_hull(&hull, 40, 30);
            for y in 0..30 {
                for x in 0..40 {
                    prop_assert_eq!(m.get(x as usize, y as usize), inside_naive(&hull, (x, y)), "({}, {})", x, y);
                }
            }
            for p in &pts {
                prop_assert!(m.get(p.0 as usize, p.1 as usize));
            }
        }
    }
}
