//! Connected components and outer-boundary tracing.

use std::collections::VecDeque;

use crate::image::BinaryMask;

/// Outer boundary of one 8-connected foreground component.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    /// Boundary pixel indices in clockwise (screen) order; the last point
    /// connects back to the first.
    pub points: Vec<(i64, i64)>,
    /// Number of pixels in the component.
    pub area: f64,
    /// Mean pixel-center position of the component.
    pub centroid: (f64, f64),
}

// Clockwise on screen (y down), starting west.
const DIRS: [(i64, i64); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

fn dir_index(d: (i64, i64)) -> usize {
    DIRS.iter().position(|&v| v == d).expect("unit neighbor offset")
}

/// 8-connected labeling. Labels start at 1 in raster order of first pixel;
/// 0 is background. Returns the label raster and the component count.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, usize) {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for (dx, dy) in DIRS {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.bits()[j] && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    (labels, next as usize)
}

/// Moore-neighbor trace of the component containing `start`, which must be
/// its first pixel in raster order.
fn trace(labels: &[u32], w: usize, h: usize, label: u32, start: (i64, i64)) -> Vec<(i64, i64)> {
    let inside = |p: (i64, i64)| {
        p.0 >= 0 && p.1 >= 0 && p.0 < w as i64 && p.1 < h as i64 && labels[p.1 as usize * w + p.0 as usize] == label
    };
    // Finds the next boundary pixel clockwise from the backtrack direction.
    let step = |cur: (i64, i64), back: usize| -> Option<((i64, i64), usize)> {
        for i in 1..=8 {
            let d = (back + i) % 8;
            let n = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
            if inside(n) {
                let prev_d = (back + i - 1) % 8;
                let prev = (cur.0 + DIRS[prev_d].0, cur.1 + DIRS[prev_d].1);
                return Some((n, dir_index((prev.0 - n.0, prev.1 - n.1))));
            }
        }
        None
    };

    let mut points = vec![start];
    // The raster-first pixel always has background to its west.
    let Some((first, mut back)) = step(start, 0) else {
        return points;
    };
    let mut cur = first;
    let limit = 4 * w * h + 8;
    while points.len() < limit {
        if cur == start {
            match step(cur, back) {
                Some((n, _)) if n == first => break,
                _ => {}
            }
        }
        points.push(cur);
        let (n, b) = step(cur, back).expect("component pixel has a neighbor");
        cur = n;
        back = b;
    }
    points
}

/// One contour per 8-connected component. Components whose boundary has
/// fewer than three distinct points (one- and two-pixel specks) do not form
/// a closed curve and are skipped.
pub fn find_contours(mask: &BinaryMask) -> Vec<Contour> {
    let (w, h) = mask.dims();
    let (labels, n) = label_components(mask);
    let mut starts = vec![None; n];
    let mut area = vec![0usize; n];
    let mut sums = vec![(0.0f64, 0.0f64); n];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let k = l as usize - 1;
        let (x, y) = (i % w, i / w);
        if starts[k].is_none() {
            starts[k] = Some((x as i64, y as i64));
        }
        area[k] += 1;
        sums[k].0 += x as f64 + 0.5;
        sums[k].1 += y as f64 + 0.5;
    }
    (0..n)
        .filter_map(|k| {
            let points = trace(&labels, w, h, k as u32 + 1, starts[k]?);
            let mut distinct = points.clone();
            distinct.sort_unstable();
            distinct.dedup();
            if distinct.len() < 3 {
                return None;
            }
            let a = area[k] as f64;
            Some(Contour { points, area: a, centroid: (sums[k].0 / a, sums[k].1 / a) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn squares(rects: &[(usize, usize, usize, usize)], w: usize, h: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| rects.iter().any(|&(x0, y0, x1, y1)| x >= x0 && x < x1 && y >= y0 && y < y1))
    }

    #[test]
    fn empty_mask_has_no_contours() {
        assert!(find_contours(&BinaryMask::empty(10, 10)).is_empty());
    }

    #[test]
    fn filled_square() {
        let m = squares(&[(5, 7, 15, 17)], 30, 30);
        let c = find_contours(&m);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].area, 100.0);
        assert_eq!(c[0].centroid, (10.0, 12.0));
        // a 10x10 square has 36 boundary pixels, each visited once
        assert_eq!(c[0].points.len(), 36);
        assert!(c[0].points.iter().all(|&(x, y)| x == 5 || x == 14 || y == 7 || y == 16));
    }

    #[test]
    fn disjoint_squares_match_component_counts() {
        let m = squares(&[(1, 1, 6, 9), (10, 3, 22, 7)], 30, 12);
        let (labels, n) = label_components(&m);
        assert_eq!(n, 2);
        let counts: Vec<f64> =
            (1..=2).map(|l| labels.iter().filter(|&&v| v == l).count() as f64).collect();
        let c = find_contours(&m);
        assert_eq!(c.iter().map(|c| c.area).collect::<Vec<_>>(), counts);
    }

    #[test]
    fn diagonal_neighbors_connect() {
        let m = BinaryMask::from_fn(10, 10, |x, y| x == y);
        assert_eq!(label_components(&m).1, 1);
        let c = find_contours(&m);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].area, 10.0);
    }

    #[test]
    fn concave_shape_traces_every_boundary_pixel() {
        // U shape
        let m = squares(&[(2, 2, 4, 12), (4, 10, 10, 12), (10, 2, 12, 12)], 14, 14);
        let c = &find_contours(&m)[0];
        let mut pts = c.points.clone();
        pts.sort_unstable();
        pts.dedup();
        // boundary pixels: foreground with a 4-neighbor in the background
        let bg = |x: i64, y: i64| x < 0 || y < 0 || x >= 14 || y >= 14 || !m.get(x as usize, y as usize);
        let mut expect = vec![];
        for y in 0..14i64 {
            for x in 0..14i64 {
                if !bg(x, y) && (bg(x - 1, y) || bg(x + 1, y) || bg(x, y - 1) || bg(x, y + 1)) {
                    expect.push((x, y));
                }
            }
        }
        expect.sort_unstable();
        assert_eq!(pts, expect);
    }

    #[test]
    fn single_pixel_is_skipped() {
        let mut m = BinaryMask::empty(5, 5);
        m.set(2, 2, true);
        assert!(find_contours(&m).is_empty());
    }
}
