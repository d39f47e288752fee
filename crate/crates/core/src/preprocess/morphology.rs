//! Binary morphology with a discrete disk `{(dx, dy) : dx² + dy² ≤ r²}`.
//!
//! Out-of-bounds positions are ignored by both operators, so erosion never
//! eats into the frame border and the pair forms an adjunction on masks of a
//! fixed size.

use crate::image::BinaryMask;

/// Half-width of the disk on row offset `dy`.
fn disk_half_widths(radius: usize) -> Vec<usize> {
    let r2 = (radius * radius) as i64;
    (0..=2 * radius)
        .map(|i| {
            let dy = i as i64 - radius as i64;
            let mut w = 0i64;
            while (w + 1) * (w + 1) + dy * dy <= r2 {
                w += 1;
            }
            w as usize
        })
        .collect()
}

pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let (w, h) = mask.dims();
    // prefix[y][x] = count of foreground pixels in row y with index < x
    let mut prefix = vec![0u32; (w + 1) * h];
    for y in 0..h {
        let p = &mut prefix[y * (w + 1)..(y + 1) * (w + 1)];
        for x in 0..w {
            p[x + 1] = p[x] + mask.get(x, y) as u32;
        }
    }
    let half = disk_half_widths(radius);
    let r = radius as isize;
    BinaryMask::from_fn(w, h, |x, y| {
        for (i, &hw) in half.iter().enumerate() {
            let sy = y as isize + i as isize - r;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            let lo = x.saturating_sub(hw);
            let hi = (x + hw + 1).min(w);
            let p = &prefix[sy as usize * (w + 1)..];
            if p[hi] > p[lo] {
                return true;
            }
        }
        false
    })
}

pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    dilate(&mask.complement(), radius).complement()
}

pub fn close(mask: &BinaryMask, radius: usize) -> BinaryMask {
    erode(&dilate(mask, radius), radius)
}

pub fn open(mask: &BinaryMask, radius: usize) -> BinaryMask {
    dilate(&erode(mask, radius), radius)
}

/// Closing followed by opening.
pub fn morph_close_open(mask: &BinaryMask, radius: usize) -> BinaryMask {
    open(&close(mask, radius), radius)
}
