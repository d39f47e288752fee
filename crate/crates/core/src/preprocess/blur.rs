use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Normalized 1D Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel<S: Scalar>(sigma: S) -> Vec<S> {
    let radius = (S::lit(3.0) * sigma).ceil().to_usize().unwrap_or(0);
    let two_s2 = S::lit(2.0) * sigma * sigma;
    let mut k: Vec<S> = (0..=2 * radius)
        .map(|i| {
            let d = S::from_usize_lossy(i) - S::from_usize_lossy(radius);
            (-(d * d) / two_s2).exp()
        })
        .collect();
    let total: S = k.iter().copied().sum();
    for v in &mut k {
        *v /= total;
    }
    k
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur<S: Scalar>(img: &Image<S>, sigma: S) -> Result<Image<S>> {
    if !(sigma > S::zero()) {
        return Err(Error::invalid(format!("blur sigma must be positive, got {sigma}")));
    }
    let kernel = gaussian_kernel(sigma);
    Ok(convolve_separable(img, &kernel))
}

pub(crate) fn convolve_separable<S: Scalar>(img: &Image<S>, kernel: &[S]) -> Image<S> {
    let (w, h) = img.dims();
    let r = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![S::zero(); w * h];
    for y in 0..h {
        let row = img.row(y);
        let out = &mut tmp[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = S::zero();
            for (i, &k) in kernel.iter().enumerate() {
                acc += k * row[clamp(x as isize + i as isize - r, w)];
            }
            *o = acc;
        }
    }

    let mut data = vec![S::zero(); w * h];
    for (i, &k) in kernel.iter().enumerate() {
        for y in 0..h {
            let sy = clamp(y as isize + i as isize - r, h);
            let src = &tmp[sy * w..(sy + 1) * w];
            let dst = &mut data[y * w..(y + 1) * w];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }
    Image::new(w, h, data).expect("dimensions preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense 2D convolution with the outer-product kernel and clamped reads.
    fn dense_oracle(img: &Image<f64>, sigma: f64) -> Image<f64> {
        let radius = (3.0 * sigma).ceil() as isize;
        let mut k1: Vec<f64> =
            (-radius..=radius).map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp()).collect();
        let s: f64 = k1.iter().sum();
        k1.iter_mut().for_each(|v| *v /= s);
        let (w, h) = (img.width() as isize, img.height() as isize);
        Image::from_fn(img.width(), img.height(), |x, y| {
            let mut acc = 0.0;
            for j in -radius..=radius {
                for i in -radius..=radius {
                    let sx = (x as isize + i).clamp(0, w - 1) as usize;
                    let sy = (y as isize + j).clamp(0, h - 1) as usize;
                    acc += k1[(i + radius) as usize] * k1[(j + radius) as usize] * img.get(sx, sy);
                }
            }
            acc
        })
    }

    #[test]
    fn constant_is_preserved() {
        let img = Image::<f64>::filled(30, 20, 143.0);
        let out = gaussian_blur(&img, 10.0).unwrap();
        assert!(out.data().iter().all(|v| (v - 143.0).abs() < 1e-9));
    }

    #[test]
    fn impulse_center_is_product_of_kernel_centers() {
        let mut img = Image::<f64>::filled(41, 41, 0.0);
        img.set(20, 20, 1.0);
        let k = gaussian_kernel(2.5f64);
        let out = gaussian_blur(&img, 2.5).unwrap();
        let c = k[k.len() / 2];
        assert!((out.get(20, 20) - c * c).abs() < 1e-15);
        let dense = dense_oracle(&img, 2.5);
        assert!((out.get(20, 20) - dense.get(20, 20)).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = Image::<f64>::from_fn(64, 64, |_, _| rng.random_range(0.0..255.0));
        let fast = gaussian_blur(&img, 2.0).unwrap();
        let slow = dense_oracle(&img, 2.0);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_non_positive_sigma() {
        let img = Image::<f64>::filled(4, 4, 0.0);
        assert!(gaussian_blur(&img, 0.0).is_err());
        assert!(gaussian_blur(&img, -1.0).is_err());
    }
}
