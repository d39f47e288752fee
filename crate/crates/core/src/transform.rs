//! Rigid 2D transforms (rotation about the origin followed by translation).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `p -> R(theta) p + (dx, dy)` with `R` a proper rotation.
///
/// Parameters are stored as `(theta, dx, dy)`; composition goes through the
/// 2x3 matrix form so angles never need wrapping by hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rigid<S> {
    pub theta: S,
    pub dx: S,
    pub dy: S,
}

impl<S: Scalar> Default for Rigid<S> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<S: Scalar> Rigid<S> {
    pub fn new(theta: S, dx: S, dy: S) -> Self {
        Self { theta, dx, dy }
    }

    pub fn identity() -> Self {
        Self { theta: S::zero(), dx: S::zero(), dy: S::zero() }
    }

    pub fn translation(dx: S, dy: S) -> Self {
        Self { theta: S::zero(), dx, dy }
    }

    /// Rotation by `theta` about `(cx, cy)` followed by a shift of `(dx, dy)`.
    pub fn about_center(theta: S, dx: S, dy: S, cx: S, cy: S) -> Self {
        let (s, c) = theta.sin_cos();
        Self { theta, dx: cx + dx - (c * cx - s * cy), dy: cy + dy - (s * cx + c * cy) }
    }

    /// Row-major `[[a, b, tx], [c, d, ty]]`.
    pub fn matrix(&self) -> [[S; 3]; 2] {
        let (s, c) = self.theta.sin_cos();
        [[c, -s, self.dx], [s, c, self.dy]]
    }

    /// Reads `theta` from the rotation block; any scale or shear is discarded.
    pub fn from_matrix(m: &[[S; 3]; 2]) -> Self {
        Self { theta: m[1][0].atan2(m[0][0]), dx: m[0][2], dy: m[1][2] }
    }

    #[inline]
    pub fn apply(&self, x: S, y: S) -> (S, S) {
        let (s, c) = self.theta.sin_cos();
        (c * x - s * y + self.dx, s * x + c * y + self.dy)
    }

    /// `self ∘ other`: the result applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        let a = self.matrix();
        let b = other.matrix();
        let m = [
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
                a[0][0] * b[0][2] + a[0][1] * b[1][2] + a[0][2],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
                a[1][0] * b[0][2] + a[1][1] * b[1][2] + a[1][2],
            ],
        ];
        Self::from_matrix(&m)
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.theta.sin_cos();
        Self { theta: -self.theta, dx: -(c * self.dx + s * self.dy), dy: -(-s * self.dx + c * self.dy) }
    }

    /// Re-expresses the transform in a frame whose coordinates are `factor`
    /// times larger: rotation is kept, translation is multiplied.
    pub fn scaled(&self, factor: S) -> Result<Self> {
        if !(factor > S::zero()) {
            return Err(Error::invalid(format!("scale factor must be positive, got {factor}")));
        }
        Ok(Self { theta: self.theta, dx: self.dx * factor, dy: self.dy * factor })
    }

    /// Largest absolute difference between the matrix entries of two transforms.
    pub fn max_entry_diff(&self, other: &Self) -> S {
        let a = self.matrix();
        let b = other.matrix();
        let mut worst = S::zero();
        for r in 0..2 {
            for c in 0..3 {
                worst = worst.max((a[r][c] - b[r][c]).abs());
            }
        }
        worst
    }

    pub fn cast<T: Scalar>(&self) -> Rigid<T> {
        Rigid {
            theta: T::lit(self.theta.to_f64_lossy()),
            dx: T::lit(self.dx.to_f64_lossy()),
            dy: T::lit(self.dy.to_f64_lossy()),
        }
    }
}

/// Free-function form of [`Rigid::compose`].
pub fn compose<S: Scalar>(a: &Rigid<S>, b: &Rigid<S>) -> Rigid<S> {
    a.compose(b)
}

/// Free-function form of [`Rigid::scaled`].
pub fn scale_transform<S: Scalar>(t: &Rigid<S>, factor: S) -> Result<Rigid<S>> {
    t.scaled(factor)
}
