//! Real-number abstraction so the thermal equations can be evaluated on plain
//! `f64` or on forward-mode dual numbers.

use core::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;

    fn scale(self, k: f64) -> Self {
        self * Self::cst(k)
    }

    /// `max(self, 0)` with the derivative of the active branch.
    fn relu(self) -> Self {
        if self.value() > 0.0 {
            self
        } else {
            Self::cst(0.0)
        }
    }

    /// Clamp to `[0, 1]` with the derivative of the active branch.
    fn clamp01(self) -> Self {
        let v = self.value();
        if v <= 0.0 {
            Self::cst(0.0)
        } else if v >= 1.0 {
            Self::cst(1.0)
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        libm::exp(self)
    }
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
}

/// Euclidean remainder of `a` by a positive `b`.
pub fn rem_euclid(a: f64, b: f64) -> f64 {
    let r = a - b * libm::floor(a / b);
    if r >= b { r - b } else { r }
}
