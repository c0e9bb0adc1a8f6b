//! Forward-mode automatic differentiation.
//!
//! [`Dual<N>`] carries a primal value and `N` tangent directions at once, so a
//! single pass through the model recursion yields up to `N` partial
//! derivatives. Code that should run on both plain floats and duals is written
//! against [`Scalar`].

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::special::{digamma, ln_gamma};

/// Arithmetic needed by the likelihood recursion.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn constant(value: f64) -> Self;

    fn value(&self) -> f64;

    /// Applies a unary function whose value at `self` is `value` and whose
    /// derivative there is `slope`.
    fn chain(self, value: f64, slope: f64) -> Self;

    fn ln(self) -> Self {
        let v = self.value();
        self.chain(v.ln(), 1.0 / v)
    }

    fn exp(self) -> Self {
        let e = self.value().exp();
        self.chain(e, e)
    }

    fn ln_gamma(self) -> Self {
        let v = self.value();
        self.chain(ln_gamma(v), digamma(v))
    }
}

impl Scalar for f64 {
    #[inline]
    fn constant(value: f64) -> Self {
        value
    }

    #[inline]
    fn value(&self) -> f64 {
        *self
    }

    #[inline]
    fn chain(self, value: f64, _slope: f64) -> Self {
        value
    }

    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }

    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }

    #[inline]
    fn ln_gamma(self) -> Self {
        ln_gamma(self)
    }
}

/// A value with `N` simultaneous tangents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub re: f64,
    pub eps: [f64; N],
}

impl<const N: usize> Dual<N> {
    /// Independent variable seeded along tangent direction `slot`.
    pub fn variable(re: f64, slot: usize) -> Self {
        let mut eps = [0.0; N];
        eps[slot] = 1.0;
        Self { re, eps }
    }

    #[inline]
    fn map_eps(self, f: impl Fn(f64) -> f64) -> [f64; N] {
        let mut out = self.eps;
        for e in out.iter_mut() {
            *e = f(*e);
        }
        out
    }
}

impl<const N: usize> Scalar for Dual<N> {
    #[inline]
    fn constant(value: f64) -> Self {
        Self { re: value, eps: [0.0; N] }
    }

    #[inline]
    fn value(&self) -> f64 {
        self.re
    }

    #[inline]
    fn chain(self, value: f64, slope: f64) -> Self {
        Self { re: value, eps: self.map_eps(|e| e * slope) }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (a, b) in eps.iter_mut().zip(rhs.eps) {
            *a += b;
        }
        Self { re: self.re + rhs.re, eps }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (a, b) in eps.iter_mut().zip(rhs.eps) {
            *a -= b;
        }
        Self { re: self.re - rhs.re, eps }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; N];
        for i in 0..N {
            eps[i] = self.eps[i] * rhs.re + rhs.eps[i] * self.re;
        }
        Self { re: self.re * rhs.re, eps }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        let re = self.re * inv;
        let mut eps = [0.0; N];
        for i in 0..N {
            eps[i] = (self.eps[i] - re * rhs.eps[i]) * inv;
        }
        Self { re, eps }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self { re: -self.re, eps: self.map_eps(|e| -e) }
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        Self { re: self.re + rhs, eps: self.eps }
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        Self { re: self.re - rhs, eps: self.eps }
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        Self { re: self.re * rhs, eps: self.map_eps(|e| e * rhs) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly<T: Scalar>(x: T, y: T) -> T {
        // x^2 y + ln(x) / y - exp(y)
        x * x * y + x.ln() / y - y.exp()
    }

    #[test]
    fn partials_of_a_small_expression() {
        let x = Dual::<2>::variable(1.5, 0);
        let y = Dual::<2>::variable(0.7, 1);
        let f = poly(x, y);
        assert!((f.re - poly(1.5, 0.7)).abs() < 1e-15);
        let dx = 2.0 * 1.5 * 0.7 + 1.0 / (1.5 * 0.7);
        let dy = 1.5 * 1.5 - 1.5f64.ln() / (0.7 * 0.7) - 0.7f64.exp();
        assert!((f.eps[0] - dx).abs() < 1e-14);
        assert!((f.eps[1] - dy).abs() < 1e-14);
    }

    #[test]
    fn ln_gamma_tangent_is_digamma() {
        let x = Dual::<1>::variable(3.2, 0);
        let g = x.ln_gamma();
        assert!((g.eps[0] - digamma(3.2)).abs() < 1e-15);
    }
}
