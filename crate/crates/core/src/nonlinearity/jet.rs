//! Second-order forward jets.
//!
//! A [`Jet2`] carries `(g, g', g'')` of some expression with respect to the
//! independent variable. Arithmetic propagates the product and chain rules,
//! so evaluating an expression tree on the seed jet `(x, 1, 0)` yields the
//! exact first and second derivatives at `x`.

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jet2 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub const fn new(value: f64, d1: f64, d2: f64) -> Self {
        Self { value, d1, d2 }
    }

    pub const fn constant(c: f64) -> Self {
        Self::new(c, 0.0, 0.0)
    }

    /// The independent variable at `x`.
    pub const fn variable(x: f64) -> Self {
        Self::new(x, 1.0, 0.0)
    }

    /// Composes a scalar function with known `(g(a), g'(a), g''(a))` at
    /// `a = self.value`.
    pub fn compose(self, g0: f64, g1: f64, g2: f64) -> Self {
        Self {
            value: g0,
            d1: g1 * self.d1,
            d2: g2 * self.d1 * self.d1 + g1 * self.d2,
        }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.compose(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.compose(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.compose(e, e, e)
    }

    pub fn tanh(self) -> Self {
        let t = self.value.tanh();
        let sech2 = 1.0 - t * t;
        self.compose(t, sech2, -2.0 * t * sech2)
    }

    /// Natural logarithm; the caller guarantees a positive argument.
    pub fn ln(self) -> Self {
        let a = self.value;
        self.compose(a.ln(), 1.0 / a, -1.0 / (a * a))
    }

    /// Integer power by repeated squaring, so `x^0` is the constant one.
    pub fn powi(self, k: u32) -> Self {
        let mut base = self;
        let mut acc = Jet2::constant(1.0);
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            e >>= 1;
            if e > 0 {
                base = base * base;
            }
        }
        acc
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: Jet2) -> Jet2 {
        Jet2::new(self.value + rhs.value, self.d1 + rhs.d1, self.d2 + rhs.d2)
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        Jet2::new(self.value - rhs.value, self.d1 - rhs.d1, self.d2 - rhs.d2)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        Jet2::new(-self.value, -self.d1, -self.d2)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        Jet2::new(
            self.value * rhs.value,
            self.d1 * rhs.value + self.value * rhs.d1,
            self.d2 * rhs.value + 2.0 * self.d1 * rhs.d1 + self.value * rhs.d2,
        )
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    // a / b = a * (1/b) with 1/b composed through the chain rule.
    fn div(self, rhs: Jet2) -> Jet2 {
        let b = rhs.value;
        let inv = rhs.compose(1.0 / b, -1.0 / (b * b), 2.0 / (b * b * b));
        self * inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn product_rule() {
        let x = Jet2::variable(1.5);
        let y = x.sin() * x.exp();
        let (s, c, e) = (1.5f64.sin(), 1.5f64.cos(), 1.5f64.exp());
        assert!(close(y.value, s * e, 1e-15));
        assert!(close(y.d1, (c + s) * e, 1e-15));
        assert!(close(y.d2, 2.0 * c * e, 1e-14));
    }

    #[test]
    fn quotient_and_log() {
        let x = Jet2::variable(2.0);
        let y = Jet2::constant(1.0) / x;
        assert_eq!(y.value, 0.5);
        assert_eq!(y.d1, -0.25);
        assert_eq!(y.d2, 0.25);
        let l = x.ln();
        assert_eq!(l.d1, 0.5);
        assert_eq!(l.d2, -0.25);
    }

    #[test]
    fn powi_matches_repeated_product() {
        let x = Jet2::variable(-1.3);
        let p = x.powi(5);
        let q = x * x * x * x * x;
        assert!(close(p.value, q.value, 1e-14));
        assert!(close(p.d1, q.d1, 1e-14));
        assert!(close(p.d2, q.d2, 1e-14));
        assert_eq!(x.powi(0), Jet2::constant(1.0));
    }
}
