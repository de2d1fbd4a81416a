//! Second-order forward-mode dual numbers in three variables (x, y, t).
//!
//! A [`Dual2`] carries a value, its gradient and its Hessian, which is enough
//! to derive stresses, divergences and sources from closed-form displacement
//! and pressure fields.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar type the closed-form fields are written against.
pub trait Real:
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
    fn cst(v: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn powi(self, n: i32) -> Self;
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

pub const NVAR: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual2 {
    pub v: f64,
    pub g: [f64; NVAR],
    pub h: [[f64; NVAR]; NVAR],
}

impl Dual2 {
    pub fn constant(v: f64) -> Self {
        Self {
            v,
            g: [0.0; NVAR],
            h: [[0.0; NVAR]; NVAR],
        }
    }

    /// The independent variable with index `i`.
    pub fn var(v: f64, i: usize) -> Self {
        let mut d = Self::constant(v);
        d.g[i] = 1.0;
        d
    }

    /// `(x, y, t)` as independent variables.
    pub fn vars(x: f64, y: f64, t: f64) -> (Self, Self, Self) {
        (Self::var(x, 0), Self::var(y, 1), Self::var(t, 2))
    }

    /// Applies a scalar function with value `f0`, first derivative `f1` and
    /// second derivative `f2` at `self.v`.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut out = Self::constant(f0);
        for i in 0..NVAR {
            out.g[i] = f1 * self.g[i];
            for j in 0..NVAR {
                out.h[i][j] = f1 * self.h[i][j] + f2 * self.g[i] * self.g[j];
            }
        }
        out
    }

    fn recip(self) -> Self {
        let v = self.v;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }
}

impl Add for Dual2 {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for i in 0..NVAR {
            self.g[i] += o.g[i];
            for j in 0..NVAR {
                self.h[i][j] += o.h[i][j];
            }
        }
        self
    }
}

impl Sub for Dual2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Neg for Dual2 {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl Mul for Dual2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Self::constant(self.v * o.v);
        for i in 0..NVAR {
            out.g[i] = self.v * o.g[i] + o.v * self.g[i];
            for j in 0..NVAR {
                out.h[i][j] = self.v * o.h[i][j] + o.v * self.h[i][j] + self.g[i] * o.g[j] + o.g[i] * self.g[j];
            }
        }
        out
    }
}

impl Div for Dual2 {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl Add<f64> for Dual2 {
    type Output = Self;
    fn add(mut self, c: f64) -> Self {
        self.v += c;
        self
    }
}

impl Sub<f64> for Dual2 {
    type Output = Self;
    fn sub(mut self, c: f64) -> Self {
        self.v -= c;
        self
    }
}

impl Mul<f64> for Dual2 {
    type Output = Self;
    fn mul(mut self, c: f64) -> Self {
        self.v *= c;
        for i in 0..NVAR {
            self.g[i] *= c;
            for j in 0..NVAR {
                self.h[i][j] *= c;
            }
        }
        self
    }
}

impl Real for Dual2 {
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn powi(self, n: i32) -> Self {
        let v = self.v;
        let nf = f64::from(n);
        self.chain(v.powi(n), nf * v.powi(n - 1), nf * (nf - 1.0) * v.powi(n - 2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample<T: Real>(x: T, y: T, t: T) -> T {
        (x * y).sin() * t.exp() + (x - y).powi(3) / (y + 2.0) + (x * 3.0).cos()
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let (x0, y0, t0) = (0.3, -0.4, 0.7);
        let (x, y, t) = Dual2::vars(x0, y0, t0);
        let d = sample(x, y, t);
        assert!((d.v - sample(x0, y0, t0)).abs() < 1e-15);
        let h = 1e-5;
        let f = |p: [f64; 3]| sample(p[0], p[1], p[2]);
        let base = [x0, y0, t0];
        for i in 0..3 {
            let mut pp = base;
            let mut pm = base;
            pp[i] += h;
            pm[i] -= h;
            let fd = (f(pp) - f(pm)) / (2.0 * h);
            assert!((fd - d.g[i]).abs() < 1e-8);
            for j in 0..3 {
                let shift = |a: f64, b: f64| {
                    let mut p = base;
                    p[i] += a;
                    p[j] += b;
                    f(p)
                };
                let fd2 = (shift(h, h) - shift(h, -h) - shift(-h, h) + shift(-h, -h)) / (4.0 * h * h);
                assert!((fd2 - d.h[i][j]).abs() < 1e-4, "h[{i}][{j}]");
            }
        }
    }
}
