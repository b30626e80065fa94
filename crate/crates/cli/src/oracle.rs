//! Independent derivatives of the manufactured solution.
//!
//! The closed forms are re-entered here as plain expressions over
//! hyper-dual numbers, which give exact first and second derivatives, so the
//! hand-derived source terms of the library can be checked without finite
//! differences.

use std::ops::{Add, Mul, Sub};

/// `v + a e1 + b e2 + ab e1 e2` with `e1^2 = e2^2 = 0`.
#[derive(Clone, Copy, Debug)]
pub struct HyperDual {
    pub v: f64,
    pub a: f64,
    pub b: f64,
    pub ab: f64,
}

impl HyperDual {
    pub fn constant(v: f64) -> Self {
        HyperDual { v, a: 0.0, b: 0.0, ab: 0.0 }
    }

    pub fn seed(v: f64, a: f64, b: f64) -> Self {
        HyperDual { v, a, b, ab: 0.0 }
    }

    fn apply(self, f: f64, df: f64, d2f: f64) -> Self {
        HyperDual { v: f, a: df * self.a, b: df * self.b, ab: df * self.ab + d2f * self.a * self.b }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.apply(e, e, e)
    }

    pub fn sinh(self) -> Self {
        self.apply(self.v.sinh(), self.v.cosh(), self.v.sinh())
    }

    pub fn ln(self) -> Self {
        self.apply(self.v.ln(), 1.0 / self.v, -1.0 / (self.v * self.v))
    }

    pub fn atan(self) -> Self {
        let d = 1.0 / (1.0 + self.v * self.v);
        self.apply(self.v.atan(), d, -2.0 * self.v * d * d)
    }

    pub fn tanh(self) -> Self {
        let t = self.v.tanh();
        let d = 1.0 - t * t;
        self.apply(t, d, -2.0 * t * d)
    }
}

impl Add for HyperDual {
    type Output = HyperDual;
    fn add(self, o: HyperDual) -> HyperDual {
        HyperDual { v: self.v + o.v, a: self.a + o.a, b: self.b + o.b, ab: self.ab + o.ab }
    }
}

impl Sub for HyperDual {
    type Output = HyperDual;
    fn sub(self, o: HyperDual) -> HyperDual {
        HyperDual { v: self.v - o.v, a: self.a - o.a, b: self.b - o.b, ab: self.ab - o.ab }
    }
}

impl Mul for HyperDual {
    type Output = HyperDual;
    fn mul(self, o: HyperDual) -> HyperDual {
        HyperDual {
            v: self.v * o.v,
            a: self.v * o.a + self.a * o.v,
            b: self.v * o.b + self.b * o.v,
            ab: self.v * o.ab + self.a * o.b + self.b * o.a + self.ab * o.v,
        }
    }
}

fn k(v: f64) -> HyperDual {
    HyperDual::constant(v)
}

type Scalar3 = fn(HyperDual, HyperDual, HyperDual) -> HyperDual;

pub fn u(t: HyperDual, x: HyperDual, y: HyperDual) -> HyperDual {
    (k(2.0) * t.atan() + k(1.0))
        * x
        * y
        * (k(1.2f64.exp()) - (k(1.2) * x).exp())
        * (k(0.7f64.exp()) - (k(0.7) * y).exp())
}

pub fn m(t: HyperDual, x: HyperDual, y: HyperDual) -> HyperDual {
    (k(0.25) * t.tanh() + k(1.0)) * x.sinh() * (k(1.0) - x).sinh() * y * (k(2.0) - y).ln()
}

/// Value, time derivative, gradient and Laplacian at one point.
#[derive(Debug, Clone, Copy)]
pub struct Jet {
    pub v: f64,
    pub t: f64,
    pub grad: [f64; 2],
    pub lap: f64,
}

pub fn jet(f: Scalar3, t: f64, x: f64, y: f64) -> Jet {
    let ft = f(HyperDual::seed(t, 1.0, 0.0), k(x), k(y));
    let fxx = f(k(t), HyperDual::seed(x, 1.0, 1.0), k(y));
    let fyy = f(k(t), k(x), HyperDual::seed(y, 1.0, 1.0));
    Jet { v: ft.v, t: ft.a, grad: [fxx.a, fyy.a], lap: fxx.ab + fyy.ab }
}

/// `div(m grad u / |grad u|)`, using that the Jacobian of `g / |g|` is
/// `(I - n n^T) Hess u / |g|`.
pub fn div_flux(t: f64, x: f64, y: f64) -> f64 {
    let ju = jet(u, t, x, y);
    let jm = jet(m, t, x, y);
    let uxx = u(k(t), HyperDual::seed(x, 1.0, 1.0), k(y)).ab;
    let uyy = u(k(t), k(x), HyperDual::seed(y, 1.0, 1.0)).ab;
    let uxy = u(k(t), HyperDual::seed(x, 1.0, 0.0), HyperDual::seed(y, 0.0, 1.0)).ab;
    let g = ju.grad;
    let r = g[0].hypot(g[1]);
    let n = [g[0] / r, g[1] / r];
    let h = [[uxx, uxy], [uxy, uyy]];
    let mut trace = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let p = if i == j { 1.0 } else { 0.0 } - n[i] * n[j];
            trace += p * h[j][i];
        }
    }
    jm.grad[0] * n[0] + jm.grad[1] * n[1] + jm.v * trace / r
}
