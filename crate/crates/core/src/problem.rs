//! Problem data: couplings, source, initial density, and the built-in
//! manufactured and trivial test cases on the unit square.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{lumped_riesz, Discretization, FeSpace};
use crate::hamiltonian::{eikonal, Hamiltonian, GRADIENT_FLOOR};
use crate::math::{atan, cosh, exp, ln, norm, sinh, tanh, Vec2};
use crate::quadrature::gauss3;
use crate::timestepping::{SpaceTimeField, TimeGrid};
use crate::{Error, Result};

pub type SpaceTimeFn = Box<dyn Fn(f64, Vec2) -> f64 + Send + Sync>;
pub type SpaceFn = Box<dyn Fn(Vec2) -> f64 + Send + Sync>;

/// Local couplings `F[m] = m + F0(t, x)` and `S[m] = tanh(m) + S0(x)`.
#[derive(Default)]
pub struct LocalCoupling {
    pub f0: Option<SpaceTimeFn>,
    pub s0: Option<SpaceFn>,
}

pub fn local_coupling(f0: Option<SpaceTimeFn>, s0: Option<SpaceFn>) -> LocalCoupling {
    LocalCoupling { f0, s0 }
}

impl LocalCoupling {
    /// `f^n_i = (m^n, xi_i)_Omega + tau^{-1} int_{I_n} (F0, xi_i) dt`.
    pub fn running_load(&self, disc: &Discretization<'_>, grid: &TimeGrid, m: &SpaceTimeField, n: usize) -> Vec<f64> {
        let mut out = disc.mass.mul_vec(m.slab(n));
        if let Some(f0) = &self.f0 {
            add_time_averaged(&disc.fes, grid, n, f0, &mut out);
        }
        out
    }

    /// `R_k S[m_T]`, composing `tanh` with the finite element function at the
    /// quadrature points.
    pub fn terminal(&self, fes: &FeSpace<'_>, m_terminal: &[f64]) -> Vec<f64> {
        let mesh = fes.mesh();
        let mut out = vec![0.0; fes.n_dofs()];
        for k in 0..mesh.n_triangles() {
            let dofs = fes.local_dofs(k);
            if dofs.iter().all(Option::is_none) {
                continue;
            }
            let area = fes.area(k);
            for (x, lambda, w) in fes.rule().map(&mesh.corners(k)) {
                let mut s = tanh(fes.element_value(k, &lambda, m_terminal));
                if let Some(s0) = &self.s0 {
                    s += s0(x);
                }
                for (i, d) in dofs.iter().enumerate() {
                    if let Some(d) = d {
                        out[*d] += area * w * s * lambda[i];
                    }
                }
            }
        }
        for (o, mu) in out.iter_mut().zip(fes.lumped_mass()) {
            *o /= mu;
        }
        out
    }
}

/// `out_i += tau^{-1} int_{I_n} (f(t), xi_i) dt` with three Gauss points in
/// time.
pub fn add_time_averaged(
    fes: &FeSpace<'_>,
    grid: &TimeGrid,
    n: usize,
    f: &(dyn Fn(f64, Vec2) -> f64 + Send + Sync),
    out: &mut [f64],
) {
    let tau = grid.tau();
    for (t, w) in gauss3(grid.time(n - 1), grid.time(n)) {
        fes.add_load(w / tau, &|x| f(t, x), out);
    }
}

/// Data of a mean field game on the unit square with homogeneous Dirichlet
/// conditions.
pub struct ProblemSpec {
    pub nu: f64,
    pub horizon: f64,
    pub hamiltonian: Box<dyn Hamiltonian>,
    pub coupling: LocalCoupling,
    pub source: Option<SpaceTimeFn>,
    pub initial_density: Option<SpaceFn>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(Error::InvalidArgument("diffusion coefficient must be positive".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidArgument("time horizon must be positive".into()));
        }
        Ok(())
    }

    /// Slab-averaged source loads `g^n`, `n = 1..N`.
    pub fn source_loads(&self, fes: &FeSpace<'_>, grid: &TimeGrid) -> Vec<Vec<f64>> {
        (1..=grid.n_steps())
            .map(|n| {
                let mut g = vec![0.0; fes.n_dofs()];
                if let Some(src) = &self.source {
                    add_time_averaged(fes, grid, n, src, &mut g);
                }
                g
            })
            .collect()
    }

    /// `R_k m0`.
    pub fn initial_nodal(&self, fes: &FeSpace<'_>) -> Vec<f64> {
        match &self.initial_density {
            Some(m0) => project_initial(fes, m0),
            None => vec![0.0; fes.n_dofs()],
        }
    }
}

/// `R_k m0`.
pub fn project_initial(fes: &FeSpace<'_>, m0: impl Fn(Vec2) -> f64) -> Vec<f64> {
    lumped_riesz(fes, m0)
}

/// Data whose solution is `u = m = 0`: `F[m] = m`, `S[m] = tanh(m)`, no
/// source, zero initial density, eikonal Hamiltonian.
pub fn trivial() -> ProblemSpec {
    ProblemSpec {
        nu: 1.0,
        horizon: 1.0,
        hamiltonian: Box::new(eikonal()),
        coupling: LocalCoupling::default(),
        source: None,
        initial_density: None,
    }
}

/// Closed-form solution pair used for convergence testing:
///
/// `u(t,x,y) = (2 atan t + 1) x (e^{1.2} - e^{1.2x}) y (e^{0.7} - e^{0.7y})`,
/// `m(t,x,y) = (tanh(t)/4 + 1) sinh(x) sinh(1-x) y ln(2-y)`,
///
/// with `nu = 1`, `T = 1`, `H(p) = |p|` and `b = grad u / |grad u|`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ManufacturedCase;

const NU: f64 = 1.0;

/// `(f, f', f'')` of a one-variable factor.
type Jet1 = (f64, f64, f64);

fn exp_factor(s: f64, c: f64) -> Jet1 {
    let e = exp(c * s);
    let ec = exp(c);
    (s * (ec - e), ec - e - c * s * e, -2.0 * c * e - c * c * s * e)
}

fn sinh_factor(s: f64) -> Jet1 {
    (sinh(s) * sinh(1.0 - s), sinh(1.0 - 2.0 * s), -2.0 * cosh(1.0 - 2.0 * s))
}

fn log_factor(s: f64) -> Jet1 {
    let r = 2.0 - s;
    (s * ln(r), ln(r) - s / r, -1.0 / r - 2.0 / (r * r))
}

impl ManufacturedCase {
    fn u_time(t: f64) -> (f64, f64) {
        (2.0 * atan(t) + 1.0, 2.0 / (1.0 + t * t))
    }

    fn m_time(t: f64) -> (f64, f64) {
        let th = tanh(t);
        (th / 4.0 + 1.0, (1.0 - th * th) / 4.0)
    }

    pub fn u(&self, t: f64, x: Vec2) -> f64 {
        Self::u_time(t).0 * exp_factor(x[0], 1.2).0 * exp_factor(x[1], 0.7).0
    }

    pub fn u_t(&self, t: f64, x: Vec2) -> f64 {
        Self::u_time(t).1 * exp_factor(x[0], 1.2).0 * exp_factor(x[1], 0.7).0
    }

    pub fn grad_u(&self, t: f64, x: Vec2) -> Vec2 {
        let a = Self::u_time(t).0;
        let (p, q) = (exp_factor(x[0], 1.2), exp_factor(x[1], 0.7));
        [a * p.1 * q.0, a * p.0 * q.1]
    }

    pub fn hessian_u(&self, t: f64, x: Vec2) -> [[f64; 2]; 2] {
        let a = Self::u_time(t).0;
        let (p, q) = (exp_factor(x[0], 1.2), exp_factor(x[1], 0.7));
        let off = a * p.1 * q.1;
        [[a * p.2 * q.0, off], [off, a * p.0 * q.2]]
    }

    pub fn m(&self, t: f64, x: Vec2) -> f64 {
        Self::m_time(t).0 * sinh_factor(x[0]).0 * log_factor(x[1]).0
    }

    pub fn m_t(&self, t: f64, x: Vec2) -> f64 {
        Self::m_time(t).1 * sinh_factor(x[0]).0 * log_factor(x[1]).0
    }

    pub fn grad_m(&self, t: f64, x: Vec2) -> Vec2 {
        let c = Self::m_time(t).0;
        let (p, q) = (sinh_factor(x[0]), log_factor(x[1]));
        [c * p.1 * q.0, c * p.0 * q.1]
    }

    pub fn laplacian_m(&self, t: f64, x: Vec2) -> f64 {
        let c = Self::m_time(t).0;
        let (p, q) = (sinh_factor(x[0]), log_factor(x[1]));
        c * (p.2 * q.0 + p.0 * q.2)
    }

    pub fn laplacian_u(&self, t: f64, x: Vec2) -> f64 {
        let h = self.hessian_u(t, x);
        h[0][0] + h[1][1]
    }

    /// `grad u / |grad u|`, zero where the gradient vanishes.
    pub fn b_star(&self, t: f64, x: Vec2) -> Vec2 {
        let g = self.grad_u(t, x);
        let r = norm(g);
        if r > GRADIENT_FLOOR {
            [g[0] / r, g[1] / r]
        } else {
            [0.0, 0.0]
        }
    }

    /// `F0 = -u_t - nu Lap u + |grad u| - m`.
    pub fn f0(&self, t: f64, x: Vec2) -> f64 {
        -self.u_t(t, x) - NU * self.laplacian_u(t, x) + norm(self.grad_u(t, x)) - self.m(t, x)
    }

    /// `S0 = u(T) - tanh(m(T))`.
    pub fn s0(&self, x: Vec2) -> f64 {
        self.u(1.0, x) - tanh(self.m(1.0, x))
    }

    /// `div(m b)` with `div(grad u/|grad u|) = Lap u/|grad u| - grad u^T Hess u grad u/|grad u|^3`.
    pub fn div_m_b(&self, t: f64, x: Vec2) -> f64 {
        let g = self.grad_u(t, x);
        let r = norm(g);
        if r <= GRADIENT_FLOOR {
            return 0.0;
        }
        let h = self.hessian_u(t, x);
        let hgg = g[0] * (h[0][0] * g[0] + h[0][1] * g[1]) + g[1] * (h[1][0] * g[0] + h[1][1] * g[1]);
        let div_b = (h[0][0] + h[1][1]) / r - hgg / (r * r * r);
        let gm = self.grad_m(t, x);
        (gm[0] * g[0] + gm[1] * g[1]) / r + self.m(t, x) * div_b
    }

    /// `G = m_t - nu Lap m - div(m b)`.
    pub fn g(&self, t: f64, x: Vec2) -> f64 {
        self.m_t(t, x) - NU * self.laplacian_m(t, x) - self.div_m_b(t, x)
    }
}

/// The manufactured problem with its exact solution.
pub fn manufactured() -> (ProblemSpec, ManufacturedCase) {
    let case = ManufacturedCase;
    let spec = ProblemSpec {
        nu: NU,
        horizon: 1.0,
        hamiltonian: Box::new(eikonal()),
        coupling: LocalCoupling {
            f0: Some(Box::new(move |t, x| case.f0(t, x))),
            s0: Some(Box::new(move |x| case.s0(x))),
        },
        source: Some(Box::new(move |t, x| case.g(t, x))),
        initial_density: Some(Box::new(move |x| case.m(0.0, x))),
    };
    (spec, case)
}
