//! Error norms against a closed-form solution, convergence rates, the
//! discrete space-time norms and the weighted-norm identities used to check
//! the backward solver's contraction argument.

use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{default_weights, dual_norm_with_maximizer, lumped_norm, Discretization, FeSpace};
use crate::hamiltonian::TransportField;
use crate::linsolve::SpdSolver;
use crate::math::{dot, ln, pow, sqrt, Vec2};
use crate::mesh::generate_uniform_unit_square;
use crate::problem::{manufactured, ManufacturedCase};
use crate::solver::{MfgSolver, SolverOptions};
use crate::quadrature::gauss3;
use crate::timestepping::{Continuity, SpaceTimeField, TimeGrid};
use crate::{Error, Result};

/// Relative errors of one discrete solution, with the level it belongs to.
/// [`error_norms`] leaves `n` at zero; callers that know the grid size fill it in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub n: usize,
    pub h: f64,
    pub tau: f64,
    pub n_steps: usize,
    pub rel_u_l2h1: f64,
    pub rel_b_l2l2: f64,
    pub rel_m_l2l2: f64,
    pub rel_m_l2h1: f64,
    pub rel_u0_l2: f64,
    pub rel_mt_l2: f64,
}

impl ErrorReport {
    pub const COLUMNS: [&'static str; 6] =
        ["rel_u_L2H1", "rel_b_L2L2", "rel_m_L2L2", "rel_m_L2H1", "rel_u0_L2", "rel_mT_L2"];

    /// The six errors in the order of [`ErrorReport::COLUMNS`].
    pub fn errors(&self) -> [f64; 6] {
        [self.rel_u_l2h1, self.rel_b_l2l2, self.rel_m_l2l2, self.rel_m_l2h1, self.rel_u0_l2, self.rel_mt_l2]
    }
}

fn ratio(err: f64, exact: f64) -> f64 {
    if exact > 0.0 {
        sqrt(err / exact)
    } else if err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Squared error and squared exact norm, accumulated together.
#[derive(Default, Clone, Copy)]
struct Acc {
    err: f64,
    exact: f64,
}

impl Acc {
    fn add(&mut self, w: f64, discrete: f64, exact: f64) {
        self.err += w * (discrete - exact) * (discrete - exact);
        self.exact += w * exact * exact;
    }

    fn add_vec(&mut self, w: f64, discrete: Vec2, exact: Vec2) {
        let d = [discrete[0] - exact[0], discrete[1] - exact[1]];
        self.err += w * dot(d, d);
        self.exact += w * dot(exact, exact);
    }

    fn rel(&self) -> f64 {
        ratio(self.err, self.exact)
    }
}

/// Where the exact solution is sampled in time against the slab-constant
/// discrete fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeSampling {
    /// Three Gauss points per slab.
    SlabGauss,
    /// The time each slab value approximates under the implicit Euler
    /// recursions: `u^n` and `b^n` at `t_{n-1}` (the HJB sweep runs
    /// backwards), `m^n` at `t_n`. Weight `tau` per slab.
    #[default]
    Nodal,
}

/// `(time, weight)` pairs on one slab.
type TimeSamples = Vec<(f64, f64)>;

/// Relative errors in `L2(H1_0)` and `L2(L2)`, of the drift in `L2(L2)`, and
/// of `u(0)`, `m(T)` in `L2`. Element quadrature in space; time sampling as
/// chosen. The discrete fields are constant on each slab.
pub fn error_norms(
    u: &SpaceTimeField,
    m: &SpaceTimeField,
    b: &TransportField,
    case: &ManufacturedCase,
    fes: &FeSpace<'_>,
    grid: &TimeGrid,
    sampling: TimeSampling,
) -> ErrorReport {
    let mesh = fes.mesh();
    let rule = fes.rule();
    let (mut eu, mut eb, mut em, mut emh) = (Acc::default(), Acc::default(), Acc::default(), Acc::default());
    for n in 1..=grid.n_steps() {
        let (us, ms, bs) = (u.slab(n), m.slab(n), b.slab(n));
        let (a, z) = (grid.time(n - 1), grid.time(n));
        let (backward, forward): (TimeSamples, TimeSamples) = match sampling {
            TimeSampling::SlabGauss => (gauss3(a, z).to_vec(), gauss3(a, z).to_vec()),
            TimeSampling::Nodal => (vec![(a, grid.tau())], vec![(z, grid.tau())]),
        };
        for k in 0..mesh.n_triangles() {
            let area = fes.area(k);
            let gu = fes.element_gradient(k, us);
            let gm = fes.element_gradient(k, ms);
            for (x, lambda, wq) in rule.map(&mesh.corners(k)) {
                for &(t, wt) in &backward {
                    let w = wt * wq * area;
                    eu.add_vec(w, gu, case.grad_u(t, x));
                    eb.add_vec(w, bs[k], case.b_star(t, x));
                }
                let mv = fes.element_value(k, &lambda, ms);
                for &(t, wt) in &forward {
                    let w = wt * wq * area;
                    em.add(w, mv, case.m(t, x));
                    emh.add_vec(w, gm, case.grad_m(t, x));
                }
            }
        }
    }
    let (mut e0, mut et) = (Acc::default(), Acc::default());
    let horizon = grid.horizon();
    for k in 0..mesh.n_triangles() {
        let area = fes.area(k);
        for (x, lambda, wq) in rule.map(&mesh.corners(k)) {
            e0.add(wq * area, fes.element_value(k, &lambda, u.initial()), case.u(0.0, x));
            et.add(wq * area, fes.element_value(k, &lambda, m.terminal()), case.m(horizon, x));
        }
    }
    ErrorReport {
        n: 0,
        h: mesh.max_h(),
        tau: grid.tau(),
        n_steps: grid.n_steps(),
        rel_u_l2h1: eu.rel(),
        rel_b_l2l2: eb.rel(),
        rel_m_l2l2: em.rel(),
        rel_m_l2h1: emh.rel(),
        rel_u0_l2: e0.rel(),
        rel_mt_l2: et.rel(),
    }
}

/// `log2(e_i / e_{i+1})` per column between consecutive reports; `None` when
/// either error is zero or not finite.
pub fn eoc(reports: &[ErrorReport]) -> Vec<[Option<f64>; 6]> {
    reports
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].errors(), w[1].errors());
            core::array::from_fn(|i| rate(a[i], b[i]))
        })
        .collect()
}

/// `log2(coarse / fine)`.
pub fn rate(coarse: f64, fine: f64) -> Option<f64> {
    if coarse > 0.0 && fine > 0.0 && coarse.is_finite() && fine.is_finite() {
        Some(ln(coarse / fine) / core::f64::consts::LN_2)
    } else {
        None
    }
}

/// `||v||_{V_k^+}` (forward) or `||v||_{V_k^-}` (backward):
/// `int ||d_t I v||_{k,*}^2 + ||grad v||^2 dt` plus the squared lumped norm of
/// the endpoint value.
pub fn discrete_norm_vk(field: &SpaceTimeField, disc: &Discretization<'_>, grid: &TimeGrid) -> Result<f64> {
    let solver = SpdSolver::new(disc.laplacian.clone());
    let tau = grid.tau();
    let mut s = 0.0;
    for (n, d) in field.reconstruct_derivative(grid).iter().enumerate() {
        let dual = dual_norm_with_maximizer(&disc.fes, &solver, d)?.0;
        let v = field.slab(n + 1);
        s += tau * (dual * dual + disc.laplacian.bilinear(v, v));
    }
    let end = lumped_norm(&disc.fes, field.endpoint());
    Ok(sqrt(s + end * end))
}

/// Weights `a_n = (1 + nu^{-1} L_H^2 tau)^{-n}`, `n = 0..N`, and the constant
/// `gamma_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNormContext {
    pub weights: Vec<f64>,
    pub growth: f64,
    pub gamma: f64,
    /// `nu^{-1} L_H^2`.
    pub rate: f64,
}

impl WeightedNormContext {
    pub fn new(grid: &TimeGrid, nu: f64, lipschitz: f64) -> Result<Self> {
        grid.check_step(nu, lipschitz)?;
        let growth = grid.growth(nu, lipschitz);
        let weights = (0..=grid.n_steps()).map(|n| 1.0 / pow(growth, n as f64)).collect();
        Ok(WeightedNormContext {
            weights,
            growth,
            gamma: grid.contraction_constant(nu, lipschitz),
            rate: lipschitz * lipschitz / nu,
        })
    }
}

fn require_forward(w: &SpaceTimeField) -> Result<()> {
    if w.continuity() != Continuity::Forward {
        return Err(Error::InvalidArgument("expected a forward field".into()));
    }
    Ok(())
}

/// `||w||_{V_k^+, A_k}^2` evaluated from its definition, with the dual norm
/// taken with respect to `(A_k grad ., grad .)`.
pub fn weighted_norm_sq(
    w: &SpaceTimeField,
    disc: &Discretization<'_>,
    grid: &TimeGrid,
    ctx: &WeightedNormContext,
) -> Result<f64> {
    require_forward(w)?;
    let fes = &disc.fes;
    let solver = SpdSolver::new(disc.stiffness.clone());
    let tau = grid.tau();
    let g = ctx.growth;
    let mut s = 0.0;
    for (i, d) in w.reconstruct_derivative(grid).iter().enumerate() {
        let n = i + 1;
        let dual = dual_norm_with_maximizer(fes, &solver, d)?.0;
        let v = w.slab(n);
        let l = lumped_norm(fes, v);
        s += tau * ctx.weights[n] * (dual * dual + disc.stiffness.bilinear(v, v) + ctx.rate / g * l * l);
    }
    let t = lumped_norm(fes, w.terminal());
    s += ctx.weights[grid.n_steps()] * t * t / g;
    for n in 0..grid.n_steps() {
        let j = lumped_norm(fes, &w.jump(n));
        s += ctx.weights[n] * j * j / g;
    }
    Ok(s)
}

/// Both sides of the inf-sup identity for a forward field `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfSupCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs| / lhs` (zero when both vanish).
    pub gap: f64,
}

/// Compares `||w||^2_{V+,A}` with `[B(w, v)/||v||_{V,A}]^2 + ||w(0)||_k^2/(1 +
/// nu^{-1} L_H^2 tau)` at the maximiser `v = a (z + w)`, where `z` solves
/// `(A_k grad z, grad .) = (d_t I+ w, .)_k` slab by slab.
pub fn infsup_check(
    w: &SpaceTimeField,
    disc: &Discretization<'_>,
    grid: &TimeGrid,
    ctx: &WeightedNormContext,
) -> Result<InfSupCheck> {
    let lhs = weighted_norm_sq(w, disc, grid, ctx)?;
    let fes = &disc.fes;
    let solver = SpdSolver::new(disc.stiffness.clone());
    let tau = grid.tau();
    let mut b = 0.0;
    let mut vnorm = 0.0;
    for (i, d) in w.reconstruct_derivative(grid).iter().enumerate() {
        let n = i + 1;
        let (_, z) = dual_norm_with_maximizer(fes, &solver, d)?;
        let wn = w.slab(n);
        let v: Vec<f64> = z.iter().zip(wn).map(|(z, w)| ctx.weights[n] * (z + w)).collect();
        let mu = fes.lumped_mass();
        let time_part: f64 = (0..v.len()).map(|j| mu[j] * d[j] * v[j]).sum();
        b += tau * (time_part + disc.stiffness.bilinear(wn, &v));
        vnorm += tau / ctx.weights[n] * disc.stiffness.bilinear(&v, &v);
    }
    let sup = if vnorm > 0.0 { b / sqrt(vnorm) } else { 0.0 };
    let w0 = lumped_norm(fes, w.initial());
    let rhs = sup * sup + w0 * w0 / ctx.growth;
    let gap = if lhs > 0.0 { (lhs - rhs).abs() / lhs } else { (lhs - rhs).abs() };
    Ok(InfSupCheck { lhs, rhs, gap })
}

/// `gamma^2 ||w||^2_{V+,A} + ||w(0)||_k^2 / 2 - int nu^{-1} L_H^2 a ||w||_Omega^2 dt`.
pub fn tech_inequality_slack(
    w: &SpaceTimeField,
    disc: &Discretization<'_>,
    grid: &TimeGrid,
    ctx: &WeightedNormContext,
) -> Result<f64> {
    let norm_sq = weighted_norm_sq(w, disc, grid, ctx)?;
    let lhs: f64 = (1..=grid.n_steps())
        .map(|n| grid.tau() * ctx.rate * ctx.weights[n] * disc.mass.bilinear(w.slab(n), w.slab(n)))
        .sum();
    let w0 = lumped_norm(&disc.fes, w.initial());
    Ok(ctx.gamma * ctx.gamma * norm_sq + 0.5 * w0 * w0 - lhs)
}

/// `max_n ||v|_{I_n}||_Omega` together with the endpoint.
pub fn max_l2_in_time(field: &SpaceTimeField, disc: &Discretization<'_>) -> f64 {
    field
        .slabs()
        .iter()
        .chain(core::iter::once(&field.endpoint().to_vec()))
        .map(|v| sqrt(disc.mass.bilinear(v, v).max(0.0)))
        .fold(0.0, f64::max)
}

/// One level of the manufactured convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub level: u32,
    pub report: ErrorReport,
    pub outer_iterations: usize,
    pub converged: bool,
    pub max_picard_ratio: f64,
}

/// Mesh subdivisions and time grid of level `k`: `n = 2^k`, `N = 2^k + 1`
/// slabs on `[0, 1]`, so that `tau = h / ((1 + 2^-k) sqrt 2)`.
pub fn level_grid(level: u32) -> Result<(usize, TimeGrid)> {
    if level == 0 || level > 12 {
        return Err(Error::InvalidArgument("level must lie in 1..=12".into()));
    }
    let n = 1usize << level;
    Ok((n, TimeGrid::new(1.0, n + 1)?))
}

/// Solves the manufactured problem on level `level` with weights
/// `L_H |E|` and reports the relative errors.
pub fn manufactured_level(level: u32, opts: SolverOptions, sampling: TimeSampling) -> Result<LevelResult> {
    let (n, grid) = level_grid(level)?;
    manufactured_run(level, n, grid, 1.0, opts, sampling)
}

/// Manufactured solve on the uniform `n x n` mesh with weights
/// `c_w L_H |E|` and an arbitrary time grid.
pub fn manufactured_run(
    level: u32,
    n: usize,
    grid: TimeGrid,
    weight_factor: f64,
    opts: SolverOptions,
    sampling: TimeSampling,
) -> Result<LevelResult> {
    let mesh = generate_uniform_unit_square(n)?;
    let (problem, case) = manufactured();
    let weights = default_weights(&mesh, problem.hamiltonian.lipschitz(), weight_factor)?;
    let solver = MfgSolver::new(&problem, &mesh, grid, &weights, opts)?;
    let sol = solver.run(None)?;
    let mut report = error_norms(&sol.u, &sol.m, &sol.b, &case, &solver.discretization().fes, &grid, sampling);
    report.n = n;
    Ok(LevelResult {
        level,
        report,
        outer_iterations: sol.outer_iterations,
        converged: sol.converged,
        max_picard_ratio: sol.max_picard_ratio(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{default_weights, StabilizationTensor};
    use crate::timestepping::Continuity;

    fn setup(mesh: &crate::mesh::Mesh) -> Discretization<'_> {
        let fes = FeSpace::new(mesh, 6).unwrap();
        let w = default_weights(mesh, 1.0, 1.0).unwrap();
        Discretization::new(fes, StabilizationTensor::build(mesh, &w), 1.0)
    }

    #[test]
    fn eoc_examples() {
        let mk = |e: f64| ErrorReport {
            n: 0,
            h: 0.0,
            tau: 0.0,
            n_steps: 0,
            rel_u_l2h1: e,
            rel_b_l2l2: e,
            rel_m_l2l2: 1.0,
            rel_m_l2h1: 0.0,
            rel_u0_l2: e,
            rel_mt_l2: e,
        };
        let rates = eoc(&[mk(0.4), mk(0.2), mk(0.1)]);
        assert_eq!(rates.len(), 2);
        for r in &rates {
            assert!((r[0].unwrap() - 1.0).abs() < 1e-14);
            assert_eq!(r[2], Some(0.0));
            assert_eq!(r[3], None);
        }
        let reference = rate(0.2347566, 0.1222251).unwrap();
        assert!((reference - 0.9417).abs() < 1e-4);
    }

    #[test]
    fn zero_field_has_unit_relative_error() {
        let mesh = generate_uniform_unit_square(4).unwrap();
        let fes = FeSpace::new(&mesh, 6).unwrap();
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let u = SpaceTimeField::zeros(5, fes.n_dofs(), Continuity::Backward);
        let m = SpaceTimeField::zeros(5, fes.n_dofs(), Continuity::Forward);
        let b = TransportField::zeros(5, mesh.n_triangles());
        for sampling in [TimeSampling::SlabGauss, TimeSampling::Nodal] {
            let r = error_norms(&u, &m, &b, &ManufacturedCase, &fes, &grid, sampling);
            for e in r.errors() {
                assert!((e - 1.0).abs() < 1e-14, "{e}");
            }
        }
    }

    #[test]
    fn norm_of_constant_field() {
        let mesh = generate_uniform_unit_square(4).unwrap();
        let disc = setup(&mesh);
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let v = disc.fes.interpolate(|x| x[0] * x[1] + 0.5);
        let f = SpaceTimeField::new(vec![v.clone(); 4], v.clone(), Continuity::Forward).unwrap();
        let norm = discrete_norm_vk(&f, &disc, &grid).unwrap();
        let expected = disc.laplacian.bilinear(&v, &v) + lumped_norm(&disc.fes, &v).powi(2);
        assert!((norm * norm - expected).abs() < 1e-12);
        let zero = SpaceTimeField::zeros(4, disc.n_dofs(), Continuity::Backward);
        assert_eq!(discrete_norm_vk(&zero, &disc, &grid).unwrap(), 0.0);
    }

    #[test]
    fn level_grids() {
        let (n, g) = level_grid(3).unwrap();
        assert_eq!((n, g.n_steps()), (8, 9));
        assert!((g.tau() - 1.0 / 9.0).abs() < 1e-15);
        let h = core::f64::consts::SQRT_2 / 8.0;
        assert!((g.tau() - h / ((1.0 + 0.125) * core::f64::consts::SQRT_2)).abs() < 1e-15);
        assert!(level_grid(0).is_err());
    }

    #[test]
    fn weights_and_gamma() {
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let ctx = WeightedNormContext::new(&grid, 1.0, 1.0).unwrap();
        assert_eq!(ctx.weights[0], 1.0);
        assert!(ctx.weights.iter().all(|a| *a <= 1.0 && *a >= (-1.0f64).exp() - 1e-12));
        assert!(ctx.gamma < 1.0);
        assert!(WeightedNormContext::new(&TimeGrid::new(1.0, 1).unwrap(), 1.0, 1.0).is_err());
    }

    #[test]
    fn infsup_on_zero_and_constant_fields() {
        let mesh = generate_uniform_unit_square(4).unwrap();
        let disc = setup(&mesh);
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let ctx = WeightedNormContext::new(&grid, 1.0, 1.0).unwrap();
        let zero = SpaceTimeField::zeros(5, disc.n_dofs(), Continuity::Forward);
        let c = infsup_check(&zero, &disc, &grid, &ctx).unwrap();
        assert_eq!((c.lhs, c.rhs, c.gap), (0.0, 0.0, 0.0));
        assert_eq!(tech_inequality_slack(&zero, &disc, &grid, &ctx).unwrap(), 0.0);
        let v = disc.fes.interpolate(|x| x[0] - x[1] * x[1]);
        let w = SpaceTimeField::new(vec![v.clone(); 5], v, Continuity::Forward).unwrap();
        let c = infsup_check(&w, &disc, &grid, &ctx).unwrap();
        assert!(c.gap <= 1e-10, "{c:?}");
    }
}
