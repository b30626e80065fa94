//! Uniform time grids, piecewise-constant space-time fields with their
//! reconstructed time derivatives, and the two sequential sub-solvers: the
//! forward Kolmogorov-Fokker-Planck sweep and the backward HJB sweep.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{add_convection, lumped_inner, lumped_norm, Discretization, FeSpace};
use crate::hamiltonian::{Hamiltonian, TransportField};
use crate::linsolve::{GeneralSolver, SpdSolver};
use crate::math::sqrt;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Partition of `[0, T]` into `N` slabs `I_n = (t_{n-1}, t_n)` of equal
/// length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
    tau: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument("time horizon must be positive".into()));
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument("at least one time step is required".into()));
        }
        Ok(TimeGrid { horizon, n_steps, tau: horizon / n_steps as f64 })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `t_n = n tau`, with `t_N = T` exactly.
    pub fn time(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.horizon
        } else {
            n as f64 * self.tau
        }
    }

    /// Midpoint of slab `I_n`.
    pub fn midpoint(&self, n: usize) -> f64 {
        (n as f64 - 0.5) * self.tau
    }

    /// Requires `tau < nu / L_H^2` when `L_H > 0`.
    pub fn check_step(&self, nu: f64, lipschitz: f64) -> Result<()> {
        if lipschitz > 0.0 {
            let limit = nu / (lipschitz * lipschitz);
            if self.tau >= limit {
                return Err(Error::TimeStepTooLarge { tau: self.tau, limit });
            }
        }
        Ok(())
    }

    /// `1 + nu^{-1} L_H^2 tau`.
    pub fn growth(&self, nu: f64, lipschitz: f64) -> f64 {
        1.0 + lipschitz * lipschitz * self.tau / nu
    }

    /// Picard contraction constant `sqrt((1 + nu^{-1} L_H^2 tau) / 2)`.
    pub fn contraction_constant(&self, nu: f64, lipschitz: f64) -> f64 {
        sqrt(self.growth(nu, lipschitz) / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Continuity {
    /// Left-continuous; the endpoint is the value at `t = 0`.
    Forward,
    /// Right-continuous; the endpoint is the value at `t = T`.
    Backward,
}

/// Field constant in time on each slab, plus one endpoint value.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    slabs: Vec<Vec<f64>>,
    endpoint: Vec<f64>,
    continuity: Continuity,
}

impl SpaceTimeField {
    pub fn new(slabs: Vec<Vec<f64>>, endpoint: Vec<f64>, continuity: Continuity) -> Result<Self> {
        if slabs.is_empty() {
            return Err(Error::InvalidArgument("a space-time field needs at least one slab".into()));
        }
        let n = endpoint.len();
        if let Some(bad) = slabs.iter().find(|s| s.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: bad.len() });
        }
        Ok(SpaceTimeField { slabs, endpoint, continuity })
    }

    pub fn zeros(n_steps: usize, n_dofs: usize, continuity: Continuity) -> Self {
        SpaceTimeField { slabs: vec![vec![0.0; n_dofs]; n_steps], endpoint: vec![0.0; n_dofs], continuity }
    }

    pub fn continuity(&self) -> Continuity {
        self.continuity
    }

    pub fn n_steps(&self) -> usize {
        self.slabs.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.endpoint.len()
    }

    /// Value on slab `I_n`, `n` in `1..=N`.
    pub fn slab(&self, n: usize) -> &[f64] {
        &self.slabs[n - 1]
    }

    pub fn slabs(&self) -> &[Vec<f64>] {
        &self.slabs
    }

    pub fn endpoint(&self) -> &[f64] {
        &self.endpoint
    }

    /// Value at `t = 0`.
    pub fn initial(&self) -> &[f64] {
        match self.continuity {
            Continuity::Forward => &self.endpoint,
            Continuity::Backward => &self.slabs[0],
        }
    }

    /// Value at `t = T`.
    pub fn terminal(&self) -> &[f64] {
        match self.continuity {
            Continuity::Forward => &self.slabs[self.slabs.len() - 1],
            Continuity::Backward => &self.endpoint,
        }
    }

    /// Sequence `v_0, ..., v_N` (forward) or `w_1, ..., w_{N+1}` (backward):
    /// slab values with the endpoint attached on the appropriate side.
    fn extended(&self, i: usize) -> &[f64] {
        match self.continuity {
            Continuity::Forward if i == 0 => &self.endpoint,
            Continuity::Forward => &self.slabs[i - 1],
            Continuity::Backward if i == self.slabs.len() + 1 => &self.endpoint,
            Continuity::Backward => &self.slabs[i - 1],
        }
    }

    /// Jump `[[v]]_n = v(t_n^-) - v(t_n^+)`: defined for `n = 0..N-1` on forward
    /// fields (with `v(0^-) = v(0)`) and `n = 1..N` on backward fields (with
    /// `w(T^+) = w(T)`).
    pub fn jump(&self, n: usize) -> Vec<f64> {
        let (left, right) = (self.extended(n), self.extended(n + 1));
        left.iter().zip(right).map(|(a, b)| a - b).collect()
    }

    /// Time derivative of the piecewise-linear reconstruction on each slab:
    /// `(v_n - v_{n-1}) / tau` for forward fields, `(w_{n+1} - w_n) / tau` for
    /// backward ones.
    pub fn reconstruct_derivative(&self, grid: &TimeGrid) -> Vec<Vec<f64>> {
        let tau = grid.tau();
        (1..=self.n_steps())
            .map(|n| {
                let (a, b) = match self.continuity {
                    Continuity::Forward => (self.extended(n), self.extended(n - 1)),
                    Continuity::Backward => (self.extended(n + 1), self.extended(n)),
                };
                a.iter().zip(b).map(|(x, y)| (x - y) / tau).collect()
            })
            .collect()
    }

    /// `theta * self + (1 - theta) * other`, slab by slab and at the endpoint.
    pub fn blend(&self, theta: f64, other: &SpaceTimeField) -> SpaceTimeField {
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| theta * x + (1.0 - theta) * y).collect()
        };
        SpaceTimeField {
            slabs: self.slabs.iter().zip(&other.slabs).map(|(a, b)| mix(a, b)).collect(),
            endpoint: mix(&self.endpoint, &other.endpoint),
            continuity: self.continuity,
        }
    }

    /// `self - other`.
    pub fn difference(&self, other: &SpaceTimeField) -> SpaceTimeField {
        self.combine(other, |a, b| a - b)
    }

    fn combine(&self, other: &SpaceTimeField, f: impl Fn(f64, f64) -> f64) -> SpaceTimeField {
        let zip = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect() };
        SpaceTimeField {
            slabs: self.slabs.iter().zip(&other.slabs).map(|(a, b)| zip(a, b)).collect(),
            endpoint: zip(&self.endpoint, &other.endpoint),
            continuity: self.continuity,
        }
    }

    /// Smallest value over all slabs and the endpoint.
    pub fn min_value(&self) -> f64 {
        self.slabs.iter().flatten().chain(&self.endpoint).copied().fold(f64::INFINITY, f64::min)
    }
}

/// Both sides of the discrete integration by parts formula
/// `int (d_t I+ v, w)_k + (v, d_t I- w)_k dt = (v(T), w(T))_k - (v(0), w(0))_k`.
pub fn integration_by_parts(
    fes: &FeSpace<'_>,
    grid: &TimeGrid,
    v: &SpaceTimeField,
    w: &SpaceTimeField,
) -> Result<(f64, f64)> {
    if v.continuity() != Continuity::Forward || w.continuity() != Continuity::Backward {
        return Err(Error::InvalidArgument("expected a forward and a backward field".into()));
    }
    let dv = v.reconstruct_derivative(grid);
    let dw = w.reconstruct_derivative(grid);
    let tau = grid.tau();
    let lhs: f64 = (1..=grid.n_steps())
        .map(|n| tau * (lumped_inner(fes, &dv[n - 1], w.slab(n)) + lumped_inner(fes, v.slab(n), &dw[n - 1])))
        .sum();
    let rhs = lumped_inner(fes, v.terminal(), w.terminal()) - lumped_inner(fes, v.initial(), w.initial());
    Ok((lhs, rhs))
}

/// Linear system of one KFP step: `M_L / tau + K_A + C(b)`.
pub fn kfp_step_matrix(disc: &Discretization<'_>, grid: &TimeGrid, b: &[crate::math::Vec2]) -> CsrMatrix {
    let mut a = disc.stiffness.clone();
    let shift: Vec<f64> = disc.fes.lumped_mass().iter().map(|m| m / grid.tau()).collect();
    a.add_diagonal(&shift);
    add_convection(&disc.fes, b, &mut a);
    a
}

/// Forward sweep: `(m^n - m^{n-1}) mu / tau + K_A m^n + C(b^n) m^n = g^n`
/// with `m^0 = m0`, where `g^n` holds the slab-averaged source load.
pub fn kfp_forward(
    disc: &Discretization<'_>,
    grid: &TimeGrid,
    b: &TransportField,
    loads: &[Vec<f64>],
    m0: &[f64],
    linear_tol: f64,
) -> Result<SpaceTimeField> {
    let n = disc.n_dofs();
    check_len(n, m0.len())?;
    check_len(grid.n_steps(), loads.len())?;
    check_len(grid.n_steps(), b.n_slabs())?;
    let mu = disc.fes.lumped_mass();
    let tau = grid.tau();
    let mut slabs = Vec::with_capacity(grid.n_steps());
    let mut prev = m0.to_vec();
    for step in 1..=grid.n_steps() {
        let g = &loads[step - 1];
        check_len(n, g.len())?;
        let rhs: Vec<f64> = (0..n).map(|i| mu[i] * prev[i] / tau + g[i]).collect();
        let solver = GeneralSolver::new(kfp_step_matrix(disc, grid, b.slab(step)));
        let (m, _) = solver
            .solve(&rhs, Some(&prev), linear_tol)
            .map_err(|e| Error::Slab { slab: step, source: Box::new(e) })?;
        slabs.push(m.clone());
        prev = m;
    }
    SpaceTimeField::new(slabs, m0.to_vec(), Continuity::Forward)
}

/// Picard settings for the HJB slab problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub linear_tol: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions { tolerance: 1e-11, max_iterations: 100, linear_tol: crate::linsolve::DEFAULT_TOLERANCE }
    }
}

/// Iteration counts and contraction ratios observed during a backward sweep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PicardStats {
    /// Iterations per slab, indexed by `n - 1`.
    pub iterations: Vec<usize>,
    /// Ratios `||d^{(j+1)}||_E / ||d^{(j)}||_E` of successive increments in the
    /// energy norm of `M_L / tau + K_A`, recorded while the older increment is
    /// above the round-off floor.
    pub ratios: Vec<f64>,
}

impl PicardStats {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_iterations(&self) -> usize {
        self.iterations.iter().sum()
    }
}

/// Relative size below which an increment is dominated by linear-solver
/// round-off and excluded from the ratio monitor.
const RATIO_FLOOR: f64 = 1e-9;

/// `(H(t, x, grad u), xi_i)_Omega` on every interior node.
pub fn hamiltonian_load(fes: &FeSpace<'_>, ham: &dyn Hamiltonian, t: f64, u: &[f64]) -> Vec<f64> {
    let mesh = fes.mesh();
    let mut out = vec![0.0; fes.n_dofs()];
    let autonomous = ham.is_autonomous();
    for k in 0..mesh.n_triangles() {
        let dofs = fes.local_dofs(k);
        if dofs.iter().all(Option::is_none) {
            continue;
        }
        let p = fes.element_gradient(k, u);
        let area = fes.area(k);
        if autonomous {
            let v = ham.value(t, mesh.centroid(k), p) * area / 3.0;
            for d in dofs.iter().flatten() {
                out[*d] += v;
            }
        } else {
            for (x, lambda, w) in fes.rule().map(&mesh.corners(k)) {
                let v = ham.value(t, x, p) * area * w;
                for (i, d) in dofs.iter().enumerate() {
                    if let Some(d) = d {
                        out[*d] += v * lambda[i];
                    }
                }
            }
        }
    }
    out
}

/// Backward sweep: for `n = N, ..., 1` solve
/// `(u^n - u^{n+1}) mu / tau + K_A u^n + H-load(u^n) = f^n` by Picard
/// iteration started from `u^{n+1}`, with `u^{N+1} = terminal`.
pub fn hjb_backward(
    disc: &Discretization<'_>,
    grid: &TimeGrid,
    ham: &dyn Hamiltonian,
    loads: &[Vec<f64>],
    terminal: &[f64],
    opts: &PicardOptions,
) -> Result<(SpaceTimeField, PicardStats)> {
    let n = disc.n_dofs();
    check_len(n, terminal.len())?;
    check_len(grid.n_steps(), loads.len())?;
    let fes = &disc.fes;
    let mu = fes.lumped_mass();
    let tau = grid.tau();
    let mut system = disc.stiffness.clone();
    system.add_diagonal(&mu.iter().map(|m| m / tau).collect::<Vec<_>>());
    let solver = SpdSolver::new(system);
    let energy = |v: &[f64]| sqrt(solver.matrix().bilinear(v, v).max(0.0));

    let mut stats = PicardStats { iterations: vec![0; grid.n_steps()], ratios: Vec::new() };
    let mut slabs = vec![Vec::new(); grid.n_steps()];
    let mut next = terminal.to_vec();
    for step in (1..=grid.n_steps()).rev() {
        let f = &loads[step - 1];
        check_len(n, f.len())?;
        let t = grid.midpoint(step);
        let base: Vec<f64> = (0..n).map(|i| mu[i] * next[i] / tau + f[i]).collect();
        let mut u = next.clone();
        let mut prev_increment: Option<f64> = None;
        let mut history = Vec::new();
        let mut converged = false;
        for it in 1..=opts.max_iterations {
            let h = hamiltonian_load(fes, ham, t, &u);
            let rhs: Vec<f64> = base.iter().zip(&h).map(|(b, h)| b - h).collect();
            let (u_new, _) = solver
                .solve(&rhs, Some(&u), opts.linear_tol)
                .map_err(|e| Error::Slab { slab: step, source: Box::new(e) })?;
            let delta: Vec<f64> = u_new.iter().zip(&u).map(|(a, b)| a - b).collect();
            let change = sqrt(tau) * lumped_norm(fes, &delta);
            let scale = sqrt(tau) * lumped_norm(fes, &u_new);
            let inc = energy(&delta);
            if let Some(p) = prev_increment {
                if p > RATIO_FLOOR * energy(&u_new) {
                    stats.ratios.push(inc / p);
                }
            }
            prev_increment = Some(inc);
            history.push(change);
            u = u_new;
            stats.iterations[step - 1] = it;
            if change <= opts.tolerance * scale.max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::PicardNonConvergence { slab: step, increments: history });
        }
        slabs[step - 1] = u.clone();
        next = u;
    }
    Ok((SpaceTimeField::new(slabs, terminal.to_vec(), Continuity::Backward)?, stats))
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{default_weights, StabilizationTensor};
    use crate::hamiltonian::{discrete_control, Control, Eikonal};
    use crate::mesh::generate_uniform_unit_square;

    fn disc(mesh: &crate::mesh::Mesh) -> Discretization<'_> {
        let fes = FeSpace::new(mesh, 6).unwrap();
        let w = default_weights(mesh, 1.0, 1.0).unwrap();
        Discretization::new(fes, StabilizationTensor::build(mesh, &w), 1.0)
    }

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(1.0, 9).unwrap();
        assert!((g.tau() * 9.0 - 1.0).abs() < 1e-14);
        assert_eq!(g.time(9), 1.0);
        assert!(g.check_step(1.0, 1.0).is_ok());
        assert!(TimeGrid::new(1.0, 1).unwrap().check_step(1.0, 1.0).is_err());
        assert!(TimeGrid::new(1.0, 1).unwrap().check_step(1.0, 0.0).is_ok());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!((g.contraction_constant(1.0, 1.0) - sqrt((1.0 + 1.0 / 9.0) / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn forward_derivative_example() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let v = SpaceTimeField::new(vec![vec![0.0], vec![1.0]], vec![0.0], Continuity::Forward).unwrap();
        assert_eq!(v.reconstruct_derivative(&g), vec![vec![0.0], vec![2.0]]);
        assert_eq!(v.jump(0), vec![0.0]);
        assert_eq!(v.jump(1), vec![-1.0]);
        let w = SpaceTimeField::new(vec![vec![3.0], vec![3.0]], vec![3.0], Continuity::Backward).unwrap();
        assert_eq!(w.reconstruct_derivative(&g), vec![vec![0.0], vec![0.0]]);
        assert_eq!(w.initial(), &[3.0]);
        let w = SpaceTimeField::new(vec![vec![1.0], vec![2.0]], vec![4.0], Continuity::Backward).unwrap();
        assert_eq!(w.reconstruct_derivative(&g), vec![vec![2.0], vec![4.0]]);
        assert_eq!(w.jump(2), vec![-2.0]);
    }

    #[test]
    fn derivative_is_minus_jump_over_tau() {
        let g = TimeGrid::new(1.0, 3).unwrap();
        let v = SpaceTimeField::new(vec![vec![1.0, 2.0], vec![0.5, 0.0], vec![3.0, 1.0]], vec![0.2, 0.1], Continuity::Forward)
            .unwrap();
        let d = v.reconstruct_derivative(&g);
        for n in 1..=3 {
            let j = v.jump(n - 1);
            for i in 0..2 {
                assert!((d[n - 1][i] + j[i] / g.tau()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn kfp_zero_data() {
        let mesh = generate_uniform_unit_square(4).unwrap();
        let d = disc(&mesh);
        let g = TimeGrid::new(1.0, 3).unwrap();
        let b = TransportField::zeros(3, mesh.n_triangles());
        let loads = vec![vec![0.0; d.n_dofs()]; 3];
        let m = kfp_forward(&d, &g, &b, &loads, &vec![0.0; d.n_dofs()], 1e-12).unwrap();
        assert_eq!(m.min_value(), 0.0);
        assert!(m.slabs().iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn kfp_single_dof_recursion() {
        let mesh = generate_uniform_unit_square(2).unwrap();
        let d = disc(&mesh);
        let g = TimeGrid::new(1.0, 3).unwrap();
        let tau = g.tau();
        let b = TransportField::zeros(3, mesh.n_triangles());
        let loads = vec![vec![0.1], vec![0.2], vec![0.0]];
        let m = kfp_forward(&d, &g, &b, &loads, &[1.0], 1e-13).unwrap();
        let mu = 0.25;
        let k11 = d.stiffness.get(0, 0);
        let mut prev = 1.0;
        for n in 1..=3 {
            let expected = (mu * prev + tau * loads[n - 1][0]) / (mu + tau * k11);
            assert!((m.slab(n)[0] - expected).abs() < 1e-13);
            prev = expected;
        }
    }

    #[test]
    fn hjb_zero_cases() {
        let mesh = generate_uniform_unit_square(4).unwrap();
        let d = disc(&mesh);
        let g = TimeGrid::new(1.0, 3).unwrap();
        let loads = vec![vec![0.0; d.n_dofs()]; 3];
        let zero = vec![0.0; d.n_dofs()];
        let (u, stats) = hjb_backward(&d, &g, &Eikonal, &loads, &zero, &PicardOptions::default()).unwrap();
        assert!(u.slabs().iter().flatten().all(|v| *v == 0.0));
        assert!(stats.iterations.iter().all(|&i| i == 1));

        let fes = FeSpace::new(&mesh, 6).unwrap();
        let plain = Discretization::new(fes, StabilizationTensor::zero(&mesh), 1.0);
        let h = discrete_control(vec![Control::constant([0.0, 0.0], 0.0)], 1.0, 3).unwrap();
        let (u, _) = hjb_backward(&plain, &g, &h, &loads, &zero, &PicardOptions::default()).unwrap();
        assert!(u.slabs().iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn hjb_slab_equation_holds() {
        let mesh = generate_uniform_unit_square(6).unwrap();
        let d = disc(&mesh);
        let g = TimeGrid::new(1.0, 4).unwrap();
        let loads: Vec<Vec<f64>> = (1..=4).map(|n| d.fes.load_vector(|x| (n as f64) * x[0] - x[1])).collect();
        let terminal = d.fes.interpolate(|x| x[0] * (1.0 - x[0]) * x[1]);
        let (u, stats) = hjb_backward(&d, &g, &Eikonal, &loads, &terminal, &PicardOptions::default()).unwrap();
        let mu = d.fes.lumped_mass();
        for n in 1..=4 {
            let un = u.slab(n);
            let next = if n == 4 { &terminal[..] } else { u.slab(n + 1) };
            let ku = d.stiffness.mul_vec(un);
            let h = hamiltonian_load(&d.fes, &Eikonal, g.midpoint(n), un);
            for i in 0..d.n_dofs() {
                let r = mu[i] * (un[i] - next[i]) / g.tau() + ku[i] + h[i] - loads[n - 1][i];
                assert!(r.abs() < 1e-10, "slab {n} node {i}: {r}");
            }
        }
        assert!(stats.max_ratio() <= g.contraction_constant(1.0, 1.0));
    }
}
