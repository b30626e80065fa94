//! Outer fixed-point iteration for the coupled discrete system: density from
//! the current drift, value function from the density, drift selected from
//! the value function.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_4;

use crate::assembly::{check_weights, Discretization, EdgeWeights, FeSpace, StabilizationTensor};
use crate::hamiltonian::{select_field, Hamiltonian, TransportField};
use crate::math::{cos, dot, norm, sin, sqrt, Vec2};
use crate::mesh::Mesh;
use crate::problem::ProblemSpec;
use crate::timestepping::{
    hamiltonian_load, hjb_backward, kfp_forward, kfp_step_matrix, Continuity, PicardOptions, PicardStats,
    SpaceTimeField, TimeGrid,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stopping tolerance on the relative change of `(u, m)`.
    pub tol_fp: f64,
    pub max_outer: usize,
    /// Under-relaxation `theta` in `(0, 1]` applied to `(u, m)`, never to `b`.
    pub relaxation: f64,
    pub picard: PicardOptions,
    pub linear_tol: f64,
    /// Solve on meshes that fail the cotangent audit instead of rejecting them.
    pub allow_nonmonotone_mesh: bool,
    /// Finish with the last iterate instead of an error when the iteration
    /// cap is reached.
    pub accept_unconverged: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_fp: 1e-9,
            max_outer: 200,
            relaxation: 1.0,
            picard: PicardOptions::default(),
            linear_tol: crate::linsolve::DEFAULT_TOLERANCE,
            allow_nonmonotone_mesh: false,
            accept_unconverged: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfgSolution {
    /// Backward field with `u(T) = R_k S[m(T)]`.
    pub u: SpaceTimeField,
    /// Forward field with `m(0) = R_k m0`.
    pub m: SpaceTimeField,
    /// The drift the returned density was computed with.
    pub b: TransportField,
    pub outer_iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// Picard statistics of every backward sweep, in order.
    pub picard: Vec<PicardStats>,
}

impl MfgSolution {
    pub fn max_picard_ratio(&self) -> f64 {
        self.picard.iter().map(PicardStats::max_ratio).fold(0.0, f64::max)
    }
}

/// A posteriori check of the discrete equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    /// Largest HJB slab residual against any basis function.
    pub hjb: f64,
    /// Largest KFP slab residual against any basis function.
    pub kfp: f64,
    /// Largest deviation of `u(T)` from `R_k S[m(T)]`.
    pub terminal: f64,
    pub min_density: f64,
    /// Smallest `H(q) - H(p) - b.(q - p)` over all probes (nonnegative for a
    /// valid selection).
    pub certificate_slack: f64,
}

/// `||v||_{L2(0,T;H1_0)}` relative differences and friends.
fn l2h1(disc: &Discretization<'_>, grid: &TimeGrid, v: &SpaceTimeField) -> f64 {
    sqrt(v.slabs().iter().map(|s| grid.tau() * disc.laplacian.bilinear(s, s)).sum::<f64>())
}

fn l2l2(disc: &Discretization<'_>, grid: &TimeGrid, v: &SpaceTimeField) -> f64 {
    sqrt(v.slabs().iter().map(|s| grid.tau() * disc.mass.bilinear(s, s)).sum::<f64>())
}

fn relative(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Discretised problem on a fixed mesh and time grid.
pub struct MfgSolver<'a, 'm> {
    problem: &'a ProblemSpec,
    disc: Discretization<'m>,
    grid: TimeGrid,
    opts: SolverOptions,
    source: Vec<Vec<f64>>,
    m0: Vec<f64>,
}

impl<'a, 'm> MfgSolver<'a, 'm> {
    /// Checks the mesh, weights and time step, and assembles everything that
    /// does not depend on the iterates.
    pub fn new(
        problem: &'a ProblemSpec,
        mesh: &'m Mesh,
        grid: TimeGrid,
        weights: &EdgeWeights,
        opts: SolverOptions,
    ) -> Result<Self> {
        problem.validate()?;
        if !(opts.relaxation > 0.0 && opts.relaxation <= 1.0) {
            return Err(Error::InvalidArgument("relaxation must lie in (0, 1]".into()));
        }
        if (grid.horizon() - problem.horizon).abs() > 1e-14 * problem.horizon {
            return Err(Error::InvalidArgument("time grid does not cover the problem horizon".into()));
        }
        let audit = mesh.audit();
        if !audit.xz_pass && !opts.allow_nonmonotone_mesh {
            return Err(Error::MeshNotMonotone { worst_edge_cot_sum: audit.worst_edge_cot_sum });
        }
        let lipschitz = problem.hamiltonian.lipschitz();
        check_weights(mesh, weights, lipschitz)?;
        grid.check_step(problem.nu, lipschitz)?;
        let fes = FeSpace::new(mesh, 6)?;
        let stab = StabilizationTensor::build(mesh, weights);
        let disc = Discretization::new(fes, stab, problem.nu);
        let source = problem.source_loads(&disc.fes, &grid);
        let m0 = problem.initial_nodal(&disc.fes);
        Ok(MfgSolver { problem, disc, grid, opts, source, m0 })
    }

    pub fn discretization(&self) -> &Discretization<'m> {
        &self.disc
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn initial_density(&self) -> &[f64] {
        &self.m0
    }

    pub fn source_loads(&self) -> &[Vec<f64>] {
        &self.source
    }

    /// Density for a given drift.
    pub fn density(&self, b: &TransportField) -> Result<SpaceTimeField> {
        kfp_forward(&self.disc, &self.grid, b, &self.source, &self.m0, self.opts.linear_tol)
    }

    /// Running loads `F[m]` per slab and the terminal datum `R_k S[m(T)]`.
    pub fn hjb_data(&self, m: &SpaceTimeField) -> (Vec<Vec<f64>>, Vec<f64>) {
        let c = &self.problem.coupling;
        let loads = (1..=self.grid.n_steps()).map(|n| c.running_load(&self.disc, &self.grid, m, n)).collect();
        (loads, c.terminal(&self.disc.fes, m.terminal()))
    }

    /// Value function for a given density.
    pub fn value(&self, m: &SpaceTimeField) -> Result<(SpaceTimeField, PicardStats)> {
        let (loads, terminal) = self.hjb_data(m);
        hjb_backward(&self.disc, &self.grid, self.problem.hamiltonian.as_ref(), &loads, &terminal, &self.opts.picard)
    }

    pub fn select(&self, u: &SpaceTimeField) -> TransportField {
        select_field(self.problem.hamiltonian.as_ref(), u, &self.disc.fes, &self.grid)
    }

    /// Runs the fixed-point iteration from `b0` (zero when `None`).
    pub fn run(&self, b0: Option<&TransportField>) -> Result<MfgSolution> {
        let n_el = self.disc.fes.mesh().n_triangles();
        let steps = self.grid.n_steps();
        let mut b = match b0 {
            Some(b) => {
                if b.n_slabs() != steps || b.n_elements() != n_el {
                    return Err(Error::DimensionMismatch { expected: steps * n_el, found: b.n_slabs() * b.n_elements() });
                }
                b.clone()
            }
            None => TransportField::zeros(steps, n_el),
        };
        let theta = self.opts.relaxation;
        let n = self.disc.n_dofs();
        let mut u_prev = SpaceTimeField::zeros(steps, n, Continuity::Backward);
        let mut m_prev = SpaceTimeField::zeros(steps, n, Continuity::Forward);
        let mut history = Vec::new();
        let mut picard = Vec::new();
        for it in 1..=self.opts.max_outer {
            let mut m = self.density(&b)?;
            if theta < 1.0 && it > 1 {
                m = m.blend(theta, &m_prev);
            }
            let (mut u, stats) = self.value(&m)?;
            picard.push(stats);
            if theta < 1.0 && it > 1 {
                u = u.blend(theta, &u_prev);
            }
            let du = relative(l2h1(&self.disc, &self.grid, &u.difference(&u_prev)), l2h1(&self.disc, &self.grid, &u));
            let dm = relative(l2l2(&self.disc, &self.grid, &m.difference(&m_prev)), l2l2(&self.disc, &self.grid, &m));
            let change = du.max(dm);
            history.push(change);
            let converged = change <= self.opts.tol_fp;
            if converged || it == self.opts.max_outer {
                if !converged && !self.opts.accept_unconverged {
                    return Err(Error::NonConvergence { residual_history: history });
                }
                return Ok(MfgSolution {
                    u,
                    m,
                    b,
                    outer_iterations: it,
                    residual_history: history,
                    converged,
                    picard,
                });
            }
            b = self.select(&u);
            u_prev = u;
            m_prev = m;
        }
        Err(Error::NonConvergence { residual_history: history })
    }

    /// Plugs the solution back into both families of slab equations, and
    /// checks positivity and the subgradient certificate.
    pub fn residual_audit(&self, sol: &MfgSolution) -> ResidualReport {
        let disc = &self.disc;
        let fes = &disc.fes;
        let mu = fes.lumped_mass();
        let tau = self.grid.tau();
        let ham = self.problem.hamiltonian.as_ref();
        let (loads, terminal) = self.hjb_data(&sol.m);
        let mut hjb: f64 = 0.0;
        let mut kfp: f64 = 0.0;
        for n in 1..=self.grid.n_steps() {
            let un = sol.u.slab(n);
            let next = if n == self.grid.n_steps() { sol.u.endpoint() } else { sol.u.slab(n + 1) };
            let ku = disc.stiffness.mul_vec(un);
            let h = hamiltonian_load(fes, ham, self.grid.midpoint(n), un);
            for i in 0..fes.n_dofs() {
                let r = mu[i] * (un[i] - next[i]) / tau + ku[i] + h[i] - loads[n - 1][i];
                hjb = hjb.max(r.abs());
            }
            let mn = sol.m.slab(n);
            let prev = if n == 1 { sol.m.endpoint() } else { sol.m.slab(n - 1) };
            let mut a = kfp_step_matrix(disc, &self.grid, sol.b.slab(n));
            // remove the mass part again so that the residual reads like the slab equation
            a.add_diagonal(&mu.iter().map(|m| -m / tau).collect::<Vec<_>>());
            let am = a.mul_vec(mn);
            for i in 0..fes.n_dofs() {
                let r = mu[i] * (mn[i] - prev[i]) / tau + am[i] - self.source[n - 1][i];
                kfp = kfp.max(r.abs());
            }
        }
        let terminal_gap = sol.u.endpoint().iter().zip(&terminal).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ResidualReport {
            hjb,
            kfp,
            terminal: terminal_gap,
            min_density: sol.m.min_value(),
            certificate_slack: certificate_slack(ham, fes, &self.grid, &sol.u, &sol.b),
        }
    }

    /// Largest `lambda = H(p) + b.(q - p) - H(q)` over slabs and elements,
    /// with `p = grad u`, `q = grad u'`. Nonpositive whenever `b` is a
    /// subgradient selection of `u`.
    pub fn cross_lambda(&self, sol: &MfgSolution, other: &SpaceTimeField) -> f64 {
        let fes = &self.disc.fes;
        let mesh = fes.mesh();
        let ham = self.problem.hamiltonian.as_ref();
        let mut worst = f64::NEG_INFINITY;
        for n in 1..=self.grid.n_steps() {
            let t = self.grid.midpoint(n);
            for k in 0..mesh.n_triangles() {
                let x = mesh.centroid(k);
                let p = fes.element_gradient(k, sol.u.slab(n));
                let q = fes.element_gradient(k, other.slab(n));
                let b = sol.b.slab(n)[k];
                let lambda = ham.value(t, x, p) + dot(b, [q[0] - p[0], q[1] - p[1]]) - ham.value(t, x, q);
                worst = worst.max(lambda);
            }
        }
        worst
    }
}

/// Eight probe directions at angles `i pi / 4`.
pub fn probe_directions() -> [Vec2; 8] {
    core::array::from_fn(|i| {
        let a = i as f64 * FRAC_PI_4;
        [cos(a), sin(a)]
    })
}

/// Smallest `H(q) - H(p) - b.(q - p)` over slabs, elements and the probes
/// `q = p + max(1, |p|) d_i`, with `p = grad u` on the element.
pub fn certificate_slack(
    ham: &dyn Hamiltonian,
    fes: &FeSpace<'_>,
    grid: &TimeGrid,
    u: &SpaceTimeField,
    b: &TransportField,
) -> f64 {
    let mesh = fes.mesh();
    let dirs = probe_directions();
    let mut worst = f64::INFINITY;
    for n in 1..=grid.n_steps() {
        let t = grid.midpoint(n);
        for k in 0..mesh.n_triangles() {
            let x = mesh.centroid(k);
            let p = fes.element_gradient(k, u.slab(n));
            let z = b.slab(n)[k];
            let hp = ham.value(t, x, p);
            let scale = norm(p).max(1.0);
            for d in &dirs {
                let step = [scale * d[0], scale * d[1]];
                let q = [p[0] + step[0], p[1] + step[1]];
                worst = worst.min(ham.value(t, x, q) - hp - dot(z, step));
            }
        }
    }
    worst
}

/// Builds the solver and runs it from a zero drift.
pub fn solve(
    problem: &ProblemSpec,
    mesh: &Mesh,
    grid: TimeGrid,
    weights: &EdgeWeights,
    opts: SolverOptions,
) -> Result<MfgSolution> {
    MfgSolver::new(problem, mesh, grid, weights, opts)?.run(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::default_weights;
    use crate::mesh::generate_uniform_unit_square;
    use crate::problem::{manufactured, trivial};

    #[test]
    fn trivial_problem_converges_at_once() {
        let mesh = generate_uniform_unit_square(4).unwrap();
        let w = default_weights(&mesh, 1.0, 1.0).unwrap();
        let p = trivial();
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let solver = MfgSolver::new(&p, &mesh, grid, &w, SolverOptions::default()).unwrap();
        let sol = solver.run(None).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.outer_iterations, 1);
        assert!(sol.u.slabs().iter().flatten().all(|v| *v == 0.0));
        assert!(sol.m.slabs().iter().flatten().all(|v| *v == 0.0));
        let audit = solver.residual_audit(&sol);
        assert!(audit.hjb <= 1e-14 && audit.kfp <= 1e-14);
        assert!(audit.certificate_slack >= 0.0);
    }

    #[test]
    fn preconditions_are_enforced() {
        let mesh = generate_uniform_unit_square(4).unwrap();
        let p = trivial();
        let w = default_weights(&mesh, 1.0, 1.0).unwrap();
        let coarse = TimeGrid::new(1.0, 1).unwrap();
        assert!(matches!(
            MfgSolver::new(&p, &mesh, coarse, &w, SolverOptions::default()),
            Err(Error::TimeStepTooLarge { .. })
        ));
        let weak = EdgeWeights(w.0.iter().map(|x| 0.5 * x).collect());
        let grid = TimeGrid::new(1.0, 5).unwrap();
        assert!(matches!(
            MfgSolver::new(&p, &mesh, grid, &weak, SolverOptions::default()),
            Err(Error::InadmissibleWeights { .. })
        ));
        let opts = SolverOptions { relaxation: 0.0, ..SolverOptions::default() };
        assert!(MfgSolver::new(&p, &mesh, grid, &w, opts).is_err());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mesh = generate_uniform_unit_square(4).unwrap();
        let w = default_weights(&mesh, 1.0, 1.0).unwrap();
        let (p, _) = manufactured();
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let opts = SolverOptions { max_outer: 1, ..SolverOptions::default() };
        match solve(&p, &mesh, grid, &w, opts) {
            Err(Error::NonConvergence { residual_history }) => assert_eq!(residual_history.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn probes_are_unit_vectors() {
        for d in probe_directions() {
            assert!((norm(d) - 1.0).abs() < 1e-15);
        }
    }
}
