//! Property suite behind `mfg verify`. Every check draws from its own
//! generator, derived from the seed and the check's name, so the output is
//! reproducible and independent of the order the checks run in.

use std::fmt;

use mfg_core::analysis::{infsup_check, level_grid, tech_inequality_slack, WeightedNormContext};
use mfg_core::assembly::{
    assemble_diffusion, check_weights, default_weights, l2_norm, lumped_norm, Discretization, FeSpace,
    StabilizationTensor,
};
use mfg_core::hamiltonian::TransportField;
use mfg_core::mesh::{generate_uniform_unit_square, Mesh};
use mfg_core::problem::{manufactured, ManufacturedCase};
use mfg_core::solver::{MfgSolution, MfgSolver, SolverOptions};
use mfg_core::sparse::CsrMatrix;
use mfg_core::timestepping::{integration_by_parts, kfp_forward, Continuity, SpaceTimeField, TimeGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracle;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Check { name: name.into(), pass, detail }
    }

    fn error(name: &str, err: impl fmt::Display) -> Self {
        Check::new(name, false, err.to_string())
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub weight_factor: f64,
    /// Mesh subdivisions and slab count of the identity checks.
    pub n: usize,
    pub steps: usize,
    pub dmp_trials: usize,
    pub ibp_pairs: usize,
    pub lumped_vectors: usize,
    pub infsup_fields: usize,
    pub residual_points: usize,
    pub source_samples: usize,
    pub identity_levels: Vec<u32>,
    pub solve_level: u32,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 0,
            weight_factor: 1.0,
            n: 4,
            steps: 5,
            dmp_trials: 20,
            ibp_pairs: 50,
            lumped_vectors: 100,
            infsup_fields: 100,
            residual_points: 1000,
            source_samples: 10_000,
            identity_levels: (1..=5).collect(),
            solve_level: 2,
        }
    }
}

fn rng_for(seed: u64, name: &str) -> ChaCha8Rng {
    // FNV-1a of the name keeps the streams apart
    let tag = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3));
    ChaCha8Rng::seed_from_u64(seed ^ tag)
}

fn vector(rng: &mut ChaCha8Rng, n: usize, lo: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..1.0)).collect()
}

fn field(rng: &mut ChaCha8Rng, slabs: usize, n: usize, continuity: Continuity) -> SpaceTimeField {
    let s = (0..slabs).map(|_| vector(rng, n, -1.0)).collect();
    SpaceTimeField::new(s, vector(rng, n, -1.0), continuity).expect("consistent sizes")
}

/// Piecewise constant drift with values in the closed unit disc, which is
/// the range of the eikonal subdifferential.
pub fn random_transport(rng: &mut ChaCha8Rng, slabs: usize, elements: usize) -> TransportField {
    let data = (0..slabs)
        .map(|_| {
            (0..elements)
                .map(|_| {
                    let r = rng.gen_range(0.0f64..=1.0).sqrt();
                    let a = rng.gen_range(0.0..std::f64::consts::TAU);
                    [r * a.cos(), r * a.sin()]
                })
                .collect()
        })
        .collect();
    TransportField::from_slabs(data).expect("equal slab lengths")
}

fn discretization(mesh: &Mesh, weight_factor: f64) -> mfg_core::Result<Discretization<'_>> {
    let fes = FeSpace::new(mesh, 6)?;
    let w = default_weights(mesh, 1.0, weight_factor)?;
    Ok(Discretization::new(fes, StabilizationTensor::build(mesh, &w), 1.0))
}

/// Uniform mesh passes the cotangent audit.
pub fn mesh_audit(n: usize) -> Check {
    const NAME: &str = "mesh_audit";
    match generate_uniform_unit_square(n) {
        Ok(mesh) => {
            let a = mesh.audit();
            Check::new(
                NAME,
                a.xz_pass,
                format!("n={n} worst_edge_cot_sum={:.3e} delta={:.7}", a.worst_edge_cot_sum, a.shape_regularity_delta),
            )
        }
        Err(e) => Check::error(NAME, e),
    }
}

/// Weights `c_w |E|` clear the DMP threshold.
pub fn weight_precondition(n: usize, weight_factor: f64) -> Check {
    const NAME: &str = "weights";
    let run = || -> mfg_core::Result<f64> {
        let mesh = generate_uniform_unit_square(n)?;
        let w = default_weights(&mesh, 1.0, weight_factor)?;
        check_weights(&mesh, &w, 1.0)?;
        Ok(mesh.audit().shape_regularity_delta / 6.0)
    };
    match run() {
        Ok(threshold) => Check::new(NAME, true, format!("c_w={weight_factor} threshold={threshold:.7}")),
        Err(e) => Check::error(NAME, e),
    }
}

/// Off-diagonal entries of the stabilisation matrix against
/// `-omega_E |E|^-2 |omega_E support|` on every internal edge.
pub fn assembly_identity(levels: &[u32], weight_factor: f64) -> Check {
    const NAME: &str = "assembly_identity";
    let mut worst: f64 = 0.0;
    let mut entries = 0;
    for &level in levels {
        let mut run = || -> mfg_core::Result<()> {
            let mesh = generate_uniform_unit_square(level_grid(level)?.0)?;
            let fes = FeSpace::new(&mesh, 1)?;
            let w = default_weights(&mesh, 1.0, weight_factor)?;
            let d: CsrMatrix = assemble_diffusion(&fes, &StabilizationTensor::build(&mesh, &w), 0.0);
            for (e, edge) in mesh.edges().iter().enumerate() {
                let [a, b] = edge.vertices;
                let (Some(i), Some(j)) = (fes.dof(a), fes.dof(b)) else { continue };
                let support: f64 = edge.triangles().iter().map(|&t| mesh.area(t)).sum();
                let expected = -w.0[e] / (edge.length * edge.length) * support;
                worst = worst.max((d.get(i, j) - expected).abs()).max((d.get(j, i) - expected).abs());
                entries += 2;
            }
            Ok(())
        };
        if let Err(e) = run() {
            return Check::error(NAME, format!("level {level}: {e}"));
        }
    }
    Check::new(NAME, worst <= 1e-12, format!("{entries} entries, max deviation {worst:.3e}"))
}

/// Random KFP runs with nonnegative data stay nonnegative.
pub fn dmp(trials: usize, seed: u64, weight_factor: f64) -> Check {
    const NAME: &str = "dmp";
    let mut rng = rng_for(seed, NAME);
    let mut worst = f64::INFINITY;
    for trial in 0..trials {
        let n = [2usize, 4, 8, 16][rng.gen_range(0..4)];
        let steps = rng.gen_range(2..12);
        let run = |rng: &mut ChaCha8Rng| -> mfg_core::Result<f64> {
            let mesh = generate_uniform_unit_square(n)?;
            let disc = discretization(&mesh, weight_factor)?;
            let grid = TimeGrid::new(1.0, steps)?;
            let b = random_transport(rng, steps, mesh.n_triangles());
            let m0 = vector(rng, disc.n_dofs(), 0.0);
            let loads: Vec<Vec<f64>> = (0..steps)
                .map(|_| if rng.gen_bool(0.5) { vec![0.0; disc.n_dofs()] } else { vector(rng, disc.n_dofs(), 0.0) })
                .collect();
            Ok(kfp_forward(&disc, &grid, &b, &loads, &m0, 1e-13)?.min_value())
        };
        match run(&mut rng) {
            Ok(min) => worst = worst.min(min),
            Err(e) => return Check::error(NAME, format!("trial {trial}: {e}")),
        }
    }
    Check::new(NAME, worst >= -1e-12, format!("{trials} trials, min density {worst:.3e}"))
}

/// Discrete integration by parts on random forward/backward pairs.
pub fn integration_by_parts_pairs(pairs: usize, seed: u64) -> Check {
    const NAME: &str = "integration_by_parts";
    let mut rng = rng_for(seed, NAME);
    let mut worst: f64 = 0.0;
    for trial in 0..pairs {
        let n = [2usize, 3, 4, 6][trial % 4];
        let steps = rng.gen_range(1..8);
        let horizon = rng.gen_range(0.2..3.0);
        let run = |rng: &mut ChaCha8Rng| -> mfg_core::Result<f64> {
            let mesh = generate_uniform_unit_square(n)?;
            let fes = FeSpace::new(&mesh, 1)?;
            let grid = TimeGrid::new(horizon, steps)?;
            let v = field(rng, steps, fes.n_dofs(), Continuity::Forward);
            let w = field(rng, steps, fes.n_dofs(), Continuity::Backward);
            let (lhs, rhs) = integration_by_parts(&fes, &grid, &v, &w)?;
            Ok((lhs - rhs).abs() / (1.0 + rhs.abs()))
        };
        match run(&mut rng) {
            Ok(gap) => worst = worst.max(gap),
            Err(e) => return Check::error(NAME, e),
        }
    }
    Check::new(NAME, worst <= 1e-12, format!("{pairs} pairs, max gap {worst:.3e}"))
}

/// `||v||_Omega <= ||v||_{Omega,k}` on random vectors.
pub fn lumped_norm_inequality(vectors: usize, seed: u64) -> Check {
    const NAME: &str = "lumped_norm";
    let mut rng = rng_for(seed, NAME);
    let mut violations = 0;
    for _ in 0..vectors {
        let n = rng.gen_range(2..9);
        let mesh = generate_uniform_unit_square(n).expect("n >= 1");
        let fes = FeSpace::new(&mesh, 1).expect("degree 1 is supported");
        let v: Vec<f64> = (0..fes.n_dofs()).map(|_| rng.gen_range(-10.0..10.0)).collect();
        if l2_norm(&fes, &v) > lumped_norm(&fes, &v) * (1.0 + 1e-14) {
            violations += 1;
        }
    }
    Check::new(NAME, violations == 0, format!("{vectors} vectors, {violations} violations"))
}

/// Inf-sup identity and the technical inequality on random forward fields.
pub fn infsup_and_tech(n: usize, steps: usize, fields: usize, seed: u64, weight_factor: f64) -> Vec<Check> {
    let mut rng = rng_for(seed, "infsup");
    let run = |rng: &mut ChaCha8Rng| -> mfg_core::Result<(f64, f64)> {
        let mesh = generate_uniform_unit_square(n)?;
        let disc = discretization(&mesh, weight_factor)?;
        let grid = TimeGrid::new(1.0, steps)?;
        let ctx = WeightedNormContext::new(&grid, 1.0, 1.0)?;
        let (mut gap, mut slack): (f64, f64) = (0.0, f64::INFINITY);
        for _ in 0..fields {
            let w = field(rng, steps, disc.n_dofs(), Continuity::Forward);
            gap = gap.max(infsup_check(&w, &disc, &grid, &ctx)?.gap);
            slack = slack.min(tech_inequality_slack(&w, &disc, &grid, &ctx)?);
        }
        Ok((gap, slack))
    };
    match run(&mut rng) {
        Ok((gap, slack)) => vec![
            Check::new("infsup_identity", gap <= 1e-10, format!("{fields} fields, max gap {gap:.3e}")),
            Check::new("tech_inequality", slack >= -1e-10, format!("{fields} fields, min slack {slack:.3e}")),
        ],
        Err(e) => vec![Check::error("infsup_identity", &e), Check::error("tech_inequality", &e)],
    }
}

/// PDE residuals of the manufactured data against the independent oracle,
/// and nonnegativity of the source.
pub fn manufactured_residuals(points: usize, samples: usize, seed: u64) -> Check {
    const NAME: &str = "manufactured_residuals";
    let case = ManufacturedCase;
    let mut rng = rng_for(seed, NAME);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let t = rng.gen_range(0.0..=1.0);
        let (x, y) = (rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99));
        let p = [x, y];
        let ju = oracle::jet(oracle::u, t, x, y);
        let jm = oracle::jet(oracle::m, t, x, y);
        let hjb = -ju.t - ju.lap + ju.grad[0].hypot(ju.grad[1]) - (jm.v + case.f0(t, p));
        let kfp = jm.t - jm.lap - oracle::div_flux(t, x, y) - case.g(t, p);
        let ut = oracle::jet(oracle::u, 1.0, x, y).v;
        let terminal = ut - (oracle::jet(oracle::m, 1.0, x, y).v.tanh() + case.s0(p));
        worst = worst.max(hjb.abs()).max(kfp.abs()).max(terminal.abs());
    }
    let mut min_g = f64::INFINITY;
    for _ in 0..samples {
        let p = [rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)];
        min_g = min_g.min(case.g(rng.gen_range(0.0..=1.0), p));
    }
    Check::new(
        NAME,
        worst <= 1e-10 && min_g >= -1e-12,
        format!("{points} points, max residual {worst:.3e}; {samples} samples, min G {min_g:.3e}"),
    )
}

fn relative_gap(a: &SpaceTimeField, b: &SpaceTimeField, op: &CsrMatrix) -> f64 {
    let d = a.difference(b);
    let num: f64 = d.slabs().iter().map(|s| op.bilinear(s, s)).sum();
    let den: f64 = a.slabs().iter().map(|s| op.bilinear(s, s)).sum();
    if num == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// Manufactured solve on `level`: residual audit, positivity, subgradient
/// certificate, Picard contraction, and agreement with a second solve
/// started from a random drift.
pub fn solve_checks(level: u32, seed: u64, weight_factor: f64) -> Vec<Check> {
    let names = ["solve", "residual_audit", "density_nonnegative", "subgradient_certificate", "picard_contraction", "uniqueness"];
    let fail_all = |e: &dyn fmt::Display| names.iter().map(|n| Check::error(n, e)).collect::<Vec<_>>();
    let (n, grid) = match level_grid(level) {
        Ok(g) => g,
        Err(e) => return fail_all(&e),
    };
    let mesh = match generate_uniform_unit_square(n) {
        Ok(m) => m,
        Err(e) => return fail_all(&e),
    };
    let (problem, _) = manufactured();
    let solver = match default_weights(&mesh, 1.0, weight_factor)
        .and_then(|w| MfgSolver::new(&problem, &mesh, grid, &w, SolverOptions::default()))
    {
        Ok(s) => s,
        Err(e) => return fail_all(&e),
    };
    let sol: MfgSolution = match solver.run(None) {
        Ok(s) => s,
        Err(e) => return fail_all(&e),
    };
    let audit = solver.residual_audit(&sol);
    let gamma = grid.contraction_constant(1.0, 1.0);
    let ratio = sol.max_picard_ratio();
    let mut rng = rng_for(seed, "uniqueness");
    let b0 = random_transport(&mut rng, grid.n_steps(), mesh.n_triangles());
    let uniqueness = match solver.run(Some(&b0)) {
        Ok(other) => {
            let disc = solver.discretization();
            let du = relative_gap(&sol.u, &other.u, &disc.laplacian);
            let dm = relative_gap(&sol.m, &other.m, &disc.mass);
            Check::new(
                "uniqueness",
                du <= 1e-6 && dm <= 1e-6,
                format!("level {level}: gap u {du:.3e}, m {dm:.3e} ({} outer iterations)", other.outer_iterations),
            )
        }
        Err(e) => Check::error("uniqueness", e),
    };
    vec![
        Check::new(
            "solve",
            sol.converged,
            format!("level {level}: {} outer iterations, final change {:.3e}", sol.outer_iterations, sol.residual_history.last().copied().unwrap_or(0.0)),
        ),
        Check::new(
            "residual_audit",
            audit.hjb <= 1e-8 && audit.kfp <= 1e-8 && audit.terminal <= 1e-14,
            format!("hjb {:.3e}, kfp {:.3e}, terminal {:.3e}", audit.hjb, audit.kfp, audit.terminal),
        ),
        Check::new(
            "density_nonnegative",
            audit.min_density >= -1e-12,
            format!("min density {:.3e}", audit.min_density),
        ),
        Check::new(
            "subgradient_certificate",
            audit.certificate_slack >= -1e-10,
            format!("8 directions, min slack {:.3e}", audit.certificate_slack),
        ),
        Check::new(
            "picard_contraction",
            ratio <= gamma + 0.05,
            format!("max ratio {ratio:.7} against gamma {gamma:.7} + 0.05"),
        ),
        uniqueness,
    ]
}

/// The whole suite in a fixed order.
pub fn run_suite(cfg: &SuiteConfig) -> Vec<Check> {
    let mut checks = vec![
        weight_precondition(cfg.n, cfg.weight_factor),
        mesh_audit(cfg.n),
        assembly_identity(&cfg.identity_levels, cfg.weight_factor),
        dmp(cfg.dmp_trials, cfg.seed, cfg.weight_factor),
        integration_by_parts_pairs(cfg.ibp_pairs, cfg.seed),
        lumped_norm_inequality(cfg.lumped_vectors, cfg.seed),
    ];
    checks.extend(infsup_and_tech(cfg.n, cfg.steps, cfg.infsup_fields, cfg.seed, cfg.weight_factor));
    checks.push(manufactured_residuals(cfg.residual_points, cfg.source_samples, cfg.seed));
    checks.extend(solve_checks(cfg.solve_level, cfg.seed, cfg.weight_factor));
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_depend_on_name_and_seed() {
        let a: f64 = rng_for(1, "dmp").gen();
        let b: f64 = rng_for(1, "dmp").gen();
        let c: f64 = rng_for(1, "ibp").gen();
        let d: f64 = rng_for(2, "dmp").gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn weights_below_threshold_fail() {
        assert!(weight_precondition(4, 1.0).pass);
        let c = weight_precondition(4, 0.5);
        assert!(!c.pass);
        assert!(c.detail.contains("threshold"), "{}", c.detail);
    }

    #[test]
    fn display_format() {
        let c = Check::new("x", true, "ok".into());
        assert_eq!(c.to_string(), "PASS x: ok");
    }
}
