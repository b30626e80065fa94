use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mfg_cli::config::{Config, KeyValues, ProblemKind};
use mfg_cli::error::CliError;
use mfg_cli::meshio::{read_mesh, write_matrix};
use mfg_cli::study::{data_row, run_study, thread_count, write_csv, HEADER};
use mfg_cli::verify::{run_suite, SuiteConfig};
use mfg_core::analysis::{error_norms, LevelResult};
use mfg_core::assembly::{assemble_diffusion, default_weights, FeSpace, StabilizationTensor};
use mfg_core::mesh::{generate_uniform_unit_square, Mesh};
use mfg_core::problem::{manufactured, trivial};
use mfg_core::solver::{MfgSolution, MfgSolver, SolverOptions};
use mfg_core::timestepping::SpaceTimeField;

#[derive(Parser)]
#[command(name = "mfg", version, about = "Monotone finite element solver for mean field games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit a mesh for the cotangent condition and report its shape constants.
    MeshCheck(MeshCheckArgs),
    /// Solve a built-in problem on one level.
    Solve(SolveArgs),
    /// Run the manufactured convergence study and write the CSV table.
    Converge(ConvergeArgs),
    /// Run the property suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct MeshSource {
    /// Uniform triangulation of the unit square with N x N squares.
    #[arg(long, value_name = "N")]
    uniform: Option<usize>,
    /// Mesh in the text format.
    #[arg(long, value_name = "FILE")]
    file: Option<PathBuf>,
}

#[derive(Args)]
struct MeshCheckArgs {
    #[command(flatten)]
    source: MeshSource,
    /// Write the stabilised stiffness matrix as `i j value` lines.
    #[arg(long, value_name = "FILE")]
    dump_matrix: Option<PathBuf>,
    #[arg(long)]
    weight_factor: Option<f64>,
}

/// Settings shared by `solve` and `converge`; each one overrides the
/// corresponding key of the config file.
#[derive(Args)]
struct Common {
    /// Config file with `key = value` lines.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    weight_factor: Option<f64>,
    /// Explicit time step instead of 1 / (2^k + 1).
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    tol_fp: Option<f64>,
    #[arg(long)]
    relaxation: Option<f64>,
    #[arg(long)]
    picard_tol: Option<f64>,
    #[arg(long)]
    linear_tol: Option<f64>,
    /// Time sampling of the error norms: nodal or gauss.
    #[arg(long)]
    sampling: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// manufactured or trivial.
    #[arg(long)]
    problem: Option<String>,
    /// Level k: n = 2^k squares per side, 2^k + 1 time steps.
    #[arg(long)]
    level: Option<u32>,
    /// Write the stabilised stiffness matrix as `i j value` lines.
    #[arg(long, value_name = "FILE")]
    dump_matrix: Option<PathBuf>,
    /// Write `field slab x y value` lines for u and m.
    #[arg(long, value_name = "FILE")]
    dump_fields: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    common: Common,
    /// Levels as `a..b` or a comma separated list.
    #[arg(long)]
    levels: Option<String>,
    /// Add levels 7 and 8.
    #[arg(long)]
    deep: bool,
    /// CSV destination; standard output when absent.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run with this weight factor instead of 1.
    #[arg(long, value_name = "C_W")]
    break_weights: Option<f64>,
}

fn config(common: &Common, extra: &[(&str, Option<String>)]) -> Result<Config, CliError> {
    let mut kv = match &common.config {
        Some(path) => KeyValues::load(path)?,
        None => KeyValues::default(),
    };
    let mut flags = KeyValues::default();
    let pairs = [
        ("weight_factor", common.weight_factor.map(|v| v.to_string())),
        ("tau", common.tau.map(|v| v.to_string())),
        ("max_outer", common.max_outer.map(|v| v.to_string())),
        ("tol_fp", common.tol_fp.map(|v| v.to_string())),
        ("relaxation", common.relaxation.map(|v| v.to_string())),
        ("picard_tol", common.picard_tol.map(|v| v.to_string())),
        ("linear_tol", common.linear_tol.map(|v| v.to_string())),
        ("sampling", common.sampling.clone()),
    ];
    for (k, v) in pairs.iter().chain(extra) {
        if let Some(v) = v {
            flags.set(k, v.clone())?;
        }
    }
    kv.merge(&flags);
    Config::from_key_values(&kv)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn dump_stiffness(mesh: &Mesh, weight_factor: f64, path: &Path) -> Result<(), CliError> {
    let fes = FeSpace::new(mesh, 1)?;
    let w = default_weights(mesh, 1.0, weight_factor)?;
    let a = assemble_diffusion(&fes, &StabilizationTensor::build(mesh, &w), 1.0);
    let mut out = create(path)?;
    write_matrix(&a, &mut out).and_then(|_| out.flush()).map_err(|e| CliError::io(path, e))
}

fn mesh_check(args: &MeshCheckArgs) -> Result<(), CliError> {
    let mesh = match (&args.source.uniform, &args.source.file) {
        (Some(n), _) => generate_uniform_unit_square(*n)?,
        (None, Some(path)) => read_mesh(path)?,
        (None, None) => unreachable!("clap requires one source"),
    };
    let a = mesh.audit();
    println!(
        "vertices={} triangles={} interior={}",
        mesh.n_vertices(),
        mesh.n_triangles(),
        mesh.n_interior_vertices()
    );
    println!("xz_pass={} worst_edge_cot_sum={:.7e}", a.xz_pass, a.worst_edge_cot_sum);
    println!("delta={:.7} weight_threshold={:.7} h={:.7}", a.shape_regularity_delta, a.shape_regularity_delta / 6.0, a.max_h);
    if let Some(path) = &args.dump_matrix {
        dump_stiffness(&mesh, args.weight_factor.unwrap_or(1.0), path)?;
    }
    if a.xz_pass {
        Ok(())
    } else {
        Err(CliError::Validation("mesh fails the cotangent condition".into()))
    }
}

fn write_fields(mesh: &Mesh, fes: &FeSpace<'_>, sol: &MfgSolution, out: &mut impl Write) -> io::Result<()> {
    let steps = sol.u.n_steps();
    // m slab 0 is the initial value, u slab N + 1 the terminal value
    let mut records = vec![("m", 0, sol.m.initial())];
    for n in 1..=steps {
        records.push(("u", n, sol.u.slab(n)));
        records.push(("m", n, sol.m.slab(n)));
    }
    records.push(("u", steps + 1, sol.u.terminal()));
    for (name, slab, values) in records {
        for (dof, value) in values.iter().enumerate() {
            let x = mesh.vertices()[fes.vertex(dof)];
            writeln!(out, "{name} {slab} {:e} {:e} {value:e}", x[0], x[1])?;
        }
    }
    out.flush()
}

fn dump_fields(mesh: &Mesh, sol: &MfgSolution, path: &Path) -> Result<(), CliError> {
    let fes = FeSpace::new(mesh, 1)?;
    let mut out = create(path)?;
    write_fields(mesh, &fes, sol, &mut out).map_err(|e| CliError::io(path, e))
}

fn solve(args: &SolveArgs) -> Result<(), CliError> {
    let cfg = config(
        &args.common,
        &[("problem", args.problem.clone()), ("level", args.level.map(|l| l.to_string()))],
    )?;
    let (n, grid) = cfg.grid(cfg.level)?;
    let mesh = generate_uniform_unit_square(n)?;
    let (problem, case) = match cfg.problem {
        ProblemKind::Manufactured => {
            let (p, c) = manufactured();
            (p, Some(c))
        }
        ProblemKind::Trivial => (trivial(), None),
    };
    let weights = default_weights(&mesh, problem.hamiltonian.lipschitz(), cfg.weight_factor)?;
    let opts = SolverOptions { accept_unconverged: true, ..cfg.solver };
    let solver = MfgSolver::new(&problem, &mesh, grid, &weights, opts)?;
    let sol = solver.run(None)?;
    let audit = solver.residual_audit(&sol);
    println!("level={} n={n} h={:.7} tau={:.7} steps={}", cfg.level, mesh.max_h(), grid.tau(), grid.n_steps());
    println!(
        "outer_iterations={} converged={} final_change={:.7e}",
        sol.outer_iterations,
        sol.converged,
        sol.residual_history.last().copied().unwrap_or(0.0)
    );
    println!(
        "residual_hjb={:.7e} residual_kfp={:.7e} residual_terminal={:.7e}",
        audit.hjb, audit.kfp, audit.terminal
    );
    println!("min_density={:.7e} certificate_slack={:.7e}", audit.min_density, audit.certificate_slack);
    println!(
        "max_picard_ratio={:.7} gamma={:.7}",
        sol.max_picard_ratio(),
        grid.contraction_constant(problem.nu, problem.hamiltonian.lipschitz())
    );
    match case {
        Some(case) => {
            let mut report =
                error_norms(&sol.u, &sol.m, &sol.b, &case, &solver.discretization().fes, &grid, cfg.sampling);
            report.n = n;
            let row = LevelResult {
                level: cfg.level,
                report,
                outer_iterations: sol.outer_iterations,
                converged: sol.converged,
                max_picard_ratio: sol.max_picard_ratio(),
            };
            println!("{HEADER}");
            println!("{}", data_row(&row));
        }
        None => {
            let max_abs = |f: &SpaceTimeField| {
                f.slabs().iter().flatten().chain(f.endpoint()).fold(0.0f64, |a, v| a.max(v.abs()))
            };
            println!("max_abs_u={:e} max_abs_m={:e}", max_abs(&sol.u), max_abs(&sol.m));
        }
    }
    if let Some(path) = &args.dump_matrix {
        dump_stiffness(&mesh, cfg.weight_factor, path)?;
    }
    if let Some(path) = &args.dump_fields {
        dump_fields(&mesh, &sol, path)?;
    }
    if sol.converged {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!("no fixed point within {} outer iterations", sol.outer_iterations)))
    }
}

fn converge(args: &ConvergeArgs) -> Result<(), CliError> {
    let cfg = config(
        &args.common,
        &[
            ("levels", args.levels.clone()),
            ("deep", args.deep.then(|| "true".to_owned())),
            ("output", args.output.as_ref().map(|p| p.display().to_string())),
        ],
    )?;
    let results = run_study(&cfg, thread_count()?)?;
    match &cfg.output {
        Some(path) => {
            let mut out = create(path)?;
            write_csv(&results, &mut out).and_then(|_| out.flush()).map_err(|e| CliError::io(path, e))?;
        }
        None => {
            let mut out = io::stdout().lock();
            write_csv(&results, &mut out).map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    let stalled: Vec<String> = results.iter().filter(|r| !r.converged).map(|r| r.level.to_string()).collect();
    if stalled.is_empty() {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!("levels {} did not converge", stalled.join(","))))
    }
}

fn verify(args: &VerifyArgs) -> Result<(), CliError> {
    let cfg = SuiteConfig {
        seed: args.seed,
        weight_factor: args.break_weights.unwrap_or(1.0),
        ..SuiteConfig::default()
    };
    let checks = run_suite(&cfg);
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("failed checks: {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::MeshCheck(a) => mesh_check(a),
        Command::Solve(a) => solve(a),
        Command::Converge(a) => converge(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
