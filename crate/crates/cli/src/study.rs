//! Convergence study over mesh levels: concurrent solves, CSV output and
//! observed orders.

use std::io::{self, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use mfg_core::analysis::{eoc, manufactured_run, ErrorReport, LevelResult};

use crate::config::Config;
use crate::error::CliError;

pub const HEADER: &str =
    "level,n,h,tau,Nk,outer_iters,rel_u_L2H1,rel_b_L2L2,rel_m_L2L2,rel_m_L2H1,rel_u0_L2,rel_mT_L2";

/// Worker count from `MFG_THREADS` (unset or 0: all available cores).
pub fn thread_count() -> Result<usize, CliError> {
    let auto = || thread::available_parallelism().map_or(1, usize::from);
    match std::env::var("MFG_THREADS") {
        Err(_) => Ok(auto()),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) => Ok(auto()),
            Ok(n) => Ok(n),
            Err(_) => Err(CliError::Validation(format!("MFG_THREADS must be a nonnegative integer, found `{v}`"))),
        },
    }
}

/// Solves every configured level with up to `threads` workers. The result
/// is ordered by level whatever the completion order. Levels that hit the
/// outer iteration cap are returned with `converged = false`.
pub fn run_study(cfg: &Config, threads: usize) -> Result<Vec<LevelResult>, CliError> {
    let jobs = cfg
        .levels
        .iter()
        .map(|&l| cfg.grid(l).map(|(n, grid)| (l, n, grid)))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = mfg_core::solver::SolverOptions { accept_unconverged: true, ..cfg.solver };
    // finest levels first so that the long solves start early
    let order: Vec<usize> = (0..jobs.len()).rev().collect();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<LevelResult, mfg_core::Error>>>> = Mutex::new(vec![None; jobs.len()]);
    let workers = threads.clamp(1, jobs.len().max(1));
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&job) = order.get(i) else { break };
                let (level, n, grid) = jobs[job];
                let r = manufactured_run(level, n, grid, cfg.weight_factor, opts, cfg.sampling);
                slots.lock().expect("no worker panics while holding the lock")[job] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers have finished")
        .into_iter()
        .map(|r| r.expect("every job ran").map_err(CliError::from))
        .collect()
}

/// `x` with 7 significant digits: positional notation for moderate
/// magnitudes, scientific otherwise.
pub fn sig7(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.6e}");
    let exp: i32 = sci[sci.find('e').expect("scientific format") + 1..].parse().expect("integer exponent");
    if (-5..7).contains(&exp) {
        format!("{x:.*}", (6 - exp).max(0) as usize)
    } else {
        sci
    }
}

fn rate_cell(r: Option<f64>) -> String {
    r.map_or_else(|| "undefined".into(), sig7)
}

pub fn data_row(r: &LevelResult) -> String {
    let e: &ErrorReport = &r.report;
    let mut cells = vec![
        r.level.to_string(),
        e.n.to_string(),
        sig7(e.h),
        sig7(e.tau),
        e.n_steps.to_string(),
        r.outer_iterations.to_string(),
    ];
    cells.extend(e.errors().iter().map(|v| sig7(*v)));
    cells.join(",")
}

/// Header, one row per level, then one `eoc` row per consecutive pair with
/// the pair in the `n` column and the six rates in the error columns.
pub fn write_csv(results: &[LevelResult], out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "{HEADER}")?;
    for r in results {
        writeln!(out, "{}", data_row(r))?;
    }
    let reports: Vec<ErrorReport> = results.iter().map(|r| r.report).collect();
    for (pair, rates) in results.windows(2).zip(eoc(&reports)) {
        let cells: Vec<String> = rates.iter().map(|r| rate_cell(*r)).collect();
        writeln!(out, "eoc,{}-{},,,,,{}", pair[0].level, pair[1].level, cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(level: u32, e: f64) -> LevelResult {
        LevelResult {
            level,
            report: ErrorReport {
                n: 1 << level,
                h: std::f64::consts::SQRT_2 / f64::from(1u32 << level),
                tau: 1.0 / f64::from((1u32 << level) + 1),
                n_steps: (1 << level) + 1,
                rel_u_l2h1: e,
                rel_b_l2l2: e,
                rel_m_l2l2: e,
                rel_m_l2h1: e,
                rel_u0_l2: 0.0,
                rel_mt_l2: e,
            },
            outer_iterations: 4,
            converged: true,
            max_picard_ratio: 0.5,
        }
    }

    #[test]
    fn seven_significant_digits() {
        assert_eq!(sig7(0.7006612), "0.7006612");
        assert_eq!(sig7(0.007949726), "0.007949726");
        assert_eq!(sig7(0.378799), "0.3787990");
        assert_eq!(sig7(1.0 / 9.0), "0.1111111");
        assert_eq!(sig7(0.9999999996), "1.000000");
        assert_eq!(sig7(12.0), "12.00000");
        assert_eq!(sig7(1.5e-7), "1.500000e-7");
        assert_eq!(sig7(-0.25), "-0.2500000");
        assert_eq!(sig7(0.0), "0");
        assert_eq!(sig7(f64::NAN), "NaN");
    }

    #[test]
    fn csv_layout() {
        let rows = [result(1, 0.4), result(2, 0.2), result(3, 0.1)];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 3 + 2);
        assert_eq!(lines[0], HEADER);
        assert_eq!(lines[2], "2,4,0.3535534,0.2000000,5,4,0.2000000,0.2000000,0.2000000,0.2000000,0,0.2000000");
        assert_eq!(lines[4], "eoc,1-2,,,,,1.000000,1.000000,1.000000,1.000000,undefined,1.000000");
        assert!(lines.iter().all(|l| l.split(',').count() == 12));
    }
}
