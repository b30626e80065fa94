//! Flat `key = value` configuration shared by all commands. Command line
//! flags are turned into the same pairs and override the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use mfg_core::analysis::{level_grid, TimeSampling};
use mfg_core::solver::SolverOptions;
use mfg_core::timestepping::TimeGrid;

use crate::error::CliError;

pub const KEYS: [&str; 15] = [
    "problem",
    "level",
    "levels",
    "deep",
    "weight_factor",
    "tau",
    "tol_fp",
    "max_outer",
    "relaxation",
    "picard_tol",
    "picard_max_iter",
    "linear_tol",
    "sampling",
    "output",
    "seed",
];

pub const DEFAULT_LEVELS: std::ops::RangeInclusive<u32> = 1..=6;
pub const DEEP_LEVELS: [u32; 2] = [7, 8];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues(BTreeMap<String, String>);

impl KeyValues {
    /// `#` starts a comment line; keys must be known.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut kv = KeyValues::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("config line {}: expected key = value", i + 1)))?;
            kv.set(k.trim(), v.trim())?;
        }
        Ok(kv)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), CliError> {
        if !KEYS.contains(&key) {
            return Err(CliError::Validation(format!("unknown config key `{key}`")));
        }
        self.0.insert(key.to_owned(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Entries of `other` win.
    pub fn merge(&mut self, other: &KeyValues) {
        self.0.extend(other.0.iter().map(|(k, v)| (k.clone(), v.clone())));
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.get(key)
            .map(|v| v.parse().map_err(|_| CliError::Validation(format!("cannot parse {key} = `{v}`"))))
            .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Manufactured,
    Trivial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub problem: ProblemKind,
    /// Level of a single solve.
    pub level: u32,
    /// Levels of a convergence study, strictly ascending.
    pub levels: Vec<u32>,
    pub weight_factor: f64,
    /// Explicit time step; `None` selects `tau_k = 1 / (2^k + 1)`.
    pub tau: Option<f64>,
    pub solver: SolverOptions,
    pub sampling: TimeSampling,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            problem: ProblemKind::Manufactured,
            level: 2,
            levels: DEFAULT_LEVELS.collect(),
            weight_factor: 1.0,
            tau: None,
            solver: SolverOptions::default(),
            sampling: TimeSampling::Nodal,
            output: None,
            seed: 0,
        }
    }
}

/// `"1..6"` (inclusive) or `"1,2,4"`.
pub fn parse_levels(s: &str) -> Result<Vec<u32>, CliError> {
    let bad = || CliError::Validation(format!("cannot parse levels `{s}`"));
    let levels: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if levels.is_empty() {
        return Err(CliError::Validation("levels must not be empty".into()));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Validation(format!("levels must be strictly ascending: `{s}`")));
    }
    Ok(levels)
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => Err(CliError::Validation(format!("{key} must be true or false, found `{v}`"))),
    }
}

impl Config {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, CliError> {
        let mut c = Config::default();
        if let Some(p) = kv.get("problem") {
            c.problem = match p {
                "manufactured" => ProblemKind::Manufactured,
                "trivial" => ProblemKind::Trivial,
                _ => return Err(CliError::Validation(format!("unknown problem `{p}`"))),
            };
        }
        if let Some(l) = kv.parsed("level")? {
            c.level = l;
        }
        if let Some(l) = kv.get("levels") {
            c.levels = parse_levels(l)?;
        }
        if kv.get("deep").map(|v| parse_bool("deep", v)).transpose()? == Some(true) {
            for l in DEEP_LEVELS {
                if c.levels.last().is_some_and(|&last| last < l) {
                    c.levels.push(l);
                }
            }
        }
        if let Some(w) = kv.parsed("weight_factor")? {
            c.weight_factor = w;
        }
        c.tau = kv.parsed("tau")?;
        let s = &mut c.solver;
        if let Some(v) = kv.parsed("tol_fp")? {
            s.tol_fp = v;
        }
        if let Some(v) = kv.parsed("max_outer")? {
            s.max_outer = v;
        }
        if let Some(v) = kv.parsed("relaxation")? {
            s.relaxation = v;
        }
        if let Some(v) = kv.parsed("picard_tol")? {
            s.picard.tolerance = v;
        }
        if let Some(v) = kv.parsed("picard_max_iter")? {
            s.picard.max_iterations = v;
        }
        if let Some(v) = kv.parsed("linear_tol")? {
            s.linear_tol = v;
            s.picard.linear_tol = v;
        }
        if let Some(v) = kv.get("sampling") {
            c.sampling = match v {
                "nodal" => TimeSampling::Nodal,
                "gauss" => TimeSampling::SlabGauss,
                _ => return Err(CliError::Validation(format!("sampling must be nodal or gauss, found `{v}`"))),
            };
        }
        c.output = kv.get("output").map(PathBuf::from);
        if let Some(v) = kv.parsed("seed")? {
            c.seed = v;
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::Validation(format!("{name} must be positive, found {v}")))
            }
        };
        positive("weight_factor", self.weight_factor)?;
        positive("tol_fp", self.solver.tol_fp)?;
        positive("picard_tol", self.solver.picard.tolerance)?;
        positive("linear_tol", self.solver.linear_tol)?;
        if let Some(t) = self.tau {
            positive("tau", t)?;
        }
        if self.solver.max_outer == 0 || self.solver.picard.max_iterations == 0 {
            return Err(CliError::Validation("iteration caps must be at least 1".into()));
        }
        if !(self.solver.relaxation > 0.0 && self.solver.relaxation <= 1.0) {
            return Err(CliError::Validation("relaxation must lie in (0, 1]".into()));
        }
        for l in self.levels.iter().chain([&self.level]) {
            level_grid(*l).map_err(|e| CliError::Validation(format!("level {l}: {e}")))?;
        }
        Ok(())
    }

    /// Mesh subdivisions and time grid for `level` on `[0, 1]`.
    pub fn grid(&self, level: u32) -> Result<(usize, TimeGrid), CliError> {
        let (n, default) = level_grid(level)?;
        let Some(tau) = self.tau else { return Ok((n, default)) };
        let steps = (1.0 / tau).round();
        if steps < 1.0 || (steps * tau - 1.0).abs() > 1e-9 {
            return Err(CliError::Validation(format!("tau = {tau} does not divide the horizon 1")));
        }
        Ok((n, TimeGrid::new(1.0, steps as usize)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let mut kv = KeyValues::parse("# study\nlevels = 1..3\nweight_factor=2\n\nmax_outer = 7\n").unwrap();
        let mut flags = KeyValues::default();
        flags.set("max_outer", "9").unwrap();
        kv.merge(&flags);
        let c = Config::from_key_values(&kv).unwrap();
        assert_eq!(c.levels, vec![1, 2, 3]);
        assert_eq!(c.weight_factor, 2.0);
        assert_eq!(c.solver.max_outer, 9);
    }

    #[test]
    fn defaults() {
        let c = Config::from_key_values(&KeyValues::default()).unwrap();
        assert_eq!(c.levels, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(c.solver, SolverOptions::default());
        assert_eq!(c.sampling, TimeSampling::Nodal);
        let (n, grid) = c.grid(3).unwrap();
        assert_eq!((n, grid.n_steps()), (8, 9));
        assert!((grid.tau() - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn deep_appends_the_fine_levels() {
        let mut kv = KeyValues::default();
        kv.set("deep", "true").unwrap();
        assert_eq!(Config::from_key_values(&kv).unwrap().levels, (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn level_lists() {
        assert_eq!(parse_levels("2, 4,5").unwrap(), vec![2, 4, 5]);
        assert!(parse_levels("3..1").is_err());
        assert!(parse_levels("2,2").is_err());
        assert!(parse_levels("x").is_err());
    }

    #[test]
    fn explicit_tau() {
        let mut kv = KeyValues::default();
        kv.set("tau", "0.25").unwrap();
        let c = Config::from_key_values(&kv).unwrap();
        assert_eq!(c.grid(2).unwrap().1.n_steps(), 4);
        kv.set("tau", "0.3").unwrap();
        let c = Config::from_key_values(&kv).unwrap();
        assert!(matches!(c.grid(2), Err(CliError::Validation(_))));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(KeyValues::parse("colour = red").is_err());
        assert!(KeyValues::parse("levels").is_err());
        for (k, v) in [("relaxation", "0"), ("level", "0"), ("problem", "other"), ("max_outer", "-1"), ("deep", "maybe")]
        {
            let mut kv = KeyValues::default();
            kv.set(k, v).unwrap();
            assert!(matches!(Config::from_key_values(&kv), Err(CliError::Validation(_))), "{k}");
        }
    }
}
