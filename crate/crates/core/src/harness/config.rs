use std::fmt;
use std::path::{Path, PathBuf};

use crate::diff::LossMode;
use crate::error::{Error, Result};
use crate::problems::{BenchmarkKind, MLP_PARAMS};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "DIFFEVO_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Pso,
    Ga,
    De,
    Cmaes,
    /// A single point trained by Adam alone.
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Algorithm {
    pub family: Family,
    pub diff: bool,
}

impl Algorithm {
    pub const fn classic(family: Family) -> Self {
        Algorithm { family, diff: false }
    }

    pub const fn diff(family: Family) -> Self {
        Algorithm { family, diff: true }
    }

    pub const ADAM: Algorithm = Algorithm::diff(Family::Adam);

    /// The eight population-based variants.
    pub const GRID: [Algorithm; 8] = [
        Algorithm::classic(Family::Pso),
        Algorithm::diff(Family::Pso),
        Algorithm::classic(Family::Ga),
        Algorithm::diff(Family::Ga),
        Algorithm::classic(Family::De),
        Algorithm::diff(Family::De),
        Algorithm::classic(Family::Cmaes),
        Algorithm::diff(Family::Cmaes),
    ];

    /// Accepts `adam` and `<pso|ga|de|cmaes>-<classic|diff>`.
    pub fn parse(s: &str) -> Option<Self> {
        if s == "adam" {
            return Some(Algorithm::ADAM);
        }
        let (fam, var) = s.split_once('-')?;
        let family = match fam {
            "pso" => Family::Pso,
            "ga" => Family::Ga,
            "de" => Family::De,
            "cmaes" => Family::Cmaes,
            _ => return None,
        };
        let diff = match var {
            "classic" => false,
            "diff" => true,
            _ => return None,
        };
        Some(Algorithm { family, diff })
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fam = match self.family {
            Family::Pso => "pso",
            Family::Ga => "ga",
            Family::De => "de",
            Family::Cmaes => "cmaes",
            Family::Adam => return f.write_str("adam"),
        };
        write!(f, "{fam}-{}", if self.diff { "diff" } else { "classic" })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Benchmark(BenchmarkKind),
    Wine,
}

impl ProblemKind {
    pub fn parse(s: &str) -> Option<Self> {
        if s == "wine" {
            return Some(ProblemKind::Wine);
        }
        BenchmarkKind::parse(s).map(ProblemKind::Benchmark)
    }

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Benchmark(k) => k.name(),
            ProblemKind::Wine => "wine",
        }
    }
}

/// Everything one experiment needs. Per-run seeds are `seed + run index`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub problem: ProblemKind,
    pub dim: usize,
    pub pop: usize,
    pub max_evals: u64,
    pub runs: usize,
    pub seed: u64,
    pub lr: f64,
    /// Halve the learning rate on plateaus.
    pub scheduler: bool,
    pub loss: LossMode,
    pub tau: f64,
    /// Half-width of the search box for the analytic benchmarks.
    pub bound: f64,
    pub out_dir: PathBuf,
    pub wine_path: PathBuf,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithm: Algorithm::diff(Family::Cmaes),
            problem: ProblemKind::Benchmark(BenchmarkKind::Ackley),
            dim: 30,
            pop: 100,
            max_evals: 150_000,
            runs: 30,
            seed: 0,
            lr: 0.01,
            scheduler: true,
            loss: LossMode::Best,
            tau: 1.0,
            bound: 100.0,
            out_dir: default_out_dir(),
            wine_path: PathBuf::from("data/winequality-red.csv"),
            threads: None,
        }
    }
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("bad value `{value}` for `{key}`"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

impl ExperimentConfig {
    /// The wine regression setup: population 30, 3000 evaluations, network
    /// weights searched in `[-10, 10]`. The Adam arm uses lr 0.001 with no
    /// schedule and so runs 3000 full-batch epochs.
    pub fn wine(algorithm: Algorithm) -> Self {
        let adam = algorithm.family == Family::Adam;
        ExperimentConfig {
            algorithm,
            problem: ProblemKind::Wine,
            dim: MLP_PARAMS,
            pop: if adam { 1 } else { 30 },
            max_evals: 3000,
            lr: if adam { 0.001 } else { 0.01 },
            scheduler: !adam,
            ..Default::default()
        }
    }

    /// Directory name for this configuration's files.
    pub fn label(&self) -> String {
        format!("{}_{}_{}d", self.algorithm, self.problem.name(), self.dim)
    }

    pub fn dir(&self) -> PathBuf {
        self.out_dir.join(self.label())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.runs == 0 {
            return fail("runs must be at least 1");
        }
        if self.dim == 0 {
            return fail("dim must be at least 1");
        }
        if self.pop == 0 {
            return fail("pop must be at least 1");
        }
        if self.max_evals < self.pop as u64 {
            return fail("budget must cover at least one population");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail("lr must be finite and non-negative");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return fail("tau must be positive");
        }
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return fail("bound must be positive");
        }
        if self.threads == Some(0) {
            return fail("threads must be at least 1");
        }
        if self.problem == ProblemKind::Wine && self.dim != MLP_PARAMS {
            return Err(Error::Config(format!("wine has {MLP_PARAMS} parameters, not {}", self.dim)));
        }
        if self.algorithm.family == Family::Adam && self.pop != 1 {
            return fail("adam trains a single point; set pop=1");
        }
        if self.algorithm.family == Family::Adam && !self.algorithm.diff {
            return fail("adam has no classic variant");
        }
        Ok(())
    }

    /// Applies one `key=value` setting. Keys mirror the command-line flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "algo" | "algorithm" => self.algorithm = Algorithm::parse(value).ok_or_else(|| bad(key, value))?,
            "problem" => {
                self.problem = ProblemKind::parse(value).ok_or_else(|| bad(key, value))?;
                if self.problem == ProblemKind::Wine {
                    self.dim = MLP_PARAMS;
                }
            }
            "dim" => self.dim = num(key, value)?,
            "pop" => self.pop = num(key, value)?,
            "budget" | "max_evals" => self.max_evals = num(key, value)?,
            "runs" => self.runs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "scheduler" => self.scheduler = num(key, value)?,
            "loss" => self.loss = LossMode::parse(value).ok_or_else(|| bad(key, value))?,
            "tau" => self.tau = num(key, value)?,
            "bound" => self.bound = num(key, value)?,
            "out" | "out_dir" => self.out_dir = PathBuf::from(value),
            "wine" | "wine_path" => self.wine_path = PathBuf::from(value),
            "threads" => self.threads = Some(num(key, value)?),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; blank lines and `#` comments are
    /// skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected key=value".into()))?;
            self.set(k.trim(), v.trim()).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::GRID.into_iter().chain([Algorithm::ADAM]) {
            assert_eq!(Algorithm::parse(&a.to_string()), Some(a));
        }
        assert_eq!(Algorithm::parse("cmaes"), None);
        assert_eq!(Algorithm::parse("adam-classic"), None);
    }

    #[test]
    fn file_settings_apply_in_order() {
        let mut cfg = ExperimentConfig::default();
        let text = "# grid cell\nalgo = de-classic\nproblem=griewank\n\ndim=5 # small\nbudget=500\n";
        cfg.apply_text(text, Path::new("x.cfg")).unwrap();
        assert_eq!(cfg.algorithm, Algorithm::classic(Family::De));
        assert_eq!(cfg.problem, ProblemKind::Benchmark(BenchmarkKind::Griewank));
        assert_eq!((cfg.dim, cfg.max_evals), (5, 500));
    }

    #[test]
    fn bad_lines_report_their_position() {
        let mut cfg = ExperimentConfig::default();
        let err = cfg.apply_text("runs=2\npop\n", Path::new("x.cfg")).unwrap_err();
        assert!(err.to_string().starts_with("x.cfg:2:"), "{err}");
        let err = cfg.apply_text("colour=red\n", Path::new("x.cfg")).unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn validation() {
        let ok = ExperimentConfig::default();
        assert!(ok.validate().is_ok());
        for (k, v) in [("dim", "0"), ("runs", "0"), ("budget", "99"), ("tau", "0"), ("lr", "-1")] {
            let mut cfg = ok.clone();
            cfg.set(k, v).unwrap();
            assert!(cfg.validate().is_err(), "{k}={v}");
        }
        let mut cfg = ok.clone();
        cfg.set("problem", "wine").unwrap();
        cfg.set("dim", "10").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn wine_setup() {
        let cfg = ExperimentConfig::wine(Algorithm::diff(Family::Cmaes));
        assert_eq!((cfg.pop, cfg.max_evals, cfg.dim), (30, 3000, 1665));
        cfg.validate().unwrap();
        let adam = ExperimentConfig::wine(Algorithm::ADAM);
        assert_eq!((adam.pop, adam.max_evals, adam.lr), (1, 3000, 0.001));
        adam.validate().unwrap();
    }
}
