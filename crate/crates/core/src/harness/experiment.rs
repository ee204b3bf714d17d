use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{Algorithm, ExperimentConfig, Family, ProblemKind};
use super::stats::{abf_curve, CurvePoint, Summary};
use crate::classic::{ClassicOptimizer, CmaEs, CmaesConfig, De, DeConfig, Ga, GaConfig, Pso, PsoConfig};
use crate::diff::{
    DiffAlgorithm, DiffCmaEs, DiffCmaesConfig, DiffDe, DiffDeConfig, DiffGa, DiffGaConfig, DiffPso, DiffPsoConfig,
};
use crate::error::{Error, Result};
use crate::outer::{run_classic, run_loop, Adam, GradientOnly, PlateauScheduler, RunOutcome, RunRecord};
use crate::problems::{parse_wine, Benchmark, BoxDomain, Objective, Problem, WineRegression};
use crate::relax::Rng;

/// Offset separating the wine target-noise stream from the optimizer's.
const DATA_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMING_FILE: &str = "timing.txt";

pub fn run_file_name(run: usize) -> String {
    format!("run_{run:03}.csv")
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub records: Vec<RunRecord>,
    /// Set when the run stopped early; its records are kept but it is left
    /// out of the summary.
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub runs: Vec<RunResult>,
    pub summary: Summary,
    pub curve: Vec<CurvePoint>,
    pub warnings: Vec<String>,
}

impl ExperimentResult {
    /// Final best fitness of each completed run.
    pub fn finals(&self) -> Vec<f64> {
        completed(&self.runs).filter_map(|r| r.records.last()).map(|r| r.best_fitness).collect()
    }
}

fn completed(runs: &[RunResult]) -> impl Iterator<Item = &RunResult> {
    runs.iter().filter(|r| r.error.is_none() && !r.records.is_empty())
}

/// Shared read-only inputs: the raw wine file is read once and re-noised per
/// run.
struct Inputs {
    wine_text: Option<String>,
}

impl Inputs {
    fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let wine_text = match cfg.problem {
            ProblemKind::Wine => {
                Some(std::fs::read_to_string(&cfg.wine_path).map_err(|e| Error::io(&cfg.wine_path, e))?)
            }
            ProblemKind::Benchmark(_) => None,
        };
        Ok(Inputs { wine_text })
    }

    fn problem(&self, cfg: &ExperimentConfig, seed: u64) -> Result<Arc<dyn Problem>> {
        Ok(match cfg.problem {
            ProblemKind::Benchmark(kind) => Arc::new(Benchmark::with_bound(kind, cfg.dim, cfg.bound)?),
            ProblemKind::Wine => {
                let text = self.wine_text.as_deref().unwrap_or_default();
                let data = parse_wine(text, &cfg.wine_path, seed.wrapping_add(DATA_SEED_OFFSET))?;
                Arc::new(WineRegression::new(&data)?)
            }
        })
    }
}

pub fn build_classic(
    algorithm: Algorithm,
    pop: usize,
    domain: BoxDomain,
    rng: Rng,
) -> Result<Box<dyn ClassicOptimizer>> {
    Ok(match algorithm.family {
        Family::Pso => Box::new(Pso::new(PsoConfig { pop, ..Default::default() }, domain, rng)),
        Family::Ga => Box::new(Ga::new(GaConfig { pop, ..Default::default() }, domain, rng)?),
        Family::De => Box::new(De::new(DeConfig { pop, ..Default::default() }, domain, rng)?),
        Family::Cmaes => Box::new(CmaEs::new(CmaesConfig { pop, ..Default::default() }, domain, rng)),
        Family::Adam => return Err(Error::Config("adam has no classic variant".into())),
    })
}

pub fn build_diff(cfg: &ExperimentConfig, domain: BoxDomain, mut rng: Rng) -> Result<Box<dyn DiffAlgorithm>> {
    let (pop, loss, tau) = (cfg.pop, cfg.loss, cfg.tau);
    Ok(match cfg.algorithm.family {
        Family::Pso => Box::new(DiffPso::new(
            DiffPsoConfig {
                pso: PsoConfig { pop, ..Default::default() },
                loss,
            },
            domain,
            rng,
        )?),
        Family::Ga => Box::new(DiffGa::new(
            DiffGaConfig {
                ga: GaConfig { pop, ..Default::default() },
                loss,
                tau,
            },
            domain,
            rng,
        )?),
        Family::De => Box::new(DiffDe::new(
            DiffDeConfig {
                de: DeConfig { pop, ..Default::default() },
                loss,
                tau,
                ..Default::default()
            },
            domain,
            rng,
        )?),
        Family::Cmaes => Box::new(DiffCmaEs::new(
            DiffCmaesConfig {
                cmaes: CmaesConfig { pop, ..Default::default() },
                loss,
                ..Default::default()
            },
            domain,
            rng,
        )?),
        Family::Adam => Box::new(GradientOnly::new(&domain, &mut rng)?),
    })
}

/// Runs one seeded repetition. Setup failures are reported like run failures.
pub fn run_single(cfg: &ExperimentConfig, run: usize) -> Result<RunResult> {
    Ok(run_with(cfg, &Inputs::load(cfg)?, run))
}

fn run_with(cfg: &ExperimentConfig, inputs: &Inputs, run: usize) -> RunResult {
    let seed = cfg.seed.wrapping_add(run as u64);
    let start = Instant::now();
    let outcome = (|| -> Result<RunOutcome> {
        let mut obj = Objective::new(inputs.problem(cfg, seed)?);
        let domain = obj.domain().clone();
        let rng = Rng::seed_from(seed);
        Ok(if cfg.algorithm.diff {
            let mut alg = build_diff(cfg, domain, rng)?;
            let mut adam = Adam::with_lr(cfg.lr);
            let mut sched = cfg.scheduler.then(PlateauScheduler::default);
            run_loop(alg.as_mut(), &mut obj, cfg.max_evals, &mut adam, sched.as_mut(), run)
        } else {
            let mut alg = build_classic(cfg.algorithm, cfg.pop, domain, rng)?;
            run_classic(alg.as_mut(), &mut obj, cfg.max_evals, run)
        })
    })();
    let (records, error) = match outcome {
        Ok(o) => (o.records, o.error.map(|e| e.to_string())),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    RunResult {
        run,
        seed,
        records,
        error,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs every repetition on a worker pool, writes one CSV per run, a summary
/// CSV and a timing file under `cfg.dir()`, and returns the statistics.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let result = execute(cfg)?;
    write_outputs(&result)?;
    Ok(result)
}

/// Like [`run_experiment`] but writes nothing.
pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let inputs = Inputs::load(cfg)?;
    let work = || {
        (0..cfg.runs)
            .into_par_iter()
            .map(|run| run_with(cfg, &inputs, run))
            .collect::<Vec<_>>()
    };
    let runs = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let warnings: Vec<String> = runs
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("run {} (seed {}) failed: {e}", r.run, r.seed)))
        .collect();
    let finals: Vec<f64> = completed(&runs).filter_map(|r| r.records.last()).map(|r| r.best_fitness).collect();
    let summary = Summary::of(&finals).map_err(|_| Error::State(format!("{}: every run failed", cfg.label())))?;
    let series: Vec<Vec<RunRecord>> = completed(&runs).map(|r| r.records.clone()).collect();
    Ok(ExperimentResult {
        config: cfg.clone(),
        curve: abf_curve(&series),
        runs,
        summary,
        warnings,
    })
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

pub fn write_outputs(result: &ExperimentResult) -> Result<()> {
    let dir = result.config.dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for r in &result.runs {
        write_run_csv(&dir.join(run_file_name(r.run)), &r.records)?;
    }
    write_summary_csv(&dir.join(SUMMARY_FILE), &result.config, &result.summary)?;
    let mut timing = String::from("run seconds\n");
    for r in &result.runs {
        let _ = writeln!(timing, "{} {:.3}", r.run, r.seconds);
    }
    let path = dir.join(TIMING_FILE);
    std::fs::write(&path, timing).map_err(|e| Error::io(&path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("{other:?}"),
        },
    }
}

/// Header `run,generation,n_evals,best_fitness,lr` followed by the
/// hyperparameter names of the first record.
pub fn write_run_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<String> = ["run", "generation", "n_evals", "best_fitness", "lr"]
        .map(String::from)
        .to_vec();
    if let Some(first) = records.first() {
        header.extend(first.hyperparams.iter().map(|(k, _)| k.clone()));
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in records {
        let mut row = vec![
            r.run.to_string(),
            r.generation.to_string(),
            r.n_evals.to_string(),
            fmt_f(r.best_fitness),
            fmt_f(r.lr),
        ];
        row.extend(r.hyperparams.iter().map(|(_, v)| fmt_f(*v)));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_run_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rd.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() < 5 || &header[3] != "best_fitness" {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "not a run log".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(5).map(String::from).collect();
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let field = |j: usize| -> Result<&str> {
            row.get(j).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                msg: format!("missing column {}", j + 1),
            })
        };
        let num = |j: usize| -> Result<f64> {
            let s = field(j)?;
            s.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                msg: format!("cannot parse `{s}`"),
            })
        };
        out.push(RunRecord {
            run: num(0)? as usize,
            generation: num(1)? as u64,
            n_evals: num(2)? as u64,
            best_fitness: num(3)?,
            lr: num(4)?,
            hyperparams: names
                .iter()
                .enumerate()
                .map(|(k, n)| Ok((n.clone(), num(5 + k)?)))
                .collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

pub fn write_summary_csv(path: &Path, cfg: &ExperimentConfig, s: &Summary) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = [
        "algorithm", "problem", "dim", "pop", "max_evals", "runs", "completed", "min", "max", "median", "mean", "std",
        "q1", "q3",
    ];
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    let row = [
        cfg.algorithm.to_string(),
        cfg.problem.name().to_string(),
        cfg.dim.to_string(),
        cfg.pop.to_string(),
        cfg.max_evals.to_string(),
        cfg.runs.to_string(),
        s.n.to_string(),
        fmt_f(s.min),
        fmt_f(s.max),
        fmt_f(s.median),
        fmt_f(s.mean),
        fmt_f(s.std),
        fmt_f(s.q1),
        fmt_f(s.q3),
    ];
    w.write_record(&row).map_err(|e| csv_err(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-run logs found in `dir`, sorted by file name.
pub fn read_run_dir(dir: &Path) -> Result<Vec<Vec<RunRecord>>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("run_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    files.iter().map(|p| read_run_csv(p)).collect()
}
