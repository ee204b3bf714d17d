use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use diffevo::gradcheck;
use diffevo::harness::{
    self, describe, grid_cell, plot_dirs, run_experiment, run_group, Algorithm, ExperimentConfig, Family,
    ProblemKind, GRID_FUNCTIONS,
};
use diffevo::problems::BenchmarkKind;
use diffevo::{Error, Result};

#[derive(Parser)]
#[command(name = "diffevo", version, about = "Classical and differentiable PSO, GA, DE and CMA-ES")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment: `runs` seeded repetitions of one algorithm on one problem.
    Run(ConfigArgs),
    /// Benchmark grid: every algorithm on Ackley, Michalewicz, Rosenbrock and Griewank.
    Suite(SuiteArgs),
    /// Wine-quality network regression: differentiable CMA-ES against Adam.
    Wine(ConfigArgs),
    /// High-dimensional Michalewicz: classical against differentiable CMA-ES.
    Scale(ConfigArgs),
    /// Render convergence and box plots from run logs.
    Plot(PlotArgs),
    /// Finite-difference check of every op and of one generation per optimizer.
    Gradcheck,
}

/// Experiment settings. Precedence: defaults, then `--config`, then flags.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Flat `key=value` file using the flag names below as keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `adam` or `<pso|ga|de|cmaes>-<classic|diff>`.
    #[arg(long)]
    algo: Option<String>,
    /// sphere, ackley, griewank, rosenbrock, michalewicz or wine.
    #[arg(long)]
    problem: Option<String>,
    /// Search-space dimension.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    dim: Option<u64>,
    /// Population size (lower bound on the CMA-ES offspring count).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pop: Option<u64>,
    /// Fitness evaluations per run.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    budget: Option<u64>,
    /// Independent repetitions.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    runs: Option<u64>,
    /// Base seed; run i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Initial outer learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Halve the learning rate after 100 generations without improvement.
    #[arg(long)]
    scheduler: Option<bool>,
    /// Per-generation loss: best or mean.
    #[arg(long)]
    loss: Option<String>,
    /// Relaxation temperature.
    #[arg(long)]
    tau: Option<f64>,
    /// Half-width of the benchmark search box.
    #[arg(long)]
    bound: Option<f64>,
    /// Output directory (default: $DIFFEVO_OUT or ./results).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Semicolon-separated wine-quality file.
    #[arg(long)]
    wine: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
}

impl ConfigArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(p) = &self.config {
            cfg.apply_file(p)?;
        }
        let pairs: [(&str, Option<String>); 15] = [
            ("algo", self.algo.clone()),
            ("problem", self.problem.clone()),
            ("dim", self.dim.map(|v| v.to_string())),
            ("pop", self.pop.map(|v| v.to_string())),
            ("budget", self.budget.map(|v| v.to_string())),
            ("runs", self.runs.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
            ("scheduler", self.scheduler.map(|v| v.to_string())),
            ("loss", self.loss.clone()),
            ("tau", self.tau.map(|v| v.to_string())),
            ("bound", self.bound.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("wine", self.wine.as_ref().map(|p| p.display().to_string())),
            ("threads", self.threads.map(|v| v.to_string())),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        Ok(())
    }

    fn config(&self, mut cfg: ExperimentConfig) -> Result<ExperimentConfig> {
        self.apply(&mut cfg)?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SuiteArgs {
    /// Dimensions of the grid.
    #[arg(long, value_delimiter = ',', default_values_t = vec![30, 50])]
    dims: Vec<usize>,
    /// Functions of the grid.
    #[arg(long, value_delimiter = ',', default_values_t = GRID_FUNCTIONS.map(|k| k.name().to_string()).to_vec())]
    functions: Vec<String>,
    /// Budget is this many evaluations per dimension.
    #[arg(long, default_value_t = 5000)]
    evals_per_dim: u64,
    /// Shared settings; algorithm, problem, dimension and budget are set per cell.
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args)]
struct PlotArgs {
    /// Directories holding `run_*.csv` logs; one series each.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Figure name prefix.
    #[arg(long, default_value = "plot")]
    name: String,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn report(res: &harness::ExperimentResult) {
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", describe(res));
}

fn run(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::Run(args) => {
            let cfg = args.config(ExperimentConfig::default())?;
            let res = run_experiment(&cfg)?;
            report(&res);
            println!("logs in {}", cfg.dir().display());
        }
        Cmd::Suite(args) => {
            let base = args.common.config(ExperimentConfig::default())?;
            for f in &args.functions {
                let kind = BenchmarkKind::parse(f).ok_or_else(|| Error::Config(format!("unknown function `{f}`")))?;
                for &d in &args.dims {
                    let cells = grid_cell(&base, &Algorithm::GRID, kind, d, args.evals_per_dim);
                    let name = format!("{}_{d}d", kind.name());
                    for res in run_group(&name, &cells, &base.out_dir)? {
                        report(&res);
                    }
                }
            }
        }
        Cmd::Wine(args) => {
            let mut cfgs = Vec::new();
            for a in [Algorithm::diff(Family::Cmaes), Algorithm::ADAM] {
                let mut cfg = args.config(ExperimentConfig::wine(a))?;
                // The pair is fixed by the comparison.
                cfg.algorithm = a;
                cfgs.push(cfg);
            }
            let out = cfgs[0].out_dir.clone();
            for res in run_group("wine", &cfgs, &out)? {
                report(&res);
            }
        }
        Cmd::Scale(args) => {
            let base = ExperimentConfig {
                problem: ProblemKind::Benchmark(BenchmarkKind::Michalewicz),
                dim: 500,
                max_evals: 500_000,
                ..Default::default()
            };
            let base = args.config(base)?;
            let cfgs: Vec<ExperimentConfig> = [Algorithm::classic(Family::Cmaes), Algorithm::diff(Family::Cmaes)]
                .into_iter()
                .map(|algorithm| ExperimentConfig { algorithm, ..base.clone() })
                .collect();
            let name = format!("michalewicz_{}d", base.dim);
            for res in run_group(&name, &cfgs, &base.out_dir)? {
                report(&res);
            }
        }
        Cmd::Plot(args) => {
            plot_dirs(&args.name, &args.dirs, &args.out)?;
            println!("wrote {}", Path::new(&args.out).join(format!("{}_*.svg", args.name)).display());
        }
        Cmd::Gradcheck => {
            let checks = gradcheck::suite()?;
            let mut ok = true;
            for c in &checks {
                let mark = if c.passed() { "ok  " } else { "FAIL" };
                println!("{mark} {:<28} entries {:>3}  max rel err {:.3e}  {}", c.name, c.entries, c.max_rel_err, c.worst);
                ok &= c.passed();
            }
            println!("{} checks, tolerance {:e}", checks.len(), gradcheck::TOLERANCE);
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}\n\nsee --help for usage");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
