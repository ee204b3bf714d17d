//! Experiment orchestration: configuration, seeded parallel runs, CSV logs,
//! summary statistics and SVG figures.

mod config;
mod experiment;
mod stats;
mod svg;

pub use config::{default_out_dir, Algorithm, ExperimentConfig, Family, ProblemKind, OUT_ENV};
pub use experiment::{
    build_classic, build_diff, execute, read_run_csv, read_run_dir, run_experiment, run_file_name, run_single,
    write_outputs, write_run_csv, write_summary_csv, ExperimentResult, RunResult, SUMMARY_FILE, TIMING_FILE,
};
pub use stats::{abf_curve, mean_std, quartiles, BoxStats, CurvePoint, Summary};
pub use svg::{boxplot_svg, convergence_svg, write_svg};

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::problems::BenchmarkKind;

/// The four benchmark functions of the comparison grid.
pub const GRID_FUNCTIONS: [BenchmarkKind; 4] = [
    BenchmarkKind::Ackley,
    BenchmarkKind::Michalewicz,
    BenchmarkKind::Rosenbrock,
    BenchmarkKind::Griewank,
];

/// One configuration per algorithm on `(problem, dim)` with a budget of
/// `evals_per_dim * dim`, everything else taken from `base`.
pub fn grid_cell(base: &ExperimentConfig, algorithms: &[Algorithm], kind: BenchmarkKind, dim: usize, evals_per_dim: u64) -> Vec<ExperimentConfig> {
    algorithms
        .iter()
        .map(|&algorithm| ExperimentConfig {
            algorithm,
            problem: ProblemKind::Benchmark(kind),
            dim,
            max_evals: evals_per_dim * dim as u64,
            ..base.clone()
        })
        .collect()
}

/// Runs a set of configurations that share a problem, writes their logs and
/// a `<name>_convergence.svg` / `<name>_boxplot.svg` pair into `out`.
pub fn run_group(name: &str, configs: &[ExperimentConfig], out: &Path) -> Result<Vec<ExperimentResult>> {
    let mut results = Vec::new();
    for cfg in configs {
        let res = run_experiment(cfg)?;
        for w in &res.warnings {
            eprintln!("warning: {}: {w}", cfg.label());
        }
        results.push(res);
    }
    plot_results(name, &results, out)?;
    Ok(results)
}

pub fn plot_results(name: &str, results: &[ExperimentResult], out: &Path) -> Result<()> {
    let curves: Vec<(String, Vec<CurvePoint>)> = results
        .iter()
        .map(|r| (r.config.algorithm.to_string(), r.curve.clone()))
        .collect();
    let finals: Vec<(String, Vec<f64>)> = results
        .iter()
        .map(|r| (r.config.algorithm.to_string(), r.finals()))
        .collect();
    emit_pair(name, &curves, &finals, out)
}

fn emit_pair(name: &str, curves: &[(String, Vec<CurvePoint>)], finals: &[(String, Vec<f64>)], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_svg(&out.join(format!("{name}_convergence.svg")), &convergence_svg(name, curves)?)?;
    write_svg(&out.join(format!("{name}_boxplot.svg")), &boxplot_svg(name, finals)?)
}

/// Renders the figure pair from run logs on disk. Each directory is one
/// series, labelled by its name.
pub fn plot_dirs(name: &str, dirs: &[PathBuf], out: &Path) -> Result<()> {
    let mut curves = Vec::new();
    let mut finals = Vec::new();
    for dir in dirs {
        let runs = read_run_dir(dir)?;
        if runs.is_empty() {
            return Err(Error::Config(format!("{}: no run logs", dir.display())));
        }
        let label = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        finals.push((label.clone(), runs.iter().filter_map(|r| r.last()).map(|r| r.best_fitness).collect()));
        curves.push((label, abf_curve(&runs)));
    }
    emit_pair(name, &curves, &finals, out)
}

/// Summary line for terminal output.
pub fn describe(res: &ExperimentResult) -> String {
    let s = &res.summary;
    format!(
        "{:<40} runs {:>3}  min {:.6e}  median {:.6e}  mean {:.6e}  std {:.3e}  max {:.6e}",
        res.config.label(),
        s.n,
        s.min,
        s.median,
        s.mean,
        s.std,
        s.max
    )
}
