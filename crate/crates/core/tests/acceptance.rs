//! Acceptance run: one PASS/FAIL line per criterion, at the stated scale.
//!
//! Failing criteria are reported, not hidden. The process exits 0 unless
//! `ACCEPTANCE_STRICT` is set, so a long run still leaves its full report.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use diffevo::classic::{ClassicOptimizer, CmaEs, CmaesConfig, De, DeConfig, Ga, GaConfig, Pso, PsoConfig};
use diffevo::diff::{DiffAlgorithm, DiffDe, DiffDeConfig, DiffPso, DiffPsoConfig};
use diffevo::gradcheck;
use diffevo::harness::{execute, run_experiment, Algorithm, ExperimentConfig, Family, ProblemKind, ExperimentResult};
use diffevo::outer::Adam;
use diffevo::problems::{Benchmark, BenchmarkKind, Objective, Problem};
use diffevo::relax::{gumbel_sigmoid_with, gumbel_softmax_rows, RelaxConfig, Rng};
use diffevo::tape::Tape;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Check = fn() -> Result<Outcome, String>;

fn benchmark(kind: BenchmarkKind, d: usize) -> Arc<dyn Problem> {
    Arc::new(Benchmark::new(kind, d).unwrap())
}

fn gradient_suite() -> Result<Outcome, String> {
    let t = Instant::now();
    let checks = gradcheck::suite().map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    let worst = checks.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
    Ok(outcome(
        failed.is_empty() && secs < 60.0,
        format!("{} checks, max rel err {worst:.2e}, {secs:.1} s, failed {failed:?}", checks.len()),
    ))
}

fn within(count: usize, n: usize, p: f64) -> (bool, f64) {
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    let rate = count as f64 / n as f64;
    ((rate - p).abs() <= 3.0 * sd, (rate - p) / sd)
}

fn relaxation_statistics() -> Result<Outcome, String> {
    const N: usize = 100_000;
    let mut rng = Rng::seed_from(2024);
    let mut t = Tape::new();
    let mut ok = true;
    let mut notes = Vec::new();
    for alpha in [-2.0, 0.0, 2.0] {
        t.reset();
        let a = t.scalar(alpha);
        let noise = t.constant(rng.logistic_vec(N), N, 1).map_err(|e| e.to_string())?;
        let m = gumbel_sigmoid_with(&mut t, a, noise, RelaxConfig::default()).map_err(|e| e.to_string())?;
        let hits = t.value(m).iter().filter(|&&v| v == 1.0).count();
        let (good, z) = within(hits, N, 1.0 / (1.0 + (-alpha as f64).exp()));
        ok &= good;
        notes.push(format!("mask a={alpha}: z {z:+.2}"));
    }
    let k = 4;
    t.reset();
    let logits = t.constant(vec![0.0; N * k], N, k).map_err(|e| e.to_string())?;
    let noise = t.constant(rng.gumbel_vec(N * k), N, k).map_err(|e| e.to_string())?;
    let s = gumbel_softmax_rows(&mut t, logits, noise, RelaxConfig::default()).map_err(|e| e.to_string())?;
    let mut counts = vec![0; k];
    for row in t.value(s).chunks(k) {
        counts[row.iter().position(|&v| v == 1.0).unwrap()] += 1;
    }
    for (c, count) in counts.iter().enumerate() {
        let (good, z) = within(*count, N, 1.0 / k as f64);
        ok &= good;
        notes.push(format!("cat {c}: z {z:+.2}"));
    }
    Ok(outcome(ok, notes.join(", ")))
}

fn classical_oracles() -> Result<Outcome, String> {
    let sphere = benchmark(BenchmarkKind::Sphere, 10);
    let mut obj = Objective::new(sphere);
    let mut es = CmaEs::new(CmaesConfig { pop: 0, ..Default::default() }, obj.domain().clone(), Rng::seed_from(0));
    while obj.n_evals() + es.pop_size() as u64 <= 10_000 {
        es.generation(&mut obj).map_err(|e| e.to_string())?;
    }
    let cma = es.best_fitness();

    let p = benchmark(BenchmarkKind::Rosenbrock, 10);
    let mut obj = Objective::new(p.clone());
    let mut de = De::new(DeConfig { pop: 20, ..Default::default() }, obj.domain().clone(), Rng::seed_from(1))
        .map_err(|e| e.to_string())?;
    de.generation(&mut obj).map_err(|e| e.to_string())?;
    let mut de_ok = true;
    for _ in 0..100 {
        let before = de.fitness().to_vec();
        de.generation(&mut obj).map_err(|e| e.to_string())?;
        de_ok &= before.iter().zip(de.fitness()).all(|(b, a)| a <= b);
    }

    let monotone = |alg: &mut dyn ClassicOptimizer| -> Result<bool, String> {
        let mut obj = Objective::new(p.clone());
        let mut last = f64::INFINITY;
        let mut ok = true;
        for _ in 0..100 {
            alg.generation(&mut obj).map_err(|e| e.to_string())?;
            ok &= alg.best_fitness() <= last;
            last = alg.best_fitness();
        }
        Ok(ok)
    };
    let domain = p.domain().clone();
    let mut ga = Ga::new(GaConfig { pop: 20, ..Default::default() }, domain.clone(), Rng::seed_from(2))
        .map_err(|e| e.to_string())?;
    let mut pso = Pso::new(PsoConfig { pop: 20, ..Default::default() }, domain, Rng::seed_from(3));
    let ga_ok = monotone(&mut ga)?;
    let pso_ok = monotone(&mut pso)?;
    Ok(outcome(
        cma < 1e-8 && de_ok && ga_ok && pso_ok,
        format!("cma-es sphere {cma:.2e} in 10000 evals, de slots monotone {de_ok}, ga {ga_ok}, pso {pso_ok}"),
    ))
}

fn step(alg: &mut dyn DiffAlgorithm, obj: &mut Objective, adam: &mut Adam) -> Result<(), String> {
    alg.tape_mut().zero_grad();
    let loss = alg.generation(obj).map_err(|e| e.to_string())?;
    alg.tape_mut().backward(loss).map_err(|e| e.to_string())?;
    adam.step(alg.tape_mut()).map_err(|e| e.to_string())?;
    alg.update_state().map_err(|e| e.to_string())
}

fn gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

fn zero_learning_equivalence() -> Result<Outcome, String> {
    let mut worst: f64 = 0.0;
    for (seed, kind) in [(1, BenchmarkKind::Ackley), (2, BenchmarkKind::Rosenbrock), (3, BenchmarkKind::Griewank)] {
        let p = benchmark(kind, 3);
        let domain = p.domain().clone();
        let cfg = PsoConfig { pop: 5, ..Default::default() };
        let mut cp = Pso::new(cfg.clone(), domain.clone(), Rng::seed_from(seed));
        let mut dp = DiffPso::new(DiffPsoConfig { pso: cfg, ..Default::default() }, domain.clone(), Rng::seed_from(seed))
            .map_err(|e| e.to_string())?;
        let cfg = DeConfig { pop: 5, ..Default::default() };
        let mut cd = De::new(cfg.clone(), domain.clone(), Rng::seed_from(seed)).map_err(|e| e.to_string())?;
        let dcfg = DiffDeConfig { de: cfg, hard_selection: true, ..Default::default() };
        let mut dd = DiffDe::new(dcfg, domain, Rng::seed_from(seed)).map_err(|e| e.to_string())?;
        let mut objs: Vec<Objective> = (0..4).map(|_| Objective::new(p.clone())).collect();
        let mut adam = Adam::with_lr(0.0);
        // initial evaluation, then three moves
        for _ in 0..4 {
            let [o1, o2, o3, o4] = &mut objs[..] else { unreachable!() };
            cp.generation(o1).map_err(|e| e.to_string())?;
            step(&mut dp, o2, &mut adam)?;
            cd.generation(o3).map_err(|e| e.to_string())?;
            step(&mut dd, o4, &mut adam)?;
            worst = worst
                .max(gap(cp.positions(), dp.positions()))
                .max(gap(cp.velocities(), dp.velocities()))
                .max(gap(&[cp.best_fitness()], &[dp.best_fitness()]))
                .max(gap(cd.population(), dd.population()))
                .max(gap(cd.fitness(), dd.fitness()));
        }
    }
    Ok(outcome(worst <= 1e-10, format!("max deviation {worst:.2e} (pso and de, N=5, D=3, 3 moves, 3 seeds)")))
}

fn wine_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/winequality-red.csv")
}

fn scratch_dir() -> PathBuf {
    std::env::temp_dir().join(format!("diffevo-acceptance-{}", std::process::id()))
}

fn run(cfg: ExperimentConfig) -> Result<ExperimentResult, String> {
    let res = execute(&cfg).map_err(|e| e.to_string())?;
    if !res.warnings.is_empty() {
        return Err(res.warnings.join("; "));
    }
    Ok(res)
}

fn wine_regression() -> Result<Outcome, String> {
    let mut means = Vec::new();
    for algorithm in [Algorithm::diff(Family::Cmaes), Algorithm::ADAM] {
        let cfg = ExperimentConfig {
            runs: 10,
            wine_path: wine_path(),
            out_dir: scratch_dir(),
            ..ExperimentConfig::wine(algorithm)
        };
        let res = run(cfg)?;
        means.push((res.summary.mean, res.summary.std));
    }
    let ((cma, cma_sd), (adam, adam_sd)) = (means[0], means[1]);
    Ok(outcome(
        cma <= 10.0 && adam >= 30.0,
        format!("diff cma-es MSE {cma:.2} +/- {cma_sd:.2} (need <= 10), adam {adam:.2} +/- {adam_sd:.2} (need >= 30)"),
    ))
}

fn median_of(algo: Algorithm, kind: BenchmarkKind, dim: usize, budget: u64) -> Result<f64, String> {
    let cfg = ExperimentConfig {
        algorithm: algo,
        problem: ProblemKind::Benchmark(kind),
        dim,
        pop: 100,
        max_evals: budget,
        runs: 5,
        out_dir: scratch_dir(),
        ..Default::default()
    };
    Ok(run(cfg)?.summary.median)
}

fn scaled_michalewicz() -> Result<Outcome, String> {
    let k = BenchmarkKind::Michalewicz;
    let classic = median_of(Algorithm::classic(Family::Cmaes), k, 100, 100_000)?;
    let diff = median_of(Algorithm::diff(Family::Cmaes), k, 100, 100_000)?;
    Ok(outcome(diff < classic, format!("median diff cma-es {diff:.4}, classical {classic:.4}")))
}

fn benchmark_grid() -> Result<Outcome, String> {
    let mut ok = true;
    let mut notes = Vec::new();
    for kind in [BenchmarkKind::Ackley, BenchmarkKind::Griewank] {
        let m = |f| median_of(Algorithm { family: f, diff: false }, kind, 30, 150_000);
        let diff = median_of(Algorithm::diff(Family::Cmaes), kind, 30, 150_000)?;
        let (ga, de) = (m(Family::Ga)?, m(Family::De)?);
        ok &= diff <= ga && diff <= de;
        notes.push(format!("{}: diff cma-es {diff:.6e}, ga {ga:.6e}, de {de:.6e}", kind.name()));
    }
    Ok(outcome(ok, notes.join("; ")))
}

fn determinism() -> Result<Outcome, String> {
    let root = scratch_dir().join("determinism");
    let mut same = true;
    let mut count = 0;
    let algos = Algorithm::GRID.into_iter().chain([Algorithm::ADAM]);
    for algo in algos {
        let mut dirs = Vec::new();
        for copy in ["a", "b"] {
            let cfg = ExperimentConfig {
                algorithm: algo,
                problem: ProblemKind::Benchmark(BenchmarkKind::Rosenbrock),
                dim: 5,
                pop: if algo == Algorithm::ADAM { 1 } else { 10 },
                max_evals: 1000,
                runs: 3,
                seed: 77,
                out_dir: root.join(copy),
                ..Default::default()
            };
            run_experiment(&cfg).map_err(|e| e.to_string())?;
            dirs.push(cfg.dir());
        }
        for entry in std::fs::read_dir(&dirs[0]).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.extension().is_some_and(|e| e == "csv") {
                let other = dirs[1].join(path.file_name().unwrap());
                same &= std::fs::read(&path).ok() == std::fs::read(&other).ok();
                count += 1;
            }
        }
    }
    let _ = std::fs::remove_dir_all(&root);
    Ok(outcome(same && count > 0, format!("{count} csv files compared across 9 algorithms")))
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("gradient suite", gradient_suite),
        ("relaxation statistics", relaxation_statistics),
        ("classical oracles", classical_oracles),
        ("zero-learning equivalence", zero_learning_equivalence),
        ("wine regression", wine_regression),
        ("scaled michalewicz", scaled_michalewicz),
        ("benchmark grid", benchmark_grid),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!pass);
        let mark = if pass { "PASS" } else { "FAIL" };
        println!("{mark} criterion {}: {name}: {detail} [{:.1} s]", i + 1, t.elapsed().as_secs_f64());
    }
    let _ = std::fs::remove_dir_all(scratch_dir());
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
