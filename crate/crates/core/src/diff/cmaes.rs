use super::{loss_of, not_staged, refresh_best, DiffAlgorithm, LossMode};
use crate::classic::{CmaConstants, CmaesConfig, JITTER_SCALE, JITTER_STEPS};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, factor_product, identity, lower_solve, norm, scaled_rank_one_updates};
use crate::problems::{BoxDomain, Objective};
use crate::relax::Rng;
use crate::tape::{sigmoid, Param, Reparam, Tape, Var};

/// Width of the logistic window around the `h_sigma` threshold, relative to
/// the threshold.
const H_SIGMA_WINDOW: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct DiffCmaesConfig {
    pub cmaes: CmaesConfig,
    pub loss: LossMode,
    /// Softmax temperature applied to standardized fitness values.
    pub temperature: f64,
}

impl Default for DiffCmaesConfig {
    fn default() -> Self {
        DiffCmaesConfig {
            cmaes: CmaesConfig::default(),
            loss: LossMode::Best,
            temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Staged {
    /// Row-major steps `(x_i - mean) / sigma` of the clamped offspring.
    y: Vec<f64>,
    yw: Vec<f64>,
    /// `L^-1 yw`, the whitened mean step.
    zw: Vec<f64>,
    weights: Vec<f64>,
    sigma: f64,
}

/// CMA-ES with a trainable mean, log step size and Cholesky factor. The
/// evolution paths, covariance update and step-size adaptation run on plain
/// values after the outer step and are written back into the parameters.
#[derive(Debug, Clone)]
pub struct DiffCmaEs {
    cfg: DiffCmaesConfig,
    k: CmaConstants,
    domain: BoxDomain,
    tape: Tape,
    mu: Var,
    log_sigma: Param,
    l: Var,
    ps: Vec<f64>,
    pc: Vec<f64>,
    gen: u64,
    best: Vec<f64>,
    best_f: f64,
    last_weights: Vec<f64>,
    staged: Option<Staged>,
    rng: Rng,
}

impl DiffCmaEs {
    pub fn new(cfg: DiffCmaesConfig, domain: BoxDomain, mut rng: Rng) -> Result<Self> {
        let mean = domain.sample(1, &mut rng);
        let sigma = cfg.cmaes.sigma0_frac * domain.max_width();
        Self::with_mean(cfg, domain, mean, sigma, rng)
    }

    pub fn with_mean(cfg: DiffCmaesConfig, domain: BoxDomain, mean: Vec<f64>, sigma: f64, rng: Rng) -> Result<Self> {
        let d = domain.dim();
        if mean.len() != d {
            return Err(Error::Config(format!("mean has length {}, expected {d}", mean.len())));
        }
        if !(sigma > 0.0) || !(cfg.temperature > 0.0) {
            return Err(Error::Config("step size and temperature must be positive".into()));
        }
        let mut tape = Tape::new();
        let mu = tape.param("mean", mean.clone(), d, 1)?;
        let log_sigma = tape.param_with("log_sigma", vec![sigma.ln()], 1, 1, Reparam::Exp)?;
        let l = tape.param("cholesky", identity(d), d, d)?;
        Ok(DiffCmaEs {
            k: CmaConstants::new(d, cfg.cmaes.pop, cfg.cmaes.parents),
            cfg,
            domain,
            tape,
            mu,
            log_sigma,
            l,
            ps: vec![0.0; d],
            pc: vec![0.0; d],
            gen: 0,
            best: mean,
            best_f: f64::INFINITY,
            last_weights: Vec::new(),
            staged: None,
            rng,
        })
    }

    pub fn constants(&self) -> &CmaConstants {
        &self.k
    }

    pub fn mean(&self) -> &[f64] {
        self.tape.value(self.mu)
    }

    pub fn sigma(&self) -> f64 {
        self.tape.read_value(&self.log_sigma)[0]
    }

    /// Current factor with the upper triangle zeroed.
    pub fn cholesky(&self) -> Vec<f64> {
        let d = self.k.dim;
        let mut l = self.tape.value(self.l).to_vec();
        for i in 0..d {
            for j in i + 1..d {
                l[i * d + j] = 0.0;
            }
        }
        l
    }

    /// Recombination weights of the last generation.
    pub fn weights(&self) -> &[f64] {
        &self.last_weights
    }

    /// Parameter handles: mean, log step size, Cholesky factor.
    pub fn params(&self) -> (Var, Var, Var) {
        (self.mu, self.log_sigma.raw(), self.l)
    }

    /// One generation on given standard normal draws (`lambda x D`,
    /// row-major) instead of fresh ones.
    pub fn generation_with_noise(&mut self, obj: &mut Objective, z: Vec<f64>) -> Result<Var> {
        let (d, lambda) = (self.k.dim, self.k.lambda);
        if z.len() != lambda * d {
            return Err(Error::Config(format!("expected {} draws, got {}", lambda * d, z.len())));
        }
        self.tape.reset();
        let t = &mut self.tape;
        let zc = t.constant(z.clone(), lambda, d)?;
        let y = t.lower_tri_rows(self.l, zc)?;
        let sigma = t.read(&self.log_sigma)?;
        let step = t.mul(sigma, y)?;
        let m = t.broadcast_rows(self.mu, lambda)?;
        let x = t.add(m, step)?;
        let x = t.clamp(x, self.domain.lower(), self.domain.upper())?;
        let f = obj.eval_rows(t, x)?;
        let (loss, _) = loss_of(t, f, self.cfg.loss)?;
        let w = rank_weights(t, f, self.cfg.temperature)?;

        let weights = t.value(w).to_vec();
        let fv = t.value(f);
        let i = crate::classic::argmin(fv);
        let fi = fv[i];
        let xs = t.value(x);
        refresh_best(&mut self.best, &mut self.best_f, &xs[i * d..(i + 1) * d], fi);
        // Steps from the clamped points, so the updates only see what was
        // evaluated.
        let sigma = t.scalar_value(sigma);
        let mean = t.value(self.mu);
        let ys: Vec<f64> = xs
            .chunks(d)
            .flat_map(|x| x.iter().zip(mean).map(|(x, m)| (x - m) / sigma))
            .collect();
        let mut yw = vec![0.0; d];
        for (w, y) in weights.iter().zip(ys.chunks(d)) {
            for j in 0..d {
                yw[j] += w * y[j];
            }
        }
        let zw = lower_solve(t.value(self.l), d, &yw);
        self.staged = Some(Staged {
            y: ys,
            yw,
            zw,
            weights: weights.clone(),
            sigma,
        });
        self.last_weights = weights;
        Ok(loss)
    }
}

/// `softmax(-(f - mean) / (std * temperature))`; uniform when every fitness
/// value is equal.
fn rank_weights(t: &mut Tape, f: Var, temperature: f64) -> crate::tape::Result<Var> {
    let n = f.len();
    let fv = t.value(f);
    let m = fv.iter().sum::<f64>() / n as f64;
    let spread = fv.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    if !(spread > 0.0) || !spread.is_finite() {
        return Ok(t.constant(vec![1.0 / n as f64; n], n, 1)?);
    }
    let mean = t.mean(f)?;
    let c = t.sub(f, mean)?;
    let sq = t.square(c)?;
    let var = t.mean(sq)?;
    let sd = t.sqrt(var)?;
    let s = t.div(c, sd)?;
    let s = t.scale(s, -1.0 / temperature)?;
    t.softmax(s)
}

impl DiffAlgorithm for DiffCmaEs {
    fn name(&self) -> &'static str {
        "cmaes-diff"
    }

    fn pop_size(&self) -> usize {
        self.k.lambda
    }

    fn tape(&self) -> &Tape {
        &self.tape
    }

    fn tape_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }

    fn generation(&mut self, obj: &mut Objective) -> Result<Var> {
        let z = self.rng.normal_vec(self.k.lambda * self.k.dim);
        self.generation_with_noise(obj, z)
    }

    fn update_state(&mut self) -> Result<()> {
        let s = self.staged.take().ok_or_else(|| not_staged("cmaes-diff"))?;
        self.tape.reset();
        let k = &self.k;
        let d = k.dim;
        let mueff = 1.0 / s.weights.iter().map(|w| w * w).sum::<f64>();
        let (yw, zw) = (&s.yw, &s.zw);

        let mut mean = self.tape.value(self.mu).to_vec();
        for j in 0..d {
            mean[j] += s.sigma * yw[j];
        }
        self.domain.clamp_rows(&mut mean);
        self.gen += 1;

        let a = (k.cs * (2.0 - k.cs) * mueff).sqrt();
        for j in 0..d {
            self.ps[j] = (1.0 - k.cs) * self.ps[j] + a * zw[j];
        }
        let ps_norm = norm(&self.ps);
        let thr = k.h_sigma_threshold();
        let h = sigmoid((thr - k.corrected_path_norm(ps_norm, self.gen)) / (H_SIGMA_WINDOW * thr));
        let b = h * (k.cc * (2.0 - k.cc) * mueff).sqrt();
        for j in 0..d {
            self.pc[j] = (1.0 - k.cc) * self.pc[j] + b * yw[j];
        }

        let keep = 1.0 - k.c1 - k.cmu + (1.0 - h) * k.c1 * k.cc * (2.0 - k.cc);
        let mut updates: Vec<(f64, &[f64])> = vec![(k.c1, &self.pc)];
        for (i, &w) in s.weights.iter().enumerate() {
            updates.push((k.cmu * w, &s.y[i * d..(i + 1) * d]));
        }
        let mut l = self.cholesky();
        // a factor with negative diagonal entries describes the same matrix
        // once those columns are negated
        for j in 0..d {
            if l[j * d + j] < 0.0 {
                for i in j..d {
                    l[i * d + j] = -l[i * d + j];
                }
            }
        }
        let c = factor_product(&l, d);
        if !(keep > 0.0 && scaled_rank_one_updates(&mut l, d, keep, &updates)) {
            let mut full = c.iter().map(|v| keep * v).collect::<Vec<f64>>();
            for &(coef, v) in &updates {
                for r in 0..d {
                    for q in 0..d {
                        full[r * d + q] += coef * v[r] * v[q];
                    }
                }
            }
            let trace: f64 = (0..d).map(|i| full[i * d + i]).sum();
            let base = JITTER_SCALE * (trace / d as f64).abs().max(f64::MIN_POSITIVE);
            l = cholesky_with_jitter(&full, d, base, JITTER_STEPS)?.0;
        }

        let log_sigma = self.tape.value(self.log_sigma.raw())[0] + (k.cs / k.damps) * (ps_norm / k.chi_n - 1.0);
        if !log_sigma.is_finite() {
            return Err(Error::State(format!("log step size became {log_sigma}")));
        }
        self.tape.set_param_values(self.mu, &mean)?;
        self.tape.set_param_values(self.l, &l)?;
        self.tape.set_param_values(self.log_sigma.raw(), &[log_sigma])?;
        Ok(())
    }

    fn best_fitness(&self) -> f64 {
        self.best_f
    }

    fn best_point(&self) -> &[f64] {
        &self.best
    }

    fn hyperparams(&self) -> Vec<(String, f64)> {
        vec![("sigma".into(), self.sigma())]
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::problems::{Benchmark, BenchmarkKind};

    fn setup(d: usize, pop: usize) -> (Objective, DiffCmaEs) {
        let obj = Objective::new(Arc::new(Benchmark::new(BenchmarkKind::Sphere, d).unwrap()));
        let cfg = DiffCmaesConfig {
            cmaes: CmaesConfig {
                pop,
                ..Default::default()
            },
            ..Default::default()
        };
        let es = DiffCmaEs::new(cfg, obj.domain().clone(), Rng::seed_from(5)).unwrap();
        (obj, es)
    }

    #[test]
    fn zero_draws_give_fitness_of_mean() {
        let (mut obj, mut es) = setup(3, 4);
        let mean = es.mean().to_vec();
        let lambda = es.constants().lambda;
        let loss = es.generation_with_noise(&mut obj, vec![0.0; lambda * 3]).unwrap();
        let expect = crate::problems::sphere(&mean);
        assert_eq!(es.tape().scalar_value(loss), expect);
        // all equal fitness: uniform weights
        assert!(es.weights().iter().all(|&w| w == 1.0 / lambda as f64));
    }

    #[test]
    fn weights_normalized_and_ordered() {
        let (mut obj, mut es) = setup(4, 8);
        es.generation(&mut obj).unwrap();
        let w = es.weights().to_vec();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let staged = es.staged.clone().unwrap();
        let fit: Vec<f64> = staged
            .y
            .chunks(4)
            .map(|y| {
                let x: Vec<f64> = es
                    .mean()
                    .iter()
                    .zip(y)
                    .map(|(m, yi)| (m + staged.sigma * yi).clamp(-100.0, 100.0))
                    .collect();
                crate::problems::sphere(&x)
            })
            .collect();
        for a in 0..8 {
            for b in 0..8 {
                if fit[a] < fit[b] {
                    assert!(w[a] > w[b]);
                }
            }
        }
    }

    #[test]
    fn commit_keeps_factor_lower_triangular_and_sigma_positive() {
        let (mut obj, mut es) = setup(5, 10);
        for _ in 0..30 {
            es.generation(&mut obj).unwrap();
            es.update_state().unwrap();
            let l = es.tape().value(es.l).to_vec();
            for i in 0..5 {
                assert!(l[i * 5 + i] > 0.0);
                for j in i + 1..5 {
                    assert_eq!(l[i * 5 + j], 0.0);
                }
            }
            assert!(es.sigma() > 0.0);
        }
        assert!(es.update_state().is_err());
    }
}
