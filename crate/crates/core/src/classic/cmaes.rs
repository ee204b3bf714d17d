use super::ClassicOptimizer;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, expected_norm, identity, lower_matvec, lower_solve, norm};
use crate::problems::{BoxDomain, Objective};
use crate::relax::Rng;

/// Jitter escalation: start at `1e-12 * trace / D`, at most 6 tenfold steps.
pub(crate) const JITTER_SCALE: f64 = 1e-12;
pub(crate) const JITTER_STEPS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct CmaesConfig {
    /// Lower bound on the offspring count; the default count
    /// `4 + floor(3 ln D)` is raised to this.
    pub pop: usize,
    /// Initial step size as a fraction of the widest box side.
    pub sigma0_frac: f64,
    /// Number of recombination parents; defaults to half the offspring.
    pub parents: Option<usize>,
}

impl Default for CmaesConfig {
    fn default() -> Self {
        CmaesConfig {
            pop: 100,
            sigma0_frac: 0.1,
            parents: None,
        }
    }
}

/// Strategy parameters with the standard default settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CmaConstants {
    pub dim: usize,
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mueff: f64,
    pub cc: f64,
    pub cs: f64,
    pub c1: f64,
    pub cmu: f64,
    pub damps: f64,
    pub chi_n: f64,
}

impl CmaConstants {
    pub fn new(dim: usize, pop: usize, parents: Option<usize>) -> Self {
        let d = dim as f64;
        let lambda = (4 + (3.0 * d.ln()).floor() as usize).max(pop);
        let mu = parents.unwrap_or(lambda / 2).clamp(1, lambda);
        let raw: Vec<f64> = (1..=mu)
            .map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let cc = (4.0 + mueff / d) / (d + 4.0 + 2.0 * mueff / d);
        let cs = (mueff + 2.0) / (d + mueff + 5.0);
        let c1 = 2.0 / ((d + 1.3).powi(2) + mueff);
        let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((d + 2.0).powi(2) + mueff));
        let damps = 1.0 + 2.0 * (((mueff - 1.0) / (d + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        CmaConstants {
            dim,
            lambda,
            mu,
            weights,
            mueff,
            cc,
            cs,
            c1,
            cmu,
            damps,
            chi_n: expected_norm(dim),
        }
    }

    /// Threshold on the normalized step-size path length used by `h_sigma`.
    pub fn h_sigma_threshold(&self) -> f64 {
        (1.4 + 2.0 / (self.dim as f64 + 1.0)) * self.chi_n
    }

    /// `||p_sigma||` corrected for the path's initialization after `gen`
    /// completed generations (counting the current one).
    pub fn corrected_path_norm(&self, ps_norm: f64, gen: u64) -> f64 {
        ps_norm / (1.0 - (1.0 - self.cs).powf(2.0 * gen as f64)).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct CmaEs {
    k: CmaConstants,
    domain: BoxDomain,
    mean: Vec<f64>,
    sigma: f64,
    c: Vec<f64>,
    l: Vec<f64>,
    ps: Vec<f64>,
    pc: Vec<f64>,
    gen: u64,
    best: Vec<f64>,
    best_f: f64,
    rng: Rng,
}

impl CmaEs {
    pub fn new(cfg: CmaesConfig, domain: BoxDomain, mut rng: Rng) -> Self {
        let mean = domain.sample(1, &mut rng);
        let sigma = cfg.sigma0_frac * domain.max_width();
        Self::with_mean(cfg, domain, mean, sigma, rng)
    }

    pub fn with_mean(cfg: CmaesConfig, domain: BoxDomain, mean: Vec<f64>, sigma: f64, rng: Rng) -> Self {
        let d = domain.dim();
        CmaEs {
            k: CmaConstants::new(d, cfg.pop, cfg.parents),
            best: mean.clone(),
            best_f: f64::INFINITY,
            domain,
            mean,
            sigma,
            c: identity(d),
            l: identity(d),
            ps: vec![0.0; d],
            pc: vec![0.0; d],
            gen: 0,
            rng,
        }
    }

    pub fn constants(&self) -> &CmaConstants {
        &self.k
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn covariance(&self) -> &[f64] {
        &self.c
    }

    /// Unclamped offspring `mean + sigma L z_i` for row-major draws `z`.
    pub fn offspring(&self, z: &[f64]) -> Vec<f64> {
        let d = self.k.dim;
        let mut out = Vec::with_capacity(z.len());
        for zi in z.chunks(d) {
            let y = lower_matvec(&self.l, d, zi);
            out.extend(self.mean.iter().zip(&y).map(|(m, yi)| m + self.sigma * yi));
        }
        out
    }
}

impl ClassicOptimizer for CmaEs {
    fn name(&self) -> &'static str {
        "cmaes"
    }

    fn pop_size(&self) -> usize {
        self.k.lambda
    }

    fn generation(&mut self, obj: &mut Objective) -> Result<f64> {
        let (d, lambda) = (self.k.dim, self.k.lambda);
        let z = self.rng.normal_vec(lambda * d);
        let mut xs = self.offspring(&z);
        self.domain.clamp_rows(&mut xs);
        // Steps are taken from the clamped points, so the update only sees
        // what was evaluated.
        let ys: Vec<Vec<f64>> = xs
            .chunks(d)
            .map(|x| x.iter().zip(&self.mean).map(|(x, m)| (x - m) / self.sigma).collect())
            .collect();
        let f = obj.eval_values(&xs);
        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| f[a].total_cmp(&f[b]).then(a.cmp(&b)));
        if f[order[0]] < self.best_f {
            self.best_f = f[order[0]];
            self.best = xs[order[0] * d..(order[0] + 1) * d].to_vec();
        }

        let k = &self.k;
        let mut yw = vec![0.0; d];
        for (w, &i) in k.weights.iter().zip(&order) {
            for j in 0..d {
                yw[j] += w * ys[i][j];
            }
        }
        let zw = lower_solve(&self.l, d, &yw);
        for j in 0..d {
            self.mean[j] += self.sigma * yw[j];
        }
        // Only rounding can leave the box here.
        self.domain.clamp_rows(&mut self.mean);
        self.gen += 1;

        let a = (k.cs * (2.0 - k.cs) * k.mueff).sqrt();
        for j in 0..d {
            self.ps[j] = (1.0 - k.cs) * self.ps[j] + a * zw[j];
        }
        let ps_norm = norm(&self.ps);
        let hsig = if k.corrected_path_norm(ps_norm, self.gen) < k.h_sigma_threshold() {
            1.0
        } else {
            0.0
        };
        let b = hsig * (k.cc * (2.0 - k.cc) * k.mueff).sqrt();
        for j in 0..d {
            self.pc[j] = (1.0 - k.cc) * self.pc[j] + b * yw[j];
        }

        let keep = 1.0 - k.c1 - k.cmu + (1.0 - hsig) * k.c1 * k.cc * (2.0 - k.cc);
        for r in 0..d {
            for s in 0..=r {
                let mut v = keep * self.c[r * d + s] + k.c1 * self.pc[r] * self.pc[s];
                for (w, &i) in k.weights.iter().zip(&order) {
                    v += k.cmu * w * ys[i][r] * ys[i][s];
                }
                self.c[r * d + s] = v;
                self.c[s * d + r] = v;
            }
        }
        self.sigma *= ((k.cs / k.damps) * (ps_norm / k.chi_n - 1.0)).exp();
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::State(format!("step size became {}", self.sigma)));
        }

        let trace: f64 = (0..d).map(|i| self.c[i * d + i]).sum();
        let (l, jitter) = cholesky_with_jitter(&self.c, d, JITTER_SCALE * trace / d as f64, JITTER_STEPS)?;
        if jitter > 0.0 {
            for i in 0..d {
                self.c[i * d + i] += jitter;
            }
        }
        self.l = l;
        Ok(f[order[0]])
    }

    fn best_fitness(&self) -> f64 {
        self.best_f
    }

    fn best_point(&self) -> &[f64] {
        &self.best
    }

    fn hyperparams(&self) -> Vec<(String, f64)> {
        vec![("sigma".into(), self.sigma)]
    }
}
