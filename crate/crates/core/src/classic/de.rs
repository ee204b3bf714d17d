use super::{argmin, exclusion_mask, perturbed_argmax, ClassicOptimizer};
use crate::error::{Error, Result};
use crate::problems::{BoxDomain, Objective};
use crate::relax::{logit, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeStrategy {
    Rand1,
    CurrentToBest1,
}

impl DeStrategy {
    /// Number of randomly chosen individuals per donor.
    pub fn roles(self) -> usize {
        match self {
            DeStrategy::Rand1 => 3,
            DeStrategy::CurrentToBest1 => 2,
        }
    }

    pub fn min_pop(self) -> usize {
        self.roles() + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            DeStrategy::Rand1 => "rand1",
            DeStrategy::CurrentToBest1 => "current-to-best1",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeConfig {
    pub pop: usize,
    pub f: f64,
    pub cr: f64,
    pub strategy: DeStrategy,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            pop: 100,
            f: 0.5,
            cr: 0.9,
            strategy: DeStrategy::Rand1,
        }
    }
}

/// Noise for one individual's donor and crossover, in draw order.
#[derive(Debug, Clone)]
pub(crate) struct DeDraws {
    /// One Gumbel vector of length N per role.
    pub roles: Vec<Vec<f64>>,
    pub j_rand: usize,
    /// Logistic crossover noise, length D.
    pub cross: Vec<f64>,
}

pub(crate) fn draw_de(rng: &mut Rng, n: usize, d: usize, roles: usize) -> DeDraws {
    let roles = (0..roles).map(|_| rng.gumbel_vec(n)).collect();
    let j_rand = rng.below(d);
    let cross = rng.logistic_vec(d);
    DeDraws { roles, j_rand, cross }
}

/// Distinct indices for each role, none equal to `focal`: role `k` is the
/// argmax of its noise plus `logits`, masked by the focal index and the
/// winners of earlier roles.
pub(crate) fn pick_roles(draws: &DeDraws, logits: &[f64], focal: usize) -> (Vec<usize>, Vec<Vec<f64>>) {
    let n = logits.len();
    let mut excluded = vec![focal];
    let mut masks = Vec::with_capacity(draws.roles.len());
    for noise in &draws.roles {
        let mask = exclusion_mask(n, &excluded);
        excluded.push(perturbed_argmax(noise, logits, &mask));
        masks.push(mask);
    }
    (excluded[1..].to_vec(), masks)
}

#[derive(Debug, Clone)]
pub struct De {
    cfg: DeConfig,
    domain: BoxDomain,
    x: Vec<f64>,
    f: Vec<f64>,
    best: Vec<f64>,
    best_f: f64,
    started: bool,
    rng: Rng,
}

impl De {
    pub fn new(cfg: DeConfig, domain: BoxDomain, mut rng: Rng) -> Result<Self> {
        if cfg.pop < cfg.strategy.min_pop() {
            return Err(Error::Config(format!(
                "DE/{} needs at least {} individuals, got {}",
                cfg.strategy.name(),
                cfg.strategy.min_pop(),
                cfg.pop
            )));
        }
        let x = domain.sample(cfg.pop, &mut rng);
        Ok(De {
            best: x[..domain.dim()].to_vec(),
            f: vec![f64::INFINITY; cfg.pop],
            best_f: f64::INFINITY,
            cfg,
            domain,
            x,
            started: false,
            rng,
        })
    }

    pub fn population(&self) -> &[f64] {
        &self.x
    }

    pub fn fitness(&self) -> &[f64] {
        &self.f
    }

    fn trials(&mut self) -> Vec<f64> {
        let (n, d) = (self.cfg.pop, self.domain.dim());
        let zeros = vec![0.0; n];
        let alpha = logit(self.cfg.cr);
        let fscale = self.cfg.f;
        let best = argmin(&self.f);
        let mut out = Vec::with_capacity(n * d);
        for i in 0..n {
            let draws = draw_de(&mut self.rng, n, d, self.cfg.strategy.roles());
            let (r, _) = pick_roles(&draws, &zeros, i);
            let row = |k: usize| &self.x[k * d..(k + 1) * d];
            let xi = row(i);
            let donor: Vec<f64> = match self.cfg.strategy {
                DeStrategy::Rand1 => (0..d)
                    .map(|j| row(r[0])[j] + fscale * (row(r[1])[j] - row(r[2])[j]))
                    .collect(),
                DeStrategy::CurrentToBest1 => (0..d)
                    .map(|j| {
                        xi[j] + fscale * (row(best)[j] - xi[j]) + fscale * (row(r[0])[j] - row(r[1])[j])
                    })
                    .collect(),
            };
            for j in 0..d {
                let m = if draws.cross[j] + alpha > 0.0 || j == draws.j_rand {
                    1.0
                } else {
                    0.0
                };
                let u = xi[j] + m * (donor[j] - xi[j]);
                out.push(u.clamp(self.domain.lower()[j], self.domain.upper()[j]));
            }
        }
        out
    }
}

impl ClassicOptimizer for De {
    fn name(&self) -> &'static str {
        "de"
    }

    fn pop_size(&self) -> usize {
        self.cfg.pop
    }

    fn generation(&mut self, obj: &mut Objective) -> Result<f64> {
        let d = self.domain.dim();
        let gen_best = if self.started {
            let trials = self.trials();
            let ft = obj.eval_values(&trials);
            for (i, &fi) in ft.iter().enumerate() {
                if fi <= self.f[i] {
                    self.f[i] = fi;
                    self.x[i * d..(i + 1) * d].copy_from_slice(&trials[i * d..(i + 1) * d]);
                }
            }
            ft[argmin(&ft)]
        } else {
            self.started = true;
            self.f = obj.eval_values(&self.x);
            self.f[argmin(&self.f)]
        };
        let i = argmin(&self.f);
        if self.f[i] < self.best_f {
            self.best_f = self.f[i];
            self.best = self.x[i * d..(i + 1) * d].to_vec();
        }
        Ok(gen_best)
    }

    fn best_fitness(&self) -> f64 {
        self.best_f
    }

    fn best_point(&self) -> &[f64] {
        &self.best
    }

    fn hyperparams(&self) -> Vec<(String, f64)> {
        vec![("f".into(), self.cfg.f), ("cr".into(), self.cfg.cr)]
    }
}
