use super::{argmax_value, argmin, ClassicOptimizer};
use crate::error::{Error, Result};
use crate::problems::{BoxDomain, Objective};
use crate::relax::{logit, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Tournament(usize),
    /// Rank-proportional roulette.
    Roulette,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub pop: usize,
    pub selection: Selection,
    pub crossover_rate: f64,
    /// Per-gene mutation probability; `None` means `1 / D`.
    pub mutation_rate: Option<f64>,
    pub eta_c: f64,
    pub eta_m: f64,
    pub elitism: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            pop: 100,
            selection: Selection::Tournament(2),
            crossover_rate: 0.9,
            mutation_rate: None,
            eta_c: 15.0,
            eta_m: 20.0,
            elitism: true,
        }
    }
}

/// Best of `k` uniform draws (with replacement); the earliest draw wins ties.
pub fn tournament_select(fitness: &[f64], k: usize, rng: &mut Rng) -> Result<usize> {
    if fitness.is_empty() {
        return Err(Error::State("selection from an empty population".into()));
    }
    if k < 2 {
        return Err(Error::Config(format!("tournament size must be at least 2, got {k}")));
    }
    let mut best = rng.below(fitness.len());
    for _ in 1..k {
        let c = rng.below(fitness.len());
        if fitness[c] < fitness[best] {
            best = c;
        }
    }
    Ok(best)
}

/// Roulette on ranks: the best of `n` gets weight `n`, the worst weight 1,
/// tied fitness values share their average rank.
pub fn roulette_select(fitness: &[f64], rng: &mut Rng) -> Result<usize> {
    let n = fitness.len();
    if n == 0 {
        return Err(Error::State("selection from an empty population".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]));
    let mut weight = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && fitness[order[j + 1]] == fitness[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            weight[k] = avg;
        }
        i = j + 1;
    }
    let total: f64 = weight.iter().sum();
    let mut t = rng.uniform() * total;
    for (k, w) in weight.iter().enumerate() {
        if t < *w {
            return Ok(k);
        }
        t -= w;
    }
    Ok(n - 1)
}

/// `alpha p + (1 - alpha) q` with one `alpha ~ U(0, 1)`.
pub fn blend_crossover(p: &[f64], q: &[f64], rng: &mut Rng) -> Vec<f64> {
    blend(p, q, rng.uniform())
}

pub fn blend(p: &[f64], q: &[f64], alpha: f64) -> Vec<f64> {
    p.iter().zip(q).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect()
}

/// SBX spread factor for one uniform draw.
pub fn sbx_beta(u: f64, eta: f64) -> f64 {
    let e = 1.0 / (eta + 1.0);
    if u < 0.5 {
        (2.0 * u).powf(e)
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(e)
    }
}

/// `c_j = ((1 + b_j) p_j + (1 - b_j) q_j) / 2` for spreads from draws `u`.
pub fn sbx_child(p: &[f64], q: &[f64], eta: f64, u: &[f64]) -> Vec<f64> {
    p.iter()
        .zip(q)
        .zip(u)
        .map(|((&pj, &qj), &uj)| {
            let b = sbx_beta(uj, eta);
            0.5 * ((1.0 + b) * pj + (1.0 - b) * qj)
        })
        .collect()
}

pub fn sbx_crossover(p: &[f64], q: &[f64], eta: f64, domain: &BoxDomain, rng: &mut Rng) -> Vec<f64> {
    let u = rng.uniform_vec(p.len());
    let mut c = sbx_child(p, q, eta, &u);
    domain.clamp_rows(&mut c);
    c
}

pub fn gaussian_mutation(c: &[f64], sigma: f64, rng: &mut Rng) -> Vec<f64> {
    c.iter().map(|x| x + sigma * rng.normal()).collect()
}

/// Polynomial mutation offset (before scaling by the box width).
pub fn polynomial_delta(u: f64, eta: f64) -> f64 {
    let e = 1.0 / (eta + 1.0);
    if u < 0.5 {
        (2.0 * u).powf(e) - 1.0
    } else {
        1.0 - (2.0 * (1.0 - u)).powf(e)
    }
}

/// Mutates each gene with probability `rate`; the gate is the logistic
/// event `noise + logit(rate) > 0`.
pub fn polynomial_mutation(c: &[f64], rate: f64, eta: f64, domain: &BoxDomain, rng: &mut Rng) -> Vec<f64> {
    let gate = rng.logistic_vec(c.len());
    let u = rng.uniform_vec(c.len());
    let mut out = mutate_with(c, &gate, &u, logit(rate), eta, domain);
    domain.clamp_rows(&mut out);
    out
}

fn mutate_with(c: &[f64], gate: &[f64], u: &[f64], alpha: f64, eta: f64, domain: &BoxDomain) -> Vec<f64> {
    let (lo, hi) = (domain.lower(), domain.upper());
    c.iter()
        .enumerate()
        .map(|(j, &x)| {
            if gate[j] + alpha > 0.0 {
                x + polynomial_delta(u[j], eta) * (hi[j] - lo[j])
            } else {
                x
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Ga {
    cfg: GaConfig,
    domain: BoxDomain,
    x: Vec<f64>,
    f: Vec<f64>,
    best: Vec<f64>,
    best_f: f64,
    started: bool,
    rng: Rng,
}

impl Ga {
    pub fn new(cfg: GaConfig, domain: BoxDomain, mut rng: Rng) -> Result<Self> {
        if cfg.pop < 2 {
            return Err(Error::Config("GA needs at least 2 individuals".into()));
        }
        let x = domain.sample(cfg.pop, &mut rng);
        Ok(Ga {
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

    fn mutation_rate(&self) -> f64 {
        self.cfg.mutation_rate.unwrap_or(1.0 / self.domain.dim() as f64)
    }

    fn select(&mut self) -> Result<usize> {
        match self.cfg.selection {
            Selection::Tournament(k) => tournament_select(&self.f, k, &mut self.rng),
            Selection::Roulette => roulette_select(&self.f, &mut self.rng),
        }
    }

    fn offspring(&mut self) -> Result<Vec<f64>> {
        let d = self.domain.dim();
        let alpha_c = logit(self.cfg.crossover_rate);
        let alpha_m = logit(self.mutation_rate());
        let mut kids = Vec::with_capacity(self.x.len());
        for _ in 0..self.cfg.pop {
            let (i, k) = (self.select()?, self.select()?);
            let p = &self.x[i * d..(i + 1) * d];
            let q = &self.x[k * d..(k + 1) * d];
            let gate = self.rng.logistic();
            let u = self.rng.uniform_vec(d);
            let child = if gate + alpha_c > 0.0 {
                sbx_child(p, q, self.cfg.eta_c, &u)
            } else {
                p.to_vec()
            };
            let mgate = self.rng.logistic_vec(d);
            let um = self.rng.uniform_vec(d);
            let mut child = mutate_with(&child, &mgate, &um, alpha_m, self.cfg.eta_m, &self.domain);
            self.domain.clamp_rows(&mut child);
            kids.extend(child);
        }
        Ok(kids)
    }
}

impl ClassicOptimizer for Ga {
    fn name(&self) -> &'static str {
        "ga"
    }

    fn pop_size(&self) -> usize {
        self.cfg.pop
    }

    fn generation(&mut self, obj: &mut Objective) -> Result<f64> {
        let d = self.domain.dim();
        if self.started {
            let kids = self.offspring()?;
            let mut f = obj.eval_values(&kids);
            let gen_best = f[argmin(&f)];
            self.x = kids;
            if self.cfg.elitism {
                let w = argmax_value(&f);
                self.x[w * d..(w + 1) * d].copy_from_slice(&self.best);
                f[w] = self.best_f;
            }
            self.f = f;
            let i = argmin(&self.f);
            if self.f[i] < self.best_f {
                self.best_f = self.f[i];
                self.best = self.x[i * d..(i + 1) * d].to_vec();
            }
            return Ok(gen_best);
        }
        self.started = true;
        self.f = obj.eval_values(&self.x);
        let i = argmin(&self.f);
        self.best_f = self.f[i];
        self.best = self.x[i * d..(i + 1) * d].to_vec();
        Ok(self.best_f)
    }

    fn best_fitness(&self) -> f64 {
        self.best_f
    }

    fn best_point(&self) -> &[f64] {
        &self.best
    }

    fn hyperparams(&self) -> Vec<(String, f64)> {
        vec![
            ("crossover_rate".into(), self.cfg.crossover_rate),
            ("mutation_rate".into(), self.mutation_rate()),
            ("eta_c".into(), self.cfg.eta_c),
            ("eta_m".into(), self.cfg.eta_m),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_tournament_returns_best() {
        let f = [3.0, -1.0, 2.0, 0.5];
        let mut rng = Rng::seed_from(4);
        // with k = N the best is found unless it is never drawn; use a large k
        for _ in 0..100 {
            assert_eq!(tournament_select(&f, 64, &mut rng).unwrap(), 1);
        }
        assert!(tournament_select(&[], 2, &mut rng).is_err());
        assert!(roulette_select(&[], &mut rng).is_err());
    }

    #[test]
    fn sbx_boundary_and_reference_value() {
        assert_eq!(sbx_beta(0.5, 15.0), 1.0);
        assert_eq!(sbx_child(&[0.3, -2.0], &[5.0, 1.0], 15.0, &[0.5, 0.5]), vec![0.3, -2.0]);
        let b = sbx_beta(0.25, 15.0);
        assert!((b - 0.957_603_280_698_573_7).abs() < 1e-12);
        let c = sbx_child(&[0.0], &[1.0], 15.0, &[0.25]);
        assert!((c[0] - 0.021_198_359_650_713_15).abs() < 1e-12);
    }

    #[test]
    fn polynomial_reference_values() {
        assert_eq!(polynomial_delta(0.5, 20.0), 0.0);
        let d = polynomial_delta(0.1, 20.0);
        // 0.2^(1/21) - 1, evaluated independently
        assert!((d - (-0.073_776_673_967_432_26)).abs() < 1e-12);
        assert!((d * 200.0 - (-14.755_334_793_486_45)).abs() < 1e-9);
    }

    #[test]
    fn trivial_operators() {
        let mut rng = Rng::seed_from(0);
        assert_eq!(gaussian_mutation(&[1.0, 2.0], 0.0, &mut rng), vec![1.0, 2.0]);
        assert_eq!(blend(&[1.0, 2.0], &[5.0, 6.0], 1.0), vec![1.0, 2.0]);
    }
}
