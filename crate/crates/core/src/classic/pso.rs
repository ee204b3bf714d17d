use super::{argmin, ClassicOptimizer};
use crate::error::Result;
use crate::problems::{BoxDomain, Objective};
use crate::relax::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PsoConfig {
    pub pop: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity bound as a fraction of each box width.
    pub vmax_frac: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            pop: 100,
            inertia: 0.7298,
            cognitive: 1.49618,
            social: 1.49618,
            vmax_frac: 0.2,
        }
    }
}

/// `w v + (c1 r1) (p - x) + (c2 r2) (g - x)` for one coordinate.
#[allow(clippy::too_many_arguments)]
pub fn velocity_update(w: f64, c1: f64, c2: f64, v: f64, x: f64, p: f64, g: f64, r1: f64, r2: f64) -> f64 {
    w * v + (c1 * r1) * (p - x) + (c2 * r2) * (g - x)
}

#[derive(Debug, Clone)]
pub struct Pso {
    cfg: PsoConfig,
    domain: BoxDomain,
    vmax: Vec<f64>,
    x: Vec<f64>,
    v: Vec<f64>,
    pbest: Vec<f64>,
    pbest_f: Vec<f64>,
    gbest: Vec<f64>,
    gbest_f: f64,
    started: bool,
    rng: Rng,
}

impl Pso {
    pub fn new(cfg: PsoConfig, domain: BoxDomain, mut rng: Rng) -> Self {
        let x = domain.sample(cfg.pop, &mut rng);
        let v = vec![0.0; x.len()];
        Self::from_parts(cfg, domain, x, v, rng)
    }

    /// Starts from given positions and velocities (row-major `pop x D`).
    pub fn from_parts(cfg: PsoConfig, domain: BoxDomain, x: Vec<f64>, v: Vec<f64>, rng: Rng) -> Self {
        let d = domain.dim();
        assert_eq!(x.len(), cfg.pop * d);
        assert_eq!(v.len(), x.len());
        let vmax = domain.widths().iter().map(|w| cfg.vmax_frac * w).collect();
        Pso {
            pbest: x.clone(),
            pbest_f: vec![f64::INFINITY; cfg.pop],
            gbest: x[..d].to_vec(),
            gbest_f: f64::INFINITY,
            cfg,
            domain,
            vmax,
            x,
            v,
            started: false,
            rng,
        }
    }

    pub fn positions(&self) -> &[f64] {
        &self.x
    }

    pub fn velocities(&self) -> &[f64] {
        &self.v
    }

    pub fn personal_best_fitness(&self) -> &[f64] {
        &self.pbest_f
    }

    fn refresh_bests(&mut self, f: &[f64]) {
        let d = self.domain.dim();
        for (i, &fi) in f.iter().enumerate() {
            if fi < self.pbest_f[i] {
                self.pbest_f[i] = fi;
                self.pbest[i * d..(i + 1) * d].copy_from_slice(&self.x[i * d..(i + 1) * d]);
            }
        }
        let i = argmin(&self.pbest_f);
        if self.pbest_f[i] < self.gbest_f {
            self.gbest_f = self.pbest_f[i];
            self.gbest = self.pbest[i * d..(i + 1) * d].to_vec();
        }
    }
}

impl ClassicOptimizer for Pso {
    fn name(&self) -> &'static str {
        "pso"
    }

    fn pop_size(&self) -> usize {
        self.cfg.pop
    }

    fn generation(&mut self, obj: &mut Objective) -> Result<f64> {
        if self.started {
            let d = self.domain.dim();
            let n = self.x.len();
            let r1 = self.rng.uniform_vec(n);
            let r2 = self.rng.uniform_vec(n);
            let c = &self.cfg;
            for k in 0..n {
                let j = k % d;
                let v = velocity_update(
                    c.inertia,
                    c.cognitive,
                    c.social,
                    self.v[k],
                    self.x[k],
                    self.pbest[k],
                    self.gbest[j],
                    r1[k],
                    r2[k],
                );
                let v = v.clamp(-self.vmax[j], self.vmax[j]);
                self.v[k] = v;
                self.x[k] = (self.x[k] + v).clamp(self.domain.lower()[j], self.domain.upper()[j]);
            }
        }
        self.started = true;
        let f = obj.eval_values(&self.x);
        self.refresh_bests(&f);
        Ok(f[argmin(&f)])
    }

    fn best_fitness(&self) -> f64 {
        self.gbest_f
    }

    fn best_point(&self) -> &[f64] {
        &self.gbest
    }

    fn hyperparams(&self) -> Vec<(String, f64)> {
        vec![
            ("inertia".into(), self.cfg.inertia),
            ("cognitive".into(), self.cfg.cognitive),
            ("social".into(), self.cfg.social),
        ]
    }
}
