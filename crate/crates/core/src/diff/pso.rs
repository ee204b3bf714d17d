use super::{loss_of, not_staged, repeat_row, DiffAlgorithm, LossMode};
use crate::classic::PsoConfig;
use crate::error::Result;
use crate::problems::{BoxDomain, Objective};
use crate::relax::Rng;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiffPsoConfig {
    /// Population size, initial coefficients and velocity bound.
    pub pso: PsoConfig,
    pub loss: LossMode,
}

/// Inputs of one move besides the parameters; `None` for the first
/// generation, which only evaluates.
#[derive(Debug, Clone)]
struct Move {
    r1: Vec<f64>,
    r2: Vec<f64>,
    v: Vec<f64>,
    p: Vec<f64>,
    g: Vec<f64>,
}

/// PSO with trainable positions and per-particle inertia, cognitive and
/// social coefficients.
#[derive(Debug, Clone)]
pub struct DiffPso {
    cfg: DiffPsoConfig,
    domain: BoxDomain,
    vmax: Vec<f64>,
    tape: Tape,
    x: Var,
    omega: Var,
    c1: Var,
    c2: Var,
    v: Vec<f64>,
    pbest: Vec<f64>,
    pbest_f: Vec<f64>,
    gbest: Vec<f64>,
    gbest_f: f64,
    started: bool,
    staged: Option<Option<Move>>,
    rng: Rng,
}

impl DiffPso {
    pub fn new(cfg: DiffPsoConfig, domain: BoxDomain, mut rng: Rng) -> Result<Self> {
        let x = domain.sample(cfg.pso.pop, &mut rng);
        let v = vec![0.0; x.len()];
        Self::from_parts(cfg, domain, x, v, rng)
    }

    pub fn from_parts(cfg: DiffPsoConfig, domain: BoxDomain, x: Vec<f64>, v: Vec<f64>, rng: Rng) -> Result<Self> {
        let (n, d) = (cfg.pso.pop, domain.dim());
        let mut tape = Tape::new();
        let xv = tape.param("x", x.clone(), n, d)?;
        let omega = tape.param("omega", vec![cfg.pso.inertia; n], n, 1)?;
        let c1 = tape.param("c1", vec![cfg.pso.cognitive; n], n, 1)?;
        let c2 = tape.param("c2", vec![cfg.pso.social; n], n, 1)?;
        let vmax = domain.widths().iter().map(|w| cfg.pso.vmax_frac * w).collect();
        Ok(DiffPso {
            pbest: x.clone(),
            pbest_f: vec![f64::INFINITY; n],
            gbest: x[..d].to_vec(),
            gbest_f: f64::INFINITY,
            cfg,
            domain,
            vmax,
            tape,
            x: xv,
            omega,
            c1,
            c2,
            v,
            started: false,
            staged: None,
            rng,
        })
    }

    pub fn positions(&self) -> &[f64] {
        self.tape.value(self.x)
    }

    pub fn velocities(&self) -> &[f64] {
        &self.v
    }

    /// Parameter handles: positions, inertia, cognitive, social.
    pub fn params(&self) -> (Var, Var, Var, Var) {
        (self.x, self.omega, self.c1, self.c2)
    }

    fn draw(&mut self) -> Move {
        let (n, d) = (self.cfg.pso.pop, self.domain.dim());
        Move {
            r1: self.rng.uniform_vec(n * d),
            r2: self.rng.uniform_vec(n * d),
            v: self.v.clone(),
            p: self.pbest.clone(),
            g: repeat_row(&self.gbest, n),
        }
    }

    /// Candidate positions and velocities for one move.
    fn candidates(&mut self, m: &Option<Move>) -> Result<(Var, Vec<f64>)> {
        let Some(m) = m else {
            return Ok((self.x, self.v.clone()));
        };
        let (n, d) = (self.cfg.pso.pop, self.domain.dim());
        let t = &mut self.tape;
        let r1 = t.constant(m.r1.clone(), n, d)?;
        let r2 = t.constant(m.r2.clone(), n, d)?;
        let v = t.constant(m.v.clone(), n, d)?;
        let p = t.constant(m.p.clone(), n, d)?;
        let g = t.constant(m.g.clone(), n, d)?;
        let w = t.broadcast_cols(self.omega, d)?;
        let c1 = t.broadcast_cols(self.c1, d)?;
        let c2 = t.broadcast_cols(self.c2, d)?;

        let inertia = t.mul(w, v)?;
        let a = t.mul(c1, r1)?;
        let pd = t.sub(p, self.x)?;
        let cog = t.mul(a, pd)?;
        let b = t.mul(c2, r2)?;
        let gd = t.sub(g, self.x)?;
        let soc = t.mul(b, gd)?;
        let vel = t.add(inertia, cog)?;
        let vel = t.add(vel, soc)?;
        let neg: Vec<f64> = self.vmax.iter().map(|m| -m).collect();
        let vel = t.clamp(vel, &neg, &self.vmax)?;
        let moved = t.add(self.x, vel)?;
        let x = t.clamp(moved, self.domain.lower(), self.domain.upper())?;
        Ok((x, t.value(vel).to_vec()))
    }
}

impl DiffAlgorithm for DiffPso {
    fn name(&self) -> &'static str {
        "pso-diff"
    }

    fn pop_size(&self) -> usize {
        self.cfg.pso.pop
    }

    fn tape(&self) -> &Tape {
        &self.tape
    }

    fn tape_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }

    fn generation(&mut self, obj: &mut Objective) -> Result<Var> {
        self.tape.reset();
        let d = self.domain.dim();
        let m = if self.started { Some(self.draw()) } else { None };
        self.started = true;
        let (cand, _) = self.candidates(&m)?;
        let f = obj.eval_rows(&mut self.tape, cand)?;
        let (loss, _) = loss_of(&mut self.tape, f, self.cfg.loss)?;

        let xs = self.tape.value(cand);
        for (i, &fi) in self.tape.value(f).iter().enumerate() {
            if fi < self.pbest_f[i] {
                self.pbest_f[i] = fi;
                self.pbest[i * d..(i + 1) * d].copy_from_slice(&xs[i * d..(i + 1) * d]);
            }
        }
        let i = crate::classic::argmin(&self.pbest_f);
        if self.pbest_f[i] < self.gbest_f {
            self.gbest_f = self.pbest_f[i];
            self.gbest = self.pbest[i * d..(i + 1) * d].to_vec();
        }
        self.staged = Some(m);
        Ok(loss)
    }

    fn update_state(&mut self) -> Result<()> {
        let m = self.staged.take().ok_or_else(|| not_staged("pso-diff"))?;
        self.tape.reset();
        let (x, v) = self.candidates(&m)?;
        let mut x = self.tape.value(x).to_vec();
        self.domain.clamp_rows(&mut x);
        self.tape.reset();
        self.tape.set_param_values(self.x, &x)?;
        self.v = v;
        Ok(())
    }

    fn best_fitness(&self) -> f64 {
        self.gbest_f
    }

    fn best_point(&self) -> &[f64] {
        &self.gbest
    }

    fn hyperparams(&self) -> Vec<(String, f64)> {
        let mean = |v: Var| {
            let s = self.tape.value(v);
            s.iter().sum::<f64>() / s.len() as f64
        };
        vec![
            ("inertia".into(), mean(self.omega)),
            ("cognitive".into(), mean(self.c1)),
            ("social".into(), mean(self.c2)),
        ]
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::problems::{Benchmark, BenchmarkKind};

    #[test]
    fn zero_coefficients_keep_positions() {
        let mut obj = Objective::new(Arc::new(Benchmark::new(BenchmarkKind::Ackley, 3).unwrap()));
        let cfg = DiffPsoConfig {
            pso: PsoConfig {
                pop: 4,
                inertia: 0.0,
                cognitive: 0.0,
                social: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut pso = DiffPso::new(cfg, obj.domain().clone(), Rng::seed_from(3)).unwrap();
        let first = pso.generation(&mut obj).unwrap();
        let first = pso.tape().scalar_value(first);
        pso.update_state().unwrap();
        let x0 = pso.positions().to_vec();
        let loss = pso.generation(&mut obj).unwrap();
        assert_eq!(pso.tape().scalar_value(loss), first);
        pso.update_state().unwrap();
        assert_eq!(pso.positions(), x0.as_slice());
    }

    #[test]
    fn update_before_generation_fails() {
        let domain = BoxDomain::symmetric(2, 1.0).unwrap();
        let mut pso = DiffPso::new(DiffPsoConfig::default(), domain, Rng::seed_from(0)).unwrap();
        assert!(pso.update_state().is_err());
    }
}
