use super::{loss_of, not_staged, refresh_best, DiffAlgorithm, LossMode};
use crate::classic::{argmax_value, argmin, draw_de, pick_roles, DeConfig, DeDraws, DeStrategy};
use crate::error::{Error, Result};
use crate::problems::{BoxDomain, Objective};
use crate::relax::{gumbel_softmax_rows, logit, RelaxConfig, Rng};
use crate::tape::{Param, Reparam, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct DiffDeConfig {
    /// Population size, initial `F` and `CR`, strategy.
    pub de: DeConfig,
    pub loss: LossMode,
    /// Temperature of the parent selection and crossover relaxations.
    pub tau: f64,
    /// One-hot parents on the forward pass instead of soft mixtures.
    pub hard_selection: bool,
}

impl Default for DiffDeConfig {
    fn default() -> Self {
        DiffDeConfig {
            de: DeConfig::default(),
            loss: LossMode::Best,
            tau: 1.0,
            hard_selection: false,
        }
    }
}

#[derive(Debug, Clone)]
struct Move {
    draws: Vec<DeDraws>,
    /// Slot of the current best, for current-to-best donors.
    best: usize,
}

#[derive(Debug, Clone)]
struct Staged {
    m: Option<Move>,
    /// Slots whose candidate won the greedy comparison.
    won: Vec<bool>,
}

/// DE with a trainable population, `F = exp(phi)`, a crossover-rate logit
/// and parent-selection logits.
#[derive(Debug, Clone)]
pub struct DiffDe {
    cfg: DiffDeConfig,
    domain: BoxDomain,
    tape: Tape,
    x: Var,
    phi: Param,
    cr: Var,
    sel: Var,
    f: Vec<f64>,
    best: Vec<f64>,
    best_f: f64,
    started: bool,
    staged: Option<Staged>,
    rng: Rng,
}

impl DiffDe {
    pub fn new(cfg: DiffDeConfig, domain: BoxDomain, mut rng: Rng) -> Result<Self> {
        let (n, d) = (cfg.de.pop, domain.dim());
        let s = cfg.de.strategy;
        if n < s.min_pop() {
            return Err(Error::Config(format!(
                "DE/{} needs at least {} individuals, got {n}",
                s.name(),
                s.min_pop()
            )));
        }
        if !(cfg.de.f > 0.0) {
            return Err(Error::Config(format!("DE scale factor must be positive, got {}", cfg.de.f)));
        }
        RelaxConfig::new(cfg.tau, true)?;
        let x0 = domain.sample(n, &mut rng);
        let mut tape = Tape::new();
        let x = tape.param("x", x0.clone(), n, d)?;
        let phi = tape.param_with("log_f", vec![cfg.de.f.ln()], 1, 1, Reparam::Exp)?;
        let cr = tape.param("cr_logit", vec![logit(cfg.de.cr)], 1, 1)?;
        let sel = tape.param("selection_logits", vec![0.0; n], n, 1)?;
        Ok(DiffDe {
            best: x0[..d].to_vec(),
            cfg,
            domain,
            tape,
            x,
            phi,
            cr,
            sel,
            f: vec![f64::INFINITY; n],
            best_f: f64::INFINITY,
            started: false,
            staged: None,
            rng,
        })
    }

    pub fn population(&self) -> &[f64] {
        self.tape.value(self.x)
    }

    /// Cached fitness per slot. After a nonzero outer step the population has
    /// moved and these are the values from before the move.
    pub fn fitness(&self) -> &[f64] {
        &self.f
    }

    pub fn scale_factor(&self) -> f64 {
        self.tape.read_value(&self.phi)[0]
    }

    /// Parameter handles: population, log scale factor, crossover logit,
    /// selection logits.
    pub fn params(&self) -> (Var, Var, Var, Var) {
        (self.x, self.phi.raw(), self.cr, self.sel)
    }

    fn draw(&mut self) -> Move {
        let (n, d) = (self.cfg.de.pop, self.domain.dim());
        let roles = self.cfg.de.strategy.roles();
        Move {
            draws: (0..n).map(|_| draw_de(&mut self.rng, n, d, roles)).collect(),
            best: argmin(&self.f),
        }
    }

    fn trials(&mut self, m: &Move) -> Result<Var> {
        let (n, d) = (self.cfg.de.pop, self.domain.dim());
        let strategy = self.cfg.de.strategy;
        let roles = strategy.roles();
        let draws = &m.draws;
        let logits = self.tape.value(self.sel).to_vec();
        let mut noise = vec![Vec::with_capacity(n * n); roles];
        for (i, dr) in draws.iter().enumerate() {
            let (_, masks) = pick_roles(dr, &logits, i);
            for k in 0..roles {
                noise[k].extend(dr.roles[k].iter().zip(&masks[k]).map(|(e, m)| e + m));
            }
        }
        let sel_cfg = RelaxConfig::new(self.cfg.tau, self.cfg.hard_selection)?;
        let t = &mut self.tape;
        let lmat = t.broadcast_rows(self.sel, n)?;
        let mut picked = Vec::with_capacity(roles);
        for e in noise {
            let e = t.constant(e, n, n)?;
            let s = gumbel_softmax_rows(t, lmat, e, sel_cfg)?;
            picked.push(t.matmul(s, self.x)?);
        }
        let f = t.read(&self.phi)?;
        let donor = match strategy {
            DeStrategy::Rand1 => {
                let diff = t.sub(picked[1], picked[2])?;
                let step = t.mul(f, diff)?;
                t.add(picked[0], step)?
            }
            DeStrategy::CurrentToBest1 => {
                let best = t.row(self.x, m.best)?;
                let best = t.broadcast_rows(best, n)?;
                let toward = t.sub(best, self.x)?;
                let toward = t.mul(f, toward)?;
                let diff = t.sub(picked[0], picked[1])?;
                let diff = t.mul(f, diff)?;
                let a = t.add(self.x, toward)?;
                t.add(a, diff)?
            }
        };

        let mut cross = Vec::with_capacity(n * d);
        let mut forced = vec![0.0; n * d];
        for (i, dr) in draws.iter().enumerate() {
            cross.extend_from_slice(&dr.cross);
            forced[i * d + dr.j_rand] = 1.0;
        }
        let keep: Vec<f64> = forced.iter().map(|j| 1.0 - j).collect();
        let cross = t.constant(cross, n, d)?;
        let gate = t.add(cross, self.cr)?;
        let hard: Vec<f64> = t
            .value(gate)
            .iter()
            .zip(&forced)
            .map(|(&g, &j)| if g > 0.0 || j == 1.0 { 1.0 } else { 0.0 })
            .collect();
        let scaled = t.scale(gate, 1.0 / self.cfg.tau)?;
        let soft = t.sigmoid(scaled)?;
        let keep = t.constant(keep, n, d)?;
        let forced = t.constant(forced, n, d)?;
        let soft = t.mul(soft, keep)?;
        let soft = t.add(soft, forced)?;
        let hard = t.constant(hard, n, d)?;
        let mask = t.straight_through(hard, soft)?;

        let delta = t.sub(donor, self.x)?;
        let delta = t.mul(mask, delta)?;
        let trial = t.add(self.x, delta)?;
        Ok(t.clamp(trial, self.domain.lower(), self.domain.upper())?)
    }
}

impl DiffAlgorithm for DiffDe {
    fn name(&self) -> &'static str {
        "de-diff"
    }

    fn pop_size(&self) -> usize {
        self.cfg.de.pop
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
        let cand = match &m {
            Some(m) => self.trials(m)?,
            None => self.x,
        };
        let f = obj.eval_rows(&mut self.tape, cand)?;
        let (loss, _) = loss_of(&mut self.tape, f, self.cfg.loss)?;

        let ft = self.tape.value(f);
        let xs = self.tape.value(cand);
        let mut won = vec![false; ft.len()];
        for (i, &fi) in ft.iter().enumerate() {
            // the first generation fills every slot
            if !self.started || fi <= self.f[i] {
                self.f[i] = fi;
                won[i] = true;
            }
        }
        self.started = true;
        let i = argmin(&self.f);
        if won[i] {
            refresh_best(&mut self.best, &mut self.best_f, &xs[i * d..(i + 1) * d], self.f[i]);
        }
        self.staged = Some(Staged { m, won });
        Ok(loss)
    }

    fn update_state(&mut self) -> Result<()> {
        let s = self.staged.take().ok_or_else(|| not_staged("de-diff"))?;
        let d = self.domain.dim();
        self.tape.reset();
        let mut x = self.tape.value(self.x).to_vec();
        if let Some(m) = &s.m {
            let cand = self.trials(m)?;
            let cand = self.tape.value(cand);
            for (i, _) in s.won.iter().enumerate().filter(|(_, &w)| w) {
                x[i * d..(i + 1) * d].copy_from_slice(&cand[i * d..(i + 1) * d]);
            }
        }
        self.tape.reset();
        self.domain.clamp_rows(&mut x);
        if !x.chunks(d).any(|row| row == self.best.as_slice()) {
            let w = argmax_value(&self.f);
            x[w * d..(w + 1) * d].copy_from_slice(&self.best);
            self.f[w] = self.best_f;
        }
        self.tape.set_param_values(self.x, &x)?;
        Ok(())
    }

    fn best_fitness(&self) -> f64 {
        self.best_f
    }

    fn best_point(&self) -> &[f64] {
        &self.best
    }

    fn hyperparams(&self) -> Vec<(String, f64)> {
        let cr = crate::tape::sigmoid(self.tape.value(self.cr)[0]);
        vec![("f".into(), self.scale_factor()), ("cr".into(), cr)]
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::problems::{Benchmark, BenchmarkKind};

    #[test]
    fn small_population_rejected() {
        let domain = BoxDomain::symmetric(2, 1.0).unwrap();
        let mut cfg = DiffDeConfig::default();
        cfg.de.pop = 3;
        assert!(DiffDe::new(cfg, domain, Rng::seed_from(0)).is_err());
    }

    #[test]
    fn tiny_scale_and_open_crossover_give_first_parent_mixture() {
        let mut obj = Objective::new(Arc::new(Benchmark::new(BenchmarkKind::Sphere, 2).unwrap()));
        let mut cfg = DiffDeConfig::default();
        cfg.de.pop = 5;
        cfg.de.cr = 1.0;
        let mut de = DiffDe::new(cfg, obj.domain().clone(), Rng::seed_from(4)).unwrap();
        de.generation(&mut obj).unwrap();
        de.update_state().unwrap();
        let phi = de.phi.raw();
        de.tape.set_param_values(phi, &[-50.0]).unwrap();
        let x = de.population().to_vec();
        de.tape.reset();
        let m = de.draw();
        let trial = de.trials(&m).unwrap();
        // every trial row is a convex mixture of rows other than its own
        for (i, row) in de.tape.value(trial).chunks(2).enumerate() {
            for j in 0..2 {
                let others: Vec<f64> = (0..5).filter(|&k| k != i).map(|k| x[k * 2 + j]).collect();
                let lo = others.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = others.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(row[j] >= lo - 1e-9 && row[j] <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn slot_fitness_never_worsens_and_best_is_kept() {
        let mut obj = Objective::new(Arc::new(Benchmark::new(BenchmarkKind::Rosenbrock, 3).unwrap()));
        let mut cfg = DiffDeConfig::default();
        cfg.de.pop = 8;
        let mut de = DiffDe::new(cfg, obj.domain().clone(), Rng::seed_from(1)).unwrap();
        de.generation(&mut obj).unwrap();
        de.update_state().unwrap();
        for _ in 0..30 {
            let prev = de.fitness().to_vec();
            de.generation(&mut obj).unwrap();
            de.update_state().unwrap();
            assert!(de.fitness().iter().zip(&prev).all(|(a, b)| a <= b));
            let best = de.best_point().to_vec();
            assert!(de.population().chunks(3).any(|r| r == best.as_slice()));
        }
    }
}
