use super::{loss_of, not_staged, refresh_best, DiffAlgorithm, LossMode};
use crate::classic::{argmax_value, argmin, GaConfig};
use crate::error::{Error, Result};
use crate::problems::{BoxDomain, Objective};
use crate::relax::{gumbel_sigmoid_with, gumbel_softmax_rows, logit, RelaxConfig, Rng};
use crate::tape::{Param, Reparam, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct DiffGaConfig {
    /// Population size, initial rates and distribution indices, elitism.
    /// Parents are always drawn by soft Gumbel-Softmax selection, so the
    /// classical selection scheme is not used.
    pub ga: GaConfig,
    pub loss: LossMode,
    pub tau: f64,
}

impl Default for DiffGaConfig {
    fn default() -> Self {
        DiffGaConfig {
            ga: GaConfig::default(),
            loss: LossMode::Best,
            tau: 1.0,
        }
    }
}

/// Noise for one generation of offspring, row-major per child.
#[derive(Debug, Clone)]
struct Move {
    sel_p: Vec<f64>,
    sel_q: Vec<f64>,
    gate: Vec<f64>,
    u: Vec<f64>,
    mgate: Vec<f64>,
    um: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Staged {
    m: Option<Move>,
    /// Offspring slot overwritten by the previous best, and that point.
    elite: Option<(usize, Vec<f64>)>,
}

/// Real-coded GA with soft parent selection, a relaxed crossover gate,
/// SBX with a learnable `eta_c` and per-gene relaxed polynomial mutation with
/// a learnable `eta_m`.
#[derive(Debug, Clone)]
pub struct DiffGa {
    cfg: DiffGaConfig,
    domain: BoxDomain,
    tape: Tape,
    x: Var,
    eta_c: Param,
    eta_m: Param,
    mut_logits: Var,
    cross_logit: Var,
    sel: Var,
    f: Vec<f64>,
    best: Vec<f64>,
    best_f: f64,
    started: bool,
    staged: Option<Staged>,
    rng: Rng,
}

impl DiffGa {
    pub fn new(cfg: DiffGaConfig, domain: BoxDomain, mut rng: Rng) -> Result<Self> {
        let (n, d) = (cfg.ga.pop, domain.dim());
        if n < 2 {
            return Err(Error::Config("GA needs at least 2 individuals".into()));
        }
        if !(cfg.ga.eta_c > 0.0 && cfg.ga.eta_m > 0.0) {
            return Err(Error::Config("distribution indices must be positive".into()));
        }
        RelaxConfig::new(cfg.tau, true)?;
        let rate = cfg.ga.mutation_rate.unwrap_or(1.0 / d as f64);
        let x0 = domain.sample(n, &mut rng);
        let mut tape = Tape::new();
        let x = tape.param("x", x0.clone(), n, d)?;
        let eta_c = tape.param_with("log_eta_c", vec![cfg.ga.eta_c.ln()], 1, 1, Reparam::Exp)?;
        let eta_m = tape.param_with("log_eta_m", vec![cfg.ga.eta_m.ln()], 1, 1, Reparam::Exp)?;
        let mut_logits = tape.param("mutation_logits", vec![logit(rate); d], d, 1)?;
        let cross_logit = tape.param("crossover_logit", vec![logit(cfg.ga.crossover_rate)], 1, 1)?;
        let sel = tape.param("selection_logits", vec![0.0; n], n, 1)?;
        Ok(DiffGa {
            best: x0[..d].to_vec(),
            cfg,
            domain,
            tape,
            x,
            eta_c,
            eta_m,
            mut_logits,
            cross_logit,
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

    /// Parameter handles: population, log `eta_c`, log `eta_m`, mutation
    /// logits, crossover logit, selection logits.
    pub fn params(&self) -> [Var; 6] {
        [
            self.x,
            self.eta_c.raw(),
            self.eta_m.raw(),
            self.mut_logits,
            self.cross_logit,
            self.sel,
        ]
    }

    fn draw(&mut self) -> Move {
        let (n, d) = (self.cfg.ga.pop, self.domain.dim());
        let mut m = Move {
            sel_p: Vec::with_capacity(n * n),
            sel_q: Vec::with_capacity(n * n),
            gate: Vec::with_capacity(n),
            u: Vec::with_capacity(n * d),
            mgate: Vec::with_capacity(n * d),
            um: Vec::with_capacity(n * d),
        };
        let r = &mut self.rng;
        for _ in 0..n {
            m.sel_p.extend(r.gumbel_vec(n));
            m.sel_q.extend(r.gumbel_vec(n));
            m.gate.push(r.logistic());
            m.u.extend(r.uniform_vec(d));
            m.mgate.extend(r.logistic_vec(d));
            m.um.extend(r.uniform_vec(d));
        }
        m
    }

    fn offspring(&mut self, m: &Move) -> Result<Var> {
        let (n, d) = (self.cfg.ga.pop, self.domain.dim());
        let soft = RelaxConfig::new(self.cfg.tau, false)?;
        let hard = soft.hard();
        let t = &mut self.tape;

        let lmat = t.broadcast_rows(self.sel, n)?;
        let ep = t.constant(m.sel_p.clone(), n, n)?;
        let sp = gumbel_softmax_rows(t, lmat, ep, soft)?;
        let p = t.matmul(sp, self.x)?;
        let eq = t.constant(m.sel_q.clone(), n, n)?;
        let sq = gumbel_softmax_rows(t, lmat, eq, soft)?;
        let q = t.matmul(sq, self.x)?;

        // SBX: beta = base^(1 / (eta_c + 1)), child = (p + q)/2 + beta (p - q)/2
        let base: Vec<f64> = m
            .u
            .iter()
            .map(|&u| if u < 0.5 { 2.0 * u } else { 1.0 / (2.0 * (1.0 - u)) })
            .collect();
        let base = t.constant(base, n, d)?;
        let eta_c = t.read(&self.eta_c)?;
        let ec = t.shift(eta_c, 1.0)?;
        let ec = t.powi(ec, -1)?;
        let beta = t.pow(base, ec)?;
        let sum = t.add(p, q)?;
        let mid = t.scale(sum, 0.5)?;
        let spread = t.sub(p, q)?;
        let spread = t.mul(beta, spread)?;
        let spread = t.scale(spread, 0.5)?;
        let sbx = t.add(mid, spread)?;

        let gate_noise = t.constant(m.gate.clone(), n, 1)?;
        let gate = gumbel_sigmoid_with(t, self.cross_logit, gate_noise, hard)?;
        let gate = t.broadcast_cols(gate, d)?;
        let change = t.sub(sbx, p)?;
        let change = t.mul(gate, change)?;
        let child = t.add(p, change)?;

        // polynomial mutation: delta = s (b^(1 / (eta_m + 1)) - 1)
        let (sign, b): (Vec<f64>, Vec<f64>) = m
            .um
            .iter()
            .map(|&u| if u < 0.5 { (1.0, 2.0 * u) } else { (-1.0, 2.0 * (1.0 - u)) })
            .unzip();
        let sign = t.constant(sign, n, d)?;
        let b = t.constant(b, n, d)?;
        let eta_m = t.read(&self.eta_m)?;
        let em = t.shift(eta_m, 1.0)?;
        let em = t.powi(em, -1)?;
        let pw = t.pow(b, em)?;
        let pw = t.shift(pw, -1.0)?;
        let delta = t.mul(sign, pw)?;
        let widths = super::repeat_row(&self.domain.widths(), n);
        let widths = t.constant(widths, n, d)?;
        let alpha = t.broadcast_rows(self.mut_logits, n)?;
        let mnoise = t.constant(m.mgate.clone(), n, d)?;
        let mask = gumbel_sigmoid_with(t, alpha, mnoise, hard)?;
        let offset = t.mul(mask, delta)?;
        let offset = t.mul(offset, widths)?;
        let child = t.add(child, offset)?;
        Ok(t.clamp(child, self.domain.lower(), self.domain.upper())?)
    }
}

impl DiffAlgorithm for DiffGa {
    fn name(&self) -> &'static str {
        "ga-diff"
    }

    fn pop_size(&self) -> usize {
        self.cfg.ga.pop
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
            Some(m) => self.offspring(m)?,
            None => self.x,
        };
        let f = obj.eval_rows(&mut self.tape, cand)?;
        let (loss, _) = loss_of(&mut self.tape, f, self.cfg.loss)?;

        let mut fv = self.tape.value(f).to_vec();
        let elite = if self.started && self.cfg.ga.elitism {
            let w = argmax_value(&fv);
            Some((w, self.best.clone(), self.best_f))
        } else {
            None
        };
        let i = argmin(&fv);
        let xs = self.tape.value(cand);
        refresh_best(&mut self.best, &mut self.best_f, &xs[i * d..(i + 1) * d], fv[i]);
        let elite = elite.map(|(w, x, fx)| {
            fv[w] = fx;
            (w, x)
        });
        self.f = fv;
        self.started = true;
        self.staged = Some(Staged { m, elite });
        Ok(loss)
    }

    fn update_state(&mut self) -> Result<()> {
        let s = self.staged.take().ok_or_else(|| not_staged("ga-diff"))?;
        let d = self.domain.dim();
        self.tape.reset();
        let mut x = match &s.m {
            Some(m) => {
                let c = self.offspring(m)?;
                self.tape.value(c).to_vec()
            }
            None => self.tape.value(self.x).to_vec(),
        };
        self.tape.reset();
        self.domain.clamp_rows(&mut x);
        if let Some((w, e)) = &s.elite {
            x[w * d..(w + 1) * d].copy_from_slice(e);
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
        let sig = crate::tape::sigmoid;
        let ml = self.tape.value(self.mut_logits);
        let mr = ml.iter().map(|&a| sig(a)).sum::<f64>() / ml.len() as f64;
        vec![
            ("crossover_rate".into(), sig(self.tape.value(self.cross_logit)[0])),
            ("mutation_rate".into(), mr),
            ("eta_c".into(), self.tape.read_value(&self.eta_c)[0]),
            ("eta_m".into(), self.tape.read_value(&self.eta_m)[0]),
        ]
    }
}
