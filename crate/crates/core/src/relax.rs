//! Reparameterized surrogates for random draws: pathwise Gaussians,
//! Gumbel-Sigmoid (Binary-Concrete) masks and Gumbel-Softmax selection.
//!
//! The noise is always drawn from an [`Rng`] and recorded on the tape as a
//! constant, so gradients flow only into the distribution parameters.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tape::{self, Tape, TapeError, Var};

/// Uniform draws are kept inside `(UNIFORM_EPS, 1 - UNIFORM_EPS)`.
pub const UNIFORM_EPS: f64 = 1e-12;

/// Seeded generator shared by the classical and differentiable algorithms.
#[derive(Debug, Clone)]
pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn seed_from(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        let u: f64 = self.0.gen();
        u.clamp(UNIFORM_EPS, 1.0 - UNIFORM_EPS)
    }

    pub fn uniform_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.uniform()).collect()
    }

    /// Uniform on `[lo, hi)`, unclipped.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        let u: f64 = self.0.gen();
        lo + (hi - lo) * u
    }

    pub fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Standard logistic variate `ln u - ln(1 - u)`.
    pub fn logistic(&mut self) -> f64 {
        let u = self.uniform();
        u.ln() - (1.0 - u).ln()
    }

    pub fn logistic_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.logistic()).collect()
    }

    /// Standard Gumbel variate `-ln(-ln u)`.
    pub fn gumbel(&mut self) -> f64 {
        -(-self.uniform().ln()).ln()
    }

    pub fn gumbel_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.gumbel()).collect()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.0.gen_range(0..n)
    }
}

/// Inverse of the logistic function; `p` is clipped away from 0 and 1.
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(UNIFORM_EPS, 1.0 - UNIFORM_EPS);
    p.ln() - (1.0 - p).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxConfig {
    pub tau: f64,
    /// Threshold (masks) or one-hot (selection) on the forward pass, with
    /// straight-through gradients.
    pub hard_forward: bool,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        RelaxConfig {
            tau: 1.0,
            hard_forward: true,
        }
    }
}

impl RelaxConfig {
    pub fn new(tau: f64, hard_forward: bool) -> tape::Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(TapeError::InvalidArgument(format!(
                "temperature must be positive, got {tau}"
            )));
        }
        Ok(RelaxConfig { tau, hard_forward })
    }

    pub fn soft(self) -> Self {
        RelaxConfig {
            hard_forward: false,
            ..self
        }
    }

    pub fn hard(self) -> Self {
        RelaxConfig {
            hard_forward: true,
            ..self
        }
    }
}

/// `mean + scale * z` with `z ~ N(0, I)`. `scale` matches `mean` or is a
/// scalar and must be non-negative.
pub fn pathwise_gaussian(tape: &mut Tape, mean: Var, scale: Var, rng: &mut Rng) -> tape::Result<Var> {
    if let Some(i) = tape.value(scale).iter().position(|&s| s < 0.0) {
        return Err(TapeError::Domain {
            op: "pathwise_gaussian",
            index: i,
            value: tape.value(scale)[i],
        });
    }
    let z = tape.constant(rng.normal_vec(mean.len()), mean.rows(), mean.cols())?;
    let step = tape.mul(scale, z)?;
    tape.add(mean, step)
}

/// `mean + sigma * L z` with `L` read as lower triangular.
pub fn pathwise_gaussian_factor(
    tape: &mut Tape,
    mean: Var,
    sigma: Var,
    l: Var,
    rng: &mut Rng,
) -> tape::Result<Var> {
    let z = tape.vector(rng.normal_vec(l.rows()));
    let y = tape.lower_tri_matvec(l, z)?;
    let step = tape.mul(sigma, y)?;
    tape.add(mean, step)
}

/// Binary-Concrete mask over fresh logistic noise shaped like `alpha`.
pub fn gumbel_sigmoid(tape: &mut Tape, alpha: Var, cfg: RelaxConfig, rng: &mut Rng) -> tape::Result<Var> {
    let noise = tape.constant(rng.logistic_vec(alpha.len()), alpha.rows(), alpha.cols())?;
    gumbel_sigmoid_with(tape, alpha, noise, cfg)
}

/// Binary-Concrete mask over given logistic noise. `alpha` matches `noise`
/// or is a scalar. The hard value is `1[noise + alpha > 0]`, the exact event
/// `soft > 0.5`, and its probability is `sigmoid(alpha)` for every `tau`.
pub fn gumbel_sigmoid_with(tape: &mut Tape, alpha: Var, noise: Var, cfg: RelaxConfig) -> tape::Result<Var> {
    let logits = tape.add(noise, alpha)?;
    let scaled = tape.scale(logits, 1.0 / cfg.tau)?;
    let soft = tape.sigmoid(scaled)?;
    if !cfg.hard_forward {
        return Ok(soft);
    }
    let hard: Vec<f64> = tape
        .value(logits)
        .iter()
        .map(|&t| if t > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let hard = tape.constant(hard, logits.rows(), logits.cols())?;
    tape.straight_through(hard, soft)
}

/// Gumbel-Softmax over a logits vector of length at least 2. The result has
/// the orientation of `logits`.
pub fn gumbel_softmax(tape: &mut Tape, logits: Var, cfg: RelaxConfig, rng: &mut Rng) -> tape::Result<Var> {
    let n = logits.len();
    let row = tape.reshape(logits, 1, n)?;
    let noise = tape.constant(rng.gumbel_vec(n), 1, n)?;
    let out = gumbel_softmax_rows(tape, row, noise, cfg)?;
    tape.reshape(out, logits.rows(), logits.cols())
}

/// Row-wise Gumbel-Softmax of `logits + noise`. Entries at `-inf` are never
/// selected. With `hard_forward` each row is the one-hot argmax (lowest index
/// on ties) with softmax gradients.
pub fn gumbel_softmax_rows(tape: &mut Tape, logits: Var, noise: Var, cfg: RelaxConfig) -> tape::Result<Var> {
    if logits.cols() < 2 {
        return Err(TapeError::InvalidArgument(format!(
            "gumbel_softmax needs at least 2 categories, got {}",
            logits.cols()
        )));
    }
    let perturbed = tape.add(logits, noise)?;
    let scaled = tape.scale(perturbed, 1.0 / cfg.tau)?;
    let soft = tape.softmax_rows(scaled)?;
    if !cfg.hard_forward {
        return Ok(soft);
    }
    let cols = perturbed.cols();
    let mut hard = vec![0.0; perturbed.len()];
    for (r, row) in tape.value(perturbed).chunks(cols).enumerate() {
        hard[r * cols + argmax(row)] = 1.0;
    }
    let hard = tape.constant(hard, perturbed.rows(), cols)?;
    tape.straight_through(hard, soft)
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_draws_stay_inside_open_interval() {
        let mut rng = Rng::seed_from(1);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!(u >= UNIFORM_EPS && u <= 1.0 - UNIFORM_EPS);
            assert!(rng.logistic().is_finite());
        }
    }

    #[test]
    fn zero_scale_returns_mean() {
        let mut tape = Tape::new();
        let mut rng = Rng::seed_from(3);
        let m = tape.vector(vec![1.5, -2.0]);
        let s = tape.scalar(0.0);
        let x = pathwise_gaussian(&mut tape, m, s, &mut rng).unwrap();
        assert_eq!(tape.value(x), &[1.5, -2.0]);
    }

    #[test]
    fn negative_scale_rejected() {
        let mut tape = Tape::new();
        let mut rng = Rng::seed_from(3);
        let m = tape.vector(vec![0.0, 0.0]);
        let s = tape.vector(vec![1.0, -0.1]);
        assert!(matches!(
            pathwise_gaussian(&mut tape, m, s, &mut rng),
            Err(TapeError::Domain { index: 1, .. })
        ));
    }

    #[test]
    fn saturated_sigmoid_mask_is_one() {
        let mut tape = Tape::new();
        let mut rng = Rng::seed_from(5);
        let a = tape.vector(vec![50.0; 1000]);
        let m = gumbel_sigmoid(&mut tape, a, RelaxConfig::default(), &mut rng).unwrap();
        assert!(tape.value(m).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn saturated_softmax_picks_first() {
        let mut tape = Tape::new();
        let mut rng = Rng::seed_from(5);
        let l = tape.vector(vec![50.0, 0.0, 0.0]);
        let p = gumbel_softmax(&mut tape, l, RelaxConfig::default().soft(), &mut rng).unwrap();
        assert!(tape.value(p)[0] > 0.999);
        assert!((tape.value(p).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_needs_two_categories() {
        let mut tape = Tape::new();
        let mut rng = Rng::seed_from(5);
        let l = tape.vector(vec![1.0]);
        assert!(gumbel_softmax(&mut tape, l, RelaxConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn bad_temperature_rejected() {
        assert!(RelaxConfig::new(0.0, true).is_err());
        assert!(RelaxConfig::new(f64::NAN, true).is_err());
    }
}
