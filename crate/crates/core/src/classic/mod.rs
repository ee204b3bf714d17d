//! Gradient-free reference implementations of PSO, a real-coded GA, DE and
//! CMA-ES. Their random draws happen in the same order as in the
//! differentiable versions, so both can be replayed on shared noise.

mod cmaes;
mod de;
mod ga;
mod pso;

pub use cmaes::{CmaConstants, CmaEs, CmaesConfig};
pub(crate) use cmaes::{JITTER_SCALE, JITTER_STEPS};
pub use de::{De, DeConfig, DeStrategy};
pub(crate) use de::{draw_de, pick_roles, DeDraws};
pub use ga::{
    blend, blend_crossover, gaussian_mutation, polynomial_delta, polynomial_mutation, roulette_select, sbx_beta,
    sbx_child, sbx_crossover, tournament_select, Ga, GaConfig, Selection,
};
pub use pso::{velocity_update, Pso, PsoConfig};

use crate::error::Result;
use crate::problems::Objective;

/// One gradient-free optimizer run. Every generation costs exactly
/// [`pop_size`](Self::pop_size) evaluations; for the population-based
/// methods the first generation evaluates the initial population.
pub trait ClassicOptimizer: Send {
    fn name(&self) -> &'static str;

    fn pop_size(&self) -> usize;

    /// Runs one generation and returns the best fitness evaluated in it.
    fn generation(&mut self, obj: &mut Objective) -> Result<f64>;

    /// Best fitness seen so far (`+inf` before the first generation).
    fn best_fitness(&self) -> f64;

    fn best_point(&self) -> &[f64];

    /// Current hyperparameter values for logging.
    fn hyperparams(&self) -> Vec<(String, f64)>;
}

/// Index of the lowest value; the lowest index wins ties.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Index of the highest value; the lowest index wins ties.
pub fn argmax_value(values: &[f64]) -> usize {
    let mut worst = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[worst] {
            worst = i;
        }
    }
    worst
}

/// Additive selection mask: `-inf` at excluded indices, 0 elsewhere.
pub fn exclusion_mask(n: usize, excluded: &[usize]) -> Vec<f64> {
    let mut m = vec![0.0; n];
    for &i in excluded {
        m[i] = f64::NEG_INFINITY;
    }
    m
}

/// Argmax of `noise + logits + mask`; with zero logits this is a uniform
/// draw among the indices not masked out.
pub fn perturbed_argmax(noise: &[f64], logits: &[f64], mask: &[f64]) -> usize {
    let scores: Vec<f64> = noise
        .iter()
        .zip(logits)
        .zip(mask)
        .map(|((n, l), m)| n + l + m)
        .collect();
    crate::relax::argmax(&scores)
}
