//! Differentiable PSO, GA, DE and CMA-ES. Populations and hyperparameters
//! are tape parameters, every random operator goes through a reparameterized
//! surrogate, and each generation ends in a scalar loss for the outer
//! optimizer.
//!
//! A generation draws its noise, builds candidates on the tape and stages
//! the noise. After the outer step, [`DiffAlgorithm::update_state`] replays
//! the candidate construction with the stepped parameters and the same
//! noise, then writes the result into the parameter storage. With a zero
//! learning rate the replay is bit-identical and the trajectory is the plain
//! metaheuristic.

mod cmaes;
mod de;
mod ga;
mod pso;

pub use cmaes::{DiffCmaEs, DiffCmaesConfig};
pub use de::{DiffDe, DiffDeConfig};
pub use ga::{DiffGa, DiffGaConfig};
pub use pso::{DiffPso, DiffPsoConfig};

use crate::error::{Error, Result};
use crate::problems::Objective;
use crate::tape::{self, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossMode {
    /// Fitness of the best candidate; the gradient reaches only that row.
    #[default]
    Best,
    Mean,
}

impl LossMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "best" | "min" => Some(LossMode::Best),
            "mean" => Some(LossMode::Mean),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossMode::Best => "best",
            LossMode::Mean => "mean",
        }
    }
}

pub trait DiffAlgorithm: Send {
    fn name(&self) -> &'static str;

    /// Evaluations per generation.
    fn pop_size(&self) -> usize;

    fn tape(&self) -> &Tape;

    fn tape_mut(&mut self) -> &mut Tape;

    /// Resets the tape, records one generation and returns the scalar loss.
    fn generation(&mut self, obj: &mut Objective) -> Result<Var>;

    /// Commits the staged generation; call after the outer step.
    fn update_state(&mut self) -> Result<()>;

    fn best_fitness(&self) -> f64;

    fn best_point(&self) -> &[f64];

    fn hyperparams(&self) -> Vec<(String, f64)>;
}

pub(crate) fn loss_of(tape: &mut Tape, fitness: Var, mode: LossMode) -> tape::Result<(Var, usize)> {
    match mode {
        LossMode::Best => tape.min_with_index(fitness),
        LossMode::Mean => {
            let best = crate::classic::argmin(tape.value(fitness));
            Ok((tape.mean(fitness)?, best))
        }
    }
}

/// `n` copies of `row`, row-major.
pub(crate) fn repeat_row(row: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(row.len() * n);
    for _ in 0..n {
        out.extend_from_slice(row);
    }
    out
}

pub(crate) fn not_staged(name: &str) -> Error {
    Error::State(format!("{name}: update_state called before a generation"))
}

/// Records `values` as the new best if they improve on `best_f`.
pub(crate) fn refresh_best(best: &mut Vec<f64>, best_f: &mut f64, x: &[f64], f: f64) {
    if f < *best_f {
        *best_f = f;
        best.clear();
        best.extend_from_slice(x);
    }
}
