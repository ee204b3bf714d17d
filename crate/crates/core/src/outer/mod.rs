//! The outer gradient loop: Adam over every trainable parameter, a plateau
//! learning-rate schedule, and the per-generation cycle
//! `zero_grad -> generation -> backward -> step -> schedule -> commit`
//! run until the evaluation budget is spent.

mod adam;
mod baseline;
mod scheduler;

pub use adam::{Adam, AdamConfig};
pub use baseline::GradientOnly;
pub use scheduler::PlateauScheduler;

use crate::classic::ClassicOptimizer;
use crate::diff::DiffAlgorithm;
use crate::error::{Error, Result};
use crate::problems::Objective;

/// One row of a run's convergence log.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    /// 1-based.
    pub generation: u64,
    pub n_evals: u64,
    /// Best fitness seen so far in the run.
    pub best_fitness: f64,
    pub lr: f64,
    pub hyperparams: Vec<(String, f64)>,
}

/// Records of one run; `error` is set when the run ended early.
#[derive(Debug)]
pub struct RunOutcome {
    pub records: Vec<RunRecord>,
    pub error: Option<Error>,
}

impl RunOutcome {
    pub fn final_best(&self) -> Option<f64> {
        self.records.last().map(|r| r.best_fitness)
    }
}

fn check_budget(max_evals: u64) -> Result<()> {
    if max_evals == 0 {
        return Err(Error::Config("evaluation budget must be positive".into()));
    }
    Ok(())
}

/// Runs a differentiable algorithm until `obj` has spent `max_evals`
/// evaluations. Without a scheduler the learning rate stays fixed.
pub fn run_loop(
    alg: &mut dyn DiffAlgorithm,
    obj: &mut Objective,
    max_evals: u64,
    adam: &mut Adam,
    mut sched: Option<&mut PlateauScheduler>,
    run: usize,
) -> RunOutcome {
    let mut records = Vec::new();
    if let Err(e) = check_budget(max_evals) {
        return RunOutcome {
            records,
            error: Some(e),
        };
    }
    let mut generation = 0;
    while obj.n_evals() < max_evals {
        let step = (|| -> Result<()> {
            alg.tape_mut().zero_grad();
            let loss = alg.generation(obj)?;
            alg.tape_mut().backward(loss)?;
            adam.step(alg.tape_mut())?;
            if let Some(s) = sched.as_deref_mut() {
                let lr = s.step(adam.lr(), alg.best_fitness());
                adam.set_lr(lr);
            }
            alg.update_state()
        })();
        if let Err(e) = step {
            return RunOutcome {
                records,
                error: Some(e),
            };
        }
        generation += 1;
        records.push(RunRecord {
            run,
            generation,
            n_evals: obj.n_evals(),
            best_fitness: alg.best_fitness(),
            lr: adam.lr(),
            hyperparams: alg.hyperparams(),
        });
    }
    RunOutcome { records, error: None }
}

/// Runs a gradient-free optimizer under the same budget rule. The learning
/// rate column is recorded as 0.
pub fn run_classic(alg: &mut dyn ClassicOptimizer, obj: &mut Objective, max_evals: u64, run: usize) -> RunOutcome {
    let mut records = Vec::new();
    if let Err(e) = check_budget(max_evals) {
        return RunOutcome {
            records,
            error: Some(e),
        };
    }
    let mut generation = 0;
    while obj.n_evals() < max_evals {
        if let Err(e) = alg.generation(obj) {
            return RunOutcome {
                records,
                error: Some(e),
            };
        }
        generation += 1;
        records.push(RunRecord {
            run,
            generation,
            n_evals: obj.n_evals(),
            best_fitness: alg.best_fitness(),
            lr: 0.0,
            hyperparams: alg.hyperparams(),
        });
    }
    RunOutcome { records, error: None }
}
