use crate::diff::{DiffAlgorithm, LossMode};
use crate::error::Result;
use crate::problems::{BoxDomain, Objective};
use crate::relax::Rng;
use crate::tape::{Tape, Var};

/// A single point trained by the outer optimizer alone: one evaluation per
/// generation and no evolutionary move. Run under the same loop it is plain
/// full-batch gradient descent.
#[derive(Debug, Clone)]
pub struct GradientOnly {
    tape: Tape,
    x: Var,
    best: Vec<f64>,
    best_f: f64,
    staged: bool,
}

impl GradientOnly {
    pub fn new(domain: &BoxDomain, rng: &mut Rng) -> Result<Self> {
        let x0 = domain.sample(1, rng);
        let mut tape = Tape::new();
        let x = tape.param("x", x0.clone(), 1, domain.dim())?;
        Ok(GradientOnly {
            tape,
            x,
            best: x0,
            best_f: f64::INFINITY,
            staged: false,
        })
    }

    pub fn point(&self) -> &[f64] {
        self.tape.value(self.x)
    }
}

impl DiffAlgorithm for GradientOnly {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn pop_size(&self) -> usize {
        1
    }

    fn tape(&self) -> &Tape {
        &self.tape
    }

    fn tape_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }

    fn generation(&mut self, obj: &mut Objective) -> Result<Var> {
        self.tape.reset();
        let f = obj.eval_rows(&mut self.tape, self.x)?;
        let (loss, _) = crate::diff::loss_of(&mut self.tape, f, LossMode::Best)?;
        let fv = self.tape.scalar_value(loss);
        if fv < self.best_f {
            self.best_f = fv;
            self.best = self.tape.value(self.x).to_vec();
        }
        self.staged = true;
        Ok(loss)
    }

    fn update_state(&mut self) -> Result<()> {
        if !std::mem::take(&mut self.staged) {
            return Err(crate::diff::not_staged("adam"));
        }
        Ok(())
    }

    fn best_fitness(&self) -> f64 {
        self.best_f
    }

    fn best_point(&self) -> &[f64] {
        &self.best
    }

    fn hyperparams(&self) -> Vec<(String, f64)> {
        Vec::new()
    }
}
