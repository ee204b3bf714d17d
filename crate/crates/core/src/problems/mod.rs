//! Objective functions: analytic benchmarks and the wine-quality network
//! regression. Every problem evaluates a whole population on the tape and
//! also has a plain path used by the gradient-free algorithms.

mod benchmarks;
mod mlp;
mod wine;

use std::sync::Arc;

pub use benchmarks::{ackley, griewank, michalewicz, rosenbrock, sphere, Benchmark, BenchmarkKind};
pub use mlp::{mlp_forward, mse_loss, MlpShape, MLP_PARAMS};
pub use wine::{load_wine, parse_wine, WineDataset, WineRegression};

use crate::error::{Error, Result};
use crate::tape::{self, Tape, TapeError, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Config(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(j) = lower.iter().zip(&upper).position(|(l, u)| !(l < u)) {
            return Err(Error::Config(format!("empty box interval at coordinate {j}")));
        }
        Ok(BoxDomain { lower, upper })
    }

    /// `[-bound, bound]^dim`.
    pub fn symmetric(dim: usize, bound: f64) -> Result<Self> {
        Self::new(vec![-bound; dim], vec![bound; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn max_width(&self) -> f64 {
        self.widths().into_iter().fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(j, &v)| self.lower[j] <= v && v <= self.upper[j])
    }

    /// Clamps a row-major population (or a single point) in place.
    pub fn clamp_rows(&self, x: &mut [f64]) {
        let d = self.dim();
        for (i, v) in x.iter_mut().enumerate() {
            let j = i % d;
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }

    /// `n` points drawn uniformly in the box, row-major.
    pub fn sample(&self, n: usize, rng: &mut crate::relax::Rng) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(n * d);
        for _ in 0..n {
            for j in 0..d {
                out.push(rng.uniform_range(self.lower[j], self.upper[j]));
            }
        }
        out
    }
}

pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn domain(&self) -> &BoxDomain;

    /// Fitness of every row of an `(N, dim)` population as an `(N, 1)` node.
    fn eval_rows(&self, tape: &mut Tape, pop: Var) -> tape::Result<Var>;

    /// Fitness of one point without recording anything.
    fn eval_point(&self, x: &[f64]) -> f64;
}

/// A problem plus the evaluation counter used for budget accounting.
#[derive(Clone)]
pub struct Objective {
    problem: Arc<dyn Problem>,
    n_evals: u64,
}

impl std::fmt::Debug for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Objective")
            .field("problem", &self.problem.name())
            .field("n_evals", &self.n_evals)
            .finish()
    }
}

impl Objective {
    pub fn new(problem: Arc<dyn Problem>) -> Self {
        Objective { problem, n_evals: 0 }
    }

    pub fn problem(&self) -> &Arc<dyn Problem> {
        &self.problem
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        self.problem.domain()
    }

    pub fn n_evals(&self) -> u64 {
        self.n_evals
    }

    fn check_cols(&self, op: &'static str, v: Var) -> tape::Result<()> {
        if v.cols() != self.dim() {
            return Err(TapeError::ShapeMismatch {
                op,
                left: v.shape(),
                right: (v.rows(), self.dim()),
            });
        }
        Ok(())
    }

    /// On-tape fitness of every row; counts one evaluation per row.
    pub fn eval_rows(&mut self, tape: &mut Tape, pop: Var) -> tape::Result<Var> {
        self.check_cols("eval_rows", pop)?;
        let f = self.problem.eval_rows(tape, pop)?;
        self.n_evals += pop.rows() as u64;
        Ok(f)
    }

    /// On-tape fitness of a single point given as a vector of either
    /// orientation.
    pub fn eval(&mut self, tape: &mut Tape, x: Var) -> tape::Result<Var> {
        if x.len() != self.dim() || (x.rows() != 1 && x.cols() != 1) {
            return Err(TapeError::ShapeMismatch {
                op: "eval",
                left: x.shape(),
                right: (self.dim(), 1),
            });
        }
        let row = tape.reshape(x, 1, self.dim())?;
        let f = self.eval_rows(tape, row)?;
        tape.reshape(f, 1, 1)
    }

    /// Plain fitness of a row-major population.
    pub fn eval_values(&mut self, pop: &[f64]) -> Vec<f64> {
        let d = self.dim();
        debug_assert_eq!(pop.len() % d, 0);
        self.n_evals += (pop.len() / d) as u64;
        pop.chunks(d).map(|x| self.problem.eval_point(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_counts_individuals() {
        let p = Benchmark::new(BenchmarkKind::Sphere, 3).unwrap();
        let mut obj = Objective::new(Arc::new(p));
        let mut tape = Tape::new();
        let pop = tape.constant(vec![0.0; 12], 4, 3).unwrap();
        obj.eval_rows(&mut tape, pop).unwrap();
        assert_eq!(obj.n_evals(), 4);
        obj.eval_values(&[1.0; 6]);
        assert_eq!(obj.n_evals(), 6);
    }

    #[test]
    fn wrong_dimension_is_an_error() {
        let p = Benchmark::new(BenchmarkKind::Ackley, 3).unwrap();
        let mut obj = Objective::new(Arc::new(p));
        let mut tape = Tape::new();
        let x = tape.vector(vec![0.0; 4]);
        assert!(obj.eval(&mut tape, x).is_err());
        assert_eq!(obj.n_evals(), 0);
    }

    #[test]
    fn box_rejects_empty_interval() {
        assert!(BoxDomain::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        let b = BoxDomain::symmetric(2, 100.0).unwrap();
        let mut x = vec![150.0, -3.0, -101.0, 0.0];
        b.clamp_rows(&mut x);
        assert_eq!(x, vec![100.0, -3.0, -100.0, 0.0]);
    }
}
