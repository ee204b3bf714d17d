use std::f64::consts::{E, PI};

use super::{BoxDomain, Problem};
use crate::error::{Error, Result};
use crate::tape::{self, Tape, Var};

const ACKLEY_A: f64 = 20.0;
const ACKLEY_B: f64 = 0.2;
const ACKLEY_C: f64 = 2.0 * PI;
const MICHALEWICZ_M: i32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkKind {
    Sphere,
    Ackley,
    Griewank,
    Rosenbrock,
    Michalewicz,
}

impl BenchmarkKind {
    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Sphere => "sphere",
            BenchmarkKind::Ackley => "ackley",
            BenchmarkKind::Griewank => "griewank",
            BenchmarkKind::Rosenbrock => "rosenbrock",
            BenchmarkKind::Michalewicz => "michalewicz",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "sphere" => BenchmarkKind::Sphere,
            "ackley" => BenchmarkKind::Ackley,
            "griewank" => BenchmarkKind::Griewank,
            "rosenbrock" => BenchmarkKind::Rosenbrock,
            "michalewicz" => BenchmarkKind::Michalewicz,
            _ => return None,
        })
    }

    pub const ALL: [BenchmarkKind; 5] = [
        BenchmarkKind::Sphere,
        BenchmarkKind::Ackley,
        BenchmarkKind::Griewank,
        BenchmarkKind::Rosenbrock,
        BenchmarkKind::Michalewicz,
    ];
}

/// One of the analytic test functions on a box (default `[-100, 100]^D`).
#[derive(Debug, Clone)]
pub struct Benchmark {
    kind: BenchmarkKind,
    domain: BoxDomain,
}

impl Benchmark {
    pub fn new(kind: BenchmarkKind, dim: usize) -> Result<Self> {
        Self::with_bound(kind, dim, 100.0)
    }

    pub fn with_bound(kind: BenchmarkKind, dim: usize, bound: f64) -> Result<Self> {
        if dim == 0 || (kind == BenchmarkKind::Rosenbrock && dim < 2) {
            return Err(Error::Config(format!("{} needs a larger dimension than {dim}", kind.name())));
        }
        Ok(Benchmark {
            kind,
            domain: BoxDomain::symmetric(dim, bound)?,
        })
    }

    pub fn kind(&self) -> BenchmarkKind {
        self.kind
    }
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn ackley(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let cs = x.iter().map(|v| (ACKLEY_C * v).cos()).sum::<f64>() / n;
    -ACKLEY_A * (-ACKLEY_B * sq.sqrt()).exp() - cs.exp() + ACKLEY_A + E
}

pub fn griewank(x: &[f64]) -> f64 {
    let s = x.iter().map(|v| v * v).sum::<f64>() / 4000.0;
    let p: f64 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
        .product();
    s - p + 1.0
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| {
            let t = w[1] - w[0] * w[0];
            let u = 1.0 - w[0];
            100.0 * t * t + u * u
        })
        .sum()
}

pub fn michalewicz(x: &[f64]) -> f64 {
    -x.iter()
        .enumerate()
        .map(|(i, &v)| v.sin() * ((i + 1) as f64 * v * v / PI).sin().powi(2 * MICHALEWICZ_M))
        .sum::<f64>()
}

impl Problem for Benchmark {
    fn name(&self) -> &str {
        self.kind.name()
    }

    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn eval_point(&self, x: &[f64]) -> f64 {
        match self.kind {
            BenchmarkKind::Sphere => sphere(x),
            BenchmarkKind::Ackley => ackley(x),
            BenchmarkKind::Griewank => griewank(x),
            BenchmarkKind::Rosenbrock => rosenbrock(x),
            BenchmarkKind::Michalewicz => michalewicz(x),
        }
    }

    fn eval_rows(&self, tape: &mut Tape, x: Var) -> tape::Result<Var> {
        let (n, d) = x.shape();
        match self.kind {
            BenchmarkKind::Sphere => {
                let sq = tape.square(x)?;
                tape.sum_rows(sq)
            }
            BenchmarkKind::Ackley => {
                let sq = tape.square(x)?;
                let m = tape.mean_rows(sq)?;
                let r = tape.sqrt(m)?;
                let e1 = tape.scale(r, -ACKLEY_B)?;
                let e1 = tape.exp(e1)?;
                let cx = tape.scale(x, ACKLEY_C)?;
                let c = tape.cos(cx)?;
                let mc = tape.mean_rows(c)?;
                let e2 = tape.exp(mc)?;
                let a = tape.scale(e1, -ACKLEY_A)?;
                let s = tape.sub(a, e2)?;
                tape.shift(s, ACKLEY_A + E)
            }
            BenchmarkKind::Griewank => {
                let sq = tape.square(x)?;
                let s = tape.sum_rows(sq)?;
                let s = tape.scale(s, 1.0 / 4000.0)?;
                let inv: Vec<f64> = (0..n)
                    .flat_map(|_| (0..d).map(|j| 1.0 / ((j + 1) as f64).sqrt()))
                    .collect();
                let inv = tape.constant(inv, n, d)?;
                let xs = tape.mul(x, inv)?;
                let c = tape.cos(xs)?;
                let p = tape.prod_rows(c)?;
                let t = tape.sub(s, p)?;
                tape.shift(t, 1.0)
            }
            BenchmarkKind::Rosenbrock => {
                let a = tape.slice_cols(x, 0, d - 1)?;
                let b = tape.slice_cols(x, 1, d)?;
                let a2 = tape.square(a)?;
                let t = tape.sub(b, a2)?;
                let t2 = tape.square(t)?;
                let t2 = tape.scale(t2, 100.0)?;
                let u = tape.affine(a, -1.0, 1.0)?;
                let u2 = tape.square(u)?;
                let terms = tape.add(t2, u2)?;
                tape.sum_rows(terms)
            }
            BenchmarkKind::Michalewicz => {
                let coef: Vec<f64> = (0..n)
                    .flat_map(|_| (0..d).map(|j| (j + 1) as f64 / PI))
                    .collect();
                let coef = tape.constant(coef, n, d)?;
                let sx = tape.sin(x)?;
                let x2 = tape.square(x)?;
                let arg = tape.mul(x2, coef)?;
                let s = tape.sin(arg)?;
                let p = tape.powi(s, 2 * MICHALEWICZ_M)?;
                let terms = tape.mul(sx, p)?;
                let total = tape.sum_rows(terms)?;
                tape.neg(total)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relax::Rng;

    #[test]
    fn global_minima() {
        let z = [0.0; 7];
        assert_eq!(sphere(&z), 0.0);
        assert!(ackley(&z).abs() < 1e-14);
        assert_eq!(griewank(&z), 0.0);
        assert_eq!(rosenbrock(&[1.0; 7]), 0.0);
        assert_eq!(michalewicz(&z), 0.0);
    }

    #[test]
    fn tape_and_plain_paths_agree() {
        let mut rng = Rng::seed_from(11);
        for kind in BenchmarkKind::ALL {
            let b = Benchmark::new(kind, 6).unwrap();
            let pop: Vec<f64> = (0..18).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
            let mut tape = Tape::new();
            let x = tape.constant(pop.clone(), 3, 6).unwrap();
            let f = b.eval_rows(&mut tape, x).unwrap();
            for (i, row) in pop.chunks(6).enumerate() {
                let plain = b.eval_point(row);
                let on_tape = tape.value(f)[i];
                assert!((plain - on_tape).abs() <= 1e-12 * (1.0 + plain.abs()), "{kind:?}");
            }
        }
    }

    #[test]
    fn rosenbrock_needs_two_dimensions() {
        assert!(Benchmark::new(BenchmarkKind::Rosenbrock, 1).is_err());
        assert!(Benchmark::new(BenchmarkKind::Sphere, 0).is_err());
    }
}
