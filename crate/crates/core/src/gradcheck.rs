//! Central finite-difference checks of the tape's reverse pass, op by op and
//! through one full generation of each differentiable optimizer.
//!
//! Straight-through nodes are switched to surrogate forward during a check,
//! so the finite differences see the same smooth function the backward pass
//! differentiates. Random draws are frozen by cloning the optimizer (and its
//! generator) before every perturbed evaluation.

use std::sync::Arc;

use crate::diff::{
    DiffAlgorithm, DiffCmaEs, DiffCmaesConfig, DiffDe, DiffDeConfig, DiffGa, DiffGaConfig, DiffPso, DiffPsoConfig,
};
use crate::classic::{CmaesConfig, DeConfig, GaConfig, PsoConfig};
use crate::error::Result;
use crate::problems::{mlp_forward, mse_loss, Benchmark, BenchmarkKind, MlpShape, Objective, Problem};
use crate::relax::{gumbel_sigmoid_with, gumbel_softmax_rows, RelaxConfig, Rng};
use crate::tape::{self, ReduceOp, Tape, UnaryOp, Var};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Denominator floor for [`rel_err`]. Central differences of an O(10) loss
/// carry about 1e-10 of rounding noise, so a zero gradient would otherwise
/// fail against noise alone.
pub const REL_FLOOR: f64 = 1e-4;

/// `|a - f| / max(|a|, |f|, REL_FLOOR)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
    /// `param[index]` with the largest error.
    pub worst: String,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }
}

struct Worst {
    err: f64,
    at: String,
    entries: usize,
}

impl Worst {
    fn new() -> Self {
        Worst {
            err: 0.0,
            at: String::new(),
            entries: 0,
        }
    }

    fn see(&mut self, analytic: f64, numeric: f64, at: impl FnOnce() -> String) {
        self.entries += 1;
        let e = rel_err(analytic, numeric);
        // NaN counts as the worst possible error.
        if !(e <= self.err) {
            self.err = if e.is_nan() { f64::INFINITY } else { e };
            self.at = at();
        }
    }

    fn finish(self, name: &str) -> Check {
        Check {
            name: name.to_string(),
            entries: self.entries,
            max_rel_err: self.err,
            worst: self.at,
        }
    }
}

/// An input array for [`check_graph`]: name, values, rows, cols.
pub type Input = (&'static str, Vec<f64>, usize, usize);

/// Checks `d/d inputs` of `sum(w * build(inputs))` with fixed random `w`.
pub fn check_graph<F>(name: &str, inputs: &[Input], build: F) -> Result<Check>
where
    F: Fn(&mut Tape, &[Var]) -> tape::Result<Var>,
{
    let mut tape = Tape::new();
    tape.set_surrogate_forward(true);
    let vars = inputs
        .iter()
        .map(|(n, v, r, c)| tape.param(*n, v.clone(), *r, *c))
        .collect::<tape::Result<Vec<_>>>()?;
    let mut weights = None;
    let mut eval = |tape: &mut Tape| -> tape::Result<Var> {
        tape.reset();
        let out = build(tape, &vars)?;
        let w = weights
            .get_or_insert_with(|| Rng::seed_from(99).uniform_vec(out.len()).iter().map(|u| u + 0.5).collect::<Vec<_>>())
            .clone();
        let w = tape.constant(w, out.rows(), out.cols())?;
        let prod = tape.mul(out, w)?;
        tape.sum(prod)
    };
    let loss = eval(&mut tape)?;
    tape.backward(loss)?;
    let grads: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; v.len()]))
        .collect();
    let mut worst = Worst::new();
    for (k, &v) in vars.iter().enumerate() {
        for i in 0..v.len() {
            let x0 = tape.value(v)[i];
            let mut at = |x: f64| -> tape::Result<f64> {
                tape.param_values_mut(v)?[i] = x;
                let l = eval(&mut tape)?;
                Ok(tape.scalar_value(l))
            };
            let numeric = (at(x0 + STEP)? - at(x0 - STEP)?) / (2.0 * STEP);
            at(x0)?;
            worst.see(grads[k][i], numeric, || format!("{}[{i}]", inputs[k].0));
        }
    }
    Ok(worst.finish(name))
}

/// Checks one generation of `alg` against finite differences of every raw
/// parameter entry. `alg` itself is never advanced.
pub fn check_generation<A>(name: &str, alg: &A, problem: &Arc<dyn Problem>) -> Result<Check>
where
    A: DiffAlgorithm + Clone,
{
    let loss_at = |alg: &mut A| -> Result<f64> {
        alg.tape_mut().set_surrogate_forward(true);
        alg.tape_mut().zero_grad();
        let mut obj = Objective::new(problem.clone());
        let loss = alg.generation(&mut obj)?;
        Ok(alg.tape().scalar_value(loss))
    };
    let mut base = alg.clone();
    base.tape_mut().set_surrogate_forward(true);
    let mut obj = Objective::new(problem.clone());
    let loss = base.generation(&mut obj)?;
    base.tape_mut().backward(loss)?;
    let params: Vec<(Var, String, Vec<f64>)> = base
        .tape()
        .params()
        .map(|(v, n)| {
            let g = base.tape().grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; v.len()]);
            (v, n.to_string(), g)
        })
        .collect();
    let mut worst = Worst::new();
    for (v, pname, grad) in &params {
        for i in 0..v.len() {
            let shifted = |d: f64| -> Result<f64> {
                let mut c = alg.clone();
                c.tape_mut().param_values_mut(*v)?[i] += d;
                loss_at(&mut c)
            };
            let numeric = (shifted(STEP)? - shifted(-STEP)?) / (2.0 * STEP);
            worst.see(grad[i], numeric, || format!("{pname}[{i}]"));
        }
    }
    Ok(worst.finish(name))
}

fn draws(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_range(lo, hi)).collect()
}

/// Every differentiable tape op plus the two relaxations and the network
/// loss, each on a small random instance.
pub fn op_checks() -> Result<Vec<Check>> {
    let mut rng = Rng::seed_from(7);
    let a = draws(&mut rng, 6, -2.0, 2.0);
    let b = draws(&mut rng, 6, -2.0, 2.0);
    let pos = draws(&mut rng, 6, 0.5, 3.0);
    let pos2 = draws(&mut rng, 6, 0.5, 2.0);
    let s = vec![rng.uniform_range(0.5, 1.5)];
    let m = draws(&mut rng, 9, -1.0, 1.0);
    let noise23 = draws(&mut rng, 6, -2.0, 2.0);
    let mut out = Vec::new();

    type Un = fn(&mut Tape, Var) -> tape::Result<Var>;
    let unary: [(&str, Un, &Vec<f64>); 14] = [
        ("neg", |t, x| t.neg(x), &a),
        ("exp", |t, x| t.exp(x), &a),
        ("log", |t, x| t.log(x), &pos),
        ("sqrt", |t, x| t.sqrt(x), &pos),
        ("sin", |t, x| t.sin(x), &a),
        ("cos", |t, x| t.cos(x), &a),
        ("tanh", |t, x| t.tanh(x), &a),
        ("sigmoid", |t, x| t.sigmoid(x), &a),
        ("abs", |t, x| t.abs(x), &a),
        ("softplus", |t, x| t.unary(UnaryOp::Softplus, x), &a),
        ("square", |t, x| t.square(x), &a),
        ("powi", |t, x| t.powi(x, -3), &pos),
        ("powf", |t, x| t.unary(UnaryOp::Powf(1.7), x), &pos),
        ("affine", |t, x| t.affine(x, -2.5, 0.3), &a),
    ];
    for (name, f, x) in unary {
        out.push(check_graph(name, &[("x", x.clone(), 2, 3)], |t, v| f(t, v[0]))?);
    }

    type Bin = fn(&mut Tape, Var, Var) -> tape::Result<Var>;
    let binary: [(&str, Bin, &Vec<f64>, &Vec<f64>); 7] = [
        ("add", |t, x, y| t.add(x, y), &a, &b),
        ("sub", |t, x, y| t.sub(x, y), &a, &b),
        ("mul", |t, x, y| t.mul(x, y), &a, &b),
        ("div", |t, x, y| t.div(x, y), &a, &pos),
        ("pow", |t, x, y| t.pow(x, y), &pos2, &a),
        ("minimum", |t, x, y| t.minimum(x, y), &a, &b),
        ("maximum", |t, x, y| t.maximum(x, y), &a, &b),
    ];
    for (name, f, x, y) in binary {
        out.push(check_graph(name, &[("x", x.clone(), 2, 3), ("y", y.clone(), 2, 3)], |t, v| f(t, v[0], v[1]))?);
        out.push(check_graph(&format!("{name} (scalar rhs)"), &[("x", x.clone(), 2, 3), ("s", s.clone(), 1, 1)], |t, v| {
            f(t, v[0], v[1])
        })?);
    }

    let x23: Input = ("x", a.clone(), 2, 3);
    for (name, op) in [
        ("sum", ReduceOp::Sum),
        ("mean", ReduceOp::Mean),
        ("prod", ReduceOp::Prod),
        ("min", ReduceOp::Min),
        ("max", ReduceOp::Max),
    ] {
        if op != ReduceOp::Prod {
            out.push(check_graph(name, &[x23.clone()], |t, v| t.reduce(op, v[0]))?);
        }
        out.push(check_graph(&format!("{name} rows"), &[x23.clone()], |t, v| t.reduce_rows(op, v[0]))?);
    }

    let (lo, hi) = (vec![-1.0, -0.5, -3.0], vec![1.0, 3.0, 0.5]);
    out.push(check_graph("clamp", &[x23.clone()], |t, v| t.clamp(v[0], &lo, &hi))?);
    out.push(check_graph("reshape", &[x23.clone()], |t, v| t.reshape(v[0], 3, 2))?);
    out.push(check_graph("slice", &[x23.clone()], |t, v| t.slice(v[0], 1, 2, 2))?);
    out.push(check_graph("row", &[x23.clone()], |t, v| t.row(v[0], 1))?);
    out.push(check_graph("slice cols", &[x23.clone()], |t, v| t.slice_cols(v[0], 1, 3))?);
    out.push(check_graph("concat rows", &[x23.clone(), ("y", b[..3].to_vec(), 1, 3)], |t, v| {
        t.concat_rows(&[v[0], v[1], v[0]])
    })?);
    out.push(check_graph("broadcast rows", &[("r", b[..3].to_vec(), 1, 3)], |t, v| t.broadcast_rows(v[0], 4))?);
    out.push(check_graph("broadcast cols", &[("c", b[..2].to_vec(), 2, 1)], |t, v| t.broadcast_cols(v[0], 3))?);
    out.push(check_graph("softmax", &[x23.clone()], |t, v| t.softmax(v[0]))?);
    out.push(check_graph("softmax rows", &[x23.clone()], |t, v| t.softmax_rows(v[0]))?);
    out.push(check_graph("straight through", &[x23.clone()], |t, v| {
        let soft = t.sigmoid(v[0])?;
        let hard = t.constant(t.value(soft).iter().map(|p| p.round()).collect(), 2, 3)?;
        t.straight_through(hard, soft)
    })?);

    out.push(check_graph("matmul", &[x23.clone(), ("y", b.clone(), 3, 2)], |t, v| t.matmul(v[0], v[1]))?);
    out.push(check_graph("matvec", &[("m", m.clone(), 3, 3), ("z", b[..3].to_vec(), 3, 1)], |t, v| {
        t.matvec(v[0], v[1])
    })?);
    out.push(check_graph("lower triangular matvec", &[("l", m.clone(), 3, 3), ("z", b[..3].to_vec(), 3, 1)], |t, v| {
        t.lower_tri_matvec(v[0], v[1])
    })?);
    out.push(check_graph("lower triangular rows", &[("l", m.clone(), 3, 3), ("z", a.clone(), 2, 3)], |t, v| {
        t.lower_tri_rows(v[0], v[1])
    })?);
    out.push(check_graph("outer", &[("a", a[..3].to_vec(), 3, 1), ("b", b[..2].to_vec(), 2, 1)], |t, v| {
        t.outer(v[0], v[1])
    })?);

    let cfg = RelaxConfig::new(0.7, true)?;
    out.push(check_graph("gumbel sigmoid", &[x23.clone()], |t, v| {
        let n = t.constant(noise23.clone(), 2, 3)?;
        gumbel_sigmoid_with(t, v[0], n, cfg)
    })?);
    out.push(check_graph("gumbel softmax rows", &[x23.clone()], |t, v| {
        let n = t.constant(noise23.clone(), 2, 3)?;
        gumbel_softmax_rows(t, v[0], n, cfg)
    })?);

    let shape = MlpShape { inputs: 3, hidden: 4 };
    let params = draws(&mut rng, shape.param_count(), -1.0, 1.0);
    let feats = shape.with_bias_column(&draws(&mut rng, 15, -1.0, 1.0));
    let target = draws(&mut rng, 5, 0.0, 3.0);
    out.push(check_graph("network mse", &[("w", params, shape.param_count(), 1)], |t, v| {
        let f = t.constant(feats.clone(), 5, shape.inputs + 1)?;
        let y = t.vector(target.clone());
        let pred = mlp_forward(t, shape, v[0], f)?;
        mse_loss(t, pred, y)
    })?);
    Ok(out)
}

/// Advances `alg` by one committed generation with no parameter update, so
/// the checked generation includes a full evolutionary move.
fn warm<A: DiffAlgorithm>(mut alg: A, problem: &Arc<dyn Problem>) -> Result<A> {
    let mut obj = Objective::new(problem.clone());
    alg.generation(&mut obj)?;
    alg.update_state()?;
    Ok(alg)
}

/// One generation of each differentiable optimizer on a 2- or 3-dimensional
/// Ackley instance.
pub fn algorithm_checks() -> Result<Vec<Check>> {
    let ackley = |d: usize| -> Result<Arc<dyn Problem>> { Ok(Arc::new(Benchmark::with_bound(BenchmarkKind::Ackley, d, 5.0)?)) };
    let mut out = Vec::new();

    let p2 = ackley(2)?;
    let pso = DiffPso::new(
        DiffPsoConfig {
            pso: PsoConfig { pop: 2, ..Default::default() },
            ..Default::default()
        },
        p2.domain().clone(),
        Rng::seed_from(3),
    )?;
    out.push(check_generation("pso generation", &warm(pso, &p2)?, &p2)?);

    let ga = DiffGa::new(
        DiffGaConfig {
            ga: GaConfig { pop: 3, ..Default::default() },
            ..Default::default()
        },
        p2.domain().clone(),
        Rng::seed_from(4),
    )?;
    out.push(check_generation("ga generation", &warm(ga, &p2)?, &p2)?);

    let de = DiffDe::new(
        DiffDeConfig {
            de: DeConfig { pop: 4, ..Default::default() },
            ..Default::default()
        },
        p2.domain().clone(),
        Rng::seed_from(5),
    )?;
    out.push(check_generation("de generation", &warm(de, &p2)?, &p2)?);

    let p3 = ackley(3)?;
    let es = DiffCmaEs::new(
        DiffCmaesConfig {
            cmaes: CmaesConfig { pop: 4, ..Default::default() },
            ..Default::default()
        },
        p3.domain().clone(),
        Rng::seed_from(6),
    )?;
    out.push(check_generation("cmaes generation", &warm(es, &p3)?, &p3)?);
    Ok(out)
}

/// The whole suite: ops first, then full generations.
pub fn suite() -> Result<Vec<Check>> {
    let mut checks = op_checks()?;
    checks.extend(algorithm_checks()?);
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(rel_err(0.0, 0.0), 0.0);
        assert_eq!(rel_err(1e-9, 0.0), 1e-5);
        assert!((rel_err(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        // floor() has zero derivative on the tape but the finite difference
        // across an integer is huge.
        let c = check_graph("kink", &[("x", vec![1.0], 1, 1)], |t, v| {
            let shifted = t.shift(v[0], 0.0)?;
            let floor = t.constant(vec![t.value(shifted)[0].floor()], 1, 1)?;
            t.straight_through(floor, shifted)
        })
        .unwrap();
        assert!(c.passed(), "surrogate forward makes this smooth: {c:?}");
        let d = check_graph("detached", &[("x", vec![0.3], 1, 1)], |t, v| {
            let sq = t.square(v[0])?;
            t.detach(sq)
        })
        .unwrap();
        assert!(!d.passed());
        assert_eq!(d.worst, "x[0]");
    }

    #[test]
    fn ops_pass() {
        for c in op_checks().unwrap() {
            assert!(c.passed(), "{c:?}");
        }
    }

    #[test]
    fn generations_pass() {
        for c in algorithm_checks().unwrap() {
            assert!(c.passed(), "{c:?}");
            assert!(c.entries > 0);
        }
    }
}
