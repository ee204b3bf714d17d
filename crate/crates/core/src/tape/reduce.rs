use super::{slot, Node, Op, Result, Tape, TapeError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    /// Product; only available row-wise.
    Prod,
    /// Minimum; the winning (lowest on ties) index receives the gradient.
    Min,
    /// Maximum; the winning (lowest on ties) index receives the gradient.
    Max,
}

fn arg_extreme(values: &[f64], want_min: bool) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        let better = if want_min {
            v < values[best]
        } else {
            v > values[best]
        };
        if better {
            best = i;
        }
    }
    best
}

impl Tape {
    /// Reduces all elements to a scalar.
    pub fn reduce(&mut self, op: ReduceOp, a: Var) -> Result<Var> {
        self.check(a)?;
        if a.is_empty() {
            return Err(TapeError::Empty { op: "reduce" });
        }
        let x = &self.node(a).value;
        let (value, index) = match op {
            ReduceOp::Sum => (x.iter().sum(), 0),
            ReduceOp::Mean => (x.iter().sum::<f64>() / x.len() as f64, 0),
            ReduceOp::Min => {
                let i = arg_extreme(x, true);
                (x[i], i)
            }
            ReduceOp::Max => {
                let i = arg_extreme(x, false);
                (x[i], i)
            }
            ReduceOp::Prod => {
                return Err(TapeError::InvalidArgument(
                    "full product reduction is not supported".into(),
                ))
            }
        };
        let needs = self.needs(a);
        Ok(self.push(
            Op::Reduce {
                op,
                a: a.id,
                index,
            },
            1,
            1,
            vec![value],
            needs,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.reduce(ReduceOp::Sum, a)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.reduce(ReduceOp::Mean, a)
    }

    /// Minimum over all elements together with the flat index of the winner.
    pub fn min_with_index(&mut self, a: Var) -> Result<(Var, usize)> {
        let v = self.reduce(ReduceOp::Min, a)?;
        Ok((v, self.winner(v).unwrap_or(0)))
    }

    pub fn max_with_index(&mut self, a: Var) -> Result<(Var, usize)> {
        let v = self.reduce(ReduceOp::Max, a)?;
        Ok((v, self.winner(v).unwrap_or(0)))
    }

    /// Index recorded by a min/max reduction node.
    pub fn winner(&self, v: Var) -> Option<usize> {
        match &self.node(v).op {
            Op::Reduce {
                op: ReduceOp::Min | ReduceOp::Max,
                index,
                ..
            } => Some(*index),
            _ => None,
        }
    }

    /// Row-wise reduction: `(rows, cols)` to `(rows, 1)`.
    pub fn reduce_rows(&mut self, op: ReduceOp, a: Var) -> Result<Var> {
        self.check(a)?;
        if a.is_empty() {
            return Err(TapeError::Empty { op: "reduce_rows" });
        }
        let x = &self.node(a).value;
        let mut out = Vec::with_capacity(a.rows);
        let mut indices = Vec::new();
        for row in x.chunks(a.cols) {
            let v = match op {
                ReduceOp::Sum => row.iter().sum(),
                ReduceOp::Mean => row.iter().sum::<f64>() / row.len() as f64,
                ReduceOp::Prod => row.iter().product(),
                ReduceOp::Min | ReduceOp::Max => {
                    let i = arg_extreme(row, op == ReduceOp::Min);
                    indices.push(i);
                    row[i]
                }
            };
            out.push(v);
        }
        let needs = self.needs(a);
        Ok(self.push(
            Op::ReduceRows {
                op,
                a: a.id,
                indices,
            },
            a.rows,
            1,
            out,
            needs,
        ))
    }

    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        self.reduce_rows(ReduceOp::Sum, a)
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        self.reduce_rows(ReduceOp::Mean, a)
    }

    pub fn prod_rows(&mut self, a: Var) -> Result<Var> {
        self.reduce_rows(ReduceOp::Prod, a)
    }
}

pub(super) fn reduce_backward(
    nodes: &[Node],
    op: ReduceOp,
    a: usize,
    index: usize,
    g: &[f64],
    pass: &mut [Option<Vec<f64>>],
) {
    let Some(dst) = slot(nodes, pass, a) else {
        return;
    };
    let g = g[0];
    match op {
        ReduceOp::Sum => dst.iter_mut().for_each(|d| *d += g),
        ReduceOp::Mean => {
            let s = g / dst.len() as f64;
            dst.iter_mut().for_each(|d| *d += s);
        }
        ReduceOp::Min | ReduceOp::Max => dst[index] += g,
        ReduceOp::Prod => unreachable!("full product reduction is never recorded"),
    }
}

pub(super) fn reduce_rows_backward(
    nodes: &[Node],
    _node: &Node,
    op: ReduceOp,
    a: usize,
    indices: &[usize],
    g: &[f64],
    pass: &mut [Option<Vec<f64>>],
) {
    let cols = nodes[a].cols;
    let x = &nodes[a].value;
    let Some(dst) = slot(nodes, pass, a) else {
        return;
    };
    for (r, (drow, xrow)) in dst.chunks_mut(cols).zip(x.chunks(cols)).enumerate() {
        let gr = g[r];
        match op {
            ReduceOp::Sum => drow.iter_mut().for_each(|d| *d += gr),
            ReduceOp::Mean => {
                let s = gr / cols as f64;
                drow.iter_mut().for_each(|d| *d += s);
            }
            ReduceOp::Min | ReduceOp::Max => drow[indices[r]] += gr,
            ReduceOp::Prod => {
                // prefix/suffix products keep zeros exact
                let mut prefix = 1.0;
                let mut left = vec![1.0; cols];
                for j in 0..cols {
                    left[j] = prefix;
                    prefix *= xrow[j];
                }
                let mut suffix = 1.0;
                for j in (0..cols).rev() {
                    drow[j] += gr * left[j] * suffix;
                    suffix *= xrow[j];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relax::Rng;

    #[test]
    fn min_with_index_picks_lowest() {
        let mut tape = Tape::new();
        let v = tape.vector(vec![3.0, 1.0, 2.0]);
        let (m, i) = tape.min_with_index(v).unwrap();
        assert_eq!(tape.scalar_value(m), 1.0);
        assert_eq!(i, 1);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let mut tape = Tape::new();
        let v = tape.vector(vec![2.0, 1.0, 1.0, 5.0, 5.0]);
        assert_eq!(tape.min_with_index(v).unwrap().1, 1);
        assert_eq!(tape.max_with_index(v).unwrap().1, 3);
    }

    #[test]
    fn min_routes_entire_gradient_to_one_element() {
        let mut tape = Tape::new();
        let x = tape.param("x", vec![4.0, -1.0, 7.0, -1.0], 4, 1).unwrap();
        let (m, _) = tape.min_with_index(x).unwrap();
        let y = tape.scale(m, 2.5).unwrap();
        tape.backward(y).unwrap();
        let g = tape.grad(x).unwrap();
        assert_eq!(g, &[0.0, 2.5, 0.0, 0.0]);
        assert_eq!(g.iter().sum::<f64>(), 2.5);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.param("x", vec![0.5; 6], 2, 3).unwrap();
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn empty_reduction_rejected() {
        let mut tape = Tape::new();
        let e = tape.vector(vec![]);
        assert_eq!(tape.sum(e), Err(TapeError::Empty { op: "reduce" }));
    }

    #[test]
    fn mean_of_standard_normals_is_near_zero() {
        let mut rng = Rng::seed_from(2024);
        let mut tape = Tape::new();
        let v = tape.vector(rng.normal_vec(100));
        let m = tape.mean(v).unwrap();
        assert!(tape.scalar_value(m).abs() < 3.0 / 10.0);
    }

    #[test]
    fn row_product_gradient_with_zero_entry() {
        let mut tape = Tape::new();
        let x = tape.param("x", vec![2.0, 0.0, 3.0], 1, 3).unwrap();
        let p = tape.prod_rows(x).unwrap();
        let s = tape.sum(p).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 6.0, 0.0]);
    }
}
