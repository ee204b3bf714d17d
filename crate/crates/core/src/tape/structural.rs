use super::{slot, Node, Op, Result, Tape, TapeError, Var};

impl Tape {
    /// Hard clamp. `lo`/`hi` are either elementwise (one bound per element)
    /// or per column of a matrix (one bound per column, repeated on every
    /// row). Gradient passes only where `lo < x < hi`.
    pub fn clamp(&mut self, a: Var, lo: &[f64], hi: &[f64]) -> Result<Var> {
        self.check(a)?;
        if lo.len() != hi.len() || (lo.len() != a.len() && lo.len() != a.cols) {
            return Err(TapeError::ShapeMismatch {
                op: "clamp",
                left: a.shape(),
                right: (lo.len(), 1),
            });
        }
        if let Some(j) = lo.iter().zip(hi).position(|(l, h)| l > h) {
            return Err(TapeError::InvalidArgument(format!(
                "clamp: lower bound exceeds upper bound at {j}"
            )));
        }
        let per_col = lo.len() != a.len();
        let x = &self.node(a).value;
        let mut out = Vec::with_capacity(x.len());
        let mut pass = Vec::with_capacity(x.len());
        for (i, &v) in x.iter().enumerate() {
            let j = if per_col { i % a.cols } else { i };
            let (l, h) = (lo[j], hi[j]);
            if v <= l {
                out.push(l);
                pass.push(false);
            } else if v >= h {
                out.push(h);
                pass.push(false);
            } else {
                out.push(v);
                pass.push(true);
            }
        }
        let needs = self.needs(a);
        Ok(self.push(Op::Clamp { a: a.id, pass }, a.rows, a.cols, out, needs))
    }

    /// Same values, no gradient path to any ancestor.
    pub fn detach(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let v = self.node(a).value.clone();
        Ok(self.push(Op::Constant, a.rows, a.cols, v, false))
    }

    /// Forward takes `hard`, backward flows into `soft` as if the node were
    /// `soft` itself.
    pub fn straight_through(&mut self, hard: Var, soft: Var) -> Result<Var> {
        self.check(hard)?;
        self.check(soft)?;
        if hard.shape() != soft.shape() {
            return Err(TapeError::ShapeMismatch {
                op: "straight_through",
                left: hard.shape(),
                right: soft.shape(),
            });
        }
        let src = if self.surrogate_forward() { soft } else { hard };
        let v = self.node(src).value.clone();
        let needs = self.needs(soft);
        Ok(self.push(
            Op::StraightThrough { soft: soft.id },
            soft.rows,
            soft.cols,
            v,
            needs,
        ))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        self.check(a)?;
        if rows * cols != a.len() {
            return Err(TapeError::ShapeMismatch {
                op: "reshape",
                left: a.shape(),
                right: (rows, cols),
            });
        }
        let v = self.node(a).value.clone();
        let needs = self.needs(a);
        Ok(self.push(Op::Reshape { a: a.id }, rows, cols, v, needs))
    }

    /// Contiguous flat range `start..start + rows*cols`, shaped `(rows, cols)`.
    pub fn slice(&mut self, a: Var, start: usize, rows: usize, cols: usize) -> Result<Var> {
        self.check(a)?;
        let end = start + rows * cols;
        if end > a.len() {
            return Err(TapeError::ShapeMismatch {
                op: "slice",
                left: a.shape(),
                right: (start, end),
            });
        }
        let v = self.node(a).value[start..end].to_vec();
        let needs = self.needs(a);
        Ok(self.push(Op::Slice { a: a.id, start }, rows, cols, v, needs))
    }

    /// Row `i` of a matrix as a `(1, cols)` node.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        if i >= a.rows {
            return Err(TapeError::InvalidArgument(format!(
                "row {i} out of range for {} rows",
                a.rows
            )));
        }
        self.slice(a, i * a.cols, 1, a.cols)
    }

    /// Columns `start..end` of every row.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        self.check(a)?;
        if start > end || end > a.cols {
            return Err(TapeError::ShapeMismatch {
                op: "slice_cols",
                left: a.shape(),
                right: (start, end),
            });
        }
        let w = end - start;
        let x = &self.node(a).value;
        let mut v = Vec::with_capacity(a.rows * w);
        for row in x.chunks(a.cols) {
            v.extend_from_slice(&row[start..end]);
        }
        let needs = self.needs(a);
        Ok(self.push(Op::SliceCols { a: a.id, start }, a.rows, w, v, needs))
    }

    /// Stacks nodes with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(TapeError::Empty { op: "concat_rows" });
        };
        let cols = first.cols;
        let mut v = Vec::new();
        let mut rows = 0;
        let mut needs = false;
        for &p in parts {
            self.check(p)?;
            if p.cols != cols {
                return Err(TapeError::ShapeMismatch {
                    op: "concat_rows",
                    left: first.shape(),
                    right: p.shape(),
                });
            }
            v.extend_from_slice(&self.node(p).value);
            rows += p.rows;
            needs |= self.needs(p);
        }
        let ids = parts.iter().map(|p| p.id).collect();
        Ok(self.push(Op::ConcatRows { parts: ids }, rows, cols, v, needs))
    }

    /// Repeats a vector (either orientation) as every row of an `(n, len)`
    /// matrix.
    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        self.check(a)?;
        if a.rows != 1 && a.cols != 1 {
            return Err(TapeError::InvalidArgument(
                "broadcast_rows expects a vector".into(),
            ));
        }
        let x = &self.node(a).value;
        let m = x.len();
        let mut v = Vec::with_capacity(n * m);
        for _ in 0..n {
            v.extend_from_slice(x);
        }
        let needs = self.needs(a);
        Ok(self.push(Op::BroadcastRows { a: a.id }, n, m, v, needs))
    }

    /// Repeats entry `i` of a vector across row `i` of an `(len, m)` matrix.
    pub fn broadcast_cols(&mut self, a: Var, m: usize) -> Result<Var> {
        self.check(a)?;
        if a.rows != 1 && a.cols != 1 {
            return Err(TapeError::InvalidArgument(
                "broadcast_cols expects a vector".into(),
            ));
        }
        let x = &self.node(a).value;
        let n = x.len();
        let mut v = Vec::with_capacity(n * m);
        for &xi in x {
            v.extend(std::iter::repeat(xi).take(m));
        }
        let needs = self.needs(a);
        Ok(self.push(Op::BroadcastCols { a: a.id }, n, m, v, needs))
    }

    /// Softmax over all elements.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.softmax_impl(a, false)
    }

    /// Softmax applied independently to each row.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.softmax_impl(a, true)
    }

    fn softmax_impl(&mut self, a: Var, by_rows: bool) -> Result<Var> {
        self.check(a)?;
        if a.is_empty() {
            return Err(TapeError::Empty { op: "softmax" });
        }
        let width = if by_rows { a.cols } else { a.len() };
        let x = &self.node(a).value;
        let mut v = Vec::with_capacity(x.len());
        for row in x.chunks(width) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                return Err(TapeError::InvalidArgument(
                    "softmax: every logit in a row is -inf".into(),
                ));
            }
            let start = v.len();
            v.extend(row.iter().map(|&t| (t - m).exp()));
            let s: f64 = v[start..].iter().sum();
            v[start..].iter_mut().for_each(|e| *e /= s);
        }
        let needs = self.needs(a);
        Ok(self.push(
            Op::Softmax { a: a.id, by_rows },
            a.rows,
            a.cols,
            v,
            needs,
        ))
    }
}

pub(super) fn slice_cols_backward(
    nodes: &[Node],
    node: &Node,
    a: usize,
    start: usize,
    g: &[f64],
    pass: &mut [Option<Vec<f64>>],
) {
    let cols = nodes[a].cols;
    let w = node.cols;
    if let Some(dst) = slot(nodes, pass, a) {
        for (drow, grow) in dst.chunks_mut(cols).zip(g.chunks(w)) {
            drow[start..start + w]
                .iter_mut()
                .zip(grow)
                .for_each(|(d, x)| *d += x);
        }
    }
}

pub(super) fn softmax_backward(
    nodes: &[Node],
    node: &Node,
    a: usize,
    by_rows: bool,
    g: &[f64],
    pass: &mut [Option<Vec<f64>>],
) {
    let width = if by_rows { node.cols } else { node.value.len() };
    let s = &node.value;
    if let Some(dst) = slot(nodes, pass, a) {
        for ((drow, srow), grow) in dst
            .chunks_mut(width)
            .zip(s.chunks(width))
            .zip(g.chunks(width))
        {
            let inner: f64 = srow.iter().zip(grow).map(|(p, q)| p * q).sum();
            for j in 0..width {
                drow[j] += srow[j] * (grow[j] - inner);
            }
        }
    }
}
