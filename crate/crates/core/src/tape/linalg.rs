use super::{slot, Node, Op, Result, Tape, TapeError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinalgOp {
    /// `(m, k) x (k, n) -> (m, n)`; also used for matrix-vector products.
    MatMul,
    /// `L z` with `L` square and read as lower triangular.
    LowerTriMatVec,
    /// Rows of `Z` mapped through the lower triangle of `L`: row `r` of the
    /// output is `L z_r`.
    LowerTriRows,
    /// `a b^T` for two vectors.
    Outer,
}

impl Tape {
    pub fn linalg(&mut self, op: LinalgOp, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let mismatch = || TapeError::ShapeMismatch {
            op: match op {
                LinalgOp::MatMul => "matmul",
                LinalgOp::LowerTriMatVec => "lower_tri_matvec",
                LinalgOp::LowerTriRows => "lower_tri_rows",
                LinalgOp::Outer => "outer",
            },
            left: a.shape(),
            right: b.shape(),
        };
        let x = &self.node(a).value;
        let y = &self.node(b).value;
        let (rows, cols, out) = match op {
            LinalgOp::MatMul => {
                if a.cols != b.rows {
                    return Err(mismatch());
                }
                let (m, k, n) = (a.rows, a.cols, b.cols);
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    let orow = &mut out[i * n..(i + 1) * n];
                    for p in 0..k {
                        let s = x[i * k + p];
                        if s == 0.0 {
                            continue;
                        }
                        let brow = &y[p * n..(p + 1) * n];
                        orow.iter_mut().zip(brow).for_each(|(o, v)| *o += s * v);
                    }
                }
                (m, n, out)
            }
            LinalgOp::LowerTriMatVec => {
                if a.rows != a.cols || b.shape() != (a.rows, 1) {
                    return Err(mismatch());
                }
                let n = a.rows;
                let out = (0..n)
                    .map(|i| dot(&x[i * n..i * n + i + 1], &y[..i + 1]))
                    .collect();
                (n, 1, out)
            }
            LinalgOp::LowerTriRows => {
                if a.rows != a.cols || b.cols != a.rows {
                    return Err(mismatch());
                }
                let n = a.rows;
                let mut out = vec![0.0; b.rows * n];
                for (orow, zrow) in out.chunks_mut(n).zip(y.chunks(n)) {
                    for i in 0..n {
                        orow[i] = dot(&x[i * n..i * n + i + 1], &zrow[..i + 1]);
                    }
                }
                (b.rows, n, out)
            }
            LinalgOp::Outer => {
                if a.cols != 1 || b.cols != 1 {
                    return Err(mismatch());
                }
                let mut out = Vec::with_capacity(a.rows * b.rows);
                for &u in x {
                    out.extend(y.iter().map(|v| u * v));
                }
                (a.rows, b.rows, out)
            }
        };
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            Op::Linalg {
                op,
                a: a.id,
                b: b.id,
            },
            rows,
            cols,
            out,
            needs,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.linalg(LinalgOp::MatMul, a, b)
    }

    /// Matrix times column vector.
    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var> {
        if x.cols != 1 {
            return Err(TapeError::ShapeMismatch {
                op: "matvec",
                left: a.shape(),
                right: x.shape(),
            });
        }
        self.linalg(LinalgOp::MatMul, a, x)
    }

    pub fn lower_tri_matvec(&mut self, l: Var, z: Var) -> Result<Var> {
        self.linalg(LinalgOp::LowerTriMatVec, l, z)
    }

    pub fn lower_tri_rows(&mut self, l: Var, z: Var) -> Result<Var> {
        self.linalg(LinalgOp::LowerTriRows, l, z)
    }

    pub fn outer(&mut self, a: Var, b: Var) -> Result<Var> {
        self.linalg(LinalgOp::Outer, a, b)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

pub(super) fn linalg_backward(
    nodes: &[Node],
    op: LinalgOp,
    a: usize,
    b: usize,
    g: &[f64],
    pass: &mut [Option<Vec<f64>>],
) {
    let (na, nb) = (&nodes[a], &nodes[b]);
    let x = &na.value;
    let y = &nb.value;
    match op {
        LinalgOp::MatMul => {
            let (m, k, n) = (na.rows, na.cols, nb.cols);
            if na.needs_grad {
                // dA = G B^T
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        da[i * k + p] = dot(grow, &y[p * n..(p + 1) * n]);
                    }
                }
                super::add_into(nodes, pass, a, 0, &da);
            }
            if nb.needs_grad {
                // dB = A^T G
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let s = x[i * k + p];
                        if s != 0.0 {
                            axpy(s, grow, &mut db[p * n..(p + 1) * n]);
                        }
                    }
                }
                super::add_into(nodes, pass, b, 0, &db);
            }
        }
        LinalgOp::LowerTriMatVec => {
            let n = na.rows;
            if let Some(dl) = slot(nodes, pass, a) {
                for i in 0..n {
                    axpy(g[i], &y[..i + 1], &mut dl[i * n..i * n + i + 1]);
                }
            }
            if let Some(dz) = slot(nodes, pass, b) {
                for i in 0..n {
                    axpy(g[i], &x[i * n..i * n + i + 1], &mut dz[..i + 1]);
                }
            }
        }
        LinalgOp::LowerTriRows => {
            let n = na.rows;
            if let Some(dl) = slot(nodes, pass, a) {
                for (grow, zrow) in g.chunks(n).zip(y.chunks(n)) {
                    for i in 0..n {
                        if grow[i] != 0.0 {
                            axpy(grow[i], &zrow[..i + 1], &mut dl[i * n..i * n + i + 1]);
                        }
                    }
                }
            }
            if let Some(dz) = slot(nodes, pass, b) {
                for (grow, dzrow) in g.chunks(n).zip(dz.chunks_mut(n)) {
                    for i in 0..n {
                        if grow[i] != 0.0 {
                            axpy(grow[i], &x[i * n..i * n + i + 1], &mut dzrow[..i + 1]);
                        }
                    }
                }
            }
        }
        LinalgOp::Outer => {
            let (m, n) = (na.rows, nb.rows);
            if let Some(da) = slot(nodes, pass, a) {
                for i in 0..m {
                    da[i] += dot(&g[i * n..(i + 1) * n], y);
                }
            }
            if let Some(db) = slot(nodes, pass, b) {
                for i in 0..m {
                    axpy(x[i], &g[i * n..(i + 1) * n], db);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        v
    }

    #[test]
    fn lower_tri_identity_is_noop() {
        let mut tape = Tape::new();
        let l = tape.constant(identity(3), 3, 3).unwrap();
        let z = tape.vector(vec![0.3, -1.2, 2.0]);
        let y = tape.lower_tri_matvec(l, z).unwrap();
        assert_eq!(tape.value(y), &[0.3, -1.2, 2.0]);
    }

    #[test]
    fn outer_of_basis_vectors() {
        let mut tape = Tape::new();
        let e1 = tape.vector(vec![1.0, 0.0, 0.0]);
        let e2 = tape.vector(vec![0.0, 1.0, 0.0]);
        let o = tape.outer(e1, e2).unwrap();
        let mut expect = vec![0.0; 9];
        expect[1] = 1.0;
        assert_eq!(tape.value(o), expect.as_slice());
    }

    #[test]
    fn upper_triangle_is_ignored_and_gets_no_gradient() {
        let mut tape = Tape::new();
        let l = tape
            .param("l", vec![1.0, 99.0, 2.0, 3.0], 2, 2)
            .unwrap();
        let z = tape.vector(vec![1.0, 1.0]);
        let y = tape.lower_tri_matvec(l, z).unwrap();
        assert_eq!(tape.value(y), &[1.0, 5.0]);
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(l).unwrap(), &[1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn lower_tri_rows_matches_per_row_matvec() {
        let mut tape = Tape::new();
        let l = tape
            .constant(vec![2.0, 0.0, 0.0, 1.0, 3.0, 0.0, -1.0, 0.5, 1.5], 3, 3)
            .unwrap();
        let zs = [[1.0, 2.0, 3.0], [-1.0, 0.0, 4.0]];
        let z = tape.constant(zs.concat(), 2, 3).unwrap();
        let rows = tape.lower_tri_rows(l, z).unwrap();
        let out = tape.value(rows).to_vec();
        for (r, zr) in zs.iter().enumerate() {
            let zv = tape.vector(zr.to_vec());
            let y = tape.lower_tri_matvec(l, zv).unwrap();
            assert_eq!(&out[r * 3..r * 3 + 3], tape.value(y));
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![1.0; 6], 2, 3).unwrap();
        let b = tape.constant(vec![1.0; 4], 2, 2).unwrap();
        assert!(tape.matmul(a, b).is_err());
        assert!(tape.lower_tri_matvec(a, b).is_err());
        let v = tape.vector(vec![1.0, 2.0]);
        assert!(tape.matvec(a, v).is_err());
    }
}
