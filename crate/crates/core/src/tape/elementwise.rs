use super::{sigmoid, slot, softplus, Node, Op, Result, Tape, TapeError, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Tanh,
    Sigmoid,
    Abs,
    Softplus,
    /// `x^n` for a constant integer exponent.
    Powi(i32),
    /// `x^p` for a constant real exponent.
    Powf(f64),
    /// `scale * x + shift` with constant coefficients.
    Affine { scale: f64, shift: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
}

impl BinaryOp {
    fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Pow => "pow",
            BinaryOp::Min => "min",
            BinaryOp::Max => "max",
        }
    }
}

impl Tape {
    pub fn unary(&mut self, op: UnaryOp, a: Var) -> Result<Var> {
        self.check(a)?;
        let x = &self.node(a).value;
        let mut out = Vec::with_capacity(x.len());
        for (i, &v) in x.iter().enumerate() {
            let y = match op {
                UnaryOp::Neg => -v,
                UnaryOp::Exp => v.exp(),
                UnaryOp::Log => {
                    if v < 0.0 {
                        return Err(TapeError::Domain {
                            op: "log",
                            index: i,
                            value: v,
                        });
                    }
                    v.ln()
                }
                UnaryOp::Sqrt => {
                    if v < 0.0 {
                        return Err(TapeError::Domain {
                            op: "sqrt",
                            index: i,
                            value: v,
                        });
                    }
                    v.sqrt()
                }
                UnaryOp::Sin => v.sin(),
                UnaryOp::Cos => v.cos(),
                UnaryOp::Tanh => v.tanh(),
                UnaryOp::Sigmoid => sigmoid(v),
                UnaryOp::Abs => v.abs(),
                UnaryOp::Softplus => softplus(v),
                UnaryOp::Powi(n) => v.powi(n),
                UnaryOp::Powf(p) => {
                    if v < 0.0 && p.fract() != 0.0 {
                        return Err(TapeError::Domain {
                            op: "powf",
                            index: i,
                            value: v,
                        });
                    }
                    v.powf(p)
                }
                UnaryOp::Affine { scale, shift } => scale * v + shift,
            };
            out.push(y);
        }
        let needs = self.needs(a);
        Ok(self.push(Op::Unary { op, a: a.id }, a.rows, a.cols, out, needs))
    }

    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (rows, cols) = if a.shape() == b.shape() || b.is_scalar() {
            a.shape()
        } else if a.is_scalar() {
            b.shape()
        } else {
            return Err(TapeError::ShapeMismatch {
                op: op.name(),
                left: a.shape(),
                right: b.shape(),
            });
        };
        let xa = &self.node(a).value;
        let xb = &self.node(b).value;
        let n = rows * cols;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let x = if xa.len() == 1 { xa[0] } else { xa[i] };
            let y = if xb.len() == 1 { xb[0] } else { xb[i] };
            let z = match op {
                BinaryOp::Add => x + y,
                BinaryOp::Sub => x - y,
                BinaryOp::Mul => x * y,
                BinaryOp::Div => {
                    if y == 0.0 {
                        return Err(TapeError::DivisionByZero { index: i });
                    }
                    x / y
                }
                BinaryOp::Pow => {
                    if x < 0.0 && y.fract() != 0.0 {
                        return Err(TapeError::Domain {
                            op: "pow",
                            index: i,
                            value: x,
                        });
                    }
                    x.powf(y)
                }
                BinaryOp::Min => {
                    if x <= y {
                        x
                    } else {
                        y
                    }
                }
                BinaryOp::Max => {
                    if x >= y {
                        x
                    } else {
                        y
                    }
                }
            };
            out.push(z);
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            Op::Binary {
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

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Div, a, b)
    }

    pub fn pow(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Pow, a, b)
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Min, a, b)
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Max, a, b)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Neg, a)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Log, a)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Sqrt, a)
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Sin, a)
    }

    pub fn cos(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Cos, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Sigmoid, a)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Abs, a)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Powi(2), a)
    }

    pub fn powi(&mut self, a: Var, n: i32) -> Result<Var> {
        self.unary(UnaryOp::Powi(n), a)
    }

    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        self.unary(UnaryOp::Affine { scale, shift }, a)
    }

    pub fn scale(&mut self, a: Var, scale: f64) -> Result<Var> {
        self.affine(a, scale, 0.0)
    }

    pub fn shift(&mut self, a: Var, shift: f64) -> Result<Var> {
        self.affine(a, 1.0, shift)
    }
}

pub(super) fn unary_backward(
    nodes: &[Node],
    node: &Node,
    op: UnaryOp,
    a: usize,
    g: &[f64],
    pass: &mut [Option<Vec<f64>>],
) {
    let x = &nodes[a].value;
    let y = &node.value;
    let Some(dst) = slot(nodes, pass, a) else {
        return;
    };
    for i in 0..g.len() {
        let d = match op {
            UnaryOp::Neg => -1.0,
            UnaryOp::Exp => y[i],
            UnaryOp::Log => 1.0 / x[i],
            // subgradient 0 at the kink of sqrt
            UnaryOp::Sqrt => {
                if y[i] > 0.0 {
                    0.5 / y[i]
                } else {
                    0.0
                }
            }
            UnaryOp::Sin => x[i].cos(),
            UnaryOp::Cos => -x[i].sin(),
            UnaryOp::Tanh => 1.0 - y[i] * y[i],
            UnaryOp::Sigmoid => y[i] * (1.0 - y[i]),
            UnaryOp::Abs => {
                if x[i] > 0.0 {
                    1.0
                } else if x[i] < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            UnaryOp::Softplus => sigmoid(x[i]),
            UnaryOp::Powi(n) => {
                if n == 0 {
                    0.0
                } else {
                    n as f64 * x[i].powi(n - 1)
                }
            }
            UnaryOp::Powf(p) => {
                if p == 0.0 {
                    0.0
                } else {
                    p * x[i].powf(p - 1.0)
                }
            }
            UnaryOp::Affine { scale, .. } => scale,
        };
        dst[i] += g[i] * d;
    }
}

pub(super) fn binary_backward(
    nodes: &[Node],
    op: BinaryOp,
    a: usize,
    b: usize,
    g: &[f64],
    pass: &mut [Option<Vec<f64>>],
) {
    let xa = &nodes[a].value;
    let xb = &nodes[b].value;
    let n = g.len();
    let at = |v: &Vec<f64>, i: usize| if v.len() == 1 { v[0] } else { v[i] };
    let mut da = nodes[a].needs_grad.then(|| vec![0.0; xa.len()]);
    let mut db = nodes[b].needs_grad.then(|| vec![0.0; xb.len()]);
    for i in 0..n {
        let x = at(xa, i);
        let y = at(xb, i);
        let (pa, pb) = match op {
            BinaryOp::Add => (1.0, 1.0),
            BinaryOp::Sub => (1.0, -1.0),
            BinaryOp::Mul => (y, x),
            BinaryOp::Div => (1.0 / y, -x / (y * y)),
            BinaryOp::Pow => {
                let pa = if y == 0.0 { 0.0 } else { y * x.powf(y - 1.0) };
                let pb = if x > 0.0 { x.powf(y) * x.ln() } else { 0.0 };
                (pa, pb)
            }
            BinaryOp::Min => {
                if x <= y {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
            BinaryOp::Max => {
                if x >= y {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
        };
        if let Some(d) = da.as_mut() {
            let k = if d.len() == 1 { 0 } else { i };
            d[k] += g[i] * pa;
        }
        if let Some(d) = db.as_mut() {
            let k = if d.len() == 1 { 0 } else { i };
            d[k] += g[i] * pb;
        }
    }
    if let Some(d) = da {
        super::add_into(nodes, pass, a, 0, &d);
    }
    if let Some(d) = db {
        super::add_into(nodes, pass, b, 0, &d);
    }
}
