use crate::tape::{self, Tape, TapeError, Var};

/// Parameter count of the 11-128-1 regression network.
pub const MLP_PARAMS: usize = 11 * 128 + 128 + 128 + 1;

/// One hidden tanh layer and a linear scalar output. The flat parameter
/// vector is `W1` (`inputs x hidden`, row-major), `b1`, `W2` (`hidden x 1`),
/// `b2`. Because `b1` directly follows `W1`, the first
/// `(inputs + 1) * hidden` entries form the matrix `[W1; b1]`, which is
/// applied to features with a trailing column of ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub inputs: usize,
    pub hidden: usize,
}

impl Default for MlpShape {
    fn default() -> Self {
        MlpShape {
            inputs: 11,
            hidden: 128,
        }
    }
}

impl MlpShape {
    pub fn param_count(&self) -> usize {
        self.inputs * self.hidden + 2 * self.hidden + 1
    }

    /// Row-major features with a column of ones appended.
    pub fn with_bias_column(&self, features: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(features.len() / self.inputs * (self.inputs + 1));
        for row in features.chunks(self.inputs) {
            out.extend_from_slice(row);
            out.push(1.0);
        }
        out
    }

    /// Plain prediction for one sample.
    pub fn predict(&self, params: &[f64], x: &[f64]) -> f64 {
        let h = self.hidden;
        let w1b = &params[..(self.inputs + 1) * h];
        let w2 = &params[(self.inputs + 1) * h..(self.inputs + 2) * h];
        let b2 = params[(self.inputs + 2) * h];
        let mut pre = w1b[self.inputs * h..].to_vec();
        for (j, &xj) in x.iter().enumerate() {
            pre.iter_mut()
                .zip(&w1b[j * h..(j + 1) * h])
                .for_each(|(p, w)| *p += xj * w);
        }
        pre.iter().zip(w2).map(|(p, w)| p.tanh() * w).sum::<f64>() + b2
    }
}

/// Predictions `(n, 1)` for `features` given as an `(n, inputs + 1)` node
/// whose last column is all ones. `params` may have any shape with the right
/// number of entries.
pub fn mlp_forward(tape: &mut Tape, shape: MlpShape, params: Var, features: Var) -> tape::Result<Var> {
    if params.len() != shape.param_count() {
        return Err(TapeError::InvalidArgument(format!(
            "network expects {} parameters, got {}",
            shape.param_count(),
            params.len()
        )));
    }
    if features.cols() != shape.inputs + 1 {
        return Err(TapeError::ShapeMismatch {
            op: "mlp_forward",
            left: features.shape(),
            right: (features.rows(), shape.inputs + 1),
        });
    }
    let h = shape.hidden;
    let w1b = tape.slice(params, 0, shape.inputs + 1, h)?;
    let w2 = tape.slice(params, (shape.inputs + 1) * h, h, 1)?;
    let b2 = tape.slice(params, (shape.inputs + 2) * h, 1, 1)?;
    let pre = tape.matmul(features, w1b)?;
    let hidden = tape.tanh(pre)?;
    let out = tape.matmul(hidden, w2)?;
    tape.add(out, b2)
}

/// Mean of squared residuals.
pub fn mse_loss(tape: &mut Tape, pred: Var, target: Var) -> tape::Result<Var> {
    if pred.len() != target.len() {
        return Err(TapeError::ShapeMismatch {
            op: "mse_loss",
            left: pred.shape(),
            right: target.shape(),
        });
    }
    if pred.is_empty() {
        return Err(TapeError::Empty { op: "mse_loss" });
    }
    let t = tape.reshape(target, pred.rows(), pred.cols())?;
    let r = tape.sub(pred, t)?;
    let sq = tape.square(r)?;
    tape.mean(sq)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count() {
        assert_eq!(MlpShape::default().param_count(), MLP_PARAMS);
        assert_eq!(MLP_PARAMS, 1665);
    }

    #[test]
    fn zero_params_predict_zero() {
        let shape = MlpShape::default();
        let mut tape = Tape::new();
        let p = tape.vector(vec![0.0; MLP_PARAMS]);
        let x = shape.with_bias_column(&[1.0; 22]);
        let x = tape.constant(x, 2, 12).unwrap();
        let y = mlp_forward(&mut tape, shape, p, x).unwrap();
        assert_eq!(tape.value(y), &[0.0, 0.0]);
    }

    #[test]
    fn hand_computed_micro_network() {
        // 2 inputs, 1 hidden unit: W1 = (0.5, -1), b1 = 0.25, W2 = 2, b2 = -1
        let shape = MlpShape { inputs: 2, hidden: 1 };
        let params = vec![0.5, -1.0, 0.25, 2.0, -1.0];
        let mut tape = Tape::new();
        let p = tape.vector(params.clone());
        let x = tape.constant(shape.with_bias_column(&[2.0, 0.5]), 1, 3).unwrap();
        let y = mlp_forward(&mut tape, shape, p, x).unwrap();
        let expect = 2.0 * (0.5f64 * 2.0 - 0.5 + 0.25).tanh() - 1.0;
        assert!((tape.value(y)[0] - expect).abs() < 1e-15);
        assert!((shape.predict(&params, &[2.0, 0.5]) - expect).abs() < 1e-15);
    }

    #[test]
    fn mse_values() {
        let mut tape = Tape::new();
        let p = tape.vector(vec![0.0, 0.0]);
        let t = tape.vector(vec![1.0, 3.0]);
        let l = mse_loss(&mut tape, p, t).unwrap();
        assert_eq!(tape.scalar_value(l), 5.0);
        let same = mse_loss(&mut tape, t, t).unwrap();
        assert_eq!(tape.scalar_value(same), 0.0);
        let e = tape.vector(vec![]);
        assert!(mse_loss(&mut tape, e, e).is_err());
    }

    #[test]
    fn wrong_parameter_length() {
        let shape = MlpShape::default();
        let mut tape = Tape::new();
        let p = tape.vector(vec![0.0; 10]);
        let x = tape.constant(vec![1.0; 12], 1, 12).unwrap();
        assert!(mlp_forward(&mut tape, shape, p, x).is_err());
    }
}
