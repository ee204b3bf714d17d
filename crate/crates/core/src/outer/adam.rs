use crate::error::{Error, Result};
use crate::tape::Tape;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam over every parameter registered on a tape.
/// Parameters without a gradient are left untouched, moments included.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn with_lr(lr: f64) -> Self {
        Self::new(AdamConfig {
            lr,
            ..Default::default()
        })
    }

    pub fn lr(&self) -> f64 {
        self.cfg.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, tape: &mut Tape) -> Result<()> {
        let params: Vec<(usize, String)> = tape.params().map(|(v, name)| (v.id(), name.to_string())).collect();
        for (v, name) in tape.params() {
            if let Some(g) = tape.grad(v) {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteGradient(name.to_string()));
                }
            }
        }
        if self.m.len() < params.len() {
            self.m.resize(params.len(), Vec::new());
            self.v.resize(params.len(), Vec::new());
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powf(self.t as f64);
        let c2 = 1.0 - beta2.powf(self.t as f64);
        for (k, (id, _)) in params.iter().enumerate() {
            let (x, g) = tape.param_and_grad_mut(*id);
            let Some(g) = g else { continue };
            let g = g.to_vec();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            if m.len() != x.len() {
                *m = vec![0.0; x.len()];
                *v = vec![0.0; x.len()];
            }
            for i in 0..x.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                x[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut tape = Tape::new();
        let p = tape.param("w", vec![2.0], 1, 1).unwrap();
        let loss = tape.scale(p, 1.0).unwrap();
        tape.backward(loss).unwrap();
        let mut adam = Adam::with_lr(0.1);
        adam.step(&mut tape).unwrap();
        // lr * g / (|g| + eps) with g = 1
        let expect = 2.0 - 0.1 / (1.0 + 1e-8);
        assert!((tape.value(p)[0] - expect).abs() < 1e-15);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn zero_gradient_and_missing_gradient_leave_values() {
        let mut tape = Tape::new();
        let a = tape.param("a", vec![1.0, -1.0], 2, 1).unwrap();
        let b = tape.param("b", vec![5.0], 1, 1).unwrap();
        let z = tape.scale(a, 0.0).unwrap();
        let loss = tape.sum(z).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(b).is_none());
        let mut adam = Adam::with_lr(0.5);
        adam.step(&mut tape).unwrap();
        assert_eq!(tape.value(a), &[1.0, -1.0]);
        assert_eq!(tape.value(b), &[5.0]);
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut tape = Tape::new();
        let a = tape.param("offset", vec![0.0], 1, 1).unwrap();
        let nan = tape.scalar(f64::NAN);
        let s = tape.mul(a, nan).unwrap();
        tape.backward(s).unwrap();
        let err = Adam::with_lr(0.1).step(&mut tape).unwrap_err();
        assert!(err.to_string().contains("offset"), "{err}");
    }
}
