/// Halves the learning rate once the monitored value has gone `patience`
/// consecutive calls without improving by more than `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    /// Absolute improvement needed to reset the counter.
    pub threshold: f64,
    best: Option<f64>,
    stale: usize,
}

impl Default for PlateauScheduler {
    fn default() -> Self {
        PlateauScheduler {
            patience: 100,
            factor: 0.5,
            min_lr: 1e-5,
            threshold: 1e-12,
            best: None,
            stale: 0,
        }
    }
}

impl PlateauScheduler {
    /// Feeds one observation and returns the learning rate to use next.
    /// The first call only records the reference value.
    pub fn step(&mut self, lr: f64, value: f64) -> f64 {
        let Some(best) = self.best else {
            self.best = Some(value);
            return lr;
        };
        if value < best - self.threshold {
            self.best = Some(value);
            self.stale = 0;
            return lr;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            self.stale = 0;
            return (lr * self.factor).max(self.min_lr).min(lr);
        }
        lr
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_value_halves_twice_in_200_calls() {
        let mut s = PlateauScheduler::default();
        let mut lr = s.step(0.01, 1.0);
        let mut changes = 0;
        for _ in 0..200 {
            let next = s.step(lr, 1.0);
            if next != lr {
                changes += 1;
            }
            lr = next;
        }
        assert_eq!(changes, 2);
        assert_eq!(lr, 0.0025);
    }

    #[test]
    fn improving_value_keeps_lr() {
        let mut s = PlateauScheduler::default();
        let mut lr = 0.01;
        for i in 0..1000 {
            lr = s.step(lr, -(i as f64));
        }
        assert_eq!(lr, 0.01);
    }

    #[test]
    fn tiny_improvements_do_not_count() {
        let mut s = PlateauScheduler::default();
        let mut lr = s.step(0.01, 1.0);
        for i in 1..=100 {
            lr = s.step(lr, 1.0 - i as f64 * 1e-14);
        }
        assert_eq!(lr, 0.005);
    }

    #[test]
    fn lr_never_below_floor() {
        let mut s = PlateauScheduler {
            patience: 1,
            ..Default::default()
        };
        let mut lr = s.step(1e-4, 0.0);
        for _ in 0..50 {
            lr = s.step(lr, 0.0);
        }
        assert_eq!(lr, 1e-5);
    }
}
