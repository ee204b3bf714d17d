use crate::error::{Error, Result};
use crate::outer::RunRecord;

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Linearly interpolated quartiles `(q1, median, q3)` at index `(n-1) p`.
pub fn quartiles(values: &[f64]) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::Config("quartiles of an empty set".into()));
    }
    let s = sorted(values);
    Ok((type7(&s, 0.25), type7(&s, 0.5), type7(&s, 0.75)))
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        let (q1, median, q3) = quartiles(values)?;
        let (mean, std) = mean_std(values);
        let s = sorted(values);
        Ok(Summary {
            n: values.len(),
            min: s[0],
            max: s[s.len() - 1],
            q1,
            median,
            q3,
            mean,
            std,
        })
    }
}

/// Box-and-whisker geometry with whiskers at the most extreme points inside
/// `1.5 IQR` of the box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Result<Self> {
        let (q1, median, q3) = quartiles(values)?;
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let s = sorted(values);
        let inside: Vec<f64> = s.iter().copied().filter(|v| (lo_fence..=hi_fence).contains(v)).collect();
        let outliers = s.iter().copied().filter(|v| !(lo_fence..=hi_fence).contains(v)).collect();
        Ok(BoxStats {
            q1,
            median,
            q3,
            whisker_lo: inside.first().copied().unwrap_or(q1),
            whisker_hi: inside.last().copied().unwrap_or(q3),
            outliers,
        })
    }
}

/// One point of an average-best-fitness curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub n_evals: f64,
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample std of best-so-far fitness per generation across runs.
/// A generation is kept while at least one run reached it.
pub fn abf_curve(runs: &[Vec<RunRecord>]) -> Vec<CurvePoint> {
    let len = runs.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|g| {
            let at: Vec<&RunRecord> = runs.iter().filter_map(|r| r.get(g)).collect();
            let best: Vec<f64> = at.iter().map(|r| r.best_fitness).collect();
            let (mean, std) = mean_std(&best);
            let evals: Vec<f64> = at.iter().map(|r| r.n_evals as f64).collect();
            CurvePoint {
                n_evals: mean_std(&evals).0,
                mean,
                std,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_small_sets() {
        assert_eq!(quartiles(&[3.0, 1.0, 2.0]).unwrap(), (1.5, 2.0, 2.5));
        assert_eq!(quartiles(&[5.0]).unwrap(), (5.0, 5.0, 5.0));
        assert!(quartiles(&[]).is_err());
    }

    #[test]
    fn outlier_beyond_upper_fence() {
        let b = BoxStats::of(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (2.0, 3.0, 4.0));
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!((b.whisker_lo, b.whisker_hi), (1.0, 4.0));
    }

    #[test]
    fn sample_std() {
        let s = Summary::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(s.mean, 5.0);
        assert!((s.std - (32.0f64 / 7.0).sqrt()).abs() < 1e-15);
        assert_eq!((s.min, s.max, s.n), (2.0, 9.0, 8));
        assert_eq!(Summary::of(&[3.0]).unwrap().std, 0.0);
    }
}
