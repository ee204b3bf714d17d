//! Dense helpers for the covariance updates: Cholesky factorization with
//! jitter escalation and in-place rank-one updates of a Cholesky factor.
//! Matrices are square, row-major, `n * n` long.

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric matrix, or `None` if it is not
/// numerically positive definite.
pub fn cholesky(c: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s = c[i * n + j] - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Factorizes `c`, adding `jitter * I` when needed. Jitter starts at `base`
/// and grows tenfold for at most `max_escalations` retries. Returns the factor
/// and the jitter used (0 when none was needed).
pub fn cholesky_with_jitter(
    c: &[f64],
    n: usize,
    base: f64,
    max_escalations: usize,
) -> Result<(Vec<f64>, f64)> {
    if let Some(l) = cholesky(c, n) {
        return Ok((l, 0.0));
    }
    let mut jitter = base;
    let mut work = c.to_vec();
    for _ in 0..=max_escalations {
        for i in 0..n {
            work[i * n + i] = c[i * n + i] + jitter;
        }
        if let Some(l) = cholesky(&work, n) {
            return Ok((l, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Factorization(format!(
        "matrix of order {n} not positive definite after jitter {:e}",
        jitter / 10.0
    )))
}

/// Replaces the lower factor `l` of `C` by the factor of
/// `a * C + sum_k coef_k * v_k v_k^T` (all `coef_k >= 0`, `a > 0`).
/// Returns `false` if a diagonal entry stops being positive and finite, in
/// which case `l` is unspecified.
pub fn scaled_rank_one_updates(l: &mut [f64], n: usize, a: f64, updates: &[(f64, &[f64])]) -> bool {
    // column-major copy so each update sweeps contiguous columns
    let sa = a.sqrt();
    let mut cols = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            cols[j * n + i] = sa * l[i * n + j];
        }
    }
    let mut x = vec![0.0; n];
    for &(coef, v) in updates {
        if coef <= 0.0 {
            continue;
        }
        let s = coef.sqrt();
        x.iter_mut().zip(v).for_each(|(xi, vi)| *xi = s * vi);
        for k in 0..n {
            let col = &mut cols[k * n..(k + 1) * n];
            let lkk = col[k];
            let r = lkk.hypot(x[k]);
            if !(lkk > 0.0) || !r.is_finite() {
                return false;
            }
            let c = r / lkk;
            let sn = x[k] / lkk;
            col[k] = r;
            for i in k + 1..n {
                let li = (col[i] + sn * x[i]) / c;
                x[i] = c * x[i] - sn * li;
                col[i] = li;
            }
        }
    }
    for i in 0..n {
        for j in 0..=i {
            l[i * n + j] = cols[j * n + i];
        }
        for j in i + 1..n {
            l[i * n + j] = 0.0;
        }
    }
    (0..n).all(|i| l[i * n + i] > 0.0 && l[i * n + i].is_finite())
}

/// `L L^T` from the lower triangle of `l`.
pub fn factor_product(l: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = j + 1;
            let v = dot(&l[i * n..i * n + k], &l[j * n..j * n + k]);
            c[i * n + j] = v;
            c[j * n + i] = v;
        }
    }
    c
}

/// `L z` reading only the lower triangle.
pub fn lower_matvec(l: &[f64], n: usize, z: &[f64]) -> Vec<f64> {
    (0..n).map(|i| dot(&l[i * n..i * n + i + 1], &z[..i + 1])).collect()
}

/// Solves `L x = b` by forward substitution, reading only the lower
/// triangle.
pub fn lower_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s = dot(&l[i * n..i * n + i], &x[..i]);
        x[i] = (b[i] - s) / l[i * n + i];
    }
    x
}

/// Approximation of `E||N(0, I_d)||`.
pub fn expected_norm(d: usize) -> f64 {
    let d = d as f64;
    d.sqrt() * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d))
}

/// Largest `|C_ij - C_ji|`.
pub fn asymmetry(c: &[f64], n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((c[i * n + j] - c[j * n + i]).abs());
        }
    }
    worst
}

pub fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    crate::tape::dot(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_solve_inverts_lower_matvec() {
        let l = [2.0, 9.0, 9.0, -1.0, 0.5, 9.0, 3.0, 4.0, 1.5];
        let z = [0.3, -1.2, 2.0];
        let b = lower_matvec(&l, 3, &z);
        assert!(close(&lower_solve(&l, 3, &b), &z, 1e-14));
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
    }

    #[test]
    fn cholesky_reconstructs() {
        let c = [4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let l = cholesky(&c, 3).unwrap();
        assert!(close(&factor_product(&l, 3), &c, 1e-14));
        assert_eq!(l[1], 0.0);
    }

    #[test]
    fn indefinite_needs_jitter() {
        let c = [1.0, 1.0, 1.0, 1.0];
        assert!(cholesky(&c, 2).is_none());
        let (l, j) = cholesky_with_jitter(&c, 2, 1e-12, 6).unwrap();
        assert!(j > 0.0);
        assert!(l[3] > 0.0);
        let bad = [-1.0, 0.0, 0.0, -1.0];
        assert!(cholesky_with_jitter(&bad, 2, 1e-12, 6).is_err());
    }

    #[test]
    fn rank_one_updates_match_explicit_factorization() {
        let n = 4;
        let c0 = [
            3.0, 0.5, 0.1, 0.0, 0.5, 2.0, 0.3, 0.2, 0.1, 0.3, 1.5, 0.4, 0.0, 0.2, 0.4, 1.0,
        ];
        let mut l = cholesky(&c0, n).unwrap();
        let u = [0.3, -1.0, 0.7, 2.0];
        let v = [1.0, 0.0, -0.5, 0.25];
        let a = 0.8;
        assert!(scaled_rank_one_updates(&mut l, n, a, &[(0.2, &u), (0.05, &v)]));
        let mut c = c0.iter().map(|x| a * x).collect::<Vec<_>>();
        for i in 0..n {
            for j in 0..n {
                c[i * n + j] += 0.2 * u[i] * u[j] + 0.05 * v[i] * v[j];
            }
        }
        let expect = cholesky(&c, n).unwrap();
        assert!(close(&l, &expect, 1e-12));
    }

    #[test]
    fn expected_norm_is_close_to_monte_carlo_value() {
        // E||N(0, I_1)|| = sqrt(2 / pi)
        assert!((expected_norm(1) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.02);
        assert!((expected_norm(100) - 9.975).abs() < 0.01);
    }
}
