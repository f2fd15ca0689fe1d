//! Restarted GMRES for matrix-free linear solves.

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct GmresConfig {
    pub restart: usize,
    /// Relative tolerance on `||b - A x|| / ||b||`.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self { restart: 50, rel_tol: 1e-3, max_iter: 200 }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` from `x = 0`, where `apply(v, out)` writes `A v`.
///
/// Modified Gram-Schmidt Arnoldi with Givens rotations. Operator failures
/// propagate unchanged.
pub fn gmres<F>(mut apply: F, b: &[f64], cfg: &GmresConfig) -> Result<GmresOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(GmresOutcome { x, iterations: 0, rel_residual: 0.0, converged: true });
    }
    let m = cfg.restart.max(1);
    let mut total = 0;
    let mut r = b.to_vec();
    let mut w = vec![0.0; n];
    let mut rel = 1.0;

    while total < cfg.max_iter {
        let beta = norm(&r);
        rel = beta / b_norm;
        if rel <= cfg.rel_tol {
            return Ok(GmresOutcome { x, iterations: total, rel_residual: rel, converged: true });
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        // Hessenberg columns, rotated in place
        let mut hess: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && total < cfg.max_iter {
            apply(&basis[k], &mut w)?;
            total += 1;
            let mut h = vec![0.0; k + 2];
            for (i, q) in basis.iter().enumerate() {
                h[i] = dot(&w, q);
                for (wj, qj) in w.iter_mut().zip(q) {
                    *wj -= h[i] * qj;
                }
            }
            h[k + 1] = norm(&w);
            for i in 0..k {
                let t = cs[i] * h[i] + sn[i] * h[i + 1];
                h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
                h[i] = t;
            }
            let denom = h[k].hypot(h[k + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (h[k] / denom, h[k + 1] / denom) };
            let next_norm = h[k + 1];
            h[k] = c * h[k] + s * h[k + 1];
            h[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            cs.push(c);
            sn.push(s);
            hess.push(h);
            k += 1;
            rel = g[k].abs() / b_norm;
            if rel <= cfg.rel_tol || next_norm <= 1e-14 * beta {
                break;
            }
            basis.push(w.iter().map(|v| v / next_norm).collect());
        }
        // back substitution on the k x k triangle
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= hess[j][i] * y[j];
            }
            y[i] = if hess[i][i] != 0.0 { s / hess[i][i] } else { 0.0 };
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, qi) in x.iter_mut().zip(&basis[j]) {
                *xi += yj * qi;
            }
        }
        if rel <= cfg.rel_tol {
            return Ok(GmresOutcome { x, iterations: total, rel_residual: rel, converged: true });
        }
        // true residual for the restart
        apply(&x, &mut w)?;
        for i in 0..n {
            r[i] = b[i] - w[i];
        }
    }
    Ok(GmresOutcome { x, iterations: total, rel_residual: rel, converged: rel <= cfg.rel_tol })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_apply(a: &[Vec<f64>]) -> impl FnMut(&[f64], &mut [f64]) -> Result<()> + '_ {
        move |v, out| {
            for (o, row) in out.iter_mut().zip(a) {
                *o = dot(row, v);
            }
            Ok(())
        }
    }

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 30;
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 4.0 + i as f64 * 0.1 } else { ((i * 7 + j * 3) % 5) as f64 * 0.05 - 0.1 }).collect())
            .collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let cfg = GmresConfig { restart: 10, rel_tol: 1e-12, max_iter: 500 };
        let out = gmres(dense_apply(&a), &b, &cfg).unwrap();
        assert!(out.converged);
        let mut ax = vec![0.0; n];
        dense_apply(&a)(&out.x, &mut ax).unwrap();
        let err: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-10 * norm(&b));
    }

    #[test]
    fn zero_rhs_is_immediate() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let out = gmres(dense_apply(&a), &[0.0, 0.0], &GmresConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x, vec![0.0, 0.0]);
    }

    #[test]
    fn exact_in_dimension_steps() {
        let a = vec![vec![2.0, 1.0, 0.0], vec![0.0, 3.0, 1.0], vec![1.0, 0.0, 1.0]];
        let out = gmres(dense_apply(&a), &[1.0, 2.0, 3.0], &GmresConfig { restart: 50, rel_tol: 1e-14, max_iter: 10 }).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 3);
    }
}
