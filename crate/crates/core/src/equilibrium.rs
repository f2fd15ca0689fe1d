//! Steady states: Jacobian-free Newton-Krylov on the collocation residual,
//! dense linearization and its spectrum.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::krylov::{gmres, GmresConfig};
use crate::linalg::{self, DENSE_LIMIT};
use crate::model::{potential_jacobian, reaction_jacobian, FieldPair, ModelParameters};
use crate::spectral::{RhsEvaluator, SpectralGrid};

/// Real part above which an eigenvalue counts as unstable. Keeps the neutral
/// translation mode of patterned states (and round-off) from flagging.
pub const STABILITY_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub gmres_restart: usize,
    pub gmres_rel_tol: f64,
    pub gmres_max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            max_halvings: 8,
            gmres_restart: 50,
            gmres_rel_tol: 1e-3,
            gmres_max_iter: 400,
        }
    }
}

impl NewtonConfig {
    pub(crate) fn gmres(&self) -> GmresConfig {
        GmresConfig {
            restart: self.gmres_restart,
            rel_tol: self.gmres_rel_tol,
            max_iter: self.gmres_max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub state: FieldPair,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual norm before each Newton update and after the last one.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Sorted by descending real part.
    pub eigenvalues: Vec<Complex64>,
    pub max_real_part: f64,
    pub stable: bool,
    /// The leading eigenvalue is one of a complex-conjugate pair.
    pub hopf_candidate: bool,
    pub threshold: f64,
}

impl StabilityReport {
    pub fn from_eigenvalues(mut eigenvalues: Vec<Complex64>, threshold: f64) -> Self {
        linalg::sort_by_real_part_desc(&mut eigenvalues);
        let lead = eigenvalues.first().copied().unwrap_or_default();
        Self {
            max_real_part: lead.re,
            stable: lead.re < threshold,
            hopf_candidate: lead.im.abs() > STABILITY_THRESHOLD,
            threshold,
            eigenvalues,
        }
    }

    pub fn leading(&self) -> Complex64 {
        self.eigenvalues.first().copied().unwrap_or_default()
    }
}

/// `u_i(x) = A_i cos(n_i x)` with `n_i = pi m_i / Lx`.
pub fn cosine_guess(grid: &SpectralGrid, amplitudes: [f64; 2], modes: [u32; 2]) -> FieldPair {
    let wave = |amp: f64, m: u32| -> Vec<f64> {
        let k = PI * m as f64 / grid.lx();
        grid.points().iter().map(|x| amp * (k * x).cos()).collect()
    };
    FieldPair { u1: wave(amplitudes[0], modes[0]), u2: wave(amplitudes[1], modes[1]) }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Collocation residual `Lap(mu) + R` of both species, stacked `[F1, F2]`.
pub fn residual(p: &ModelParameters, grid: &SpectralGrid, state: &FieldPair) -> Result<Vec<f64>> {
    state.check_len(grid.n())?;
    if !state.is_finite() {
        return Err(Error::NonFinite("state passed to residual"));
    }
    let mut out = vec![0.0; 2 * grid.n()];
    RhsEvaluator::new(grid).eval(p, &state.stacked(), &mut out);
    Ok(out)
}

/// Jacobian-vector products of the residual by one-sided differences.
struct DirectionalDerivative<'a> {
    p: &'a ModelParameters,
    rhs: RhsEvaluator,
    base: Vec<f64>,
    base_value: Vec<f64>,
    probe: Vec<f64>,
    scale: f64,
}

impl<'a> DirectionalDerivative<'a> {
    fn new(p: &'a ModelParameters, grid: &SpectralGrid, base: &[f64], base_value: &[f64]) -> Self {
        Self {
            p,
            rhs: RhsEvaluator::new(grid),
            base: base.to_vec(),
            base_value: base_value.to_vec(),
            probe: vec![0.0; base.len()],
            scale: f64::EPSILON.sqrt() * (1.0 + norm(base)),
        }
    }

    fn apply(&mut self, v: &[f64], out: &mut [f64]) {
        let vn = norm(v);
        if vn == 0.0 {
            out.fill(0.0);
            return;
        }
        let eps = self.scale / vn;
        for i in 0..v.len() {
            self.probe[i] = self.base[i] + eps * v[i];
        }
        self.rhs.eval(self.p, &self.probe, out);
        for i in 0..v.len() {
            out[i] = (out[i] - self.base_value[i]) / eps;
        }
    }
}

/// Right preconditioner `diag(1 + d_i k^2)^-1`, applied mode by mode. It
/// removes the growth of the Jacobian's condition number with `N` that
/// comes from the Laplacian.
struct DiffusionPreconditioner<'a> {
    grid: &'a SpectralGrid,
    d: [f64; 2],
}

impl DiffusionPreconditioner<'_> {
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.n();
        let mut out = Vec::with_capacity(v.len());
        for (block, d) in [(&v[..n], self.d[0]), (&v[n..], self.d[1])] {
            let mut f = self.grid.forward_transform(block)?;
            for (c, k) in f.coefficients.iter_mut().zip(self.grid.wavenumbers()) {
                *c /= 1.0 + d * k * k;
            }
            out.extend(self.grid.inverse_transform(&f)?);
        }
        Ok(out)
    }
}

/// Damped inexact Newton with right-preconditioned restarted GMRES inner
/// solves.
///
/// Running out of iterations yields a result with `converged == false`; a
/// step that cannot reduce the residual after all halvings is an error.
pub fn newton_krylov_solve(
    p: &ModelParameters,
    grid: &SpectralGrid,
    guess: &FieldPair,
    cfg: &NewtonConfig,
) -> Result<EquilibriumResult> {
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", cfg.tol)));
    }
    guess.check_len(grid.n())?;
    let mut rhs = RhsEvaluator::new(grid);
    let mut x = guess.stacked();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial guess"));
    }
    let mut f = vec![0.0; x.len()];
    rhs.eval(p, &x, &mut f);
    let mut f_norm = norm(&f);
    let mut history = vec![f_norm];
    let mut iterations = 0;
    let gmres_cfg = cfg.gmres();
    let mut trial = vec![0.0; x.len()];
    let mut f_trial = vec![0.0; x.len()];
    let pc = DiffusionPreconditioner { grid, d: [p.d1, p.d2] };

    while f_norm > cfg.tol && iterations < cfg.max_iter {
        let minus_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let mut jac = DirectionalDerivative::new(p, grid, &x, &f);
        let sol = gmres(
            |v, out| {
                jac.apply(&pc.apply(v)?, out);
                Ok(())
            },
            &minus_f,
            &gmres_cfg,
        )?;
        let step = pc.apply(&sol.x)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            for i in 0..x.len() {
                trial[i] = x[i] + lambda * step[i];
            }
            rhs.eval(p, &trial, &mut f_trial);
            let n_trial = norm(&f_trial);
            if n_trial.is_finite() && n_trial < f_norm {
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut f, &mut f_trial);
                f_norm = n_trial;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        iterations += 1;
        if !accepted {
            return Err(Error::LineSearch(f_norm));
        }
        history.push(f_norm);
    }
    Ok(EquilibriumResult {
        state: FieldPair::from_stacked(&x)?,
        residual_norm: f_norm,
        iterations,
        converged: f_norm <= cfg.tol,
        history,
    })
}

/// Dense matrix of the spectral Laplacian on the collocation points.
pub fn laplacian_matrix(grid: &SpectralGrid) -> Result<DMatrix<f64>> {
    grid.laplacian_matrix()
}

/// Dense `2N x 2N` linearization of `Lap(mu) + R` about `state`:
/// block `(i, j)` is `diag(dR_i/du_j) + Lap * diag(dmu_i/du_j)`.
pub fn assemble_linearization(
    p: &ModelParameters,
    grid: &SpectralGrid,
    state: &FieldPair,
) -> Result<DMatrix<f64>> {
    let n = grid.n();
    if n > DENSE_LIMIT {
        return Err(Error::DenseGuard { n, limit: DENSE_LIMIT });
    }
    state.check_len(n)?;
    let lap = grid.laplacian_matrix()?;
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        let jr = reaction_jacobian(p, state.u1[j], state.u2[j]);
        let jm = potential_jacobian(p, state.u1[j], state.u2[j]);
        for bi in 0..2 {
            for bj in 0..2 {
                let col = bj * n + j;
                for row in 0..n {
                    out[(bi * n + row, col)] = lap[(row, j)] * jm[bi][bj];
                }
                out[(bi * n + j, col)] += jr[bi][bj];
            }
        }
    }
    Ok(out)
}

pub fn stability_spectrum(
    p: &ModelParameters,
    grid: &SpectralGrid,
    state: &FieldPair,
    threshold: f64,
) -> Result<StabilityReport> {
    let l = assemble_linearization(p, grid, state)?;
    Ok(StabilityReport::from_eigenvalues(linalg::eigenvalues(&l)?, threshold))
}

/// Real part of the eigenvector for `eigenvalue`, scaled to unit max-abs.
pub fn leading_mode(
    p: &ModelParameters,
    grid: &SpectralGrid,
    state: &FieldPair,
    eigenvalue: Complex64,
) -> Result<FieldPair> {
    let l = assemble_linearization(p, grid, state)?;
    let v = linalg::eigenvector_near(&l, eigenvalue)?;
    let re: Vec<f64> = v.iter().map(|c| c.re).collect();
    let peak = re.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if peak == 0.0 {
        return Err(Error::Eigensolver("eigenvector has a vanishing real part".into()));
    }
    FieldPair::from_stacked(&re.iter().map(|x| x / peak).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiffusionRegime, RegimeLabel};

    #[test]
    fn zero_state_is_a_root() {
        let g = SpectralGrid::new(32, 5.0).unwrap();
        for label in RegimeLabel::ALL {
            let p = DiffusionRegime::preset(label, -1.0).parameters;
            let r = residual(&p, &g, &FieldPair::zeros(32)).unwrap();
            assert!(norm(&r) <= 1e-14);
            let res = newton_krylov_solve(&p, &g, &FieldPair::zeros(32), &NewtonConfig::default()).unwrap();
            assert!(res.converged);
            assert_eq!(res.iterations, 0);
        }
    }

    #[test]
    fn residual_equals_inverse_rhs() {
        let g = SpectralGrid::new(32, 5.0).unwrap();
        let p = DiffusionRegime::preset(RegimeLabel::Cross, -0.8).parameters;
        let s = cosine_guess(&g, [0.5, 0.4], [3, 3]);
        let (a, b) = crate::spectral::rhs_fourier(&p, &g, &s).unwrap();
        let mut expect = g.inverse_transform(&a).unwrap();
        expect.extend(g.inverse_transform(&b).unwrap());
        let r = residual(&p, &g, &s).unwrap();
        for (x, y) in r.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn mode_block_eigenvalues(p: &ModelParameters, k: f64) -> [Complex64; 2] {
        let a = p.eta - p.d1 * k * k;
        let d = p.eta * p.b - p.d2 * k * k;
        let (b, c) = (p.eta * p.a, p.eta * p.h);
        let tr = a + d;
        let det = a * d - b * c;
        let disc = Complex64::new(tr * tr - 4.0 * det, 0.0).sqrt();
        [(Complex64::new(tr, 0.0) + disc) / 2.0, (Complex64::new(tr, 0.0) - disc) / 2.0]
    }

    #[test]
    fn zero_state_spectrum_matches_mode_blocks() {
        let g = SpectralGrid::new(32, 5.0).unwrap();
        let p = ModelParameters::linear(-0.5);
        let report = stability_spectrum(&p, &g, &FieldPair::zeros(32), STABILITY_THRESHOLD).unwrap();
        let mut oracle: Vec<Complex64> =
            g.wavenumbers().iter().flat_map(|&k| mode_block_eigenvalues(&p, k)).collect();
        assert_eq!(oracle.len(), report.eigenvalues.len());
        for a in &report.eigenvalues {
            let (i, d) = oracle
                .iter()
                .enumerate()
                .map(|(i, b)| (i, (a - b).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            assert!(d < 1e-8, "{a} unmatched");
            oracle.swap_remove(i);
        }
        assert!((report.max_real_part - mode_block_eigenvalues(&p, g.wavenumbers()[3])[0].re).abs() < 1e-8);
        // modes 3 and 4 are Turing unstable
        assert!(!report.stable);
        assert!(!report.hopf_candidate);
    }

    #[test]
    fn linearization_matches_directional_differences() {
        let g = SpectralGrid::new(32, 5.0).unwrap();
        let p = DiffusionRegime::preset(RegimeLabel::Cross, -1.1).parameters;
        let s = cosine_guess(&g, [0.6, 0.3], [3, 2]);
        let l = assemble_linearization(&p, &g, &s).unwrap();
        let base = residual(&p, &g, &s).unwrap();
        let dir: Vec<f64> = (0..64).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect();
        let h = 1e-6;
        let shifted: Vec<f64> = s.stacked().iter().zip(&dir).map(|(a, b)| a + h * b).collect();
        let moved = residual(&p, &g, &FieldPair::from_stacked(&shifted).unwrap()).unwrap();
        let lv = &l * nalgebra::DVector::from_column_slice(&dir);
        for i in 0..64 {
            let fd = (moved[i] - base[i]) / h;
            assert!((fd - lv[i]).abs() < 1e-5 * lv[i].abs().max(1.0), "row {i}");
        }
    }

    #[test]
    fn threshold_classification() {
        let r = StabilityReport::from_eigenvalues(
            vec![Complex64::new(5e-4, 0.0), Complex64::new(-1.0, 2.0), Complex64::new(-1.0, -2.0)],
            STABILITY_THRESHOLD,
        );
        assert!(r.stable);
        assert!(!r.hopf_candidate);
        let r = StabilityReport::from_eigenvalues(
            vec![Complex64::new(2e-3, 0.5), Complex64::new(2e-3, -0.5), Complex64::new(-1.0, 0.0)],
            STABILITY_THRESHOLD,
        );
        assert!(!r.stable);
        assert!(r.hopf_candidate);
    }

    #[test]
    fn dense_guard() {
        let g = SpectralGrid::new(4096, 5.0).unwrap();
        let p = ModelParameters::linear(-1.0);
        assert!(matches!(
            assemble_linearization(&p, &g, &FieldPair::zeros(4096)),
            Err(Error::DenseGuard { .. })
        ));
    }
}
