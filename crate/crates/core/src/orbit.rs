//! Periodic orbits by single shooting, monodromy matrices and Floquet
//! classification.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{exact_steps, Stepper};
use crate::krylov::{gmres, GmresConfig};
use crate::linalg;
use crate::model::{FieldPair, ModelParameters};
use crate::spectral::SpectralGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    /// The state at `t = 0` on the cycle.
    pub anchor: FieldPair,
    pub period: f64,
    pub residual_norm: f64,
    pub converged: bool,
    #[serde(default)]
    pub iterations: usize,
}

impl PeriodicOrbit {
    /// An unsolved candidate.
    pub fn guess(anchor: FieldPair, period: f64) -> Self {
        Self { anchor, period, residual_norm: f64::INFINITY, converged: false, iterations: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingConfig {
    pub dt: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Line-search halvings per Newton step. Near a Hopf point the period
    /// row is weak and the first steps need heavy damping.
    pub max_halvings: usize,
    pub gmres_restart: usize,
    pub gmres_rel_tol: f64,
    pub gmres_max_iter: usize,
    /// `||F(anchor)||` below this means the solve fell onto an equilibrium.
    pub degenerate_rhs_norm: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            dt: 5e-4,
            tol: 5e-4,
            max_iter: 20,
            max_halvings: 16,
            gmres_restart: 40,
            gmres_rel_tol: 1e-3,
            gmres_max_iter: 120,
            degenerate_rhs_norm: 1e-8,
        }
    }
}

impl ShootingConfig {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BifurcationKind {
    None,
    Fold,
    PeriodDoubling,
    NeimarkSacker,
}

impl BifurcationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Fold => "fold",
            Self::PeriodDoubling => "period_doubling",
            Self::NeimarkSacker => "neimark_sacker",
        }
    }
}

impl std::fmt::Display for BifurcationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitBifurcation {
    pub kind: BifurcationKind,
    pub critical_multiplier: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonodromyResult {
    #[serde(skip)]
    pub matrix: DMatrix<f64>,
    /// Sorted by descending modulus.
    pub multipliers: Vec<Complex64>,
    /// The multiplier closest to 1 (flow direction).
    pub trivial_index: usize,
    /// A second multiplier at 1 carried by the spatial translation mode, when
    /// the orbit breaks translation symmetry.
    pub translation_index: Option<usize>,
}

impl MonodromyResult {
    /// Wraps a set of multipliers without a matrix.
    pub fn from_multipliers(mut multipliers: Vec<Complex64>) -> Self {
        linalg::sort_by_modulus_desc(&mut multipliers);
        let trivial_index = closest_to_one(&multipliers, None).unwrap_or(0);
        Self { matrix: DMatrix::zeros(0, 0), multipliers, trivial_index, translation_index: None }
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let mut multipliers = linalg::eigenvalues(&matrix)?;
        linalg::sort_by_modulus_desc(&mut multipliers);
        let trivial_index = closest_to_one(&multipliers, None).unwrap_or(0);
        Ok(Self { matrix, multipliers, trivial_index, translation_index: None })
    }

    pub fn trivial(&self) -> Complex64 {
        self.multipliers[self.trivial_index]
    }

    /// Multipliers other than the trivial and translation ones.
    pub fn nontrivial(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.multipliers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.trivial_index && Some(*i) != self.translation_index)
            .map(|(_, m)| *m)
    }

    /// Largest `|mu - conj(nu)|` over multipliers paired with their nearest
    /// conjugate partner.
    pub fn conjugate_closure_defect(&self) -> f64 {
        self.multipliers
            .iter()
            .map(|m| {
                self.multipliers.iter().map(|n| (m.conj() - n).norm()).fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
}

fn closest_to_one(m: &[Complex64], skip: Option<usize>) -> Option<usize> {
    m.iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .min_by(|a, b| (a.1 - 1.0).norm().total_cmp(&(b.1 - 1.0).norm()))
        .map(|(i, _)| i)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Flow evaluations with a fixed number of RK4 steps.
struct Shooter<'a> {
    p: &'a ModelParameters,
    stepper: Stepper,
    f_ref: Vec<f64>,
}

impl<'a> Shooter<'a> {
    fn new(p: &'a ModelParameters, grid: &SpectralGrid, reference: &[f64]) -> Self {
        let mut stepper = Stepper::new(grid);
        let mut f_ref = vec![0.0; reference.len()];
        stepper.rhs(p, reference, &mut f_ref);
        Self { p, stepper, f_ref }
    }

    fn flow(&mut self, x: &[f64], t: f64, steps: usize) -> Result<Vec<f64>> {
        let mut y = x.to_vec();
        self.stepper.advance(self.p, &mut y, t / steps as f64, steps, 0.0)?;
        Ok(y)
    }

    /// `[phi^T(x) - x ; <phi^T(x) - x, F(reference)>]`.
    fn residual(&mut self, x: &[f64], t: f64, steps: usize) -> Result<Vec<f64>> {
        let mut r = self.flow(x, t, steps)?;
        for (ri, xi) in r.iter_mut().zip(x) {
            *ri -= xi;
        }
        let phase = dot(&r, &self.f_ref);
        r.push(phase);
        Ok(r)
    }

    fn rhs_norm(&mut self, x: &[f64]) -> f64 {
        let mut f = vec![0.0; x.len()];
        self.stepper.rhs(self.p, x, &mut f);
        norm(&f)
    }
}

pub fn shooting_residual(
    p: &ModelParameters,
    grid: &SpectralGrid,
    candidate: &PeriodicOrbit,
    reference: &FieldPair,
    dt: f64,
) -> Result<Vec<f64>> {
    candidate.anchor.check_len(grid.n())?;
    reference.check_len(grid.n())?;
    if !(candidate.period > 0.0 && candidate.period.is_finite()) {
        return Err(Error::InvalidArgument(format!("period must be positive, got {}", candidate.period)));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let (steps, _) = exact_steps(candidate.period, dt);
    Shooter::new(p, grid, &reference.stacked()).residual(&candidate.anchor.stacked(), candidate.period, steps)
}

/// Newton-Krylov on the joint unknowns `(anchor, T)`.
///
/// The RK4 step count is frozen at the value for the current `T` within
/// each Newton iteration, so `T` enters the flow smoothly through the step
/// size. Hitting `max_iter` returns a non-converged orbit.
pub fn solve_orbit(
    p: &ModelParameters,
    grid: &SpectralGrid,
    guess: &PeriodicOrbit,
    reference: &FieldPair,
    cfg: &ShootingConfig,
) -> Result<PeriodicOrbit> {
    cfg.validate()?;
    guess.anchor.check_len(grid.n())?;
    reference.check_len(grid.n())?;
    if !(guess.period > 0.0 && guess.period.is_finite()) {
        return Err(Error::InvalidArgument(format!("period must be positive, got {}", guess.period)));
    }
    let mut shooter = Shooter::new(p, grid, &reference.stacked());
    let mut x = guess.anchor.stacked();
    let mut t = guess.period;
    let dim = x.len();
    let gmres_cfg = GmresConfig {
        restart: cfg.gmres_restart,
        rel_tol: cfg.gmres_rel_tol,
        max_iter: cfg.gmres_max_iter,
    };

    let (mut steps, _) = exact_steps(t, cfg.dt);
    let mut r = shooter.residual(&x, t, steps)?;
    let mut r_norm = norm(&r);
    let mut iterations = 0;
    while r_norm > cfg.tol && iterations < cfg.max_iter {
        let scale = f64::EPSILON.sqrt() * (1.0 + (dot(&x, &x) + t * t).sqrt());
        let base_x = x.clone();
        let base_r = r.clone();
        let minus_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let sol = gmres(
            |v, out| {
                let vn = norm(v);
                if vn == 0.0 {
                    out.fill(0.0);
                    return Ok(());
                }
                let eps = scale / vn;
                let probe: Vec<f64> = base_x.iter().zip(v).map(|(a, b)| a + eps * b).collect();
                let rv = shooter.residual(&probe, t + eps * v[dim], steps)?;
                for ((o, a), b) in out.iter_mut().zip(&rv).zip(&base_r) {
                    *o = (a - b) / eps;
                }
                Ok(())
            },
            &minus_r,
            &gmres_cfg,
        )?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let t_trial = t + lambda * sol.x[dim];
            if t_trial > 0.0 {
                let x_trial: Vec<f64> = x.iter().zip(&sol.x).map(|(a, b)| a + lambda * b).collect();
                let (steps_trial, _) = exact_steps(t_trial, cfg.dt);
                // a blown-up trial flow is just a rejected step
                if let Ok(r_trial) = shooter.residual(&x_trial, t_trial, steps_trial) {
                    let n_trial = norm(&r_trial);
                    if n_trial.is_finite() && n_trial < r_norm {
                        x = x_trial;
                        t = t_trial;
                        steps = steps_trial;
                        r = r_trial;
                        r_norm = n_trial;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        iterations += 1;
        if !accepted {
            return Err(Error::LineSearch(r_norm));
        }
    }
    let rhs_norm = shooter.rhs_norm(&x);
    if rhs_norm < cfg.degenerate_rhs_norm {
        return Err(Error::DegenerateOrbit(rhs_norm));
    }
    Ok(PeriodicOrbit {
        anchor: FieldPair::from_stacked(&x)?,
        period: t,
        residual_norm: r_norm,
        converged: r_norm <= cfg.tol,
        iterations,
    })
}

/// Column-wise forward differences of a map: column `i` is
/// `(flow(x + h e_i) - flow(x)) / h`. Columns are computed in parallel and
/// assembled in order.
pub fn finite_difference_jacobian<F>(flow: F, x: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let base = flow(x)?;
    let columns: Vec<Vec<f64>> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut probe = x.to_vec();
            probe[i] += h;
            let y = flow(&probe)?;
            Ok(y.iter().zip(&base).map(|(a, b)| (a - b) / h).collect())
        })
        .collect::<Result<_>>()?;
    let rows = base.len();
    Ok(DMatrix::from_fn(rows, x.len(), |r, c| columns[c][r]))
}

/// Monodromy matrix of a converged orbit by perturbing the anchor one
/// collocation value at a time (`2N + 1` flows).
pub fn monodromy_matrix(
    p: &ModelParameters,
    grid: &SpectralGrid,
    orbit: &PeriodicOrbit,
    dt: f64,
    h: f64,
) -> Result<MonodromyResult> {
    orbit.anchor.check_len(grid.n())?;
    if !(orbit.period > 0.0) || !(dt > 0.0) || !(h > 0.0) {
        return Err(Error::InvalidArgument("period, dt and h must be positive".into()));
    }
    let (steps, step) = exact_steps(orbit.period, dt);
    let flow = |x: &[f64]| -> Result<Vec<f64>> {
        let mut stepper = Stepper::new(grid);
        let mut y = x.to_vec();
        stepper.advance(p, &mut y, step, steps, 0.0)?;
        Ok(y)
    };
    let x = orbit.anchor.stacked();
    let matrix = finite_difference_jacobian(flow, &x, h)?;
    let mut result = MonodromyResult::from_matrix(matrix)?;

    // a pattern that breaks translation symmetry carries a neutral shift mode
    let d1 = grid.derivative(&orbit.anchor.u1)?;
    let d2 = grid.derivative(&orbit.anchor.u2)?;
    let shift: Vec<f64> = d1.into_iter().chain(d2).collect();
    let shift_norm = norm(&shift);
    if shift_norm > 1e-8 {
        let image = &result.matrix * nalgebra::DVector::from_column_slice(&shift);
        let defect = image.iter().zip(&shift).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if defect < 0.05 * shift_norm {
            result.translation_index = closest_to_one(&result.multipliers, Some(result.trivial_index));
        }
    }
    Ok(result)
}

/// Names the way an orbit loses stability, ignoring the trivial and
/// translation multipliers. Multipliers with `|Im| < tol_angle` count as real.
pub fn classify_orbit_bifurcation(result: &MonodromyResult, tol_angle: f64) -> OrbitBifurcation {
    let critical = result.nontrivial().max_by(|a, b| a.norm().total_cmp(&b.norm()));
    match critical {
        Some(mu) if mu.norm() > 1.0 => {
            let kind = if mu.im.abs() < tol_angle {
                if mu.re < 0.0 {
                    BifurcationKind::PeriodDoubling
                } else {
                    BifurcationKind::Fold
                }
            } else {
                BifurcationKind::NeimarkSacker
            };
            OrbitBifurcation { kind, critical_multiplier: mu }
        }
        Some(mu) => OrbitBifurcation { kind: BifurcationKind::None, critical_multiplier: mu },
        None => OrbitBifurcation { kind: BifurcationKind::None, critical_multiplier: Complex64::default() },
    }
}
