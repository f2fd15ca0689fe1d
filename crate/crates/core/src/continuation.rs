//! Natural-parameter continuation in `C` for equilibria and periodic orbits.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    cosine_guess, leading_mode, newton_krylov_solve, stability_spectrum, NewtonConfig,
    StabilityReport, STABILITY_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::integrator::{flow_map, Stepper};
use crate::linalg;
use crate::model::{energy, DiffusionRegime, FieldPair, ModelParameters};
use crate::orbit::{
    classify_orbit_bifurcation, monodromy_matrix, solve_orbit, BifurcationKind, MonodromyResult,
    OrbitBifurcation, PeriodicOrbit, ShootingConfig,
};
use crate::spectral::SpectralGrid;

/// Distance, in multiples of the shooting tolerance, that separates a
/// doubled cycle from the single cycle traversed twice.
const SINGLE_CYCLE_FACTOR: f64 = 20.0;

/// Return distance near `2T`, in shooting tolerances, that triggers a solve.
const DOUBLED_RETURN_FACTOR: f64 = 200.0;

/// Relative change of the return time near `2T` between chunks below which
/// the trajectory counts as settled.
const RETURN_DRIFT_TOL: f64 = 1e-4;

/// Shooting solves tried before the doubled seed gives up.
const DOUBLED_ATTEMPTS: usize = 5;

/// Relative asymmetry below which a state counts as mirror-symmetric.
const MIRROR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Equilibrium,
    Orbit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchEvent {
    /// Stability lost through a complex pair.
    Hopf,
    /// Stability lost through a real eigenvalue.
    SteadyInstability,
    Fold,
    PeriodDoubling,
    NeimarkSacker,
}

impl BranchEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hopf => "hopf",
            Self::SteadyInstability => "steady_instability",
            Self::Fold => "fold",
            Self::PeriodDoubling => "period_doubling",
            Self::NeimarkSacker => "neimark_sacker",
        }
    }

    fn from_orbit(kind: BifurcationKind) -> Option<Self> {
        match kind {
            BifurcationKind::None => None,
            BifurcationKind::Fold => Some(Self::Fold),
            BifurcationKind::PeriodDoubling => Some(Self::PeriodDoubling),
            BifurcationKind::NeimarkSacker => Some(Self::NeimarkSacker),
        }
    }
}

impl std::str::FromStr for BranchEvent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "hopf" => Self::Hopf,
            "steady_instability" => Self::SteadyInstability,
            "fold" => Self::Fold,
            "period_doubling" => Self::PeriodDoubling,
            "neimark_sacker" => Self::NeimarkSacker,
            other => return Err(Error::Format(format!("unknown branch event '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Solution {
    Equilibrium(FieldPair),
    Orbit(PeriodicOrbit),
}

impl Solution {
    pub fn state(&self) -> &FieldPair {
        match self {
            Self::Equilibrium(s) => s,
            Self::Orbit(o) => &o.anchor,
        }
    }

    pub fn period(&self) -> Option<f64> {
        match self {
            Self::Equilibrium(_) => None,
            Self::Orbit(o) => Some(o.period),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Stability {
    Equilibrium(StabilityReport),
    /// The monodromy matrix itself is dropped to keep branches small; only
    /// its multipliers are kept.
    Orbit { monodromy: MonodromyResult, bifurcation: OrbitBifurcation },
}

impl Stability {
    pub fn is_stable(&self) -> bool {
        match self {
            Self::Equilibrium(r) => r.stable,
            Self::Orbit { bifurcation, .. } => bifurcation.kind == BifurcationKind::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub c: f64,
    pub solution: Solution,
    pub energy: f64,
    pub stability: Stability,
    pub event: Option<BranchEvent>,
    /// Newton iterations spent on this point (summed over sub-steps).
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub regime: DiffusionRegime,
    pub kind: BranchKind,
    pub points: Vec<BranchPoint>,
    /// Why the sweep ended early, if it did.
    pub truncated: Option<String>,
}

impl Branch {
    pub fn event_index(&self) -> Option<usize> {
        self.points.iter().position(|p| p.event.is_some())
    }

    pub fn event_point(&self) -> Option<&BranchPoint> {
        self.event_index().map(|i| &self.points[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSweepConfig {
    pub newton: NewtonConfig,
    pub threshold: f64,
    pub guess_amplitudes: [f64; 2],
    pub guess_modes: [u32; 2],
    pub max_halvings: usize,
}

impl Default for EquilibriumSweepConfig {
    fn default() -> Self {
        Self {
            newton: NewtonConfig::default(),
            threshold: STABILITY_THRESHOLD,
            guess_amplitudes: [0.5, 0.5],
            guess_modes: [3, 3],
            max_halvings: 4,
        }
    }
}

fn solve_equilibrium(
    p: &ModelParameters,
    grid: &SpectralGrid,
    guess: &FieldPair,
    cfg: &NewtonConfig,
) -> Result<(FieldPair, usize)> {
    let r = newton_krylov_solve(p, grid, guess, cfg)?;
    if !r.converged {
        return Err(Error::NotConverged { iterations: r.iterations, residual: r.residual_norm });
    }
    Ok((r.state, r.iterations))
}

/// Reaches `c_to` from a solution at `c_from` in `2^k` sub-steps, trying
/// `k = 0, 1, ..` up to `max_halvings`.
fn step_with_halving<S, F>(
    start: &S,
    c_from: f64,
    c_to: f64,
    max_halvings: usize,
    mut solve: F,
) -> Result<(S, usize)>
where
    S: Clone,
    F: FnMut(&S, f64) -> Result<(S, usize)>,
{
    let mut last_err = None;
    for k in 0..=max_halvings {
        let parts = 1usize << k;
        let mut current = start.clone();
        let mut total = 0;
        let mut failed = None;
        for j in 1..=parts {
            let c = c_from + (c_to - c_from) * j as f64 / parts as f64;
            match solve(&current, c) {
                Ok((next, it)) => {
                    current = next;
                    total += it;
                }
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        match failed {
            None => return Ok((current, total)),
            Some(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Sweeps `C` from `c_start` to `c_end` in `steps` equal steps, warm-starting
/// each Newton solve from the previous point. The first stable-to-unstable
/// flip is flagged. A point that fails even after step halving truncates the
/// branch; earlier points are kept.
pub fn continue_equilibria(
    regime: &DiffusionRegime,
    c_start: f64,
    c_end: f64,
    steps: usize,
    grid: &SpectralGrid,
    cfg: &EquilibriumSweepConfig,
) -> Result<Branch> {
    if steps == 0 {
        return Err(Error::InvalidArgument("continuation needs at least one step".into()));
    }
    let mut branch = Branch {
        regime: regime.at(c_start),
        kind: BranchKind::Equilibrium,
        points: Vec::with_capacity(steps + 1),
        truncated: None,
    };
    let guess = cosine_guess(grid, cfg.guess_amplitudes, cfg.guess_modes);
    let p0 = regime.at(c_start).parameters;
    let (mut state, mut iterations) = match solve_equilibrium(&p0, grid, &guess, &cfg.newton) {
        Ok(v) => v,
        Err(e) if e.is_solver_failure() => {
            branch.truncated = Some(format!("C = {c_start}: {e}"));
            return Ok(branch);
        }
        Err(e) => return Err(e),
    };
    let mut flagged = false;
    for i in 0..=steps {
        let c = c_start + (c_end - c_start) * i as f64 / steps as f64;
        let p = regime.at(c).parameters;
        if i > 0 {
            let c_prev = branch.points[i - 1].c;
            let solved = step_with_halving(&state, c_prev, c, cfg.max_halvings, |s, cc| {
                solve_equilibrium(&regime.at(cc).parameters, grid, s, &cfg.newton)
            });
            match solved {
                Ok((s, it)) => {
                    state = s;
                    iterations = it;
                }
                Err(e) if e.is_solver_failure() => {
                    branch.truncated = Some(format!("C = {c}: {e}"));
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let report = stability_spectrum(&p, grid, &state, cfg.threshold)?;
        let mut event = None;
        if !flagged && !report.stable && branch.points.last().is_some_and(|q| q.stability.is_stable()) {
            flagged = true;
            event = Some(if report.hopf_candidate { BranchEvent::Hopf } else { BranchEvent::SteadyInstability });
        }
        branch.points.push(BranchPoint {
            c,
            energy: energy(&p, grid, &state)?,
            solution: Solution::Equilibrium(state.clone()),
            stability: Stability::Equilibrium(report),
            event,
            iterations,
        });
    }
    Ok(branch)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSweepConfig {
    pub shooting: ShootingConfig,
    /// Finite-difference step of the monodromy columns.
    pub monodromy_h: f64,
    pub tol_angle: f64,
    pub max_steps: usize,
    pub max_halvings: usize,
}

impl Default for OrbitSweepConfig {
    fn default() -> Self {
        Self {
            shooting: ShootingConfig::default(),
            monodromy_h: 1e-3,
            tol_angle: 1e-3,
            max_steps: 500,
            max_halvings: 4,
        }
    }
}

fn orbit_point(
    p: &ModelParameters,
    grid: &SpectralGrid,
    c: f64,
    orbit: PeriodicOrbit,
    iterations: usize,
    cfg: &OrbitSweepConfig,
) -> Result<(BranchPoint, MonodromyResult)> {
    let monodromy = monodromy_matrix(p, grid, &orbit, cfg.shooting.dt, cfg.monodromy_h)?;
    let bifurcation = classify_orbit_bifurcation(&monodromy, cfg.tol_angle);
    let mut slim = monodromy.clone();
    slim.matrix = nalgebra::DMatrix::zeros(0, 0);
    let point = BranchPoint {
        c,
        energy: energy(p, grid, &orbit.anchor)?,
        event: BranchEvent::from_orbit(bifurcation.kind),
        solution: Solution::Orbit(orbit),
        stability: Stability::Orbit { monodromy: slim, bifurcation },
        iterations,
    };
    Ok((point, monodromy))
}

fn solve_converged(
    p: &ModelParameters,
    grid: &SpectralGrid,
    guess: &PeriodicOrbit,
    reference: &FieldPair,
    cfg: &ShootingConfig,
) -> Result<PeriodicOrbit> {
    let orbit = solve_orbit(p, grid, guess, reference, cfg)?;
    if !orbit.converged {
        return Err(Error::NotConverged { iterations: orbit.iterations, residual: orbit.residual_norm });
    }
    Ok(orbit)
}

/// Result of an orbit sweep: the branch plus the full monodromy matrix at
/// its last point, which seeds the next branch.
#[derive(Debug, Clone)]
pub struct OrbitSweep {
    pub branch: Branch,
    pub last_monodromy: Option<MonodromyResult>,
}

/// Steps `C` by `delta_c` from a converged orbit at `c_start`, re-solving
/// with the previous orbit as guess and phase reference, and stops at the
/// first point whose multipliers leave the unit circle.
pub fn continue_orbits(
    regime: &DiffusionRegime,
    branch_start: &PeriodicOrbit,
    c_start: f64,
    delta_c: f64,
    grid: &SpectralGrid,
    cfg: &OrbitSweepConfig,
) -> Result<OrbitSweep> {
    continue_orbits_observed(regime, branch_start, c_start, delta_c, grid, cfg, |_| {})
}

/// [`continue_orbits`] calling `observer` on every accepted point.
pub fn continue_orbits_observed<O: FnMut(&BranchPoint)>(
    regime: &DiffusionRegime,
    branch_start: &PeriodicOrbit,
    c_start: f64,
    delta_c: f64,
    grid: &SpectralGrid,
    cfg: &OrbitSweepConfig,
    mut observer: O,
) -> Result<OrbitSweep> {
    if !branch_start.converged {
        return Err(Error::InvalidArgument("orbit continuation needs a converged starting orbit".into()));
    }
    if !(delta_c != 0.0 && delta_c.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta_c must be nonzero, got {delta_c}")));
    }
    let mut branch = Branch {
        regime: regime.at(c_start),
        kind: BranchKind::Orbit,
        points: Vec::new(),
        truncated: None,
    };
    let p0 = regime.at(c_start).parameters;
    let (first, mut last_m) = orbit_point(&p0, grid, c_start, branch_start.clone(), 0, cfg)?;
    let mut done = first.event.is_some();
    observer(&first);
    branch.points.push(first);
    let mut orbit = branch_start.clone();
    let mut step = 0;
    while !done && step < cfg.max_steps {
        step += 1;
        let c = c_start + delta_c * step as f64;
        let c_prev = c_start + delta_c * (step - 1) as f64;
        let solved = step_with_halving(&orbit, c_prev, c, cfg.max_halvings, |o, cc| {
            let next = solve_converged(&regime.at(cc).parameters, grid, o, &o.anchor, &cfg.shooting)?;
            let it = next.iterations;
            Ok((next, it))
        });
        let (next, iterations) = match solved {
            Ok(v) => v,
            Err(e) if e.is_solver_failure() => {
                branch.truncated = Some(format!("C = {c}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        orbit = next;
        let p = regime.at(c).parameters;
        let (point, m) = match orbit_point(&p, grid, c, orbit.clone(), iterations, cfg) {
            Ok(v) => v,
            Err(e) if e.is_solver_failure() => {
                branch.truncated = Some(format!("C = {c}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        done = point.event.is_some();
        last_m = m;
        observer(&point);
        branch.points.push(point);
    }
    Ok(OrbitSweep { branch, last_monodromy: Some(last_m) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedConfig {
    pub shooting: ShootingConfig,
    /// Size of the push off the unstable state.
    pub perturbation: f64,
    /// Size of the push along the critical Floquet vector after a period
    /// doubling. Growth there is slow near onset, so it is larger.
    pub doubling_perturbation: f64,
    /// Minimum simulated time before the oscillation is examined.
    pub transient: f64,
    /// Hard cap on simulated time.
    pub max_transient: f64,
    /// Length of the windows compared to judge saturation.
    pub window: f64,
    /// Relative change of the energy swing between windows counted as settled.
    pub settle_tol: f64,
    /// Spacing of energy samples.
    pub sample_spacing: f64,
    /// The period guess; the detected peak spacing is snapped to the
    /// multiple of it closest to this value.
    pub period_guess: f64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            shooting: ShootingConfig::default(),
            perturbation: 1e-3,
            doubling_perturbation: 5e-2,
            transient: 50.0,
            max_transient: 3000.0,
            window: 30.0,
            settle_tol: 1e-2,
            sample_spacing: 0.01,
            period_guess: 3.0,
        }
    }
}

/// Summary of a sustained energy oscillation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillation {
    pub peak_spacing: f64,
    pub swing: f64,
    pub simulated: f64,
    pub settled: bool,
}

fn window_stats(energies: &[f64], spacing: f64) -> (f64, Option<f64>, usize) {
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let peaks: Vec<usize> = (1..energies.len().saturating_sub(1))
        .filter(|&i| energies[i] > energies[i - 1] && energies[i] >= energies[i + 1])
        .collect();
    let mean_spacing = if peaks.len() >= 2 {
        Some((peaks[peaks.len() - 1] - peaks[0]) as f64 * spacing / (peaks.len() - 1) as f64)
    } else {
        None
    };
    (max - min, mean_spacing, peaks.len())
}

/// Integrates `x` forward window by window until the swing of the energy
/// signal stops changing, and reports the oscillation found. Decaying or
/// absent oscillations are an error.
pub fn settle_oscillation(
    p: &ModelParameters,
    grid: &SpectralGrid,
    x: &mut FieldPair,
    cfg: &SeedConfig,
) -> Result<Oscillation> {
    if !(cfg.window > 0.0 && cfg.sample_spacing > 0.0 && cfg.max_transient >= cfg.window) {
        return Err(Error::InvalidArgument("seed windows must be positive and fit the budget".into()));
    }
    let dt = cfg.shooting.dt;
    let every = ((cfg.sample_spacing / dt).round() as usize).max(1);
    let spacing = every as f64 * dt;
    let per_window = ((cfg.window / spacing).round() as usize).max(4);
    let mut stepper = Stepper::new(grid);
    let mut y = x.stacked();
    let mut t = 0.0;
    let mut prev_swing: Option<f64> = None;
    let mut last = None;
    while t + cfg.window <= cfg.max_transient + 1e-9 {
        let mut energies = Vec::with_capacity(per_window);
        for _ in 0..per_window {
            stepper.advance(p, &mut y, dt, every, t)?;
            t += spacing;
            energies.push(energy(p, grid, &FieldPair::from_stacked(&y)?)?);
        }
        let (swing, peak_spacing, peaks) = window_stats(&energies, spacing);
        let level = energies.iter().map(|e| e.abs()).fold(1.0, f64::max);
        let alive = swing > 1e-8 * level && peaks >= 3;
        if let (true, Some(prev), Some(ps)) = (alive, prev_swing, peak_spacing) {
            if t >= cfg.transient && (swing - prev).abs() <= cfg.settle_tol * swing {
                *x = FieldPair::from_stacked(&y)?;
                return Ok(Oscillation { peak_spacing: ps, swing, simulated: t, settled: true });
            }
        }
        last = Some((alive, swing, peak_spacing, prev_swing));
        prev_swing = Some(swing);
    }
    *x = FieldPair::from_stacked(&y)?;
    match last {
        Some((true, swing, Some(ps), Some(prev))) if swing >= 0.9 * prev => {
            Ok(Oscillation { peak_spacing: ps, swing, simulated: t, settled: false })
        }
        _ => Err(Error::NoPeriodicity(format!(
            "no sustained oscillation of the energy within {} time units",
            cfg.max_transient
        ))),
    }
}

/// Time in `[(1 - spread) t_guess, (1 + spread) t_guess]` at which the
/// trajectory from `x` comes closest to `x`, refined by a parabola through
/// the sampled minimum. Returns the time and the distance there.
pub fn first_return_time(
    p: &ModelParameters,
    grid: &SpectralGrid,
    x: &FieldPair,
    t_guess: f64,
    spread: f64,
    dt: f64,
) -> Result<(f64, f64)> {
    if !(t_guess > 0.0 && spread > 0.0 && spread < 1.0 && dt > 0.0) {
        return Err(Error::InvalidArgument("bad first-return search window".into()));
    }
    let x0 = x.stacked();
    let mut y = x0.clone();
    let mut stepper = Stepper::new(grid);
    let lo = ((1.0 - spread) * t_guess / dt).floor() as usize;
    let hi = ((1.0 + spread) * t_guess / dt).ceil() as usize;
    stepper.advance(p, &mut y, dt, lo.saturating_sub(1), 0.0)?;
    let dist = |y: &[f64]| y.iter().zip(&x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let mut samples = Vec::with_capacity(hi - lo + 2);
    for _ in lo.saturating_sub(1)..=hi {
        stepper.advance(p, &mut y, dt, 1, 0.0)?;
        samples.push(dist(&y));
    }
    let (k, &dk) = samples
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty window");
    let step_index = lo.max(1) + k;
    let mut t = step_index as f64 * dt;
    if k > 0 && k + 1 < samples.len() {
        let (a, b, c) = (samples[k - 1], dk, samples[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom > 0.0 {
            t += 0.5 * dt * (a - c) / denom;
        }
    }
    Ok((t, dk))
}

fn snap_period(peak_spacing: f64, target: f64) -> f64 {
    let k = (target / peak_spacing).round().max(1.0);
    k * peak_spacing
}

/// Starts the orbit branch at an unstable equilibrium: pushes the state
/// along the leading eigenvector, simulates until the oscillation settles
/// and solves for the cycle.
///
/// `reference` is the phase reference, normally the last stable steady
/// state before the Hopf point. An exact equilibrium of the current
/// parameters makes the phase row vanish and freezes the period.
pub fn hopf_seed_orbit(
    regime: &DiffusionRegime,
    hopf_point: &BranchPoint,
    reference: &FieldPair,
    grid: &SpectralGrid,
    cfg: &SeedConfig,
) -> Result<PeriodicOrbit> {
    let (state, report) = match (&hopf_point.solution, &hopf_point.stability) {
        (Solution::Equilibrium(s), Stability::Equilibrium(r)) => (s, r),
        _ => return Err(Error::InvalidArgument("Hopf seeding needs an equilibrium point".into())),
    };
    let p = regime.at(hopf_point.c).parameters;
    let mode = leading_mode(&p, grid, state, report.leading())?;
    let mut x = FieldPair {
        u1: state.u1.iter().zip(&mode.u1).map(|(a, b)| a + cfg.perturbation * b).collect(),
        u2: state.u2.iter().zip(&mode.u2).map(|(a, b)| a + cfg.perturbation * b).collect(),
    };
    let osc = settle_oscillation(&p, grid, &mut x, cfg)?;
    let rough = snap_period(osc.peak_spacing, cfg.period_guess);
    let (period, _) = first_return_time(&p, grid, &x, rough, 0.25, cfg.shooting.dt)?;
    let guess = PeriodicOrbit::guess(x, period);
    solve_converged(&p, grid, &guess, reference, &cfg.shooting)
}

/// Relative distance of a state to its mirror image under `x -> -x`.
fn reflection_asymmetry(s: &FieldPair) -> f64 {
    let n = s.len();
    let d: f64 = (0..n)
        .map(|j| (s.u1[j] - s.u1[(n - j) % n]).powi(2) + (s.u2[j] - s.u2[(n - j) % n]).powi(2))
        .sum();
    d.sqrt() / s.norm().max(f64::MIN_POSITIVE)
}

/// Eigenvector for the critical multiplier. For a mirror-symmetric anchor
/// the search is restricted to mirror-symmetric vectors whenever such a
/// vector is still unstable: a push that breaks the symmetry lets the new
/// cycle drift along the symmetry group and shooting cannot close it.
fn push_direction(m: &DMatrix<f64>, critical: Complex64, anchor: &FieldPair) -> Result<DVector<Complex64>> {
    if reflection_asymmetry(anchor) > MIRROR_TOL {
        return linalg::eigenvector_near(m, critical);
    }
    let n = anchor.len();
    let even = |v: &mut DVector<Complex64>| {
        for block in 0..2 {
            let o = block * n;
            for j in 1..n / 2 {
                let avg = 0.5 * (v[o + j] + v[o + n - j]);
                v[o + j] = avg;
                v[o + n - j] = avg;
            }
        }
    };
    let v = linalg::eigenvector_near_within(m, critical, even)?;
    let mv = m.map(|x| Complex64::new(x, 0.0)) * &v;
    let mu = v.dotc(&mv) / v.dotc(&v);
    if mu.norm() > 1.0 {
        Ok(v)
    } else {
        linalg::eigenvector_near(m, critical)
    }
}

/// Seeds the period-doubled branch from an orbit that just lost stability
/// through period doubling: pushes along the critical Floquet vector,
/// simulates in chunks of ten periods and solves once the return time near
/// twice the old period stops drifting. Several doubled cycles can coexist
/// and a solve from a state still in transit may land on the wrong one.
///
/// The old cycle traversed twice also solves the doubled problem. A state
/// that has not moved away from it, before or after the solve, is rejected.
pub fn period_doubled_seed(
    regime: &DiffusionRegime,
    c: f64,
    orbit: &PeriodicOrbit,
    monodromy: &MonodromyResult,
    grid: &SpectralGrid,
    cfg: &SeedConfig,
) -> Result<PeriodicOrbit> {
    let p = regime.at(c).parameters;
    let dt = cfg.shooting.dt;
    let critical = monodromy
        .nontrivial()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .ok_or_else(|| Error::InvalidArgument("monodromy has no nontrivial multiplier".into()))?;
    let mut x = orbit.anchor.clone();
    if monodromy.matrix.nrows() == 2 * grid.n() {
        let v = push_direction(&monodromy.matrix, critical, &orbit.anchor)?;
        let peak = v.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        if peak > 0.0 {
            let n = grid.n();
            for i in 0..n {
                x.u1[i] += cfg.doubling_perturbation * v[i].re / peak;
                x.u2[i] += cfg.doubling_perturbation * v[n + i].re / peak;
            }
        }
    }
    let floor = SINGLE_CYCLE_FACTOR * cfg.shooting.tol;
    let gate = DOUBLED_RETURN_FACTOR * cfg.shooting.tol;
    let chunk = 10.0 * orbit.period;
    let mut simulated = 0.0;
    let mut attempts = 0;
    let mut previous: Option<f64> = None;
    let mut last_failure =
        Error::NoPeriodicity("the perturbed state stays on the single-period cycle".into());
    while simulated + chunk <= cfg.max_transient && attempts < DOUBLED_ATTEMPTS {
        x = flow_map(&p, grid, &x, chunk, dt)?;
        simulated += chunk;
        if flow_map(&p, grid, &x, orbit.period, dt)?.distance(&x) <= floor {
            continue;
        }
        let (period, gap) = first_return_time(&p, grid, &x, 2.0 * orbit.period, 0.25, dt)?;
        let settled = previous.is_some_and(|t| (period - t).abs() <= RETURN_DRIFT_TOL * period);
        previous = Some(period);
        if gap > gate || !settled {
            last_failure = Error::NoPeriodicity(format!("no settled return near twice the period (closest {gap:.2e})"));
            continue;
        }
        attempts += 1;
        let guess = PeriodicOrbit::guess(x.clone(), period);
        match solve_converged(&p, grid, &guess, &orbit.anchor, &cfg.shooting) {
            Ok(doubled) => {
                let half = flow_map(&p, grid, &doubled.anchor, 0.5 * doubled.period, dt)?;
                if half.distance(&doubled.anchor) > floor {
                    return Ok(doubled);
                }
                last_failure =
                    Error::NoPeriodicity("the doubled-period solve fell back onto the single-period cycle".into());
            }
            Err(e) => last_failure = e,
        }
    }
    Err(last_failure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RegimeLabel;

    #[test]
    fn halving_reaches_target_in_substeps() {
        // a "solver" that only accepts steps of at most 0.25
        let out = step_with_halving(&0.0_f64, 0.0, 1.0, 4, |&s, c| {
            if (c - s).abs() <= 0.25 + 1e-12 {
                Ok((c, 1))
            } else {
                Err(Error::NotConverged { iterations: 1, residual: 1.0 })
            }
        })
        .unwrap();
        assert_eq!(out, (1.0, 4));
        let fail = step_with_halving(&0.0_f64, 0.0, 1.0, 1, |&s, c| {
            if (c - s).abs() <= 0.25 { Ok((c, 1)) } else { Err(Error::LineSearch(1.0)) }
        });
        assert!(fail.is_err());
    }

    #[test]
    fn push_stays_mirror_symmetric_for_symmetric_anchor() {
        let n = 8;
        let g = SpectralGrid::new(n, 5.0).unwrap();
        let anchor = cosine_guess(&g, [0.5, 0.5], [1, 1]);
        assert!(reflection_asymmetry(&anchor) < 1e-14);
        // odd direction most unstable, even direction unstable too
        let mut m = DMatrix::<f64>::identity(2 * n, 2 * n) * 0.5;
        let odd: Vec<f64> = (0..2 * n).map(|i| (2.0 * std::f64::consts::PI * (i % n) as f64 / n as f64).sin()).collect();
        let even: Vec<f64> = (0..2 * n).map(|i| if i < n { (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos() } else { 0.0 }).collect();
        let (o, e) = (DVector::from_vec(odd), DVector::from_vec(even));
        m += &o * o.transpose() * (-1.6 / o.norm_squared());
        m += &e * e.transpose() * (-1.55 / e.norm_squared());
        let v = push_direction(&m, Complex64::new(-1.1, 0.0), &anchor).unwrap();
        let s = FieldPair::from_stacked(&v.iter().map(|z| z.re).collect::<Vec<_>>()).unwrap();
        assert!(reflection_asymmetry(&s) < 1e-10);
        assert!(s.u1[0].abs() > 0.1);
    }

    #[test]
    fn window_stats_of_cosine() {
        let spacing = 0.01;
        let e: Vec<f64> = (0..1000).map(|i| 2.0 + 0.5 * (2.0 * std::f64::consts::PI * i as f64 * spacing / 1.5).cos()).collect();
        let (swing, ps, peaks) = window_stats(&e, spacing);
        assert!((swing - 1.0).abs() < 1e-3);
        assert!((ps.unwrap() - 1.5).abs() < 0.02);
        assert!(peaks >= 6);
        assert!((snap_period(1.5, 3.0) - 3.0).abs() < 1e-12);
        assert!((snap_period(2.9, 3.0) - 2.9).abs() < 1e-12);
    }

    #[test]
    fn short_sweep_before_hopf_is_stable() {
        let g = SpectralGrid::new(32, 5.0).unwrap();
        let regime = DiffusionRegime::preset(RegimeLabel::Linear, -0.5);
        let b = continue_equilibria(&regime, -0.5, -0.6, 5, &g, &EquilibriumSweepConfig::default()).unwrap();
        assert_eq!(b.points.len(), 6);
        assert!(b.truncated.is_none());
        assert!(b.points.iter().all(|q| q.stability.is_stable() && q.event.is_none()));
        assert!(b.points.windows(2).all(|w| w[1].energy > w[0].energy));
        assert!(b.points.iter().skip(1).all(|q| q.iterations <= 5));
    }

    #[test]
    fn seeding_at_a_stable_point_finds_no_periodicity() {
        let g = SpectralGrid::new(32, 5.0).unwrap();
        let regime = DiffusionRegime::preset(RegimeLabel::Linear, -0.6);
        let b = continue_equilibria(&regime, -0.6, -0.6, 1, &g, &EquilibriumSweepConfig::default()).unwrap();
        let cfg = SeedConfig { max_transient: 120.0, ..SeedConfig::default() };
        let err = hopf_seed_orbit(&regime, &b.points[0], b.points[0].solution.state(), &g, &cfg);
        assert!(matches!(err, Err(Error::NoPeriodicity(_))), "{err:?}");
    }

    #[test]
    fn zero_steps_rejected() {
        let g = SpectralGrid::new(16, 5.0).unwrap();
        let regime = DiffusionRegime::preset(RegimeLabel::Linear, -0.5);
        assert!(continue_equilibria(&regime, -0.5, -1.5, 0, &g, &EquilibriumSweepConfig::default()).is_err());
    }
}
