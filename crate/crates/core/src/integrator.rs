//! Classical fourth-order Runge-Kutta in time and the flow map built on it.
//!
//! The stage combinations are carried out on collocation values. The
//! transform is linear, so this produces the same iterates as running the
//! stages on Fourier coefficients while saving one transform pair per stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{energy, FieldPair, ModelParameters};
use crate::spectral::{RhsEvaluator, SpectralGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub record_every: usize,
    pub divergence_threshold: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { dt: 5e-4, record_every: 1, divergence_threshold: 1e3 }
    }
}

impl IntegratorConfig {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::InvalidArgument("divergence threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<FieldPair>,
    pub energies: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&FieldPair> {
        self.states.last()
    }

    fn push(&mut self, t: f64, state: FieldPair, e: f64) {
        self.times.push(t);
        self.states.push(state);
        self.energies.push(e);
    }
}

/// RK4 stepper with preallocated stage buffers, working on stacked
/// `[u1, u2]` vectors.
pub(crate) struct Stepper {
    rhs: RhsEvaluator,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
    pub(crate) divergence_threshold: f64,
}

impl Stepper {
    pub(crate) fn new(grid: &SpectralGrid) -> Self {
        let len = 2 * grid.n();
        Self {
            rhs: RhsEvaluator::new(grid),
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            stage: vec![0.0; len],
            divergence_threshold: IntegratorConfig::default().divergence_threshold,
        }
    }

    /// Right-hand side at `x`.
    pub(crate) fn rhs(&mut self, p: &ModelParameters, x: &[f64], out: &mut [f64]) {
        self.rhs.eval(p, x, out);
    }

    /// Advances `x` in place by one step. Returns the max-abs of the new state.
    pub(crate) fn step(&mut self, p: &ModelParameters, x: &mut [f64], dt: f64) -> f64 {
        let half = 0.5 * dt;
        self.rhs.eval(p, x, &mut self.k1);
        for i in 0..x.len() {
            self.stage[i] = x[i] + half * self.k1[i];
        }
        self.rhs.eval(p, &self.stage, &mut self.k2);
        for i in 0..x.len() {
            self.stage[i] = x[i] + half * self.k2[i];
        }
        self.rhs.eval(p, &self.stage, &mut self.k3);
        for i in 0..x.len() {
            self.stage[i] = x[i] + dt * self.k3[i];
        }
        self.rhs.eval(p, &self.stage, &mut self.k4);
        let sixth = dt / 6.0;
        let mut max_abs = 0.0_f64;
        for i in 0..x.len() {
            x[i] += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
            // NaN fails every comparison, so fold it into the max explicitly
            let a = x[i].abs();
            if !(a <= max_abs) {
                max_abs = if a.is_nan() { f64::INFINITY } else { a };
            }
        }
        max_abs
    }

    /// Takes `steps` steps of size `dt`, checking for blow-up after each.
    pub(crate) fn advance(
        &mut self,
        p: &ModelParameters,
        x: &mut [f64],
        dt: f64,
        steps: usize,
        t0: f64,
    ) -> Result<()> {
        for s in 0..steps {
            let max_abs = self.step(p, x, dt);
            if max_abs > self.divergence_threshold {
                return Err(Error::Divergence { time: t0 + (s + 1) as f64 * dt, max_abs });
            }
        }
        Ok(())
    }
}

fn check_inputs(grid: &SpectralGrid, state: &FieldPair, dt: f64) -> Result<()> {
    state.check_len(grid.n())?;
    if !state.is_finite() {
        return Err(Error::NonFinite("initial state"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

/// One RK4 step.
pub fn rk4_step(
    p: &ModelParameters,
    grid: &SpectralGrid,
    state: &FieldPair,
    dt: f64,
) -> Result<FieldPair> {
    check_inputs(grid, state, dt)?;
    let mut stepper = Stepper::new(grid);
    let mut x = state.stacked();
    stepper.advance(p, &mut x, dt, 1, 0.0)?;
    FieldPair::from_stacked(&x)
}

/// Number of steps and the adjusted step size hitting `t` exactly.
pub fn exact_steps(t: f64, dt: f64) -> (usize, f64) {
    // guard against T/dt landing a hair above an integer through rounding
    let steps = ((t / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (steps, t / steps as f64)
}

/// Integrates from `t = 0` to `t_end`, recording every `record_every`
/// steps plus the initial and final states.
pub fn integrate(
    p: &ModelParameters,
    grid: &SpectralGrid,
    state0: &FieldPair,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_inputs(grid, state0, cfg.dt)?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
    }
    let mut stepper = Stepper::new(grid);
    stepper.divergence_threshold = cfg.divergence_threshold;
    let mut x = state0.stacked();
    let mut traj = Trajectory::default();
    traj.push(0.0, state0.clone(), energy(p, grid, state0)?);

    let full_steps = ((t_end / cfg.dt) * (1.0 - 1e-12)).floor() as usize;
    let mut t = 0.0;
    let mut step = 0usize;
    while step < full_steps {
        stepper.advance(p, &mut x, cfg.dt, 1, t)?;
        step += 1;
        t = step as f64 * cfg.dt;
        if step % cfg.record_every == 0 {
            let s = FieldPair::from_stacked(&x)?;
            let e = energy(p, grid, &s)?;
            traj.push(t, s, e);
        }
    }
    let remaining = t_end - t;
    if remaining > 1e-12 * t_end {
        stepper.advance(p, &mut x, remaining, 1, t)?;
    }
    if traj.times.last().map_or(true, |&last| last < t_end - 1e-12 * t_end) {
        let s = FieldPair::from_stacked(&x)?;
        let e = energy(p, grid, &s)?;
        traj.push(t_end, s, e);
    }
    Ok(traj)
}

/// `phi^T(state0)`: the state after time `t`, with `dt` shrunk so that a
/// whole number of steps lands on `t`.
pub fn flow_map(
    p: &ModelParameters,
    grid: &SpectralGrid,
    state0: &FieldPair,
    t: f64,
    dt: f64,
) -> Result<FieldPair> {
    check_inputs(grid, state0, dt)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("flow time must be positive, got {t}")));
    }
    let (steps, h) = exact_steps(t, dt);
    let mut stepper = Stepper::new(grid);
    let mut x = state0.stacked();
    stepper.advance(p, &mut x, h, steps, 0.0)?;
    FieldPair::from_stacked(&x)
}
