//! Phase-space attractors, spectra and chaos indicators computed from
//! trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::model::{energy_dissipation_rhs, FieldPair, ModelParameters};
use crate::spectral::{amplitude_spectrum, SpectralGrid};

/// Minimum signal length accepted by [`chaos_indicator`].
pub const MIN_CHAOS_SAMPLES: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttractorSample {
    pub t: f64,
    pub u1_center: f64,
    pub u2_center: f64,
    pub energy: f64,
    pub dedt: f64,
    /// `(t - tau) / (t_end - tau)`.
    pub t_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosReport {
    pub broadband: bool,
    pub dominant_power_fraction: f64,
    pub bounded: bool,
    pub max_abs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosThresholds {
    /// Broadband iff the dominant bin carries less than this power fraction.
    pub broadband: f64,
    /// Bounded iff every sample stays below this magnitude.
    pub bound: f64,
}

impl Default for ChaosThresholds {
    fn default() -> Self {
        Self { broadband: 0.5, bound: 10.0 }
    }
}

/// Indices of the recorded samples with `t >= tau`, plus the normalizer.
fn window(traj: &Trajectory, tau: f64) -> Result<(usize, f64, f64)> {
    let t_end = *traj.times.last().ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    if !(tau < t_end) {
        return Err(Error::InvalidArgument(format!(
            "transient {tau} must end before the final time {t_end}"
        )));
    }
    let start = traj.times.partition_point(|&t| t < tau);
    let t0 = traj.times[start].max(tau);
    Ok((start, t0, t_end))
}

fn t_norm(t: f64, t0: f64, t_end: f64) -> f64 {
    if t_end > t0 {
        ((t - t0) / (t_end - t0)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Centered differences, one-sided at the ends.
fn rate(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let (a, b) = match (i, n) {
                (_, 1) => return 0.0,
                (0, _) => (0, 1),
                (i, n) if i == n - 1 => (n - 2, n - 1),
                (i, _) => (i - 1, i + 1),
            };
            (values[b] - values[a]) / (times[b] - times[a])
        })
        .collect()
}

/// `(u1(0, t), u2(0, t))` for `t >= tau`. The energy rate attached to each
/// sample is a finite difference of the recorded energies.
pub fn local_attractor(traj: &Trajectory, grid: &SpectralGrid, tau: f64) -> Result<Vec<AttractorSample>> {
    let (start, t0, t_end) = window(traj, tau)?;
    let centre = grid.origin_index();
    let times = &traj.times[start..];
    let rates = rate(times, &traj.energies[start..]);
    traj.states[start..]
        .iter()
        .zip(times)
        .zip(&traj.energies[start..])
        .zip(rates)
        .map(|(((s, &t), &e), dedt)| {
            s.check_len(grid.n())?;
            Ok(AttractorSample {
                t,
                u1_center: s.u1[centre],
                u2_center: s.u2[centre],
                energy: e,
                dedt,
                t_norm: t_norm(t, t0, t_end),
            })
        })
        .collect()
}

/// `(E(t), dE/dt(t))` for `t >= tau`, with the rate taken from the energy
/// law rather than differentiated numerically.
pub fn energy_attractor(
    p: &ModelParameters,
    grid: &SpectralGrid,
    traj: &Trajectory,
    tau: f64,
) -> Result<Vec<AttractorSample>> {
    let mut samples = local_attractor(traj, grid, tau)?;
    let (start, _, _) = window(traj, tau)?;
    for (sample, state) in samples.iter_mut().zip(&traj.states[start..]) {
        sample.dedt = energy_dissipation_rhs(p, grid, state)?;
    }
    Ok(samples)
}

/// Spectral line test on a uniformly sampled signal.
pub fn chaos_indicator(signal: &[f64], sample_dt: f64) -> Result<ChaosReport> {
    chaos_indicator_with(signal, sample_dt, &ChaosThresholds::default())
}

pub fn chaos_indicator_with(signal: &[f64], sample_dt: f64, th: &ChaosThresholds) -> Result<ChaosReport> {
    if signal.len() < MIN_CHAOS_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "chaos indicator needs at least {MIN_CHAOS_SAMPLES} samples, got {}",
            signal.len()
        )));
    }
    let (_, amps) = amplitude_spectrum(signal, sample_dt)?;
    let powers: Vec<f64> = amps.iter().skip(1).map(|a| a * a).collect();
    let total: f64 = powers.iter().sum();
    let fraction = if total > 0.0 { powers.iter().copied().fold(0.0, f64::max) / total } else { 1.0 };
    let max_abs = signal.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(ChaosReport {
        broadband: fraction < th.broadband,
        dominant_power_fraction: fraction,
        bounded: max_abs < th.bound,
        max_abs,
    })
}

/// Smallest distance in the `(u1, u2)` plane between a sample of the first
/// quarter and a sample of the last quarter. Near zero for a curve that is
/// revisited exactly.
pub fn closure_defect(samples: &[AttractorSample]) -> Result<f64> {
    if samples.len() < 4 {
        return Err(Error::InvalidArgument("closure defect needs at least 4 samples".into()));
    }
    let q = samples.len() / 4;
    let first = &samples[..q];
    let last = &samples[samples.len() - q..];
    Ok(first
        .iter()
        .flat_map(|a| last.iter().map(move |b| (a.u1_center - b.u1_center).hypot(a.u2_center - b.u2_center)))
        .fold(f64::INFINITY, f64::min))
}

/// Largest `|u|` over both species and all recorded states.
pub fn max_abs_state(states: &[FieldPair]) -> f64 {
    states.iter().map(FieldPair::max_abs).fold(0.0, f64::max)
}

/// Spatial amplitude spectrum `2/N |F(u - mean u)|` against the angular
/// wavenumber `k`.
pub fn spatial_spectrum(grid: &SpectralGrid, u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if u.len() != grid.n() {
        return Err(Error::LengthMismatch { expected: grid.n(), found: u.len() });
    }
    let (f, a) = amplitude_spectrum(u, grid.dx())?;
    Ok((f.iter().map(|f| 2.0 * std::f64::consts::PI * f).collect(), a))
}

/// Wavenumber of the strongest non-constant spatial mode.
pub fn dominant_wavenumber(grid: &SpectralGrid, u: &[f64]) -> Result<f64> {
    let (k, a) = spatial_spectrum(grid, u)?;
    let (i, _) = a
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|x, y| x.1.total_cmp(y.1))
        .ok_or_else(|| Error::InvalidArgument("grid too small for a spectrum".into()))?;
    Ok(k[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate, IntegratorConfig};
    use crate::model::{energy, DiffusionRegime, RegimeLabel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn constant_trajectory(grid: &SpectralGrid, len: usize) -> Trajectory {
        let s = FieldPair::new(vec![0.3; grid.n()], vec![-0.2; grid.n()]).unwrap();
        let mut t = Trajectory::default();
        for i in 0..len {
            t.times.push(i as f64 * 0.1);
            t.states.push(s.clone());
            t.energies.push(1.5);
        }
        t
    }

    #[test]
    fn stationary_trajectory_is_a_point() {
        let g = SpectralGrid::new(16, 5.0).unwrap();
        let traj = constant_trajectory(&g, 20);
        let a = local_attractor(&traj, &g, 0.0).unwrap();
        assert_eq!(a.len(), 20);
        assert!(a.iter().all(|s| s.u1_center == 0.3 && s.u2_center == -0.2 && s.dedt == 0.0));
        assert_eq!(a[0].t_norm, 0.0);
        assert_eq!(a[19].t_norm, 1.0);
        assert!(a.windows(2).all(|w| w[1].t_norm > w[0].t_norm));
        let a = local_attractor(&traj, &g, 1.0).unwrap();
        assert_eq!(a.len(), 10);
        assert!(local_attractor(&traj, &g, 2.0).is_err());
    }

    #[test]
    fn zero_state_energy_attractor_is_origin() {
        let g = SpectralGrid::new(16, 5.0).unwrap();
        let p = ModelParameters::linear(-1.0);
        let traj = integrate(&p, &g, &FieldPair::zeros(16), 1.0, &IntegratorConfig { dt: 0.01, record_every: 10, ..Default::default() }).unwrap();
        let a = energy_attractor(&p, &g, &traj, 0.0).unwrap();
        assert!(a.iter().all(|s| s.energy == 0.0 && s.dedt == 0.0));
    }

    #[test]
    fn origin_sample_matches_interpolant() {
        let g = SpectralGrid::new(32, 5.0).unwrap();
        let u1: Vec<f64> = g.points().iter().map(|x| (0.7 * x).sin() + 0.2 * (PI * x / 5.0).cos()).collect();
        let u2: Vec<f64> = g.points().iter().map(|x| x.cos()).collect();
        let s = FieldPair::new(u1.clone(), u2).unwrap();
        let traj = Trajectory { times: vec![0.0, 1.0], states: vec![s.clone(), s], energies: vec![0.0, 0.0] };
        let a = local_attractor(&traj, &g, 0.0).unwrap();
        // evaluating the trigonometric interpolant at x = 0 returns the collocation value
        let coeffs = g.forward_transform(&u1).unwrap();
        let at_zero: f64 = coeffs.coefficients.iter().map(|c| c.re).sum();
        assert!((a[0].u1_center - at_zero).abs() < 1e-12);
        assert_eq!(g.points()[g.origin_index()], 0.0);
    }

    #[test]
    fn energy_rate_matches_differences_of_energy() {
        let g = SpectralGrid::new(32, 5.0).unwrap();
        let p = DiffusionRegime::preset(RegimeLabel::Cross, -1.0).parameters;
        let s0 = crate::equilibrium::cosine_guess(&g, [0.5, 0.4], [3, 2]);
        let traj = integrate(&p, &g, &s0, 0.2, &IntegratorConfig { dt: 1e-4, record_every: 1, ..Default::default() }).unwrap();
        let exact = energy_attractor(&p, &g, &traj, 0.0).unwrap();
        let fd = local_attractor(&traj, &g, 0.0).unwrap();
        for i in 1..exact.len() - 1 {
            let scale = exact[i].dedt.abs().max(1e-3);
            assert!((exact[i].dedt - fd[i].dedt).abs() < 1e-5 * scale.max(1.0), "i={i}");
        }
        assert!((exact[0].energy - energy(&p, &g, &s0).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn cosine_is_a_single_line() {
        let dt = 0.05;
        let n = 2048;
        // 64 full periods in the window
        let f = 64.0 / (n as f64 * dt);
        let s: Vec<f64> = (0..n).map(|i| 3.0 + 0.7 * (2.0 * PI * f * i as f64 * dt).cos()).collect();
        let r = chaos_indicator(&s, dt).unwrap();
        assert!((r.dominant_power_fraction - 1.0).abs() < 1e-9);
        assert!(!r.broadband);
        assert!(r.bounded);
    }

    #[test]
    fn white_noise_is_broadband() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s: Vec<f64> = (0..4096).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = chaos_indicator(&s, 0.1).unwrap();
        assert!(r.dominant_power_fraction < 0.05, "{}", r.dominant_power_fraction);
        assert!(r.broadband);
    }

    #[test]
    fn short_signal_rejected() {
        assert!(chaos_indicator(&[0.0; 1000], 0.1).is_err());
    }

    #[test]
    fn unbounded_flag() {
        let s: Vec<f64> = (0..1024).map(|i| i as f64 * 0.02).collect();
        assert!(!chaos_indicator(&s, 1.0).unwrap().bounded);
    }

    #[test]
    fn closure_of_a_circle_and_a_spiral() {
        let mk = |r: &dyn Fn(f64) -> f64| -> Vec<AttractorSample> {
            (0..20000)
                .map(|i| {
                    let t = i as f64 * 0.01;
                    AttractorSample { t, u1_center: r(t) * t.cos(), u2_center: r(t) * t.sin(), energy: 0.0, dedt: 0.0, t_norm: 0.0 }
                })
                .collect()
        };
        let circle = closure_defect(&mk(&|_| 1.0)).unwrap();
        let spiral = closure_defect(&mk(&|t| 1.0 + 0.01 * t)).unwrap();
        assert!(circle < 1e-3, "{circle}");
        assert!(spiral > 1.0);
    }

    #[test]
    fn dominant_wavenumber_of_three_stripes() {
        let g = SpectralGrid::new(64, 5.0).unwrap();
        let u: Vec<f64> = g.points().iter().map(|x| 0.4 * (3.0 * PI * x / 5.0).cos()).collect();
        let k = dominant_wavenumber(&g, &u).unwrap();
        assert!((k - 3.0 * PI / 5.0).abs() < 1e-12);
        let (_, a) = spatial_spectrum(&g, &u).unwrap();
        assert!((a[3] - 0.4).abs() < 1e-12);
    }
}
