//! Pointwise algebra of the reaction-diffusion model.
//!
//! Both species evolve as
//!
//! ```text
//! du_i/dt = Lap(mu_i(u1, u2)) + R_i(u1, u2)
//! ```
//!
//! with cubic chemical potentials `mu_i` and the BVAM reaction terms `R_i`.
//! The energy functional `E` and its dissipation law live here as well since
//! they are built from the same potentials.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::spectral::SpectralGrid;

/// Reaction and diffusion coefficients plus the domain half-length.
///
/// The domain is `[-lx, lx]` with periodic boundaries. `c` is the single
/// bifurcation parameter swept by the continuation drivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub eta: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub h: f64,
    pub d1: f64,
    pub d2: f64,
    pub d11: f64,
    pub d22: f64,
    pub d12: f64,
    pub lx: f64,
}

impl ModelParameters {
    /// Shared reaction coefficients with linear diffusion only, at `c`.
    pub fn linear(c: f64) -> Self {
        Self {
            eta: 1.0,
            a: -1.0,
            b: -1.5,
            c,
            h: 3.0,
            d1: 0.08,
            d2: 1.0,
            d11: 0.0,
            d22: 0.0,
            d12: 0.0,
            lx: 5.0,
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.eta, self.a, self.b, self.c, self.h, self.d1, self.d2, self.d11, self.d22,
            self.d12, self.lx,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        if self.lx <= 0.0 {
            return Err(Error::InvalidArgument(format!("Lx must be positive, got {}", self.lx)));
        }
        for (name, v) in [
            ("d1", self.d1),
            ("d2", self.d2),
            ("d11", self.d11),
            ("d22", self.d22),
            ("d12", self.d12),
        ] {
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// The four diffusion regimes studied for this model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    Linear,
    SelfU1,
    SelfU2,
    Cross,
}

impl RegimeLabel {
    pub const ALL: [RegimeLabel; 4] =
        [RegimeLabel::Linear, RegimeLabel::SelfU1, RegimeLabel::SelfU2, RegimeLabel::Cross];

    pub fn as_str(self) -> &'static str {
        match self {
            RegimeLabel::Linear => "linear",
            RegimeLabel::SelfU1 => "self_u1",
            RegimeLabel::SelfU2 => "self_u2",
            RegimeLabel::Cross => "cross",
        }
    }
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegimeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => Ok(RegimeLabel::Linear),
            "self_u1" => Ok(RegimeLabel::SelfU1),
            "self_u2" => Ok(RegimeLabel::SelfU2),
            "cross" => Ok(RegimeLabel::Cross),
            other => Err(Error::InvalidArgument(format!(
                "unknown regime `{other}` (expected linear, self_u1, self_u2 or cross)"
            ))),
        }
    }
}

/// A labelled parameter preset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionRegime {
    pub label: RegimeLabel,
    pub parameters: ModelParameters,
}

impl DiffusionRegime {
    /// Preset values for `label` at bifurcation parameter `c`.
    pub fn preset(label: RegimeLabel, c: f64) -> Self {
        let mut p = ModelParameters::linear(c);
        match label {
            RegimeLabel::Linear => {}
            RegimeLabel::SelfU1 => p.d11 = 0.07,
            RegimeLabel::SelfU2 => p.d22 = 0.05,
            RegimeLabel::Cross => p.d12 = 0.02,
        }
        Self { label, parameters: p }
    }

    pub fn at(&self, c: f64) -> Self {
        Self { label: self.label, parameters: self.parameters.with_c(c) }
    }
}

/// Values of both species on the collocation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPair {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl FieldPair {
    pub fn new(u1: Vec<f64>, u2: Vec<f64>) -> Result<Self> {
        if u1.len() != u2.len() {
            return Err(Error::LengthMismatch { expected: u1.len(), found: u2.len() });
        }
        if u1.is_empty() || u1.len() % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "field length must be even and positive, got {}",
                u1.len()
            )));
        }
        let state = Self { u1, u2 };
        if !state.is_finite() {
            return Err(Error::NonFinite("field pair"));
        }
        Ok(state)
    }

    pub fn zeros(n: usize) -> Self {
        Self { u1: vec![0.0; n], u2: vec![0.0; n] }
    }

    /// Builds a state from a stacked `[u1, u2]` vector of length `2N`.
    pub fn from_stacked(x: &[f64]) -> Result<Self> {
        if x.len() % 2 != 0 {
            return Err(Error::InvalidArgument("stacked state must have even length".into()));
        }
        let n = x.len() / 2;
        Self::new(x[..n].to_vec(), x[n..].to_vec())
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.len());
        out.extend_from_slice(&self.u1);
        out.extend_from_slice(&self.u2);
        out
    }

    pub fn len(&self) -> usize {
        self.u1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u1.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.u1.iter().chain(&self.u2).all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.u1.iter().chain(&self.u2).fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Euclidean norm of the stacked vector.
    pub fn norm(&self) -> f64 {
        self.u1.iter().chain(&self.u2).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &FieldPair) -> f64 {
        self.u1
            .iter()
            .chain(&self.u2)
            .zip(other.u1.iter().chain(&other.u2))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.u1.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: self.u1.len() });
        }
        if self.u2.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: self.u2.len() });
        }
        Ok(())
    }
}

pub fn reaction_terms(p: &ModelParameters, u1: f64, u2: f64) -> (f64, f64) {
    let uv = u1 * u2;
    let uvv = uv * u2;
    let r1 = p.eta * (u1 + p.a * u2 - p.c * uv - uvv);
    let r2 = p.eta * (p.b * u2 + p.h * u1 + p.c * uv + uvv);
    (r1, r2)
}

pub fn chemical_potentials(p: &ModelParameters, u1: f64, u2: f64) -> (f64, f64) {
    let mu1 = p.d1 * u1 + p.d11 * u1 * u1 * u1 + p.d12 * u2 * u2 * u1;
    let mu2 = p.d2 * u2 + p.d22 * u2 * u2 * u2 + p.d12 * u1 * u1 * u2;
    (mu1, mu2)
}

/// `d(R1, R2)/d(u1, u2)`, row-major.
pub fn reaction_jacobian(p: &ModelParameters, u1: f64, u2: f64) -> [[f64; 2]; 2] {
    let e = p.eta;
    [
        [e * (1.0 - p.c * u2 - u2 * u2), e * (p.a - p.c * u1 - 2.0 * u1 * u2)],
        [e * (p.h + p.c * u2 + u2 * u2), e * (p.b + p.c * u1 + 2.0 * u1 * u2)],
    ]
}

/// `d(mu1, mu2)/d(u1, u2)`, row-major. Symmetric since the potentials
/// derive from the energy density.
pub fn potential_jacobian(p: &ModelParameters, u1: f64, u2: f64) -> [[f64; 2]; 2] {
    let off = 2.0 * p.d12 * u1 * u2;
    [
        [p.d1 + 3.0 * p.d11 * u1 * u1 + p.d12 * u2 * u2, off],
        [off, p.d2 + 3.0 * p.d22 * u2 * u2 + p.d12 * u1 * u1],
    ]
}

fn energy_density(p: &ModelParameters, u1: f64, u2: f64) -> f64 {
    let s1 = u1 * u1;
    let s2 = u2 * u2;
    0.5 * p.d1 * s1 + 0.5 * p.d2 * s2 + 0.25 * p.d11 * s1 * s1 + 0.25 * p.d22 * s2 * s2
        + 0.5 * p.d12 * s1 * s2
}

/// Rectangle-rule quadrature of the energy density over the periodic domain.
pub fn energy(p: &ModelParameters, grid: &SpectralGrid, state: &FieldPair) -> Result<f64> {
    state.check_len(grid.n())?;
    let sum: f64 =
        state.u1.iter().zip(&state.u2).map(|(&u1, &u2)| energy_density(p, u1, u2)).sum();
    Ok(sum * grid.dx())
}

/// Right-hand side of the energy law,
/// `-sum_i ||grad mu_i||^2 + sum_i (R_i, mu_i)`.
///
/// The gradient norm is evaluated from the Fourier coefficients of `mu_i`
/// (Parseval), which makes it the exact counterpart of the spectral
/// Laplacian, Nyquist mode included.
pub fn energy_dissipation_rhs(
    p: &ModelParameters,
    grid: &SpectralGrid,
    state: &FieldPair,
) -> Result<f64> {
    state.check_len(grid.n())?;
    let n = grid.n();
    let mut mu1 = Vec::with_capacity(n);
    let mut mu2 = Vec::with_capacity(n);
    let mut reaction_work = 0.0;
    for (&u1, &u2) in state.u1.iter().zip(&state.u2) {
        let (m1, m2) = chemical_potentials(p, u1, u2);
        let (r1, r2) = reaction_terms(p, u1, u2);
        reaction_work += r1 * m1 + r2 * m2;
        mu1.push(m1);
        mu2.push(m2);
    }
    reaction_work *= grid.dx();
    let gradient = grid.gradient_norm_sq(&mu1)? + grid.gradient_norm_sq(&mu2)?;
    Ok(reaction_work - gradient)
}
