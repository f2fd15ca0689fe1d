//! Collocation grid, FFT conventions and spectral operators.
//!
//! Conventions, shared by every module:
//!
//! * points `x_j = -Lx + j dx`, `j = 0..N`, `dx = 2 Lx / N`; `x = 0` sits at `j = N/2`;
//! * wavenumbers `k_m = 2 pi m / (2 Lx) = pi m / Lx` with `m` in FFT order
//!   `0, 1, .., N/2 - 1, -N/2, .., -1`;
//! * the forward transform carries the `1/N` factor and is taken relative to
//!   the physical origin, `c_m = (1/N) sum_j u_j exp(-i k_m x_j)`, so that
//!   `cos(k_m x)` has coefficient `1/2` at `+m` and `-m`;
//! * the inverse transform is the unnormalized synthesis sum;
//! * the Laplacian symbol is `-k_m^2`.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{chemical_potentials, reaction_terms, FieldPair, ModelParameters};

/// Imaginary residue tolerated (relative to `max(1, max |re|)`) when
/// returning from spectral to physical space.
pub const IMAGINARY_TOLERANCE: f64 = 1e-10;

#[derive(Clone)]
pub struct SpectralGrid {
    n: usize,
    lx: f64,
    dx: f64,
    points: Vec<f64>,
    wavenumbers: Vec<f64>,
    /// `-k_m^2 / N`: Laplacian symbol with the forward normalization folded in.
    laplacian_symbol: Vec<f64>,
    dealias: bool,
    forward: Arc<dyn Fft<f64>>,
    backward: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("n", &self.n)
            .field("lx", &self.lx)
            .field("dealias", &self.dealias)
            .finish()
    }
}

impl SpectralGrid {
    pub fn new(n: usize, lx: f64) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("N must be even and >= 2, got {n}")));
        }
        if !(lx > 0.0 && lx.is_finite()) {
            return Err(Error::InvalidGrid(format!("Lx must be positive, got {lx}")));
        }
        let dx = 2.0 * lx / n as f64;
        let points = (0..n).map(|j| -lx + j as f64 * dx).collect();
        let wavenumbers: Vec<f64> =
            (0..n).map(|i| PI * Self::mode_index(n, i) as f64 / lx).collect();
        let laplacian_symbol = wavenumbers.iter().map(|k| -k * k / n as f64).collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            lx,
            dx,
            points,
            wavenumbers,
            laplacian_symbol,
            dealias: false,
            forward: planner.plan_fft_forward(n),
            backward: planner.plan_fft_inverse(n),
        })
    }

    /// Enables 2/3-rule truncation of the right-hand side.
    pub fn with_dealiasing(mut self, on: bool) -> Self {
        self.dealias = on;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dealiased(&self) -> bool {
        self.dealias
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Collocation index of `x = 0`.
    pub fn origin_index(&self) -> usize {
        self.n / 2
    }

    /// Signed mode number of FFT slot `i`.
    pub fn mode_index(n: usize, i: usize) -> i64 {
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    fn dealias_cutoff(&self) -> usize {
        self.n / 3
    }

    // (-1)^m: phase shift between the FFT origin x_0 = -Lx and x = 0.
    fn origin_phase(i: usize) -> f64 {
        if i % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn forward_transform(&self, u: &[f64]) -> Result<SpectralField> {
        if u.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, found: u.len() });
        }
        let scale = 1.0 / self.n as f64;
        let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        for (i, c) in buf.iter_mut().enumerate() {
            *c *= scale * Self::origin_phase(i);
        }
        Ok(SpectralField { coefficients: buf })
    }

    pub fn inverse_transform(&self, f: &SpectralField) -> Result<Vec<f64>> {
        if f.coefficients.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, found: f.coefficients.len() });
        }
        let mut buf: Vec<Complex64> = f
            .coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| c * Self::origin_phase(i))
            .collect();
        self.backward.process(&mut buf);
        let mut max_re = 0.0_f64;
        let mut max_im = 0.0_f64;
        for c in &buf {
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(Error::NonFinite("spectral field"));
            }
            max_re = max_re.max(c.re.abs());
            max_im = max_im.max(c.im.abs());
        }
        if max_im > IMAGINARY_TOLERANCE * max_re.max(1.0) {
            return Err(Error::ImaginaryResidue(max_im));
        }
        Ok(buf.into_iter().map(|c| c.re).collect())
    }

    /// Multiplies every coefficient by `-k_m^2`.
    pub fn spectral_laplacian(&self, f: &SpectralField) -> SpectralField {
        let coefficients = f
            .coefficients
            .iter()
            .zip(&self.wavenumbers)
            .map(|(c, k)| c * (-k * k))
            .collect();
        SpectralField { coefficients }
    }

    /// First derivative, Nyquist mode dropped.
    pub fn derivative(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut f = self.forward_transform(u)?;
        for (i, c) in f.coefficients.iter_mut().enumerate() {
            if i == self.n / 2 {
                *c = Complex64::new(0.0, 0.0);
            } else {
                *c *= Complex64::new(0.0, self.wavenumbers[i]);
            }
        }
        self.inverse_transform(&f)
    }

    /// `||grad u||^2` over the domain, from the spectral coefficients
    /// (`2 Lx sum_m k_m^2 |c_m|^2`).
    pub fn gradient_norm_sq(&self, u: &[f64]) -> Result<f64> {
        let f = self.forward_transform(u)?;
        let s: f64 = f
            .coefficients
            .iter()
            .zip(&self.wavenumbers)
            .map(|(c, k)| k * k * c.norm_sqr())
            .sum();
        Ok(2.0 * self.lx * s)
    }

    /// Power in the modes with `|m| > cutoff`.
    pub fn truncation_error_estimate(&self, f: &SpectralField, cutoff: usize) -> Result<f64> {
        if cutoff > self.n / 2 {
            return Err(Error::InvalidArgument(format!(
                "cutoff {cutoff} exceeds N/2 = {}",
                self.n / 2
            )));
        }
        if f.coefficients.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, found: f.coefficients.len() });
        }
        Ok(f.coefficients
            .iter()
            .enumerate()
            .filter(|(i, _)| Self::mode_index(self.n, *i).unsigned_abs() as usize > cutoff)
            .map(|(_, c)| c.norm_sqr())
            .sum())
    }

    /// Trigonometric interpolation of a field onto `target` (same `Lx`).
    ///
    /// The Nyquist coefficient is split evenly between `+-N/2` when refining,
    /// so refining and coarsening back is exact.
    pub fn interpolate(&self, u: &[f64], target: &SpectralGrid) -> Result<Vec<f64>> {
        if (target.lx - self.lx).abs() > 1e-14 * self.lx {
            return Err(Error::InvalidGrid("interpolation requires equal Lx".into()));
        }
        let src = self.forward_transform(u)?;
        let (n, m) = (self.n as i64, target.n as i64);
        let mut dst = vec![Complex64::new(0.0, 0.0); target.n];
        let slot = |mode: i64, len: i64| -> usize { mode.rem_euclid(len) as usize };
        for (i, c) in src.coefficients.iter().enumerate() {
            let mode = Self::mode_index(self.n, i);
            if m > n && mode == -n / 2 {
                dst[slot(mode, m)] += c * 0.5;
                dst[slot(-mode, m)] += c * 0.5;
            } else if mode.abs() < m / 2 || (mode == -m / 2) {
                dst[slot(mode, m)] += *c;
            } else if mode == m / 2 {
                dst[slot(-mode, m)] += *c;
            }
        }
        target.inverse_transform(&SpectralField { coefficients: dst })
    }

    pub fn interpolate_state(&self, state: &FieldPair, target: &SpectralGrid) -> Result<FieldPair> {
        state.check_len(self.n)?;
        FieldPair::new(self.interpolate(&state.u1, target)?, self.interpolate(&state.u2, target)?)
    }

    /// Dense `N x N` matrix of the spectral Laplacian in physical space.
    pub fn laplacian_matrix(&self) -> Result<nalgebra::DMatrix<f64>> {
        if self.n > crate::linalg::DENSE_LIMIT {
            return Err(Error::DenseGuard { n: self.n, limit: crate::linalg::DENSE_LIMIT });
        }
        let mut mat = nalgebra::DMatrix::zeros(self.n, self.n);
        let mut e = vec![0.0; self.n];
        for col in 0..self.n {
            e.fill(0.0);
            e[col] = 1.0;
            let lap = self.spectral_laplacian(&self.forward_transform(&e)?);
            let column = self.inverse_transform(&lap)?;
            for (row, v) in column.into_iter().enumerate() {
                mat[(row, col)] = v;
            }
        }
        Ok(mat)
    }
}

/// Complex coefficients of a real field, in FFT order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub coefficients: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(n: usize) -> Self {
        Self { coefficients: vec![Complex64::new(0.0, 0.0); n] }
    }

    /// Largest violation of `c_{-m} = conj(c_m)`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let n = self.coefficients.len();
        (0..n)
            .map(|i| (self.coefficients[(n - i) % n] - self.coefficients[i].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn total_power(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Fourier-space time derivative `-k^2 mu_hat_i + R_hat_i` of both species.
///
/// Nonlinear terms are formed pointwise on the collocation grid and
/// transformed afterwards.
pub fn rhs_fourier(
    p: &ModelParameters,
    grid: &SpectralGrid,
    state: &FieldPair,
) -> Result<(SpectralField, SpectralField)> {
    state.check_len(grid.n())?;
    if !state.is_finite() {
        return Err(Error::NonFinite("state passed to rhs_fourier"));
    }
    let n = grid.n();
    let mut mu = [vec![0.0; n], vec![0.0; n]];
    let mut r = [vec![0.0; n], vec![0.0; n]];
    for j in 0..n {
        let (m1, m2) = chemical_potentials(p, state.u1[j], state.u2[j]);
        let (r1, r2) = reaction_terms(p, state.u1[j], state.u2[j]);
        mu[0][j] = m1;
        mu[1][j] = m2;
        r[0][j] = r1;
        r[1][j] = r2;
    }
    let cutoff = grid.dealias_cutoff();
    let mut out = Vec::with_capacity(2);
    for s in 0..2 {
        let mu_hat = grid.spectral_laplacian(&grid.forward_transform(&mu[s])?);
        let r_hat = grid.forward_transform(&r[s])?;
        let mut coefficients: Vec<Complex64> =
            mu_hat.coefficients.iter().zip(&r_hat.coefficients).map(|(a, b)| a + b).collect();
        if grid.dealias {
            for (i, c) in coefficients.iter_mut().enumerate() {
                if SpectralGrid::mode_index(n, i).unsigned_abs() as usize > cutoff {
                    *c = Complex64::new(0.0, 0.0);
                }
            }
        }
        out.push(SpectralField { coefficients });
    }
    let second = out.pop().expect("two species");
    let first = out.pop().expect("two species");
    Ok((first, second))
}

/// One-sided amplitude spectrum `2/N |DFT(s - mean(s))|` of a uniformly
/// sampled signal with spacing `spacing`.
///
/// A cosine of amplitude `A` whose frequency falls on a bin shows up as a
/// single line of height `A`. Returns `(frequencies, amplitudes)` for bins
/// `0..=N/2`.
pub fn amplitude_spectrum(signal: &[f64], spacing: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = signal.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("signal needs at least 2 samples, got {n}")));
    }
    if !(spacing > 0.0) {
        return Err(Error::InvalidArgument(format!("sample spacing must be positive, got {spacing}")));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("signal"));
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = 1.0 / (n as f64 * spacing);
    let half = n / 2;
    let mut freqs = Vec::with_capacity(half + 1);
    let mut amps = Vec::with_capacity(half + 1);
    for (m, c) in buf.iter().take(half + 1).enumerate() {
        freqs.push(m as f64 * df);
        let weight = if m == 0 || (n % 2 == 0 && m == half) { 1.0 } else { 2.0 };
        amps.push(weight * c.norm() / n as f64);
    }
    Ok((freqs, amps))
}

/// Reusable evaluator of the physical-space right-hand side
/// `Lap(mu) + R` on stacked `[u1, u2]` vectors.
///
/// Both potentials are packed into one complex transform (`mu1 + i mu2`);
/// the Laplacian symbol is real and even, so a single forward/backward pair
/// yields both Laplacians.
pub(crate) struct RhsEvaluator {
    grid: SpectralGrid,
    buf: Vec<Complex64>,
    extra: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl RhsEvaluator {
    pub(crate) fn new(grid: &SpectralGrid) -> Self {
        let scratch_len = grid
            .forward
            .get_inplace_scratch_len()
            .max(grid.backward.get_inplace_scratch_len());
        Self {
            grid: grid.clone(),
            buf: vec![Complex64::new(0.0, 0.0); grid.n],
            extra: vec![Complex64::new(0.0, 0.0); grid.n],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    pub(crate) fn eval(&mut self, p: &ModelParameters, x: &[f64], out: &mut [f64]) {
        let n = self.grid.n;
        debug_assert_eq!(x.len(), 2 * n);
        debug_assert_eq!(out.len(), 2 * n);
        let (u1, u2) = x.split_at(n);
        let (o1, o2) = out.split_at_mut(n);
        for j in 0..n {
            let (m1, m2) = chemical_potentials(p, u1[j], u2[j]);
            let (r1, r2) = reaction_terms(p, u1[j], u2[j]);
            self.buf[j] = Complex64::new(m1, m2);
            o1[j] = r1;
            o2[j] = r2;
        }
        self.grid.forward.process_with_scratch(&mut self.buf, &mut self.scratch);
        if self.grid.dealias {
            let inv_n = 1.0 / n as f64;
            for j in 0..n {
                self.extra[j] = Complex64::new(o1[j], o2[j]);
            }
            self.grid.forward.process_with_scratch(&mut self.extra, &mut self.scratch);
            let cutoff = self.grid.dealias_cutoff();
            for i in 0..n {
                let keep = SpectralGrid::mode_index(n, i).unsigned_abs() as usize <= cutoff;
                self.buf[i] = if keep {
                    self.buf[i] * self.grid.laplacian_symbol[i] + self.extra[i] * inv_n
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            self.grid.backward.process_with_scratch(&mut self.buf, &mut self.scratch);
            for j in 0..n {
                o1[j] = self.buf[j].re;
                o2[j] = self.buf[j].im;
            }
        } else {
            for (c, s) in self.buf.iter_mut().zip(&self.grid.laplacian_symbol) {
                *c *= *s;
            }
            self.grid.backward.process_with_scratch(&mut self.buf, &mut self.scratch);
            for j in 0..n {
                o1[j] += self.buf[j].re;
                o2[j] += self.buf[j].im;
            }
        }
    }
}
