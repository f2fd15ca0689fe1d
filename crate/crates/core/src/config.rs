//! Run configuration: `key = value` files with optional `[section]` headers.
//!
//! Every key belongs to exactly one section. Keys written before the first
//! header are looked up in all sections. `#` starts a comment. Unknown keys,
//! unknown sections and unparsable values are errors that carry the line
//! number. `regime` selects a preset; explicit `d11`, `d22` or `d12` lines
//! override it wherever they appear in the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::continuation::{EquilibriumSweepConfig, OrbitSweepConfig, SeedConfig};
use crate::equilibrium::{NewtonConfig, STABILITY_THRESHOLD};
use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::model::{DiffusionRegime, ModelParameters, RegimeLabel};
use crate::orbit::ShootingConfig;
use crate::spectral::SpectralGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub regime: RegimeLabel,
    pub params: ModelParameters,

    pub n: usize,
    pub dt: f64,
    pub dealias: bool,

    pub t_end: f64,
    pub tau: f64,
    pub record_every: usize,

    pub c_start: f64,
    pub c_end: f64,
    pub steps: usize,
    pub delta_c: f64,
    pub delta_c_doubled: f64,
    pub max_orbit_steps: usize,

    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub shooting_tol: f64,
    pub shooting_max_iter: usize,
    pub monodromy_h: f64,
    pub tol_angle: f64,
    pub stability_threshold: f64,
    pub guess_amplitude_u1: f64,
    pub guess_amplitude_u2: f64,
    pub guess_mode_u1: u32,
    pub guess_mode_u2: u32,
    pub perturbation: f64,
    pub period_guess: f64,
    pub seed_transient: f64,
    pub seed_max_transient: f64,

    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let regime = RegimeLabel::Linear;
        Self {
            regime,
            params: DiffusionRegime::preset(regime, -0.5).parameters,
            n: 300,
            dt: 8e-5,
            dealias: false,
            t_end: 400.0,
            tau: 100.0,
            record_every: 250,
            c_start: -0.5,
            c_end: -1.5,
            steps: 100,
            delta_c: -0.01,
            delta_c_doubled: -0.001,
            max_orbit_steps: 500,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            shooting_tol: 5e-4,
            shooting_max_iter: 20,
            monodromy_h: 1e-3,
            tol_angle: 1e-3,
            stability_threshold: STABILITY_THRESHOLD,
            guess_amplitude_u1: 0.5,
            guess_amplitude_u2: 0.5,
            guess_mode_u1: 3,
            guess_mode_u2: 3,
            perturbation: 1e-3,
            period_guess: 3.0,
            seed_transient: 50.0,
            seed_max_transient: 3000.0,
            out_dir: None,
        }
    }
}

const SECTIONS: [&str; 4] = ["reaction", "diffusion", "solver", "output"];

fn section_of(key: &str) -> Option<&'static str> {
    Some(match key {
        "eta" | "a" | "b" | "C" | "H" | "Lx" => "reaction",
        "regime" | "d1" | "d2" | "d11" | "d22" | "d12" => "diffusion",
        "N" | "dt" | "dealias" | "t_end" | "tau" | "record_every" | "C_start" | "C_end" | "steps"
        | "delta_C" | "delta_C_doubled" | "max_orbit_steps" | "newton_tol" | "newton_max_iter"
        | "shooting_tol" | "shooting_max_iter" | "monodromy_h" | "tol_angle"
        | "stability_threshold" | "guess_amplitude_u1" | "guess_amplitude_u2" | "guess_mode_u1"
        | "guess_mode_u2" | "perturbation" | "period_guess" | "seed_transient"
        | "seed_max_transient" => "solver",
        "dir" => "output",
        _ => return None,
    })
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config { line, message: format!("cannot parse `{v}` for `{key}`") })
}

/// Parses configuration text. Validation runs at the end.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut section: Option<String> = None;
    let mut overrides: Vec<(usize, String, f64)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Config { line, message: format!("malformed section header `{content}`") })?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(Error::Config { line, message: format!("unknown section `{name}`") });
            }
            section = Some(name.to_owned());
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::Config { line, message: format!("expected `key = value`, got `{content}`") })?;
        let home = section_of(key).ok_or_else(|| Error::Config { line, message: format!("unknown key `{key}`") })?;
        if let Some(s) = &section {
            if s != home {
                return Err(Error::Config { line, message: format!("key `{key}` belongs in [{home}], not [{s}]") });
            }
        }
        match key {
            "regime" => {
                cfg.regime = value.parse().map_err(|e: Error| Error::Config { line, message: e.to_string() })?;
            }
            "d11" | "d22" | "d12" => overrides.push((line, key.to_owned(), num(line, key, value)?)),
            "eta" => cfg.params.eta = num(line, key, value)?,
            "a" => cfg.params.a = num(line, key, value)?,
            "b" => cfg.params.b = num(line, key, value)?,
            "C" => cfg.params.c = num(line, key, value)?,
            "H" => cfg.params.h = num(line, key, value)?,
            "Lx" => cfg.params.lx = num(line, key, value)?,
            "d1" => cfg.params.d1 = num(line, key, value)?,
            "d2" => cfg.params.d2 = num(line, key, value)?,
            "N" => cfg.n = num(line, key, value)?,
            "dt" => cfg.dt = num(line, key, value)?,
            "dealias" => cfg.dealias = num(line, key, value)?,
            "t_end" => cfg.t_end = num(line, key, value)?,
            "tau" => cfg.tau = num(line, key, value)?,
            "record_every" => cfg.record_every = num(line, key, value)?,
            "C_start" => cfg.c_start = num(line, key, value)?,
            "C_end" => cfg.c_end = num(line, key, value)?,
            "steps" => cfg.steps = num(line, key, value)?,
            "delta_C" => cfg.delta_c = num(line, key, value)?,
            "delta_C_doubled" => cfg.delta_c_doubled = num(line, key, value)?,
            "max_orbit_steps" => cfg.max_orbit_steps = num(line, key, value)?,
            "newton_tol" => cfg.newton_tol = num(line, key, value)?,
            "newton_max_iter" => cfg.newton_max_iter = num(line, key, value)?,
            "shooting_tol" => cfg.shooting_tol = num(line, key, value)?,
            "shooting_max_iter" => cfg.shooting_max_iter = num(line, key, value)?,
            "monodromy_h" => cfg.monodromy_h = num(line, key, value)?,
            "tol_angle" => cfg.tol_angle = num(line, key, value)?,
            "stability_threshold" => cfg.stability_threshold = num(line, key, value)?,
            "guess_amplitude_u1" => cfg.guess_amplitude_u1 = num(line, key, value)?,
            "guess_amplitude_u2" => cfg.guess_amplitude_u2 = num(line, key, value)?,
            "guess_mode_u1" => cfg.guess_mode_u1 = num(line, key, value)?,
            "guess_mode_u2" => cfg.guess_mode_u2 = num(line, key, value)?,
            "perturbation" => cfg.perturbation = num(line, key, value)?,
            "period_guess" => cfg.period_guess = num(line, key, value)?,
            "seed_transient" => cfg.seed_transient = num(line, key, value)?,
            "seed_max_transient" => cfg.seed_max_transient = num(line, key, value)?,
            "dir" => cfg.out_dir = Some(PathBuf::from(value)),
            _ => unreachable!("key table and match arms disagree on `{key}`"),
        }
    }
    cfg.apply_regime(cfg.regime);
    for (line, key, v) in overrides {
        match key.as_str() {
            "d11" => cfg.params.d11 = v,
            "d22" => cfg.params.d22 = v,
            _ => cfg.params.d12 = v,
        }
        if v < 0.0 {
            return Err(Error::Config { line, message: format!("{key} must be non-negative") });
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

impl RunConfig {
    /// Resets the nonlinear diffusion coefficients to the preset of `label`.
    pub fn apply_regime(&mut self, label: RegimeLabel) {
        let preset = DiffusionRegime::preset(label, self.params.c).parameters;
        self.regime = label;
        self.params.d11 = preset.d11;
        self.params.d22 = preset.d22;
        self.params.d12 = preset.d12;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        self.params.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.n < 4 || self.n % 2 != 0 {
            return bad(format!("N must be even and at least 4, got {}", self.n));
        }
        for (name, v) in [
            ("t_end", self.t_end),
            ("newton_tol", self.newton_tol),
            ("shooting_tol", self.shooting_tol),
            ("monodromy_h", self.monodromy_h),
            ("tol_angle", self.tol_angle),
            ("stability_threshold", self.stability_threshold),
            ("perturbation", self.perturbation),
            ("period_guess", self.period_guess),
            ("seed_max_transient", self.seed_max_transient),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.tau >= 0.0 && self.seed_transient >= 0.0) {
            return bad("tau and seed_transient must be non-negative".into());
        }
        if self.record_every == 0 || self.steps == 0 || self.max_orbit_steps == 0 {
            return bad("record_every, steps and max_orbit_steps must be at least 1".into());
        }
        if self.newton_max_iter == 0 || self.shooting_max_iter == 0 {
            return bad("iteration limits must be at least 1".into());
        }
        if !(self.delta_c != 0.0 && self.delta_c.is_finite() && self.delta_c_doubled != 0.0 && self.delta_c_doubled.is_finite()) {
            return bad("delta_C and delta_C_doubled must be finite and nonzero".into());
        }
        if self.guess_mode_u1 as usize >= self.n / 2 || self.guess_mode_u2 as usize >= self.n / 2 {
            return bad("guess modes must be below N/2".into());
        }
        Ok(())
    }

    pub fn parameters(&self) -> ModelParameters {
        self.params
    }

    pub fn regime_at(&self, c: f64) -> DiffusionRegime {
        DiffusionRegime { label: self.regime, parameters: self.params.with_c(c) }
    }

    pub fn grid(&self) -> Result<SpectralGrid> {
        Ok(SpectralGrid::new(self.n, self.params.lx)?.with_dealiasing(self.dealias))
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig { dt: self.dt, record_every: self.record_every, ..IntegratorConfig::default() }
    }

    pub fn newton(&self) -> NewtonConfig {
        NewtonConfig { tol: self.newton_tol, max_iter: self.newton_max_iter, ..NewtonConfig::default() }
    }

    pub fn shooting(&self) -> ShootingConfig {
        ShootingConfig {
            tol: self.shooting_tol,
            max_iter: self.shooting_max_iter,
            ..ShootingConfig::with_dt(self.dt)
        }
    }

    pub fn equilibrium_sweep(&self) -> EquilibriumSweepConfig {
        EquilibriumSweepConfig {
            newton: self.newton(),
            threshold: self.stability_threshold,
            guess_amplitudes: [self.guess_amplitude_u1, self.guess_amplitude_u2],
            guess_modes: [self.guess_mode_u1, self.guess_mode_u2],
            ..EquilibriumSweepConfig::default()
        }
    }

    pub fn orbit_sweep(&self) -> OrbitSweepConfig {
        OrbitSweepConfig {
            shooting: self.shooting(),
            monodromy_h: self.monodromy_h,
            tol_angle: self.tol_angle,
            max_steps: self.max_orbit_steps,
            ..OrbitSweepConfig::default()
        }
    }

    pub fn seed(&self) -> SeedConfig {
        SeedConfig {
            shooting: self.shooting(),
            perturbation: self.perturbation,
            transient: self.seed_transient,
            max_transient: self.seed_max_transient,
            period_guess: self.period_guess,
            ..SeedConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_linear_table_values() {
        let c = parse_config("").unwrap();
        assert_eq!(c, RunConfig::default());
        let p = c.params;
        assert_eq!((p.lx, p.h, p.eta, p.a, p.b, p.d1, p.d2), (5.0, 3.0, 1.0, -1.0, -1.5, 0.08, 1.0));
        assert_eq!((p.d11, p.d22, p.d12), (0.0, 0.0, 0.0));
        assert_eq!((c.n, c.dt), (300, 8e-5));
    }

    #[test]
    fn regime_presets() {
        let c = parse_config("regime = cross\n").unwrap();
        assert_eq!(c.params.d12, 0.02);
        assert_eq!((c.params.d11, c.params.d22), (0.0, 0.0));
        assert_eq!(parse_config("[diffusion]\nregime = self_u1").unwrap().params.d11, 0.07);
        assert_eq!(parse_config("regime = self_u2").unwrap().params.d22, 0.05);
    }

    #[test]
    fn explicit_coefficients_override_the_preset_in_any_order() {
        let c = parse_config("d12 = 0.03\nregime = cross\n").unwrap();
        assert_eq!(c.params.d12, 0.03);
    }

    #[test]
    fn sections_comments_and_values() {
        let text = "# run\n[reaction]\nC = -1.39   # near the doubling\nH = 3\n\n[solver]\nN = 128\ndt = 5e-4\ndealias = true\n[output]\ndir = out/here\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.params.c, -1.39);
        assert_eq!(c.n, 128);
        assert_eq!(c.dt, 5e-4);
        assert!(c.dealias);
        assert_eq!(c.out_dir, Some(PathBuf::from("out/here")));
    }

    fn line_of(text: &str) -> usize {
        match parse_config(text) {
            Err(Error::Config { line, .. }) => line,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(line_of("C = -1\n\nbogus = 3\n"), 3);
        assert_eq!(line_of("[solver]\nC = -1\n"), 2);
        assert_eq!(line_of("[nonsense]\n"), 1);
        assert_eq!(line_of("N = twelve\n"), 1);
        assert_eq!(line_of("# c\nregime = quadratic\n"), 2);
        assert_eq!(line_of("just words\n"), 1);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(parse_config("dt = -1\n").is_err());
        assert!(parse_config("N = 7\n").is_err());
        assert!(parse_config("d1 = -0.1\n").is_err());
        assert!(parse_config("d12 = -0.1\n").is_err());
        assert!(parse_config("delta_C = 0\n").is_err());
    }

    #[test]
    fn derived_solver_configs() {
        let c = parse_config("N = 64\ndt = 1e-3\nshooting_tol = 1e-4\n").unwrap();
        assert_eq!(c.grid().unwrap().n(), 64);
        assert_eq!(c.shooting().dt, 1e-3);
        assert_eq!(c.shooting().tol, 1e-4);
        assert_eq!(c.integrator().record_every, 250);
        assert_eq!(c.equilibrium_sweep().guess_modes, [3, 3]);
    }
}
