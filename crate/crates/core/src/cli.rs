//! Command-line front end.
//!
//! Exit status: 0 on success, 1 when a solver fails to find a solution,
//! 2 for bad arguments, bad configuration and IO failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{load_config, RunConfig};
use crate::continuation::{
    continue_equilibria, continue_orbits_observed, hopf_seed_orbit, period_doubled_seed, BranchEvent,
    BranchPoint, Solution, Stability,
};
use crate::diagnostics::{
    chaos_indicator, closure_defect, dominant_wavenumber, energy_attractor, local_attractor, max_abs_state,
    spatial_spectrum, MIN_CHAOS_SAMPLES,
};
use crate::equilibrium::{cosine_guess, newton_krylov_solve, stability_spectrum};
use crate::error::{Error, Result};
use crate::integrator::{integrate, Trajectory};
use crate::io;
use crate::model::{energy, energy_dissipation_rhs, FieldPair, RegimeLabel};
use crate::orbit::{classify_orbit_bifurcation, monodromy_matrix, solve_orbit, PeriodicOrbit};
use crate::spectral::{amplitude_spectrum, SpectralGrid};

#[derive(Debug, Parser)]
#[command(name = "bvam", version, about = "Pseudospectral simulation and bifurcation analysis of the BVAM model")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Configuration file (`key = value` with optional sections).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Diffusion regime: linear, self_u1, self_u2 or cross.
    #[arg(long, global = true)]
    pub regime: Option<RegimeLabel>,
    /// Bifurcation parameter C.
    #[arg(long = "C", global = true, allow_hyphen_values = true, value_name = "C")]
    pub c: Option<f64>,
    /// Output directory (default: $BVAM_OUT_DIR, else ./bvam_out).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Number of collocation points.
    #[arg(long = "N", global = true, value_name = "N")]
    pub n: Option<usize>,
    /// Time step.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// State CSV (x, u1, u2) used as initial condition or orbit anchor.
    #[arg(long, global = true, value_name = "FILE")]
    pub seed_from: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate in time and export the trajectory and its energy.
    Simulate {
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Solve for a steady state and its spectrum.
    Equilibrium,
    /// Continue steady states in C and flag the Hopf point.
    ContinueEq,
    /// Solve one periodic orbit and its Floquet multipliers.
    Orbit,
    /// Continue periodic orbits from the Hopf point (or a seed) in C.
    ContinueOrbit {
        /// After a period-doubling end, seed and continue the doubled branch.
        #[arg(long)]
        doubled: bool,
    },
    /// Local and energy attractors, spectra and chaos indicators.
    Attractor {
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Space-time density and stripe count along a long run.
    Road {
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
    },
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let command_line = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(&cli, command_line) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_solver_failure() {
                1
            } else {
                2
            }
        }
    }
}

/// Config file, then command-line overrides, then validation.
pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(label) = common.regime {
        cfg.apply_regime(label);
    }
    if let Some(c) = common.c {
        cfg.params.c = c;
    }
    if let Some(n) = common.n {
        cfg.n = n;
    }
    if let Some(dt) = common.dt {
        cfg.dt = dt;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Ctx {
    cfg: RunConfig,
    grid: SpectralGrid,
    out: PathBuf,
    command_line: Vec<String>,
    seed: Option<PathBuf>,
}

impl Ctx {
    fn write<F>(&self, name: &str, data: serde_json::Value, export: F) -> Result<PathBuf>
    where
        F: FnOnce(&Path) -> Result<()>,
    {
        let path = self.out.join(name);
        export(&path)?;
        let meta = io::Metadata::new(&self.cfg, &self.grid, self.command_line.clone())?.with_data(data);
        io::write_metadata(&path, &meta)?;
        println!("wrote {}", path.display());
        Ok(path)
    }

    /// Seed state resampled to the run grid, plus the period stored in its
    /// sidecar when there is one.
    fn seed_state(&self) -> Result<Option<(FieldPair, Option<f64>)>> {
        let Some(path) = &self.seed else { return Ok(None) };
        let mut state = io::read_state(path)?;
        if state.len() != self.grid.n() {
            let src = SpectralGrid::new(state.len(), self.grid.lx())?;
            state = src.interpolate_state(&state, &self.grid)?;
        }
        let period = io::read_metadata(path)
            .ok()
            .and_then(|m| m.data.get("period").and_then(serde_json::Value::as_f64));
        Ok(Some((state, period)))
    }

    /// The seed if given, else the cosine guess with a small odd component
    /// so that the run is not confined to symmetric states.
    fn initial_state(&self) -> Result<FieldPair> {
        if let Some((s, _)) = self.seed_state()? {
            return Ok(s);
        }
        let c = &self.cfg;
        let mut s = cosine_guess(&self.grid, [c.guess_amplitude_u1, c.guess_amplitude_u2], [c.guess_mode_u1, c.guess_mode_u2]);
        let lx = self.grid.lx();
        for (u, x) in s.u1.iter_mut().zip(self.grid.points()) {
            *u += c.perturbation * (std::f64::consts::PI * x / lx).sin();
        }
        Ok(s)
    }
}

fn dispatch(cli: &Cli, command_line: Vec<String>) -> Result<()> {
    let mut cfg = resolve_config(&cli.common)?;
    let (t_end, tau) = match &cli.command {
        Command::Simulate { t_end } => (*t_end, None),
        Command::Attractor { t_end, tau } | Command::Road { t_end, tau } => (*t_end, *tau),
        _ => (None, None),
    };
    if let Some(t) = t_end {
        cfg.t_end = t;
    }
    if let Some(t) = tau {
        cfg.tau = t;
    }
    cfg.validate()?;
    let ctx = Ctx {
        grid: cfg.grid()?,
        out: io::output_dir(cfg.out_dir.as_deref()),
        cfg,
        command_line,
        seed: cli.common.seed_from.clone(),
    };
    std::fs::create_dir_all(&ctx.out)?;
    match &cli.command {
        Command::Simulate { .. } => simulate(&ctx),
        Command::Equilibrium => equilibrium(&ctx),
        Command::ContinueEq => continue_eq(&ctx),
        Command::Orbit => orbit(&ctx),
        Command::ContinueOrbit { doubled } => continue_orbit(&ctx, *doubled),
        Command::Attractor { .. } => attractor(&ctx),
        Command::Road { .. } => road(&ctx),
    }
}

fn run_trajectory(ctx: &Ctx) -> Result<Trajectory> {
    let x0 = ctx.initial_state()?;
    integrate(&ctx.cfg.params, &ctx.grid, &x0, ctx.cfg.t_end, &ctx.cfg.integrator())
}

fn simulate(ctx: &Ctx) -> Result<()> {
    let traj = run_trajectory(ctx)?;
    let p = &ctx.cfg.params;
    let rates = traj
        .states
        .iter()
        .map(|s| energy_dissipation_rhs(p, &ctx.grid, s))
        .collect::<Result<Vec<f64>>>()?;
    ctx.write("trajectory.csv", json!({}), |path| io::export_trajectory(&traj, path))?;
    ctx.write("energy.csv", json!({}), |path| io::export_columns(["t", "E"], &traj.times, &traj.energies, path))?;
    ctx.write("energy_rate.csv", json!({}), |path| io::export_columns(["t", "dEdt"], &traj.times, &rates, path))?;
    let last = traj.final_state().ok_or(Error::NonFinite("empty trajectory"))?;
    ctx.write("final_state.csv", json!({"t": ctx.cfg.t_end}), |path| io::export_state(&ctx.grid, last, path))?;
    println!(
        "t_end = {}  E = {:.10e}  max|u| = {:.4}",
        ctx.cfg.t_end,
        traj.energies.last().copied().unwrap_or(f64::NAN),
        max_abs_state(&traj.states)
    );
    Ok(())
}

fn equilibrium(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let guess = match ctx.seed_state()? {
        Some((s, _)) => s,
        None => cosine_guess(&ctx.grid, [cfg.guess_amplitude_u1, cfg.guess_amplitude_u2], [cfg.guess_mode_u1, cfg.guess_mode_u2]),
    };
    let sol = newton_krylov_solve(&cfg.params, &ctx.grid, &guess, &cfg.newton())?;
    if !sol.converged {
        return Err(Error::NotConverged { iterations: sol.iterations, residual: sol.residual_norm });
    }
    let report = stability_spectrum(&cfg.params, &ctx.grid, &sol.state, cfg.stability_threshold)?;
    let e = energy(&cfg.params, &ctx.grid, &sol.state)?;
    let summary = json!({
        "C": cfg.params.c,
        "energy": e,
        "residual_norm": sol.residual_norm,
        "iterations": sol.iterations,
        "max_real_part": report.max_real_part,
        "stable": report.stable,
        "hopf_candidate": report.hopf_candidate,
    });
    ctx.write("state.csv", summary.clone(), |path| io::export_state(&ctx.grid, &sol.state, path))?;
    ctx.write("stability.csv", summary, |path| io::export_complex(&report.eigenvalues, path))?;
    println!(
        "C = {}  residual = {:.3e}  iterations = {}  max Re = {:.6e}  {}",
        cfg.params.c,
        sol.residual_norm,
        sol.iterations,
        report.max_real_part,
        if report.stable { "stable" } else { "unstable" }
    );
    Ok(())
}

fn continue_eq(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let branch = continue_equilibria(&cfg.regime_at(cfg.c_start), cfg.c_start, cfg.c_end, cfg.steps, &ctx.grid, &cfg.equilibrium_sweep())?;
    if branch.points.is_empty() {
        return Err(Error::NotConverged { iterations: 0, residual: f64::NAN });
    }
    let data = json!({ "event_index": branch.event_index(), "truncated": branch.truncated });
    ctx.write("branch_eq.csv", data, |path| io::export_branch(&branch, path))?;
    io::export_branch_json(&branch, &ctx.out.join("branch_eq_full.json"))?;
    if let Some(reason) = &branch.truncated {
        eprintln!("warning: branch truncated at {reason}");
    }
    match branch.event_point() {
        Some(q) => println!("{} at C = {} (index {})", q.event.map(|e| e.as_str()).unwrap_or(""), q.c, branch.event_index().unwrap_or(0)),
        None => println!("no stability change between C = {} and C = {}", cfg.c_start, cfg.c_end),
    }
    Ok(())
}

/// Orbit at the configured C, from the seed file or from the unstable
/// steady state there.
fn solve_single_orbit(ctx: &Ctx) -> Result<PeriodicOrbit> {
    let cfg = &ctx.cfg;
    let p = cfg.params;
    if let Some((anchor, period)) = ctx.seed_state()? {
        let guess = PeriodicOrbit::guess(anchor.clone(), period.unwrap_or(cfg.period_guess));
        let orbit = solve_orbit(&p, &ctx.grid, &guess, &anchor, &cfg.shooting())?;
        if !orbit.converged {
            return Err(Error::NotConverged { iterations: orbit.iterations, residual: orbit.residual_norm });
        }
        return Ok(orbit);
    }
    let guess = cosine_guess(&ctx.grid, [cfg.guess_amplitude_u1, cfg.guess_amplitude_u2], [cfg.guess_mode_u1, cfg.guess_mode_u2]);
    let eq = newton_krylov_solve(&p, &ctx.grid, &guess, &cfg.newton())?;
    if !eq.converged {
        return Err(Error::NotConverged { iterations: eq.iterations, residual: eq.residual_norm });
    }
    let report = stability_spectrum(&p, &ctx.grid, &eq.state, cfg.stability_threshold)?;
    if report.stable {
        return Err(Error::NoPeriodicity(format!(
            "the steady state at C = {} is stable, so no orbit branches off it; the solver has nothing to converge to",
            p.c
        )));
    }
    // phase reference: the steady state one continuation step back
    let reference = newton_krylov_solve(&p.with_c(p.c - cfg.delta_c), &ctx.grid, &eq.state, &cfg.newton())?;
    if !reference.converged {
        return Err(Error::NotConverged { iterations: reference.iterations, residual: reference.residual_norm });
    }
    let point = BranchPoint {
        c: p.c,
        energy: energy(&p, &ctx.grid, &eq.state)?,
        solution: Solution::Equilibrium(eq.state),
        stability: Stability::Equilibrium(report),
        event: None,
        iterations: eq.iterations,
    };
    hopf_seed_orbit(&cfg.regime_at(p.c), &point, &reference.state, &ctx.grid, &cfg.seed())
}

fn orbit(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let orbit = solve_single_orbit(ctx)?;
    let m = monodromy_matrix(&cfg.params, &ctx.grid, &orbit, cfg.dt, cfg.monodromy_h)?;
    let b = classify_orbit_bifurcation(&m, cfg.tol_angle);
    let data = json!({
        "C": cfg.params.c,
        "period": orbit.period,
        "residual_norm": orbit.residual_norm,
        "iterations": orbit.iterations,
        "trivial_index": m.trivial_index,
        "translation_index": m.translation_index,
        "bifurcation": b.kind.as_str(),
    });
    ctx.write("orbit_anchor.csv", data.clone(), |path| io::export_state(&ctx.grid, &orbit.anchor, path))?;
    ctx.write("multipliers.csv", data, |path| io::export_complex(&m.multipliers, path))?;
    println!(
        "C = {}  T = {:.8}  residual = {:.3e}  |mu|max = {:.6}  {}",
        cfg.params.c,
        orbit.period,
        orbit.residual_norm,
        m.nontrivial().map(|z| z.norm()).fold(0.0, f64::max),
        b.kind
    );
    Ok(())
}

fn report_point(q: &BranchPoint) {
    if let Stability::Orbit { bifurcation, .. } = &q.stability {
        println!(
            "C = {:.6}  T = {:.8}  mu = {:.6}  {}",
            q.c,
            q.solution.period().unwrap_or(f64::NAN),
            bifurcation.critical_multiplier,
            bifurcation.kind
        );
    }
}

fn continue_orbit(ctx: &Ctx, doubled: bool) -> Result<()> {
    let cfg = &ctx.cfg;
    let (start, c0) = if ctx.seed.is_some() {
        (solve_single_orbit(ctx)?, cfg.params.c)
    } else {
        let eq = continue_equilibria(&cfg.regime_at(cfg.c_start), cfg.c_start, cfg.c_end, cfg.steps, &ctx.grid, &cfg.equilibrium_sweep())?;
        ctx.write("branch_eq.csv", json!({ "event_index": eq.event_index() }), |path| io::export_branch(&eq, path))?;
        let hi = eq
            .event_index()
            .filter(|&i| eq.points[i].event == Some(BranchEvent::Hopf))
            .ok_or_else(|| Error::NoPeriodicity("no Hopf point on the steady-state branch".into()))?;
        let hopf = &eq.points[hi];
        println!("Hopf at C = {} (index {hi})", hopf.c);
        let orbit = hopf_seed_orbit(&cfg.regime_at(hopf.c), hopf, eq.points[hi - 1].solution.state(), &ctx.grid, &cfg.seed())?;
        (orbit, hopf.c)
    };
    let regime = cfg.regime_at(c0);
    let sweep = continue_orbits_observed(&regime, &start, c0, cfg.delta_c, &ctx.grid, &cfg.orbit_sweep(), report_point)?;
    let first = &sweep.branch;
    let data = json!({ "event_index": first.event_index(), "truncated": first.truncated, "delta_C": cfg.delta_c });
    ctx.write("orbits_1.csv", data, |path| io::export_branch(first, path))?;
    io::export_branch_json(first, &ctx.out.join("orbits_1_full.json"))?;
    if let Some(reason) = &first.truncated {
        eprintln!("warning: orbit branch truncated at {reason}");
    }
    if !doubled {
        return Ok(());
    }
    let last = first.points.last().ok_or(Error::NotConverged { iterations: 0, residual: f64::NAN })?;
    if last.event != Some(BranchEvent::PeriodDoubling) {
        return Err(Error::NoPeriodicity("the first orbit branch did not end in a period doubling".into()));
    }
    let Solution::Orbit(o) = &last.solution else { unreachable!("orbit branches hold orbits") };
    let m = sweep.last_monodromy.as_ref().ok_or(Error::NotConverged { iterations: 0, residual: f64::NAN })?;
    let seed = period_doubled_seed(&regime, last.c, o, m, &ctx.grid, &cfg.seed())?;
    println!("doubled orbit at C = {}  T = {:.8}", last.c, seed.period);
    let second = continue_orbits_observed(&regime, &seed, last.c, cfg.delta_c_doubled, &ctx.grid, &cfg.orbit_sweep(), report_point)?.branch;
    let data = json!({ "event_index": second.event_index(), "truncated": second.truncated, "delta_C": cfg.delta_c_doubled });
    ctx.write("orbits_2.csv", data, |path| io::export_branch(&second, path))?;
    io::export_branch_json(&second, &ctx.out.join("orbits_2_full.json"))?;
    Ok(())
}

fn sample_spacing(cfg: &RunConfig) -> f64 {
    cfg.dt * cfg.record_every as f64
}

fn attractor(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let traj = run_trajectory(ctx)?;
    let local = local_attractor(&traj, &ctx.grid, cfg.tau)?;
    let global = energy_attractor(&cfg.params, &ctx.grid, &traj, cfg.tau)?;
    ctx.write("attractor_local.csv", json!({"tau": cfg.tau}), |path| io::export_attractor(&local, path))?;
    ctx.write("attractor_energy.csv", json!({"tau": cfg.tau}), |path| io::export_attractor(&global, path))?;

    let spacing = sample_spacing(cfg);
    let signal: Vec<f64> = global.iter().map(|s| s.energy).collect();
    let (f, a) = amplitude_spectrum(&signal, spacing)?;
    ctx.write("energy_spectrum.csv", json!({"sample_spacing": spacing}), |path| io::export_columns(["f", "amplitude"], &f, &a, path))?;
    let last = traj.final_state().ok_or(Error::NonFinite("empty trajectory"))?;
    let (k, ak) = spatial_spectrum(&ctx.grid, &last.u1)?;
    ctx.write("spatial_spectrum.csv", json!({"t": cfg.t_end}), |path| io::export_columns(["k", "amplitude"], &k, &ak, path))?;

    let start = traj.times.partition_point(|&t| t < cfg.tau);
    let max_abs = max_abs_state(&traj.states[start..]);
    let closure = closure_defect(&local)?;
    let mut report = json!({
        "C": cfg.params.c,
        "tau": cfg.tau,
        "t_end": cfg.t_end,
        "samples": signal.len(),
        "max_abs_state": max_abs,
        "bounded": max_abs < 10.0,
        "closure_defect": closure,
    });
    if signal.len() >= MIN_CHAOS_SAMPLES {
        let chaos = chaos_indicator(&signal, spacing)?;
        report["dominant_power_fraction"] = json!(chaos.dominant_power_fraction);
        report["broadband"] = json!(chaos.broadband);
    } else {
        eprintln!("warning: {} samples after tau; the chaos indicator needs {MIN_CHAOS_SAMPLES}", signal.len());
    }
    let path = ctx.out.join("chaos.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    println!("wrote {}", path.display());
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn road(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let traj = run_trajectory(ctx)?;
    let start = traj.times.partition_point(|&t| t < cfg.tau);
    let times = &traj.times[start..];
    let states = &traj.states[start..];
    let u1: Vec<Vec<f64>> = states.iter().map(|s| s.u1.clone()).collect();
    let u2: Vec<Vec<f64>> = states.iter().map(|s| s.u2.clone()).collect();
    let k = states.iter().map(|s| dominant_wavenumber(&ctx.grid, &s.u1)).collect::<Result<Vec<f64>>>()?;
    ctx.write("road_u1.csv", json!({"tau": cfg.tau}), |path| io::export_space_time(times, &u1, path))?;
    ctx.write("road_u2.csv", json!({"tau": cfg.tau}), |path| io::export_space_time(times, &u2, path))?;
    ctx.write("road_wavenumber.csv", json!({"tau": cfg.tau}), |path| io::export_columns(["t", "k_dominant"], times, &k, path))?;
    let local = local_attractor(&traj, &ctx.grid, cfg.tau)?;
    ctx.write("road_local.csv", json!({"tau": cfg.tau}), |path| io::export_attractor(&local, path))?;
    Ok(())
}
