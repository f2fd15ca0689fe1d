use std::path::Path;
use std::process::{Command, Output};

use bvam::continuation::BranchEvent;
use bvam::io;

fn bvam(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bvam"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("BVAM_OUT_DIR")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn equilibrium_at_small_n() {
    let dir = tempfile::tempdir().unwrap();
    let o = bvam(dir.path(), &["equilibrium", "--regime", "linear", "--C", "-0.5", "--N", "64"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let state = io::read_state(&dir.path().join("state.csv")).unwrap();
    assert_eq!(state.len(), 64);
    assert!(state.max_abs() > 0.1, "expected the striped state, not zero");
    let meta = io::read_metadata(&dir.path().join("state.csv")).unwrap();
    assert_eq!(meta.grid.n, 64);
    assert_eq!(meta.config["regime"], "linear");
    assert!(dir.path().join("stability.csv").exists());
}

#[test]
fn continue_eq_flags_one_hopf() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "[diffusion]\nregime = cross\n[solver]\nN = 64\nC_start = -0.5\nC_end = -1.1\nsteps = 60\n").unwrap();
    let o = bvam(dir.path(), &["continue-eq", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = io::read_branch(&dir.path().join("branch_eq.csv")).unwrap();
    assert_eq!(rows.len(), 61);
    let hopf: Vec<_> = rows.iter().filter(|r| r.event == Some(BranchEvent::Hopf)).collect();
    assert_eq!(hopf.len(), 1);
    assert!(!hopf[0].stable && rows[hopf[0].index - 1].stable);
}

#[test]
fn orbit_on_stable_state_reports_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = bvam(dir.path(), &["orbit", "--C", "0.0", "--N", "32"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("error"));
}

#[test]
fn bad_configuration_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[solver]\nN = 64\nbogus = 1\n").unwrap();
    let o = bvam(dir.path(), &["equilibrium", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = bvam(dir.path(), &["equilibrium", "--regime", "quadratic"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bvam(dir.path(), &["equilibrium", "--N", "33"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_bvam"))
        .args(["simulate", "--N", "32", "--dt", "1e-3", "--t-end", "0.5"])
        .env("BVAM_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["trajectory.csv", "energy.csv", "energy_rate.csv", "final_state.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn simulate_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["simulate", "--regime", "self_u2", "--C", "-1.2", "--N", "32", "--dt", "1e-3", "--t-end", "1"];
    for d in [&a, &b] {
        let o = bvam(d.path(), &args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["trajectory.csv", "energy.csv", "final_state.csv", "final_state.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        // the sidecar records the output directory on the command line
        if f.ends_with(".json") {
            let strip = |v: Vec<u8>| String::from_utf8(v).unwrap().replace(a.path().to_str().unwrap(), "").replace(b.path().to_str().unwrap(), "");
            assert_eq!(strip(x), strip(y));
        } else {
            assert_eq!(x, y, "{f} differs");
        }
    }
}

#[test]
fn simulate_seeded_from_exported_state() {
    let dir = tempfile::tempdir().unwrap();
    let o = bvam(dir.path(), &["equilibrium", "--N", "32", "--C", "-0.6"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let seed = dir.path().join("state.csv");
    let o = bvam(dir.path(), &["simulate", "--N", "48", "--C", "-0.6", "--t-end", "0.2", "--seed-from", seed.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let end = io::read_state(&dir.path().join("final_state.csv")).unwrap();
    assert_eq!(end.len(), 48);
    let start = io::read_state(&seed).unwrap();
    // a steady state barely moves
    assert!((end.max_abs() - start.max_abs()).abs() < 1e-3);
}
