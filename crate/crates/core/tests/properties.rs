use approx::assert_relative_eq;
use bvam::config::{parse_config, RunConfig};
use bvam::continuation::{Branch, BranchEvent, BranchKind, BranchPoint, Solution, Stability};
use bvam::diagnostics::{chaos_indicator, local_attractor, MIN_CHAOS_SAMPLES};
use bvam::equilibrium::StabilityReport;
use bvam::io;
use bvam::model::{chemical_potentials, energy, potential_jacobian, reaction_jacobian, reaction_terms};
use bvam::spectral::rhs_fourier;
use bvam::{DiffusionRegime, FieldPair, ModelParameters, RegimeLabel, SpectralGrid, Trajectory};
use num_complex::Complex64;
use proptest::prelude::*;

const LX: f64 = 5.0;

fn regime() -> impl Strategy<Value = RegimeLabel> {
    prop::sample::select(RegimeLabel::ALL.to_vec())
}

fn params() -> impl Strategy<Value = ModelParameters> {
    (regime(), -2.0..0.0f64).prop_map(|(l, c)| DiffusionRegime::preset(l, c).parameters)
}

fn field(n: usize, amp: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-amp..amp, n)
}

fn state(n: usize, amp: f64) -> impl Strategy<Value = FieldPair> {
    (field(n, amp), field(n, amp)).prop_map(|(u1, u2)| FieldPair { u1, u2 })
}

fn central<F: Fn(f64, f64) -> (f64, f64)>(f: F, u1: f64, u2: f64) -> [[f64; 2]; 2] {
    let h = 1e-6;
    let (a1, a2) = f(u1 + h, u2);
    let (b1, b2) = f(u1 - h, u2);
    let (c1, c2) = f(u1, u2 + h);
    let (d1, d2) = f(u1, u2 - h);
    [[(a1 - b1) / (2.0 * h), (c1 - d1) / (2.0 * h)], [(a2 - b2) / (2.0 * h), (c2 - d2) / (2.0 * h)]]
}

fn close_jacobian(exact: [[f64; 2]; 2], fd: [[f64; 2]; 2]) -> bool {
    let scale = exact.iter().flatten().fold(1.0_f64, |m, v| m.max(v.abs()));
    exact.iter().flatten().zip(fd.iter().flatten()).all(|(a, b)| (a - b).abs() <= 1e-6 * scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn reaction_sum_identity(p in params(), u1 in -5.0..5.0f64, u2 in -5.0..5.0f64) {
        let (r1, r2) = reaction_terms(&p, u1, u2);
        let expected = p.eta * ((1.0 + p.h) * u1 + (p.a + p.b) * u2);
        let scale = [r1, r2, expected].iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        prop_assert!((r1 + r2 - expected).abs() <= 1e-14 * scale * 8.0);
    }

    #[test]
    fn jacobians_match_finite_differences(p in params(), u1 in -2.0..2.0f64, u2 in -2.0..2.0f64) {
        prop_assert!(close_jacobian(reaction_jacobian(&p, u1, u2), central(|a, b| reaction_terms(&p, a, b), u1, u2)));
        prop_assert!(close_jacobian(potential_jacobian(&p, u1, u2), central(|a, b| chemical_potentials(&p, a, b), u1, u2)));
    }

    #[test]
    fn energy_is_non_negative(p in params(), s in state(32, 3.0)) {
        let g = SpectralGrid::new(32, LX).unwrap();
        prop_assert!(energy(&p, &g, &s).unwrap() >= 0.0);
    }

    #[test]
    fn transform_roundtrip_and_parseval(u in field(64, 10.0)) {
        let g = SpectralGrid::new(64, LX).unwrap();
        let f = g.forward_transform(&u).unwrap();
        let back = g.inverse_transform(&f).unwrap();
        let norm: f64 = u.iter().map(|v| v * v).sum::<f64>();
        for (a, b) in u.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12 * norm.sqrt().max(1.0));
        }
        // forward transform carries 1/N
        let parseval = 64.0 * f.total_power();
        prop_assert!((parseval - norm).abs() <= 1e-12 * norm.max(1e-300));
        prop_assert!(f.conjugate_symmetry_defect() <= 1e-12 * norm.sqrt().max(1.0));
    }

    #[test]
    fn rhs_commutes_with_translation(p in params(), s in state(32, 1.5), shift in 1usize..32) {
        let g = SpectralGrid::new(32, LX).unwrap();
        let rot = |v: &[f64]| -> Vec<f64> {
            let mut w = v.to_vec();
            w.rotate_right(shift);
            w
        };
        let shifted = FieldPair { u1: rot(&s.u1), u2: rot(&s.u2) };
        let (a1, a2) = rhs_fourier(&p, &g, &s).unwrap();
        let (b1, b2) = rhs_fourier(&p, &g, &shifted).unwrap();
        for (a, b) in [(a1, b1), (a2, b2)] {
            let ra = rot(&g.inverse_transform(&a).unwrap());
            let rb = g.inverse_transform(&b).unwrap();
            let scale = ra.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            for (x, y) in ra.iter().zip(&rb) {
                prop_assert!((x - y).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn chaos_indicator_is_scale_invariant(seed in field(MIN_CHAOS_SAMPLES, 1.0), k in 1e-3..1e3f64) {
        let signal: Vec<f64> = seed.iter().enumerate().map(|(i, v)| v + (0.05 * i as f64).sin()).collect();
        let scaled: Vec<f64> = signal.iter().map(|v| k * v).collect();
        let a = chaos_indicator(&signal, 0.01).unwrap();
        let b = chaos_indicator(&scaled, 0.01).unwrap();
        prop_assert!((a.dominant_power_fraction - b.dominant_power_fraction).abs() <= 1e-12);
    }

    #[test]
    fn origin_sample_matches_spectral_evaluation(s in state(48, 2.0)) {
        let g = SpectralGrid::new(48, LX).unwrap();
        let traj = Trajectory { times: vec![0.0, 1.0], states: vec![s.clone(), s.clone()], energies: vec![0.0, 0.0] };
        let samples = local_attractor(&traj, &g, 0.0).unwrap();
        let j = g.origin_index();
        prop_assert!(g.points()[j].abs() <= 0.5 * g.dx());
        // direct summation of the trigonometric interpolant at the collocation point
        let x = g.points()[j];
        for (u, got) in [(&s.u1, samples[0].u1_center), (&s.u2, samples[0].u2_center)] {
            let f = g.forward_transform(u).unwrap();
            let value: f64 =
                f.coefficients.iter().zip(g.wavenumbers()).map(|(c, k)| (c * Complex64::from_polar(1.0, k * x)).re).sum();
            prop_assert!((value - got).abs() <= 1e-12 * u.iter().fold(1.0_f64, |m, v| m.max(v.abs())));
            prop_assert_eq!(got, u[j]);
        }
    }

    #[test]
    fn branch_roundtrips_through_csv_and_json(cs in prop::collection::vec(-2.0..0.0f64, 1..6), e in 0.0..10.0f64) {
        let regime = DiffusionRegime::preset(RegimeLabel::Cross, cs[0]);
        let points = cs.iter().enumerate().map(|(i, &c)| BranchPoint {
            c,
            solution: Solution::Equilibrium(FieldPair::zeros(8)),
            energy: e * c,
            stability: Stability::Equilibrium(StabilityReport::from_eigenvalues(
                vec![Complex64::new(c, e), Complex64::new(c, -e), Complex64::new(-e, 0.0)],
                1e-3,
            )),
            event: (i == 1).then_some(BranchEvent::Hopf),
            iterations: i,
        }).collect();
        let branch = Branch { regime, kind: BranchKind::Equilibrium, points, truncated: None };
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("b.json");
        io::export_branch_json(&branch, &json).unwrap();
        prop_assert_eq!(&io::read_branch_json(&json).unwrap(), &branch);
        let csv = dir.path().join("b.csv");
        io::export_branch(&branch, &csv).unwrap();
        let rows = io::read_branch(&csv).unwrap();
        prop_assert_eq!(rows, io::branch_rows(&branch));
    }

    #[test]
    fn config_text_and_sidecar_roundtrip(
        label in regime(),
        c in -2.0..0.0f64,
        half_n in 4usize..200,
        dt in 1e-6..1e-2f64,
        d12 in 0.0..0.1f64,
        steps in 1usize..500,
    ) {
        let text = format!(
            "[reaction]\nC = {c:e}\n[diffusion]\nregime = {label}\nd12 = {d12:e}\n[solver]\nN = {}\ndt = {dt:e}\nsteps = {steps}\n",
            2 * half_n
        );
        let parsed = parse_config(&text).unwrap();
        let mut expected = RunConfig { regime: label, n: 2 * half_n, dt, steps, ..RunConfig::default() };
        expected.params = DiffusionRegime::preset(label, c).parameters;
        expected.params.d12 = d12;
        prop_assert_eq!(&parsed, &expected);

        let g = parsed.grid().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("x.csv");
        io::write_metadata(&data, &io::Metadata::new(&parsed, &g, vec!["bvam".into()]).unwrap()).unwrap();
        let back: RunConfig = serde_json::from_value(io::read_metadata(&data).unwrap().config).unwrap();
        prop_assert_eq!(back, parsed);
    }
}

#[test]
fn presets_match_the_parameter_table() {
    for label in RegimeLabel::ALL {
        let p = DiffusionRegime::preset(label, -1.0).parameters;
        assert_relative_eq!(p.lx, 5.0);
        assert_relative_eq!(p.h, 3.0);
        assert_relative_eq!(p.eta, 1.0);
        assert_relative_eq!(p.a, -1.0);
        assert_relative_eq!(p.b, -1.5);
        assert_relative_eq!(p.d1, 0.08);
        assert_relative_eq!(p.d2, 1.0);
        let (d11, d22, d12) = match label {
            RegimeLabel::Linear => (0.0, 0.0, 0.0),
            RegimeLabel::SelfU1 => (0.07, 0.0, 0.0),
            RegimeLabel::SelfU2 => (0.0, 0.05, 0.0),
            RegimeLabel::Cross => (0.0, 0.0, 0.02),
        };
        assert_eq!((p.d11, p.d22, p.d12), (d11, d22, d12));
    }
}
