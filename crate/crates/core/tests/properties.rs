use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use epsense::gaussian::{apply_external_loss, evolve, propagator};
use epsense::linalg::c;
use epsense::metrology::{delta_eps, noise_closed_form, noise_variance, qfi, Observable, ObservableKind, Probe};
use epsense::model::{build_system, check_symmetries, ep4_locus, SystemConfig};
use epsense::spectral::{eigenvalues_general, eigensolve, match_branches};

/// Lossless configuration with n <= 6 modes.
fn lossless_config() -> impl Strategy<Value = SystemConfig> {
    (2usize..=6)
        .prop_flat_map(|n| (Just(n), 1..n))
        .prop_flat_map(|(n, m)| {
            let k = n - 1;
            (
                Just((n, m)),
                prop::collection::vec(0.0..2.0f64, m),
                prop::collection::vec(0.0..2.0f64, k - m),
                prop::collection::vec(-2.0..2.0f64, k),
                prop::collection::vec(-0.1..0.1f64, k),
                prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), k),
            )
        })
        .prop_map(|((n, m), g, kappa, delta, epsilon, alpha)| SystemConfig {
            n,
            m,
            g,
            kappa,
            delta,
            epsilon,
            gamma: 0.0,
            gamma_m: 0.0,
            alpha: alpha.into_iter().map(|(a, b)| c(a, b)).collect(),
            rate_scale: 1.0,
        })
}

fn min_gap(z: &[Complex64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            gap = gap.min((z[i] - z[j]).norm());
        }
    }
    gap
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn symmetries_hold_for_lossless_configs(cfg in lossless_config()) {
        let r = check_symmetries(&build_system(&cfg).unwrap());
        prop_assert!(r.particle_hole < 1e-13, "{}", r.particle_hole);
        prop_assert!(r.pseudo_hermitian < 1e-13, "{}", r.pseudo_hermitian);
    }

    #[test]
    fn full_spectrum_is_reduced_plus_mirror(cfg in lossless_config()) {
        let dm = build_system(&cfg).unwrap();
        let red = eigenvalues_general(&dm.reduced).unwrap();
        let mut expected = red.clone();
        expected.extend(red.iter().map(|z| -z.conj()));
        // well separated spectra only; near-degenerate roots are ill conditioned
        prop_assume!(min_gap(&expected) > 1e-2);
        let full = eigenvalues_general(&dm.full).unwrap();
        let matched = match_branches(&expected, &full);
        let err = expected.iter().zip(&matched).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-7 * dm.scale().max(1.0), "{err}");
    }

    #[test]
    fn lossless_propagator_is_symplectic_and_pure(cfg in lossless_config(), t in 0.0..20.0f64) {
        let dm = build_system(&cfg).unwrap();
        let p = propagator(&dm, t).unwrap();
        prop_assume!(p.s_quad.norm() < 1e4);
        let tol = 1e-10 * p.s_quad.norm().powi(2).max(1.0);
        prop_assert!(p.symplectic_defect() < tol, "{}", p.symplectic_defect());
        let s = evolve(&epsense::gaussian::coherent_init(&cfg).unwrap(), &p).unwrap();
        // det(2 Lambda) loses about cond(Lambda) = ||2 Lambda||^2 digits
        let cond = (&s.lambda * 2.0).norm().powi(2);
        prop_assert!((s.purity_determinant() - 1.0).abs() < 1e-13 * cond.max(1.0) * cfg.n as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cardano_matches_general_solver(
        g in 0.0..2.0f64, k in 0.0..2.0f64, d1 in -2.0..2.0f64, d2 in -2.0..2.0f64,
    ) {
        let cfg = SystemConfig { g: vec![g], kappa: vec![k], delta: vec![d1, d2], ..SystemConfig::ep3_sensor(1.0, 1.0) };
        let spec = eigensolve(&build_system(&cfg).unwrap()).unwrap();
        prop_assume!(min_gap(&spec.eigenvalues) > 1e-3);
        prop_assert!(spec.crosscheck.unwrap() < 1e-10, "{:?}", spec.crosscheck);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn noise_closed_forms_at_random_times(g in 0.5..0.99f64, chi_t in 0.0..(4.0 * PI)) {
        let probe = Probe::ep3_sensor(g, 2.0).unwrap();
        let t = chi_t / probe.meta.chi.unwrap();
        for kind in [ObservableKind::X1MinusX2, ObservableKind::X1PlusX2] {
            let obs = match kind {
                ObservableKind::X1MinusX2 => Observable::x1_minus_x2(3).unwrap(),
                _ => Observable::x1_plus_x2(3).unwrap(),
            };
            let exact = noise_closed_form(kind, g, 1.0, chi_t).unwrap();
            let got = noise_variance(&probe, &obs, t).unwrap();
            prop_assert!((got - exact).abs() < 1e-8 * exact.max(1.0), "{kind}: {got} vs {exact}");
        }
    }

    #[test]
    fn sensitivity_never_beats_the_qcrb(g in 0.8..0.98f64, chi_t in 0.3..(4.0 * PI), alpha in 0.5..4.0f64) {
        let probe = Probe::ep3_sensor(g, alpha).unwrap();
        let t = chi_t / probe.meta.chi.unwrap();
        let f = qfi(&probe, t, 0.0).unwrap();
        for kind in [ObservableKind::X1MinusX2, ObservableKind::X1PlusX2, ObservableKind::Optimal] {
            let de = delta_eps(&probe, kind, t).unwrap();
            prop_assert!(de * f.sqrt() >= 1.0 - 1e-6, "{kind}: {}", de * f.sqrt());
        }
    }

    #[test]
    fn delta_eps_grows_with_readout_loss(g in 0.85..0.98f64, a in 0.3..1.0f64, b in 0.3..1.0f64) {
        let (hi, lo) = if a > b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-3);
        let base = Probe::ep3_sensor(g, 2.0).unwrap();
        let t = base.working_time(1.0).unwrap();
        let de = |eta: f64| delta_eps(&base.clone().with_readout_efficiency(eta).unwrap(), ObservableKind::X1MinusX2, t).unwrap();
        prop_assert!(de(lo) >= de(hi));
    }

    #[test]
    fn external_loss_squeezing_law(e2r in 0.01..1.0f64, eta in 0.0..1.0f64) {
        let mut s = epsense::gaussian::GaussianState::vacuum(vec!["b".into()]);
        s.lambda[(0, 0)] = e2r / 2.0;
        s.lambda[(1, 1)] = 0.5 / e2r;
        let out = apply_external_loss(&s, &[eta]).unwrap();
        prop_assert!((2.0 * out.lambda[(0, 0)] - (eta * e2r + 1.0 - eta)).abs() < 1e-12);
    }

    #[test]
    fn ep4_locus_gives_a_fourfold_point(f in 0.05..0.6f64) {
        let p = ep4_locus(f).unwrap();
        let spec = eigensolve(&build_system(&SystemConfig::ep4(f).unwrap()).unwrap()).unwrap();
        prop_assert_eq!(spec.ep_order, 4);
        prop_assert!((spec.cluster_center() - c(p.eigenvalue, 0.0)).norm() < 1e-6);
        for z in &spec.eigenvalues {
            prop_assert!((z - c(p.eigenvalue, 0.0)).norm() < 1e-3 * p.g.max(1.0), "{z}");
        }
    }
}
