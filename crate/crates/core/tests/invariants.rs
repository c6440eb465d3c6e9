use num_complex::Complex64;
use proptest::prelude::*;

use shaperes::cli::TimeSeries;
use shaperes::greens::{gamma_p, lambda, p0_closed_form};
use shaperes::model::{validate, AlphaProfile, ChiObservable, ModelParams, PartitionFn, RampKind};
use shaperes::propagator::{DiscreteHamiltonian, Grid};
use shaperes::reduced::{correction_j2, relax, time_grid, ReducedInputs};
use shaperes::scattering::{scattering_state, stationary_observable};
use shaperes::spectra::{find_resonance, resonance_trajectory};
use shaperes::tridiag::Tridiag;

fn params(c: f64, h: f64, tau: f64) -> ModelParams<f64> {
    ModelParams {
        a: 0.0,
        b: 1.0,
        c,
        v0: 1.0,
        h,
        theta0: Complex64::new(0.0, tau),
        eta: 0.14,
        d0: 1.0,
        t_final: 1.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chi_is_a_cutoff(x in -0.5f64..1.5, eta in 0.02f64..0.14) {
        let chi = ChiObservable::new(0.3, eta);
        let v = chi.eval(x);
        prop_assert!((0.0..=1.0).contains(&v));
        let d = (x - 0.3).abs();
        if d <= eta {
            prop_assert_eq!(v, 1.0);
        }
        if d >= 2.0 * eta {
            prop_assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn partition_is_nonnegative_and_windowed(k in 0.0f64..1.2, h in 0.05f64..0.12) {
        let g = PartitionFn::new(0.36, h, 1.0);
        let v = g.eval(k);
        prop_assert!(v >= 0.0);
        if (k * k - 0.36).abs() >= 2.0 * h {
            prop_assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn admissible_profiles_validate(alpha0 in -1.78f64..-0.9, frac in 0.0f64..1.0, t in 0.0f64..2.0) {
        let h = 0.1;
        let p = params(0.3, h, 0.02);
        // spread of the return ramp is twice its amplitude
        let amp = frac * h;
        let alpha = AlphaProfile { alpha0, amplitude: amp, ramp: RampKind::Return, t_final: 2.0 };
        let g = PartitionFn::new(1.0 - alpha0 * alpha0 / 4.0, h, 1.0);
        let report = validate(&p, &alpha, &g);
        prop_assert!(report.passed(), "{:?}", report.violations);
        prop_assert!((alpha.value(t) - alpha0).abs() <= amp * (1.0 + 1e-12));
    }

    #[test]
    fn lambda_has_negative_imaginary_part(re in 0.05f64..0.95, im in -0.2f64..0.2) {
        let l = lambda(Complex64::new(re, im), &params(0.3, 0.1, 0.02)).unwrap();
        prop_assert!(l.im < 0.0);
    }

    #[test]
    fn scattering_is_unitary_without_deformation(k in 0.3f64..0.95, h in 0.05f64..0.15) {
        let st = scattering_state(k, &params(0.3, h, 0.0)).unwrap();
        prop_assert!((st.r.norm_sqr() + st.t.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflection_factor_closed_form(alpha in -1.99f64..-0.01) {
        let p = params(0.3, 0.1, 0.0);
        let e0 = Complex64::new(1.0 - alpha * alpha / 4.0, 0.0);
        let gp = gamma_p(e0, Complex64::new(0.0, 0.0), &p).unwrap();
        let closed = p0_closed_form(alpha, 1.0);
        prop_assert!((gp.p - closed).norm() < 1e-12 * closed.norm().max(1.0));
    }

    #[test]
    fn discrete_operator_is_dissipative(seed in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 161),
                                        alpha in -1.8f64..-0.5) {
        let p = params(0.3, 0.1, 0.02);
        let grid = Grid::new(&p, 1.0, 300).unwrap();
        let hd = DiscreteHamiltonian::assemble(alpha, p.theta0, &grid, &p).unwrap();
        let mut u = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (j, (a, b)) in seed.iter().enumerate() {
            u[20 + j] = Complex64::new(*a, *b);
        }
        let hu = hd.apply(&u);
        let form: Complex64 = u.iter().zip(&hu).map(|(a, b)| a.conj() * b).sum();
        let scale: f64 = u.iter().map(|v| v.norm_sqr()).sum::<f64>() * hd.norm_estimate();
        prop_assert!(form.im <= 1e-12 * scale, "Im <u, Hu> = {}", form.im);
    }

    #[test]
    fn tridiagonal_solve_inverts(n in 3usize..40, shift in 3.0f64..6.0, off in -1.0f64..1.0) {
        let mut m = Tridiag::zeros(n);
        for i in 0..n {
            m.diag[i] = Complex64::new(shift, 0.3 * i as f64 / n as f64);
            m.sub[i] = Complex64::new(off, 0.1);
            m.sup[i] = Complex64::new(-off, 0.2);
        }
        let f: Vec<Complex64> = (0..n).map(|i| Complex64::new((i as f64).cos(), 1.0)).collect();
        let back = m.apply(&m.solve(&f).unwrap());
        let err = back.iter().zip(&f).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12);
    }

    #[test]
    fn relaxation_approaches_fixed_target(rate in 0.0f64..5.0, a0 in 0.0f64..1.0, target in 0.0f64..1.0) {
        let times = time_grid(1.0f64, shaperes::reduced::SAMPLES_PER_UNIT);
        let r = relax(&times, &vec![rate; times.len()], &vec![target; times.len()], a0).unwrap();
        for w in r.closed.windows(2) {
            prop_assert!((w[1] - target).abs() <= (w[0] - target).abs() + 1e-14);
        }
        prop_assert!(r.gap < 1e-8);
    }

    #[test]
    fn csv_round_trips(values in proptest::collection::vec(-1e6f64..1e6, 1..20)) {
        let t: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
        let csv = TimeSeries::new().with("t", t).with("v", values.clone()).to_csv("h").unwrap();
        let parsed: Vec<f64> = csv.lines().skip(2).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        prop_assert_eq!(parsed, values);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn resonance_is_well_posed(alpha in -1.8f64..-0.8, h in 0.07f64..0.12) {
        let p = params(0.3, h, 0.02);
        let r = find_resonance(alpha, &p, None).unwrap();
        prop_assert!(r.gamma() >= 0.0);
        prop_assert!(r.e.re > 0.0 && r.e.re < p.v0);
        prop_assert!(r.residual < 1e-12);
    }

    #[test]
    fn observable_is_linear_in_partition(scale in 0.1f64..3.0) {
        let p = params(0.3, 0.1, 0.02);
        let r = find_resonance(-1.6, &p, None).unwrap();
        let g = PartitionFn::new(0.36, 0.1, 1.0);
        let chi = ChiObservable::new(0.3, 0.14);
        let base = stationary_observable(-1.6, &g, &chi, &p, r.e).unwrap();
        let scaled = stationary_observable(-1.6, &g.scaled(scale), &chi, &p, r.e).unwrap();
        prop_assert!((scaled - scale * base).abs() < 1e-9 * base.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn boundary_correction_starts_at_zero(frac in 0.1f64..1.0) {
        let p = ModelParams { t_final: 0.5, ..params(0.3, 0.1, 0.02) };
        let alpha = AlphaProfile { alpha0: -1.6, amplitude: frac * 0.1, ramp: RampKind::Return, t_final: 0.5 };
        let g = PartitionFn::new(0.36, 0.1, 1.0);
        let times = time_grid(0.5, 400);
        let traj = resonance_trajectory(&alpha, &p, &times, 0).unwrap();
        let inputs = ReducedInputs::new(&traj, &alpha, &g, &p);
        prop_assert_eq!(correction_j2(&inputs, -1.6)[0], 0.0);
    }
}
