//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion outside `UNATTAINABLE` fails.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{rngs::StdRng, Rng, SeedableRng};

use shaperes::cli::{full_rule, run_full, run_reduced, Scenario};
use shaperes::greens::{gamma_p, green_cc, green_xc_deformed, p0_closed_form};
use shaperes::model::{epsilon, AlphaProfile, ModelParams, PartitionFn, RampKind};
use shaperes::propagator::{
    adiabatic_check, observable_a, resolvent_apply, DiscreteHamiltonian, Grid, GridField,
};
use shaperes::reduced::{reduced_model, ReducedSolution};
use shaperes::scattering::{lorentzian_integral, lorentzian_leading, scattering_state, stationary_observable};
use shaperes::spectra::{find_resonance, resonance_seed, resonance_trajectory};

const LEFT: &str = include_str!("../../../presets/left-case.toml");
const RIGHT: &str = include_str!("../../../presets/right-case.toml");
const BOUNDARY: &str = include_str!("../../../presets/boundary-layer.toml");

/// Criteria left failing by design; see the decisions ledger.
const UNATTAINABLE: [u32; 1] = [10];

mod tol {
    pub const RESIDUAL: f64 = 1e-12;
    pub const NEWTON_ITERATIONS: usize = 8;
    pub const EXPANSION_AT_SMALLEST_H: f64 = 0.05;
    pub const P0: f64 = 1e-12;
    pub const UNITARITY: f64 = 1e-12;
    pub const ODE_RESIDUAL: f64 = 1e-10;
    pub const TRANSFER: f64 = 1e-10;
    pub const LORENTZIAN_AT_SMALLEST_H: f64 = 0.10;
    pub const KREIN_ORDER: f64 = 1.9;
    pub const NORM_GROWTH: f64 = 1e-6;
    pub const RAMP_DEVIATION: f64 = 0.20;
    pub const FROZEN_DEVIATION: f64 = 0.02;
    pub const RIGHT_RATIO: f64 = 0.05;
    pub const BOUNDARY_SAMPLES: usize = 5;
    pub const RK4_GAP: f64 = 1e-8;
    pub const FIXED_POINT: f64 = 1e-12;
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn params(c: f64, h: f64, tau: f64) -> ModelParams<f64> {
    ModelParams { a: 0.0, b: 1.0, c, v0: 1.0, h, theta0: Complex64::new(0.0, tau), eta: 0.14, d0: 1.0, t_final: 1.0 }
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn sci(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

fn c1_resonance_equation() -> Outcome {
    let mut worst = 0.0f64;
    let mut iters = 0;
    let mut windings = Vec::new();
    for text in [LEFT, RIGHT, BOUNDARY] {
        let sc = Scenario::parse(text).unwrap();
        let p = sc.params();
        let alpha = sc.profile.alpha0;
        let r = find_resonance(alpha, &p, Some(resonance_seed(alpha, &p))).unwrap();
        let (g, _) = green_cc(r.e, &p).map(|d| (d.value, ())).unwrap();
        worst = worst.max((1.0 + p.h * alpha * g).norm());
        iters = iters.max(r.iterations);
        windings.push(r.winding);
    }
    let ok = worst < tol::RESIDUAL && iters <= tol::NEWTON_ITERATIONS && windings.iter().all(|w| *w == Some(1));
    outcome(ok, format!("max |1+hαG| = {worst:.2e}, max Newton iterations {iters}, windings {windings:?}"))
}

fn c2_expansion() -> Outcome {
    let alpha = -1.0;
    let mut errs = Vec::new();
    for h in [0.12, 0.10, 0.08, 0.06] {
        let p = params(0.3, h, 0.0);
        let r = find_resonance(alpha, &p, None).unwrap();
        let e0 = 1.0 - alpha * alpha / 4.0;
        let rescaled = (r.e - e0) / (-alpha.abs() * (p.c - p.a) / h).exp();
        let target = -p0_closed_form(alpha, 1.0) * (alpha * alpha / 2.0);
        errs.push((rescaled - target).norm() / target.norm());
    }
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    let ok = monotone && errs[3] < tol::EXPANSION_AT_SMALLEST_H;
    outcome(ok, format!("relative errors {}", sci(&errs)))
}

fn c3_p0_closed_form() -> Outcome {
    let mut rng = StdRng::seed_from_u64(20);
    let p = params(0.3, 0.1, 0.0);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let alpha: f64 = -rng.random_range(1e-3..2.0 - 1e-3);
        let e0 = Complex64::new(1.0 - alpha * alpha / 4.0, 0.0);
        let gp = gamma_p(e0, Complex64::new(0.0, 0.0), &p).unwrap();
        // independent closed form with E0 = V0 - α²/4
        let e0r = e0.re;
        let oracle = Complex64::new(-(2.0 * e0r - 1.0), 2.0 * (e0r * (1.0 - e0r)).sqrt());
        worst = worst.max((gp.p - oracle).norm());
    }
    outcome(worst < tol::P0, format!("max |p - p0| = {worst:.2e} over 20 couplings"))
}

/// Transmission probability of the rectangular barrier.
fn transfer_oracle(k: f64, h: f64, v0: f64, l: f64) -> f64 {
    let e = k * k;
    let kappa = (v0 - e).sqrt() / h;
    let s = (kappa * l).sinh();
    1.0 / (1.0 + v0 * v0 * s * s / (4.0 * e * (v0 - e)))
}

fn c4_scattering() -> Outcome {
    let p = params(0.3, 0.1, 0.0);
    let g = PartitionFn::new(0.36, p.h, p.d0);
    let (lo, hi) = g.k_support();
    let (mut unit, mut ode, mut tm) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..=50 {
        let k = lo + (hi - lo) * (i as f64 + 0.5) / 51.0;
        let st = scattering_state(k, &p).unwrap();
        unit = unit.max((st.r.norm_sqr() + st.t.norm_sqr() - 1.0).abs());
        tm = tm.max((st.t.norm_sqr() - transfer_oracle(k, p.h, p.v0, 1.0)).abs());
        // sixth-order central difference for ψ''
        let d = 2e-3;
        let coef = [(1.0 / 90.0, 3.0), (-3.0 / 20.0, 2.0), (1.5, 1.0)];
        let xs: Vec<f64> = (1..20).map(|j| j as f64 / 20.0).collect();
        let scale = xs.iter().map(|x| st.interior(*x).norm()).fold(0.0, f64::max) * p.v0;
        for x in xs {
            let mut dxx = st.interior(x) * (-49.0 / 18.0);
            for (c, m) in coef {
                dxx += (st.interior(x + m * d) + st.interior(x - m * d)) * c;
            }
            dxx /= d * d;
            let res = -dxx * (p.h * p.h) + st.interior(x) * (p.v0 - k * k);
            ode = ode.max(res.norm() / scale);
        }
    }
    let ok = unit < tol::UNITARITY && ode < tol::ODE_RESIDUAL && tm < tol::TRANSFER;
    outcome(ok, format!("unitarity {unit:.2e}, ODE residual {ode:.2e}, transfer-matrix gap {tm:.2e}"))
}

fn c5_lorentzian() -> Outcome {
    let alpha0 = -1.6;
    let mut devs = Vec::new();
    for h in [0.12, 0.10, 0.08, 0.06] {
        let p = ModelParams { t_final: 1.0, ..params(0.3, h, 0.02) };
        let alpha = AlphaProfile::constant(alpha0, 1.0);
        let g = PartitionFn::new(1.0 - alpha0 * alpha0 / 4.0, h, 1.0);
        let r = find_resonance(alpha0, &p, None).unwrap();
        let integral = lorentzian_integral(0.0, &alpha, &g, &p, r.e).unwrap();
        let leading = lorentzian_leading(alpha0, &g, &p);
        devs.push((integral - leading).abs() / leading);
    }
    let ok = devs.windows(2).all(|w| w[1] < w[0]) && devs[3] < tol::LORENTZIAN_AT_SMALLEST_H;
    outcome(ok, format!("relative deviations {}", sci(&devs)))
}

fn c6_krein() -> Outcome {
    let p = params(0.3, 0.1, 0.02);
    let theta = Complex64::new(0.0, 0.5);
    let alpha = -1.0;
    let mut orders = Vec::new();
    for z in [Complex64::new(0.5, 0.05), Complex64::new(0.7, -0.01)] {
        let gcc = green_cc(z, &p).unwrap().value;
        let errs: Vec<f64> = [0.01, 0.005, 0.0025]
            .iter()
            .map(|&dx| {
                let grid = Grid::with_spacing(&p, 3.0, dx).unwrap();
                let hd = DiscreteHamiltonian::assemble(alpha, theta, &grid, &p).unwrap();
                let u = resolvent_apply(&hd, z, &GridField::delta_c(&grid)).unwrap();
                let lo = grid.ia - (0.3 / dx).round() as usize;
                let hi = grid.ib + (0.3 / dx).round() as usize;
                let exact: Vec<Complex64> = (lo..=hi)
                    .map(|j| green_xc_deformed(z, grid.x(j), theta, &p).unwrap() / (1.0 + p.h * alpha * gcc))
                    .collect();
                let diff: Vec<Complex64> = (lo..=hi).zip(&exact).map(|(j, e)| u.values[j] - e).collect();
                grid.norm(&diff) / grid.norm(&exact)
            })
            .collect();
        orders.extend(errs.windows(2).map(|w| (w[0] / w[1]).log2()));
    }
    let ok = orders.iter().all(|o| *o >= tol::KREIN_ORDER);
    outcome(ok, format!("observed orders {orders:.3?}"))
}

fn c7_contraction_and_tracking() -> Outcome {
    let mut sups = Vec::new();
    let mut growth = 0.0f64;
    for h in [0.12, 0.08] {
        let p = ModelParams { t_final: 1.0, ..params(0.3, h, 0.02) };
        let alpha = AlphaProfile { alpha0: -1.0, amplitude: 2.0 * h / 3.0, ramp: RampKind::Smoothstep, t_final: 1.0 };
        let times: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
        let traj = resonance_trajectory(&alpha, &p, &times, 10).unwrap();
        let grid = Grid::with_spacing(&p, 10.0, 0.004).unwrap();
        let eps = epsilon(&p, &alpha);
        let rep = adiabatic_check(&traj, &alpha, p.theta0, eps, &grid, &p, None).unwrap();
        growth = growth.max(rep.max_growth);
        sups.push(rep.sup);
    }
    let ok = growth <= tol::NORM_GROWTH && sups[1] < sups[0];
    outcome(ok, format!("max step growth {growth:.2e}, sup δ at h = 0.12, 0.08: {}", sci(&sups)))
}

struct LeftRun {
    times: Vec<f64>,
    full: Vec<f64>,
    model: ReducedSolution,
}

fn left_run() -> LeftRun {
    let sc = Scenario::parse(LEFT).unwrap();
    let (traj, model) = run_reduced(&sc).unwrap();
    let (series, _) = run_full(&sc, &traj, workers()).unwrap();
    LeftRun { times: series.times, full: series.values, model }
}

fn c8_reduced_vs_full(left: &LeftRun) -> Outcome {
    let model: Vec<f64> = left.times.iter().map(|t| left.model.model_at(*t)).collect();
    let scale = max_abs(&left.model.a_model);
    let ramp = left.full.iter().zip(&model).map(|(f, m)| (f - m).abs()).fold(0.0, f64::max) / scale;

    // frozen control against the exact stationary observable
    let sc = Scenario::parse(LEFT).unwrap();
    let mut frozen = sc.clone();
    frozen.profile.amplitude = 0.0;
    let p = frozen.params();
    let (traj, _) = run_reduced(&frozen).unwrap();
    let (series, on_rule) = run_full(&frozen, &traj, workers()).unwrap();
    let exact = stationary_observable(frozen.profile.alpha0, &frozen.partition(), &frozen.chi(), &p, traj.resonances[0].e).unwrap();
    let control = max_abs(&series.values.iter().map(|v| v - exact).collect::<Vec<_>>()) / exact;
    let ok = ramp < tol::RAMP_DEVIATION && control < tol::FROZEN_DEVIATION;
    outcome(
        ok,
        format!(
            "ramp max deviation {ramp:.4}, frozen control {control:.2e} (exact {exact:.6}, on rule {on_rule:.6}, rule nodes {})",
            full_rule(&frozen, &traj).len()
        ),
    )
}

fn stationary_full(sc: &Scenario, h: f64, dx: f64) -> f64 {
    let mut sc = sc.clone();
    sc.scales.h = h;
    sc.profile.amplitude = 0.0;
    sc.numerics.dx = Some(dx);
    let p = sc.params();
    let alpha = sc.alpha();
    let traj = resonance_trajectory(&alpha, &p, &[0.0], 0).unwrap();
    let rule = full_rule(&sc, &traj);
    let grid = sc.grid().unwrap();
    let eps = epsilon(&p, &alpha);
    let theta = Complex64::new(0.0, sc.numerics.tau);
    observable_a(&alpha, &sc.partition(), &sc.chi(), theta, eps, &grid, &p, &rule, &[0.0], None, workers()).unwrap().values[0]
}

fn c9_right_suppression(left: &LeftRun) -> Outcome {
    let sc = Scenario::parse(RIGHT).unwrap();
    let (traj, _) = run_reduced(&sc).unwrap();
    let (series, _) = run_full(&sc, &traj, workers()).unwrap();
    let ratio = series
        .values
        .iter()
        .zip(&left.full)
        .map(|(r, l)| r.abs() / l.abs())
        .fold(0.0, f64::max);
    let hs = [0.12, 0.10, 0.08];
    let logs: Vec<f64> = hs.iter().map(|&h| stationary_full(&sc, h, 0.004).ln()).collect();
    let xs: Vec<f64> = hs.iter().map(|h| 1.0 / h).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, logs.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&logs).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    let exponent = -slope;
    let ok = ratio < tol::RIGHT_RATIO && exponent > 0.0;
    outcome(ok, format!("max A_right/A_left {ratio:.3e}, fitted decay exponent {exponent:.4}"))
}

fn c10_boundary_layer() -> Outcome {
    let sc = Scenario::parse(BOUNDARY).unwrap();
    let (_, sol) = run_reduced(&sc).unwrap();
    let t_star = sc.alpha().return_time().unwrap();
    let i_star = sol.times.iter().enumerate().fold(0, |b, (i, t)| {
        if (t - t_star).abs() < (sol.times[b] - t_star).abs() {
            i
        } else {
            b
        }
    });
    let i_max = (0..sol.j2.len()).fold(0, |b, i| if sol.j2[i].abs() > sol.j2[b].abs() { i } else { b });
    let ok = sol.j2[0] == 0.0 && i_max.abs_diff(i_star) <= tol::BOUNDARY_SAMPLES;
    outcome(
        ok,
        format!(
            "J2(0) = {:e}, argmax |J2| at t = {:.4} (|J2| = {:.3e}), t* = {t_star}, J2(t*) = {:.3e}",
            sol.j2[0], sol.times[i_max], sol.j2[i_max].abs(), sol.j2[i_star]
        ),
    )
}

fn c11_reduced_consistency() -> Outcome {
    let sc = Scenario::parse(LEFT).unwrap();
    let (_, sol) = run_reduced(&sc).unwrap();
    let frozen = sc.alpha().frozen();
    let (_, fixed) = reduced_model(&frozen, &sc.partition(), &sc.params()).unwrap();
    let drift = fixed.a.iter().map(|v| (v - fixed.a[0]).abs()).fold(0.0, f64::max);
    let g0 = sc.partition().eval(fixed.lambda[0].sqrt());
    let start = (fixed.a[0] - g0).abs();
    let ok = sol.rk4_gap < tol::RK4_GAP && drift < tol::FIXED_POINT && start < tol::FIXED_POINT;
    outcome(ok, format!("RK4 gap {:.2e}, frozen drift {drift:.2e}, a(0) - g(sqrt Re E(0)) = {start:.2e}", sol.rk4_gap))
}

fn selected(id: u32) -> bool {
    std::env::var("ACCEPTANCE_ONLY")
        .map(|v| v.split(',').any(|s| s.trim().parse() == Ok(id)))
        .unwrap_or(true)
}

fn report(id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Outcome, failures: &mut Vec<u32>) {
    if !selected(id) {
        return;
    }
    let start = Instant::now();
    let o = f();
    let elapsed = start.elapsed();
    let pass = o.pass && elapsed <= budget;
    println!(
        "{} criterion {id:>2} {name}: {} [{:.1} s of {:.0} s]",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    if !pass {
        failures.push(id);
    }
}

fn main() {
    let s = Duration::from_secs;
    let mut failures = Vec::new();
    report(1, "resonance equation", s(1), c1_resonance_equation, &mut failures);
    report(2, "asymptotic expansion", s(5), c2_expansion, &mut failures);
    report(3, "closed-form p0", s(1), c3_p0_closed_form, &mut failures);
    report(4, "scattering unitarity", s(1), c4_scattering, &mut failures);
    report(5, "lorentzian integral", s(10), c5_lorentzian, &mut failures);
    report(6, "krein formula", s(30), c6_krein, &mut failures);
    report(11, "reduced ODE consistency", s(1), c11_reduced_consistency, &mut failures);
    report(10, "boundary-layer J2", s(10), c10_boundary_layer, &mut failures);
    report(7, "contraction and tracking", s(300), c7_contraction_and_tracking, &mut failures);
    if !(selected(8) || selected(9)) {
        return finish(failures);
    }
    let start = Instant::now();
    let left = left_run();
    let shared = start.elapsed();
    report(8, "reduced vs full", s(1200) - shared, || c8_reduced_vs_full(&left), &mut failures);
    report(9, "right-case suppression", s(1200), || c9_right_suppression(&left), &mut failures);

    finish(failures);
}

fn finish(failures: Vec<u32>) {
    let blocking: Vec<u32> = failures.iter().copied().filter(|id| !UNATTAINABLE.contains(id)).collect();
    println!("acceptance: {} failing, {} expected", failures.len(), failures.len() - blocking.len());
    if !blocking.is_empty() {
        std::process::exit(1);
    }
}
