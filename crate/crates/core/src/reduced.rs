//! Reduced adiabatic model for the observable: the relaxation amplitude
//! `a(t)`, the norm factor `μ(t)`, the two corrections and their sum.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::greens::Kernel;
use crate::model::{epsilon, AlphaProfile, ChiObservable, ModelParams, PartitionFn, Side};
use crate::quadrature::{cumulative_simpson, Rule};
use crate::scalar::{imag_unit, lit, re, to_f64, Real};
use crate::scattering::lorentzian_integral;
use crate::spectra::{newton_resonance, resonance_trajectory, ResonanceTrajectory};

type C<T> = Complex<T>;

/// Samples per unit of slow time (400, refined four times for the
/// oscillating phase of the second correction).
pub const SAMPLES_PER_UNIT: usize = 1600;

/// Uniform grid on `[0, t_final]` with an even number of intervals.
pub fn time_grid<T: Real>(t_final: T, per_unit: usize) -> Vec<T> {
    let mut n = ((to_f64(t_final) * per_unit as f64).ceil() as usize).max(2);
    n += n % 2;
    (0..=n).map(|i| t_final * lit::<T>(i as f64 / n as f64)).collect()
}

/// Output of [`relax`]: closed form on every sample, RK4 on even samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Relaxation<T> {
    pub closed: Vec<T>,
    pub rk4: Vec<T>,
    /// `max |rk4 - closed|` over the even samples.
    pub gap: T,
}

/// Solves `a' = -rate (a - target)` on a uniform grid two ways: the
/// integrating-factor formula with cumulative Simpson quadrature, and RK4 with
/// step `2Δ` taking the midpoint data from the odd samples.
pub fn relax<T: Real>(times: &[T], rate: &[T], target: &[T], a0: T) -> Result<Relaxation<T>> {
    let n = times.len();
    if n < 3 || n.is_multiple_of(2) || rate.len() != n || target.len() != n {
        return Err(Error::Invalid("relaxation needs an odd number of aligned samples".into()));
    }
    let dt = times[1] - times[0];
    let expo = cumulative_simpson(rate, dt);
    let weighted: Vec<T> = (0..n).map(|i| expo[i].exp() * rate[i] * target[i]).collect();
    let source = cumulative_simpson(&weighted, dt);
    let closed: Vec<T> = (0..n).map(|i| (-expo[i]).exp() * (a0 + source[i])).collect();

    let f = |i: usize, a: T| -rate[i] * (a - target[i]);
    let step = dt + dt;
    let mut rk4 = Vec::with_capacity(n / 2 + 1);
    let mut a = a0;
    rk4.push(a);
    let two = lit::<T>(2.0);
    let six = lit::<T>(6.0);
    for i in (0..n - 1).step_by(2) {
        let k1 = f(i, a);
        let k2 = f(i + 1, a + dt * k1);
        let k3 = f(i + 1, a + dt * k2);
        let k4 = f(i + 2, a + step * k3);
        a += step * (k1 + two * k2 + two * k3 + k4) / six;
        rk4.push(a);
    }
    let gap = rk4.iter().enumerate().map(|(j, v)| (*v - closed[2 * j]).abs()).fold(T::zero(), T::max);
    Ok(Relaxation { closed, rk4, gap })
}

/// Per-sample inputs of the reduced model.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedInputs<T> {
    pub times: Vec<T>,
    pub eps: T,
    /// `α_t / α_0`.
    pub ratio: Vec<T>,
    /// `Γ_t / ε` from the computed trajectory.
    pub gamma_over_eps: Vec<T>,
    /// `λ_t = Re E(t)`.
    pub lambda: Vec<T>,
    /// `g(sqrt λ_t)`.
    pub g_at: Vec<T>,
}

impl<T: Real> ReducedInputs<T> {
    pub fn new(
        trajectory: &ResonanceTrajectory<T>,
        alpha: &AlphaProfile<T>,
        g: &PartitionFn<T>,
        params: &ModelParams<T>,
    ) -> Self {
        let eps = epsilon(params, alpha);
        let a0 = alpha.value(T::zero());
        let lambda: Vec<T> = trajectory.resonances.iter().map(|r| r.e_r()).collect();
        Self {
            times: trajectory.times.clone(),
            eps,
            ratio: trajectory.times.iter().map(|&t| alpha.value(t) / a0).collect(),
            gamma_over_eps: trajectory.resonances.iter().map(|r| r.gamma() / eps).collect(),
            g_at: lambda.iter().map(|&l| g.eval(l.max(T::zero()).sqrt())).collect(),
            lambda,
        }
    }

    /// `|α_t/α_0|³ g(sqrt λ_t)`.
    pub fn target(&self) -> Vec<T> {
        self.ratio.iter().zip(&self.g_at).map(|(r, g)| r.abs().powi(3) * *g).collect()
    }
}

/// `a(t)` with its RK4 cross-check; left case only.
pub fn solve_reduced<T: Real>(inputs: &ReducedInputs<T>, params: &ModelParams<T>) -> Result<Relaxation<T>> {
    if params.side() != Side::Left {
        return Err(Error::CaseMismatch("left (c - a < b - c)"));
    }
    let rate: Vec<T> = inputs.gamma_over_eps.iter().map(|&x| x + x).collect();
    relax(&inputs.times, &rate, &inputs.target(), inputs.g_at[0])
}

/// Both estimates of the adiabatic norm factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MuEstimate<T> {
    /// `|α_t/α_0|^{3/2}`.
    pub leading: T,
    /// `‖G(0)‖ / ‖G(t)‖` with norms over `(a, b)`.
    pub norm_ratio: T,
}

/// `∫_a^b |G^E(x, c)|² dx`.
pub fn green_norm_sq<T: Real>(e: C<T>, params: &ModelParams<T>) -> Result<T> {
    let kernel = Kernel::new(e, params)?;
    let mut breaks = Vec::new();
    for (lo, hi) in [(params.a, params.c), (params.c, params.b)] {
        let panels = ((to_f64(hi - lo) / to_f64(params.h) * 4.0).ceil() as usize).max(2);
        for j in 0..panels {
            breaks.push(lo + (hi - lo) * lit::<T>(j as f64 / panels as f64));
        }
    }
    breaks.push(params.b);
    Ok(Rule::composite(&breaks, 8).integrate(|x| kernel.interior(x).norm_sqr()))
}

/// `∫ χ |G^E(x, c)|² dx` (interior part).
pub fn green_chi_norm_sq<T: Real>(e: C<T>, chi: &ChiObservable<T>, params: &ModelParams<T>) -> Result<T> {
    let kernel = Kernel::new(e, params)?;
    let lo = (chi.center - chi.eta - chi.eta).max(params.a);
    let hi = (chi.center + chi.eta + chi.eta).min(params.b);
    let mut breaks = Vec::new();
    for (l, r) in [(lo, chi.center), (chi.center, hi)] {
        let panels = ((to_f64(r - l) / to_f64(params.h) * 4.0).ceil() as usize).max(2);
        for j in 0..panels {
            breaks.push(l + (r - l) * lit::<T>(j as f64 / panels as f64));
        }
    }
    breaks.push(hi);
    Ok(Rule::composite(&breaks, 8).integrate(|x| chi.eval(x) * kernel.interior(x).norm_sqr()))
}

/// `μ(t)` by both estimators; the energy is refined from the trajectory.
pub fn mu<T: Real>(
    t: T,
    trajectory: &ResonanceTrajectory<T>,
    alpha: &AlphaProfile<T>,
    params: &ModelParams<T>,
) -> Result<MuEstimate<T>> {
    let (e0, _, _) = newton_resonance(re(alpha.value(T::zero())), params, trajectory.energy_at(T::zero()))?;
    let (et, _, _) = newton_resonance(re(alpha.value(t)), params, trajectory.energy_at(t))?;
    let ratio = alpha.value(t) / alpha.value(T::zero());
    Ok(MuEstimate {
        leading: ratio.abs().powf(lit(1.5)),
        norm_ratio: (green_norm_sq(e0, params)? / green_norm_sq(et, params)?).sqrt(),
    })
}

/// `|1 - |α_t/α_0|^{3/2}|² g(sqrt λ_t)` on every sample.
pub fn correction_j1<T: Real>(inputs: &ReducedInputs<T>) -> Vec<T> {
    inputs
        .ratio
        .iter()
        .zip(&inputs.g_at)
        .map(|(r, g)| {
            let d = T::one() - r.abs().powf(lit(1.5));
            d * d * *g
        })
        .collect()
}

/// First correction from its defining product
/// `|1 - μ|² ⟨χG, G⟩ ∫ dk g|C|²/(2πh)` at time `t`.
pub fn correction_j1_direct<T: Real>(
    t: T,
    trajectory: &ResonanceTrajectory<T>,
    alpha: &AlphaProfile<T>,
    g: &PartitionFn<T>,
    chi: &ChiObservable<T>,
    params: &ModelParams<T>,
) -> Result<T> {
    let (e, _, _) = newton_resonance(re(alpha.value(t)), params, trajectory.energy_at(t))?;
    let m = mu(t, trajectory, alpha, params)?;
    let d = T::one() - m.norm_ratio;
    Ok(d * d * green_chi_norm_sq(e, chi, params)? * lorentzian_integral(t, alpha, g, params, e)?)
}

/// Second correction on every sample, with the phase and decay integrals by
/// cumulative Simpson on the trajectory grid.
pub fn correction_j2<T: Real>(inputs: &ReducedInputs<T>, alpha0: T) -> Vec<T> {
    let n = inputs.times.len();
    if n < 2 {
        return vec![T::zero(); n];
    }
    let dt = inputs.times[1] - inputs.times[0];
    let eps = inputs.eps;
    let gam_int = cumulative_simpson(&inputs.gamma_over_eps, dt);
    let lam_int = cumulative_simpson(&inputs.lambda, dt);
    let i = imag_unit::<T>();
    let (g0, l0) = (inputs.gamma_over_eps[0], inputs.lambda[0]);
    (0..n)
        .map(|j| {
            let t = inputs.times[j];
            let r = inputs.ratio[j].abs();
            let pre = T::one() - r.powf(lit(1.5));
            if pre == T::zero() {
                return T::zero();
            }
            let at = alpha0 * inputs.ratio[j];
            let amp = (alpha0.abs() * at * at + alpha0 * alpha0 * at.abs()) / (alpha0 * at).powf(lit(1.5));
            let decay = -(gam_int[j] + t * inputs.gamma_over_eps[j]);
            let phase = -(lam_int[j] - t * inputs.lambda[j]) / eps;
            let tt = C::new(decay, phase).exp() * amp;
            let den = C::new((inputs.lambda[j] - l0) / eps, -(inputs.gamma_over_eps[j] + g0));
            let num = i * (lit::<T>(2.0) * pre * inputs.gamma_over_eps[j] * inputs.g_at[j]) * tt;
            (num / den).re
        })
        .collect()
}

/// Exponent constants of the right-case suppression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RightCaseBound {
    /// `|α_0| ((c - a) - (b - c))`.
    pub beta: f64,
    /// `e^{-β/h}`.
    pub bound_h: f64,
    /// `e^{-β/h²}` (the alternative normalisation).
    pub bound_h2: f64,
    /// `g(sqrt λ_0) e^{-β/h}`.
    pub scaled_bound: f64,
}

pub fn right_case_bound<T: Real>(alpha0: T, g0: T, params: &ModelParams<T>) -> RightCaseBound {
    let beta = to_f64(alpha0.abs() * ((params.c - params.a) - (params.b - params.c)));
    let h = to_f64(params.h);
    RightCaseBound {
        beta,
        bound_h: (-beta / h).exp(),
        bound_h2: (-beta / (h * h)).exp(),
        scaled_bound: to_f64(g0) * (-beta / h).exp(),
    }
}

/// Reduced prediction on a trajectory grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedSolution {
    pub side: Side,
    pub times: Vec<f64>,
    pub a: Vec<f64>,
    pub j1: Vec<f64>,
    pub j2: Vec<f64>,
    pub mu: Vec<MuEstimate<f64>>,
    pub a_model: Vec<f64>,
    pub gamma_over_eps: Vec<f64>,
    pub lambda: Vec<f64>,
    pub eps: f64,
    /// RK4 against closed form.
    pub rk4_gap: f64,
    pub right_bound: Option<RightCaseBound>,
}

impl ReducedSolution {
    /// Linear interpolation of `A_model` at `t`.
    pub fn model_at(&self, t: f64) -> f64 {
        interp(&self.times, &self.a_model, t)
    }
}

pub fn interp(xs: &[f64], ys: &[f64], t: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    if t <= xs[0] {
        return ys[0];
    }
    let n = xs.len();
    if t >= xs[n - 1] {
        return ys[n - 1];
    }
    let j = xs.partition_point(|&s| s <= t).max(1);
    let w = (t - xs[j - 1]) / (xs[j] - xs[j - 1]);
    ys[j - 1] * (1.0 - w) + ys[j] * w
}

/// Builds `A_model = a + J1 + J2`. `mu_every` thins the norm-ratio
/// estimator (the leading one is on every sample); 0 skips it.
pub fn assemble_a_model<T: Real>(
    trajectory: &ResonanceTrajectory<T>,
    alpha: &AlphaProfile<T>,
    g: &PartitionFn<T>,
    params: &ModelParams<T>,
    mu_every: usize,
) -> Result<ReducedSolution> {
    let inputs = ReducedInputs::new(trajectory, alpha, g, params);
    let f = |v: &[T]| v.iter().map(|x| to_f64(*x)).collect::<Vec<f64>>();
    let times = f(&inputs.times);
    let base = ReducedSolution {
        side: params.side(),
        times: times.clone(),
        a: Vec::new(),
        j1: Vec::new(),
        j2: Vec::new(),
        mu: Vec::new(),
        a_model: Vec::new(),
        gamma_over_eps: f(&inputs.gamma_over_eps),
        lambda: f(&inputs.lambda),
        eps: to_f64(inputs.eps),
        rk4_gap: 0.0,
        right_bound: None,
    };
    if params.side() == Side::Right {
        let bound = right_case_bound(alpha.value(T::zero()), inputs.g_at[0], params);
        return Ok(ReducedSolution { right_bound: Some(bound), ..base });
    }
    let relax = solve_reduced(&inputs, params)?;
    let j1 = correction_j1(&inputs);
    let j2 = correction_j2(&inputs, alpha.value(T::zero()));
    let mut mus = Vec::with_capacity(times.len());
    for (i, &t) in inputs.times.iter().enumerate() {
        let leading = to_f64(inputs.ratio[i].abs().powf(lit(1.5)));
        let norm_ratio = if mu_every > 0 && (i % mu_every == 0 || i + 1 == times.len()) {
            to_f64(mu(t, trajectory, alpha, params)?.norm_ratio)
        } else {
            f64::NAN
        };
        mus.push(MuEstimate { leading, norm_ratio });
    }
    let a = f(&relax.closed);
    let (j1, j2) = (f(&j1), f(&j2));
    let a_model = (0..a.len()).map(|i| a[i] + j1[i] + j2[i]).collect();
    Ok(ReducedSolution { a, j1, j2, mu: mus, a_model, rk4_gap: to_f64(relax.gap), ..base })
}

/// Trajectory on the default reduced grid followed by [`assemble_a_model`].
pub fn reduced_model<T: Real>(
    alpha: &AlphaProfile<T>,
    g: &PartitionFn<T>,
    params: &ModelParams<T>,
) -> Result<(ResonanceTrajectory<T>, ReducedSolution)> {
    let times = time_grid(alpha.t_final, SAMPLES_PER_UNIT);
    let traj = resonance_trajectory(alpha, params, &times, 200)?;
    let sol = assemble_a_model(&traj, alpha, g, params, 40)?;
    Ok((traj, sol))
}
