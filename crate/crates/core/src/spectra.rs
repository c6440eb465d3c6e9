//! Point spectrum of the unperturbed operator and the shape resonance of the
//! delta well: asymptotic seed, Newton refinement, argument-principle
//! uniqueness check and continuation along a coupling profile.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::greens::{branch_sqrt, green_cc_with_derivative, lambda, p0_closed_form};
use crate::model::{AlphaProfile, ModelParams};
use crate::scalar::{cx, imag_unit, lit, re, to_f64, Real};

type C<T> = Complex<T>;

/// Newton iteration budget before a continuation step is bisected.
pub const NEWTON_BUDGET: usize = 8;
const NEWTON_MAX: usize = 60;

/// One root of the unperturbed eigenvalue relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnperturbedEigenvalue<T> {
    pub n: usize,
    pub z: C<T>,
    pub seed: C<T>,
    /// Relative residual of `(Λ - s) e^{iΛl/h} = σ (Λ + s)`.
    pub residual: T,
    /// `Im(e^{θ0} sqrt z) > 0`.
    pub exposed: bool,
}

fn branch_sign(n: usize) -> f64 {
    if n % 2 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// `f(z) = (Λ - s) e^{iΛl/h} - σ (Λ + s)` and `f'(z)`.
fn eigen_relation<T: Real>(z: C<T>, sigma: T, params: &ModelParams<T>) -> Result<(C<T>, C<T>, T)> {
    let lam = lambda(z, params)?;
    let s = branch_sqrt(z)? * (-params.theta0).exp();
    let i = imag_unit::<T>();
    let two = lit::<T>(2.0);
    let phase = (i * lam * params.length() / params.h).exp();
    let f = (lam - s) * phase - (lam + s) * sigma;
    let dlam = C::new(T::one(), T::zero()) / (lam * two);
    let ds = s / (z * two);
    let df = (dlam - ds) * phase + (lam - s) * phase * (i * params.length() / params.h) * dlam - (dlam + ds) * sigma;
    let scale = (lam - s).norm() * phase.norm() + (lam + s).norm();
    Ok((f, df, scale))
}

/// Seed `V0 + h²(nπ/l)² - 4ih³(nπ)²/(l³ sqrt V0)`.
pub fn eigenvalue_seed<T: Real>(n: usize, params: &ModelParams<T>) -> C<T> {
    let npi = lit::<T>(n as f64) * T::PI();
    let l = params.length();
    let h = params.h;
    cx(
        params.v0 + h * h * npi * npi / (l * l),
        -lit::<T>(4.0) * h * h * h * npi * npi / (l * l * l * params.v0.sqrt()),
    )
}

/// Unperturbed eigenvalues `z_0 .. z_{n_max}`.
///
/// The poles of `G^z(c, c)` are the zeros of `1 - p² e^{-2iΛl/h}`, which
/// split into `e^{iΛl/h} = p` (odd `n`) and `e^{iΛl/h} = -p` (even `n`).
/// `n = 0` is returned as `V0` exactly: there `Λ = 0` and the relation
/// degenerates.
pub fn unperturbed_eigenvalues<T: Real>(
    params: &ModelParams<T>,
    n_max: usize,
) -> Result<Vec<UnperturbedEigenvalue<T>>> {
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let seed = eigenvalue_seed(n, params);
        if n == 0 {
            out.push(UnperturbedEigenvalue { n, z: seed, seed, residual: T::zero(), exposed: true });
            continue;
        }
        let sigma = lit::<T>(branch_sign(n));
        let mut z = seed;
        let mut trace = Vec::new();
        let mut done = false;
        for _ in 0..NEWTON_MAX {
            let (f, df, scale) = eigen_relation(z, sigma, params)?;
            trace.push(to_f64(f.norm() / scale));
            let step = f / df;
            z -= step;
            if step.norm() <= lit::<T>(1e-15) * z.norm() {
                done = true;
                break;
            }
        }
        let (f, _, scale) = eigen_relation(z, sigma, params)?;
        let residual = f.norm() / scale;
        if !done && residual > lit::<T>(1e-12) {
            return Err(Error::NoConvergence { op: "unperturbed_eigenvalues", index: n, trace: format!("{:?}", trace) });
        }
        let exposed = (params.theta0.exp() * branch_sqrt(z)?).im > T::zero();
        out.push(UnperturbedEigenvalue { n, z, seed, residual, exposed });
    }
    Ok(out)
}

/// The shape resonance at a given coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resonance {
    pub e_re: f64,
    pub e_im: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Argument-principle count on the uniqueness window, when checked.
    pub winding: Option<i64>,
}

/// Typed resonance with the energy in working precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceT<T> {
    pub e: C<T>,
    pub alpha: T,
    pub residual: T,
    pub iterations: usize,
    pub winding: Option<i64>,
}

impl<T: Real> ResonanceT<T> {
    pub fn e_r(&self) -> T {
        self.e.re
    }

    /// `Γ = -Im E`.
    pub fn gamma(&self) -> T {
        -self.e.im
    }

    pub fn report(&self) -> Resonance {
        Resonance {
            e_re: to_f64(self.e.re),
            e_im: to_f64(self.e.im),
            gamma: to_f64(-self.e.im),
            alpha: to_f64(self.alpha),
            residual: to_f64(self.residual),
            iterations: self.iterations,
            winding: self.winding,
        }
    }
}

/// Asymptotic location `V0 - α²/4 - (α²/2) p0 e^{-|α| d/h}`.
pub fn resonance_seed<T: Real>(alpha: T, params: &ModelParams<T>) -> C<T> {
    let e0 = params.v0 - alpha * alpha / lit::<T>(4.0);
    let p0 = p0_closed_form(alpha, params.v0);
    let tail = (-alpha.abs() * params.dist() / params.h).exp();
    re(e0) - p0 * (alpha * alpha / lit::<T>(2.0) * tail)
}

/// `F(E) = 1 + hαG^E(c,c)` for a possibly complex coupling.
pub fn resonance_function<T: Real>(e: C<T>, alpha: C<T>, params: &ModelParams<T>) -> Result<C<T>> {
    let (g, _) = green_cc_with_derivative(e, params)?;
    Ok(C::new(T::one(), T::zero()) + alpha * g * params.h)
}

/// Newton solve of `F(E) = 0` accepting a complex coupling; returns the
/// root, the iteration count and the final `|F|`.
pub fn newton_resonance<T: Real>(
    alpha: C<T>,
    params: &ModelParams<T>,
    start: C<T>,
) -> Result<(C<T>, usize, T)> {
    let one = C::new(T::one(), T::zero());
    let f_start = resonance_function(start, alpha, params)?.norm();
    let tol = lit::<T>(1e-12) * f_start.max(T::one());
    let mut e = start;
    let mut trace = Vec::new();
    for it in 0..NEWTON_MAX {
        let (g, dg) = green_cc_with_derivative(e, params)?;
        let f = one + alpha * g * params.h;
        trace.push(to_f64(f.norm()));
        if f.norm() <= tol {
            return Ok((e, it, f.norm()));
        }
        let df = alpha * dg * params.h;
        if df.norm() == T::zero() {
            return Err(Error::DerivativeDegenerate(0.0));
        }
        e -= f / df;
    }
    Err(Error::NoConvergence { op: "find_resonance", index: 0, trace: format!("{:?}", trace) })
}

/// Rectangle used for the uniqueness count: centred on `Re center`, real axis
/// included, half-sizes `C h` with `C = 2 / d0`.
pub fn uniqueness_window<T: Real>(center: C<T>, params: &ModelParams<T>) -> (C<T>, C<T>) {
    let half = lit::<T>(2.0) / params.d0 * params.h;
    (cx(center.re - half, -half), cx(center.re + half, half))
}

/// Winding number of `F` along the boundary of the rectangle `[lo, hi]`,
/// sampled adaptively so that no step turns the phase by more than π/8.
pub fn argument_count<T: Real>(
    alpha: C<T>,
    params: &ModelParams<T>,
    lo: C<T>,
    hi: C<T>,
) -> Result<i64> {
    let corners = [lo, cx(hi.re, lo.im), hi, cx(lo.re, hi.im), lo];
    let limit = T::PI() / lit::<T>(8.0);
    let mut total = T::zero();
    for edge in corners.windows(2) {
        let (z0, z1) = (edge[0], edge[1]);
        let mut stack = vec![(T::zero(), T::one())];
        let f0 = resonance_function(z0, alpha, params)?;
        let at = |u: T| z0 + (z1 - z0) * u;
        // depth-first subdivision, processing subintervals left to right
        let mut fl = f0;
        let mut depth_guard = 0usize;
        while let Some((u0, u1)) = stack.pop() {
            let fr = resonance_function(at(u1), alpha, params)?;
            let d = (fr / fl).arg();
            if d.abs() > limit && (u1 - u0) > lit::<T>(1e-9) {
                let mid = (u0 + u1) * lit::<T>(0.5);
                stack.push((mid, u1));
                stack.push((u0, mid));
                depth_guard += 1;
                if depth_guard > 200_000 {
                    return Err(Error::NoConvergence { op: "argument_count", index: 0, trace: "refinement limit".into() });
                }
                continue;
            }
            total += d;
            fl = fr;
        }
    }
    let turns = total / (T::PI() + T::PI());
    Ok(to_f64(turns).round() as i64)
}

/// Resonance at real coupling `alpha`, started from `guess` or the asymptotic
/// seed, with the argument-principle uniqueness check.
pub fn find_resonance<T: Real>(alpha: T, params: &ModelParams<T>, guess: Option<C<T>>) -> Result<ResonanceT<T>> {
    find_resonance_checked(alpha, params, guess, true)
}

pub fn find_resonance_checked<T: Real>(
    alpha: T,
    params: &ModelParams<T>,
    guess: Option<C<T>>,
    check_uniqueness: bool,
) -> Result<ResonanceT<T>> {
    let seed = resonance_seed(alpha, params);
    let start = guess.unwrap_or(seed);
    let (e, iterations, residual) = newton_resonance(re(alpha), params, start)?;
    let winding = if check_uniqueness {
        let (lo, hi) = uniqueness_window(seed, params);
        let count = argument_count(re(alpha), params, lo, hi)?;
        if count != 1 {
            return Err(Error::Multiplicity(count));
        }
        Some(count)
    } else {
        None
    };
    Ok(ResonanceT { e, alpha, residual, iterations, winding })
}

/// Resonances sampled along a coupling profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceTrajectory<T> {
    pub times: Vec<T>,
    pub resonances: Vec<ResonanceT<T>>,
    /// Largest `|E(t_{i+1}) - E(t_i)|`.
    pub max_jump: T,
}

impl<T: Real> ResonanceTrajectory<T> {
    pub fn energies(&self) -> Vec<C<T>> {
        self.resonances.iter().map(|r| r.e).collect()
    }

    pub fn gammas(&self) -> Vec<T> {
        self.resonances.iter().map(|r| r.gamma()).collect()
    }

    /// Linear interpolation of `E` at time `t`.
    pub fn energy_at(&self, t: T) -> C<T> {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.resonances[0].e;
        }
        if t >= self.times[n - 1] {
            return self.resonances[n - 1].e;
        }
        let j = self.times.partition_point(|&s| s <= t).max(1);
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let w = (t - t0) / (t1 - t0);
        self.resonances[j - 1].e * (T::one() - w) + self.resonances[j].e * w
    }
}

/// Warm-started continuation of the resonance along `alpha` on `times`.
/// The uniqueness count is evaluated on the first and last samples and every
/// `check_every` samples in between (`0` disables the interior checks).
pub fn resonance_trajectory<T: Real>(
    alpha: &AlphaProfile<T>,
    params: &ModelParams<T>,
    times: &[T],
    check_every: usize,
) -> Result<ResonanceTrajectory<T>> {
    let mut out: Vec<ResonanceT<T>> = Vec::with_capacity(times.len());
    let mut max_jump = T::zero();
    for (i, &t) in times.iter().enumerate() {
        let a = alpha.value(t);
        let check = i == 0 || i + 1 == times.len() || (check_every > 0 && i % check_every == 0);
        let guess = out.last().map(|r| r.e);
        let mut r = find_resonance_checked(a, params, guess, check);
        let needs_bisection = match &r {
            Ok(res) => res.iterations > NEWTON_BUDGET,
            Err(_) => true,
        };
        if needs_bisection && i > 0 {
            let mid = (times[i - 1] + t) * lit::<T>(0.5);
            let half = find_resonance_checked(alpha.value(mid), params, guess, false)
                .map_err(|_| Error::NoConvergence { op: "resonance_trajectory", index: i, trace: format!("t = {}", t) })?;
            r = find_resonance_checked(a, params, Some(half.e), check);
        }
        let res = r.map_err(|e| match e {
            Error::NoConvergence { trace, .. } => {
                Error::NoConvergence { op: "resonance_trajectory", index: i, trace: format!("t = {}: {}", t, trace) }
            }
            other => other,
        })?;
        if let Some(prev) = out.last() {
            max_jump = max_jump.max((res.e - prev.e).norm());
        }
        out.push(res);
    }
    Ok(ResonanceTrajectory { times: times.to_vec(), resonances: out, max_jump })
}

/// Time derivative of the resonance energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRate<T> {
    /// `-(α̇/α) G / ∂_E G` at `E(t)`.
    pub value: C<T>,
    /// Leading value `α̇ |α| / 2`.
    pub leading: T,
}

/// `Ė(t)` from the implicit-function relation of `1 + hα_t G^{E(t)}(c,c) = 0`.
pub fn resonance_derivative<T: Real>(
    t: T,
    trajectory: &ResonanceTrajectory<T>,
    alpha: &AlphaProfile<T>,
    params: &ModelParams<T>,
) -> Result<EnergyRate<T>> {
    let e = trajectory.energy_at(t);
    let a = alpha.value(t);
    let rate = alpha.rate(t);
    // refine the interpolated energy onto the root
    let (e, _, _) = newton_resonance(re(a), params, e)?;
    let (g, dg) = green_cc_with_derivative(e, params)?;
    if dg.norm() <= T::min_positive_value() {
        return Err(Error::DerivativeDegenerate(to_f64(dg.norm())));
    }
    let value = -(g / dg) * (rate / a);
    Ok(EnergyRate { value, leading: rate * a.abs() / lit::<T>(2.0) })
}

/// `E(α)` sensitivity `dE/dα` from the implicit-function theorem.
pub fn resonance_alpha_derivative<T: Real>(e: C<T>, alpha: T, params: &ModelParams<T>) -> Result<C<T>> {
    let (g, dg) = green_cc_with_derivative(e, params)?;
    Ok(-(g / dg) / alpha)
}

/// Unperturbed-pole check used by tests: `1 - p² e^{-2iΛl/h}` at `z`.
pub fn pole_denominator<T: Real>(z: C<T>, params: &ModelParams<T>) -> Result<C<T>> {
    let gp = crate::greens::gamma_p(z, params.theta0, params)?;
    let lam = lambda(z, params)?;
    let el = (-imag_unit::<T>() * lam * lit::<T>(2.0) * params.length() / params.h).exp();
    Ok(C::new(T::one(), T::zero()) - gp.p * gp.p * el)
}
