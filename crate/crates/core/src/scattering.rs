//! Incoming scattering states of the unperturbed operator, their reflection
//! and transmission coefficients, the perturbed states `ψ̃ + C G` and the
//! resonance coupling `C(k, t)`.
//!
//! # Interior state and coefficients
//!
//! Outside the barrier the state is `e^{ikx/h} + R e^{-ikx/h}` for `x < a`
//! and `T e^{ikx/h}` for `x > b`. Across `a` and `b` the interface relations
//! `e^{-θ0/2} u(a⁻) = u(a⁺)`, `e^{-3θ0/2} u'(a⁻) = u'(a⁺)` (and the mirrored
//! pair at `b`) hold. Eliminating the exterior amplitudes gives two Robin
//! conditions for the interior part, with `s = k e^{-θ0}`:
//!
//! ```text
//! (h∂ₓ - is) ψ(b⁻) = 0,    (h∂ₓ + is) ψ(a⁺) = 2is e^{-θ0/2} e^{ika/h}.
//! ```
//!
//! The solution satisfying the condition at `b` is proportional to
//! `e^{-iΛ(x-a)/h} [1 + p e^{-2iΛ(b-x)/h}]` with `p = (Λ + s)/(Λ - s)`;
//! the condition at `a` fixes the factor, giving
//!
//! ```text
//! ψ(x) = (1 - p) e^{ika/h} e^{-θ0/2} e^{-iΛ(x-a)/h} [1 + p e^{-2iΛ(b-x)/h}] / D,
//! D    = 1 - p² e^{-2iΛl/h}.
//! ```
//!
//! In trigonometric form this is `2 sin γ e^{ika/h} e^{-θ0/2}
//! cos(Λ(x-b)/h - γ) / sin(Λl/h + 2γ)` with `e^{2iγ} = 1/p`.
//! The coefficients follow from the value relations:
//!
//! ```text
//! R = (e^{θ0/2} ψ(a⁺) - e^{ika/h}) e^{ika/h},    T = e^{θ0/2} ψ(b⁻) e^{-ikb/h}.
//! ```

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::greens::{gamma_p, lambda, m_factor, Kernel};
use crate::model::{AlphaProfile, ChiObservable, ModelParams, PartitionFn};
use crate::quadrature::Rule;
use crate::scalar::{imag_unit, lit, re, to_f64, Real};

type C<T> = Complex<T>;

/// Incoming scattering state at wavenumber `k`.
#[derive(Debug, Clone, Copy)]
pub struct ScatteringState<T> {
    pub k: T,
    /// Coefficient of `cos(Λ(x-b)/h - γ)` in the interior.
    pub a_int: C<T>,
    pub r: C<T>,
    pub t: C<T>,
    pub gamma: C<T>,
    pub lam: C<T>,
    p: C<T>,
    /// `(1 - p) e^{ika/h} e^{-θ0/2} / D`.
    front: C<T>,
    params: ModelParams<T>,
}

impl<T: Real> ScatteringState<T> {
    fn phase(&self, x: T) -> C<T> {
        (imag_unit::<T>() * self.k * x / self.params.h).exp()
    }

    fn up(&self, x: T) -> C<T> {
        (-imag_unit::<T>() * self.lam * (x - self.params.a) / self.params.h).exp()
    }

    fn down(&self, x: T) -> C<T> {
        self.p * (-imag_unit::<T>() * self.lam * lit::<T>(2.0) * (self.params.b - x) / self.params.h).exp()
    }

    /// Interior value on `[a, b]`.
    pub fn interior(&self, x: T) -> C<T> {
        self.front * self.up(x) * (C::new(T::one(), T::zero()) + self.down(x))
    }

    pub fn interior_dx(&self, x: T) -> C<T> {
        let factor = -imag_unit::<T>() * self.lam / self.params.h;
        self.front * self.up(x) * (C::new(T::one(), T::zero()) - self.down(x)) * factor
    }

    pub fn interior_dxx(&self, x: T) -> C<T> {
        let factor = -(self.lam * self.lam) / (self.params.h * self.params.h);
        self.interior(x) * factor
    }

    /// Exterior value and slope of the undeformed state.
    fn exterior(&self, x: T) -> (C<T>, C<T>) {
        let ik = imag_unit::<T>() * self.k / self.params.h;
        if x < self.params.a {
            let (fwd, back) = (self.phase(x), self.r / self.phase(x));
            (fwd + back, (fwd - back) * ik)
        } else {
            let v = self.t * self.phase(x);
            (v, v * ik)
        }
    }

    /// Undeformed state at `x` (one-sided interior limits at `a`, `b`).
    pub fn psi_at(&self, x: T) -> C<T> {
        if x < self.params.a || x > self.params.b {
            self.exterior(x).0
        } else {
            self.interior(x)
        }
    }

    pub fn psi_dx(&self, x: T) -> C<T> {
        if x < self.params.a || x > self.params.b {
            self.exterior(x).1
        } else {
            self.interior_dx(x)
        }
    }

    /// `U_θ ψ` at `x`.
    pub fn psi_deformed(&self, x: T, theta: C<T>) -> C<T> {
        let p = &self.params;
        if x >= p.a && x <= p.b {
            return self.interior(x);
        }
        let amp = (theta * lit::<T>(0.5)).exp();
        let ik = imag_unit::<T>() * self.k / p.h;
        let edge = if x > p.b { p.b } else { p.a };
        let y = theta.exp() * (x - edge) + edge;
        if x > p.b {
            amp * self.t * (ik * y).exp()
        } else {
            amp * ((ik * y).exp() + self.r * (-ik * y).exp())
        }
    }

    /// Interior value from the trigonometric form (moderate `l/h` only).
    pub fn interior_trig(&self, x: T) -> C<T> {
        let p = &self.params;
        let arg = self.lam * (x - p.b) / p.h - self.gamma;
        self.a_int * arg.cos()
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }
}

/// Builds the incoming state at wavenumber `k` with `0 < k² < V0`.
pub fn scattering_state<T: Real>(k: T, params: &ModelParams<T>) -> Result<ScatteringState<T>> {
    if k.is_nan() || k <= T::zero() {
        return Err(Error::Invalid(format!("wavenumber must be positive, got {}", k)));
    }
    let z = re(k * k);
    let gp = gamma_p(z, params.theta0, params)?;
    let lam = lambda(z, params)?;
    let one = C::new(T::one(), T::zero());
    let i = imag_unit::<T>();
    let two = lit::<T>(2.0);
    let el = (-i * lam * two * params.length() / params.h).exp();
    let d = one - gp.p * gp.p * el;
    if d.norm() < lit::<T>(1e-14) {
        return Err(Error::InteriorDenominator(to_f64(d.norm())));
    }
    let eika = (i * k * params.a / params.h).exp();
    let half_theta = (-params.theta0 * lit::<T>(0.5)).exp();
    let front = (one - gp.p) * eika * half_theta / d;
    let arg = lam * params.length() / params.h + gp.gamma * two;
    let a_int = gp.gamma.sin() * eika * half_theta * two / arg.sin();
    let mut st = ScatteringState {
        k,
        a_int,
        r: C::new(T::zero(), T::zero()),
        t: C::new(T::zero(), T::zero()),
        gamma: gp.gamma,
        lam,
        p: gp.p,
        front,
        params: *params,
    };
    let inv_half = (params.theta0 * lit::<T>(0.5)).exp();
    st.r = (inv_half * st.interior(params.a) - eika) * eika;
    st.t = inv_half * st.interior(params.b) / st.phase(params.b);
    Ok(st)
}

/// `ψ̃ + C G^{k²}(·, c)` in the deformed frame of parameter `theta`.
#[derive(Debug, Clone, Copy)]
pub struct PerturbedState<T> {
    pub state: ScatteringState<T>,
    pub coupling: C<T>,
    pub theta: C<T>,
    kernel: Kernel<T>,
}

impl<T: Real> PerturbedState<T> {
    pub fn eval(&self, x: T) -> C<T> {
        let p = self.state.params();
        let g = if x < p.a || x > p.b { self.kernel.exterior(x, self.theta).0 } else { self.kernel.interior(x) };
        self.state.psi_deformed(x, self.theta) + self.coupling * g
    }

    /// Green's part `G^{k²}(x, c)` in the same frame.
    pub fn green(&self, x: T) -> C<T> {
        let p = self.state.params();
        if x < p.a || x > p.b {
            self.kernel.exterior(x, self.theta).0
        } else {
            self.kernel.interior(x)
        }
    }

    /// Interior slope (one-sided at `c`), used for the jump relation.
    pub fn interior_dx(&self, x: T) -> C<T> {
        self.state.interior_dx(x) + self.coupling * self.kernel.interior_dx(x)
    }
}

/// Deformed perturbed state `U_θ ψ̃ + C G^{k²}` at coupling `alpha` with the
/// exterior deformation equal to `θ0`.
pub fn deformed_initial<T: Real>(k: T, alpha: T, params: &ModelParams<T>) -> Result<PerturbedState<T>> {
    deformed_initial_with(k, alpha, params.theta0, params)
}

pub fn deformed_initial_with<T: Real>(
    k: T,
    alpha: T,
    theta: C<T>,
    params: &ModelParams<T>,
) -> Result<PerturbedState<T>> {
    let state = scattering_state(k, params)?;
    let kernel = Kernel::new(re(k * k), params)?;
    let coupling = coupling_from_state(&state, alpha, params)?;
    Ok(PerturbedState { state, coupling, theta, kernel })
}

/// `C = -hαψ̃(c) / (1 + hα G^{k²}(c,c))`.
pub fn coupling_from_state<T: Real>(state: &ScatteringState<T>, alpha: T, params: &ModelParams<T>) -> Result<C<T>> {
    if alpha == T::zero() {
        return Ok(C::new(T::zero(), T::zero()));
    }
    let g = Kernel::new(re(state.k * state.k), params)?.interior(params.c);
    let ha = params.h * alpha;
    Ok(-state.interior(params.c) * ha / (C::new(T::one(), T::zero()) + g * ha))
}

/// `C(k, t)` along the profile `alpha`.
pub fn coupling_c<T: Real>(k: T, t: T, alpha: &AlphaProfile<T>, params: &ModelParams<T>) -> Result<C<T>> {
    coupling_from_state(&scattering_state(k, params)?, alpha.value(t), params)
}

/// `C(k, t)` through the resonant factorisation `-hαψ̃(c) M(k², E)/(k² - E)`.
pub fn coupling_c_resonant<T: Real>(k: T, alpha_t: T, e_res: C<T>, params: &ModelParams<T>) -> Result<C<T>> {
    let st = scattering_state(k, params)?;
    let z = re(k * k);
    let m = m_factor(z, e_res, alpha_t, params)?;
    Ok(-st.interior(params.c) * (params.h * alpha_t) * m / (z - e_res))
}

/// True when `k²` is within `Γ/100` of the resonance.
pub fn near_pole<T: Real>(k: T, e_res: C<T>) -> bool {
    (re(k * k) - e_res).norm() < -e_res.im / lit::<T>(100.0)
}

/// Time derivative of `C(k, t)` and its ratio to the alternative closed
/// expression `hα̇ψ̃(c)(2hαG - 1)/(1 + hαG)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingRate<T> {
    pub value: C<T>,
    pub ratio_to_alternative: C<T>,
}

/// `Ċ = -hα̇ψ̃(c)/(1 + hαG^{k²}(c,c))²`.
pub fn coupling_c_dot<T: Real>(
    k: T,
    t: T,
    alpha: &AlphaProfile<T>,
    params: &ModelParams<T>,
) -> Result<CouplingRate<T>> {
    let st = scattering_state(k, params)?;
    let g = Kernel::new(re(k * k), params)?.interior(params.c);
    let a = alpha.value(t);
    let rate = alpha.rate(t);
    let one = C::new(T::one(), T::zero());
    let den = one + g * (params.h * a);
    let psi_c = st.interior(params.c);
    let value = -psi_c * (params.h * rate) / (den * den);
    let alternative = psi_c * (params.h * rate) * (g * (lit::<T>(2.0) * params.h * a) - one) / (den * den);
    let ratio = if alternative.norm() > T::zero() { value / alternative } else { C::new(T::zero(), T::zero()) };
    Ok(CouplingRate { value, ratio_to_alternative: ratio })
}

/// Breakpoints on `[lo, hi]` graded geometrically towards `peak` with
/// smallest panel `width`, each panel then split into `2^level` pieces.
pub fn graded_breaks<T: Real>(lo: T, hi: T, peak: T, width: T, level: u32) -> Vec<T> {
    let mut pts = vec![lo, hi];
    if peak > lo && peak < hi {
        pts.push(peak);
        let mut w = width;
        while peak - w > lo || peak + w < hi {
            if peak - w > lo {
                pts.push(peak - w);
            }
            if peak + w < hi {
                pts.push(peak + w);
            }
            w *= lit::<T>(2.0);
        }
    }
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    pts.dedup();
    let pieces = 1usize << level;
    let mut out = Vec::with_capacity(pts.len() * pieces);
    for pair in pts.windows(2) {
        for j in 0..pieces {
            out.push(pair[0] + (pair[1] - pair[0]) * lit::<T>(j as f64 / pieces as f64));
        }
    }
    out.push(*pts.last().unwrap_or(&hi));
    out
}

/// Adaptive composite Gauss-Legendre integral over the support of `g`,
/// graded towards `peak_k` with finest panel `width_k`.
pub fn peaked_integral<T: Real, F: Fn(T) -> Result<T>>(
    g: &PartitionFn<T>,
    peak_k: T,
    width_k: T,
    f: F,
) -> Result<T> {
    let (lo, hi) = g.k_support();
    let tol = lit::<T>(1e-8);
    let mut last: Option<T> = None;
    for level in 0..8u32 {
        let rule = Rule::composite(&graded_breaks(lo, hi, peak_k, width_k, level), 16);
        let mut acc = T::zero();
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            acc += *w * f(*x)?;
        }
        if let Some(prev) = last {
            if (acc - prev).abs() <= tol * acc.abs().max(T::min_positive_value()) {
                return Ok(acc);
            }
        }
        last = Some(acc);
    }
    Err(Error::Quadrature(format!("no stabilisation, last value {:?}", last.map(to_f64))))
}

/// `∫ dk/(2πh) g(k) |C(k, t)|²`.
pub fn lorentzian_integral<T: Real>(
    t: T,
    alpha: &AlphaProfile<T>,
    g: &PartitionFn<T>,
    params: &ModelParams<T>,
    e_res: C<T>,
) -> Result<T> {
    let a = alpha.value(t);
    let peak = e_res.re.max(T::zero()).sqrt();
    let width = (-e_res.im).max(params.h * lit::<T>(1e-6)) / (lit::<T>(2.0) * peak.max(lit::<T>(1e-3)));
    let two_pi_h = lit::<T>(2.0) * T::PI() * params.h;
    peaked_integral(g, peak, width, |k| {
        let w = g.eval(k);
        if w == T::zero() {
            return Ok(T::zero());
        }
        let c = coupling_from_state(&scattering_state(k, params)?, a, params)?;
        Ok(w * c.norm_sqr() / two_pi_h)
    })
}

/// Leading value `(h|α_t|³/2) g(sqrt λ_t)` of [`lorentzian_integral`].
pub fn lorentzian_leading<T: Real>(alpha_t: T, g: &PartitionFn<T>, params: &ModelParams<T>) -> T {
    let lam = params.v0 - alpha_t * alpha_t / lit::<T>(4.0);
    params.h * alpha_t.abs().powi(3) / lit::<T>(2.0) * g.eval(lam.sqrt())
}

/// `∫ dk g(k) / |k² - E|`.
pub fn inverse_distance_integral<T: Real>(g: &PartitionFn<T>, e_res: C<T>, params: &ModelParams<T>) -> Result<T> {
    let peak = e_res.re.max(T::zero()).sqrt();
    let width = (-e_res.im).max(params.h * lit::<T>(1e-6)) / (lit::<T>(2.0) * peak.max(lit::<T>(1e-3)));
    peaked_integral(g, peak, width, |k| Ok(g.eval(k) / (re(k * k) - e_res).norm()))
}

/// Breakpoints of `χ` (support edges, plateau edges and the well).
pub fn chi_breaks<T: Real>(chi: &ChiObservable<T>) -> Vec<T> {
    let (c, e) = (chi.center, chi.eta);
    vec![c - e - e, c - e, c, c + e, c + e + e]
}

/// `∫ χ |u|²` over the support of `χ` for a field given pointwise.
pub fn chi_weighted_norm<T: Real, F: Fn(T) -> C<T>>(chi: &ChiObservable<T>, panels: usize, u: F) -> T {
    let breaks = chi_breaks(chi);
    let mut fine = Vec::new();
    for pair in breaks.windows(2) {
        for j in 0..panels {
            fine.push(pair[0] + (pair[1] - pair[0]) * lit::<T>(j as f64 / panels as f64));
        }
    }
    fine.push(*breaks.last().unwrap_or(&chi.center));
    Rule::composite(&fine, 12).integrate(|x| chi.eval(x) * u(x).norm_sqr())
}

/// Stationary value of the observable at frozen coupling `alpha`:
/// `∫ dk/(2πh) g(k) ∫ χ |ψ̃ + C G|² dx`.
pub fn stationary_observable<T: Real>(
    alpha: T,
    g: &PartitionFn<T>,
    chi: &ChiObservable<T>,
    params: &ModelParams<T>,
    e_res: C<T>,
) -> Result<T> {
    let peak = e_res.re.max(T::zero()).sqrt();
    let width = (-e_res.im).max(params.h * lit::<T>(1e-6)) / (lit::<T>(2.0) * peak.max(lit::<T>(1e-3)));
    let two_pi_h = lit::<T>(2.0) * T::PI() * params.h;
    peaked_integral(g, peak, width, |k| {
        let w = g.eval(k);
        if w == T::zero() {
            return Ok(T::zero());
        }
        let st = deformed_initial(k, alpha, params)?;
        Ok(w * chi_weighted_norm(chi, 8, |x| st.eval(x)) / two_pi_h)
    })
}

/// Observable evaluated on a fixed `k` rule (no adaptivity), for comparison
/// with a propagation on the same nodes.
pub fn stationary_observable_on_rule<T: Real>(
    alpha: T,
    g: &PartitionFn<T>,
    chi: &ChiObservable<T>,
    params: &ModelParams<T>,
    rule: &Rule<T>,
) -> Result<T> {
    let two_pi_h = lit::<T>(2.0) * T::PI() * params.h;
    let mut acc = T::zero();
    for (k, w) in rule.nodes.iter().zip(&rule.weights) {
        let st = deformed_initial(*k, alpha, params)?;
        acc += *w * g.eval(*k) * chi_weighted_norm(chi, 8, |x| st.eval(x)) / two_pi_h;
    }
    Ok(acc)
}

/// Fixed `k` rule for the propagated observable: `n` Gauss-Legendre nodes
/// on the support of `g`, with half of them on the energy band
/// `[e_lo, e_hi]` swept by the resonance (widened by a few `Γ`).
pub fn propagation_rule<T: Real>(g: &PartitionFn<T>, e_lo: T, e_hi: T, gamma: T, n: usize) -> Rule<T> {
    let order = 4usize;
    let panels = (n / order).max(3);
    let (lo, hi) = g.k_support();
    let margin = lit::<T>(4.0) * gamma;
    let band_lo = (e_lo - margin).max(lo * lo).sqrt().max(lo);
    let band_hi = (e_hi + margin).min(hi * hi).sqrt().min(hi);
    let band_panels = (panels / 2).max(1);
    let side = panels - band_panels;
    let left_panels = ((side as f64) * to_f64(band_lo - lo) / to_f64((band_lo - lo) + (hi - band_hi)).max(1e-300))
        .round() as usize;
    let left_panels = left_panels.clamp(1, side.saturating_sub(1).max(1));
    let right_panels = side.saturating_sub(left_panels).max(1);
    let mut breaks = Vec::new();
    let mut seg = |a: T, b: T, m: usize, last: bool| {
        for j in 0..m {
            breaks.push(a + (b - a) * lit::<T>(j as f64 / m as f64));
        }
        if last {
            breaks.push(b);
        }
    };
    seg(lo, band_lo, left_panels, false);
    seg(band_lo, band_hi, band_panels, false);
    seg(band_hi, hi, right_panels, true);
    Rule::composite(&breaks, order)
}
