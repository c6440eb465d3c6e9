//! Physical parameters, the three input functions (coupling profile,
//! energy partition, observable cutoff) and the derived scales.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::scalar::{lit, to_f64, Real};

/// Which barrier edge is closer to the well.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `c - a < b - c`: the incoming side is the short one.
    Left,
    /// `b - c < c - a`.
    Right,
}

/// Static geometry and scales of the barrier model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub v0: T,
    pub h: T,
    /// Interface parameter `i tau`.
    pub theta0: Complex<T>,
    /// Half-width of the observable plateau.
    pub eta: T,
    /// Energy-window constant.
    pub d0: T,
    /// Final (slow) time.
    pub t_final: T,
}

impl<T: Real> ModelParams<T> {
    /// Barrier length `b - a`.
    pub fn length(&self) -> T {
        self.b - self.a
    }

    /// Distance of the well from the nearest barrier edge.
    pub fn dist(&self) -> T {
        (self.c - self.a).min(self.b - self.c)
    }

    pub fn side(&self) -> Side {
        if self.c - self.a < self.b - self.c {
            Side::Left
        } else {
            Side::Right
        }
    }

    /// Same parameters with a different semiclassical scale.
    pub fn with_h(&self, h: T) -> Self {
        Self { h, ..*self }
    }

    pub fn with_theta0(&self, theta0: Complex<T>) -> Self {
        Self { theta0, ..*self }
    }
}

/// Shape of the coupling ramp on the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RampKind {
    /// No time dependence.
    Constant,
    /// Quintic smoothstep from 0 to 1 with flat ends.
    Smoothstep,
    /// Leaves the initial value, crosses back through it at mid-run and
    /// comes to rest at the initial value again.
    Return,
}

/// Normalisation of the `Return` shape so that `max |s| = 1`.
const RETURN_PEAK: f64 = 0.649_519_052_838_329;

impl RampKind {
    /// Ramp shape `s(u)` and its derivative `s'(u)` for `u` in `[0, 1]`.
    pub fn shape<T: Real>(self, u: T) -> (T, T) {
        let u = u.max(T::zero()).min(T::one());
        match self {
            RampKind::Constant => (T::zero(), T::zero()),
            RampKind::Smoothstep => {
                let u2 = u * u;
                let s = u2 * u * (lit::<T>(10.0) - lit::<T>(15.0) * u + lit::<T>(6.0) * u2);
                let ds = lit::<T>(30.0) * u2 * (T::one() - u) * (T::one() - u);
                (s, ds)
            }
            RampKind::Return => {
                // sin(2 pi u) sin^2(pi u), zero with zero slope at both ends
                let pi = T::PI();
                let two_pi = pi + pi;
                let (s1, c1) = (pi * u).sin_cos();
                let (s2, c2) = (two_pi * u).sin_cos();
                let norm = lit::<T>(RETURN_PEAK);
                let s = s2 * s1 * s1 / norm;
                let ds = (two_pi * c2 * s1 * s1 + s2 * lit::<T>(2.0) * s1 * c1 * pi) / norm;
                (s, ds)
            }
        }
    }

    /// Fraction of the run at which the profile is back at its initial value
    /// with nonzero speed, if any.
    pub fn return_fraction(self) -> Option<f64> {
        match self {
            RampKind::Return => Some(0.5),
            _ => None,
        }
    }
}

/// Coupling profile `alpha(t) = alpha0 + amplitude * s(t / T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaProfile<T> {
    pub alpha0: T,
    pub amplitude: T,
    pub ramp: RampKind,
    pub t_final: T,
}

impl<T: Real> AlphaProfile<T> {
    pub fn constant(alpha0: T, t_final: T) -> Self {
        Self { alpha0, amplitude: T::zero(), ramp: RampKind::Constant, t_final }
    }

    pub fn value(&self, t: T) -> T {
        self.alpha0 + self.amplitude * self.ramp.shape(t / self.t_final).0
    }

    pub fn rate(&self, t: T) -> T {
        self.amplitude * self.ramp.shape(t / self.t_final).1 / self.t_final
    }

    /// Same profile with the ramp switched off.
    pub fn frozen(&self) -> Self {
        Self::constant(self.alpha0, self.t_final)
    }

    /// Sampled `(min, max)` of `alpha` over `[0, T]`.
    pub fn range(&self, samples: usize) -> (T, T) {
        let n = samples.max(2);
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for i in 0..=n {
            let v = self.value(self.t_final * lit::<T>(i as f64 / n as f64));
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Time of the mid-run crossing back through `alpha0`, if the ramp has one.
    pub fn return_time(&self) -> Option<T> {
        self.ramp.return_fraction().map(|f| self.t_final * lit::<T>(f))
    }
}

/// Smooth step from 0 (at `x <= 0`) to 1 (at `x >= 1`) built from `exp(-1/x)`.
fn smooth_unit_step<T: Real>(x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if x >= T::one() {
        return T::one();
    }
    let f = |y: T| (-T::one() / y).exp();
    let p = f(x);
    p / (p + f(T::one() - x))
}

/// Energy distribution of the incoming states: a Gaussian in `k^2` centred at
/// `lambda0` with width `h / d0`, cut off smoothly at `|k^2 - lambda0| = 2h/d0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionFn<T> {
    pub lambda0: T,
    pub h: T,
    pub d0: T,
    /// Constant prefactor (1 for the standard profile).
    pub scale: T,
}

impl<T: Real> PartitionFn<T> {
    pub fn new(lambda0: T, h: T, d0: T) -> Self {
        Self { lambda0, h, d0, scale: T::one() }
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self { scale: self.scale * factor, ..*self }
    }

    /// Half-width of the support in energy.
    pub fn half_window(&self) -> T {
        lit::<T>(2.0) * self.h / self.d0
    }

    /// Value as a function of energy `e = k^2`.
    pub fn at_energy(&self, e: T) -> T {
        let w = self.half_window();
        let dist = (e - self.lambda0).abs();
        let cut = smooth_unit_step((w - dist) / (w * lit::<T>(0.5)));
        if cut == T::zero() {
            return T::zero();
        }
        let x = (e - self.lambda0) * self.d0 / self.h;
        self.scale * (-x * x).exp() * cut
    }

    pub fn eval(&self, k: T) -> T {
        if k <= T::zero() {
            return T::zero();
        }
        self.at_energy(k * k)
    }

    /// Open interval of wavenumbers carrying the support.
    pub fn k_support(&self) -> (T, T) {
        let w = self.half_window();
        let lo = (self.lambda0 - w).max(T::zero()).sqrt();
        (lo, (self.lambda0 + w).sqrt())
    }
}

/// Smooth cutoff around the well: 1 on `|x - c| <= eta`, 0 beyond `2 eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiObservable<T> {
    pub center: T,
    pub eta: T,
    /// Identically zero observable (used for checks).
    pub null: bool,
}

impl<T: Real> ChiObservable<T> {
    pub fn new(center: T, eta: T) -> Self {
        Self { center, eta, null: false }
    }

    pub fn zero(center: T, eta: T) -> Self {
        Self { center, eta, null: true }
    }

    pub fn eval(&self, x: T) -> T {
        if self.null {
            return T::zero();
        }
        let r = (x - self.center).abs();
        if r <= self.eta {
            return T::one();
        }
        if r >= self.eta + self.eta {
            return T::zero();
        }
        let u = (lit::<T>(2.0) * self.eta - r) / self.eta;
        u * u * u * (lit::<T>(10.0) - lit::<T>(15.0) * u + lit::<T>(6.0) * u * u)
    }

    pub fn support(&self) -> (T, T) {
        (self.center - self.eta - self.eta, self.center + self.eta + self.eta)
    }
}

/// One failed assumption with the measured margin (negative means violated).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub id: &'static str,
    pub message: String,
    pub margin: f64,
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// `h^3`, the interface parameter size the asymptotic theory asks for.
    pub tau_reference: f64,
    pub tau: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the standing assumptions on geometry, coupling profile, energy
/// window and observable.
pub fn validate<T: Real>(
    params: &ModelParams<T>,
    alpha: &AlphaProfile<T>,
    g: &PartitionFn<T>,
) -> ValidationReport {
    let mut out = Vec::new();
    let mut push = |id: &'static str, message: String, margin: T| {
        out.push(Violation { id, message, margin: to_f64(margin) });
    };
    let zero = T::zero();
    let p = params;

    if !(p.a < p.c && p.c < p.b) {
        push("h1", "geometry: need a < c < b".into(), (p.c - p.a).min(p.b - p.c));
    }
    if p.v0 <= zero {
        push("h1", "V0 must be positive".into(), p.v0);
    }
    if p.h <= zero {
        push("h1", "h must be positive".into(), p.h);
    }
    if p.theta0.re != zero || p.theta0.im <= zero {
        push("h1", "theta0 must be i*tau with tau > 0".into(), p.theta0.im.min(-p.theta0.re.abs()));
    }

    let bound = lit::<T>(2.0) * p.v0.sqrt();
    let (lo, hi) = alpha.range(2000);
    if !(lo > -bound && hi < zero) {
        push("h2", "h2: alpha leaves (-2 sqrt(V0), 0)".into(), (lo + bound).min(-hi));
    }
    let spread = hi - lo;
    let allowed = lit::<T>(2.0) * p.h / (p.v0.sqrt() * p.d0);
    if spread > allowed * (T::one() + lit::<T>(1e-12)) {
        push("h2", "h2: alpha variation exceeds 2h/(sqrt(V0) d0)".into(), allowed - spread);
    }

    let d = p.dist();
    if p.eta >= d {
        push("h3", "h3: eta >= d(c,{a,b})".into(), d - p.eta);
    } else if p.eta + p.eta >= d {
        push("h3", "h3: support of chi not inside (a,b)".into(), d - p.eta - p.eta);
    }
    if p.eta <= zero {
        push("h3", "h3: eta must be positive".into(), p.eta);
    }
    let w = g.half_window();
    if g.lambda0 - w <= zero || g.lambda0 + w >= p.v0 {
        push(
            "h3",
            "h3: energy window of g not inside (0, V0)".into(),
            (g.lambda0 - w).min(p.v0 - g.lambda0 - w),
        );
    }
    if (p.c - p.a) == (p.b - p.c) {
        push("h4", "h4: c is equidistant from a and b (critical case)".into(), zero);
    }

    ValidationReport {
        violations: out,
        tau_reference: to_f64(p.h.powi(3)),
        tau: to_f64(p.theta0.im),
    }
}

/// Adiabatic parameter `exp(-|alpha(0)| d / h)`.
pub fn epsilon<T: Real>(params: &ModelParams<T>, alpha: &AlphaProfile<T>) -> T {
    (-alpha.value(T::zero()).abs() * params.dist() / params.h).exp()
}

/// Leading resonance energy `V0 - alpha(t)^2 / 4`.
pub fn lambda_t<T: Real>(params: &ModelParams<T>, alpha: &AlphaProfile<T>, t: T) -> T {
    let a = alpha.value(t);
    params.v0 - a * a / lit::<T>(4.0)
}
