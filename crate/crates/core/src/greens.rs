//! Branch functions and the Green's function `G^z(x, c)` of the unperturbed
//! deformed operator.
//!
//! Square roots use the branch `arg z ∈ (-3π/2, π/2]`, so the cut is the
//! positive imaginary axis. With `Λ = sqrt(z - V0)` and `s = sqrt(z) e^{-θ0}`
//! the interface reflection factor is `p = (Λ + s) / (Λ - s)`.
//! All interior quantities are written with the decaying exponentials
//! `e^{-iΛ d / h}` (for energies below the barrier `Im Λ < 0`), never with
//! trigonometric functions of large complex arguments:
//!
//! ```text
//! D      = 1 - p² e^{-2iΛ l/h}
//! G(x,c) = e^{-iΛ|x-c|/h} [1 + p e^{-2iΛ(x< - a)/h}] [1 + p e^{-2iΛ(b - x>)/h}] / (2iΛ h D)
//! ```
//!
//! Outside the barrier the function is the outgoing exponential matched
//! through the interface conditions of the deformed operator.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::scalar::{cx, imag_unit, lit, re, to_f64, Real};

type C<T> = Complex<T>;

/// Square root with the cut on the positive imaginary axis.
pub fn branch_sqrt<T: Real>(z: C<T>) -> Result<C<T>> {
    if z.re == T::zero() && z.im > T::zero() {
        return Err(Error::OnCut(format!("{}", z)));
    }
    let mut phi = z.arg();
    if phi > T::FRAC_PI_2() {
        phi = phi - T::PI() - T::PI();
    }
    let r = z.norm().sqrt();
    let half = phi * lit::<T>(0.5);
    Ok(cx(r * half.cos(), r * half.sin()))
}

/// `Λ_z = sqrt(z - V0)` on the fixed branch.
pub fn lambda<T: Real>(z: C<T>, params: &ModelParams<T>) -> Result<C<T>> {
    branch_sqrt(z - re(params.v0))
}

/// Angle `γ_z` (principal logarithm) and reflection factor `p = e^{-2iγ_z}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaP<T> {
    pub gamma: C<T>,
    pub p: C<T>,
    /// `e^{2iγ_z} = (Λ - s)/(Λ + s)`.
    pub e2ig: C<T>,
}

fn degenerate_tol<T: Real>() -> T {
    T::epsilon() * lit::<T>(64.0)
}

/// Interface angle and reflection factor at energy `z`.
pub fn gamma_p<T: Real>(z: C<T>, theta0: C<T>, params: &ModelParams<T>) -> Result<GammaP<T>> {
    let lam = lambda(z, params)?;
    let s = branch_sqrt(z)? * (-theta0).exp();
    let scale = lam.norm() + s.norm();
    let (plus, minus) = (lam + s, lam - s);
    let tol = degenerate_tol::<T>() * scale.max(T::min_positive_value());
    if plus.norm() <= tol {
        return Err(Error::DegenerateDenominator { what: "Λ + s", modulus: to_f64(plus.norm()) });
    }
    if minus.norm() <= tol {
        return Err(Error::DegenerateDenominator { what: "Λ - s", modulus: to_f64(minus.norm()) });
    }
    let e2ig = minus / plus;
    let gamma = e2ig.ln() / (imag_unit::<T>() * lit::<T>(2.0));
    Ok(GammaP { gamma, p: plus / minus, e2ig })
}

/// Closed form of the reflection factor at `E0 = V0 - α²/4` for `θ0 = 0`.
pub fn p0_closed_form<T: Real>(alpha: T, v0: T) -> C<T> {
    let quarter = alpha * alpha / lit::<T>(4.0);
    let half = alpha * alpha / lit::<T>(2.0);
    cx(-(v0 - half), alpha.abs() * (v0 - quarter).sqrt()) / v0
}

/// Energy-dependent quantities shared by all Green's function formulas.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel<T> {
    pub z: C<T>,
    pub lam: C<T>,
    pub sqrt_z: C<T>,
    pub s: C<T>,
    pub p: C<T>,
    pub e_l: C<T>,
    pub denom: C<T>,
    pub params: ModelParams<T>,
}

impl<T: Real> Kernel<T> {
    pub fn new(z: C<T>, params: &ModelParams<T>) -> Result<Self> {
        let gp = gamma_p(z, params.theta0, params)?;
        let lam = lambda(z, params)?;
        let sqrt_z = branch_sqrt(z)?;
        let s = sqrt_z * (-params.theta0).exp();
        let mut k = Kernel {
            z,
            lam,
            sqrt_z,
            s,
            p: gp.p,
            e_l: C::new(T::zero(), T::zero()),
            denom: C::new(T::zero(), T::zero()),
            params: *params,
        };
        k.e_l = k.ex(params.length());
        k.denom = C::new(T::one(), T::zero()) - k.p * k.p * k.e_l;
        let tol = lit::<T>(1e-14) / params.h;
        if k.denom.norm() < tol || lam.norm() == T::zero() {
            return Err(Error::PoleProximity { z: format!("{}", z), modulus: to_f64(k.denom.norm()) });
        }
        Ok(k)
    }

    /// `e^{-2iΛ d/h}`.
    pub fn ex(&self, d: T) -> C<T> {
        (-imag_unit::<T>() * self.lam * lit::<T>(2.0) * d / self.params.h).exp()
    }

    /// `e^{-iΛ d/h}`.
    pub fn half(&self, d: T) -> C<T> {
        (-imag_unit::<T>() * self.lam * d / self.params.h).exp()
    }

    fn prefactor(&self) -> C<T> {
        C::new(T::one(), T::zero()) / (imag_unit::<T>() * self.lam * lit::<T>(2.0) * self.params.h * self.denom)
    }

    pub fn interior(&self, x: T) -> C<T> {
        let p = &self.params;
        let one = C::new(T::one(), T::zero());
        let (lo, hi) = if x < p.c { (x, p.c) } else { (p.c, x) };
        self.half(hi - lo)
            * (one + self.p * self.ex(lo - p.a))
            * (one + self.p * self.ex(p.b - hi))
            * self.prefactor()
    }

    pub fn interior_dx(&self, x: T) -> C<T> {
        let p = &self.params;
        let one = C::new(T::one(), T::zero());
        let scale = C::new(T::one(), T::zero()) / (self.denom * (lit::<T>(2.0) * p.h * p.h));
        if x < p.c {
            self.half(p.c - x) * (one - self.p * self.ex(x - p.a)) * (one + self.p * self.ex(p.b - p.c)) * scale
        } else {
            -self.half(x - p.c) * (one + self.p * self.ex(p.c - p.a)) * (one - self.p * self.ex(p.b - x)) * scale
        }
    }

    /// Deformed exterior value and slope at `x` outside `[a, b]` for the
    /// exterior deformation `theta`.
    pub fn exterior(&self, x: T, theta: C<T>) -> (C<T>, C<T>) {
        let p = &self.params;
        let amp = ((theta + p.theta0) * lit::<T>(0.5)).exp();
        let k = self.sqrt_z * theta.exp() * imag_unit::<T>() / p.h;
        if x > p.b {
            let v = amp * self.interior(p.b) * (k * (x - p.b)).exp();
            (v, v * k)
        } else {
            let v = amp * self.interior(p.a) * (-k * (x - p.a)).exp();
            (v, -v * k)
        }
    }

    /// `G(c, c)` and `dG(c, c)/dz`.
    pub fn diagonal_with_derivative(&self) -> (C<T>, C<T>) {
        let p = &self.params;
        let one = C::new(T::one(), T::zero());
        let two = lit::<T>(2.0);
        let i = imag_unit::<T>();
        let (da, db, l) = (p.c - p.a, p.b - p.c, p.length());
        let (ea, eb, el) = (self.ex(da), self.ex(db), self.e_l);
        let pp = self.p;
        let num = one + pp * ea + pp * eb + pp * pp * el;
        let den = self.denom;
        let front = -i / (re(two * p.h) * self.lam);
        let value = front * num / den;

        let dlam = one / (self.lam * two);
        let dp = -self.s * p.v0 / (self.z * self.lam * (self.lam - self.s) * (self.lam - self.s));
        let dexp = |e: C<T>, d: T| e * (-i * two * d / p.h) * dlam;
        let (dea, deb, del) = (dexp(ea, da), dexp(eb, db), dexp(el, l));
        let dnum = dp * (ea + eb) + pp * (dea + deb) + pp * dp * el * two + pp * pp * del;
        let dden = -(pp * dp * el * two + pp * pp * del);
        let dfront = i / (re(two * p.h) * self.lam * self.lam) * dlam;
        let deriv = dfront * num / den + front * (dnum * den - num * dden) / (den * den);
        (value, deriv)
    }
}

/// Diagonal value `G^z(c, c)` with the exponential factors it is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenDiagonal<T> {
    pub z: C<T>,
    pub value: C<T>,
    /// `e^{-2iΛ(c-a)/h}`.
    pub e_a: C<T>,
    /// `e^{-2iΛ(b-c)/h}`.
    pub e_b: C<T>,
    /// `e^{-2iΛ l/h}`.
    pub e_l: C<T>,
    pub p: C<T>,
    pub lam: C<T>,
    pub h: T,
}

impl<T: Real> GreenDiagonal<T> {
    /// Rebuilds the value from the stored factors.
    pub fn reconstruct(&self) -> C<T> {
        let one = C::new(T::one(), T::zero());
        let p = self.p;
        -imag_unit::<T>() / (re(lit::<T>(2.0) * self.h) * self.lam)
            * (one + p * self.e_a + p * self.e_b + p * p * self.e_l)
            / (one - p * p * self.e_l)
    }
}

/// `G^z(x, c)` for the exterior deformation equal to `θ0`.
pub fn green_xc<T: Real>(z: C<T>, x: T, params: &ModelParams<T>) -> Result<C<T>> {
    green_xc_deformed(z, x, params.theta0, params)
}

/// `U_θ G^z(·, c)` evaluated at `x`; the interior part does not depend on `θ`.
pub fn green_xc_deformed<T: Real>(z: C<T>, x: T, theta: C<T>, params: &ModelParams<T>) -> Result<C<T>> {
    let k = Kernel::new(z, params)?;
    if x < params.a || x > params.b {
        Ok(k.exterior(x, theta).0)
    } else {
        Ok(k.interior(x))
    }
}

/// `∂ₓ G^z(x, c)` for `x ≠ c` (one-sided limits at `a`, `b` taken from inside).
pub fn green_dx<T: Real>(z: C<T>, x: T, params: &ModelParams<T>) -> Result<C<T>> {
    let k = Kernel::new(z, params)?;
    if x < params.a || x > params.b {
        Ok(k.exterior(x, params.theta0).1)
    } else {
        Ok(k.interior_dx(x))
    }
}

pub fn green_cc<T: Real>(z: C<T>, params: &ModelParams<T>) -> Result<GreenDiagonal<T>> {
    let k = Kernel::new(z, params)?;
    let (value, _) = k.diagonal_with_derivative();
    Ok(GreenDiagonal {
        z,
        value,
        e_a: k.ex(params.c - params.a),
        e_b: k.ex(params.b - params.c),
        e_l: k.e_l,
        p: k.p,
        lam: k.lam,
        h: params.h,
    })
}

/// `G^z(c, c)` together with its analytic derivative in `z`.
pub fn green_cc_with_derivative<T: Real>(z: C<T>, params: &ModelParams<T>) -> Result<(C<T>, C<T>)> {
    Ok(Kernel::new(z, params)?.diagonal_with_derivative())
}

/// `(E - V0)^{1/2} G^E(c, c)` and its `E`-derivative.
fn scaled_diagonal<T: Real>(e: C<T>, params: &ModelParams<T>) -> Result<(C<T>, C<T>)> {
    let k = Kernel::new(e, params)?;
    let (g, dg) = k.diagonal_with_derivative();
    let dlam = C::new(T::one(), T::zero()) / (k.lam * lit::<T>(2.0));
    Ok((k.lam * g, dlam * g + k.lam * dg))
}

/// Factor `M(E, E_res)` with `(1 + hαG^E(c,c))^{-1} = M / (E - E_res)`.
pub fn m_factor<T: Real>(e: C<T>, e_res: C<T>, alpha: T, params: &ModelParams<T>) -> Result<C<T>> {
    let one = C::new(T::one(), T::zero());
    let ha = alpha * params.h;
    let g_res = green_cc(e_res, params)?.value;
    let res_residual = (one + re(ha) * g_res).norm();
    if res_residual > lit::<T>(1e-8) {
        return Err(Error::NotAResonance(to_f64(res_residual)));
    }
    let lam = lambda(e, params)?;
    let lam_res = lambda(e_res, params)?;
    let (k_e, dk_e) = scaled_diagonal(e, params)?;
    let ratio = if (e - e_res).norm() < lit::<T>(1e-6) * params.h {
        dk_e
    } else {
        let (k_res, _) = scaled_diagonal(e_res, params)?;
        (k_e - k_res) / (e - e_res)
    };
    let num = lam * lam + lam_res * lam;
    Ok(num / (one + re(ha) * (lam + lam_res) * ratio))
}

/// Leading form `E - V0 + (E_res - V0)^{1/2}(E - V0)^{1/2}` of [`m_factor`].
pub fn m_factor_leading<T: Real>(e: C<T>, e_res: C<T>, params: &ModelParams<T>) -> Result<C<T>> {
    Ok(e - re(params.v0) + lambda(e_res, params)? * lambda(e, params)?)
}
