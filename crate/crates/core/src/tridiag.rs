//! Complex tridiagonal matrices: products, Thomas elimination with a reusable
//! factorisation, and the log-determinant derivative.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{to_f64, Real};

type C<T> = Complex<T>;

/// Row `i` reads `sub[i] u[i-1] + diag[i] u[i] + sup[i] u[i+1]`
/// (`sub[0]` and `sup[n-1]` are unused).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag<T> {
    pub sub: Vec<C<T>>,
    pub diag: Vec<C<T>>,
    pub sup: Vec<C<T>>,
}

impl<T: Real> Tridiag<T> {
    pub fn zeros(n: usize) -> Self {
        let z = C::new(T::zero(), T::zero());
        Self { sub: vec![z; n], diag: vec![z; n], sup: vec![z; n] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply_into(&self, u: &[C<T>], out: &mut [C<T>]) {
        let n = self.len();
        for i in 0..n {
            let mut v = self.diag[i] * u[i];
            if i > 0 {
                v += self.sub[i] * u[i - 1];
            }
            if i + 1 < n {
                v += self.sup[i] * u[i + 1];
            }
            out[i] = v;
        }
    }

    pub fn apply(&self, u: &[C<T>]) -> Vec<C<T>> {
        let mut out = vec![C::new(T::zero(), T::zero()); self.len()];
        self.apply_into(u, &mut out);
        out
    }

    /// `scale * self + shift * I`.
    pub fn affine(&self, scale: C<T>, shift: C<T>) -> Self {
        Self {
            sub: self.sub.iter().map(|v| *v * scale).collect(),
            diag: self.diag.iter().map(|v| *v * scale + shift).collect(),
            sup: self.sup.iter().map(|v| *v * scale).collect(),
        }
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.len())
            .map(|i| self.sub[i].norm() + self.diag[i].norm() + self.sup[i].norm())
            .fold(T::zero(), T::max)
    }

    pub fn factor(&self) -> Result<Factored<T>> {
        let n = self.len();
        let mut upper = vec![C::new(T::zero(), T::zero()); n];
        let mut pivot_inv = vec![C::new(T::zero(), T::zero()); n];
        let scale = self.norm_inf().max(T::min_positive_value());
        let tiny = scale * T::epsilon() * T::epsilon();
        let mut prev_upper = C::new(T::zero(), T::zero());
        for i in 0..n {
            let piv = if i == 0 { self.diag[0] } else { self.diag[i] - self.sub[i] * prev_upper };
            if piv.norm() <= tiny {
                return Err(Error::SingularSolve(to_f64(piv.norm())));
            }
            let inv = piv.inv();
            pivot_inv[i] = inv;
            prev_upper = if i + 1 < n { self.sup[i] * inv } else { C::new(T::zero(), T::zero()) };
            upper[i] = prev_upper;
        }
        Ok(Factored { sub: self.sub.clone(), upper, pivot_inv })
    }

    pub fn solve(&self, f: &[C<T>]) -> Result<Vec<C<T>>> {
        let fac = self.factor()?;
        let mut out = f.to_vec();
        fac.solve_in_place(&mut out);
        Ok(out)
    }

    /// `d/dz log det(z I - self)`, i.e. the trace of `(z - self)^{-1}`.
    pub fn trace_resolvent(&self, z: C<T>) -> Result<C<T>> {
        let n = self.len();
        let zero = C::new(T::zero(), T::zero());
        let one = C::new(T::one(), T::zero());
        // r_k = D_k / D_{k-1}, q_k = D_k' / D_k
        let mut r_prev = one;
        let mut q_prev = zero;
        let mut q_prev2 = zero;
        for k in 0..n {
            let s = if k > 0 { self.sub[k] * self.sup[k - 1] } else { zero };
            let a = z - self.diag[k];
            let r = if k > 0 { a - s / r_prev } else { a };
            if r.norm() == T::zero() {
                return Err(Error::SingularSolve(0.0));
            }
            let dnum = if k > 0 { one + a * q_prev - s * q_prev2 / r_prev } else { one };
            let q = dnum / r;
            q_prev2 = q_prev;
            q_prev = q;
            r_prev = r;
        }
        Ok(q_prev)
    }
}

/// LU factors of a tridiagonal matrix (no pivoting).
#[derive(Debug, Clone, PartialEq)]
pub struct Factored<T> {
    sub: Vec<C<T>>,
    upper: Vec<C<T>>,
    pivot_inv: Vec<C<T>>,
}

impl<T: Real> Factored<T> {
    pub fn solve_in_place(&self, f: &mut [C<T>]) {
        let n = f.len();
        f[0] *= self.pivot_inv[0];
        for i in 1..n {
            let v = f[i] - self.sub[i] * f[i - 1];
            f[i] = v * self.pivot_inv[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            let v = f[i] - self.upper[i] * f[i + 1];
            f[i] = v;
        }
    }
}
