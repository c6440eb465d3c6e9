//! Finite-difference evolution of the deformed operator on a truncated box.
//!
//! The box `[a - L, b + L]` carries a uniform grid with `a`, `b` and `c` on
//! nodes. The value stored at `a` and `b` is the one-sided limit from inside
//! the barrier; the exterior value follows from the interface relation. The
//! interface rows come from eliminating ghost values with second-order
//! one-sided Taylor expansions, the well is a diagonal bump `hα/Δx` at `c`,
//! and the box ends are homogeneous Dirichlet nodes.
//!
//! Time stepping is Crank-Nicolson with the coupling taken at the midpoint.
//! The coupling only touches node `c`, so each step reuses one factorisation
//! of a reference matrix and corrects it with a rank-one update.

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::greens::Kernel;
use crate::model::{AlphaProfile, ChiObservable, ModelParams, PartitionFn};
use crate::quadrature::{cumulative_simpson, Rule};
use crate::reduced::mu;
use crate::scalar::{imag_unit, lit, re, to_f64, Real};
use crate::scattering::scattering_state;
use crate::spectra::ResonanceTrajectory;
use crate::tridiag::{Factored, Tridiag};

type C<T> = Complex<T>;

/// Relative per-step growth tolerated at `θ = θ0`.
pub const GROWTH_TOLERANCE: f64 = 1e-6;
/// Upper bound on `‖H‖ Δt / ε`.
pub const STEP_BUDGET: f64 = 0.5;
/// Nodes at each box end watched by the reflection sentinel.
pub const SENTINEL_NODES: usize = 5;

/// Uniform grid on `[a - L, b + L]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    pub x0: T,
    pub dx: T,
    /// Number of intervals `N`.
    pub intervals: usize,
    pub ia: usize,
    pub ib: usize,
    pub ic: usize,
    pub half_width: T,
}

fn node_index<T: Real>(x: T, x0: T, dx: T, what: &'static str) -> Result<usize> {
    let f = to_f64((x - x0) / dx);
    let j = f.round();
    if (f - j).abs() > 1e-8 || j < 0.0 {
        return Err(Error::NodeMisalignment(what));
    }
    Ok(j as usize)
}

impl<T: Real> Grid<T> {
    pub fn new(params: &ModelParams<T>, half_width: T, intervals: usize) -> Result<Self> {
        let x0 = params.a - half_width;
        let dx = (params.length() + half_width + half_width) / lit::<T>(intervals as f64);
        if half_width < params.length() {
            return Err(Error::Invalid(format!("box half-width {} below barrier length", half_width)));
        }
        if to_f64(dx) > to_f64(params.h) / 10.0 * (1.0 + 1e-9) {
            return Err(Error::Invalid(format!("grid spacing {} exceeds h/10", dx)));
        }
        Ok(Self {
            x0,
            dx,
            intervals,
            ia: node_index(params.a, x0, dx, "a")?,
            ib: node_index(params.b, x0, dx, "b")?,
            ic: node_index(params.c, x0, dx, "c")?,
            half_width,
        })
    }

    /// Grid with spacing as close as possible to `dx` (exact alignment still
    /// required).
    pub fn with_spacing(params: &ModelParams<T>, half_width: T, dx: T) -> Result<Self> {
        let n = to_f64((params.length() + half_width + half_width) / dx).round() as usize;
        Self::new(params, half_width, n.max(2))
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, j: usize) -> T {
        self.x0 + self.dx * lit::<T>(j as f64)
    }

    pub fn is_exterior(&self, j: usize) -> bool {
        j < self.ia || j > self.ib
    }

    /// `sqrt(Δx Σ |u|²)`.
    pub fn norm(&self, u: &[C<T>]) -> T {
        (u.iter().fold(T::zero(), |acc, v| acc + v.norm_sqr()) * self.dx).sqrt()
    }

    /// Norm restricted to the barrier nodes `a..=b`.
    pub fn interior_norm(&self, u: &[C<T>]) -> T {
        self.norm(&u[self.ia..=self.ib])
    }

    /// `Δx Σ χ |u|²`.
    pub fn chi_weighted(&self, chi: &ChiObservable<T>, u: &[C<T>]) -> T {
        u.iter().enumerate().fold(T::zero(), |acc, (j, v)| acc + chi.eval(self.x(j)) * v.norm_sqr()) * self.dx
    }

    /// `max |u|` over the outermost nodes at both ends, relative to `max |u|`.
    pub fn edge_ratio(&self, u: &[C<T>]) -> T {
        let n = u.len();
        let m = SENTINEL_NODES.min(n / 2);
        let edge = u[..m].iter().chain(&u[n - m..]).map(|v| v.norm()).fold(T::zero(), T::max);
        let all = u.iter().map(|v| v.norm()).fold(T::zero(), T::max);
        if all > T::zero() {
            edge / all
        } else {
            T::zero()
        }
    }
}

/// Field values on the grid at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<T> {
    pub values: Vec<C<T>>,
    pub time: T,
}

impl<T: Real> GridField<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        Self { values: vec![C::new(T::zero(), T::zero()); grid.len()], time: T::zero() }
    }

    pub fn sample<F: Fn(T) -> C<T>>(grid: &Grid<T>, f: F) -> Self {
        let mut values: Vec<C<T>> = (0..grid.len()).map(|j| f(grid.x(j))).collect();
        let last = values.len() - 1;
        values[0] = C::new(T::zero(), T::zero());
        values[last] = C::new(T::zero(), T::zero());
        Self { values, time: T::zero() }
    }

    /// Grid delta at `c` (`1/Δx` on node `c`).
    pub fn delta_c(grid: &Grid<T>) -> Self {
        let mut f = Self::zeros(grid);
        f.values[grid.ic] = C::new(T::one() / grid.dx, T::zero());
        f
    }

    pub fn norm(&self, grid: &Grid<T>) -> T {
        grid.norm(&self.values)
    }
}

/// Tridiagonal discretisation of the deformed operator at fixed coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHamiltonian<T> {
    pub matrix: Tridiag<T>,
    pub alpha: T,
    pub theta: C<T>,
    pub grid: Grid<T>,
}

impl<T: Real> DiscreteHamiltonian<T> {
    /// Assembles `-h² e^{-2θ 1_ext} D² + V0 1_(a,b) + (hα/Δx) e_c e_cᵀ`.
    pub fn assemble(alpha: T, theta: C<T>, grid: &Grid<T>, params: &ModelParams<T>) -> Result<Self> {
        let check = Grid::new(params, grid.half_width, grid.intervals)?;
        if check != *grid {
            return Err(Error::Invalid("grid does not match the barrier geometry".into()));
        }
        let n = grid.len();
        let mut m = Tridiag::zeros(n);
        let q = re(params.h * params.h / (grid.dx * grid.dx));
        let two = lit::<T>(2.0);
        let half = lit::<T>(0.5);
        let beta = params.theta0 + theta;
        let ext = (-theta * two).exp() * q;
        let e_half = (beta * half).exp();
        let e_3half = (beta * lit::<T>(1.5)).exp();
        let k = e_3half + (theta * two + beta * half).exp();
        let edge = q * two / k;
        let v0 = re(params.v0);
        for j in 1..grid.intervals {
            if j == grid.ia || j == grid.ib {
                let (inner, outer) = (-edge * e_3half, -edge);
                if j == grid.ia {
                    m.sub[j] = outer;
                    m.sup[j] = inner;
                } else {
                    m.sub[j] = inner;
                    m.sup[j] = outer;
                }
                m.diag[j] = edge * (e_3half + e_half) + v0 * e_3half / k;
            } else if grid.is_exterior(j) {
                m.diag[j] = ext * two;
                m.sub[j] = if j == grid.ib + 1 { -ext * e_half } else { -ext };
                m.sup[j] = if j + 1 == grid.ia { -ext * e_half } else { -ext };
            } else {
                m.diag[j] = q * two + v0;
                m.sub[j] = -q;
                m.sup[j] = -q;
            }
        }
        // Dirichlet ends decoupled from the interior
        m.sub[1] = C::new(T::zero(), T::zero());
        m.sup[grid.intervals - 1] = C::new(T::zero(), T::zero());
        m.diag[grid.ic] += re(params.h * alpha / grid.dx);
        Ok(Self { matrix: m, alpha, theta, grid: *grid })
    }

    pub fn apply(&self, u: &[C<T>]) -> Vec<C<T>> {
        self.matrix.apply(u)
    }

    pub fn norm_estimate(&self) -> T {
        self.matrix.norm_inf()
    }
}

/// Solves `(H - z) u = f`.
pub fn resolvent_apply<T: Real>(hd: &DiscreteHamiltonian<T>, z: C<T>, f: &GridField<T>) -> Result<GridField<T>> {
    let shifted = hd.matrix.affine(C::new(T::one(), T::zero()), -z);
    Ok(GridField { values: shifted.solve(&f.values)?, time: f.time })
}

/// Contour-integral projector applied to a probe.
#[derive(Debug, Clone, PartialEq)]
pub struct RieszReport<T> {
    pub trace: C<T>,
    /// `‖P²f - Pf‖ / ‖Pf‖`.
    pub idempotency: T,
    pub projected: GridField<T>,
}

/// Trapezoid rule with `m` nodes on the circle `|z - center| = radius`.
pub fn riesz_projector<T: Real>(
    hd: &DiscreteHamiltonian<T>,
    center: C<T>,
    radius: T,
    m: usize,
    probe: &GridField<T>,
) -> Result<RieszReport<T>> {
    let nodes: Vec<(C<T>, C<T>)> = (0..m)
        .map(|j| {
            let phase = C::from_polar(T::one(), lit::<T>(2.0) * T::PI() * lit::<T>(j as f64 / m as f64));
            (center + phase * radius, phase * radius / lit::<T>(m as f64))
        })
        .collect();
    let factors: Vec<Factored<T>> = nodes
        .iter()
        .map(|(z, _)| hd.matrix.affine(C::new(-T::one(), T::zero()), *z).factor())
        .collect::<Result<_>>()?;
    let project = |f: &[C<T>]| {
        let mut acc = vec![C::new(T::zero(), T::zero()); f.len()];
        for ((_, w), fac) in nodes.iter().zip(&factors) {
            let mut u = f.to_vec();
            fac.solve_in_place(&mut u);
            for (a, v) in acc.iter_mut().zip(&u) {
                *a += *v * *w;
            }
        }
        acc
    };
    let mut trace = C::new(T::zero(), T::zero());
    for (z, w) in &nodes {
        trace += hd.matrix.trace_resolvent(*z)? * *w;
    }
    let near = to_f64(trace.re).round();
    if (to_f64(trace.re) - near).abs() > 0.1 || to_f64(trace.im).abs() > 0.1 {
        return Err(Error::EnclosureViolation(to_f64(trace.re)));
    }
    let once = project(&probe.values);
    let twice = project(&once);
    let diff: Vec<C<T>> = twice.iter().zip(&once).map(|(a, b)| *a - *b).collect();
    let g = &hd.grid;
    let pn = g.norm(&once);
    let idempotency = if pn > T::zero() { g.norm(&diff) / pn } else { T::zero() };
    Ok(RieszReport { trace, idempotency, projected: GridField { values: once, time: probe.time } })
}

/// Crank-Nicolson stepper for `iε u' = (H_α - shift) u + σ e_c`.
struct Stepper<T> {
    minus: Tridiag<T>,
    plus: Factored<T>,
    /// `(I + iλ(H_ref - shift))^{-1} e_c`.
    column: Vec<C<T>>,
    /// `λ = Δt / (2ε)`.
    lambda: T,
    alpha_ref: T,
    well: T,
    ic: usize,
    rhs: Vec<C<T>>,
}

impl<T: Real> Stepper<T> {
    fn new(h_ref: &DiscreteHamiltonian<T>, shift: T, dt: T, eps: T, params: &ModelParams<T>) -> Result<Self> {
        let lambda = dt / (eps + eps);
        let il = imag_unit::<T>() * lambda;
        let one = C::new(T::one(), T::zero());
        let plus_m = h_ref.matrix.affine(il, one - il * shift);
        let minus = h_ref.matrix.affine(-il, one + il * shift);
        let plus = plus_m.factor()?;
        let mut column = vec![C::new(T::zero(), T::zero()); h_ref.grid.len()];
        column[h_ref.grid.ic] = one;
        plus.solve_in_place(&mut column);
        Ok(Self {
            minus,
            plus,
            column,
            lambda,
            alpha_ref: h_ref.alpha,
            well: params.h / h_ref.grid.dx,
            ic: h_ref.grid.ic,
            rhs: vec![C::new(T::zero(), T::zero()); h_ref.grid.len()],
        })
    }

    /// One step with coupling `alpha_mid` and source amplitude `source`.
    fn step(&mut self, u: &mut [C<T>], alpha_mid: T, source: C<T>, index: usize) -> Result<()> {
        let il = imag_unit::<T>() * self.lambda;
        let d = il * ((alpha_mid - self.alpha_ref) * self.well);
        self.minus.apply_into(u, &mut self.rhs);
        let c = self.ic;
        self.rhs[c] = self.rhs[c] - d * u[c] - il * lit::<T>(2.0) * source;
        self.plus.solve_in_place(&mut self.rhs);
        let den = C::new(T::one(), T::zero()) + d * self.column[c];
        if den.norm() < lit::<T>(1e-14) {
            return Err(Error::StepSolveFailure(index));
        }
        let coef = d * self.rhs[c] / den;
        for ((o, r), z) in u.iter_mut().zip(&self.rhs).zip(&self.column) {
            *o = *r - coef * *z;
        }
        if !u[c].re.is_finite() || !u[c].im.is_finite() {
            return Err(Error::StepSolveFailure(index));
        }
        Ok(())
    }
}

/// Step size `≤ STEP_BUDGET ε / ‖H‖` over the coupling range of the profile.
pub fn stable_step<T: Real>(
    alpha: &AlphaProfile<T>,
    theta: C<T>,
    eps: T,
    grid: &Grid<T>,
    params: &ModelParams<T>,
) -> Result<T> {
    let (lo, hi) = alpha.range(64);
    let mut norm = T::zero();
    for a in [lo, hi] {
        norm = norm.max(DiscreteHamiltonian::assemble(a, theta, grid, params)?.norm_estimate());
    }
    Ok(lit::<T>(STEP_BUDGET) * eps / norm)
}

/// Snapshots of a homogeneous evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution<T> {
    pub snapshots: Vec<GridField<T>>,
    pub dt: T,
    pub steps: usize,
    /// Largest relative one-step norm growth (0 when not monitored).
    pub max_growth: T,
}

fn substeps<T: Real>(span: T, dt_max: T) -> usize {
    (to_f64(span / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Evolves `u0` from `times[0]` and records it at every entry of `times`.
/// The per-step norm is monitored when `theta == θ0`.
#[allow(clippy::too_many_arguments)]
pub fn evolve<T: Real>(
    u0: &GridField<T>,
    alpha: &AlphaProfile<T>,
    theta: C<T>,
    times: &[T],
    eps: T,
    grid: &Grid<T>,
    params: &ModelParams<T>,
    dt_max: Option<T>,
) -> Result<Evolution<T>> {
    let budget = stable_step(alpha, theta, eps, grid, params)?;
    let dt_max = dt_max.map_or(budget, |d| d.min(budget));
    let h_ref = DiscreteHamiltonian::assemble(alpha.value(times[0]), theta, grid, params)?;
    let monitor = (theta - params.theta0).norm() <= lit::<T>(1e-14);
    let mut u = u0.values.clone();
    let mut snapshots = vec![GridField { values: u.clone(), time: times[0] }];
    let mut stepper: Option<(T, Stepper<T>)> = None;
    let mut steps = 0usize;
    let mut max_growth = T::zero();
    let mut norm = grid.norm(&u);
    let zero = C::new(T::zero(), T::zero());
    for w in times.windows(2) {
        let n = substeps(w[1] - w[0], dt_max);
        let dt = (w[1] - w[0]) / lit::<T>(n as f64);
        let rebuild = stepper.as_ref().is_none_or(|(d, _)| (*d - dt).abs() > dt * lit::<T>(1e-12));
        if rebuild {
            stepper = Some((dt, Stepper::new(&h_ref, T::zero(), dt, eps, params)?));
        }
        let st = &mut stepper.as_mut().expect("stepper built above").1;
        for s in 0..n {
            let mid = w[0] + dt * (lit::<T>(s as f64) + lit::<T>(0.5));
            st.step(&mut u, alpha.value(mid), zero, steps)?;
            steps += 1;
            if monitor {
                let next = grid.norm(&u);
                if norm > T::zero() {
                    let growth = next / norm - T::one();
                    max_growth = max_growth.max(growth);
                    if growth > lit::<T>(GROWTH_TOLERANCE) {
                        return Err(Error::NormGrowth { step: steps, growth: to_f64(growth) });
                    }
                }
                norm = next;
            }
        }
        snapshots.push(GridField { values: u.clone(), time: w[1] });
    }
    Ok(Evolution { snapshots, dt: dt_max, steps, max_growth })
}

/// Sampled `U_θ ψ̃(k, ·)`.
pub fn sample_incident<T: Real>(k: T, theta: C<T>, grid: &Grid<T>, params: &ModelParams<T>) -> Result<GridField<T>> {
    let st = scattering_state(k, params)?;
    Ok(GridField::sample(grid, |x| st.psi_deformed(x, theta)))
}

/// Sampled `U_θ G^z(·, c)`.
pub fn sample_green<T: Real>(z: C<T>, theta: C<T>, grid: &Grid<T>, params: &ModelParams<T>) -> Result<GridField<T>> {
    let kernel = Kernel::new(z, params)?;
    Ok(GridField::sample(grid, |x| {
        if x < params.a || x > params.b {
            kernel.exterior(x, theta).0
        } else {
            kernel.interior(x)
        }
    }))
}

/// Discrete stationary scattered field: `(H_α - k²) W = -hα ψ̃(k, c) δ_c`.
pub fn stationary_scattered<T: Real>(k: T, hd: &DiscreteHamiltonian<T>, params: &ModelParams<T>) -> Result<GridField<T>> {
    let psi_c = scattering_state(k, params)?.interior(params.c);
    let grid = &hd.grid;
    let mut w = GridField::zeros(grid);
    w.values[grid.ic] = -psi_c * (params.h * hd.alpha / grid.dx);
    resolvent_apply(hd, re(k * k), &w)
}

/// Relative error of [`stationary_scattered`] against `C G^{k²}` on the nodes
/// within `margin` of the barrier.
pub fn stationary_error<T: Real>(
    k: T,
    alpha: T,
    theta: C<T>,
    grid: &Grid<T>,
    params: &ModelParams<T>,
    margin: T,
) -> Result<T> {
    let hd = DiscreteHamiltonian::assemble(alpha, theta, grid, params)?;
    let w = stationary_scattered(k, &hd, params)?;
    let exact = crate::scattering::deformed_initial_with(k, alpha, theta, params)?;
    let lo = grid.ia.saturating_sub(to_f64(margin / grid.dx).round() as usize);
    let hi = (grid.ib + to_f64(margin / grid.dx).round() as usize).min(grid.intervals);
    let reference: Vec<C<T>> = (lo..=hi).map(|j| exact.coupling * exact.green(grid.x(j))).collect();
    let diff: Vec<C<T>> = (lo..=hi).zip(&reference).map(|(j, r)| w.values[j] - *r).collect();
    Ok(grid.norm(&diff) / grid.norm(&reference))
}

/// Result of one incoming mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeRun {
    pub k: f64,
    pub weight: f64,
    /// `Δx Σ χ |ψ̃ + W|²` at each output time.
    pub chi_norms: Vec<f64>,
    /// Largest box-edge ratio of the scattered part over the run.
    pub edge_ratio: f64,
    pub steps: usize,
}

/// Evolves the scattered part `W` of one incoming mode in the frame rotating
/// at `k²`: `iεW' = (H_α - k²) W + hα ψ̃(c) δ_c`, starting from the discrete
/// stationary solution at `α(times[0])`.
#[allow(clippy::too_many_arguments)]
pub fn scattered_mode<T: Real>(
    k: T,
    alpha: &AlphaProfile<T>,
    chi: &ChiObservable<T>,
    theta: C<T>,
    times: &[T],
    eps: T,
    grid: &Grid<T>,
    params: &ModelParams<T>,
    dt_max: T,
) -> Result<(Vec<T>, T, usize)> {
    let st = scattering_state(k, params)?;
    let incident = GridField::sample(grid, |x| st.psi_deformed(x, theta));
    let psi_c = st.interior(params.c);
    let shift = k * k;
    let a0 = alpha.value(times[0]);
    let h_ref = DiscreteHamiltonian::assemble(a0, theta, grid, params)?;
    let mut w = stationary_scattered(k, &h_ref, params)?.values;
    let total = |w: &[C<T>]| -> Vec<C<T>> { w.iter().zip(&incident.values).map(|(a, b)| *a + *b).collect() };
    let mut out = vec![grid.chi_weighted(chi, &total(&w))];
    let mut edge = grid.edge_ratio(&w);
    let mut stepper: Option<(T, Stepper<T>)> = None;
    let mut steps = 0usize;
    let source_scale = psi_c * (params.h / grid.dx);
    for win in times.windows(2) {
        let n = substeps(win[1] - win[0], dt_max);
        let dt = (win[1] - win[0]) / lit::<T>(n as f64);
        let rebuild = stepper.as_ref().is_none_or(|(d, _)| (*d - dt).abs() > dt * lit::<T>(1e-12));
        if rebuild {
            stepper = Some((dt, Stepper::new(&h_ref, shift, dt, eps, params)?));
        }
        let s = &mut stepper.as_mut().expect("stepper built above").1;
        for j in 0..n {
            let mid = win[0] + dt * (lit::<T>(j as f64) + lit::<T>(0.5));
            let am = alpha.value(mid);
            s.step(&mut w, am, source_scale * am, steps)?;
            steps += 1;
        }
        out.push(grid.chi_weighted(chi, &total(&w)));
        edge = edge.max(grid.edge_ratio(&w));
    }
    Ok((out, edge, steps))
}

/// Observable time series from the direct propagation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub modes: Vec<ModeRun>,
    pub dt: f64,
    /// Largest box-edge ratio over all modes.
    pub sentinel: f64,
}

/// `A(t) = Σ_k w_k g(k)/(2πh) Δx Σ χ |ψ̃ + W|²` over the nodes of `rule`,
/// with the modes run in parallel on at most `workers` threads.
#[allow(clippy::too_many_arguments)]
pub fn observable_a<T: Real>(
    alpha: &AlphaProfile<T>,
    g: &PartitionFn<T>,
    chi: &ChiObservable<T>,
    theta: C<T>,
    eps: T,
    grid: &Grid<T>,
    params: &ModelParams<T>,
    rule: &Rule<T>,
    times: &[T],
    dt_max: Option<T>,
    workers: usize,
) -> Result<ObservableSeries> {
    let budget = stable_step(alpha, theta, eps, grid, params)?;
    let dt = dt_max.map_or(budget, |d| d.min(budget));
    let two_pi_h = lit::<T>(2.0) * T::PI() * params.h;
    let jobs: Vec<(T, T)> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(k, w)| (*k, *w * g.eval(*k) / two_pi_h))
        .filter(|(_, w)| *w != T::zero())
        .collect();
    let run = || -> Result<Vec<ModeRun>> {
        jobs.par_iter()
            .map(|&(k, weight)| {
                let (chi_norms, edge, steps) = if chi.null {
                    (vec![T::zero(); times.len()], T::zero(), 0)
                } else {
                    scattered_mode(k, alpha, chi, theta, times, eps, grid, params, dt)?
                };
                Ok(ModeRun {
                    k: to_f64(k),
                    weight: to_f64(weight),
                    chi_norms: chi_norms.into_iter().map(to_f64).collect(),
                    edge_ratio: to_f64(edge),
                    steps,
                })
            })
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("worker pool: {e}")))?;
    let modes = pool.install(run)?;
    let mut values = vec![0.0; times.len()];
    for m in &modes {
        for (v, n) in values.iter_mut().zip(&m.chi_norms) {
            *v += m.weight * n;
        }
    }
    let sentinel = modes.iter().map(|m| m.edge_ratio).fold(0.0, f64::max);
    Ok(ObservableSeries { times: times.iter().map(|t| to_f64(*t)).collect(), values, modes, dt: to_f64(dt), sentinel })
}

/// Distance of the evolved resonance state from its adiabatic approximation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdiabaticReport {
    pub times: Vec<f64>,
    pub delta: Vec<f64>,
    pub sup: f64,
    pub max_growth: f64,
    pub steps: usize,
}

/// Evolves `u0 = G^{E(0)}(·, c)` and compares it with
/// `μ(t) e^{-(i/ε)∫E} G^{E(t)}(·, c)` on the trajectory times. Norms are
/// taken over the barrier nodes.
#[allow(clippy::too_many_arguments)]
pub fn adiabatic_check<T: Real>(
    trajectory: &ResonanceTrajectory<T>,
    alpha: &AlphaProfile<T>,
    theta: C<T>,
    eps: T,
    grid: &Grid<T>,
    params: &ModelParams<T>,
    dt_max: Option<T>,
) -> Result<AdiabaticReport> {
    let times = &trajectory.times;
    if times.len() < 2 {
        return Err(Error::Invalid("adiabatic check needs at least two times".into()));
    }
    let energies = trajectory.energies();
    let u0 = sample_green(energies[0], theta, grid, params)?;
    let evo = evolve(&u0, alpha, theta, times, eps, grid, params, dt_max)?;
    let dt = times[1] - times[0];
    let phase_re = cumulative_simpson(&energies.iter().map(|e| e.re).collect::<Vec<_>>(), dt);
    let phase_im = cumulative_simpson(&energies.iter().map(|e| e.im).collect::<Vec<_>>(), dt);
    let reference = grid.interior_norm(&u0.values);
    let mut delta = Vec::with_capacity(times.len());
    for (j, snap) in evo.snapshots.iter().enumerate() {
        let m = mu(times[j], trajectory, alpha, params)?.norm_ratio;
        let phase = (-imag_unit::<T>() * C::new(phase_re[j], phase_im[j]) / eps).exp() * m;
        let g = sample_green(energies[j], theta, grid, params)?;
        let diff: Vec<C<T>> = snap.values.iter().zip(&g.values).map(|(u, v)| *u - phase * *v).collect();
        delta.push(to_f64(grid.interior_norm(&diff) / reference));
    }
    Ok(AdiabaticReport {
        times: times.iter().map(|t| to_f64(*t)).collect(),
        sup: delta.iter().cloned().fold(0.0, f64::max),
        delta,
        max_growth: to_f64(evo.max_growth),
        steps: evo.steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::green_cc;
    use crate::spectra::find_resonance;
    use num_complex::Complex64;

    fn params() -> ModelParams<f64> {
        ModelParams {
            a: 0.0,
            b: 1.0,
            c: 0.3,
            v0: 1.0,
            h: 0.1,
            theta0: Complex64::new(0.0, 0.02),
            eta: 0.14,
            d0: 1.0,
            t_final: 1.0,
        }
    }

    #[test]
    fn grid_alignment_checked() {
        let p = params();
        let g = Grid::with_spacing(&p, 1.0, 0.01).unwrap();
        assert_eq!((g.ia, g.ib, g.ic), (100, 200, 130));
        let mut q = p;
        q.c = 0.3005;
        assert!(matches!(Grid::with_spacing(&q, 1.0, 0.01), Err(Error::NodeMisalignment("c"))));
        assert!(Grid::with_spacing(&p, 1.0, 0.02).is_err());
    }

    #[test]
    fn undeformed_matrix_is_textbook() {
        let mut p = params();
        p.theta0 = Complex64::new(0.0, 0.0);
        let g = Grid::with_spacing(&p, 1.0, 0.01).unwrap();
        let hd = DiscreteHamiltonian::assemble(0.0, Complex64::new(0.0, 0.0), &g, &p).unwrap();
        let m = &hd.matrix;
        for j in 1..g.intervals - 1 {
            assert!((m.sup[j] - m.sub[j + 1]).norm() < 1e-12);
            assert!(m.diag[j].im.abs() < 1e-14);
        }
        assert!((m.diag[150].re - (200.0 + 1.0)).abs() < 1e-12);
        assert!((m.diag[50].re - 200.0).abs() < 1e-12);
        assert!((m.diag[g.ib].re - (200.0 + 0.5)).abs() < 1e-12);
    }

    /// Residual of `(H - z) u` split into regular rows (discrete norm over a
    /// window around the barrier, node `c` excluded) and the two interface
    /// rows rescaled to jump-condition form.
    fn residuals(g: &Grid<f64>, hd: &DiscreteHamiltonian<f64>, u: &GridField<f64>, z: Complex64) -> (f64, f64) {
        let p = params();
        let hu = hd.apply(&u.values);
        let lo = g.ia - (0.3 / g.dx).round() as usize;
        let hi = g.ib + (0.3 / g.dx).round() as usize;
        let r: Vec<Complex64> = (lo..=hi)
            .filter(|&j| j != g.ic && j != g.ia && j != g.ib)
            .map(|j| hu[j] - u.values[j] * z)
            .collect();
        let beta = p.theta0 + hd.theta;
        let k = (beta * 1.5).exp() + (hd.theta * 2.0 + beta * 0.5).exp();
        let to_jump = k * g.dx / (2.0 * p.h * p.h);
        let edge = [g.ia, g.ib].iter().map(|&j| ((hu[j] - u.values[j] * z) * to_jump).norm()).fold(0.0, f64::max);
        (g.norm(&r), edge)
    }

    fn assert_second_order(coarse: (f64, f64), fine: (f64, f64)) {
        assert!((coarse.0 / fine.0).log2() > 1.9, "regular rows {coarse:?} {fine:?}");
        assert!((coarse.1 / fine.1).log2() > 1.9, "interface rows {coarse:?} {fine:?}");
    }

    #[test]
    fn scattering_state_residual_is_second_order() {
        let p = params();
        let theta = Complex64::new(0.0, 0.3);
        let k = 0.8;
        let run = |dx: f64| {
            let g = Grid::with_spacing(&p, 1.0, dx).unwrap();
            let u = sample_incident(k, theta, &g, &p).unwrap();
            let hd = DiscreteHamiltonian::assemble(0.0, theta, &g, &p).unwrap();
            residuals(&g, &hd, &u, Complex64::new(k * k, 0.0))
        };
        assert_second_order(run(0.01), run(0.005));
    }

    #[test]
    fn resonance_state_residual_is_second_order() {
        let p = params();
        let theta = Complex64::new(0.0, 0.3);
        let res = find_resonance(-1.0, &p, None).unwrap();
        let run = |dx: f64| {
            let g = Grid::with_spacing(&p, 1.0, dx).unwrap();
            let u = sample_green(res.e, theta, &g, &p).unwrap();
            let hd = DiscreteHamiltonian::assemble(-1.0, theta, &g, &p).unwrap();
            residuals(&g, &hd, &u, res.e)
        };
        assert_second_order(run(0.01), run(0.005));
    }

    #[test]
    fn resolvent_residual_and_krein_delta() {
        let p = params();
        let theta = Complex64::new(0.0, 0.5);
        let z = Complex64::new(0.5, 0.05);
        let alpha = -1.0;
        let oracle = green_cc(z, &p).unwrap().value;
        let errs: Vec<f64> = [0.01, 0.005]
            .iter()
            .map(|&dx| {
                let g = Grid::with_spacing(&p, 3.0, dx).unwrap();
                let hd = DiscreteHamiltonian::assemble(alpha, theta, &g, &p).unwrap();
                let f = GridField::delta_c(&g);
                let u = resolvent_apply(&hd, z, &f).unwrap();
                let back = hd.apply(&u.values);
                let res: Vec<Complex64> = back.iter().zip(&u.values).zip(&f.values).map(|((b, u), f)| b - u * z - f).collect();
                assert!(g.norm(&res) < 1e-12 * f.norm(&g));
                let exact = GridField::sample(&g, |x| {
                    crate::greens::green_xc_deformed(z, x, theta, &p).unwrap() / (1.0 + p.h * alpha * oracle)
                });
                let lo = g.ia - (0.3 / dx) as usize;
                let hi = g.ib + (0.3 / dx) as usize;
                let d: Vec<Complex64> = (lo..=hi).map(|j| u.values[j] - exact.values[j]).collect();
                g.norm(&d) / g.norm(&exact.values[lo..=hi])
            })
            .collect();
        assert!((errs[0] / errs[1]).log2() > 1.9, "{errs:?}");
    }

    #[test]
    fn resolvent_norm_peaks_at_resonance() {
        let p = params();
        let theta = Complex64::new(0.0, 0.4);
        let res = find_resonance(-1.0, &p, None).unwrap();
        let g = Grid::with_spacing(&p, 2.0, 0.01).unwrap();
        let hd = DiscreteHamiltonian::assemble(-1.0, theta, &g, &p).unwrap();
        let f = GridField::delta_c(&g);
        let gam = res.gamma();
        let mut best = (0.0, 0.0);
        for i in 0..=400 {
            let e = res.e.re - 4.0 * gam + 8.0 * gam * i as f64 / 400.0;
            let n = resolvent_apply(&hd, Complex64::new(e, 0.0), &f).unwrap().norm(&g);
            if n > best.1 {
                best = (e, n);
            }
        }
        assert!((best.0 - res.e.re).abs() < 0.5 * gam, "{} vs {}", best.0, res.e.re);
    }

    #[test]
    fn riesz_projector_isolates_resonance() {
        let p = params();
        let theta = Complex64::new(0.0, 0.4);
        let res = find_resonance(-1.0, &p, None).unwrap();
        let g = Grid::with_spacing(&p, 2.0, 0.01).unwrap();
        let hd = DiscreteHamiltonian::assemble(-1.0, theta, &g, &p).unwrap();
        let probe = GridField::delta_c(&g);
        let rep = riesz_projector(&hd, res.e, 0.08, 64, &probe).unwrap();
        assert!((rep.trace - 1.0).norm() < 1e-6, "{}", rep.trace);
        assert!(rep.idempotency < 1e-6, "{}", rep.idempotency);
        let empty = riesz_projector(&hd, Complex64::new(0.55, -0.3), 0.02, 64, &probe).unwrap();
        assert!(empty.trace.norm() < 1e-6);
    }

    #[test]
    fn contraction_at_interface_parameter() {
        let p = params();
        let g = Grid::with_spacing(&p, 1.0, 0.01).unwrap();
        let al = AlphaProfile { alpha0: -1.0, amplitude: 0.05, ramp: crate::model::RampKind::Smoothstep, t_final: 1.0 };
        let eps = 0.05;
        let u0 = GridField::sample(&g, |x| Complex64::new((-(x - 0.3f64).powi(2) / 0.01).exp(), 0.0));
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.01).collect();
        let evo = evolve(&u0, &al, p.theta0, &times, eps, &g, &p, None).unwrap();
        assert!(evo.max_growth <= GROWTH_TOLERANCE);
        let n: Vec<f64> = evo.snapshots.iter().map(|s| s.norm(&g)).collect();
        assert!(n.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn stationary_eigenvector_rotates_in_phase() {
        let mut q = params();
        q.theta0 = Complex64::new(0.0, 0.0);
        q.v0 = 0.0;
        let g = Grid::with_spacing(&q, 1.0, 0.01).unwrap();
        let zero = Complex64::new(0.0, 0.0);
        let hd = DiscreteHamiltonian::assemble(0.0, zero, &g, &q).unwrap();
        let last = g.len() - 1;
        // lowest box mode (free box, well switched off) by inverse iteration
        let mut u: Vec<Complex64> = (0..g.len()).map(|j| Complex64::new((j as f64 * 0.37).sin(), 0.0)).collect();
        for _ in 0..60 {
            let mut v = resolvent_apply(&hd, Complex64::new(1e-4, 0.0), &GridField { values: u, time: 0.0 }).unwrap().values;
            v[0] = zero;
            v[last] = zero;
            let n = g.norm(&v);
            u = v.iter().map(|x| x / n).collect();
        }
        let hu = hd.apply(&u);
        let e = (0..u.len()).map(|j| (hu[j] * u[j].conj()).re).sum::<f64>() * g.dx;
        let al = AlphaProfile::constant(0.0, 1.0);
        let (eps, t) = (1.0, 0.4);
        let run = |dt: f64| {
            let u0 = GridField { values: u.clone(), time: 0.0 };
            let evo = evolve(&u0, &al, zero, &[0.0, t], eps, &g, &q, Some(dt)).unwrap();
            let phase = Complex64::new(0.0, -e * t / eps).exp();
            let d: Vec<Complex64> = evo.snapshots[1].values.iter().zip(&u).map(|(a, b)| a - b * phase).collect();
            g.norm(&d)
        };
        // the Crank-Nicolson phase error (λΔt)³/12 per step is below rounding here
        for dt in [1e-3, 5e-4] {
            assert!(run(dt) < 1e-11);
        }
    }

    #[test]
    fn stationary_scattered_field_is_second_order() {
        let p = params();
        let theta = Complex64::new(0.0, 0.4);
        let e: Vec<f64> = [0.01, 0.005]
            .iter()
            .map(|&dx| {
                let g = Grid::with_spacing(&p, 2.0, dx).unwrap();
                stationary_error(0.86, -1.0, theta, &g, &p, 0.3).unwrap()
            })
            .collect();
        assert!(e[0] < 0.05 && (e[0] / e[1]).log2() > 1.9, "{e:?}");
    }

    #[test]
    fn null_observable_vanishes() {
        let p = params();
        let g = Grid::with_spacing(&p, 1.0, 0.01).unwrap();
        let al = AlphaProfile::constant(-1.0, 1.0);
        let gfun = PartitionFn::new(0.75, p.h, 1.0);
        let rule = Rule::uniform(gfun.k_support().0, gfun.k_support().1, 2, 2);
        let s = observable_a(&al, &gfun, &ChiObservable::zero(0.3, 0.14), Complex64::new(0.0, 0.4), 0.05, &g, &p, &rule, &[0.0, 0.01], None, 1).unwrap();
        assert!(s.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn frozen_mode_is_stationary() {
        let p = params();
        let g = Grid::with_spacing(&p, 2.0, 0.01).unwrap();
        let al = AlphaProfile::constant(-1.0, 1.0);
        let chi = ChiObservable::new(0.3, 0.14);
        let theta = Complex64::new(0.0, 0.4);
        let times = [0.0, 0.005, 0.01];
        let (vals, _, _) = scattered_mode(0.86, &al, &chi, theta, &times, 0.05, &g, &p, 1e-4).unwrap();
        assert!(vals.iter().all(|v| (v - vals[0]).abs() < 1e-10 * vals[0]));
    }
}
