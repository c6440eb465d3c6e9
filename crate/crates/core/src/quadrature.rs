//! Gauss-Legendre rules and composite integration helpers.

use crate::scalar::{lit, Real};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1, "rule needs at least one node");
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, refined by Newton in f64
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = lit(-x);
        nodes[n - 1 - i] = lit(x);
        weights[i] = lit(w);
        weights[n - 1 - i] = lit(w);
    }
    (nodes, weights)
}

/// A quadrature rule as parallel node and weight arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> Rule<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(T) -> T>(&self, mut f: F) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&x, &w)| acc + w * f(x))
    }

    /// Composite rule with `order` points on each panel `[breaks[i], breaks[i+1]]`.
    pub fn composite(breaks: &[T], order: usize) -> Self {
        let (xs, ws) = gauss_legendre::<T>(order);
        let half = lit::<T>(0.5);
        let mut nodes = Vec::with_capacity(order * breaks.len());
        let mut weights = Vec::with_capacity(order * breaks.len());
        for pair in breaks.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let mid = half * (lo + hi);
            let rad = half * (hi - lo);
            for (x, w) in xs.iter().zip(&ws) {
                nodes.push(mid + rad * *x);
                weights.push(rad * *w);
            }
        }
        Self { nodes, weights }
    }

    /// Composite rule on `[lo, hi]` with `panels` equal panels.
    pub fn uniform(lo: T, hi: T, panels: usize, order: usize) -> Self {
        let n = panels.max(1);
        let breaks: Vec<T> = (0..=n)
            .map(|i| lo + (hi - lo) * lit::<T>(i as f64 / n as f64))
            .collect();
        Self::composite(&breaks, order)
    }
}

/// Cumulative integral of samples on a uniform grid: entry `i` approximates
/// the integral from the first sample to sample `i`. Even entries are
/// composite Simpson sums; odd entries add one quadratic-interpolant panel.
pub fn cumulative_simpson<T: Real>(values: &[T], dt: T) -> Vec<T> {
    let n = values.len();
    let mut out = vec![T::zero(); n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = dt * (values[0] + values[1]) * lit::<T>(0.5);
        return out;
    }
    let (five, eight, twelve) = (lit::<T>(5.0), lit::<T>(8.0), lit::<T>(12.0));
    let four = lit::<T>(4.0);
    let third = dt / lit::<T>(3.0);
    for i in 1..n {
        out[i] = if i % 2 == 0 {
            out[i - 2] + third * (values[i - 2] + four * values[i - 1] + values[i])
        } else if i + 1 < n {
            out[i - 1] + dt * (five * values[i - 1] + eight * values[i] - values[i + 1]) / twelve
        } else {
            out[i - 1] + dt * (-values[i - 2] + eight * values[i - 1] + five * values[i]) / twelve
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_exact_for_polynomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre::<f64>(n);
            for deg in 0..(2 * n) {
                let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((s - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn composite_integrates_exp() {
        let r = Rule::<f64>::uniform(0.0, 2.0, 4, 8);
        let v = r.integrate(|x| x.exp());
        assert!((v - (2.0f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn cumulative_simpson_cubic_accuracy() {
        let dt = 0.01;
        let v: Vec<f64> = (0..=100).map(|i| (i as f64 * dt).sin()).collect();
        let c = cumulative_simpson(&v, dt);
        for (i, ci) in c.iter().enumerate() {
            let exact = 1.0 - (i as f64 * dt).cos();
            assert!((ci - exact).abs() < 1e-9, "{i}");
        }
    }
}
