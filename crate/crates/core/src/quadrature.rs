//! Gauss–Legendre panels for one-dimensional integrals on finite intervals.

use std::f64::consts::PI;

use crate::error::{ChainError, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Integral of `f` over `[a, b]` with this rule.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Mapped nodes and weights for `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, w * half))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite rule: `[a, b]` split into equal panels no wider than `width`.
pub fn panel_nodes(a: f64, b: f64, width: f64, rule: &GaussLegendre) -> Vec<(f64, f64)> {
    let panels = ((b - a) / width).ceil().max(1.0) as usize;
    let h = (b - a) / panels as f64;
    (0..panels)
        .flat_map(|p| {
            let lo = a + p as f64 * h;
            rule.mapped(lo, lo + h).collect::<Vec<_>>()
        })
        .collect()
}

/// Adaptive bisection comparing 16- and 32-point Gauss–Legendre on each panel.
/// Returns the integral or an accuracy error carrying the partial sum and the
/// outstanding error estimate.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    initial_width: f64,
    tol: f64,
) -> Result<f64> {
    const MAX_DEPTH: u32 = 30;
    let coarse = GaussLegendre::new(16);
    let fine = GaussLegendre::new(32);
    let panels = ((b - a) / initial_width).ceil().max(1.0) as usize;
    let h = (b - a) / panels as f64;
    let mut stack: Vec<(f64, f64, u32)> = (0..panels)
        .rev()
        .map(|p| (a + p as f64 * h, a + (p + 1) as f64 * h, 0))
        .collect();
    let mut total = 0.0;
    let mut unresolved = 0.0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let c = coarse.integrate(lo, hi, &mut f);
        let r = fine.integrate(lo, hi, &mut f);
        let local_tol = tol * (hi - lo) / (b - a);
        if (r - c).abs() <= local_tol.max(1e-15 * r.abs()) {
            total += r;
        } else if depth >= MAX_DEPTH {
            total += r;
            unresolved += (r - c).abs();
        } else {
            let m = 0.5 * (lo + hi);
            stack.push((m, hi, depth + 1));
            stack.push((lo, m, depth + 1));
        }
    }
    if !total.is_finite() {
        return Err(ChainError::Numerical("adaptive integrand not finite".into()));
    }
    if unresolved > tol {
        return Err(ChainError::accuracy("adaptive panel quadrature", total, unresolved));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials() {
        for n in [1usize, 2, 5, 16, 32] {
            let gl = GaussLegendre::new(n);
            for deg in 0..(2 * n) {
                let got = gl.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                let expect = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - expect).abs() < 1e-14, "n={n} deg={deg}: {got}");
            }
        }
    }

    #[test]
    fn adaptive_oscillatory() {
        let v = adaptive(|x: f64| (10.0 * x).cos(), 0.0, 10.0, 1.0, 1e-13).unwrap();
        assert!((v - (100.0f64).sin() / 10.0).abs() < 1e-13);
    }

    #[test]
    fn panels_cover_interval() {
        let gl = GaussLegendre::new(8);
        let pts = panel_nodes(0.0, 3.3, 1.0, &gl);
        assert_eq!(pts.len(), 32);
        let s: f64 = pts.iter().map(|(x, w)| w * x * x).sum();
        assert!((s - 3.3f64.powi(3) / 3.0).abs() < 1e-12);
    }
}
