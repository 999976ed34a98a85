//! Stochastic-convolution kernels `G_n^ν(s)`.
//!
//! The stationary chain is `a_n(t) = sqrt(2/π) ∫_{-∞}^t G_n^ν(t−s) dW(s)` with
//!
//! ```text
//! G_n^ν(s) = e^{−νs} Re ∫ (−i)^{n−1} Ũ_{n−1}(z) sqrt(1−z²) e^{2izs} dz.
//! ```
//!
//! The phase `(−i)^{n−1}` pairs with the parity of `Ũ_{n−1}`: even `n−1` keeps
//! `cos(2zs)`, odd `n−1` keeps `sin(2zs)`, so every value is real. The damping
//! only contributes the scalar factor `e^{−νs}`.

use num_complex::Complex64;

use crate::error::{ChainError, Result};
use crate::orthopoly::{cheb_u_norm_all, quad_rule};
use crate::quadrature::{panel_nodes, GaussLegendre};
use crate::specfun::bessel_j;

/// Largest Gauss–Chebyshev order tried by [`kernel_g`].
pub const MAX_ORDER: usize = 1 << 16;

/// `sqrt(π/2) = G_1^ν(0)`.
pub const G1_AT_ZERO: f64 = 1.253_314_137_315_500_3;

/// Order used for a kernel evaluation at time `s` for sites up to `n`:
/// `e^{2izs}` needs O(s) nodes, `Ũ_{n−1}` needs O(n).
pub fn default_order(n: usize, s: f64) -> usize {
    64usize.max((3.0 * (s + n as f64)).ceil() as usize)
}

/// `sign(p) · trig(2zs)` with the phase `(−i)^p` folded in.
#[inline]
fn phase_weight(p: usize, cos2zs: f64, sin2zs: f64) -> f64 {
    match p % 4 {
        0 => cos2zs,
        1 => sin2zs,
        2 => -cos2zs,
        _ => -sin2zs,
    }
}

/// Undamped kernel values `G_n^0(s)` for `n = 1..=n_max` from one
/// `order`-point Gauss–Chebyshev sweep. Mirror nodes contribute equally, so
/// only half the nodes are visited.
pub fn kernel_values_at(s: f64, n_max: usize, order: usize) -> Vec<f64> {
    let rule = quad_rule(order).expect("order >= 1");
    let mut out = vec![0.0; n_max];
    let mut u = vec![0.0; n_max];
    let half = order / 2;
    for k in 0..order.div_ceil(2) {
        let z = rule.nodes()[k];
        let mult = if k == half && order % 2 == 1 { 1.0 } else { 2.0 };
        let w = mult * rule.weights()[k];
        cheb_u_norm_all(z, &mut u);
        let (sn, cs) = (2.0 * z * s).sin_cos();
        for (p, (acc, up)) in out.iter_mut().zip(&u).enumerate() {
            *acc += w * up * phase_weight(p, cs, sn);
        }
    }
    out
}

/// `G_n^ν(s)` by Gauss–Chebyshev quadrature, certified by node doubling.
pub fn kernel_g(n: usize, nu: f64, s: f64, tol: f64) -> Result<f64> {
    check_site(n)?;
    if !(nu >= 0.0) || !(s >= 0.0) {
        return Err(ChainError::domain(format!("need nu >= 0 and s >= 0, got nu={nu}, s={s}")));
    }
    if !(tol >= 1e-14) {
        return Err(ChainError::domain(format!("tolerance {tol:e} below 1e-14")));
    }
    let damping = (-nu * s).exp();
    let mut order = default_order(n, s);
    let mut previous = kernel_values_at(s, n, order)[n - 1];
    loop {
        order *= 2;
        if order > MAX_ORDER {
            return Err(ChainError::accuracy(
                format!("kernel G_{n}(s={s})"),
                damping * previous,
                damping * kernel_values_at(s, n, order / 2)[n - 1],
            ));
        }
        let next = kernel_values_at(s, n, order)[n - 1];
        if (next - previous).abs() < tol {
            return Ok(damping * next);
        }
        previous = next;
    }
}

/// Bessel form of the undamped kernel, `sqrt(π/2) n J_n(2s) / s`, with the
/// removable singularity at `s = 0` filled in.
pub fn kernel_g_closed0(n: usize, s: f64) -> Result<f64> {
    check_site(n)?;
    if !(s >= 0.0) {
        return Err(ChainError::domain(format!("s = {s} must be >= 0")));
    }
    if s == 0.0 {
        return Ok(if n == 1 { G1_AT_ZERO } else { 0.0 });
    }
    Ok(G1_AT_ZERO * n as f64 * bessel_j(n, 2.0 * s)? / s)
}

fn check_site(n: usize) -> Result<()> {
    if n == 0 {
        Err(ChainError::domain("sites are numbered from 1"))
    } else {
        Ok(())
    }
}

/// Tabulated `G_n^ν` on a list of sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub site: usize,
    pub nu: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Largest starting quadrature order used over the table.
    pub quadrature_order: usize,
}

impl KernelTable {
    pub fn build(site: usize, nu: f64, times: &[f64], tol: f64) -> Result<Self> {
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ChainError::domain("kernel table times must be increasing"));
        }
        let values = times
            .iter()
            .map(|&s| kernel_g(site, nu, s, tol))
            .collect::<Result<Vec<_>>>()?;
        let quadrature_order = times
            .iter()
            .map(|&s| default_order(site, s))
            .max()
            .unwrap_or(0);
        Ok(KernelTable {
            site,
            nu,
            times: times.to_vec(),
            values,
            quadrature_order,
        })
    }
}

/// Result of [`kernel_l2`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelL2 {
    /// `∫_0^T G_n^ν(s)² ds`.
    pub integral: f64,
    /// Asymptotic estimate of `∫_T^∞ G_n^0(s)² ds` (undamped kernels only).
    pub tail: Option<f64>,
}

impl KernelL2 {
    pub fn extrapolated(&self) -> f64 {
        self.integral + self.tail.unwrap_or(0.0)
    }
}

/// `∫_0^T G_n^ν(s)² ds` by adaptive Gauss–Legendre panels.
pub fn kernel_l2(n: usize, nu: f64, horizon: f64) -> Result<KernelL2> {
    check_site(n)?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(ChainError::domain(format!("horizon {horizon} must be positive and finite")));
    }
    if !(nu >= 0.0) {
        return Err(ChainError::domain(format!("nu = {nu} must be >= 0")));
    }
    let g = |s: f64| {
        let v = kernel_values_at(s, n, default_order(n, s))[n - 1] * (-nu * s).exp();
        v * v
    };
    let integral = crate::quadrature::adaptive(g, 0.0, horizon, 1.0, 1e-13)?;
    let tail = if nu == 0.0 {
        product_tail(n, n, 0.0, horizon).ok().map(|t| t.value)
    } else {
        None
    };
    Ok(KernelL2 { integral, tail })
}

/// Kernel values on a composite Gauss–Legendre grid over `[0, s_max]`, for all
/// sites `1..=n_max`. Used for time-domain covariance integrals.
#[derive(Debug, Clone)]
pub struct KernelBank {
    pub n_max: usize,
    pub nu: f64,
    pub s_max: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `values[n−1][q] = G_n^ν(nodes[q])`.
    values: Vec<Vec<f64>>,
}

/// Panel width and Gauss–Legendre order of the bank grid. Products of kernels
/// are band-limited to angular frequency 4, so 20 nodes per unit panel resolve
/// them far below double precision.
pub const BANK_PANEL_WIDTH: f64 = 1.0;
pub const BANK_GL_ORDER: usize = 20;

impl KernelBank {
    pub fn build(n_max: usize, nu: f64, s_max: f64) -> Result<Self> {
        Self::build_with(n_max, nu, s_max, BANK_PANEL_WIDTH, BANK_GL_ORDER)
    }

    pub fn build_with(
        n_max: usize,
        nu: f64,
        s_max: f64,
        panel_width: f64,
        gl_order: usize,
    ) -> Result<Self> {
        check_site(n_max)?;
        if !(nu >= 0.0) || !(s_max > 0.0) {
            return Err(ChainError::domain("kernel bank needs nu >= 0 and s_max > 0"));
        }
        let grid = panel_nodes(0.0, s_max, panel_width, &GaussLegendre::new(gl_order));
        let mut values = vec![Vec::with_capacity(grid.len()); n_max];
        for &(s, _) in &grid {
            let damp = (-nu * s).exp();
            let col = kernel_values_at(s, n_max, default_order(n_max, s));
            for (row, v) in values.iter_mut().zip(col) {
                row.push(damp * v);
            }
        }
        let (nodes, weights) = grid.into_iter().unzip();
        Ok(KernelBank {
            n_max,
            nu,
            s_max,
            nodes,
            weights,
            values,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self, n: usize) -> &[f64] {
        &self.values[n - 1]
    }

    /// `∫_0^{s_max} G_m G_n ds` on the bank grid.
    pub fn product_integral(&self, m: usize, n: usize) -> f64 {
        self.values[m - 1]
            .iter()
            .zip(&self.values[n - 1])
            .zip(&self.weights)
            .map(|((a, b), w)| w * a * b)
            .sum()
    }
}

/// Tail integral with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub value: f64,
    pub error: f64,
}

/// `∫_S^∞ e^{−βs} G_m^0(s) G_n^0(s) ds` from the Hankel expansions of
/// `J_m(2s)`, `J_n(2s)`.
///
/// With `G_n^0(s) = n s^{−3/2}/sqrt(2) · (P_n cos χ_n − Q_n sin χ_n)`,
/// `χ_n = 2s − nπ/2 − π/4`, the product splits into a non-oscillating part and
/// `cos`/`sin` of `4s − (m+n)π/2 − π/2`, each a power series in `1/s`. Smooth
/// terms are integrated exactly (β = 0) or by a mapped Gauss–Legendre rule,
/// oscillating terms by repeated integration by parts. Fails when either
/// expansion has not reached double precision at `S`.
pub fn product_tail(m: usize, n: usize, beta: f64, start: f64) -> Result<TailEstimate> {
    check_site(m)?;
    check_site(n)?;
    if !(start > 0.0) || !(beta >= 0.0) {
        return Err(ChainError::domain("tail needs S > 0 and beta >= 0"));
    }
    let (pm, qm, err_m) = hankel_series(m, start)?;
    let (pn, qn, err_n) = hankel_series(n, start)?;

    let len = pm.len().max(qm.len()) + pn.len().max(qn.len());
    let mut pp_qq = vec![0.0; len];
    let mut pp_minus_qq = vec![0.0; len];
    let mut pq_minus_qp = vec![0.0; len];
    let mut pq_plus_qp = vec![0.0; len];
    for (i, &a) in pm.iter().enumerate() {
        for (j, &b) in pn.iter().enumerate() {
            pp_qq[i + j] += a * b;
            pp_minus_qq[i + j] += a * b;
        }
        for (j, &b) in qn.iter().enumerate() {
            pq_minus_qp[i + j] += a * b;
            pq_plus_qp[i + j] += a * b;
        }
    }
    for (i, &a) in qm.iter().enumerate() {
        for (j, &b) in qn.iter().enumerate() {
            pp_qq[i + j] += a * b;
            pp_minus_qq[i + j] -= a * b;
        }
        for (j, &b) in pn.iter().enumerate() {
            pq_minus_qp[i + j] -= a * b;
            pq_plus_qp[i + j] += a * b;
        }
    }

    // δ = χ_m − χ_n = (n − m)π/2, exact quarter turns.
    let (cos_d, sin_d) = quarter_turn(n as i64 - m as i64);
    // e^{−iφ0} with φ0 = (m + n + 1)π/2.
    let (c0, s0) = quarter_turn(-((m + n + 1) as i64));
    let phase = Complex64::new(c0, s0);
    let kappa = Complex64::new(-beta, 4.0);

    let mut total = 0.0;
    for j in 0..len {
        let p = 3.0 + j as f64;
        let smooth = cos_d * pp_qq[j] + sin_d * pq_minus_qp[j];
        if smooth != 0.0 {
            total += smooth * smooth_tail(p, beta, start);
        }
        if pp_minus_qq[j] != 0.0 || pq_plus_qp[j] != 0.0 {
            let osc = phase * oscillating_tail(p, kappa, start);
            total += pp_minus_qq[j] * osc.re - pq_plus_qp[j] * osc.im;
        }
    }
    let scale = 0.25 * (m * n) as f64;
    let leading = scale / (start * start);
    Ok(TailEstimate {
        value: scale * total,
        error: leading * (err_m + err_n) + 1e-16 * (scale * total).abs(),
    })
}

/// `(cos(kπ/2), sin(kπ/2))` exactly.
fn quarter_turn(k: i64) -> (f64, f64) {
    match k.rem_euclid(4) {
        0 => (1.0, 0.0),
        1 => (0.0, 1.0),
        2 => (-1.0, 0.0),
        _ => (0.0, -1.0),
    }
}

/// Coefficients of `P_n(2s)` and `Q_n(2s)` as series in `1/s`, truncated once
/// terms at `s = S` drop below 1e-18, plus the size of the first dropped term
/// relative to the leading one.
fn hankel_series(n: usize, start: f64) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let mu = 4.0 * (n as f64).powi(2);
    let mut p = vec![1.0];
    let mut q = vec![0.0];
    // c_j = a_j(n) / 2^j, the coefficient of s^{−j} up to sign.
    let mut c = 1.0;
    let mut largest: f64 = 1.0;
    let mut j = 0usize;
    loop {
        j += 1;
        let odd = (2 * j - 1) as f64;
        c *= (mu - odd * odd) / (j as f64 * 16.0);
        let size = (c * start.powi(-(j as i32))).abs();
        largest = largest.max(size);
        let sign = if ((j / 2) % 2) == 0 { 1.0 } else { -1.0 };
        if j % 2 == 0 {
            while p.len() < j {
                p.push(0.0);
            }
            p.push(sign * c);
        } else {
            while q.len() < j {
                q.push(0.0);
            }
            q.push(sign * c);
        }
        if size < 1e-18 || c == 0.0 {
            if largest > 1e6 {
                return Err(ChainError::accuracy(
                    format!("Hankel expansion of J_{n}(2s) at s={start} (cancellation)"),
                    largest,
                    size,
                ));
            }
            return Ok((p, q, size));
        }
        if j > 4 * n + 2000 {
            return Err(ChainError::accuracy(
                format!("Hankel expansion of J_{n}(2s) at s={start}"),
                largest,
                size,
            ));
        }
    }
}

/// `∫_S^∞ s^{−p} e^{−βs} ds`.
fn smooth_tail(p: f64, beta: f64, start: f64) -> f64 {
    if beta == 0.0 {
        return start.powf(1.0 - p) / (p - 1.0);
    }
    // s = S/u maps [S, ∞) onto (0, 1].
    thread_local! {
        static GL: GaussLegendre = GaussLegendre::new(64);
    }
    let bs = beta * start;
    GL.with(|gl| {
        start.powf(1.0 - p)
            * gl.integrate(0.0, 1.0, |u| {
                if u <= 0.0 {
                    0.0
                } else {
                    u.powf(p - 2.0) * (-bs / u).exp()
                }
            })
    })
}

/// `∫_S^∞ s^{−p} e^{κs} ds` for `Re κ ≤ 0`, `|κ S| ≫ p`, by integration by
/// parts: `−(e^{κS} S^{−p}/κ) Σ_j (p)_j / (κS)^j`.
fn oscillating_tail(p: f64, kappa: Complex64, start: f64) -> Complex64 {
    let ks = kappa * start;
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for j in 0..200 {
        let next = term * (p + j as f64) / ks;
        sum += next;
        if next.norm() < 1e-18 || next.norm() > term.norm() {
            break;
        }
        term = next;
    }
    -(ks.exp() * start.powf(-p) / kappa) * sum
}

/// `(2/π) ∫_0^∞ G_n^0(s)² ds = (2/π)·4n²/(4n²−1)`, i.e. `∫ G_n² = 4n²/(4n²−1)`.
pub fn l2_closed0(n: usize) -> f64 {
    let q = 4.0 * (n as f64).powi(2);
    q / (q - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_at_origin() {
        assert!((kernel_g(1, 0.3, 0.0, 1e-13).unwrap() - G1_AT_ZERO).abs() < 1e-12);
        for n in 2..10 {
            assert!(kernel_g(n, 0.0, 0.0, 1e-13).unwrap().abs() < 1e-12);
        }
        assert!((kernel_g_closed0(1, 0.0).unwrap() - G1_AT_ZERO).abs() < 1e-15);
        assert_eq!(kernel_g_closed0(2, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_examples() {
        let v = kernel_g_closed0(1, 1.0).unwrap();
        assert!((v - G1_AT_ZERO * bessel_j(1, 2.0).unwrap()).abs() < 1e-15);
        assert!((v - 0.722_826).abs() < 1e-5);
        let q = kernel_g(3, 0.0, 2.5, 1e-13).unwrap();
        let c = G1_AT_ZERO * 3.0 * bessel_j(3, 5.0).unwrap() / 2.5;
        assert!((q - c).abs() < 1e-12);
    }

    #[test]
    fn damping_is_scalar_factor() {
        let a = kernel_g(4, 0.0, 3.0, 1e-13).unwrap();
        let b = kernel_g(4, 0.7, 3.0, 1e-13).unwrap();
        assert!((b - a * (-2.1f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn errors() {
        assert!(kernel_g(0, 0.0, 1.0, 1e-12).is_err());
        assert!(kernel_g(1, -0.1, 1.0, 1e-12).is_err());
        assert!(kernel_g(1, 0.0, -1.0, 1e-12).is_err());
        assert!(kernel_g(1, 0.0, 1.0, 1e-16).is_err());
        assert!(kernel_g_closed0(0, 1.0).is_err());
    }

    #[test]
    fn quadrature_agrees_with_closed_form_grid() {
        for n in [1usize, 2, 5, 13, 32] {
            for i in 0..=50 {
                let s = i as f64;
                let q = kernel_g(n, 0.0, s, 1e-13).unwrap();
                let c = kernel_g_closed0(n, s).unwrap();
                assert!((q - c).abs() < 1e-9, "n={n} s={s}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn default_order_is_already_converged() {
        for n in [1usize, 7, 40] {
            for &s in &[0.5, 10.0, 120.0] {
                let a = kernel_values_at(s, n, default_order(n, s))[n - 1];
                let b = kernel_values_at(s, n, 4 * default_order(n, s))[n - 1];
                assert!((a - b).abs() < 1e-14, "n={n} s={s}");
            }
        }
    }

    #[test]
    fn l2_norms() {
        let one = kernel_l2(1, 0.0, 200.0).unwrap();
        assert!((one.extrapolated() - 4.0 / 3.0).abs() < 1e-9, "{:?}", one);
        let two = kernel_l2(2, 0.0, 200.0).unwrap();
        assert!((two.extrapolated() - 16.0 / 15.0).abs() < 1e-9, "{:?}", two);
        let damped = kernel_l2(1, 1.0, 50.0).unwrap();
        assert!(damped.integral < one.integral);
        assert!(damped.tail.is_none());
    }

    #[test]
    fn l2_bounded_and_monotone() {
        for n in [1usize, 3, 8] {
            let mut last = 0.0;
            for &t in &[1.0, 5.0, 20.0, 60.0] {
                let v = kernel_l2(n, 0.0, t).unwrap().integral;
                assert!(v >= last);
                assert!(v <= l2_closed0(n) + 1e-8);
                last = v;
            }
        }
    }

    #[test]
    fn bank_matches_pointwise_kernel() {
        let bank = KernelBank::build(6, 0.1, 10.0).unwrap();
        for (q, &s) in bank.nodes().iter().enumerate().step_by(17) {
            for n in 1..=6 {
                let v = kernel_g(n, 0.1, s, 1e-13).unwrap();
                assert!((bank.values(n)[q] - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tail_matches_direct_integration() {
        // Direct integration of the closed form over [S, S + 400] plus the
        // asymptotic remainder beyond must reproduce the tail from S.
        let gl = GaussLegendre::new(20);
        for &(m, n) in &[(1usize, 1usize), (1, 2), (3, 5), (2, 7)] {
            let s0 = 60.0;
            let s1 = 460.0;
            let direct: f64 = panel_nodes(s0, s1, 0.5, &gl)
                .iter()
                .map(|&(s, w)| {
                    w * kernel_g_closed0(m, s).unwrap() * kernel_g_closed0(n, s).unwrap()
                })
                .sum();
            let far = product_tail(m, n, 0.0, s1).unwrap().value;
            let near = product_tail(m, n, 0.0, s0).unwrap();
            assert!(
                (near.value - (direct + far)).abs() < 1e-12,
                "({m},{n}): {} vs {}",
                near.value,
                direct + far
            );
        }
    }

    #[test]
    fn damped_tail_matches_direct_integration() {
        let gl = GaussLegendre::new(20);
        let beta = 0.02;
        let (m, n) = (2usize, 4usize);
        let (s0, s1) = (80.0, 1200.0);
        let direct: f64 = panel_nodes(s0, s1, 0.5, &gl)
            .iter()
            .map(|&(s, w)| {
                w * (-beta * s).exp()
                    * kernel_g_closed0(m, s).unwrap()
                    * kernel_g_closed0(n, s).unwrap()
            })
            .sum();
        let far = product_tail(m, n, beta, s1).unwrap().value;
        let near = product_tail(m, n, beta, s0).unwrap().value;
        assert!((near - (direct + far)).abs() < 1e-13);
    }
}
