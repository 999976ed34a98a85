//! Stationary covariances `c^ν(m,n) = E a_m a_n` of the forced chain.
//!
//! The defining value is the kernel integral
//! `c^ν(m,n) = (2/π) ∫_0^∞ G_m^ν(s) G_n^ν(s) ds` ([`cov_time_domain`]). Everything
//! else here is a faster or independent route to the same numbers:
//! closed forms at `ν = 0`, a spectral double integral for `ν > 0`, and the
//! stationary second-moment recursion
//!
//! ```text
//! C_{m−1,n} − C_{m+1,n} + C_{m,n−1} − C_{m,n+1} − 2ν C_{m,n} + δ_{m1}δ_{n1} = 0,
//! ```
//!
//! which fixes every odd-separation entry once the even ones are known.

use std::f64::consts::{FRAC_2_PI, PI};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ChainError, Result};
use crate::kernel::{product_tail, KernelBank};
use crate::orthopoly::{cheb_u_norm_all, quad_rule};
use crate::quadrature::{panel_nodes, GaussLegendre};

/// Horizon of the quadrature part of [`cov_time_domain`]; the rest is the
/// asymptotic tail.
pub const TIME_DOMAIN_HORIZON: f64 = 200.0;

/// Smallest tolerance accepted by [`cov_time_domain`].
pub const MIN_TOL: f64 = 1e-10;

/// Largest window assembled by [`CovarianceWindow::assemble`].
pub const MAX_WINDOW: usize = 256;

/// Convergence target and order cap for the double-integral evaluations.
pub const QUAD2D_TOL: f64 = 1e-10;
pub const QUAD2D_MAX_ORDER: usize = 1 << 13;

/// How an entry of a [`CovarianceWindow`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    Quadrature2d,
    TimeDomain,
    MomentRecursion,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::ClosedForm => "closed_form",
            Provenance::Quadrature2d => "quadrature_2d",
            Provenance::TimeDomain => "time_domain",
            Provenance::MomentRecursion => "moment_recursion",
        }
    }
}

/// Symmetric `N × N` block of stationary covariances, sites `1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceWindow {
    pub n: usize,
    pub nu: f64,
    pub matrix: DMatrix<f64>,
    provenance: Vec<Provenance>,
}

impl CovarianceWindow {
    /// Assembles the window.
    ///
    /// At `ν = 0`: diagonal and even separations from the closed forms, odd
    /// separations from the kernel integral. For `ν > 0` every entry comes from
    /// the kernel integral. When the kernel integral cannot certify an entry
    /// (large sites make the asymptotic tail unusable), damped even entries come
    /// from [`cov_nu_quad2d`] and all odd separations from the moment recursion,
    /// which is exact given the even ones.
    pub fn assemble(n: usize, nu: f64) -> Result<Self> {
        check_window(n, nu)?;
        let mut matrix = DMatrix::zeros(n, n);
        let mut provenance = vec![Provenance::TimeDomain; n * n];
        let idx = |i: usize, j: usize| i * n + j;

        let td = if nu == 0.0 && n == 1 {
            None
        } else {
            match cov_time_domain_window(n, nu, MIN_TOL * 100.0) {
                Ok(m) => Some(m),
                Err(e) if e.is_numerical() => None,
                Err(e) => return Err(e),
            }
        };

        if nu == 0.0 {
            for i in 0..n {
                for j in 0..n {
                    if (i + j) % 2 == 0 {
                        matrix[(i, j)] = cov_even_closed(i + 1, j + 1)?;
                        provenance[idx(i, j)] = Provenance::ClosedForm;
                    }
                }
            }
        } else if let Some(td) = &td {
            for i in 0..n {
                for j in 0..n {
                    if (i + j) % 2 == 0 {
                        matrix[(i, j)] = td[(i, j)];
                    }
                }
            }
        } else {
            let pairs: Vec<(usize, usize)> = (1..=n)
                .flat_map(|i| (i..=n).step_by(2).map(move |j| (i, j)))
                .collect();
            let values = pairs
                .par_iter()
                .map(|&(i, j)| cov_nu_quad2d(i, j, nu, 64))
                .collect::<Result<Vec<f64>>>()?;
            for (&(i, j), v) in pairs.iter().zip(values) {
                matrix[(i - 1, j - 1)] = v;
                matrix[(j - 1, i - 1)] = v;
                provenance[idx(i - 1, j - 1)] = Provenance::Quadrature2d;
                provenance[idx(j - 1, i - 1)] = Provenance::Quadrature2d;
            }
        }

        match &td {
            Some(td) => {
                for i in 0..n {
                    for j in 0..n {
                        if (i + j) % 2 == 1 {
                            matrix[(i, j)] = td[(i, j)];
                            provenance[idx(i, j)] = Provenance::TimeDomain;
                        }
                    }
                }
            }
            None => {
                fill_odd_by_recursion(&mut matrix, nu);
                for i in 0..n {
                    for j in 0..n {
                        if (i + j) % 2 == 1 {
                            provenance[idx(i, j)] = Provenance::MomentRecursion;
                        }
                    }
                }
            }
        }

        Ok(CovarianceWindow {
            n,
            nu,
            matrix,
            provenance,
        })
    }

    /// `c(m, n)` with 1-based sites.
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.matrix[(m - 1, n - 1)]
    }

    pub fn provenance(&self, m: usize, n: usize) -> Provenance {
        self.provenance[(m - 1) * self.n + (n - 1)]
    }

    /// Largest `|c(m,n) − c(n,m)|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).abs());
            }
        }
        worst
    }
}

fn check_window(n: usize, nu: f64) -> Result<()> {
    if n == 0 || n > MAX_WINDOW {
        return Err(ChainError::domain(format!(
            "window size {n} must be in 1..={MAX_WINDOW}"
        )));
    }
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(ChainError::domain(format!("damping {nu} must be finite and >= 0")));
    }
    Ok(())
}

fn check_sites(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(ChainError::domain("sites are numbered from 1"));
    }
    Ok(())
}

/// `(2/π) ∫_0^∞ G_m^ν G_n^ν ds`: quadrature on `[0, 200]` plus the asymptotic
/// tail. Fails with an accuracy error (carrying the partial value and the tail
/// error estimate) when the tail cannot be certified to `tol`.
pub fn cov_time_domain(m: usize, n: usize, nu: f64, tol: f64) -> Result<f64> {
    check_sites(m, n)?;
    check_tol(nu, tol)?;
    let bank = KernelBank::build(m.max(n), nu, TIME_DOMAIN_HORIZON)?;
    entry_from_bank(&bank, m, n, nu, tol)
}

/// All entries of the `N × N` window by [`cov_time_domain`], sharing one
/// kernel bank.
pub fn cov_time_domain_window(n: usize, nu: f64, tol: f64) -> Result<DMatrix<f64>> {
    check_window(n, nu)?;
    check_tol(nu, tol)?;
    let bank = KernelBank::build(n, nu, TIME_DOMAIN_HORIZON)?;
    let pairs: Vec<(usize, usize)> = (1..=n).flat_map(|i| (i..=n).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| entry_from_bank(&bank, i, j, nu, tol))
        .collect::<Result<Vec<f64>>>()?;
    let mut out = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        out[(i - 1, j - 1)] = v;
        out[(j - 1, i - 1)] = v;
    }
    Ok(out)
}

fn check_tol(nu: f64, tol: f64) -> Result<()> {
    if !(tol >= MIN_TOL) {
        return Err(ChainError::domain(format!("tolerance {tol:e} below {MIN_TOL:e}")));
    }
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(ChainError::domain(format!("damping {nu} must be finite and >= 0")));
    }
    Ok(())
}

fn entry_from_bank(bank: &KernelBank, m: usize, n: usize, nu: f64, tol: f64) -> Result<f64> {
    let head = FRAC_2_PI * bank.product_integral(m, n);
    let tail = product_tail(m, n, 2.0 * nu, bank.s_max).map_err(|e| match e {
        ChainError::Accuracy { context, last, .. } => ChainError::Accuracy {
            context: format!("time-domain covariance ({m},{n}): {context}"),
            previous: head,
            last,
        },
        other => other,
    })?;
    let (value, error) = (FRAC_2_PI * tail.value, FRAC_2_PI * tail.error);
    if error > tol {
        return Err(ChainError::accuracy(
            format!("time-domain covariance ({m},{n}) tail"),
            head,
            error,
        ));
    }
    Ok(head + value)
}

/// `c^0(n,n) = (2/π)·4n²/(4n²−1)`.
pub fn cov_diag_closed(n: usize) -> f64 {
    let q = 4.0 * (n as f64).powi(2);
    FRAC_2_PI * q / (q - 1.0)
}

/// `c^0(m,n)` for even `n − m`:
/// `(−1)^n i^{n+m} (2/π) [1/((n+m)²−1) − 1/((n−m)²−1)]`.
pub fn cov_even_closed(m: usize, n: usize) -> Result<f64> {
    check_sites(m, n)?;
    if (m + n) % 2 == 1 {
        return Err(ChainError::domain(format!(
            "({m},{n}) has odd separation; use cov_time_domain"
        )));
    }
    let sign_n = if n % 2 == 0 { 1.0 } else { -1.0 };
    let sign_i = if ((n + m) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    let s = (n + m) as f64;
    let d = n as f64 - m as f64;
    Ok(sign_n * sign_i * FRAC_2_PI * (1.0 / (s * s - 1.0) - 1.0 / (d * d - 1.0)))
}

/// `c^0(m,n)` for every pair: closed forms for even separation, `1/2` for
/// neighbours and `0` for odd separations of at least 3 (the moment recursion
/// at `ν = 0`).
pub fn cov_limit(m: usize, n: usize) -> Result<f64> {
    check_sites(m, n)?;
    match m.abs_diff(n) {
        d if d % 2 == 0 => cov_even_closed(m, n),
        1 => Ok(0.5),
        _ => Ok(0.0),
    }
}

/// Fills the odd-separation entries of `c` from its even-separation entries
/// through the stationary moment recursion. With `o_d(m) = C_{m,m+d}` and
/// `o_d(0) = 0`:
///
/// ```text
/// o_1(m)     = o_1(m−1) − ν C_{m,m} + δ_{m1}/2
/// o_{d+1}(m) = o_{d+1}(m−1) + o_{d−1}(m) − o_{d−1}(m+1) − 2ν C_{m,m+d}   (d ≥ 2 even)
/// ```
pub fn fill_odd_by_recursion(c: &mut DMatrix<f64>, nu: f64) {
    let n = c.nrows();
    let mut d = 0;
    while d + 1 < n {
        let mut prev = 0.0;
        for m in 1..=(n - d - 1) {
            let diag = c[(m - 1, m + d - 1)];
            let v = if d == 0 {
                prev - nu * diag + if m == 1 { 0.5 } else { 0.0 }
            } else {
                prev + c[(m - 1, m + d - 2)] - c[(m, m + d - 1)] - 2.0 * nu * diag
            };
            c[(m - 1, m + d)] = v;
            c[(m + d, m - 1)] = v;
            prev = v;
        }
        d += 2;
    }
}

/// Real part of
/// `(−1)^m i^{n+m}/π ∫∫ Ũ_{m−1}(z) Ũ_{n−1}(z') √(1−z²) √(1−z'²) (ν + i(z−z'))/(ν² + (z−z')²) dz dz'`
/// on a tensor Gauss–Chebyshev rule, starting at `max(order, 8/ν)` nodes and
/// doubling until two orders agree to [`QUAD2D_TOL`].
///
/// Only one of the two kernel parts survives: `ν/(…)` for even separations and
/// `(z−z')/(…)` for odd ones.
pub fn cov_nu_quad2d(m: usize, n: usize, nu: f64, order: usize) -> Result<f64> {
    check_sites(m, n)?;
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(ChainError::domain(format!("damping {nu} must be finite and > 0")));
    }
    let mut order = order.max((8.0 / nu).ceil() as usize).max(m.max(n) + 2);
    let mut previous = quad2d_at(m, n, nu, order)?;
    loop {
        order *= 2;
        if order > QUAD2D_MAX_ORDER {
            return Err(ChainError::accuracy(
                format!("double Gauss-Chebyshev covariance ({m},{n}) at nu={nu}"),
                previous,
                previous,
            ));
        }
        let next = quad2d_at(m, n, nu, order)?;
        if (next - previous).abs() <= QUAD2D_TOL {
            return Ok(next);
        }
        previous = next;
    }
}

fn quad2d_at(m: usize, n: usize, nu: f64, order: usize) -> Result<f64> {
    let rule = quad_rule(order)?;
    let top = m.max(n);
    let mut buf = vec![0.0; top];
    let (mut wm, mut wn) = (Vec::with_capacity(order), Vec::with_capacity(order));
    for (z, w) in rule.iter() {
        cheb_u_norm_all(z, &mut buf);
        wm.push(w * buf[m - 1]);
        wn.push(w * buf[n - 1]);
    }
    let nodes = rule.nodes();
    let even = (m + n) % 2 == 0;
    let nu2 = nu * nu;
    let total: f64 = nodes
        .par_iter()
        .zip(&wm)
        .map(|(&z, &a)| {
            let mut row = 0.0;
            for (&zp, &b) in nodes.iter().zip(&wn) {
                let d = z - zp;
                let num = if even { nu } else { d };
                row += b * num / (nu2 + d * d);
            }
            a * row
        })
        .sum();
    // (−1)^m i^{n+m}, with the extra i of the odd part folded in.
    let k = if even { n + m } else { n + m + 1 };
    let phase = if m % 2 == 0 { 1.0 } else { -1.0 } * if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
    Ok(phase * total / PI)
}

/// `2ν ∫_0^1 ∫_0^1 sin(πnθ) sin(πnθ') sin(πθ) sin(πθ') / (ν² + (cos πθ − cos πθ')²) dθ dθ'`
/// by Gauss–Legendre panels, halving the panel width until two passes agree
/// to [`QUAD2D_TOL`].
pub fn cov_diag_nu_trig(n: usize, nu: f64) -> Result<f64> {
    if n == 0 {
        return Err(ChainError::domain("sites are numbered from 1"));
    }
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(ChainError::domain(format!("damping {nu} must be finite and > 0")));
    }
    let gl = GaussLegendre::new(16);
    let mut width = (0.5 * nu).min(1.0 / (2.0 * n as f64)).min(0.1);
    let mut previous = trig_at(n, nu, width, &gl);
    for _ in 0..8 {
        width *= 0.5;
        let next = trig_at(n, nu, width, &gl);
        if (next - previous).abs() <= QUAD2D_TOL {
            return Ok(next);
        }
        previous = next;
    }
    Err(ChainError::accuracy(
        format!("trigonometric covariance ({n},{n}) at nu={nu}"),
        previous,
        previous,
    ))
}

fn trig_at(n: usize, nu: f64, width: f64, gl: &GaussLegendre) -> f64 {
    let pts: Vec<(f64, f64, f64)> = panel_nodes(0.0, 1.0, width, gl)
        .into_iter()
        .map(|(t, w)| {
            let a = PI * t;
            (a.cos(), w * (n as f64 * a).sin() * a.sin(), 0.0)
        })
        .collect();
    let nu2 = nu * nu;
    let total: f64 = pts
        .par_iter()
        .map(|&(c, a, _)| {
            let mut row = 0.0;
            for &(cp, b, _) in &pts {
                let d = c - cp;
                row += b / (nu2 + d * d);
            }
            a * row
        })
        .sum();
    2.0 * nu * total
}

/// Value at `x = 0` of the interpolating polynomial through `(xs, ys)`
/// (Neville's scheme). With `xs` a geometric sequence this is Richardson
/// extrapolation.
pub fn extrapolate_to_zero(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(ChainError::dimension(format!(
            "extrapolation needs matching non-empty data, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let mut p = ys.to_vec();
    let k = xs.len();
    for level in 1..k {
        for i in 0..(k - level) {
            let (xi, xj) = (xs[i], xs[i + level]);
            if xi == xj {
                return Err(ChainError::domain("extrapolation abscissae must be distinct"));
            }
            p[i] = (xj * p[i] - xi * p[i + 1]) / (xj - xi);
        }
    }
    Ok(p[0])
}

/// Damping sequence used for the `ν → 0` extrapolation.
pub const NU_LIMIT_SEQUENCE: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Extrapolates `c^ν` to `ν = 0` from at least four damping values.
///
/// The kernel products decay like `s^{−3}`, so besides a regular expansion the
/// Laplace integral carries a `ν² ln ν` term. The fit uses the model
/// `c₀ + c₁ν + c₂ν² ln ν + c₃ν²` (least squares beyond four points) and
/// returns `c₀`. Plain polynomial Richardson ignores the logarithm and is
/// several times less accurate on the same data.
pub fn extrapolate_nu_limit(nus: &[f64], values: &[f64]) -> Result<f64> {
    if nus.len() < 4 || nus.len() != values.len() {
        return Err(ChainError::dimension(format!(
            "need at least four matching damping values, got {} and {}",
            nus.len(),
            values.len()
        )));
    }
    if nus.iter().any(|&v| !(v > 0.0)) {
        return Err(ChainError::domain("extrapolation damping values must be > 0"));
    }
    let a = DMatrix::from_fn(nus.len(), 4, |i, j| {
        let x = nus[i];
        match j {
            0 => 1.0,
            1 => x,
            2 => x * x * x.ln(),
            _ => x * x,
        }
    });
    let b = nalgebra::DVector::from_column_slice(values);
    let normal = a.transpose() * &a;
    let rhs = a.transpose() * b;
    let sol = normal
        .lu()
        .solve(&rhs)
        .ok_or_else(|| ChainError::Numerical("singular extrapolation system".into()))?;
    Ok(sol[0])
}

/// `c^0(m,n)` estimated from [`cov_nu_quad2d`] along [`NU_LIMIT_SEQUENCE`].
pub fn cov_nu_limit(m: usize, n: usize) -> Result<f64> {
    let values = NU_LIMIT_SEQUENCE
        .iter()
        .map(|&nu| cov_nu_quad2d(m, n, nu, 64))
        .collect::<Result<Vec<_>>>()?;
    extrapolate_nu_limit(&NU_LIMIT_SEQUENCE, &values)
}
