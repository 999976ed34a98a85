//! Deterministic evolution of the unforced chain
//! `ȧ_n = a_{n−1} − a_{n+1} − ν a_n`, `a_0 = 0`.
//!
//! The generating function `α(z) = Σ a_n i^{n−1} Ũ_{n−1}(z)` turns the coupling
//! into multiplication by `2iz`, so each spectral value evolves independently
//! by `e^{(2iz−ν)t}`. On an `M`-point Gauss–Chebyshev rule the transform is
//! exact for windows of at most `M` sites.
//!
//! Two uses of the same machinery:
//! - padded windows (`M = N + pad + ⌈2t⌉`) approximate the infinite chain,
//!   since nothing travels faster than two sites per unit time;
//! - `M = N` exactly is the `N`-site truncation with `a_{N+1} = 0`, because the
//!   nodes are the zeros of `U_N`. This is the truncated-chain solver used by
//!   the stochastic integrators.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ChainError, Result};
use crate::orthopoly::{cheb_u_norm, cheb_u_norm_all, quad_rule, QuadratureRule};

/// Extra sites beyond the light cone used by [`evolve_unforced`] callers.
pub const DEFAULT_PAD: usize = 40;

/// Amplitudes `a_1..a_N` of a finite window (`a_0 = 0` implicit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub amplitudes: Vec<f64>,
    pub time: f64,
    pub nu: f64,
}

impl ChainState {
    pub fn new(amplitudes: Vec<f64>, nu: f64) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(ChainError::domain("a chain state needs at least one site"));
        }
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(ChainError::domain("chain amplitudes must be finite"));
        }
        if !(nu >= 0.0) {
            return Err(ChainError::domain(format!("damping {nu} must be >= 0")));
        }
        Ok(ChainState {
            amplitudes,
            time: 0.0,
            nu,
        })
    }

    pub fn zeros(n: usize, nu: f64) -> Self {
        ChainState {
            amplitudes: vec![0.0; n.max(1)],
            time: 0.0,
            nu,
        }
    }

    /// Unit amplitude at `site` (1-based).
    pub fn impulse(n: usize, site: usize, nu: f64) -> Self {
        let mut s = Self::zeros(n, nu);
        s.amplitudes[site - 1] = 1.0;
        s
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// `a_n` with `a_0 = 0` and zero beyond the window.
    pub fn site(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.amplitudes.get(n - 1).copied().unwrap_or(0.0)
        }
    }
}

/// Generating function sampled at the nodes of a quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub rule: QuadratureRule,
    pub values: Vec<Complex64>,
    pub nu: f64,
}

/// Adds `x · i^p` to `acc` (or, read the other way, picks the part of
/// `(−i)^p α` that survives the real projection).
#[inline]
fn add_phased(acc: &mut Complex64, p: usize, x: f64) {
    match p % 4 {
        0 => acc.re += x,
        1 => acc.im += x,
        2 => acc.re -= x,
        _ => acc.im -= x,
    }
}

#[inline]
fn real_of_phased(p: usize, alpha: Complex64) -> f64 {
    match p % 4 {
        0 => alpha.re,
        1 => alpha.im,
        2 => -alpha.re,
        _ => -alpha.im,
    }
}

pub fn to_spectral(state: &ChainState, rule: &QuadratureRule) -> Result<SpectralField> {
    let n = state.len();
    if rule.order() < n {
        return Err(ChainError::dimension(format!(
            "rule order {} smaller than window {n}",
            rule.order()
        )));
    }
    let mut u = vec![0.0; n];
    let values = rule
        .nodes()
        .iter()
        .map(|&z| {
            cheb_u_norm_all(z, &mut u);
            let mut acc = Complex64::new(0.0, 0.0);
            for (p, (&a, &up)) in state.amplitudes.iter().zip(&u).enumerate() {
                add_phased(&mut acc, p, a * up);
            }
            acc
        })
        .collect();
    Ok(SpectralField {
        rule: rule.clone(),
        values,
        nu: state.nu,
    })
}

/// Recovers `a_n = Re Σ_k w_k (−i)^{n−1} Ũ_{n−1}(z_k) α(z_k)` for `n ≤ sites`.
pub fn from_spectral(field: &SpectralField, sites: usize) -> Result<ChainState> {
    if sites == 0 || sites > field.rule.order() {
        return Err(ChainError::dimension(format!(
            "cannot recover {sites} sites from a rule of order {}",
            field.rule.order()
        )));
    }
    let mut out = vec![0.0; sites];
    let mut u = vec![0.0; sites];
    for ((z, w), &alpha) in field.rule.iter().zip(&field.values) {
        cheb_u_norm_all(z, &mut u);
        for (p, (slot, &up)) in out.iter_mut().zip(&u).enumerate() {
            *slot += w * up * real_of_phased(p, alpha);
        }
    }
    Ok(ChainState {
        amplitudes: out,
        time: 0.0,
        nu: field.nu,
    })
}

/// Multiplies every spectral value by `e^{(2iz−ν)t}`.
pub fn advance_field(field: &mut SpectralField, t: f64) {
    let decay = (-field.nu * t).exp();
    for (z, alpha) in field.rule.nodes().iter().zip(field.values.iter_mut()) {
        *alpha *= Complex64::from_polar(decay, 2.0 * z * t);
    }
}

/// Evolves the infinite unforced chain restricted to the window of `state`,
/// embedding it in `N + pad + ⌈2t⌉` sites.
pub fn evolve_unforced(state: &ChainState, t: f64, pad: usize) -> Result<ChainState> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(ChainError::domain(format!(
            "evolution time {t} must be finite and >= 0"
        )));
    }
    let n = state.len();
    let window = n + pad + (2.0 * t).ceil() as usize;
    let mut out = evolve_on_window(state, t, window)?;
    out.time = state.time + t;
    Ok(out)
}

/// Exact evolution of the `N`-site truncated chain (`a_{N+1} = 0`).
pub fn evolve_truncated(state: &ChainState, t: f64) -> Result<ChainState> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(ChainError::domain(format!(
            "evolution time {t} must be finite and >= 0"
        )));
    }
    let mut out = evolve_on_window(state, t, state.len())?;
    out.time = state.time + t;
    Ok(out)
}

/// Signed-time evolution on an explicit window. Negative `t` runs the chain
/// backwards; kept out of the public API.
pub(crate) fn evolve_on_window(state: &ChainState, t: f64, window: usize) -> Result<ChainState> {
    let rule = quad_rule(window)?;
    let mut field = to_spectral(state, &rule)?;
    advance_field(&mut field, t);
    let mut out = from_spectral(&field, state.len())?;
    out.nu = state.nu;
    Ok(out)
}

/// `K_{nm}(t)`: response at site `n` to unit data at site `m` for the infinite
/// undamped chain, by quadrature with node doubling.
pub fn propagator_entry(n: usize, m: usize, t: f64) -> Result<f64> {
    if n == 0 || m == 0 {
        return Err(ChainError::domain("sites are numbered from 1"));
    }
    if !t.is_finite() {
        return Err(ChainError::domain("time must be finite"));
    }
    let (p, q) = (n - 1, m - 1);
    let eval = |order: usize| -> f64 {
        let rule = quad_rule(order).expect("order >= 1");
        let top = p.max(q) + 1;
        let mut u = vec![0.0; top];
        let mut acc = 0.0;
        for (z, w) in rule.iter() {
            cheb_u_norm_all(z, &mut u);
            // Re[(−i)^p i^q e^{2izt}] = Re[i^{q−p} e^{2izt}]
            let phase = Complex64::from_polar(1.0, 2.0 * z * t);
            let shift = (q + 4 * top - p) % 4;
            let v = match shift {
                0 => phase.re,
                1 => -phase.im,
                2 => -phase.re,
                _ => phase.im,
            };
            acc += w * u[p] * u[q] * v;
        }
        acc
    };
    let mut order = 64usize.max((3.0 * (t.abs() + (n + m) as f64)).ceil() as usize);
    let mut previous = eval(order);
    loop {
        order *= 2;
        let next = eval(order);
        if (next - previous).abs() < 1e-13 {
            return Ok(next);
        }
        if order > crate::kernel::MAX_ORDER {
            return Err(ChainError::accuracy(
                format!("propagator entry K_{n},{m}({t})"),
                previous,
                next,
            ));
        }
        previous = next;
    }
}

/// Sup norm of the undamped, unforced vector field, `max_{n<N} |a_{n−1} − a_{n+1}|`.
pub fn fixed_point_residual(state: &ChainState) -> f64 {
    (1..state.len())
        .map(|n| (state.site(n - 1) - state.site(n + 1)).abs())
        .fold(0.0, f64::max)
}

/// Single-mode solution `a_n(t) = Re[(−i)^{n−1} Ũ_{n−1}(z) e^{2izt}]` of the
/// unforced undamped chain. Bounded in `n` and periodic with period `π/z`.
pub fn periodic_orbit_eval(z: f64, n: usize, t: f64) -> Result<f64> {
    if !(z > 0.0 && z < 1.0) {
        return Err(ChainError::domain(format!("mode {z} must lie in (0, 1)")));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let u = cheb_u_norm(n - 1, z)?;
    let (s, c) = (2.0 * z * t).sin_cos();
    let v = match (n - 1) % 4 {
        0 => c,
        1 => s,
        2 => -c,
        _ => -s,
    };
    Ok(u * v)
}

/// Absorbing boundary layer: quadratic damping ramp on the last `length` sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorbingLayer {
    pub length: usize,
    pub max_damping: f64,
}

/// Site-dependent damping `ν_n = ν + ν_abs ((n − N₀)/L)²` for `n > N₀ = N − L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Damping {
    pub nu: f64,
    pub layer: Option<AbsorbingLayer>,
}

impl Damping {
    pub fn uniform(nu: f64) -> Self {
        Damping { nu, layer: None }
    }

    pub fn rate(&self, site: usize, sites: usize) -> f64 {
        match self.layer {
            Some(l) if site + l.length > sites => {
                let depth = (site + l.length - sites) as f64 / l.length as f64;
                self.nu + l.max_damping * depth * depth
            }
            _ => self.nu,
        }
    }

    pub fn is_uniform(&self) -> bool {
        self.layer.is_none()
    }

    pub fn max_rate(&self) -> f64 {
        self.nu + self.layer.map_or(0.0, |l| l.max_damping)
    }
}

/// Flow `R(t)` of the `N`-site truncated chain with site damping.
#[derive(Debug, Clone)]
pub struct TruncatedFlow {
    sites: usize,
    damping: Damping,
    rates: Vec<f64>,
}

impl TruncatedFlow {
    pub fn new(sites: usize, damping: Damping) -> Result<Self> {
        if sites == 0 {
            return Err(ChainError::domain("flow needs at least one site"));
        }
        if let Some(l) = damping.layer {
            if l.length == 0 || l.length > sites || !(l.max_damping > 0.0) {
                return Err(ChainError::config(
                    "absorbing_layer",
                    "need 1 <= L <= N and nu_abs > 0",
                ));
            }
        }
        let rates = (1..=sites).map(|n| damping.rate(n, sites)).collect();
        Ok(TruncatedFlow {
            sites,
            damping,
            rates,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn damping(&self) -> &Damping {
        &self.damping
    }

    /// Applies the drift `ȧ = a_{n−1} − a_{n+1} − ν_n a_n` once.
    pub fn drift(&self, a: &[f64], out: &mut [f64]) {
        let n = a.len();
        for i in 0..n {
            let left = if i > 0 { a[i - 1] } else { 0.0 };
            let right = if i + 1 < n { a[i + 1] } else { 0.0 };
            out[i] = left - right - self.rates[i] * a[i];
        }
    }

    /// `R(t) a`. Uniform damping goes through the exact spectral transform;
    /// a damping ramp breaks the diagonalization and uses a sub-stepped Taylor
    /// series of the matrix exponential instead.
    pub fn apply(&self, a: &[f64], t: f64) -> Vec<f64> {
        if self.damping.is_uniform() {
            let state = ChainState {
                amplitudes: a.to_vec(),
                time: 0.0,
                nu: self.damping.nu,
            };
            evolve_on_window(&state, t, self.sites)
                .expect("window matches state")
                .amplitudes
        } else {
            self.apply_taylor(a, t)
        }
    }

    pub(crate) fn apply_taylor(&self, a: &[f64], t: f64) -> Vec<f64> {
        let norm_bound = 2.0 + self.rates.iter().cloned().fold(0.0, f64::max);
        let substeps = ((t.abs() * norm_bound) / 0.5).ceil().max(1.0) as usize;
        let h = t / substeps as f64;
        let mut v = a.to_vec();
        let mut term = vec![0.0; a.len()];
        let mut next = vec![0.0; a.len()];
        for _ in 0..substeps {
            term.copy_from_slice(&v);
            let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
            for k in 1..60 {
                self.drift(&term, &mut next);
                let f = h / k as f64;
                let mut size: f64 = 0.0;
                for (tv, nv) in term.iter_mut().zip(&next) {
                    *tv = nv * f;
                    size = size.max(tv.abs());
                }
                for (vv, tv) in v.iter_mut().zip(&term) {
                    *vv += tv;
                }
                if size < 1e-18 * scale {
                    break;
                }
            }
        }
        v
    }

    /// Dense `R(t)`, column by column.
    pub fn matrix(&self, t: f64) -> DMatrix<f64> {
        let n = self.sites;
        if self.damping.is_uniform() {
            // R = V diag(e^{(2iz−ν)t}) V*, assembled directly from the basis.
            let rule = quad_rule(n).expect("n >= 1");
            let mut basis = vec![0.0; n * n];
            for (k, &z) in rule.nodes().iter().enumerate() {
                cheb_u_norm_all(z, &mut basis[k * n..(k + 1) * n]);
            }
            let decay = (-self.damping.nu * t).exp();
            let mut r = DMatrix::zeros(n, n);
            for (k, (z, w)) in rule.iter().enumerate() {
                let u = &basis[k * n..(k + 1) * n];
                let phase = Complex64::from_polar(decay, 2.0 * z * t);
                for q in 0..n {
                    // column q: α = i^q Ũ_q e^{...}
                    let mut alpha = Complex64::new(0.0, 0.0);
                    add_phased(&mut alpha, q, u[q]);
                    alpha *= phase;
                    for p in 0..n {
                        r[(p, q)] += w * u[p] * real_of_phased(p, alpha);
                    }
                }
            }
            r
        } else {
            let mut r = DMatrix::zeros(n, n);
            let mut e = vec![0.0; n];
            for q in 0..n {
                e.iter_mut().for_each(|x| *x = 0.0);
                e[q] = 1.0;
                let col = self.apply_taylor(&e, t);
                r.set_column(q, &nalgebra::DVector::from_vec(col));
            }
            r
        }
    }
}
