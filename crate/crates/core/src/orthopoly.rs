//! Normalized Chebyshev polynomials of the second kind and the Gauss rule for
//! the weight `sqrt(1 - z^2)` on `[-1, 1]`.
//!
//! `Ũ_n(z) = sqrt(2/π) U_n(z)` is orthonormal for that weight. The complex
//! basis `iⁿ Ũ_n` used by the spectral transforms is never materialized; the
//! phase is carried by parity wherever it appears.

use std::f64::consts::{FRAC_2_PI, PI};

use crate::error::{ChainError, Result};

/// `sqrt(2/π)`, the value of `Ũ_0`.
pub const U0: f64 = 0.797_884_560_802_865_4;

/// Evaluates `Ũ_n(z)` by the three-term recurrence `U_{n+1} = 2z U_n − U_{n−1}`.
pub fn cheb_u_norm(n: usize, z: f64) -> Result<f64> {
    if !(z.abs() <= 1.0) {
        return Err(ChainError::domain(format!(
            "Chebyshev argument {z} outside [-1, 1]"
        )));
    }
    let (mut prev, mut cur) = (0.0, 1.0);
    for _ in 0..n {
        let next = 2.0 * z * cur - prev;
        prev = cur;
        cur = next;
    }
    Ok(FRAC_2_PI.sqrt() * cur)
}

/// Fills `out[p] = Ũ_p(z)` for `p < out.len()`. No domain check; callers pass
/// quadrature nodes.
#[inline]
pub fn cheb_u_norm_all(z: f64, out: &mut [f64]) {
    let two_z = 2.0 * z;
    let (mut prev, mut cur) = (0.0, U0);
    for slot in out.iter_mut() {
        *slot = cur;
        let next = two_z * cur - prev;
        prev = cur;
        cur = next;
    }
}

/// Gauss–Chebyshev rule of the second kind:
/// `∫ f(z) sqrt(1−z²) dz ≈ Σ w_k f(z_k)`, exact for polynomials of degree
/// `≤ 2M − 1`.
///
/// Nodes are stored in the natural order `k = 1..=M`, i.e. `z_k = cos(kπ/(M+1))`
/// strictly decreasing. Node `k` and node `M + 1 − k` are mirror images.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

pub fn quad_rule(order: usize) -> Result<QuadratureRule> {
    if order == 0 {
        return Err(ChainError::domain("quadrature order must be at least 1"));
    }
    let h = PI / (order as f64 + 1.0);
    let (nodes, weights) = (1..=order)
        .map(|k| {
            let theta = k as f64 * h;
            let (s, c) = theta.sin_cos();
            (c, h * s * s)
        })
        .unzip();
    Ok(QuadratureRule { nodes, weights })
}

/// `Σ w_k f(z_k)`. Fails on the first non-finite evaluation, naming the node.
pub fn integrate<F>(f: F, rule: &QuadratureRule) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut acc = 0.0;
    for (z, w) in rule.iter() {
        let v = f(z);
        if !v.is_finite() {
            return Err(ChainError::Evaluation {
                context: "Gauss-Chebyshev integrand".into(),
                node: z,
                value: v,
            });
        }
        acc += w * v;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trig_oracle(n: usize, z: f64) -> f64 {
        let theta = z.acos();
        FRAC_2_PI.sqrt() * ((n as f64 + 1.0) * theta).sin() / theta.sin()
    }

    #[test]
    fn low_order_values() {
        assert!((cheb_u_norm(0, 0.3).unwrap() - 0.797_884_560_802_865_4).abs() < 1e-15);
        assert!(cheb_u_norm(2, 0.5).unwrap().abs() < 1e-15);
        let v = cheb_u_norm(5, 0.9).unwrap();
        assert!((v - trig_oracle(5, 0.9)).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_domain() {
        assert!(matches!(cheb_u_norm(3, 1.0001), Err(ChainError::Domain(_))));
        assert!(cheb_u_norm(3, f64::NAN).is_err());
        assert!(cheb_u_norm(3, -1.0).is_ok());
    }

    #[test]
    fn small_rules() {
        assert!(matches!(quad_rule(0), Err(ChainError::Domain(_))));
        let r1 = quad_rule(1).unwrap();
        assert!(r1.nodes()[0].abs() < 1e-15);
        assert!((r1.weights()[0] - PI / 2.0).abs() < 1e-15);
        let r2 = quad_rule(2).unwrap();
        assert!((r2.nodes()[0] - 0.5).abs() < 1e-15);
        assert!((r2.nodes()[1] + 0.5).abs() < 1e-15);
        for w in r2.weights() {
            assert!((w - PI / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn integrate_examples() {
        let r8 = quad_rule(8).unwrap();
        assert!((integrate(|_| 1.0, &r8).unwrap() - PI / 2.0).abs() < 1e-14);
        let f = |z: f64| cheb_u_norm(2, z).unwrap() * cheb_u_norm(4, z).unwrap();
        assert!(integrate(f, &r8).unwrap().abs() < 1e-14);
        let r4 = quad_rule(4).unwrap();
        assert!((integrate(|z| z * z, &r4).unwrap() - PI / 8.0).abs() < 1e-14);
        let r16 = quad_rule(16).unwrap();
        let u3sq = |z: f64| cheb_u_norm(3, z).unwrap().powi(2);
        assert!((integrate(u3sq, &r16).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn integrate_reports_bad_node() {
        let r = quad_rule(3).unwrap();
        match integrate(|z| if z.abs() < 1e-10 { f64::NAN } else { 1.0 }, &r) {
            Err(ChainError::Evaluation { node, .. }) => assert_eq!(node, r.nodes()[1]),
            other => panic!("expected evaluation error, got {other:?}"),
        }
    }

    #[test]
    fn weights_sum_below_half_pi() {
        for m in 1..200 {
            let r = quad_rule(m).unwrap();
            let s: f64 = r.weights().iter().sum();
            assert!(s <= PI / 2.0 + 1e-12, "M={m}: {s}");
            assert!(r.weights().iter().all(|&w| w > 0.0));
            assert!(r.nodes().windows(2).all(|p| p[0] > p[1]));
        }
    }

    #[test]
    fn orthonormality_up_to_64() {
        let rule = quad_rule(66).unwrap();
        let mut vals = vec![vec![0.0; 65]; rule.order()];
        for (k, &z) in rule.nodes().iter().enumerate() {
            cheb_u_norm_all(z, &mut vals[k]);
        }
        for n in 0..=64 {
            for m in 0..=64 {
                let s: f64 = (0..rule.order())
                    .map(|k| rule.weights()[k] * vals[k][n] * vals[k][m])
                    .sum();
                let expect = if n == m { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-12, "({n},{m}) -> {s}");
            }
        }
    }

    #[test]
    fn recurrence_residual() {
        let mut buf = vec![0.0; 202];
        for i in 0..=400 {
            let z = -1.0 + i as f64 / 200.0;
            cheb_u_norm_all(z, &mut buf);
            for n in 1..=200 {
                let r = buf[n + 1] - 2.0 * z * buf[n] + buf[n - 1];
                assert!(r.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn all_matches_single() {
        let mut buf = vec![0.0; 40];
        cheb_u_norm_all(0.37, &mut buf);
        for (n, v) in buf.iter().enumerate() {
            assert!((v - cheb_u_norm(n, 0.37).unwrap()).abs() < 1e-13);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn trig_form_equivalence(n in 0usize..=64, z in -0.999_999f64..0.999_999) {
            let v = cheb_u_norm(n, z).unwrap();
            prop_assert!((v - trig_oracle(n, z)).abs() < 1e-10);
        }
    }
}
