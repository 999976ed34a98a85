//! Bessel functions of the first kind of integer order.
//!
//! Only used to cross-check kernels, propagators and covariance tails; nothing
//! on the production path depends on them.

use crate::error::{ChainError, Result};

/// Largest supported order.
pub const MAX_ORDER: usize = 10_000;

const SERIES_CUTOFF: f64 = 1.0;
const RESCALE_AT: f64 = 1e250;
const MAX_START: usize = 1 << 22;

/// A single evaluation `J_order(argument) = value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselEval {
    pub order: usize,
    pub argument: f64,
    pub value: f64,
}

impl BesselEval {
    pub fn new(order: usize, argument: f64) -> Result<Self> {
        Ok(BesselEval {
            order,
            argument,
            value: bessel_j(order, argument)?,
        })
    }
}

/// `J_n(x)` for `x ≥ 0`.
///
/// Power series below `x = 1`; otherwise Miller's backward recurrence
/// normalized by `J_0 + 2 Σ J_{2k} = 1`, started at `n + ceil(10 + 1.5x)` and
/// restarted with twice the margin until two answers agree to 1e-13.
pub fn bessel_j(n: usize, x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(ChainError::domain(format!("Bessel argument {x} must be finite and >= 0")));
    }
    if n > MAX_ORDER {
        return Err(ChainError::domain(format!("Bessel order {n} exceeds {MAX_ORDER}")));
    }
    if x == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    if x < SERIES_CUTOFF {
        return Ok(power_series(n, x));
    }

    let mut margin = (10.0 + 1.5 * x).ceil() as usize;
    let mut previous = miller(n, x, n + margin)?;
    loop {
        margin *= 2;
        let start = n + margin;
        if start > MAX_START {
            return Err(ChainError::Numerical(format!(
                "Miller start order {start} overflowed for J_{n}({x})"
            )));
        }
        let next = miller(n, x, start)?;
        if (next - previous).abs() <= 1e-13 {
            return Ok(next);
        }
        previous = next;
    }
}

/// `J_n(x)` for any integer order and real argument, via
/// `J_{−n} = (−1)ⁿ J_n` and `J_n(−x) = (−1)ⁿ J_n(x)`.
pub fn bessel_j_int(n: i64, x: f64) -> Result<f64> {
    let order = n.unsigned_abs() as usize;
    let mut v = bessel_j(order, x.abs())?;
    if n < 0 && order % 2 == 1 {
        v = -v;
    }
    if x < 0.0 && order % 2 == 1 {
        v = -v;
    }
    Ok(v)
}

fn power_series(n: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    // (x/2)^n / n!, in logs so that large orders underflow cleanly to zero.
    let log_lead = n as f64 * half.ln() - ln_factorial(n);
    if log_lead < -745.0 {
        return 0.0;
    }
    let q = -half * half;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * (n + k) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    log_lead.exp() * sum
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn miller(n: usize, x: f64, start: usize) -> Result<f64> {
    // Even start so the normalization sum pairs up with even indices.
    let start = start + (start % 2);
    let mut upper = 0.0; // f_{k+1}
    let mut cur = 1e-30; // f_k
    let mut norm = 0.0;
    let mut saved = if start == n { cur } else { 0.0 };
    let inv_x = 1.0 / x;
    for k in (1..=start).rev() {
        if k % 2 == 0 {
            norm += 2.0 * cur;
        }
        let lower = 2.0 * k as f64 * inv_x * cur - upper;
        upper = cur;
        cur = lower;
        if k - 1 == n {
            saved = cur;
        }
        if cur.abs() > RESCALE_AT {
            let s = 1.0 / RESCALE_AT;
            cur *= s;
            upper *= s;
            norm *= s;
            saved *= s;
        }
    }
    norm += cur;
    if !(norm.is_finite() && norm != 0.0) {
        return Err(ChainError::Numerical(format!(
            "Miller normalization degenerate for J_{n}({x})"
        )));
    }
    Ok(saved / norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: plain power series with compensated summation.
    fn series_oracle(n: usize, x: f64) -> f64 {
        let mut term = (0.5 * x).powi(n as i32) / (1..=n).map(|k| k as f64).product::<f64>();
        let mut sum = 0.0;
        let mut c = 0.0;
        for k in 0..120 {
            if k > 0 {
                term *= -(0.25 * x * x) / (k as f64 * (n + k) as f64);
            }
            let y = term - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        sum
    }

    #[test]
    fn reference_values() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(3, 0.0).unwrap(), 0.0);
        let j12 = bessel_j(1, 2.0).unwrap();
        assert!((j12 - series_oracle(1, 2.0)).abs() < 1e-14);
        assert!((j12 - 0.576_725).abs() < 1e-6);
        let j51 = bessel_j(5, 1.0).unwrap();
        assert!((j51 - series_oracle(5, 1.0)).abs() < 1e-15);
        assert!((j51 - 0.000_249_758).abs() < 1e-9);
    }

    #[test]
    fn matches_series_on_moderate_grid() {
        for n in 0..30 {
            for i in 1..=40 {
                let x = 0.25 * i as f64;
                let a = bessel_j(n, x).unwrap();
                let b = series_oracle(n, x);
                assert!((a - b).abs() < 1e-12, "J_{n}({x}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn normalization_identity() {
        for i in 0..=100 {
            let x = i as f64;
            let k_max = (x as usize) + 40;
            let mut s = bessel_j(0, x).unwrap();
            for k in 1..=k_max {
                s += 2.0 * bessel_j(2 * k, x).unwrap();
            }
            assert!((s - 1.0).abs() < 1e-10, "x={x}: {s}");
        }
    }

    #[test]
    fn three_term_recurrence() {
        for &x in &[0.3, 1.0, 2.5, 7.0, 19.0, 55.0, 120.0, 400.0] {
            for n in 1..80 {
                let r = bessel_j(n - 1, x).unwrap() + bessel_j(n + 1, x).unwrap()
                    - 2.0 * n as f64 / x * bessel_j(n, x).unwrap();
                assert!(r.abs() < 1e-10, "x={x} n={n}: {r}");
            }
        }
    }

    #[test]
    fn bounded_by_one() {
        for n in [0usize, 1, 2, 10, 100, 1000] {
            for &x in &[0.0, 0.5, 3.0, 50.0, 999.0] {
                let e = BesselEval::new(n, x).unwrap();
                assert!(e.value.abs() <= 1.0);
            }
        }
    }

    #[test]
    fn large_order_underflows_to_zero() {
        assert_eq!(bessel_j(10_000, 0.5).unwrap(), 0.0);
        assert!(bessel_j(10_000, 5.0).unwrap().abs() < 1e-300);
        assert!(bessel_j(10_001, 5.0).is_err());
        assert!(bessel_j(2, -1.0).is_err());
    }

    #[test]
    fn signed_orders() {
        let x = 3.7;
        assert!((bessel_j_int(-3, x).unwrap() + bessel_j(3, x).unwrap()).abs() < 1e-16);
        assert!((bessel_j_int(-4, x).unwrap() - bessel_j(4, x).unwrap()).abs() < 1e-16);
        assert!((bessel_j_int(3, -x).unwrap() + bessel_j(3, x).unwrap()).abs() < 1e-16);
    }
}
