//! Exact draws from the stationary Gaussian law of a finite window.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::covariance::CovarianceWindow;
use crate::error::{ChainError, Result};
use crate::propagator::ChainState;
use crate::rng::stream_rng;

/// Diagonal jitters tried in turn when a factorization fails.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-11, 1e-10];

/// Largest accepted `‖LLᵀ − C‖₂ / ‖C‖₂`.
pub const FACTOR_TOL: f64 = 1e-9;

/// Lower Cholesky factor of `c`, adding the smallest jitter from `ladder`
/// that makes it succeed. Returns the factor and the jitter used.
pub fn factor_with_jitter(c: &DMatrix<f64>, ladder: &[f64]) -> Result<(DMatrix<f64>, f64)> {
    for &eps in ladder {
        let mut m = c.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += eps;
        }
        if let Some(ch) = Cholesky::new(m) {
            return Ok((ch.l(), eps));
        }
    }
    Err(ChainError::Numerical(format!(
        "matrix of order {} not positive definite after jitter {:e}",
        c.nrows(),
        ladder.last().copied().unwrap_or(0.0)
    )))
}

/// Spectral norm of a symmetric matrix.
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Assembled stationary covariance of sites `1..=n`, checked positive
/// definite by factorization.
pub fn stationary_cov_matrix(n: usize, nu: f64) -> Result<CovarianceWindow> {
    let w = CovarianceWindow::assemble(n, nu)?;
    factor_with_jitter(&w.matrix, &JITTER_LADDER)?;
    Ok(w)
}

#[derive(Debug, Clone)]
pub struct StationarySampler {
    pub n: usize,
    pub nu: f64,
    pub covariance: CovarianceWindow,
    factor: DMatrix<f64>,
    pub jitter: f64,
}

impl StationarySampler {
    pub fn new(n: usize, nu: f64) -> Result<Self> {
        Self::from_window(CovarianceWindow::assemble(n, nu)?)
    }

    pub fn from_window(covariance: CovarianceWindow) -> Result<Self> {
        let (factor, jitter) = factor_with_jitter(&covariance.matrix, &JITTER_LADDER)?;
        let s = StationarySampler {
            n: covariance.n,
            nu: covariance.nu,
            covariance,
            factor,
            jitter,
        };
        let rel = s.factor_error();
        if !(rel <= FACTOR_TOL) {
            return Err(ChainError::Numerical(format!(
                "stationary factor reproduces the covariance only to {rel:e}"
            )));
        }
        Ok(s)
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `‖LLᵀ − C‖₂ / ‖C‖₂`.
    pub fn factor_error(&self) -> f64 {
        let c = &self.covariance.matrix;
        let diff = &self.factor * self.factor.transpose() - c;
        sym_spectral_norm(&diff) / sym_spectral_norm(c)
    }

    /// One draw `L ξ` using `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let xi = DVector::from_iterator(self.n, (0..self.n).map(|_| rng.sample(StandardNormal)));
        (&self.factor * xi).as_slice().to_vec()
    }
}

/// `count` independent draws; draw `k` uses stream `k` of `seed`.
pub fn sample_stationary(sampler: &StationarySampler, count: usize, seed: u64) -> Result<Vec<ChainState>> {
    if count == 0 {
        return Err(ChainError::domain("sample count must be at least 1"));
    }
    Ok((0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            ChainState {
                amplitudes: sampler.draw(&mut rng),
                time: 0.0,
                nu: sampler.nu,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{cov_limit, cov_time_domain};
    use crate::stats::{empirical_cov, MomentAccumulator};
    use std::f64::consts::PI;

    #[test]
    fn small_windows() {
        let w1 = stationary_cov_matrix(1, 0.0).unwrap();
        assert!((w1.get(1, 1) - 8.0 / (3.0 * PI)).abs() < 1e-15);
        let w2 = stationary_cov_matrix(2, 0.0).unwrap();
        let expect = [[8.0 / (3.0 * PI), 0.5], [0.5, 32.0 / (15.0 * PI)]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((w2.matrix[(i, j)] - expect[i][j]).abs() < 1e-9);
            }
        }
        assert!((w2.get(1, 2) - cov_time_domain(1, 2, 0.0, 1e-10).unwrap()).abs() < 1e-9);
        assert!(w2.matrix.determinant() > 0.0);
    }

    #[test]
    fn factor_reproduces_covariance() {
        for &(n, nu) in &[(8, 0.0), (64, 0.0), (256, 0.0), (16, 0.3)] {
            let s = StationarySampler::new(n, nu).unwrap();
            assert!(s.factor_error() <= FACTOR_TOL, "n={n}: {}", s.factor_error());
            assert!(s.jitter <= 1e-10);
        }
    }

    #[test]
    fn jitter_escalation() {
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (_, eps) = factor_with_jitter(&singular, &JITTER_LADDER).unwrap();
        assert!(eps > 0.0 && eps <= 1e-10);
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            factor_with_jitter(&indefinite, &JITTER_LADDER),
            Err(ChainError::Numerical(_))
        ));
    }

    #[test]
    fn sample_moments() {
        let s = StationarySampler::new(4, 0.0).unwrap();
        let draws = sample_stationary(&s, 100_000, 2026).unwrap();
        let mut acc = MomentAccumulator::new(4);
        draws.iter().for_each(|d| acc.push(&d.amplitudes));
        for i in 0..4 {
            let (m, se) = acc.mean_with_se(i).unwrap();
            assert!((m / se).abs() < 3.0, "mean {i}");
        }
        for &(m, n) in &[(1, 1), (1, 2), (1, 4)] {
            let (c, se) = empirical_cov(&acc, m, n).unwrap();
            let truth = cov_limit(m, n).unwrap();
            assert!(((c - truth) / se).abs() < 3.0, "({m},{n}): {c} vs {truth} se {se}");
        }
        // σ of a sample variance: √2·var/√count.
        let (_, se) = empirical_cov(&acc, 1, 1).unwrap();
        let expect = 2f64.sqrt() * 8.0 / (3.0 * PI) / (100_000f64).sqrt();
        assert!((se - expect).abs() < 0.05 * expect);
    }

    #[test]
    fn draws_are_deterministic() {
        let s = StationarySampler::new(3, 0.0).unwrap();
        let a = sample_stationary(&s, 50, 1).unwrap();
        let b = sample_stationary(&s, 50, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_stationary(&s, 50, 2).unwrap());
        assert!(sample_stationary(&s, 0, 1).is_err());
    }
}
