//! Ensemble and time-series estimators, plus the energy and flux diagnostics.

use crate::error::{ChainError, Result};
use crate::propagator::ChainState;

/// Default number of batches for batch-means standard errors.
pub const DEFAULT_BATCHES: usize = 32;
/// Fewest batches accepted by [`batch_means`].
pub const MIN_BATCHES: usize = 20;

/// `½ Σ a_n²`.
pub fn energy(state: &ChainState) -> f64 {
    energy_of(&state.amplitudes)
}

pub fn energy_of(a: &[f64]) -> f64 {
    0.5 * a.iter().map(|x| x * x).sum::<f64>()
}

/// `a_n a_{n+1}`, the rate at which energy leaves sites `1..=n` through bond
/// `(n, n+1)` in the unforced chain.
pub fn flux(state: &ChainState, n: usize) -> Result<f64> {
    let len = state.len();
    if n == 0 || n >= len {
        return Err(ChainError::domain(format!("bond {n} outside 1..{len}")));
    }
    Ok(state.amplitudes[n - 1] * state.amplitudes[n])
}

/// Running mean and co-moment matrix of fixed-length vectors
/// (Welford updates, Chan et al. merge).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    dim: usize,
    count: u64,
    mean: Vec<f64>,
    /// `Σ (x_i − x̄)(x_j − x̄)`, row-major.
    comoment: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        MomentAccumulator {
            dim,
            count: 0,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d * inv;
        }
        for i in 0..self.dim {
            let after_i = x[i] - self.mean[i];
            for j in 0..self.dim {
                self.comoment[i * self.dim + j] += after_i * delta[j];
            }
        }
    }

    /// Combines `other` into `self`; equal to pushing `other`'s data after
    /// `self`'s up to rounding.
    pub fn merge(&mut self, other: &MomentAccumulator) {
        debug_assert_eq!(other.dim, self.dim);
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for i in 0..self.dim {
            for j in 0..self.dim {
                let k = i * self.dim + j;
                self.comoment[k] += other.comoment[k] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d * nb / n;
        }
        self.count += other.count;
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.mean[i]
    }

    /// Unbiased covariance of components `i`, `j` (0-based).
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.comoment[i * self.dim + j] / (self.count as f64 - 1.0)
    }

    /// Mean of component `i` with its standard error.
    pub fn mean_with_se(&self, i: usize) -> Result<(f64, f64)> {
        self.require(2)?;
        Ok((self.mean[i], (self.covariance(i, i) / self.count as f64).sqrt()))
    }

    fn require(&self, n: u64) -> Result<()> {
        if self.count < n {
            return Err(ChainError::InsufficientData(format!(
                "{} samples, need at least {n}",
                self.count
            )));
        }
        Ok(())
    }
}

/// Unbiased covariance of components `m`, `n` (1-based, matching site
/// numbers) with its standard error under independent Gaussian draws:
/// `Var ĉ_mn ≈ (c_mm c_nn + c_mn²)/(count − 1)`.
pub fn empirical_cov(acc: &MomentAccumulator, m: usize, n: usize) -> Result<(f64, f64)> {
    acc.require(2)?;
    if m == 0 || n == 0 || m > acc.dim || n > acc.dim {
        return Err(ChainError::domain(format!(
            "components ({m},{n}) outside 1..={}",
            acc.dim
        )));
    }
    let (i, j) = (m - 1, n - 1);
    let c = acc.covariance(i, j);
    let var = (acc.covariance(i, i) * acc.covariance(j, j) + c * c) / (acc.count as f64 - 1.0);
    Ok((c, var.sqrt()))
}

/// Mean of a correlated series with a batch-means standard error. Trailing
/// samples that do not fill a batch are dropped from the error estimate but
/// not from the mean.
pub fn batch_means(series: &[f64], batches: usize) -> Result<(f64, f64)> {
    if batches < MIN_BATCHES {
        return Err(ChainError::domain(format!(
            "{batches} batches, need at least {MIN_BATCHES}"
        )));
    }
    if series.len() < batches {
        return Err(ChainError::InsufficientData(format!(
            "{} samples for {batches} batches",
            series.len()
        )));
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let size = series.len() / batches;
    let batch: Vec<f64> = series
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let bm = batch.iter().sum::<f64>() / batches as f64;
    let var = batch.iter().map(|b| (b - bm).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    Ok((mean, (var / batches as f64).sqrt()))
}

/// Least-squares slope of `(t, y)` points with its standard error.
pub fn slope_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Err(ChainError::InsufficientData(format!(
            "{} points, slope fit needs 3",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let tm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - tm).powi(2)).sum();
    if !(sxx > 1e-300) {
        return Err(ChainError::domain("slope fit needs distinct abscissae"));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = points
        .iter()
        .map(|p| (p.1 - ym - slope * (p.0 - tm)).powi(2))
        .sum();
    Ok((slope, (ssr / (n - 2.0) / sxx).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::evolve_truncated;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn energy_and_flux_examples() {
        assert_eq!(energy(&ChainState::zeros(5, 0.0)), 0.0);
        assert_eq!(energy(&ChainState::impulse(5, 1, 0.0)), 0.5);
        let s = ChainState::new(vec![1.0, 1.0, 0.0, 0.0], 0.0).unwrap();
        assert_eq!(flux(&s, 2).unwrap(), 0.0);
        assert_eq!(flux(&s, 1).unwrap(), 1.0);
        assert!(flux(&s, 0).is_err());
        assert!(flux(&s, 4).is_err());
        assert_eq!(flux(&ChainState::zeros(3, 0.0), 1).unwrap(), 0.0);
    }

    #[test]
    fn energy_constant_under_unforced_flow() {
        let s = ChainState::new((1..=40).map(|k| (k as f64 * 0.37).sin()).collect(), 0.0).unwrap();
        let e0 = energy(&s);
        for t in [0.5, 3.0, 17.0, 60.0] {
            let e = energy(&evolve_truncated(&s, t).unwrap());
            assert!(((e - e0) / e0).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn left_energy_rate_is_minus_flux() {
        // d/dt ½Σ_{k≤n} a_k² = −a_n a_{n+1} for the unforced chain.
        let s = ChainState::new(vec![0.3, -1.2, 0.8, 0.5, -0.1, 0.9], 0.0).unwrap();
        let h = 1e-5;
        let left = |st: &ChainState, n: usize| energy_of(&st.amplitudes[..n]);
        for n in 1..4 {
            let p = evolve_on_window_pad(&s, h);
            let m = evolve_on_window_pad(&s, -h);
            let rate = (left(&p, n) - left(&m, n)) / (2.0 * h);
            assert!((rate + flux(&s, n).unwrap()).abs() < 1e-8, "n={n}");
        }
    }

    fn evolve_on_window_pad(s: &ChainState, t: f64) -> ChainState {
        crate::propagator::evolve_on_window(s, t, s.len() + 20).unwrap()
    }

    fn gaussian_rows(seed: u64, count: usize, dim: usize) -> Vec<Vec<f64>> {
        let mut rng = stream_rng(seed, 0);
        (0..count)
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    }

    #[test]
    fn merge_matches_concatenation() {
        let rows = gaussian_rows(11, 1000, 3);
        let mut all = MomentAccumulator::new(3);
        rows.iter().for_each(|r| all.push(r));
        let mut parts: Vec<MomentAccumulator> = rows
            .chunks(137)
            .map(|c| {
                let mut a = MomentAccumulator::new(3);
                c.iter().for_each(|r| a.push(r));
                a
            })
            .collect();
        let mut forward = MomentAccumulator::new(3);
        parts.iter().for_each(|p| forward.merge(p));
        parts.reverse();
        let mut backward = MomentAccumulator::new(3);
        parts.iter().for_each(|p| backward.merge(p));
        for acc in [&forward, &backward] {
            assert_eq!(acc.count(), 1000);
            for i in 0..3 {
                assert!((acc.mean(i) - all.mean(i)).abs() < 1e-12);
                for j in 0..3 {
                    assert!((acc.covariance(i, j) - all.covariance(i, j)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn covariance_of_known_data() {
        let mut a = MomentAccumulator::new(2);
        for (x, y) in [(1.0, 2.0), (2.0, 4.0), (3.0, 6.0), (4.0, 8.0)] {
            a.push(&[x, y]);
        }
        assert!((a.covariance(0, 0) - 5.0 / 3.0).abs() < 1e-14);
        assert!((a.covariance(0, 1) - 10.0 / 3.0).abs() < 1e-14);
        let (c, se) = empirical_cov(&a, 1, 2).unwrap();
        assert!((c - 10.0 / 3.0).abs() < 1e-14);
        assert!(se > 0.0);
        assert!(empirical_cov(&a, 3, 1).is_err());
        let mut one = MomentAccumulator::new(1);
        one.push(&[1.0]);
        assert!(matches!(empirical_cov(&one, 1, 1), Err(ChainError::InsufficientData(_))));
    }

    #[test]
    fn empirical_cov_z_scores_on_white_noise() {
        let rows = gaussian_rows(5, 20_000, 2);
        let mut a = MomentAccumulator::new(2);
        rows.iter().for_each(|r| a.push(r));
        let (v, se) = empirical_cov(&a, 1, 1).unwrap();
        assert!(((v - 1.0) / se).abs() < 3.0);
        let (c, se) = empirical_cov(&a, 1, 2).unwrap();
        assert!((c / se).abs() < 3.0);
        // Gaussian formula: √(2/n) for a unit variance, √(1/n) for a null covariance.
        assert!((se - (1.0f64 / 19_999.0).sqrt()).abs() < 0.05 * se);
    }

    #[test]
    fn batch_means_on_white_series() {
        let series: Vec<f64> = gaussian_rows(3, 64_000, 1).into_iter().map(|r| r[0]).collect();
        let (m, se) = batch_means(&series, DEFAULT_BATCHES).unwrap();
        let iid = (1.0 / series.len() as f64).sqrt();
        assert!(se < 2.0 * iid && se > 0.5 * iid, "{se} vs {iid}");
        assert!((m / se).abs() < 3.0);
        assert!(batch_means(&series, 10).is_err());
        assert!(batch_means(&series[..10], 20).is_err());
    }

    #[test]
    fn slope_examples() {
        let line: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64)).collect();
        let (s, e) = slope_fit(&line).unwrap();
        assert!((s - 2.0).abs() < 1e-14 && e < 1e-14);
        let flat: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0)).collect();
        assert_eq!(slope_fit(&flat).unwrap().0, 0.0);
        let mut rng = stream_rng(9, 0);
        let noisy: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.1;
                (t, t + 0.3 * rng.sample::<f64, _>(StandardNormal))
            })
            .collect();
        let (s, e) = slope_fit(&noisy).unwrap();
        assert!(((s - 1.0) / e).abs() < 3.0);
        assert!(slope_fit(&line[..2]).is_err());
        assert!(slope_fit(&[(1.0, 0.0), (1.0, 1.0), (1.0, 2.0)]).is_err());
    }
}
