//! Stochastic simulation of the truncated forced chain
//! `da_n = (a_{n−1} − a_{n+1} − ν_n a_n) dt + δ_{n1} dW`, `a_0 = a_{N+1} = 0`.
//!
//! Three integrators:
//! - [`em_step`], Euler–Maruyama, kept as an independent cross-check;
//! - [`exact_step`] with a [`NoiseTable`]: `a ← R(dt) a + L ξ`, where `LLᵀ` is
//!   the covariance of the one-step stochastic convolution;
//! - [`SpectralStepper`], the same exact step carried out on the generating
//!   function. Each node evolves by `e^{λ dt}`, `λ = 2iz − ν`, and the
//!   Brownian increment enters through its projections on orthonormal
//!   Legendre polynomials over the step, so one step costs `O(M·J)` instead
//!   of `O(N²)`.
//!
//! Ensembles are split into fixed chunks of trajectories and reduced in chunk
//! order, and every trajectory draws from its own random stream, so results
//! are bitwise reproducible for any number of worker threads.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ChainError, Result};
use crate::orthopoly::{cheb_u_norm_all, quad_rule, U0};
use crate::propagator::{AbsorbingLayer, ChainState, Damping, TruncatedFlow};
use crate::quadrature::{panel_nodes, GaussLegendre};
use crate::rng::{stream_rng, StreamRng};
use crate::sampler::{factor_with_jitter, StationarySampler};
use crate::stats::MomentAccumulator;

/// Jitters allowed when factoring a one-step noise covariance.
pub const NOISE_JITTER: [f64; 4] = [0.0, 1e-14, 1e-13, 1e-12];

/// Trajectories per reduction chunk. Fixed so that the summation order does
/// not depend on the thread count.
pub const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    Zero,
    /// Unit amplitude at the given site.
    Impulse(usize),
    /// Draw from the stationary law of the whole simulation window.
    Stationary,
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

fn default_initial() -> InitialCondition {
    InitialCondition::Zero
}

fn default_integrator() -> Integrator {
    Integrator::Exact
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub trajectories: usize,
    pub seed: u64,
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,
    #[serde(default)]
    pub absorbing_layer: Option<AbsorbingLayer>,
    /// Noise at site 1 on or off.
    #[serde(default = "default_true")]
    pub forced: bool,
    #[serde(default = "default_initial")]
    pub initial: InitialCondition,
    /// Observe every `record_every`-th step (the initial state is always
    /// observed).
    #[serde(default = "default_one")]
    pub record_every: usize,
}

impl SimConfig {
    pub fn new(n: usize, nu: f64, dt: f64, t_final: f64, trajectories: usize, seed: u64) -> Self {
        SimConfig {
            n,
            nu,
            dt,
            t_final,
            trajectories,
            seed,
            integrator: Integrator::Exact,
            absorbing_layer: None,
            forced: true,
            initial: InitialCondition::Zero,
            record_every: 1,
        }
    }

    pub fn damping(&self) -> Damping {
        Damping {
            nu: self.nu,
            layer: self.absorbing_layer,
        }
    }

    /// Number of steps, `t_final / dt`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(ChainError::config("n", "window size must be at least 1"));
        }
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return Err(ChainError::config("nu", "damping must be finite and >= 0"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(ChainError::config("dt", "step must be finite and > 0"));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(ChainError::config("t_final", "final time must be finite and >= 0"));
        }
        if self.t_final > 0.0 && self.dt > self.t_final * (1.0 + 1e-12) {
            return Err(ChainError::config("dt", "step exceeds the final time"));
        }
        let steps = self.steps() as f64;
        if (steps * self.dt - self.t_final).abs() > 1e-9 * self.t_final.max(1.0) {
            return Err(ChainError::config("t_final", "must be a whole number of steps"));
        }
        if self.trajectories == 0 {
            return Err(ChainError::config("trajectories", "need at least one trajectory"));
        }
        if self.record_every == 0 {
            return Err(ChainError::config("record_every", "must be at least 1"));
        }
        if let Some(l) = self.absorbing_layer {
            if l.length == 0 || l.length > self.n {
                return Err(ChainError::config("absorbing_layer", "need 1 <= L <= n"));
            }
            if !(l.max_damping > 0.0) || !l.max_damping.is_finite() {
                return Err(ChainError::config("absorbing_layer", "need nu_abs > 0"));
            }
        }
        if let InitialCondition::Impulse(site) = self.initial {
            if site == 0 || site > self.n {
                return Err(ChainError::config("initial", "impulse site outside the window"));
            }
        }
        Ok(())
    }
}

/// One Euler–Maruyama step with a standard normal draw `xi` for the noise.
pub fn em_step(state: &ChainState, damping: &Damping, dt: f64, xi: f64) -> ChainState {
    let mut a = state.amplitudes.clone();
    let mut scratch = vec![0.0; a.len()];
    em_step_in_place(&mut a, &mut scratch, damping, dt, xi);
    ChainState {
        amplitudes: a,
        time: state.time + dt,
        nu: state.nu,
    }
}

fn em_step_in_place(a: &mut [f64], drift: &mut [f64], damping: &Damping, dt: f64, xi: f64) {
    let n = a.len();
    for i in 0..n {
        let left = if i > 0 { a[i - 1] } else { 0.0 };
        let right = if i + 1 < n { a[i + 1] } else { 0.0 };
        drift[i] = left - right - damping.rate(i + 1, n) * a[i];
    }
    for (x, d) in a.iter_mut().zip(drift.iter()) {
        *x += d * dt;
    }
    a[0] += dt.sqrt() * xi;
}

/// One-step propagator and noise covariance for a fixed `(N, damping, dt)`.
#[derive(Debug, Clone)]
pub struct NoiseTable {
    pub n: usize,
    pub damping: Damping,
    pub dt: f64,
    /// `R(dt)`.
    pub flow: DMatrix<f64>,
    /// `Σ(dt) = ∫_0^dt R(r) e₁ (R(r) e₁)ᵀ dr`.
    pub sigma: DMatrix<f64>,
    /// Lower factor of `Σ(dt)` (plus `jitter` on the diagonal).
    pub factor: DMatrix<f64>,
    pub jitter: f64,
}

pub fn build_noise_table(n: usize, nu: f64, dt: f64) -> Result<NoiseTable> {
    build_noise_table_with(n, Damping::uniform(nu), dt)
}

/// The response columns `R(r)e₁` are marched across a composite
/// Gauss–Legendre grid on `[0, dt]` (unit panels, 20 nodes), which resolves
/// the integrand, a combination of `e^{(±2iz−ν)r}`, to rounding.
pub fn build_noise_table_with(n: usize, damping: Damping, dt: f64) -> Result<NoiseTable> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(ChainError::domain(format!("step {dt} must be finite and > 0")));
    }
    let flow = TruncatedFlow::new(n, damping)?;
    let grid = panel_nodes(0.0, dt, 1.0, &GaussLegendre::new(20));
    let mut sigma = DMatrix::zeros(n, n);
    let mut column = vec![0.0; n];
    column[0] = 1.0;
    let mut at = 0.0;
    for &(r, w) in &grid {
        column = flow.apply(&column, r - at);
        at = r;
        let c = DVector::from_column_slice(&column);
        sigma.ger(w, &c, &c, 1.0);
    }
    let sigma = 0.5 * (&sigma + sigma.transpose());
    let (factor, jitter) = factor_with_jitter(&sigma, &NOISE_JITTER)?;
    Ok(NoiseTable {
        n,
        damping,
        dt,
        flow: flow.matrix(dt),
        sigma,
        factor,
        jitter,
    })
}

/// `a ← R(dt) a + L ξ` for a standard normal vector `xi`.
pub fn exact_step(state: &ChainState, table: &NoiseTable, xi: &[f64]) -> Result<ChainState> {
    if state.len() != table.n || xi.len() != table.n {
        return Err(ChainError::config(
            "noise_table",
            format!(
                "table for {} sites used with a state of {} and {} draws",
                table.n,
                state.len(),
                xi.len()
            ),
        ));
    }
    let a = DVector::from_column_slice(&state.amplitudes);
    let x = DVector::from_column_slice(xi);
    let next = &table.flow * a + &table.factor * x;
    Ok(ChainState {
        amplitudes: next.as_slice().to_vec(),
        time: state.time + table.dt,
        nu: state.nu,
    })
}

/// Exact step on the generating function for uniform damping.
///
/// Only nodes with `z ≥ 0` are stored: for a real state `α(−z) = conj α(z)`,
/// and the evolution and the noise respect that symmetry. Mirror pairs carry
/// multiplicity 2 in all sums, a node at `z = 0` multiplicity 1.
#[derive(Debug, Clone)]
pub struct SpectralStepper {
    pub n: usize,
    pub nu: f64,
    pub dt: f64,
    nodes: Vec<f64>,
    /// `multiplicity · weight` per stored node.
    weights: Vec<f64>,
    /// `e^{λ dt}` per stored node.
    evolution: Vec<Complex64>,
    /// Row-major `[node][j]`: `U0 ∫_0^dt e^{λ(dt−r)} φ_j(r) dr`.
    noise: Vec<Complex64>,
    legendre: usize,
}

impl SpectralStepper {
    pub fn new(n: usize, nu: f64, dt: f64) -> Result<Self> {
        if n == 0 {
            return Err(ChainError::domain("stepper needs at least one site"));
        }
        if !(nu >= 0.0) || !nu.is_finite() || !(dt > 0.0) || !dt.is_finite() {
            return Err(ChainError::domain("stepper needs nu >= 0 and dt > 0"));
        }
        let rule = quad_rule(n)?;
        let half = n.div_ceil(2);
        let mut nodes = Vec::with_capacity(half);
        let mut weights = Vec::with_capacity(half);
        for (k, (z, w)) in rule.iter().take(half).enumerate() {
            let mirrored = 2 * k + 1 != n;
            nodes.push(if mirrored { z } else { 0.0 });
            weights.push(if mirrored { 2.0 * w } else { w });
        }
        let evolution = nodes
            .iter()
            .map(|&z| Complex64::new(-nu * dt, 2.0 * z * dt).exp())
            .collect();
        let target = if nu * dt > 1e-12 {
            U0 * U0 * (1.0 - (-2.0 * nu * dt).exp()) / (2.0 * nu)
        } else {
            U0 * U0 * dt
        };
        let mut legendre = (1.5 * dt).ceil() as usize + 24;
        loop {
            let noise = legendre_projections(&nodes, nu, dt, legendre);
            let worst = nodes
                .iter()
                .enumerate()
                .map(|(k, _)| {
                    let s: f64 = noise[k * legendre..(k + 1) * legendre]
                        .iter()
                        .map(|c| c.norm_sqr())
                        .sum();
                    ((target - s) / target).abs()
                })
                .fold(0.0, f64::max);
            if worst < 1e-13 {
                return Ok(SpectralStepper {
                    n,
                    nu,
                    dt,
                    nodes,
                    weights,
                    evolution,
                    noise,
                    legendre,
                });
            }
            if legendre > 8 * ((dt.ceil() as usize) + 64) {
                return Err(ChainError::accuracy(
                    "Legendre projection of the step noise",
                    target,
                    worst,
                ));
            }
            legendre += legendre / 2;
        }
    }

    /// Number of Legendre modes of the Brownian increment used per step.
    pub fn modes(&self) -> usize {
        self.legendre
    }

    pub fn stored_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// `α(z_k)` on the stored nodes.
    pub fn encode(&self, a: &[f64]) -> Vec<Complex64> {
        let mut u = vec![0.0; a.len()];
        self.nodes
            .iter()
            .map(|&z| {
                cheb_u_norm_all(z, &mut u);
                let mut acc = Complex64::new(0.0, 0.0);
                for (p, (&x, &up)) in a.iter().zip(&u).enumerate() {
                    let v = x * up;
                    match p % 4 {
                        0 => acc.re += v,
                        1 => acc.im += v,
                        2 => acc.re -= v,
                        _ => acc.im -= v,
                    }
                }
                acc
            })
            .collect()
    }

    /// First `sites` amplitudes recovered from `alpha`.
    pub fn decode(&self, alpha: &[Complex64], sites: usize) -> Vec<f64> {
        let mut out = vec![0.0; sites];
        let mut u = vec![0.0; sites];
        for ((&z, &w), a) in self.nodes.iter().zip(&self.weights).zip(alpha) {
            cheb_u_norm_all(z, &mut u);
            for (p, (slot, &up)) in out.iter_mut().zip(&u).enumerate() {
                let r = match p % 4 {
                    0 => a.re,
                    1 => a.im,
                    2 => -a.re,
                    _ => -a.im,
                };
                *slot += w * up * r;
            }
        }
        out
    }

    /// `Σ a_n²` by Parseval.
    pub fn norm_sq(&self, alpha: &[Complex64]) -> f64 {
        self.weights.iter().zip(alpha).map(|(w, a)| w * a.norm_sqr()).sum()
    }

    /// Advances one step; `eta` holds [`Self::modes`] standard normals, or is
    /// empty for the unforced chain.
    pub fn step(&self, alpha: &mut [Complex64], eta: &[f64]) {
        let j = self.legendre;
        for (k, (a, e)) in alpha.iter_mut().zip(&self.evolution).enumerate() {
            let mut next = *a * e;
            if !eta.is_empty() {
                for (c, &x) in self.noise[k * j..(k + 1) * j].iter().zip(eta) {
                    next += c * x;
                }
            }
            *a = next;
        }
    }
}

/// `U0 ∫_0^dt e^{λ_k (dt−r)} φ_j(r) dr` for orthonormal shifted Legendre
/// `φ_j(r) = sqrt((2j+1)/dt) P_j(2r/dt − 1)`, row-major `[node][j]`.
fn legendre_projections(nodes: &[f64], nu: f64, dt: f64, modes: usize) -> Vec<Complex64> {
    let gl = GaussLegendre::new(modes / 2 + 16);
    let grid = panel_nodes(0.0, dt, 1.0, &gl);
    let norms: Vec<f64> = (0..modes).map(|j| ((2 * j + 1) as f64 / dt).sqrt()).collect();
    nodes
        .par_iter()
        .flat_map_iter(|&z| {
            let lambda = Complex64::new(-nu, 2.0 * z);
            let mut acc = vec![Complex64::new(0.0, 0.0); modes];
            let mut p = vec![0.0; modes];
            for &(r, w) in &grid {
                legendre_all(2.0 * r / dt - 1.0, &mut p);
                let e = (lambda * (dt - r)).exp() * (w * U0);
                for ((a, &pj), &nj) in acc.iter_mut().zip(&p).zip(&norms) {
                    *a += e * (pj * nj);
                }
            }
            acc
        })
        .collect()
}

fn legendre_all(x: f64, out: &mut [f64]) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for (j, slot) in out.iter_mut().enumerate() {
        *slot = cur;
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * x * cur - jf * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
}

/// Quantities recorded during [`simulate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observer {
    /// `½ Σ a_n²` at every checkpoint.
    Energy,
    /// `(a_1, …, a_w)` at every checkpoint.
    Window(usize),
    /// Per-trajectory time average of `a_n a_{n+1}` over checkpoints with
    /// `t > 0`, for each listed bond.
    Flux(Vec<usize>),
}

/// Ensemble statistics produced by [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub times: Vec<f64>,
    pub energy: Option<Vec<MomentAccumulator>>,
    pub window: Option<(usize, Vec<MomentAccumulator>)>,
    pub flux: Option<(Vec<usize>, MomentAccumulator)>,
}

#[derive(Debug, Clone)]
struct Partial {
    energy: Option<Vec<MomentAccumulator>>,
    window: Option<Vec<MomentAccumulator>>,
    flux: Option<MomentAccumulator>,
}

impl Partial {
    fn merge(&mut self, other: &Partial) {
        if let (Some(a), Some(b)) = (&mut self.energy, &other.energy) {
            a.iter_mut().zip(b).for_each(|(x, y)| x.merge(y));
        }
        if let (Some(a), Some(b)) = (&mut self.window, &other.window) {
            a.iter_mut().zip(b).for_each(|(x, y)| x.merge(y));
        }
        if let (Some(a), Some(b)) = (&mut self.flux, &other.flux) {
            a.merge(b);
        }
    }
}

struct Plan {
    energy: bool,
    window: Option<usize>,
    bonds: Option<Vec<usize>>,
    /// Leading sites that must be materialized at each checkpoint.
    sites: usize,
    checkpoints: usize,
}

impl Plan {
    fn new(observers: &[Observer], n: usize, checkpoints: usize) -> Result<Self> {
        let mut plan = Plan {
            energy: false,
            window: None,
            bonds: None,
            sites: 0,
            checkpoints,
        };
        for o in observers {
            match o {
                Observer::Energy => plan.energy = true,
                Observer::Window(w) => {
                    if *w == 0 || *w > n {
                        return Err(ChainError::config("observer", format!("window {w} outside 1..={n}")));
                    }
                    plan.window = Some(*w);
                    plan.sites = plan.sites.max(*w);
                }
                Observer::Flux(bonds) => {
                    if bonds.is_empty() || bonds.iter().any(|&b| b == 0 || b >= n) {
                        return Err(ChainError::config("observer", format!("flux bonds must lie in 1..{n}")));
                    }
                    plan.sites = plan.sites.max(bonds.iter().max().unwrap() + 1);
                    plan.bonds = Some(bonds.clone());
                }
            }
        }
        Ok(plan)
    }

    fn empty(&self) -> Partial {
        Partial {
            energy: self
                .energy
                .then(|| vec![MomentAccumulator::new(1); self.checkpoints]),
            window: self
                .window
                .map(|w| vec![MomentAccumulator::new(w); self.checkpoints]),
            flux: self.bonds.as_ref().map(|b| MomentAccumulator::new(b.len())),
        }
    }
}

/// Per-trajectory recorder.
struct Recorder<'a> {
    plan: &'a Plan,
    flux_sum: Vec<f64>,
    flux_count: usize,
}

impl<'a> Recorder<'a> {
    fn new(plan: &'a Plan) -> Self {
        Recorder {
            plan,
            flux_sum: vec![0.0; plan.bonds.as_ref().map_or(0, |b| b.len())],
            flux_count: 0,
        }
    }

    fn record(&mut self, out: &mut Partial, idx: usize, norm_sq: f64, sites: &[f64]) {
        if let Some(e) = &mut out.energy {
            e[idx].push(&[0.5 * norm_sq]);
        }
        if let (Some(w), Some(acc)) = (self.plan.window, &mut out.window) {
            acc[idx].push(&sites[..w]);
        }
        if idx > 0 {
            if let Some(bonds) = &self.plan.bonds {
                for (s, &b) in self.flux_sum.iter_mut().zip(bonds) {
                    *s += sites[b - 1] * sites[b];
                }
                self.flux_count += 1;
            }
        }
    }

    fn finish(self, out: &mut Partial) {
        if let Some(acc) = &mut out.flux {
            if self.flux_count > 0 {
                let avg: Vec<f64> = self.flux_sum.iter().map(|s| s / self.flux_count as f64).collect();
                acc.push(&avg);
            }
        }
    }
}

enum Engine {
    Spectral(SpectralStepper),
    Dense(NoiseTable),
    Euler(Damping),
}

/// Runs the trajectory ensemble of `config`, feeding every checkpoint to
/// `observers`. Deterministic for a fixed seed regardless of thread count.
pub fn simulate(config: &SimConfig, observers: &[Observer]) -> Result<SimOutput> {
    config.validate()?;
    let steps = config.steps();
    let stride = config.record_every;
    let recorded: Vec<usize> = (0..=steps).filter(|k| k % stride == 0).collect();
    let times: Vec<f64> = recorded.iter().map(|&k| k as f64 * config.dt).collect();
    let plan = Plan::new(observers, config.n, recorded.len())?;

    let damping = config.damping();
    let engine = match config.integrator {
        Integrator::Exact if damping.is_uniform() => {
            Engine::Spectral(SpectralStepper::new(config.n, config.nu, config.dt)?)
        }
        Integrator::Exact => Engine::Dense(build_noise_table_with(config.n, damping, config.dt)?),
        Integrator::Euler => Engine::Euler(damping),
    };
    let sampler = match config.initial {
        InitialCondition::Stationary => {
            if !damping.is_uniform() {
                return Err(ChainError::config(
                    "initial",
                    "stationary initial data needs uniform damping",
                ));
            }
            Some(StationarySampler::new(config.n, config.nu)?)
        }
        _ => None,
    };

    let chunks: Vec<(usize, usize)> = (0..config.trajectories)
        .step_by(CHUNK)
        .map(|lo| (lo, (lo + CHUNK).min(config.trajectories)))
        .collect();
    let partials: Vec<Partial> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut part = plan.empty();
            for traj in lo..hi {
                let mut rng = stream_rng(config.seed, traj as u64);
                let initial = initial_state(config, sampler.as_ref(), &mut rng);
                run_trajectory(&engine, config, &plan, initial, &mut rng, &mut part);
            }
            part
        })
        .collect();
    let mut total = plan.empty();
    for p in &partials {
        total.merge(p);
    }
    Ok(SimOutput {
        times,
        energy: total.energy,
        window: plan.window.zip(total.window),
        flux: plan.bonds.clone().zip(total.flux),
    })
}

fn initial_state(config: &SimConfig, sampler: Option<&StationarySampler>, rng: &mut StreamRng) -> Vec<f64> {
    match config.initial {
        InitialCondition::Zero => vec![0.0; config.n],
        InitialCondition::Impulse(site) => {
            let mut a = vec![0.0; config.n];
            a[site - 1] = 1.0;
            a
        }
        InitialCondition::Stationary => sampler.expect("sampler built for stationary data").draw(rng),
    }
}

fn run_trajectory(
    engine: &Engine,
    config: &SimConfig,
    plan: &Plan,
    initial: Vec<f64>,
    rng: &mut StreamRng,
    out: &mut Partial,
) {
    let steps = config.steps();
    let stride = config.record_every;
    let mut rec = Recorder::new(plan);
    let norm_sq = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>();
    match engine {
        Engine::Spectral(st) => {
            let mut alpha = st.encode(&initial);
            let mut eta = vec![0.0; if config.forced { st.modes() } else { 0 }];
            rec.record(out, 0, norm_sq(&initial), &initial[..plan.sites]);
            for k in 1..=steps {
                eta.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
                st.step(&mut alpha, &eta);
                if k % stride == 0 {
                    let sites = st.decode(&alpha, plan.sites);
                    rec.record(out, k / stride, st.norm_sq(&alpha), &sites);
                }
            }
        }
        Engine::Dense(table) => {
            let mut a = DVector::from_vec(initial);
            let mut xi = DVector::zeros(config.n);
            rec.record(out, 0, a.norm_squared(), &a.as_slice()[..plan.sites]);
            for k in 1..=steps {
                let mut next = &table.flow * &a;
                if config.forced {
                    xi.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
                    next.gemv(1.0, &table.factor, &xi, 1.0);
                }
                a = next;
                if k % stride == 0 {
                    rec.record(out, k / stride, a.norm_squared(), &a.as_slice()[..plan.sites]);
                }
            }
        }
        Engine::Euler(damping) => {
            let mut a = initial;
            let mut scratch = vec![0.0; a.len()];
            rec.record(out, 0, norm_sq(&a), &a[..plan.sites]);
            for k in 1..=steps {
                let xi = if config.forced { rng.sample(StandardNormal) } else { 0.0 };
                em_step_in_place(&mut a, &mut scratch, damping, config.dt, xi);
                if k % stride == 0 {
                    rec.record(out, k / stride, norm_sq(&a), &a[..plan.sites]);
                }
            }
        }
    }
    rec.finish(out);
}

/// Deterministic second moments of the Euler–Maruyama chain:
/// `C ← (I + dt A) C (I + dt A)ᵀ + dt e₁e₁ᵀ`, `steps` times from `C = 0`.
pub fn euler_second_moments(n: usize, damping: &Damping, dt: f64, steps: usize) -> Result<DMatrix<f64>> {
    let flow = TruncatedFlow::new(n, *damping)?;
    let mut b = DMatrix::<f64>::identity(n, n);
    let mut col = vec![0.0; n];
    for q in 0..n {
        let e: Vec<f64> = (0..n).map(|i| if i == q { 1.0 } else { 0.0 }).collect();
        flow.drift(&e, &mut col);
        for p in 0..n {
            b[(p, q)] += dt * col[p];
        }
    }
    let mut c = DMatrix::zeros(n, n);
    for _ in 0..steps {
        c = &b * c * b.transpose();
        c[(0, 0)] += dt;
    }
    Ok(c)
}

/// Exact second moments of the truncated chain after time `t` from zero data,
/// `∫_0^t R(r)e₁(R(r)e₁)ᵀ dr`.
pub fn exact_second_moments(n: usize, damping: &Damping, t: f64) -> Result<DMatrix<f64>> {
    Ok(build_noise_table_with(n, *damping, t)?.sigma)
}
