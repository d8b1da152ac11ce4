//! Monte Carlo replay of the learning model.
//!
//! Each path draws `θ` from the prior and observes the sources along a
//! fixed attention policy. Attention `πᵢ` spent on source `i` during a step
//! is equivalent to one signal `θᵢ + N(0, 1/πᵢ)`, so the posterior is
//! updated exactly in information form. The posterior covariance does not
//! depend on the signals and is computed once per step for all paths.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{PosteriorState, Problem};
use crate::stages::StagePath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// Steps of length `dt`, each aggregating the diffusion increments.
    ContinuousEuler,
    /// Unit periods with one precision budget each.
    DiscretePrecision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub mode: SimMode,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, n_paths: usize, seed: u64) -> Self {
        Self { dt, horizon, n_paths, seed, mode: SimMode::ContinuousEuler }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt must be positive"));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(invalid("horizon must be non-negative"));
        }
        if self.n_paths == 0 {
            return Err(invalid("need at least one path"));
        }
        if self.mode == SimMode::DiscretePrecision && (self.dt != 1.0 || self.horizon.fract() != 0.0) {
            return Err(invalid("discrete mode uses unit periods: set dt = 1 and an integer horizon"));
        }
        Ok(())
    }

    /// Checkpoint times `0, dt, 2dt, …`, the last one clipped to the horizon.
    pub fn times(&self) -> Vec<f64> {
        let steps = (self.horizon / self.dt - 1e-9).ceil().max(0.0) as usize;
        (0..=steps).map(|m| (m as f64 * self.dt).min(self.horizon)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub times: Vec<f64>,
    /// Posterior mean of `ω` per path and checkpoint.
    pub mean_trajectories: Vec<Vec<f64>>,
    pub prior_mean: f64,
    pub empirical_mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub empirical_variance: Vec<f64>,
    pub variance_se: Vec<f64>,
    /// `σ₀² − V(n(t))`, the variance of the posterior mean implied by the model.
    pub analytic_variance: Vec<f64>,
    /// Posterior variance of `ω` from the filtered covariance.
    pub posterior_variance: Vec<f64>,
}

/// Sum in a fixed pairwise order, independent of thread scheduling.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    match x.len() {
        0 => 0.0,
        1 => x[0],
        n if n <= 8 => x.iter().sum(),
        n => pairwise_sum(&x[..n / 2]) + pairwise_sum(&x[n / 2..]),
    }
}

/// Random stream for one path, independent of how many paths are drawn.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(path);
    r
}

/// Replays `path` on `cfg.n_paths` independent draws of `θ`.
pub fn simulate(p: &Problem, path: &StagePath, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    if path.problem().dim() != p.dim() {
        return Err(Error::WrongDimension("policy and problem differ in dimension".into()));
    }
    let k = p.dim();
    let times = cfg.times();
    let steps = times.len() - 1;
    let cum: Vec<Vec<f64>> = match cfg.mode {
        SimMode::ContinuousEuler => times.iter().map(|&t| path.n_of_t(t).into_vec()).collect(),
        SimMode::DiscretePrecision => {
            let mut acc = vec![vec![0.0; k]];
            for row in path.discretize_policy(steps) {
                let next = acc.last().unwrap().iter().zip(&row).map(|(a, b)| a + b).collect();
                acc.push(next);
            }
            acc
        }
    };
    let precisions: Vec<Vec<f64>> = (0..steps)
        .map(|m| cum[m + 1].iter().zip(&cum[m]).map(|(a, b)| (a - b).max(0.0)).collect())
        .collect();
    let covs: Vec<DMatrix<f64>> = cum.iter().map(|n| p.posterior_covariance(n)).collect::<Result<_>>()?;
    let alpha = p.alpha();
    let weights: Vec<DVector<f64>> = covs.iter().map(|c| c.transpose() * alpha).collect();
    let posterior_variance: Vec<f64> = covs.iter().map(|c| alpha.dot(&(c * alpha))).collect();
    let s0 = p.prior_variance();
    let analytic_variance = posterior_variance.iter().map(|v| s0 - v).collect();

    let chol = p.sigma().clone().cholesky().ok_or(Error::NonPd)?;
    let l = chol.l();
    let h0 = p.sigma_inv() * p.mu();
    let mean_trajectories: Vec<Vec<f64>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = path_rng(cfg.seed, j);
            let z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let theta = p.mu() + &l * z;
            let mut h = h0.clone();
            let mut out = Vec::with_capacity(steps + 1);
            out.push(weights[0].dot(&h));
            for m in 0..steps {
                for i in 0..k {
                    let e: f64 = rng.sample(StandardNormal);
                    let pi = precisions[m][i];
                    if pi > 0.0 {
                        h[i] += pi * theta[i] + pi.sqrt() * e;
                    }
                }
                out.push(weights[m + 1].dot(&h));
            }
            out
        })
        .collect();

    let n = cfg.n_paths as f64;
    let mut empirical_mean = Vec::with_capacity(steps + 1);
    let mut empirical_variance = Vec::with_capacity(steps + 1);
    let mut column = vec![0.0; cfg.n_paths];
    for m in 0..=steps {
        for (c, tr) in column.iter_mut().zip(&mean_trajectories) {
            *c = tr[m];
        }
        let mean = pairwise_sum(&column) / n;
        for c in column.iter_mut() {
            *c = (*c - mean).powi(2);
        }
        let var = if cfg.n_paths > 1 { pairwise_sum(&column) / (n - 1.0) } else { 0.0 };
        empirical_mean.push(mean);
        empirical_variance.push(var);
    }
    let mean_se = empirical_variance.iter().map(|v| (v / n).sqrt()).collect();
    let variance_se = empirical_variance.iter().map(|v| v * (2.0 / (n - 1.0).max(1.0)).sqrt()).collect();
    Ok(SimResult {
        times,
        mean_trajectories,
        prior_mean: alpha.dot(p.mu()),
        empirical_mean,
        mean_se,
        empirical_variance,
        variance_se,
        analytic_variance,
        posterior_variance,
    })
}

/// One conjugate update with independent signals `yᵢ ~ N(θᵢ, 1/πᵢ)`.
/// Coordinates with `πᵢ = 0` contribute no information.
pub fn posterior_update_discrete(
    p: &Problem,
    state: &PosteriorState,
    precisions: &[f64],
    observations: &[f64],
) -> Result<PosteriorState> {
    let k = p.dim();
    if precisions.len() != k || observations.len() != k || state.mean.len() != k {
        return Err(Error::WrongDimension(format!("expected vectors of length {k}")));
    }
    if precisions.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(invalid("precisions must be finite and non-negative"));
    }
    if precisions.iter().all(|&x| x == 0.0) {
        return Ok(state.clone());
    }
    let prior_info = state.cov.clone().cholesky().ok_or(Error::NonPd)?.inverse();
    let mut info = prior_info.clone();
    let mut h = &prior_info * &state.mean;
    for i in 0..k {
        info[(i, i)] += precisions[i];
        h[i] += precisions[i] * observations[i];
    }
    let mut cov = info.cholesky().ok_or(Error::NonPd)?.inverse();
    cov = (&cov + cov.transpose()) * 0.5;
    let mean = &cov * h;
    let gamma = &cov * p.alpha();
    Ok(PosteriorState { state_variance: p.alpha().dot(&gamma), mean, gamma, cov })
}
