//! Counterfactual paths after the agent is forced to watch one source.
//!
//! Attention to source 0 is fixed for the first `T` units of time. Because
//! the sufficient conditions survive Bayesian updating, the optimal
//! continuation is the stage path of the posterior problem, shifted by `T`.

use rayon::prelude::*;
use serde::Serialize;

use crate::assumptions::{classify, perpetual_substitutes};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{AttentionVector, Problem};
use crate::stages::{solve_stages, Stage, StagePath};

/// Margin above which a cumulative-attention difference counts as positive.
pub const DIFF_TOL: f64 = 1e-9;

fn check_duration(duration: f64) -> Result<()> {
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(invalid(format!("manipulation length must be non-negative, got {duration}")));
    }
    Ok(())
}

fn forced_floor(k: usize, duration: f64) -> Vec<f64> {
    let mut f = vec![0.0; k];
    f[0] = duration;
    f
}

/// The manipulated policy as a stage path on the original problem: a forced
/// stage on source 0 followed by the optimal stages of the posterior.
pub fn manipulated_stages(p: &Problem, duration: f64) -> Result<StagePath> {
    check_duration(duration)?;
    if !classify(p).supported() {
        return Err(Error::UnsupportedPrior);
    }
    if duration == 0.0 {
        return solve_stages(p);
    }
    let k = p.dim();
    let post = p.posterior_problem(&forced_floor(k, duration))?;
    let tail = solve_stages(&post)?;
    let mut first = vec![0.0; k];
    first[0] = 1.0;
    let mut stages = vec![Stage { t_start: 0.0, t_end: Some(duration), support: vec![0], mixture: first }];
    stages.extend(tail.stages().iter().map(|s| Stage {
        t_start: duration + s.t_start,
        t_end: s.t_end.map(|e| duration + e),
        support: s.support.clone(),
        mixture: s.mixture.clone(),
    }));
    StagePath::from_parts(p.clone(), stages)
}

/// Cumulative attention at `t` under the manipulated policy.
pub fn manipulated_path(p: &Problem, duration: f64, t: f64) -> Result<AttentionVector> {
    Ok(manipulated_stages(p, duration)?.n_of_t(t))
}

/// First time the baseline path has given source 0 at least `duration`.
pub fn catch_up_time(baseline: &StagePath, duration: f64) -> Result<f64> {
    check_duration(duration)?;
    let mut n0 = 0.0;
    for s in baseline.stages() {
        let rate = s.mixture[0];
        let len = s.end() - s.t_start;
        if rate > 0.0 && n0 + rate * len >= duration {
            return Ok(s.t_start + ((duration - n0) / rate).max(0.0));
        }
        if duration <= n0 {
            return Ok(s.t_start);
        }
        n0 += rate * len;
    }
    Err(Error::NoConvergence("baseline never reaches the forced amount".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManipulationReport {
    pub duration: f64,
    pub catch_up: f64,
    pub t_grid: Vec<f64>,
    /// `diffs[i][n]` is manipulated minus baseline attention to source `i`
    /// at `t_grid[n]`.
    pub diffs: Vec<Vec<f64>>,
    pub substitutes: bool,
    /// Grid points where some other source gains attention, as
    /// `(source, t)`. Under perpetual substitutes this stays empty.
    pub increases: Vec<(usize, f64)>,
}

/// Cumulative-attention differences between the manipulated and baseline
/// paths on `t_grid`.
pub fn compare_cumulative(p: &Problem, duration: f64, t_grid: &[f64]) -> Result<ManipulationReport> {
    let baseline = solve_stages(p)?;
    let manipulated = manipulated_stages(p, duration)?;
    let catch_up = catch_up_time(&baseline, duration)?;
    let k = p.dim();
    let rows: Vec<Vec<f64>> = t_grid
        .par_iter()
        .map(|&t| {
            let a = manipulated.n_of_t(t);
            let b = baseline.n_of_t(t);
            a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - y).collect()
        })
        .collect();
    let diffs: Vec<Vec<f64>> = (0..k).map(|i| rows.iter().map(|r| r[i]).collect()).collect();
    let increases = (1..k)
        .flat_map(|i| {
            let d = &diffs[i];
            t_grid.iter().enumerate().filter(move |(n, _)| d[*n] > DIFF_TOL).map(move |(_, &t)| (i, t))
        })
        .collect();
    Ok(ManipulationReport {
        duration,
        catch_up,
        t_grid: t_grid.to_vec(),
        diffs,
        substitutes: perpetual_substitutes(p),
        increases,
    })
}
