//! Choice between two goods with costly sequential sampling.
//!
//! The agent learns about `ω = α₁θ₁ + α₂θ₂`, the payoff difference between
//! the goods, following the two-source stage path, and stops when the
//! posterior mean is far enough from zero. In variance time the posterior
//! mean is a standard Brownian motion, so the stopping problem is solved on
//! a lattice indexed by the cumulative variance reduction `v = σ₀² − σ_t²`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::assumptions::{classify, TriState};
use crate::error::{invalid, Error, Result};
use crate::gaussian::Problem;
use crate::stages::{k2_closed_form, StagePath};

/// Lattice probability of an up or down move.
const LATTICE_P: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryChoiceProblem {
    problem: Problem,
    cost: f64,
    swapped: bool,
}

impl BinaryChoiceProblem {
    /// Sources are relabelled so that source 1 has the larger prior
    /// covariance with `ω`; with equal weights this is `Σ₁₁ ≥ Σ₂₂`.
    pub fn new(sigma: DMatrix<f64>, alpha: [f64; 2], cost: f64) -> Result<Self> {
        if !(cost.is_finite() && cost > 0.0) {
            return Err(invalid(format!("cost must be positive, got {cost}")));
        }
        if sigma.nrows() != 2 || sigma.ncols() != 2 {
            return Err(Error::WrongDimension("binary choice needs a 2×2 prior".into()));
        }
        let p = Problem::new(sigma.clone(), DVector::from_column_slice(&alpha), None)?;
        let cov = p.prior_cov();
        let swapped = cov[1] > cov[0];
        let problem = if swapped {
            let s = DMatrix::from_fn(2, 2, |i, j| sigma[(1 - i, 1 - j)]);
            Problem::new(s, DVector::from_column_slice(&[alpha[1], alpha[0]]), None)?
        } else {
            p
        };
        if classify(&problem).k2_cov_sum != TriState::Pass {
            return Err(Error::AssumptionViolated("prior covariances with ω must be non-negative".into()));
        }
        Ok(Self { problem, cost, swapped })
    }

    pub fn equal_weights(sigma: DMatrix<f64>, cost: f64) -> Result<Self> {
        Self::new(sigma, [1.0, 1.0], cost)
    }

    /// Same prior scaled by `λ²` with a new cost.
    pub fn rescaled(&self, lambda: f64, cost: f64) -> Result<Self> {
        let s = self.problem.sigma() * (lambda * lambda);
        let a = self.problem.alpha();
        Self::new(s, [a[0], a[1]], cost)
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Whether the input labels were exchanged.
    pub fn swapped(&self) -> bool {
        self.swapped
    }

    fn parts(&self) -> (f64, f64, f64, f64, f64, f64) {
        let s = self.problem.sigma();
        let a = self.problem.alpha();
        (s[(0, 0)], s[(1, 1)], s[(0, 1)], a[0], a[1], s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(0, 1)])
    }

    pub fn prior_variance(&self) -> f64 {
        self.problem.prior_variance()
    }

    /// Length of the stage in which only source 1 is observed.
    pub fn switch_time(&self) -> f64 {
        let (_, _, _, _, a2, det) = self.parts();
        let cov = self.problem.prior_cov();
        ((cov[0] - cov[1]) / (a2 * det)).max(0.0)
    }

    pub fn stage_path(&self) -> Result<StagePath> {
        k2_closed_form(&self.problem)
    }

    /// Posterior variance `σ_t²` of `ω` along the optimal attention path.
    pub fn posterior_variance_path(&self, t: f64) -> f64 {
        let (s11, s22, s12, a1, a2, det) = self.parts();
        if t < self.switch_time() {
            (a1 * a1 * s11 + a2 * a2 * s22 + 2.0 * a1 * a2 * s12 + a2 * a2 * det * t) / (1.0 + s11 * t)
        } else {
            (a1 + a2).powi(2) * det / (s11 + s22 - 2.0 * s12 + det * t)
        }
    }

    /// Variance reduction accumulated by the switch time.
    pub fn v_star(&self) -> f64 {
        let (s11, _, s12, _, _, _) = self.parts();
        let cov = self.problem.prior_cov();
        if self.switch_time() == 0.0 {
            0.0
        } else {
            (cov[0] - cov[1]) * cov[0] / (s11 - s12)
        }
    }

    /// Time `T(v)` at which the variance reduction reaches `v`, and `T′(v)`.
    pub fn hitting_time(&self, v: f64) -> Result<(f64, f64)> {
        let s0 = self.prior_variance();
        if !(0.0..s0).contains(&v) {
            return Err(Error::Domain(format!("variance reduction {v} outside [0, {s0})")));
        }
        let (s11, s22, s12, a1, a2, det) = self.parts();
        let c1 = self.problem.prior_cov()[0];
        if v <= self.v_star() {
            let den = c1 * c1 - s11 * v;
            Ok((v / den, c1 * c1 / (den * den)))
        } else {
            let w = (a1 + a2).powi(2);
            let t = (w * det / (s0 - v) - (s11 + s22 - 2.0 * s12)) / det;
            Ok((t, w / (s0 - v).powi(2)))
        }
    }
}

/// Conditions under which `tilde` learns weakly faster than `hat` at every
/// time: same weights and prior variance, a larger covariance gap, and a
/// lower posterior variance at the switch time.
pub fn variance_dominates(tilde: &BinaryChoiceProblem, hat: &BinaryChoiceProblem) -> bool {
    let gap = |b: &BinaryChoiceProblem| {
        let c = b.problem.prior_cov();
        c[0] - c[1]
    };
    let at_switch = |b: &BinaryChoiceProblem| b.posterior_variance_path(b.switch_time());
    let s0 = tilde.prior_variance();
    tilde.problem.alpha() == hat.problem.alpha()
        && (s0 - hat.prior_variance()).abs() <= 1e-12 * s0
        && gap(tilde) >= gap(hat)
        && gap(hat) >= 0.0
        && at_switch(tilde) <= at_switch(hat)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpGrid {
    /// Lattice nodes on each side of zero in the belief coordinate.
    pub n_half: usize,
    /// Half-width of the belief range in prior standard deviations.
    pub y_range: f64,
    /// Stop the recursion once `σ_t²` falls below this fraction of `σ₀²`.
    pub truncation: f64,
}

impl Default for DpGrid {
    fn default() -> Self {
        Self { n_half: 400, y_range: 6.0, truncation: 1e-3 }
    }
}

impl DpGrid {
    pub fn with_n_half(n_half: usize) -> Self {
        Self { n_half, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.n_half < 4 {
            return Err(invalid("need at least 4 lattice nodes per side"));
        }
        if !(self.y_range > 0.0 && self.y_range.is_finite()) {
            return Err(invalid("belief range must be positive"));
        }
        if !(self.truncation > 0.0 && self.truncation < 1.0) {
            return Err(invalid("truncation must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppingSolution {
    pub time_grid: Vec<f64>,
    pub variance: Vec<f64>,
    pub boundary: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub dy: f64,
    pub steps: usize,
    pub t_max: f64,
}

/// Backward induction for the stopping problem with reward
/// `max{y, 0} − c·t`.
pub fn solve_stopping_boundary(b: &BinaryChoiceProblem, grid: DpGrid) -> Result<StoppingSolution> {
    grid.validate()?;
    let s0 = b.prior_variance();
    let sd0 = s0.sqrt();
    let dy = grid.y_range * sd0 / grid.n_half as f64;
    let delta = 2.0 * LATTICE_P * dy * dy;
    let v_max = s0 * (1.0 - grid.truncation);
    let steps = (v_max / delta).floor() as usize;
    if steps == 0 {
        return Err(Error::GridTooCoarse("variance step exceeds the truncated horizon".into()));
    }
    let mut time_grid = Vec::with_capacity(steps + 1);
    for n in 0..=steps {
        time_grid.push(b.hitting_time(n as f64 * delta)?.0);
    }
    let m = 2 * grid.n_half + 1;
    let y: Vec<f64> = (0..m).map(|j| (j as f64 - grid.n_half as f64) * dy).collect();
    let stop = |t: f64, yj: f64| yj.max(0.0) - b.cost * t;

    let mut value: Vec<f64> = y.iter().map(|&yj| stop(time_grid[steps], yj)).collect();
    let mut next = vec![0.0; m];
    let mut boundary = vec![0.0; steps + 1];
    for n in (0..steps).rev() {
        let t = time_grid[n];
        let mut crossing = None;
        let mut prev_d = f64::NAN;
        next[0] = stop(t, y[0]);
        next[m - 1] = stop(t, y[m - 1]);
        for j in 1..m - 1 {
            let cont = LATTICE_P * (value[j + 1] + value[j - 1]) + (1.0 - 2.0 * LATTICE_P) * value[j];
            let s = stop(t, y[j]);
            next[j] = cont.max(s);
            if j >= grid.n_half && crossing.is_none() {
                let d = cont - s;
                if d <= 0.0 {
                    crossing = Some(if j == grid.n_half {
                        0.0
                    } else {
                        y[j - 1] + dy * prev_d / (prev_d - d)
                    });
                }
                prev_d = d;
            }
        }
        boundary[n] = match crossing {
            Some(k) => k,
            None => {
                return Err(Error::GridTooCoarse(format!(
                    "continuation region reaches the edge of the belief range at t = {t}"
                )))
            }
        };
        std::mem::swap(&mut value, &mut next);
    }
    boundary[steps] = 0.0;

    let normal = Normal::standard();
    let variance: Vec<f64> = (0..=steps).map(|n| s0 - n as f64 * delta).collect();
    let accuracy = boundary.iter().zip(&variance).map(|(k, v)| normal.cdf(k / v.sqrt())).collect();
    Ok(StoppingSolution { t_max: time_grid[steps], time_grid, variance, boundary, accuracy, dy, steps })
}

/// Probability of choosing the better good when stopping at `t`, linearly
/// interpolated between lattice times.
pub fn choice_accuracy(sol: &StoppingSolution, t: f64) -> Result<f64> {
    let g = &sol.time_grid;
    if !(t >= g[0] && t <= sol.t_max) {
        return Err(Error::Domain(format!("t = {t} outside [{}, {}]", g[0], sol.t_max)));
    }
    let i = g.partition_point(|&x| x <= t).clamp(1, g.len() - 1);
    let (t0, t1) = (g[i - 1], g[i]);
    let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
    Ok(sol.accuracy[i - 1] + w * (sol.accuracy[i] - sol.accuracy[i - 1]))
}
