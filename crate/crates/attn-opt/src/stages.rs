//! Stage-by-stage construction of the optimal attention path.
//!
//! Each stage observes the sources with the largest `|γᵢ|` in proportion
//! to their transformed weights until an outside source catches up.

use nalgebra::{DMatrix, DVector};

use crate::assumptions::{classify, TriState, Verdict};
use crate::error::{Error, Result};
use crate::gaussian::{AttentionVector, Problem};

/// Relative tolerance for joining the argmax set.
pub const TIE_TOL: f64 = 1e-9;
/// Relative width at which switch-time bisection stops.
pub const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub t_start: f64,
    /// `None` marks the final, unbounded stage.
    pub t_end: Option<f64>,
    pub support: Vec<usize>,
    pub mixture: Vec<f64>,
}

impl Stage {
    pub fn end(&self) -> f64 {
        self.t_end.unwrap_or(f64::INFINITY)
    }

    pub fn contains(&self, t: f64) -> bool {
        self.t_start <= t && t < self.end()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagePath {
    stages: Vec<Stage>,
    problem: Problem,
}

impl StagePath {
    /// Assemble a path from parts, checking the structural invariants.
    pub fn from_parts(problem: Problem, stages: Vec<Stage>) -> Result<Self> {
        let k = problem.dim();
        let bad = |m: &str| Err(Error::Invalid(format!("malformed stage path: {m}")));
        if stages.is_empty() {
            return bad("no stages");
        }
        let mut prev_end = 0.0;
        for (n, s) in stages.iter().enumerate() {
            if s.mixture.len() != k || s.support.iter().any(|&i| i >= k) {
                return bad("index out of range");
            }
            if s.t_start != prev_end || s.end() <= s.t_start {
                return bad("stage times are not contiguous and increasing");
            }
            if (s.mixture.iter().sum::<f64>() - 1.0).abs() > 1e-9 || s.mixture.iter().any(|&x| x < 0.0) {
                return bad("mixture is not on the simplex");
            }
            if (0..k).any(|i| s.mixture[i] > 0.0 && !s.support.contains(&i)) {
                return bad("mixture puts weight outside the support");
            }
            if (s.t_end.is_none()) != (n + 1 == stages.len()) {
                return bad("only the last stage may be unbounded");
            }
            prev_end = s.end();
        }
        Ok(Self { stages, problem })
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    /// Finite switch times `t₁ < t₂ < ⋯`.
    pub fn switch_times(&self) -> Vec<f64> {
        self.stages.iter().filter_map(|s| s.t_end).collect()
    }

    /// Cumulative attention `n(t)`, integrating the stage mixtures.
    pub fn n_of_t(&self, t: f64) -> AttentionVector {
        let k = self.problem.dim();
        let mut q = vec![0.0; k];
        let t = t.max(0.0);
        for s in &self.stages {
            if t <= s.t_start {
                break;
            }
            let len = t.min(s.end()) - s.t_start;
            for (qi, bi) in q.iter_mut().zip(&s.mixture) {
                *qi += len * bi;
            }
        }
        AttentionVector::new(q).expect("mixtures are non-negative")
    }

    /// Instantaneous allocation `β(t)`; right-continuous at switch times.
    pub fn beta_of_t(&self, t: f64) -> Vec<f64> {
        self.stages
            .iter()
            .find(|s| s.contains(t))
            .unwrap_or(&self.stages[0])
            .mixture
            .clone()
    }

    /// Attention devoted to each source over `[a, b]`.
    pub fn attention_between(&self, a: f64, b: f64) -> Vec<f64> {
        let mut q = vec![0.0; self.problem.dim()];
        for s in &self.stages {
            let len = b.min(s.end()) - a.max(s.t_start);
            if len > 0.0 {
                for (qi, bi) in q.iter_mut().zip(&s.mixture) {
                    *qi += len * bi;
                }
            }
        }
        q
    }

    /// Per-period precision table `πᵢ(t) = ∫ₜ^{t+1} βᵢ` for periods `0..horizon`.
    pub fn discretize_policy(&self, horizon: usize) -> Vec<Vec<f64>> {
        (0..horizon)
            .map(|t| self.attention_between(t as f64, t as f64 + 1.0))
            .collect()
    }
}

/// Weights of the component of `ω` learnable from the sources in `b`:
/// `α̃ = α_B + Σ_BB⁻¹ Σ_{B,Bᶜ} α_{Bᶜ}`, returned in the order of `b`.
pub fn transformed_weights(p: &Problem, b: &[usize]) -> Result<DVector<f64>> {
    let k = p.dim();
    if b.is_empty() || b.iter().any(|&i| i >= k) {
        return Err(Error::Invalid("source set must be non-empty and in range".into()));
    }
    let rest: Vec<usize> = (0..k).filter(|i| !b.contains(i)).collect();
    let s = p.sigma();
    let a = p.alpha();
    let tl = DMatrix::from_fn(b.len(), b.len(), |i, j| s[(b[i], b[j])]);
    let a_b = DVector::from_fn(b.len(), |i, _| a[b[i]]);
    if rest.is_empty() {
        return Ok(a_b);
    }
    let tr = DMatrix::from_fn(b.len(), rest.len(), |i, j| s[(b[i], rest[j])]);
    let a_r = DVector::from_fn(rest.len(), |i, _| a[rest[i]]);
    let chol = tl.cholesky().ok_or(Error::NonPd)?;
    Ok(a_b + chol.solve(&(tr * a_r)))
}

/// Closed-form two-stage path for two sources.
pub fn k2_closed_form(p: &Problem) -> Result<StagePath> {
    if p.dim() != 2 {
        return Err(Error::WrongDimension(format!("closed form needs K = 2, got {}", p.dim())));
    }
    if classify(p).k2_cov_sum != TriState::Pass {
        return Err(Error::AssumptionViolated("cov1 + cov2 < 0".into()));
    }
    let cov = p.prior_cov();
    let a = p.alpha();
    let det = p.sigma().determinant();
    let (i, j) = if cov[0] >= cov[1] { (0, 1) } else { (1, 0) };
    let t_star = (cov[i] - cov[j]) / (a[j] * det);
    let total = a[0] + a[1];
    let last = |t_start| Stage {
        t_start,
        t_end: None,
        support: vec![0, 1],
        mixture: vec![a[0] / total, a[1] / total],
    };
    let stages = if t_star > 0.0 {
        let mut first = vec![0.0; 2];
        first[i] = 1.0;
        vec![
            Stage { t_start: 0.0, t_end: Some(t_star), support: vec![i], mixture: first },
            last(t_star),
        ]
    } else {
        vec![last(0.0)]
    };
    StagePath::from_parts(p.clone(), stages)
}

/// Solve for the optimal stage path, refusing priors that no sufficient
/// condition covers.
pub fn solve_stages(p: &Problem) -> Result<StagePath> {
    if classify(p).verdict == Verdict::Unsupported {
        return Err(Error::UnsupportedPrior);
    }
    solve_stages_unchecked(p)
}

/// The stage recursion without the assumption gate. On unsupported priors
/// the result is the greedy equal-marginal-value path, which need not be
/// optimal.
pub fn solve_stages_unchecked(p: &Problem) -> Result<StagePath> {
    let k = p.dim();
    let mut q = vec![0.0; k];
    let mut t = 0.0;
    let mut in_set = vec![false; k];
    let mut stages = Vec::with_capacity(k);

    loop {
        let g = p.gamma(&q)?;
        let gmax = g.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        for i in 0..k {
            if g[i].abs() >= gmax * (1.0 - TIE_TOL) {
                in_set[i] = true;
            }
        }
        let support: Vec<usize> = (0..k).filter(|&i| in_set[i]).collect();
        if support.len() == k {
            let total = p.alpha().sum();
            stages.push(Stage {
                t_start: t,
                t_end: None,
                support,
                mixture: p.alpha().iter().map(|a| a / total).collect(),
            });
            break;
        }

        let beta = stage_mixture(p, &support)?;
        let (len, entrants) = next_switch(p, &q, &beta, &in_set, t)?;
        stages.push(Stage { t_start: t, t_end: Some(t + len), support, mixture: beta.clone() });
        for (qi, bi) in q.iter_mut().zip(&beta) {
            *qi += len * bi;
        }
        t += len;
        for j in entrants {
            in_set[j] = true;
        }
    }
    StagePath::from_parts(p.clone(), stages)
}

/// Mixture proportional to the transformed weights on `support`. Zero
/// weights (the weakly dominant case) stay at zero attention.
fn stage_mixture(p: &Problem, support: &[usize]) -> Result<Vec<f64>> {
    let w = transformed_weights(p, support)?;
    let scale = w.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if w.iter().any(|&x| x < -1e-9 * scale) || scale <= 0.0 {
        return Err(Error::AssumptionViolated(format!(
            "negative transformed weight on support {support:?}: {:?}",
            w.as_slice()
        )));
    }
    let w: Vec<f64> = w.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = w.iter().sum();
    let mut beta = vec![0.0; p.dim()];
    for (&i, wi) in support.iter().zip(&w) {
        beta[i] = wi / total;
    }
    Ok(beta)
}

/// Length of the current stage and the sources that enter at its end.
///
/// `gap(s) = max_{j∉B} |γⱼ| − max_{i∈B} |γᵢ|` along `q + s·β`; its first
/// zero is bracketed by doubling and refined by bisection.
fn next_switch(p: &Problem, q: &[f64], beta: &[f64], in_set: &[bool], t: f64) -> Result<(f64, Vec<usize>)> {
    let k = p.dim();
    let gaps = |s: f64| -> Result<Vec<f64>> {
        let x: Vec<f64> = q.iter().zip(beta).map(|(qi, bi)| qi + s * bi).collect();
        let g = p.gamma(&x)?;
        let inside = (0..k).filter(|&i| in_set[i]).fold(0.0_f64, |m, i| m.max(g[i].abs()));
        Ok((0..k).map(|j| if in_set[j] { f64::NEG_INFINITY } else { g[j].abs() - inside }).collect())
    };
    let worst = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut lo = 0.0;
    let mut hi = 1e-3 * (1.0 + t);
    let mut at_hi = gaps(hi)?;
    while worst(&at_hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e15 * (1.0 + t) {
            return Err(Error::NoConvergence("switch time not bracketed".into()));
        }
        at_hi = gaps(hi)?;
    }
    while hi - lo > ROOT_TOL * (1.0 + t + hi) {
        let mid = 0.5 * (lo + hi);
        let v = gaps(mid)?;
        if worst(&v) >= 0.0 {
            hi = mid;
            at_hi = v;
        } else {
            lo = mid;
        }
    }
    let g_end = p.gamma(&q.iter().zip(beta).map(|(qi, bi)| qi + hi * bi).collect::<Vec<_>>())?;
    let gmax = g_end.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let entrants = (0..k)
        .filter(|&j| !in_set[j] && (at_hi[j] >= 0.0 || at_hi[j] >= -TIE_TOL * gmax))
        .collect();
    Ok((hi, entrants))
}
