//! Sufficient conditions for a uniformly optimal attention strategy.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::gaussian::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriState {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    K2Theorem,
    GeneralTheorem,
    Unsupported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub k2_cov_sum: TriState,
    pub perpetual_substitutes: bool,
    pub perpetual_complements: bool,
    pub diagonal_dominance: bool,
    pub strict_diagonal_dominance: bool,
    pub suff_2k3: bool,
    pub verdict: Verdict,
    /// Smallest uniform precision `q̄` with `Σ⁻¹ + q̄ I` diagonally dominant.
    pub eventual_dominance_qbar: f64,
}

impl AssumptionReport {
    pub fn supported(&self) -> bool {
        self.verdict != Verdict::Unsupported
    }

    pub fn any_general(&self) -> bool {
        self.perpetual_substitutes || self.perpetual_complements || self.diagonal_dominance
    }
}

fn scale_tol(m: &DMatrix<f64>) -> f64 {
    let d = (0..m.nrows()).fold(0.0_f64, |a, i| a.max(m[(i, i)].abs()));
    1e-12 * (1.0 + d)
}

/// Off-diagonal entries of `m` are all `≤ tol`.
fn offdiag_nonpositive(m: &DMatrix<f64>, tol: f64) -> bool {
    let k = m.nrows();
    (0..k).all(|i| (0..k).all(|j| i == j || m[(i, j)] <= tol))
}

/// Per-row slack `mᵢᵢ − Σⱼ≠ᵢ |mᵢⱼ|`.
fn dominance_slack(m: &DMatrix<f64>) -> Vec<f64> {
    let k = m.nrows();
    (0..k)
        .map(|i| m[(i, i)] - (0..k).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum::<f64>())
        .collect()
}

pub fn is_diagonally_dominant(m: &DMatrix<f64>) -> bool {
    let tol = scale_tol(m);
    dominance_slack(m).iter().all(|&s| s >= -tol)
}

pub fn perpetual_substitutes(p: &Problem) -> bool {
    let pi = p.sigma_inv();
    offdiag_nonpositive(pi, scale_tol(pi))
}

pub fn perpetual_complements(p: &Problem) -> bool {
    let tol = scale_tol(p.sigma());
    offdiag_nonpositive(p.sigma(), tol) && p.prior_cov().iter().all(|&c| c >= -tol)
}

pub fn diagonal_dominance(p: &Problem) -> bool {
    is_diagonally_dominant(p.sigma_inv())
}

pub fn classify(p: &Problem) -> AssumptionReport {
    let k = p.dim();
    let s = p.sigma();
    let pi = p.sigma_inv();
    let tol_s = scale_tol(s);
    let tol_i = scale_tol(pi);

    let k2_cov_sum = if k == 2 {
        if p.prior_cov().sum() >= -tol_s {
            TriState::Pass
        } else {
            TriState::Fail
        }
    } else {
        TriState::NotApplicable
    };

    let slack = dominance_slack(pi);
    let diagonal_dominance = slack.iter().all(|&x| x >= -tol_i);
    let strict_diagonal_dominance = slack.iter().all(|&x| x > tol_i);
    let factor = (2 * k - 3) as f64;
    let suff_2k3 = (0..k).all(|i| (0..k).all(|j| i == j || s[(i, i)] >= factor * s[(i, j)].abs()));
    let perpetual_substitutes = offdiag_nonpositive(pi, tol_i);
    let perpetual_complements = perpetual_complements(p);

    let verdict = if k2_cov_sum == TriState::Pass {
        Verdict::K2Theorem
    } else if perpetual_substitutes || perpetual_complements || diagonal_dominance {
        Verdict::GeneralTheorem
    } else {
        Verdict::Unsupported
    };

    AssumptionReport {
        k2_cov_sum,
        perpetual_substitutes,
        perpetual_complements,
        diagonal_dominance,
        strict_diagonal_dominance,
        suff_2k3,
        verdict,
        eventual_dominance_qbar: eventual_dominance_qbar(pi),
    }
}

/// Smallest `q̄ ≥ 0` making `m + q̄ I` diagonally dominant. Adding to the
/// diagonal shifts every row slack by the same amount, so the answer is the
/// largest deficit.
pub fn eventual_dominance_qbar(m: &DMatrix<f64>) -> f64 {
    dominance_slack(m).into_iter().fold(0.0_f64, |a, s| a.max(-s))
}
