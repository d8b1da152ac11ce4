//! Two news sources competing for a reader's attention.
//!
//! Source `i` reports `ω ± φᵢb` with noise of standard deviation `ζᵢ`; the
//! reader minimizes the posterior variance of `ω`. Rescaling each signal by
//! `1/ζᵢ` turns this into the two-source attention problem with weights
//! `α = (ζ₁φ₂, ζ₂φ₁)/(φ₁ + φ₂)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::gaussian::Problem;
use crate::stages::k2_closed_form;

/// Smallest `λκ²` for which the closed-form profile is known to be an
/// equilibrium.
pub const EXISTENCE_THRESHOLD: f64 = 1.6;
/// Smallest `λκ²` compatible with any pure-strategy equilibrium.
pub const NECESSARY_THRESHOLD: f64 = 9.0 / 16.0;
/// Largest deviation gain accepted as numerical noise.
pub const GAIN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewsGameParams {
    pub sigma_omega: f64,
    pub sigma_b: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub r: f64,
}

impl NewsGameParams {
    pub fn new(sigma_omega: f64, sigma_b: f64, lambda: f64, kappa: f64, r: f64) -> Result<Self> {
        let g = Self { sigma_omega, sigma_b, lambda, kappa, r };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !(pos(self.sigma_omega) && pos(self.sigma_b) && pos(self.kappa) && pos(self.r)) {
            return Err(invalid("sigma_omega, sigma_b, kappa and r must be positive"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(invalid("lambda must be non-negative"));
        }
        Ok(())
    }

    /// `λκ²`, the index governing equilibrium existence.
    pub fn incentive_index(&self) -> f64 {
        self.lambda * self.kappa * self.kappa
    }

    /// Equivalent game with unit bias variance; noise levels scale by `1/σ_b`.
    pub fn normalized(&self) -> (Self, f64) {
        let s = self.sigma_b;
        (Self { sigma_omega: self.sigma_omega / s, sigma_b: 1.0, ..*self }, 1.0 / s)
    }
}

/// A strategy profile `(φ₁, ζ₁; φ₂, ζ₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Profile {
    pub phi: [f64; 2],
    pub zeta: [f64; 2],
}

impl Profile {
    pub fn new(phi: [f64; 2], zeta: [f64; 2]) -> Result<Self> {
        if phi.iter().chain(&zeta).any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(invalid("bias intensities and noise levels must be positive"));
        }
        Ok(Self { phi, zeta })
    }

    pub fn symmetric(phi: f64, zeta: f64) -> Result<Self> {
        Self::new([phi, phi], [zeta, zeta])
    }

    fn swapped(&self) -> Self {
        Self { phi: [self.phi[1], self.phi[0]], zeta: [self.zeta[1], self.zeta[0]] }
    }
}

/// Prior over `θᵢ = (ω ± φᵢb)/ζᵢ` and the weights expressing `ω` in them.
pub fn transform_to_core(g: &NewsGameParams, s: &Profile) -> Result<Problem> {
    g.validate()?;
    let (w2, b2) = (g.sigma_omega.powi(2), g.sigma_b.powi(2));
    let [p1, p2] = s.phi;
    let [z1, z2] = s.zeta;
    let off = (w2 - p1 * p2 * b2) / (z1 * z2);
    let sigma = DMatrix::from_row_slice(2, 2, &[(w2 + p1 * p1 * b2) / (z1 * z1), off, off, (w2 + p2 * p2 * b2) / (z2 * z2)]);
    let alpha = DVector::from_column_slice(&[z1 * p2 / (p1 + p2), z2 * p1 / (p1 + p2)]);
    Problem::new(sigma, alpha, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReaderAttention {
    /// Length of the stage devoted to the less noisy source.
    pub t1_star: f64,
    /// Source observed during that stage; `None` when the stage is empty.
    pub first: Option<usize>,
    /// Long-run attention shares.
    pub shares: [f64; 2],
}

pub fn reader_attention(g: &NewsGameParams, s: &Profile) -> ReaderAttention {
    let [p1, p2] = s.phi;
    let [z1, z2] = s.zeta;
    let total = z1 * p2 + z2 * p1;
    let shares = [z1 * p2 / total, z2 * p1 / total];
    let b2 = g.sigma_b.powi(2);
    let (t1_star, first) = if z1 < z2 {
        (z1 * (z2 - z1) / (b2 * p1 * (p1 + p2)), Some(0))
    } else if z2 < z1 {
        (z2 * (z1 - z2) / (b2 * p2 * (p1 + p2)), Some(1))
    } else {
        (0.0, None)
    };
    ReaderAttention { t1_star, first, shares }
}

/// The same quantities read off the two-source stage path.
pub fn reader_attention_via_solver(g: &NewsGameParams, s: &Profile) -> Result<ReaderAttention> {
    let path = k2_closed_form(&transform_to_core(g, s)?)?;
    let stages = path.stages();
    let last = stages.last().expect("stage path is never empty");
    let (t1_star, first) = match stages.len() {
        1 => (0.0, None),
        _ => (stages[0].end(), Some(stages[0].support[0])),
    };
    Ok(ReaderAttention { t1_star, first, shares: [last.mixture[0], last.mixture[1]] })
}

/// Discounted attention shares net of the bias cost.
pub fn source_payoffs(g: &NewsGameParams, s: &Profile) -> [f64; 2] {
    let a = reader_attention(g, s);
    let cost = |i: usize| g.lambda * (g.kappa - s.phi[i]).powi(2);
    let late = |j: usize| (-g.r * a.t1_star).exp() * a.shares[j];
    match a.first {
        Some(i) => {
            let j = 1 - i;
            let mut u = [0.0; 2];
            u[i] = 1.0 - late(j) - cost(i);
            u[j] = late(j) - cost(j);
            u
        }
        None => [a.shares[0] - cost(0), a.shares[1] - cost(1)],
    }
}

/// Payoffs computed in the unit-bias-variance game.
pub fn source_payoffs_normalized(g: &NewsGameParams, s: &Profile) -> [f64; 2] {
    let (h, scale) = g.normalized();
    let z = Profile { zeta: [s.zeta[0] * scale, s.zeta[1] * scale], ..*s };
    source_payoffs(&h, &z)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewsOutcome {
    pub phi_star: f64,
    pub zeta_star: f64,
    pub t1_star: f64,
    pub shares: [f64; 2],
    pub payoffs: [f64; 2],
    /// Whether `λκ²` reaches the level that guarantees this profile is an
    /// equilibrium. The values are reported either way.
    pub existence_guaranteed: bool,
}

/// Closed-form symmetric profile and its outcome.
pub fn equilibrium(g: &NewsGameParams) -> Result<NewsOutcome> {
    g.validate()?;
    let disc = g.kappa * g.kappa - 1.0 / (2.0 * g.lambda);
    if !(disc >= 0.0) {
        return Err(Error::Domain(format!("λκ² = {} is below 1/2, the formula has no real value", g.incentive_index())));
    }
    let phi_star = 0.5 * (g.kappa + disc.sqrt());
    let zeta_star = g.sigma_b * phi_star / g.r.sqrt();
    let s = Profile::symmetric(phi_star, zeta_star)?;
    let a = reader_attention(g, &s);
    Ok(NewsOutcome {
        phi_star,
        zeta_star,
        t1_star: a.t1_star,
        shares: a.shares,
        payoffs: source_payoffs(g, &s),
        existence_guaranteed: g.incentive_index() >= EXISTENCE_THRESHOLD,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationGrid {
    pub phis: Vec<f64>,
    pub zetas: Vec<f64>,
}

impl DeviationGrid {
    /// `n` bias levels on `(0, 3κ]` and `n` noise levels spaced
    /// logarithmically on `[3ζ*·10⁻³, 3ζ*]`.
    pub fn standard(g: &NewsGameParams, zeta_star: f64, n: usize) -> Self {
        let phis = (1..=n).map(|k| 3.0 * g.kappa * k as f64 / n as f64).collect();
        let top = 3.0 * zeta_star;
        let zetas = (1..=n).map(|k| top * 10f64.powf(-3.0 * (n - k) as f64 / (n - 1).max(1) as f64)).collect();
        Self { phis, zetas }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Judgement {
    Certified,
    Refuted,
    /// `λκ²` lies below the sufficient level; the gain is reported only.
    NotJudged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    /// Largest payoff gain from a unilateral deviation, over both sources.
    pub max_gain: f64,
    pub best_deviation: Profile,
    pub deviator: usize,
    pub judgement: Judgement,
}

/// Best unilateral deviation from the symmetric profile `(φ, ζ)` over a grid.
/// Rows are evaluated in parallel and reduced in grid order.
pub fn verify_profile(g: &NewsGameParams, phi: f64, zeta: f64, grid: &DeviationGrid) -> Result<DeviationReport> {
    let eq = Profile::symmetric(phi, zeta)?;
    let base = source_payoffs(g, &eq);
    let rows: Vec<(f64, Profile, usize)> = grid
        .phis
        .par_iter()
        .map(|&p| {
            let mut best = (f64::NEG_INFINITY, eq, 0);
            for &z in &grid.zetas {
                let dev = Profile { phi: [p, phi], zeta: [z, zeta] };
                let u1 = source_payoffs(g, &dev)[0] - base[0];
                if u1 > best.0 {
                    best = (u1, dev, 0);
                }
                let dev2 = dev.swapped();
                let u2 = source_payoffs(g, &dev2)[1] - base[1];
                if u2 > best.0 {
                    best = (u2, dev2, 1);
                }
            }
            best
        })
        .collect();
    let (max_gain, best_deviation, deviator) =
        rows.into_iter().fold((f64::NEG_INFINITY, eq, 0), |a, b| if b.0 > a.0 { b } else { a });
    let judgement = if g.incentive_index() < EXISTENCE_THRESHOLD {
        Judgement::NotJudged
    } else if max_gain <= GAIN_TOL {
        Judgement::Certified
    } else {
        Judgement::Refuted
    };
    Ok(DeviationReport { max_gain, best_deviation, deviator, judgement })
}

/// Grid certificate for the closed-form equilibrium.
pub fn verify_equilibrium(g: &NewsGameParams, n: usize) -> Result<DeviationReport> {
    let eq = equilibrium(g)?;
    verify_profile(g, eq.phi_star, eq.zeta_star, &DeviationGrid::standard(g, eq.zeta_star, n))
}
