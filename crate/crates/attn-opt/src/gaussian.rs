//! Posterior algebra for a Gaussian prior over K attributes observed
//! through independent diffusion sources.
//!
//! Attention `q` adds `diag(q)` to the prior precision, so every quantity
//! here is a function of the information matrix `Σ⁻¹ + diag(q)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{invalid, Error, Result};

/// Relative asymmetry above which an input matrix is rejected outright.
pub const ASYMMETRY_TOL: f64 = 1e-9;

/// Model primitive: prior covariance, payoff weights and prior mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    sigma: DMatrix<f64>,
    alpha: DVector<f64>,
    mu: DVector<f64>,
    sigma_inv: DMatrix<f64>,
}

/// Cumulative attention per source together with its total.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionVector {
    q: Vec<f64>,
}

/// Posterior covariance, mean, variance of the payoff state and the
/// covariance vector `γ = Cov(ω, θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    pub cov: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub state_variance: f64,
    pub gamma: DVector<f64>,
}

impl AttentionVector {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        check_attention(&q)?;
        Ok(Self { q })
    }

    pub fn zeros(k: usize) -> Self {
        Self { q: vec![0.0; k] }
    }

    pub fn budget(&self) -> f64 {
        self.q.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.q
    }
}

impl AsRef<[f64]> for AttentionVector {
    fn as_ref(&self) -> &[f64] {
        &self.q
    }
}

fn check_attention(q: &[f64]) -> Result<()> {
    if let Some(x) = q.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(invalid(format!("attention must be finite and non-negative, got {x}")));
    }
    Ok(())
}

/// Symmetrize `m` in place after checking that its asymmetry is small
/// relative to its largest entry.
pub(crate) fn symmetrize(m: &mut DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::WrongDimension(format!("matrix is {}x{}", n, m.ncols())));
    }
    let scale = m.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if (a - b).abs() > ASYMMETRY_TOL * scale {
                return Err(invalid(format!("matrix not symmetric at ({i},{j}): {a} vs {b}")));
            }
            let s = 0.5 * (a + b);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    Ok(())
}

fn cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or(Error::NonPd)
}

impl Problem {
    pub fn new(sigma: DMatrix<f64>, alpha: DVector<f64>, mu: Option<DVector<f64>>) -> Result<Self> {
        let k = alpha.len();
        if k < 2 {
            return Err(Error::WrongDimension(format!("need at least two sources, got {k}")));
        }
        if sigma.nrows() != k || sigma.ncols() != k {
            return Err(Error::WrongDimension(format!(
                "sigma is {}x{} but alpha has length {k}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if sigma.iter().chain(alpha.iter()).any(|x| !x.is_finite()) {
            return Err(invalid("non-finite entry in sigma or alpha"));
        }
        if alpha.iter().any(|&a| a <= 0.0) {
            return Err(invalid("payoff weights must be strictly positive"));
        }
        let mu = match mu {
            Some(m) if m.len() != k => {
                return Err(Error::WrongDimension(format!("mu has length {}, expected {k}", m.len())))
            }
            Some(m) if m.iter().any(|x| !x.is_finite()) => return Err(invalid("non-finite entry in mu")),
            Some(m) => m,
            None => DVector::zeros(k),
        };
        let mut sigma = sigma;
        symmetrize(&mut sigma)?;
        let mut sigma_inv = cholesky(sigma.clone())?.inverse();
        symmetrize(&mut sigma_inv)?;
        Ok(Self { sigma, alpha, mu, sigma_inv })
    }

    /// Build from row-major nested slices; convenient for literals and files.
    pub fn from_rows(rows: &[Vec<f64>], alpha: &[f64]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::WrongDimension("sigma must be square".into()));
        }
        let sigma = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
        Self::new(sigma, DVector::from_column_slice(alpha), None)
    }

    pub fn with_mean(mut self, mu: &[f64]) -> Result<Self> {
        if mu.len() != self.dim() {
            return Err(Error::WrongDimension("mu length".into()));
        }
        self.mu = DVector::from_column_slice(mu);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn sigma_inv(&self) -> &DMatrix<f64> {
        &self.sigma_inv
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    /// Prior variance of the payoff state, `α′Σα`.
    pub fn prior_variance(&self) -> f64 {
        self.alpha.dot(&(&self.sigma * &self.alpha))
    }

    /// Prior covariances `Σα` between the payoff state and each attribute.
    pub fn prior_cov(&self) -> DVector<f64> {
        &self.sigma * &self.alpha
    }

    fn check_q(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::WrongDimension(format!("attention has length {}, expected {}", q.len(), self.dim())));
        }
        check_attention(q)
    }

    fn information_factor(&self, q: &[f64]) -> Result<Cholesky<f64, Dyn>> {
        self.check_q(q)?;
        let mut m = self.sigma_inv.clone();
        for (i, qi) in q.iter().enumerate() {
            m[(i, i)] += qi;
        }
        cholesky(m)
    }

    /// `(Σ⁻¹ + diag q)⁻¹`.
    pub fn posterior_covariance(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let mut c = self.information_factor(q)?.inverse();
        symmetrize(&mut c)?;
        Ok(c)
    }

    /// `Σ − Σ(Σ + diag(1/q))⁻¹Σ`; only defined when every `qᵢ > 0`.
    pub fn posterior_covariance_dual(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        self.check_q(q)?;
        if q.iter().any(|&x| x <= 0.0) {
            return Err(Error::Domain("dual form needs strictly positive attention".into()));
        }
        let mut m = self.sigma.clone();
        for (i, qi) in q.iter().enumerate() {
            m[(i, i)] += 1.0 / qi;
        }
        let s = cholesky(m)?.solve(&self.sigma);
        let mut c = &self.sigma - &self.sigma * s;
        symmetrize(&mut c)?;
        Ok(c)
    }

    /// `γ(q) = (Σ⁻¹ + diag q)⁻¹ α`.
    pub fn gamma(&self, q: &[f64]) -> Result<DVector<f64>> {
        Ok(self.information_factor(q)?.solve(&self.alpha))
    }

    /// `V(q) = α′(Σ⁻¹ + diag q)⁻¹α`.
    pub fn posterior_variance(&self, q: &[f64]) -> Result<f64> {
        Ok(self.alpha.dot(&self.gamma(q)?))
    }

    /// Variance together with `γ`, sharing one factorization.
    pub fn variance_and_gamma(&self, q: &[f64]) -> Result<(f64, DVector<f64>)> {
        let g = self.gamma(q)?;
        Ok((self.alpha.dot(&g), g))
    }

    /// Gradient `−γᵢ²` and Hessian `2 diag(γ) C diag(γ)` of `V`.
    pub fn grad_hessian(&self, q: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let c = self.posterior_covariance(q)?;
        let g = &c * &self.alpha;
        let grad = g.map(|x| -x * x);
        let k = self.dim();
        let h = DMatrix::from_fn(k, k, |i, j| 2.0 * g[i] * g[j] * c[(i, j)]);
        Ok((grad, h))
    }

    /// Posterior state after attention `q` with no observed signal yet,
    /// so the mean is still the prior mean.
    pub fn posterior_state(&self, q: &[f64]) -> Result<PosteriorState> {
        let cov = self.posterior_covariance(q)?;
        let gamma = &cov * &self.alpha;
        Ok(PosteriorState {
            state_variance: self.alpha.dot(&gamma),
            mean: self.mu.clone(),
            gamma,
            cov,
        })
    }

    pub fn prior_state(&self) -> PosteriorState {
        PosteriorState {
            cov: self.sigma.clone(),
            mean: self.mu.clone(),
            state_variance: self.prior_variance(),
            gamma: self.prior_cov(),
        }
    }

    /// Rebase on the posterior after attention `q`. The absorbing property
    /// of the sufficient conditions makes this the natural way to continue
    /// from a nonzero state.
    pub fn posterior_problem(&self, q: &[f64]) -> Result<Problem> {
        let cov = self.posterior_covariance(q)?;
        Problem::new(cov, self.alpha.clone(), Some(self.mu.clone()))
    }
}

/// Convenience for literals in tests and examples.
pub fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
    let k = rows.len();
    DMatrix::from_fn(k, rows[0].len(), |i, j| rows[i][j])
}
