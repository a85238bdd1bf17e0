//! Gaussian-mixture priors and their exact MMSE denoisers.
//!
//! Under `z = x + n`, `x ~ Σ w_i N(μ_i, Σ_i)`, `n ~ N(0, σ² I)` the noisy
//! marginal is `Σ w_i N(μ_i, Σ_i + σ² I)` and the posterior mean has the
//! closed form used by [`NoisyMixture::denoise`]. Responsibilities are
//! always formed in log space.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, PnpError, Result};

/// Minimum eigenvalue accepted for a component covariance.
pub const EPS_PD: f64 = 1e-10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Iso(f64),
    Diag(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl Covariance {
    fn to_matrix(&self, d: usize, component: usize) -> Result<DMatrix<f64>> {
        match self {
            Covariance::Iso(v) => Ok(DMatrix::from_diagonal_element(d, d, *v)),
            Covariance::Diag(v) => {
                if v.len() != d {
                    return Err(invalid(
                        "covariance",
                        format!("component {component}: diag has {} entries, dim is {d}", v.len()),
                    ));
                }
                Ok(DMatrix::from_diagonal(&DVector::from_column_slice(v)))
            }
            Covariance::Full(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(invalid(
                        "covariance",
                        format!("component {component}: full matrix must be {d}x{d}"),
                    ));
                }
                Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Covariance,
}

/// Mixture prior `p_x`. Immutable once built; construction enforces
/// positive weights summing to one and positive-definite covariances.
#[derive(Debug, Clone)]
pub struct GmmPrior {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
}

impl GmmPrior {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| invalid("prior", "needs at least one component"))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(invalid("prior", "dimension must be positive"));
        }
        let mut weights = Vec::new();
        let mut means = Vec::new();
        let mut covariances = Vec::new();
        for (i, c) in components.iter().enumerate() {
            if !(c.weight > 0.0) || !c.weight.is_finite() {
                return Err(invalid("weight", format!("component {i}: must be positive, got {}", c.weight)));
            }
            if c.mean.len() != dim {
                return Err(invalid("mean", format!("component {i}: dim {} != {dim}", c.mean.len())));
            }
            if c.mean.iter().any(|v| !v.is_finite()) {
                return Err(PnpError::NonFinite { what: format!("mean of component {i}") });
            }
            let cov = c.covariance.to_matrix(dim, i)?;
            if cov.iter().any(|v| !v.is_finite()) {
                return Err(PnpError::NonFinite { what: format!("covariance of component {i}") });
            }
            if (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
                return Err(invalid("covariance", format!("component {i}: not symmetric")));
            }
            let min_eig = cov.clone().symmetric_eigenvalues().min();
            if min_eig < EPS_PD {
                return Err(PnpError::NotPositiveDefinite { component: i, min_eig });
            }
            weights.push(c.weight);
            means.push(DVector::from_column_slice(&c.mean));
            covariances.push(cov);
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("weights", format!("must sum to 1 within 1e-12, sum is {total}")));
        }
        Ok(GmmPrior { dim, weights, means, covariances })
    }

    /// Single Gaussian `N(mean·1, var·I)` in `dim` dimensions.
    pub fn gaussian(dim: usize, mean: f64, var: f64) -> Result<Self> {
        GmmPrior::new(vec![Component {
            weight: 1.0,
            mean: vec![mean; dim],
            covariance: Covariance::Iso(var),
        }])
    }

    /// Equal-weight two-component mixture at `±mean` with isotropic
    /// component variance `var`.
    pub fn symmetric_bimodal(mean: &[f64], var: f64) -> Result<Self> {
        GmmPrior::new(vec![
            Component {
                weight: 0.5,
                mean: mean.iter().map(|v| -v).collect(),
                covariance: Covariance::Iso(var),
            },
            Component {
                weight: 0.5,
                mean: mean.to_vec(),
                covariance: Covariance::Iso(var),
            },
        ])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    /// Scale used to bound numerically meaningful preimages.
    pub(crate) fn extent(&self) -> f64 {
        let mean_norm = self.means.iter().map(|m| m.norm()).fold(0.0, f64::max);
        let spread = self
            .covariances
            .iter()
            .map(|c| c.clone().symmetric_eigenvalues().max().sqrt())
            .fold(0.0, f64::max);
        mean_norm + spread
    }

    /// Precomputes the noisy marginal at noise level `sigma`.
    pub fn at_noise(&self, sigma: f64) -> Result<NoisyMixture<'_>> {
        NoisyMixture::new(self, sigma)
    }

    /// Prior density `p_x(x)` (no noise).
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.num_components() {
            let chol = self.covariances[i]
                .clone()
                .cholesky()
                .ok_or(PnpError::NotPositiveDefinite { component: i, min_eig: 0.0 })?;
            let diff = DVector::from_column_slice(x) - &self.means[i];
            let sol = chol.solve(&diff);
            let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let ll = -0.5 * (diff.dot(&sol) + logdet + self.dim as f64 * LN_2PI);
            total += self.weights[i] * ll.exp();
        }
        Ok(total)
    }
}

#[derive(Debug, Clone)]
struct NoisyComponent {
    log_norm: f64,
    /// `(Σ_i + σ² I)⁻¹`
    precision: DMatrix<f64>,
    /// `Σ_i (Σ_i + σ² I)⁻¹`
    gain: DMatrix<f64>,
}

/// The noisy marginal `p_z` of a prior at a fixed `σ`, with everything that
/// depends only on `(prior, σ)` factored once.
#[derive(Debug, Clone)]
pub struct NoisyMixture<'a> {
    prior: &'a GmmPrior,
    sigma: f64,
    comps: Vec<NoisyComponent>,
}

/// Per-point quantities shared by the value, score, denoiser and Jacobian.
struct Responsibilities {
    log_z: f64,
    resp: Vec<f64>,
    /// `P_i (z − μ_i)` per component
    whitened: Vec<DVector<f64>>,
}

impl<'a> NoisyMixture<'a> {
    pub fn new(prior: &'a GmmPrior, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(invalid("sigma", format!("must be > 0, got {sigma}")));
        }
        let d = prior.dim;
        let s2 = sigma * sigma;
        let mut comps = Vec::with_capacity(prior.num_components());
        for (i, cov) in prior.covariances.iter().enumerate() {
            let noisy = cov + DMatrix::from_diagonal_element(d, d, s2);
            let chol = noisy
                .clone()
                .cholesky()
                .ok_or(PnpError::NotPositiveDefinite { component: i, min_eig: f64::NAN })?;
            let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let precision = chol.inverse();
            let gain = cov * &precision;
            comps.push(NoisyComponent {
                log_norm: prior.weights[i].ln() - 0.5 * (logdet + d as f64 * LN_2PI),
                precision,
                gain,
            });
        }
        Ok(NoisyMixture { prior, sigma, comps })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn prior(&self) -> &GmmPrior {
        self.prior
    }

    pub fn dim(&self) -> usize {
        self.prior.dim
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.prior.dim {
            return Err(PnpError::ShapeMismatch {
                expected: format!("vector of dim {}", self.prior.dim),
                got: format!("dim {}", z.len()),
            });
        }
        Ok(())
    }

    fn responsibilities(&self, z: &[f64]) -> Result<Responsibilities> {
        self.check_dim(z)?;
        let z = DVector::from_column_slice(z);
        let mut logs = Vec::with_capacity(self.comps.len());
        let mut whitened = Vec::with_capacity(self.comps.len());
        for (c, mu) in self.comps.iter().zip(&self.prior.means) {
            let diff = &z - mu;
            let r = &c.precision * &diff;
            logs.push(c.log_norm - 0.5 * diff.dot(&r));
            whitened.push(r);
        }
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        let log_z = max + sum.ln();
        let resp = logs.iter().map(|l| (l - log_z).exp()).collect();
        Ok(Responsibilities { log_z, resp, whitened })
    }

    /// `h_σ(z) = −log p_z(z)`.
    pub fn neg_log_density(&self, z: &[f64]) -> Result<f64> {
        Ok(-self.responsibilities(z)?.log_z)
    }

    /// Analytic score term `∇h_σ(z) = Σ ŵ_i (Σ_i + σ²I)⁻¹ (z − μ_i)`.
    pub fn grad_neg_log_density(&self, z: &[f64]) -> Result<Vec<f64>> {
        let r = self.responsibilities(z)?;
        let mut g = DVector::zeros(self.dim());
        for (w, wh) in r.resp.iter().zip(&r.whitened) {
            g.axpy(*w, wh, 1.0);
        }
        Ok(g.as_slice().to_vec())
    }

    fn component_means(&self, z: &DVector<f64>) -> Vec<DVector<f64>> {
        self.comps
            .iter()
            .zip(&self.prior.means)
            .map(|(c, mu)| mu + &c.gain * (z - mu))
            .collect()
    }

    /// Posterior mean `E[x | z]`.
    pub fn denoise(&self, z: &[f64]) -> Result<Vec<f64>> {
        let r = self.responsibilities(z)?;
        let zv = DVector::from_column_slice(z);
        let mut out = DVector::zeros(self.dim());
        for (w, m) in r.resp.iter().zip(self.component_means(&zv)) {
            out.axpy(*w, &m, 1.0);
        }
        Ok(out.as_slice().to_vec())
    }

    /// Denoised point and its Jacobian `∂D/∂z` from one responsibility pass.
    pub fn denoise_with_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let r = self.responsibilities(z)?;
        let d = self.dim();
        let zv = DVector::from_column_slice(z);
        let means = self.component_means(&zv);
        let mut out = DVector::zeros(d);
        let mut score = DVector::zeros(d);
        for i in 0..self.comps.len() {
            out.axpy(r.resp[i], &means[i], 1.0);
            score.axpy(r.resp[i], &r.whitened[i], 1.0);
        }
        // Σ ŵ_i A_i + D ḡᵀ − Σ ŵ_i m_i r_iᵀ
        let mut jac = &out * score.transpose();
        for i in 0..self.comps.len() {
            jac += &self.comps[i].gain * r.resp[i];
            jac -= (&means[i] * r.whitened[i].transpose()) * r.resp[i];
        }
        Ok((out.as_slice().to_vec(), jac))
    }

    pub fn jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.denoise_with_jacobian(z)?.1)
    }
}

/// `h_σ(z) = −log Σ_i w_i N(z; μ_i, Σ_i + σ² I)`.
pub fn gmm_h_sigma(prior: &GmmPrior, z: &[f64], sigma: f64) -> Result<f64> {
    prior.at_noise(sigma)?.neg_log_density(z)
}

/// Exact MMSE denoiser `E[x | z]` under `z = x + N(0, σ² I)`.
pub fn mmse_denoise(prior: &GmmPrior, z: &[f64], sigma: f64) -> Result<Vec<f64>> {
    prior.at_noise(sigma)?.denoise(z)
}

/// Exact Jacobian of [`mmse_denoise`] with respect to `z`.
pub fn mmse_jacobian(prior: &GmmPrior, z: &[f64], sigma: f64) -> Result<DMatrix<f64>> {
    prior.at_noise(sigma)?.jacobian(z)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().max()
}
