//! Sweep configuration (TOML). Unknown keys are rejected.
//!
//! ```toml
//! images = ["shapes", "camera"]
//! kernels = ["gaussian", "box", "disk", "motion"]
//! noise_levels = [0.01, 0.02, 0.03]
//! solvers = ["admm", "fista"]
//! denoisers = ["gmm_mmse", "gaussian_linear"]
//! gamma = "auto"       # or "sigma2" (γ = σ²) or a number
//! sigma = "noise"      # or a number
//! max_iter = 200
//! seed = 7
//!
//! [[prior.components]]
//! weight = 0.5
//! mean = [0.25]
//! variance = 0.01      # or `diag = [...]` / `full = [[...]]`
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{PnpError, Result};
use crate::prior::{Component, Covariance, GmmPrior};

pub const SOLVERS: [&str; 2] = ["admm", "fista"];
pub const DENOISERS: [&str; 3] = ["gmm_mmse", "gaussian_linear", "identity"];

/// Default benchmark prior: per-pixel intensities cluster at 0.25 and 0.75.
pub const DEFAULT_MODES: [f64; 2] = [0.25, 0.75];
pub const DEFAULT_MODE_VARIANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaPolicy {
    /// `admissible_step(M̂)` with `M̂` estimated at `γ_ref = σ²`.
    Auto,
    /// `γ = σ²`, the step at which `h_mmse` is the noise-matched regularizer.
    Sigma2,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaPolicy {
    /// Denoiser strength equal to the measurement noise level.
    Noise,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub images: Vec<String>,
    pub kernels: Vec<String>,
    pub noise_levels: Vec<f64>,
    pub solvers: Vec<String>,
    pub denoisers: Vec<String>,
    pub gamma: GammaPolicy,
    pub sigma: SigmaPolicy,
    /// Data-term weight; `None` uses the noise variance.
    pub lambda: Option<f64>,
    /// PnP-FISTA step; `None` uses `λ`.
    pub fista_step: Option<f64>,
    pub max_iter: usize,
    pub stop_tol: f64,
    pub seed: u64,
    /// Per-pixel prior of the `gmm_mmse` denoiser; `gaussian_linear` uses
    /// its moment-matched single Gaussian.
    pub prior: Vec<Component>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOr {
    Num(f64),
    Word(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComponent {
    weight: f64,
    mean: Vec<f64>,
    variance: Option<f64>,
    diag: Option<Vec<f64>>,
    full: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrior {
    components: Vec<RawComponent>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    images: Vec<String>,
    kernels: Vec<String>,
    noise_levels: Vec<f64>,
    solvers: Vec<String>,
    denoisers: Vec<String>,
    gamma: Option<NumOr>,
    sigma: Option<NumOr>,
    lambda: Option<f64>,
    fista_step: Option<f64>,
    max_iter: Option<usize>,
    stop_tol: Option<f64>,
    seed: Option<u64>,
    prior: Option<RawPrior>,
}

fn bad(msg: impl Into<String>) -> PnpError {
    PnpError::Config(msg.into())
}

pub fn default_prior() -> Vec<Component> {
    DEFAULT_MODES
        .iter()
        .map(|&m| Component {
            weight: 0.5,
            mean: vec![m],
            covariance: Covariance::Iso(DEFAULT_MODE_VARIANCE),
        })
        .collect()
}

fn positive(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(bad(format!("`{name}` must be > 0, got {x}"))),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        let gamma = match raw.gamma {
            None => GammaPolicy::Auto,
            Some(NumOr::Word(w)) if w == "auto" => GammaPolicy::Auto,
            Some(NumOr::Word(w)) if w == "sigma2" => GammaPolicy::Sigma2,
            Some(NumOr::Num(v)) => GammaPolicy::Fixed(v),
            Some(NumOr::Word(w)) => {
                return Err(bad(format!("`gamma` must be \"auto\", \"sigma2\" or a number, got \"{w}\"")))
            }
        };
        let sigma = match raw.sigma {
            None => SigmaPolicy::Noise,
            Some(NumOr::Word(w)) if w == "noise" => SigmaPolicy::Noise,
            Some(NumOr::Num(v)) => SigmaPolicy::Fixed(v),
            Some(NumOr::Word(w)) => return Err(bad(format!("`sigma` must be \"noise\" or a number, got \"{w}\""))),
        };
        let prior = match raw.prior {
            None => default_prior(),
            Some(p) => p
                .components
                .into_iter()
                .enumerate()
                .map(|(i, c)| {
                    let covariance = match (c.variance, c.diag, c.full) {
                        (Some(v), None, None) => Covariance::Iso(v),
                        (None, Some(d), None) => Covariance::Diag(d),
                        (None, None, Some(f)) => Covariance::Full(f),
                        _ => {
                            return Err(bad(format!(
                                "prior component {i}: give exactly one of `variance`, `diag`, `full`"
                            )))
                        }
                    };
                    Ok(Component { weight: c.weight, mean: c.mean, covariance })
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let cfg = ExperimentConfig {
            images: raw.images,
            kernels: raw.kernels,
            noise_levels: raw.noise_levels,
            solvers: raw.solvers,
            denoisers: raw.denoisers,
            gamma,
            sigma,
            lambda: raw.lambda,
            fista_step: raw.fista_step,
            max_iter: raw.max_iter.unwrap_or(200),
            stop_tol: raw.stop_tol.unwrap_or(0.0),
            seed: raw.seed.unwrap_or(0),
            prior,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Structural checks only; unreadable images and bad kernel specs are
    /// reported per cell at run time.
    pub fn validate(&self) -> Result<()> {
        for (name, len) in [
            ("images", self.images.len()),
            ("kernels", self.kernels.len()),
            ("noise_levels", self.noise_levels.len()),
            ("solvers", self.solvers.len()),
            ("denoisers", self.denoisers.len()),
        ] {
            if len == 0 {
                return Err(bad(format!("`{name}` must not be empty")));
            }
        }
        if let Some(v) = self.noise_levels.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(bad(format!("noise levels must be > 0, got {v}")));
        }
        for s in &self.solvers {
            if !SOLVERS.contains(&s.as_str()) {
                return Err(bad(format!("unknown solver `{s}` (expected one of {SOLVERS:?})")));
            }
        }
        for d in &self.denoisers {
            if !DENOISERS.contains(&d.as_str()) {
                return Err(bad(format!("unknown denoiser `{d}` (expected one of {DENOISERS:?})")));
            }
        }
        if let GammaPolicy::Fixed(g) = self.gamma {
            positive("gamma", Some(g))?;
        }
        if let SigmaPolicy::Fixed(s) = self.sigma {
            positive("sigma", Some(s))?;
        }
        positive("lambda", self.lambda)?;
        positive("fista_step", self.fista_step)?;
        if self.max_iter == 0 {
            return Err(bad("`max_iter` must be at least 1"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(bad("`stop_tol` must be ≥ 0"));
        }
        self.gmm_prior()?;
        Ok(())
    }

    pub fn gmm_prior(&self) -> Result<GmmPrior> {
        GmmPrior::new(self.prior.clone()).map_err(|e| bad(format!("prior: {e}")))
    }

    /// Single Gaussian with the mixture's mean and covariance.
    pub fn linear_prior(&self) -> Result<GmmPrior> {
        let p = self.gmm_prior()?;
        let d = p.dim();
        let mut mean = nalgebra::DVector::zeros(d);
        for (w, m) in p.weights().iter().zip(p.means()) {
            mean += m * *w;
        }
        let mut cov = nalgebra::DMatrix::zeros(d, d);
        for ((w, m), c) in p.weights().iter().zip(p.means()).zip(p.covariances()) {
            let dm = m - &mean;
            cov += (c + &dm * dm.transpose()) * *w;
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        GmmPrior::new(vec![Component {
            weight: 1.0,
            mean: mean.iter().copied().collect(),
            covariance: Covariance::Full((0..d).map(|i| cov.row(i).iter().copied().collect()).collect()),
        }])
    }

    pub fn sigma_for(&self, noise: f64) -> f64 {
        match self.sigma {
            SigmaPolicy::Noise => noise,
            SigmaPolicy::Fixed(s) => s,
        }
    }

    pub fn lambda_for(&self, noise: f64) -> f64 {
        self.lambda.unwrap_or(noise * noise)
    }
}
