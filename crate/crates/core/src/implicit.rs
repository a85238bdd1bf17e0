//! The implicit regularizer of an exact MMSE denoiser.
//!
//! For `x = D_σ(z)` the regularizer is
//!
//! ```text
//! h_mmse(x) = (1/γ) · ( −½‖x − z‖² + σ² h_σ(z) ),   z = D_σ⁻¹(x)
//! ```
//!
//! and `+∞` off the image of `D_σ`. Its gradient is `(z − x)/γ`, which makes
//! `prox_{γ h_mmse} = D_σ`. Note that `γ·h_mmse` does not depend on `γ`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{invalid, PnpError, Result};
use crate::noise::seeded_rng;
use crate::prior::{GmmPrior, NoisyMixture};

pub const NEWTON_MAX_ITER: usize = 100;
pub const INVERSE_TOL: f64 = 1e-10;
pub const HESSIAN_FD_STEP: f64 = 1e-5;
pub const LIPSCHITZ_SAFETY: f64 = 1.1;

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;
const PREIMAGE_RADIUS_FACTOR: f64 = 1e4;

/// Inverts `D_σ` by damped Newton with Armijo backtracking on
/// `‖D(z) − x‖²`, starting from `z₀ = x`.
pub fn invert(mix: &NoisyMixture<'_>, x: &[f64]) -> Result<Vec<f64>> {
    let d = mix.dim();
    if x.len() != d {
        return Err(PnpError::ShapeMismatch {
            expected: format!("vector of dim {d}"),
            got: format!("dim {}", x.len()),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(PnpError::NotInImage("non-finite target".into()));
    }
    let radius = PREIMAGE_RADIUS_FACTOR
        * (1.0 + mix.prior().extent() + mix.sigma() * (d as f64).sqrt());
    let resid = |dz: &[f64]| -> f64 { dz.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum() };
    let x_scale = 1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt();

    let mut z = x.to_vec();
    let (mut dz, mut jac) = mix.denoise_with_jacobian(&z)?;
    let mut r2 = resid(&dz);
    for _ in 0..NEWTON_MAX_ITER {
        if r2.sqrt() <= 1e-15 * x_scale {
            break;
        }
        let r = nalgebra::DVector::from_iterator(d, dz.iter().zip(x).map(|(a, b)| a - b));
        let Some(step) = jac.clone().lu().solve(&r) else {
            return Err(PnpError::NotInImage("singular denoiser Jacobian".into()));
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let (tdz, tjac) = mix.denoise_with_jacobian(&trial)?;
            let tr2 = resid(&tdz);
            if tr2 <= (1.0 - 2.0 * ARMIJO_C * t) * r2 {
                accepted = Some((trial, tdz, tjac, tr2));
                break;
            }
            t *= 0.5;
        }
        let Some((nz, ndz, njac, nr2)) = accepted else {
            // No further decrease possible at working precision.
            break;
        };
        z = nz;
        dz = ndz;
        jac = njac;
        r2 = nr2;
        if z.iter().map(|v| v * v).sum::<f64>().sqrt() > radius {
            return Err(PnpError::NotInImage(format!(
                "preimage norm exceeds {radius:.3e}"
            )));
        }
    }
    let r = r2.sqrt();
    if r <= INVERSE_TOL {
        Ok(z)
    } else {
        Err(PnpError::NotInImage(format!(
            "Newton stopped with residual {r:.3e} after at most {NEWTON_MAX_ITER} steps"
        )))
    }
}

/// `h_mmse` and its gradient for a fixed `(prior, σ, γ)`.
#[derive(Debug, Clone)]
pub struct ImplicitRegularizer<'a> {
    mix: NoisyMixture<'a>,
    gamma: f64,
}

impl<'a> ImplicitRegularizer<'a> {
    pub fn new(prior: &'a GmmPrior, sigma: f64, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(invalid("gamma", format!("must be > 0, got {gamma}")));
        }
        Ok(ImplicitRegularizer {
            mix: prior.at_noise(sigma)?,
            gamma,
        })
    }

    pub fn mixture(&self) -> &NoisyMixture<'a> {
        &self.mix
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        invert(&self.mix, x)
    }

    /// Value at `x` given its preimage `z`.
    fn value_at(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        let dist2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
        let s2 = self.mix.sigma() * self.mix.sigma();
        Ok((-0.5 * dist2 + s2 * self.mix.neg_log_density(z)?) / self.gamma)
    }

    /// `h_mmse(x)`, or `f64::INFINITY` when `x` cannot be inverted.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self.inverse(x) {
            Ok(z) => self.value_at(x, &z).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.inverse(x)?;
        Ok(z.iter().zip(x).map(|(zi, xi)| (zi - xi) / self.gamma).collect())
    }

    /// Value and gradient from a single inversion.
    pub fn eval_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let z = self.inverse(x)?;
        let v = self.value_at(x, &z)?;
        Ok((v, z.iter().zip(x).map(|(zi, xi)| (zi - xi) / self.gamma).collect()))
    }

    /// Central-difference Hessian of `h_mmse` from the analytic gradient,
    /// symmetrised.
    pub fn hessian_fd(&self, x: &[f64], step: f64) -> Result<DMatrix<f64>> {
        let d = x.len();
        let mut h = DMatrix::zeros(d, d);
        let mut xp = x.to_vec();
        for j in 0..d {
            xp[j] = x[j] + step;
            let gp = self.grad(&xp)?;
            xp[j] = x[j] - step;
            let gm = self.grad(&xp)?;
            xp[j] = x[j];
            for i in 0..d {
                h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        Ok((&h + h.transpose()) * 0.5)
    }
}

/// `z` with `D_σ(z) = x`, or [`PnpError::NotInImage`].
pub fn denoiser_inverse(prior: &GmmPrior, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
    invert(&prior.at_noise(sigma)?, x)
}

/// `h_mmse(x)`; `f64::INFINITY` off the (numerical) image of `D_σ`.
pub fn hmmse_eval(prior: &GmmPrior, x: &[f64], sigma: f64, gamma: f64) -> Result<f64> {
    Ok(ImplicitRegularizer::new(prior, sigma, gamma)?.eval(x))
}

/// `∇h_mmse(x) = (D_σ⁻¹(x) − x)/γ`.
pub fn hmmse_grad(prior: &GmmPrior, x: &[f64], sigma: f64, gamma: f64) -> Result<Vec<f64>> {
    ImplicitRegularizer::new(prior, sigma, gamma)?.grad(x)
}

/// Axis-aligned sampling region.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SampleBox {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        SampleBox {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }
}

/// Sampled Lipschitz constant of `∇h_mmse`: the largest Hessian spectral
/// norm over `n_samples` uniform draws from `sample_box` that invert,
/// times [`LIPSCHITZ_SAFETY`]. Draw `i` is the same for every `n_samples`,
/// so more samples never lower the estimate.
pub fn estimate_lipschitz_m(
    prior: &GmmPrior,
    sigma: f64,
    gamma: f64,
    sample_box: &SampleBox,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if n_samples < 2 {
        return Err(invalid("n_samples", "must be at least 2"));
    }
    let d = prior.dim();
    if sample_box.lo.len() != d || sample_box.hi.len() != d {
        return Err(invalid("sample_box", format!("must have dimension {d}")));
    }
    let reg = ImplicitRegularizer::new(prior, sigma, gamma)?;
    let mut rng = seeded_rng(seed, 0);
    let mut best: Option<f64> = None;
    for _ in 0..n_samples {
        let x: Vec<f64> = (0..d)
            .map(|i| {
                let u: f64 = rng.random();
                sample_box.lo[i] + u * (sample_box.hi[i] - sample_box.lo[i])
            })
            .collect();
        let Ok(h) = reg.hessian_fd(&x, HESSIAN_FD_STEP) else {
            continue;
        };
        let norm = h
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        best = Some(best.map_or(norm, |b| b.max(norm)));
    }
    best.map(|b| LIPSCHITZ_SAFETY * b)
        .ok_or(PnpError::NoSampleInImage)
}

/// `‖D_σ(z) − (z − σ² ∇h_σ(z))‖₂`, the Tweedie residual.
pub fn score_identity_gap(prior: &GmmPrior, z: &[f64], sigma: f64) -> Result<f64> {
    let mix = prior.at_noise(sigma)?;
    let d = mix.denoise(z)?;
    let g = mix.grad_neg_log_density(z)?;
    let s2 = sigma * sigma;
    Ok(d.iter()
        .zip(z)
        .zip(&g)
        .map(|((di, zi), gi)| {
            let t = di - (zi - s2 * gi);
            t * t
        })
        .sum::<f64>()
        .sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::mmse_denoise;

    #[test]
    fn inverse_of_linear_shrinkage_doubles() {
        let p = GmmPrior::gaussian(1, 0.0, 1.0).unwrap();
        for x in [-2.0, 0.0, 0.3, 5.0] {
            let z = denoiser_inverse(&p, &[x], 1.0).unwrap();
            assert!((z[0] - 2.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_regularizer_is_quadratic() {
        let p = GmmPrior::gaussian(1, 0.0, 1.0).unwrap();
        let h1 = hmmse_eval(&p, &[1.0], 1.0, 1.0).unwrap();
        let h0 = hmmse_eval(&p, &[0.0], 1.0, 1.0).unwrap();
        assert!((h1 - h0 - 0.5).abs() < 1e-12);
        let g = hmmse_grad(&p, &[0.7], 1.0, 1.0).unwrap();
        assert!((g[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_at_symmetry_point() {
        let p = GmmPrior::symmetric_bimodal(&[1.0, 0.5], 0.3).unwrap();
        let g = hmmse_grad(&p, &[0.0, 0.0], 0.4, 0.16).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn far_outside_compact_image_fails() {
        let p = GmmPrior::symmetric_bimodal(&[1.0], 1e-6).unwrap();
        let err = denoiser_inverse(&p, &[10.0], 1.0).unwrap_err();
        assert!(matches!(err, PnpError::NotInImage(_)));
        assert_eq!(hmmse_eval(&p, &[10.0], 1.0, 1.0).unwrap(), f64::INFINITY);
        assert!(hmmse_grad(&p, &[10.0], 1.0, 1.0).is_err());
        // inside the image the inverse still works
        let z = denoiser_inverse(&p, &[0.5], 1.0).unwrap();
        assert!((mmse_denoise(&p, &z, 1.0).unwrap()[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn lipschitz_of_gaussian_case() {
        let p = GmmPrior::gaussian(1, 0.0, 1.0).unwrap();
        let m = estimate_lipschitz_m(&p, 1.0, 1.0, &SampleBox::cube(1, -3.0, 3.0), 20, 5).unwrap();
        assert!((1.0..=1.1 + 1e-9).contains(&m), "{m}");
    }

    #[test]
    fn lipschitz_is_deterministic_and_monotone_in_samples() {
        let p = GmmPrior::symmetric_bimodal(&[0.6], 0.5).unwrap();
        let b = SampleBox::cube(1, -2.0, 2.0);
        let a = estimate_lipschitz_m(&p, 0.5, 0.25, &b, 16, 9).unwrap();
        let a2 = estimate_lipschitz_m(&p, 0.5, 0.25, &b, 16, 9).unwrap();
        assert_eq!(a.to_bits(), a2.to_bits());
        let mut prev = a;
        for n in [32, 64, 128] {
            let m = estimate_lipschitz_m(&p, 0.5, 0.25, &b, n, 9).unwrap();
            assert!(m >= prev);
            prev = m;
        }
        assert!(estimate_lipschitz_m(&p, 0.5, 0.25, &b, 1, 9).is_err());
    }

    #[test]
    fn tweedie_exact_for_single_gaussian() {
        let p = GmmPrior::gaussian(3, 0.2, 0.7).unwrap();
        let gap = score_identity_gap(&p, &[1.0, -2.0, 0.5], 0.3).unwrap();
        assert!(gap < 1e-15);
    }
}
