//! Denoisers pluggable into the PnP solvers.

use nalgebra::DMatrix;

use crate::error::{invalid, PnpError, Result};
use crate::prior::{GmmPrior, NoisyMixture};
use crate::signal::Signal;

/// `D_σ`: maps a signal to a signal of the same shape.
pub trait Denoiser: Send + Sync {
    fn denoise(&self, v: &Signal) -> Result<Signal>;

    /// `∂D/∂v` over the flattened signal, when available.
    fn jacobian(&self, _v: &Signal) -> Option<Result<DMatrix<f64>>> {
        None
    }

    /// True when `denoise` is the exact posterior mean of a known prior.
    fn is_exact_mmse(&self) -> bool {
        false
    }

    fn name(&self) -> &str;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn denoise(&self, v: &Signal) -> Result<Signal> {
        Ok(v.clone())
    }

    fn jacobian(&self, v: &Signal) -> Option<Result<DMatrix<f64>>> {
        Some(Ok(DMatrix::identity(v.len(), v.len())))
    }

    fn name(&self) -> &str {
        "identity"
    }
}

/// Exact MMSE denoiser of a mixture prior over the whole flattened signal.
#[derive(Debug, Clone)]
pub struct GmmDenoiser<'a> {
    mix: NoisyMixture<'a>,
}

impl<'a> GmmDenoiser<'a> {
    pub fn new(prior: &'a GmmPrior, sigma: f64) -> Result<Self> {
        Ok(GmmDenoiser {
            mix: prior.at_noise(sigma)?,
        })
    }

    pub fn mixture(&self) -> &NoisyMixture<'a> {
        &self.mix
    }
}

impl Denoiser for GmmDenoiser<'_> {
    fn denoise(&self, v: &Signal) -> Result<Signal> {
        Ok(Signal::from_raw(self.mix.denoise(v.data())?, v.shape()))
    }

    fn jacobian(&self, v: &Signal) -> Option<Result<DMatrix<f64>>> {
        Some(self.mix.jacobian(v.data()))
    }

    fn is_exact_mmse(&self) -> bool {
        true
    }

    fn name(&self) -> &str {
        "gmm_mmse"
    }
}

/// Exact MMSE denoiser of a product prior: the mixture acts independently
/// on each pixel's channel vector (prior dimension = channel count), or on
/// every scalar entry when the prior is one-dimensional.
#[derive(Debug, Clone)]
pub struct PixelwiseGmmDenoiser {
    prior: GmmPrior,
    sigma: f64,
    label: String,
}

impl PixelwiseGmmDenoiser {
    pub fn new(prior: GmmPrior, sigma: f64, label: impl Into<String>) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(invalid("sigma", format!("must be > 0, got {sigma}")));
        }
        Ok(PixelwiseGmmDenoiser {
            prior,
            sigma,
            label: label.into(),
        })
    }

    pub fn prior(&self) -> &GmmPrior {
        &self.prior
    }
}

impl Denoiser for PixelwiseGmmDenoiser {
    fn denoise(&self, v: &Signal) -> Result<Signal> {
        let (h, w, c) = v.shape().hwc();
        let mix = self.prior.at_noise(self.sigma)?;
        if self.prior.dim() == 1 {
            let out = v
                .data()
                .iter()
                .map(|&x| mix.denoise(&[x]).map(|d| d[0]))
                .collect::<Result<Vec<_>>>()?;
            return Ok(Signal::from_raw(out, v.shape()));
        }
        if c != self.prior.dim() {
            return Err(PnpError::ShapeMismatch {
                expected: format!("{} channels (prior dim)", self.prior.dim()),
                got: format!("{c} channels"),
            });
        }
        let plane = h * w;
        let mut out = vec![0.0; v.len()];
        let mut px = vec![0.0; c];
        for p in 0..plane {
            for ch in 0..c {
                px[ch] = v.data()[ch * plane + p];
            }
            let d = mix.denoise(&px)?;
            for ch in 0..c {
                out[ch * plane + p] = d[ch];
            }
        }
        Ok(Signal::from_raw(out, v.shape()))
    }

    fn is_exact_mmse(&self) -> bool {
        true
    }

    fn name(&self) -> &str {
        &self.label
    }
}

/// Wraps a closure, e.g. a proximal operator used as a denoiser.
pub struct FnDenoiser<F> {
    f: F,
    label: String,
}

impl<F> FnDenoiser<F>
where
    F: Fn(&Signal) -> Result<Signal> + Send + Sync,
{
    pub fn new(label: impl Into<String>, f: F) -> Self {
        FnDenoiser {
            f,
            label: label.into(),
        }
    }
}

impl<F> Denoiser for FnDenoiser<F>
where
    F: Fn(&Signal) -> Result<Signal> + Send + Sync,
{
    fn denoise(&self, v: &Signal) -> Result<Signal> {
        (self.f)(v)
    }

    fn name(&self) -> &str {
        &self.label
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::Component;
    use crate::prior::Covariance;
    use crate::signal::Shape;

    #[test]
    fn pixelwise_matches_whole_vector_for_one_pixel_per_call() {
        let p = GmmPrior::symmetric_bimodal(&[0.3], 0.01).unwrap();
        let den = PixelwiseGmmDenoiser::new(p.clone(), 0.1, "gmm").unwrap();
        let v = Signal::new(vec![0.1, -0.2, 0.35, 0.0], Shape::image(2, 2, 1)).unwrap();
        let out = den.denoise(&v).unwrap();
        for (i, &x) in v.data().iter().enumerate() {
            let e = crate::prior::mmse_denoise(&p, &[x], 0.1).unwrap()[0];
            assert_eq!(out.data()[i], e);
        }
    }

    #[test]
    fn pixelwise_uses_channel_vectors() {
        let p = GmmPrior::new(vec![Component {
            weight: 1.0,
            mean: vec![0.0, 1.0],
            covariance: Covariance::Diag(vec![1.0, 3.0]),
        }])
        .unwrap();
        let den = PixelwiseGmmDenoiser::new(p, 1.0, "gauss").unwrap();
        let v = Signal::new(vec![2.0, 2.0, 5.0, 5.0], Shape::image(1, 2, 2)).unwrap();
        let out = den.denoise(&v).unwrap();
        // channel 0: 0.5 * 2; channel 1: 1 + 0.75 * (5 - 1)
        for (a, b) in out.data().iter().zip([1.0, 1.0, 4.0, 4.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(den.denoise(&Signal::zeros(Shape::image(2, 2, 3))).is_err());
    }

    #[test]
    fn scalar_prior_acts_on_every_channel() {
        let p = GmmPrior::symmetric_bimodal(&[0.3], 0.01).unwrap();
        let den = PixelwiseGmmDenoiser::new(p.clone(), 0.1, "gmm").unwrap();
        let v = Signal::new(vec![0.1, -0.2, 0.35, 0.0, 0.5, 0.6], Shape::image(1, 2, 3)).unwrap();
        let out = den.denoise(&v).unwrap();
        for (i, &x) in v.data().iter().enumerate() {
            assert_eq!(out.data()[i], crate::prior::mmse_denoise(&p, &[x], 0.1).unwrap()[0]);
        }
    }

    #[test]
    fn whole_vector_denoiser_preserves_shape() {
        let p = GmmPrior::gaussian(4, 0.0, 1.0).unwrap();
        let den = GmmDenoiser::new(&p, 1.0).unwrap();
        let v = Signal::new(vec![2.0; 4], Shape::image(2, 2, 1)).unwrap();
        let out = den.denoise(&v).unwrap();
        assert_eq!(out.shape(), v.shape());
        assert!(out.data().iter().all(|&x| (x - 1.0).abs() < 1e-15));
        assert!(den.is_exact_mmse());
    }
}
