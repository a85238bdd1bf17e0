//! Python bindings: mixture priors and their exact MMSE denoisers, the
//! implicit regularizer, metrics, single deblurring runs, the verification
//! suites and sweeps. Vectors cross the boundary as flat `list[float]`.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pnpkit::bench::config::{ExperimentConfig, GammaPolicy, SigmaPolicy};
use pnpkit::bench::experiment::{degrade, restore, run_experiment, RestoreParams};
use pnpkit::bench::images::load_image;
use pnpkit::bench::kernels::parse_kernel;
use pnpkit::bench::reference::{ReferenceProblem, StepPolicy, REF_MAX_ITER};
use pnpkit::bench::verify::run_suite;
use pnpkit::prior::spectral_norm;
use pnpkit::{Component, Covariance, PnpError, SampleBox, Shape, Signal};

fn py_err(e: PnpError) -> PyErr {
    match e {
        PnpError::Config(_)
        | PnpError::InvalidParameter { .. }
        | PnpError::ShapeMismatch { .. }
        | PnpError::NotPositiveDefinite { .. }
        | PnpError::NonFinite { .. }
        | PnpError::NotInImage(_)
        | PnpError::ImageTooSmall { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

#[derive(FromPyObject)]
enum Variance {
    Iso(f64),
    Diag(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

/// Gaussian mixture prior `Σ w_k N(μ_k, Σ_k)`.
#[pyclass(name = "GmmPrior", frozen)]
struct PyGmmPrior {
    inner: pnpkit::GmmPrior,
}

#[pymethods]
impl PyGmmPrior {
    /// `variances[k]` is a float (isotropic), a list (diagonal) or a list
    /// of rows (full covariance).
    #[new]
    fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Variance>) -> PyResult<Self> {
        if weights.len() != means.len() || weights.len() != variances.len() {
            return Err(PyValueError::new_err("weights, means and variances must have equal length"));
        }
        let comps = weights
            .into_iter()
            .zip(means)
            .zip(variances)
            .map(|((weight, mean), v)| Component {
                weight,
                mean,
                covariance: match v {
                    Variance::Iso(s) => Covariance::Iso(s),
                    Variance::Diag(d) => Covariance::Diag(d),
                    Variance::Full(f) => Covariance::Full(f),
                },
            })
            .collect();
        Ok(PyGmmPrior {
            inner: pnpkit::GmmPrior::new(comps).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn gaussian(dim: usize, mean: f64, variance: f64) -> PyResult<Self> {
        Ok(PyGmmPrior {
            inner: pnpkit::GmmPrior::gaussian(dim, mean, variance).map_err(py_err)?,
        })
    }

    /// `½N(μ, vI) + ½N(−μ, vI)`.
    #[staticmethod]
    fn symmetric_bimodal(mean: Vec<f64>, variance: f64) -> PyResult<Self> {
        Ok(PyGmmPrior {
            inner: pnpkit::GmmPrior::symmetric_bimodal(&mean, variance).map_err(py_err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_components(&self) -> usize {
        self.inner.num_components()
    }

    /// Posterior mean `D_σ(z)`.
    fn mmse_denoise(&self, z: Vec<f64>, sigma: f64) -> PyResult<Vec<f64>> {
        pnpkit::mmse_denoise(&self.inner, &z, sigma).map_err(py_err)
    }

    /// `∂D_σ/∂z` as a list of rows.
    fn jacobian(&self, z: Vec<f64>, sigma: f64) -> PyResult<Vec<Vec<f64>>> {
        let j = pnpkit::mmse_jacobian(&self.inner, &z, sigma).map_err(py_err)?;
        Ok(j.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    fn jacobian_norm(&self, z: Vec<f64>, sigma: f64) -> PyResult<f64> {
        let j = pnpkit::mmse_jacobian(&self.inner, &z, sigma).map_err(py_err)?;
        Ok(spectral_norm(&j))
    }

    /// `−log p_σ(z)`.
    fn h_sigma(&self, z: Vec<f64>, sigma: f64) -> PyResult<f64> {
        pnpkit::gmm_h_sigma(&self.inner, &z, sigma).map_err(py_err)
    }

    fn tweedie_gap(&self, z: Vec<f64>, sigma: f64) -> PyResult<f64> {
        pnpkit::score_identity_gap(&self.inner, &z, sigma).map_err(py_err)
    }

    /// `D_σ⁻¹(x)`; fails outside the denoiser's image.
    fn inverse(&self, x: Vec<f64>, sigma: f64) -> PyResult<Vec<f64>> {
        pnpkit::denoiser_inverse(&self.inner, &x, sigma).map_err(py_err)
    }

    /// Implicit regularizer `h_mmse(x)` with `D_σ = prox_{γ h_mmse}`.
    fn hmmse(&self, x: Vec<f64>, sigma: f64, gamma: f64) -> PyResult<f64> {
        pnpkit::hmmse_eval(&self.inner, &x, sigma, gamma).map_err(py_err)
    }

    fn hmmse_grad(&self, x: Vec<f64>, sigma: f64, gamma: f64) -> PyResult<Vec<f64>> {
        pnpkit::hmmse_grad(&self.inner, &x, sigma, gamma).map_err(py_err)
    }

    /// Sampled Lipschitz constant of `∇h_mmse` over the cube `[lo, hi]^d`.
    #[pyo3(signature = (sigma, gamma, lo=-1.0, hi=1.0, n_samples=64, seed=0))]
    fn lipschitz(&self, sigma: f64, gamma: f64, lo: f64, hi: f64, n_samples: usize, seed: u64) -> PyResult<f64> {
        let b = SampleBox::cube(self.inner.dim(), lo, hi);
        pnpkit::estimate_lipschitz_m(&self.inner, sigma, gamma, &b, n_samples, seed).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("GmmPrior(dim={}, components={})", self.inner.dim(), self.inner.num_components())
    }
}

fn image(data: Vec<f64>, height: usize, width: usize) -> PyResult<Signal> {
    Signal::new(data, Shape::image(height, width, 1)).map_err(py_err)
}

/// PSNR in dB of `x` against `reference` (flat lists of equal length).
#[pyfunction]
#[pyo3(signature = (x, reference, peak=1.0))]
fn psnr(x: Vec<f64>, reference: Vec<f64>, peak: f64) -> PyResult<f64> {
    let a = Signal::vector(x).map_err(py_err)?;
    let b = Signal::vector(reference).map_err(py_err)?;
    pnpkit::psnr(&a, &b, peak).map_err(py_err)
}

/// Gaussian-window SSIM of two row-major `height × width` images.
#[pyfunction]
fn ssim(x: Vec<f64>, reference: Vec<f64>, height: usize, width: usize) -> PyResult<f64> {
    pnpkit::ssim(&image(x, height, width)?, &image(reference, height, width)?).map_err(py_err)
}

/// `safety / (2M)`.
#[pyfunction]
#[pyo3(signature = (m, safety=0.9))]
fn admissible_step(m: f64, safety: f64) -> PyResult<f64> {
    pnpkit::admissible_step(m, safety).map_err(py_err)
}

/// `η = (1 − γM − 2γ²M²)/(2γ)`.
#[pyfunction]
fn descent_margin_eta(gamma: f64, m: f64) -> f64 {
    pnpkit::descent_margin_eta(gamma, m)
}

fn parse_gamma(gamma: &str) -> PyResult<GammaPolicy> {
    match gamma {
        "auto" => Ok(GammaPolicy::Auto),
        "sigma2" => Ok(GammaPolicy::Sigma2),
        v => v
            .parse::<f64>()
            .ok()
            .filter(|g| *g > 0.0 && g.is_finite())
            .map(GammaPolicy::Fixed)
            .ok_or_else(|| PyValueError::new_err(format!("gamma must be auto, sigma2 or a positive number, got `{v}`"))),
    }
}

/// Blurs and corrupts `image` (builtin name or file path), restores it and
/// returns a dict with step, PSNR/SSIM, iteration count and the images.
#[pyfunction]
#[pyo3(signature = (image, kernel, noise, solver="admm", denoiser="gmm_mmse", gamma="auto", sigma=None, lambda_=None, max_iter=200, stop_tol=0.0, seed=0))]
#[allow(clippy::too_many_arguments)]
fn deblur<'py>(
    py: Python<'py>,
    image: &str,
    kernel: &str,
    noise: f64,
    solver: &str,
    denoiser: &str,
    gamma: &str,
    sigma: Option<f64>,
    lambda_: Option<f64>,
    max_iter: usize,
    stop_tol: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ExperimentConfig {
        images: vec![image.into()],
        kernels: vec![kernel.into()],
        noise_levels: vec![noise],
        solvers: vec![solver.into()],
        denoisers: vec![denoiser.into()],
        gamma: parse_gamma(gamma)?,
        sigma: sigma.map_or(SigmaPolicy::Noise, SigmaPolicy::Fixed),
        lambda: lambda_,
        fista_step: None,
        max_iter,
        stop_tol,
        seed,
        prior: pnpkit::bench::config::default_prior(),
    };
    cfg.validate().map_err(py_err)?;
    let truth = load_image(image).map_err(py_err)?;
    let d = degrade(&truth, parse_kernel(kernel).map_err(py_err)?, noise, seed, 0).map_err(py_err)?;
    let params = RestoreParams {
        solver: solver.into(),
        denoiser: denoiser.into(),
        gamma: cfg.gamma,
        sigma: cfg.sigma_for(noise),
        lambda: cfg.lambda_for(noise),
        fista_step: None,
        max_iter,
        stop_tol,
        seed,
        gmm_prior: cfg.gmm_prior().map_err(py_err)?,
        linear_prior: cfg.linear_prior().map_err(py_err)?,
    };
    let r = py.detach(|| restore(&d, &params)).map_err(py_err)?;
    let (h, w, _) = r.restored.shape().hwc();
    let out = PyDict::new(py);
    out.set_item("gamma", r.gamma)?;
    out.set_item("m_hat", r.m_hat)?;
    out.set_item("sigma", params.sigma)?;
    out.set_item("lambda", params.lambda)?;
    out.set_item("iterations", r.trace.iterations())?;
    out.set_item("input_psnr", r.input_psnr)?;
    out.set_item("final_psnr", r.final_psnr)?;
    out.set_item("final_ssim", r.final_ssim)?;
    out.set_item("rel_change", r.trace.records.iter().filter_map(|x| x.rel_change).collect::<Vec<_>>())?;
    out.set_item("shape", (h, w))?;
    out.set_item("observed", d.observed.data().to_vec())?;
    out.set_item("restored", r.restored.data().to_vec())?;
    Ok(out)
}

/// PnP-ADMM on the 16-dimensional reference problem; returns the step,
/// `M̂`, `η`, the final gradient norm and every check's verdict.
#[pyfunction]
#[pyo3(signature = (gamma=None, max_iter=REF_MAX_ITER))]
fn reference_run<'py>(py: Python<'py>, gamma: Option<f64>, max_iter: usize) -> PyResult<Bound<'py, PyDict>> {
    let (p, trace, checks) = py
        .detach(|| -> pnpkit::Result<_> {
            let p = ReferenceProblem::new(gamma.map_or(StepPolicy::Auto, StepPolicy::Fixed))?;
            let t = p.run(max_iter)?;
            let c = p.check(&t);
            Ok((p, t, c))
        })
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("gamma", p.gamma)?;
    out.set_item("m_hat", p.m_hat)?;
    out.set_item("eta", p.eta)?;
    out.set_item("iterations", trace.iterations())?;
    out.set_item("grad_f_norm", trace.last().grad_f_norm)?;
    out.set_item("max_dual_gap", trace.max_dual_gap())?;
    let verdicts = PyDict::new(py);
    for c in &checks {
        verdicts.set_item(c.name, c.passed())?;
    }
    out.set_item("checks", verdicts)?;
    out.set_item("passed", checks.iter().all(|c| c.passed()))?;
    Ok(out)
}

/// Runs a verification suite; returns `(passed, report_text)`.
#[pyfunction]
#[pyo3(signature = (suite="all", gamma=None))]
fn verify(py: Python<'_>, suite: &str, gamma: Option<f64>) -> PyResult<(bool, String)> {
    let reports = py.detach(|| run_suite(suite, gamma)).map_err(py_err)?;
    let text: String = reports.iter().map(|r| r.to_string()).collect();
    Ok((reports.iter().all(|r| r.passed()), text))
}

/// Runs the sweep described by a TOML file; returns the number of failed
/// runs.
#[pyfunction]
fn sweep(py: Python<'_>, config: PathBuf, out: PathBuf) -> PyResult<usize> {
    let cfg = ExperimentConfig::from_file(&config).map_err(py_err)?;
    let report = py.detach(|| run_experiment(&cfg, &out)).map_err(py_err)?;
    Ok(report.failed())
}

#[pymodule]
fn pnpkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGmmPrior>()?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(admissible_step, m)?)?;
    m.add_function(wrap_pyfunction!(descent_margin_eta, m)?)?;
    m.add_function(wrap_pyfunction!(deblur, m)?)?;
    m.add_function(wrap_pyfunction!(reference_run, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_functions_round_trip_through_python() {
        Python::initialize();
        Python::attach(|py| {
            let m = PyModule::new(py, "pnpkit_py").unwrap();
            pnpkit_py(&m).unwrap();
            let prior = m
                .getattr("GmmPrior")
                .unwrap()
                .call_method1("gaussian", (1usize, 0.0, 1.0))
                .unwrap();
            let d: Vec<f64> = prior.call_method1("mmse_denoise", (vec![1.0], 1.0)).unwrap().extract().unwrap();
            assert!((d[0] - 0.5).abs() < 1e-12);
            let step: f64 = m.getattr("admissible_step").unwrap().call1((1.0,)).unwrap().extract().unwrap();
            assert!((step - 0.45).abs() < 1e-15);
            let err = m.getattr("admissible_step").unwrap().call1((-1.0,)).unwrap_err();
            assert!(err.is_instance_of::<PyValueError>(py));
        });
    }

    #[test]
    fn mixed_variance_specs() {
        Python::initialize();
        Python::attach(|py| {
            let m = PyModule::new(py, "pnpkit_py").unwrap();
            pnpkit_py(&m).unwrap();
            let cls = m.getattr("GmmPrior").unwrap();
            let variances = pyo3::types::PyList::new(
                py,
                [0.2f64.into_pyobject(py).unwrap().into_any(), vec![0.1, 0.3].into_pyobject(py).unwrap().into_any()],
            )
            .unwrap();
            let p = cls
                .call1((vec![0.5, 0.5], vec![vec![0.0, 0.0], vec![1.0, 1.0]], variances))
                .unwrap();
            let dim: usize = p.getattr("dim").unwrap().extract().unwrap();
            assert_eq!(dim, 2);
            assert!(cls.call1((vec![1.0], vec![vec![0.0]], vec![-1.0])).is_err());
        });
    }
}
