//! The 16-dimensional reference deblurring problem on which every step of
//! the PnP-ADMM descent argument is checked, and the 1-D expansiveness
//! witness.
//!
//! The prior is a two-component mixture with means `±a·u` (`u` the unit
//! 4×4 checkerboard, the direction the blur attenuates most) and isotropic
//! covariance `τ² = 3σ²`, `a² = 12σ²`. Its MMSE denoiser has Jacobian
//! norm 1.5 at the midpoint (expansive) while `γM` stays near 0.37, so the
//! step rule `γ < 1/(2M)` is satisfiable.

use crate::blur::{BlurOperator, Kernel};
use crate::denoiser::GmmDenoiser;
use crate::diagnostics::{
    check_descent, check_grad_bound, check_residual_sum, check_s_bound, descent_margin_eta,
    trace_lower_bound, CheckReport, MmseProbe, RunTrace,
};
use crate::error::Result;
use crate::implicit::{estimate_lipschitz_m, ImplicitRegularizer, SampleBox};
use crate::noise::{seeded_rng, standard_normals};
use crate::prior::{spectral_norm, Component, Covariance, GmmPrior};
use crate::prox::DataFidelity;
use crate::signal::{Shape, Signal};
use crate::solvers::{admissible_step, pnp_admm, AdmmState, SolverConfig};

pub const REF_SIDE: usize = 4;
pub const REF_DIM: usize = REF_SIDE * REF_SIDE;
pub const REF_SIGMA: f64 = 0.5;
pub const REF_NOISE: f64 = 0.1;
pub const REF_LAMBDA: f64 = 0.01;
pub const REF_MAX_ITER: usize = 500;
pub const REF_SEED: u64 = 20240917;
/// Samples used for `M̂`.
pub const REF_M_SAMPLES: usize = 64;
pub const STEP_SAFETY: f64 = 0.9;

pub const DESCENT_TOL: f64 = 1e-8;
pub const BOUND_TOL: f64 = 1e-6;
pub const DUAL_GAP_TOL: f64 = 1e-8;
pub const GRAD_TARGET: f64 = 1e-5;

/// Unit-norm checkerboard `(−1)^{i+j}/4`.
pub fn checkerboard() -> Vec<f64> {
    (0..REF_DIM)
        .map(|k| if (k / REF_SIDE + k % REF_SIDE).is_multiple_of(2) { 0.25 } else { -0.25 })
        .collect()
}

pub fn reference_prior() -> GmmPrior {
    let s2 = REF_SIGMA * REF_SIGMA;
    let a = (12.0 * s2).sqrt();
    let u = checkerboard();
    let comp = |sign: f64| Component {
        weight: 0.5,
        mean: u.iter().map(|v| sign * a * v).collect(),
        covariance: Covariance::Iso(3.0 * s2),
    };
    GmmPrior::new(vec![comp(1.0), comp(-1.0)]).expect("reference prior is valid")
}

/// Separable `[1 4 1]/6 ⊗ [1 4 1]/6`.
pub fn reference_kernel() -> Kernel {
    let t = [1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0];
    let data = (0..9).map(|k| t[k / 3] * t[k % 3]).collect();
    Kernel::new(data, 3, 3).expect("3×3 kernel")
}

/// Scalar prior `½N(−1, 10⁻⁶) + ½N(1, 10⁻⁶)` at `σ = 0.5`: the MMSE
/// Jacobian at 0 is ≈ 4.
pub const WITNESS_MEAN: f64 = 1.0;
pub const WITNESS_TAU: f64 = 1e-3;
pub const WITNESS_SIGMA: f64 = 0.5;

pub fn witness_prior() -> GmmPrior {
    GmmPrior::symmetric_bimodal(&[WITNESS_MEAN], WITNESS_TAU * WITNESS_TAU)
        .expect("witness prior is valid")
}

/// Spectral norm of `∂D_σ/∂z` at the midpoint `z = 0`.
pub fn midpoint_jacobian_norm(prior: &GmmPrior, sigma: f64) -> Result<f64> {
    let j = prior.at_noise(sigma)?.jacobian(&vec![0.0; prior.dim()])?;
    Ok(spectral_norm(&j))
}

pub fn witness_jacobian_norm() -> f64 {
    midpoint_jacobian_norm(&witness_prior(), WITNESS_SIGMA).expect("witness Jacobian")
}

/// Step-size policy for [`ReferenceProblem`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    /// `γ = 0.9/(2M̂)` with `M̂` estimated at `γ_ref = σ²`.
    Auto,
    Fixed(f64),
}

pub struct ReferenceProblem {
    pub prior: GmmPrior,
    pub truth: Signal,
    pub fidelity: DataFidelity,
    pub sigma: f64,
    pub gamma: f64,
    /// Lipschitz estimate of `∇h_mmse` used by every check: the larger of
    /// the estimates at `γ_ref = σ²` and at the run's `γ`.
    pub m_hat: f64,
    pub eta: f64,
}

fn sample_box() -> SampleBox {
    SampleBox::cube(REF_DIM, -1.5, 1.5)
}

impl ReferenceProblem {
    pub fn new(policy: StepPolicy) -> Result<Self> {
        let prior = reference_prior();
        let shape = Shape::image(REF_SIDE, REF_SIDE, 1);
        let mut rng = seeded_rng(REF_SEED, 0);
        let pick = standard_normals(&mut rng, 1)[0];
        let sign = if pick >= 0.0 { 1.0 } else { -1.0 };
        let tau = prior.covariances()[0][(0, 0)].sqrt();
        let mean = &prior.means()[if sign > 0.0 { 0 } else { 1 }];
        let truth: Vec<f64> = standard_normals(&mut rng, REF_DIM)
            .iter()
            .zip(mean.iter())
            .map(|(n, m)| m + tau * n)
            .collect();
        let truth = Signal::new(truth, shape)?;
        let blur = BlurOperator::for_shape(reference_kernel(), shape)?;
        let noise = Signal::new(standard_normals(&mut rng, REF_DIM), shape)?;
        let y = blur.apply(&truth)?.axpy(REF_NOISE, &noise);
        let fidelity = DataFidelity::new(blur, y, REF_LAMBDA)?;

        let sigma = REF_SIGMA;
        let gamma_ref = sigma * sigma;
        let m_ref = estimate_lipschitz_m(&prior, sigma, gamma_ref, &sample_box(), REF_M_SAMPLES, REF_SEED)?;
        let gamma = match policy {
            StepPolicy::Auto => admissible_step(m_ref, STEP_SAFETY)?,
            StepPolicy::Fixed(g) => g,
        };
        let m_run = estimate_lipschitz_m(&prior, sigma, gamma, &sample_box(), REF_M_SAMPLES, REF_SEED)?;
        let m_hat = m_ref.max(m_run);
        Ok(ReferenceProblem {
            prior,
            truth,
            fidelity,
            sigma,
            gamma,
            m_hat,
            eta: descent_margin_eta(gamma, m_hat),
        })
    }

    /// PnP-ADMM from `x⁰ = z⁰ = s⁰ = 0` (where `∇h_mmse(0) = 0`, so the dual
    /// identity already holds at `k = 0`).
    pub fn run(&self, max_iter: usize) -> Result<RunTrace> {
        let den = GmmDenoiser::new(&self.prior, self.sigma)?;
        let reg = ImplicitRegularizer::new(&self.prior, self.sigma, self.gamma)?;
        let probe = MmseProbe {
            fidelity: &self.fidelity,
            regularizer: &reg,
            truth: None,
        };
        let mut cfg = SolverConfig::new(self.gamma, self.sigma, max_iter);
        cfg.keep_iterates = true;
        let init = AdmmState::from_start(&Signal::zeros(self.truth.shape()));
        pnp_admm(&self.fidelity, &den, init, &cfg, Some(&probe))
    }

    /// Every inequality of the descent argument, plus the dual identity and
    /// `‖∇f‖ < 1e-5` by the end of the run.
    pub fn check(&self, trace: &RunTrace) -> Vec<CheckReport> {
        let mut out = Vec::new();

        let mut dual = CheckReport::new("dual identity (s = γ∇h(z))");
        for r in &trace.records {
            match r.dual_gap {
                Some(g) => dual.check(r.k, g, DUAL_GAP_TOL),
                None => dual.skipped.push((r.k, "z not in denoiser image".into())),
            }
        }
        if !dual.skipped.is_empty() {
            dual.precondition_ok = false;
        }
        out.push(dual);

        let mut descent = check_descent(trace, self.eta, DESCENT_TOL);
        descent.notes.push(format!(
            "γ = {:.6}, M̂ = {:.6}, γM̂ = {:.4}, η = {:.6}",
            self.gamma,
            self.m_hat,
            self.gamma * self.m_hat,
            self.eta
        ));
        out.push(descent);
        out.push(check_s_bound(trace, self.gamma, self.m_hat, BOUND_TOL));
        let mu0 = trace.records[0].lagrangian.unwrap_or(f64::INFINITY);
        let lower = trace_lower_bound(trace).unwrap_or(f64::NEG_INFINITY);
        out.push(check_residual_sum(trace, mu0, lower, self.eta, BOUND_TOL));
        out.push(check_grad_bound(trace, self.gamma, self.m_hat, BOUND_TOL));

        let mut conv = CheckReport::new("stationarity (‖∇f(x^k)‖ < 1e-5)");
        let first = trace
            .records
            .iter()
            .find(|r| r.grad_f_norm.is_some_and(|g| g < GRAD_TARGET));
        let last = trace.last();
        conv.check(last.k, last.grad_f_norm.unwrap_or(f64::INFINITY), GRAD_TARGET);
        conv.notes.push(match first {
            Some(r) => format!("first below target at k = {}", r.k),
            None => "never below target".into(),
        });
        out.push(conv);
        out
    }
}
