//! Plug-and-play ADMM and FISTA for imaging inverse problems, with exact
//! Gaussian-mixture MMSE denoisers whose implicit regularizer can be
//! evaluated in closed form. Every quantity of the PnP-ADMM descent
//! argument is exposed so it can be checked numerically on real runs.

// `!(x > 0.0)` is used deliberately so NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod blur;
pub mod denoiser;
pub mod diagnostics;
pub mod error;
pub mod implicit;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod prior;
pub mod prox;
pub mod solvers;

pub use blur::{circular_convolve, BlurOperator, Kernel};
pub use denoiser::{Denoiser, FnDenoiser, GmmDenoiser, IdentityDenoiser, PixelwiseGmmDenoiser};
pub use diagnostics::{
    augmented_lagrangian, check_descent, check_grad_bound, check_residual_sum, check_s_bound,
    descent_margin_eta, grad_f_norm, CheckReport, IterRecord, IterateProbe, MetricsProbe,
    MmseProbe, RunTrace,
};
pub use error::{PnpError, Result};
pub use implicit::{
    denoiser_inverse, estimate_lipschitz_m, hmmse_eval, hmmse_grad, score_identity_gap,
    ImplicitRegularizer, SampleBox,
};
pub use metrics::{psnr, ssim};
pub use noise::awgn_corrupt;
pub use prior::{gmm_h_sigma, mmse_denoise, mmse_jacobian, Component, Covariance, GmmPrior};
pub use prox::{data_fidelity_grad, prox_bruteforce, prox_quadratic_fft, DataFidelity, Grid, GridOracle, Prox};
pub use signal::{Shape, Signal};
pub use solvers::{admissible_step, admm_classic, pnp_admm, pnp_fista, AdmmState, SolverConfig};

pub mod signal;
