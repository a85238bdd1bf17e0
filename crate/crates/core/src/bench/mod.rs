//! Desk-scale deblurring benchmark: builtin kernels and images, the
//! reference problem for the convergence checks, the experiment runner
//! and the verification suites behind the CLI.

pub mod config;
pub mod experiment;
pub mod images;
pub mod kernels;
pub mod reference;
pub mod verify;
