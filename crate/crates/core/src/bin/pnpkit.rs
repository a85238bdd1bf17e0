//! `pnpkit` command-line interface.
//!
//! Exit codes: 0 success, 1 a run or check failed, 2 invalid configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pnpkit::bench::config::{default_prior, ExperimentConfig, GammaPolicy, SigmaPolicy, DENOISERS, SOLVERS};
use pnpkit::bench::experiment::{degrade, restore, run_experiment, RestoreParams};
use pnpkit::bench::images::load_image;
use pnpkit::bench::kernels::parse_kernel;
use pnpkit::bench::verify::{run_suite, SUITES};
use pnpkit::io::{write_png, write_pnpk};
use pnpkit::PnpError;

#[derive(Parser)]
#[command(name = "pnpkit", version, about = "Plug-and-play ADMM / FISTA deblurring with exact MMSE denoisers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Blur + noise one image, restore it, write the trace and images.
    Deblur {
        /// Builtin name (shapes, bars, camera, astronaut) or .pnpk/.png path.
        #[arg(long)]
        image: String,
        /// gaussian[:std[:size]], box[:size], disk[:radius], motion[:length], delta.
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        noise: f64,
        #[arg(long, default_value = "admm")]
        solver: String,
        #[arg(long, default_value = "gmm_mmse")]
        denoiser: String,
        /// `auto`, `sigma2` or a positive number.
        #[arg(long, default_value = "auto")]
        gamma: String,
        /// Denoiser strength; defaults to the noise level.
        #[arg(long)]
        sigma: Option<f64>,
        /// Data-term weight; defaults to noise².
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        #[arg(long, default_value_t = 0.0)]
        stop_tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the convergence argument and the denoiser identities.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        /// Step size for the reference run instead of 0.9/(2M̂).
        #[arg(long)]
        gamma: Option<f64>,
        /// Directory for the reference-run trace CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a configured grid of experiments (threads capped by PNPKIT_THREADS).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<PnpError> for Failure {
    fn from(e: PnpError) -> Self {
        match e {
            PnpError::Config(msg) => Failure::Config(msg),
            PnpError::InvalidParameter { .. } => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

type CliResult = Result<bool, Failure>;

fn parse_gamma(s: &str) -> Result<GammaPolicy, Failure> {
    match s {
        "auto" => Ok(GammaPolicy::Auto),
        "sigma2" => Ok(GammaPolicy::Sigma2),
        v => match v.parse::<f64>() {
            Ok(g) if g > 0.0 && g.is_finite() => Ok(GammaPolicy::Fixed(g)),
            _ => Err(Failure::Config(format!("--gamma must be auto, sigma2 or a positive number, got `{v}`"))),
        },
    }
}

fn check_choice(what: &str, v: &str, allowed: &[&str]) -> Result<(), Failure> {
    if allowed.contains(&v) {
        Ok(())
    } else {
        Err(Failure::Config(format!("unknown {what} `{v}` (expected one of {allowed:?})")))
    }
}

#[allow(clippy::too_many_arguments)]
fn deblur(
    image: &str,
    kernel: &str,
    noise: f64,
    solver: &str,
    denoiser: &str,
    gamma: &str,
    sigma: Option<f64>,
    lambda: Option<f64>,
    max_iter: usize,
    stop_tol: f64,
    seed: u64,
    out: &Path,
) -> CliResult {
    check_choice("solver", solver, &SOLVERS)?;
    check_choice("denoiser", denoiser, &DENOISERS)?;
    if !(noise > 0.0 && noise.is_finite()) {
        return Err(Failure::Config(format!("--noise must be > 0, got {noise}")));
    }
    let gamma = parse_gamma(gamma)?;
    let truth = load_image(image)?;
    let k = parse_kernel(kernel)?;
    let cfg = ExperimentConfig {
        images: vec![image.into()],
        kernels: vec![kernel.into()],
        noise_levels: vec![noise],
        solvers: vec![solver.into()],
        denoisers: vec![denoiser.into()],
        gamma,
        sigma: match sigma {
            Some(s) => SigmaPolicy::Fixed(s),
            None => SigmaPolicy::Noise,
        },
        lambda,
        fista_step: None,
        max_iter,
        stop_tol,
        seed,
        prior: default_prior(),
    };
    cfg.validate()?;
    let d = degrade(&truth, k, noise, seed, 0)?;
    let params = RestoreParams {
        solver: solver.into(),
        denoiser: denoiser.into(),
        gamma,
        sigma: cfg.sigma_for(noise),
        lambda: cfg.lambda_for(noise),
        fista_step: None,
        max_iter,
        stop_tol,
        seed,
        gmm_prior: cfg.gmm_prior()?,
        linear_prior: cfg.linear_prior()?,
    };
    let r = restore(&d, &params)?;
    fs::create_dir_all(out).map_err(|e| Failure::Run(e.to_string()))?;
    let io = |e: PnpError| Failure::Run(e.to_string());
    r.trace
        .write_csv(fs::File::create(out.join("trace.csv")).map_err(|e| Failure::Run(e.to_string()))?)
        .map_err(io)?;
    write_pnpk(out.join("observed.pnpk"), &d.observed).map_err(io)?;
    write_pnpk(out.join("restored.pnpk"), &r.restored).map_err(io)?;
    write_png(out.join("observed.png"), &d.observed).map_err(io)?;
    write_png(out.join("restored.png"), &r.restored).map_err(io)?;
    let step = if solver == "fista" { "step" } else { "γ" };
    println!("solver {solver}, denoiser {denoiser}, {step} = {:.6e}, σ = {}, λ = {}", r.gamma, params.sigma, params.lambda);
    if let Some(m) = r.m_hat {
        println!("M̂ = {m:.6e} (γM̂ = {:.4})", r.gamma * m);
    }
    println!(
        "iterations {}, final relative change {:.3e}",
        r.trace.iterations(),
        r.trace.min_rel_change().unwrap_or(f64::NAN)
    );
    println!(
        "PSNR observed {:.2} dB -> restored {:.2} dB (SSIM {:.4})",
        r.input_psnr, r.final_psnr, r.final_ssim
    );
    println!("wrote {}", out.display());
    Ok(true)
}

fn verify(suite: &str, gamma: Option<f64>, out: Option<&Path>) -> CliResult {
    check_choice("suite", suite, &SUITES)?;
    if let Some(g) = gamma {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Failure::Config(format!("--gamma must be > 0, got {g}")));
        }
    }
    let reports = run_suite(suite, gamma)?;
    let mut ok = true;
    for r in &reports {
        print!("{r}");
        ok &= r.passed();
        if let (Some(dir), Some(trace)) = (out, &r.trace) {
            fs::create_dir_all(dir).map_err(|e| Failure::Run(e.to_string()))?;
            let path = dir.join(format!("{}_trace.csv", r.suite));
            trace
                .write_csv(fs::File::create(&path).map_err(|e| Failure::Run(e.to_string()))?)
                .map_err(|e| Failure::Run(e.to_string()))?;
            println!("trace (incl. rel_change) written to {}", path.display());
        }
        if let Some(trace) = &r.trace {
            let rc: Vec<String> = [1usize, 10, 50, 100]
                .iter()
                .filter_map(|&k| trace.records.get(k).and_then(|x| x.rel_change).map(|v| format!("k={k}: {v:.2e}")))
                .collect();
            println!("relative change ‖x^k − x^(k+1)‖/‖x^(k+1)‖: {}", rc.join(", "));
        }
    }
    if !ok {
        let descent_guard = reports
            .iter()
            .flat_map(|r| &r.checks)
            .any(|c| !c.precondition_ok && c.name.starts_with("descent"));
        if descent_guard {
            println!("step size inadmissible: γ must satisfy γ < 1/(2M̂) for the descent guarantee");
        }
    }
    println!("{}", if ok { "ALL CHECKS PASSED" } else { "SOME CHECKS FAILED" });
    Ok(ok)
}

fn sweep(config: &Path, out: &Path) -> CliResult {
    let cfg = ExperimentConfig::from_file(config)?;
    let report = run_experiment(&cfg, out)?;
    print!("{}", report.summary.to_text());
    for r in report.results.iter().filter(|r| r.outcome.is_err()) {
        if let Err(e) = &r.outcome {
            eprintln!("cell {} failed: {e}", r.cell.file_stem());
        }
    }
    println!("{} runs, {} failed; results in {}", report.results.len(), report.failed(), out.display());
    Ok(report.failed() == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Deblur {
            image,
            kernel,
            noise,
            solver,
            denoiser,
            gamma,
            sigma,
            lambda,
            max_iter,
            stop_tol,
            seed,
            out,
        } => deblur(
            image, kernel, *noise, solver, denoiser, gamma, *sigma, *lambda, *max_iter, *stop_tol, *seed, out,
        ),
        Command::Verify { suite, gamma, out } => verify(suite, *gamma, out.as_deref()),
        Command::Sweep { config, out } => sweep(config, out),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("invalid configuration: {msg}");
            ExitCode::from(2)
        }
    }
}
