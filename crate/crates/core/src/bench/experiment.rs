//! Deblurring runs and the sweep over images × kernels × noise levels ×
//! solvers × denoisers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::bench::config::{ExperimentConfig, GammaPolicy};
use crate::bench::images::load_image;
use crate::bench::kernels::parse_kernel;
use crate::blur::{BlurOperator, Kernel};
use crate::denoiser::{Denoiser, IdentityDenoiser, PixelwiseGmmDenoiser};
use crate::diagnostics::{MetricsProbe, RunTrace};
use crate::error::{PnpError, Result};
use crate::implicit::{estimate_lipschitz_m, SampleBox};
use crate::metrics::{psnr, ssim};
use crate::noise::{seeded_rng, standard_normals};
use crate::prior::GmmPrior;
use crate::prox::DataFidelity;
use crate::signal::Signal;
use crate::solvers::{admissible_step, pnp_admm, pnp_fista, AdmmState, SolverConfig};

pub const THREADS_ENV: &str = "PNPKIT_THREADS";
/// Samples for the `M̂` estimate behind `gamma = auto`.
pub const AUTO_M_SAMPLES: usize = 64;
pub const STEP_SAFETY: f64 = 0.9;

/// Blurred, noisy observation of a known image.
#[derive(Debug, Clone)]
pub struct Degraded {
    pub truth: Signal,
    pub blur: BlurOperator,
    pub observed: Signal,
}

/// `y = k ⊛ x + noise·n`, `n ~ N(0, I)` from stream `stream` of `seed`.
pub fn degrade(truth: &Signal, kernel: Kernel, noise: f64, seed: u64, stream: u64) -> Result<Degraded> {
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(PnpError::Config(format!("noise level must be ≥ 0, got {noise}")));
    }
    let blur = BlurOperator::for_shape(kernel, truth.shape())?;
    let mut rng = seeded_rng(seed, stream);
    let n = Signal::new(standard_normals(&mut rng, truth.len()), truth.shape())?;
    let observed = blur.apply(truth)?.axpy(noise, &n);
    Ok(Degraded { truth: truth.clone(), blur, observed })
}

/// Parameters of one restoration.
#[derive(Debug, Clone)]
pub struct RestoreParams {
    pub solver: String,
    pub denoiser: String,
    pub gamma: GammaPolicy,
    pub sigma: f64,
    pub lambda: f64,
    pub fista_step: Option<f64>,
    pub max_iter: usize,
    pub stop_tol: f64,
    pub seed: u64,
    pub gmm_prior: GmmPrior,
    pub linear_prior: GmmPrior,
}

#[derive(Debug, Clone)]
pub struct Restored {
    /// ADMM step `γ`, or the FISTA step.
    pub gamma: f64,
    pub m_hat: Option<f64>,
    pub input_psnr: f64,
    pub final_psnr: f64,
    pub final_ssim: f64,
    pub restored: Signal,
    pub trace: RunTrace,
}

fn make_denoiser(p: &RestoreParams) -> Result<(Box<dyn Denoiser>, Option<&GmmPrior>)> {
    Ok(match p.denoiser.as_str() {
        "gmm_mmse" => (
            Box::new(PixelwiseGmmDenoiser::new(p.gmm_prior.clone(), p.sigma, "gmm_mmse")?),
            Some(&p.gmm_prior),
        ),
        "gaussian_linear" => (
            Box::new(PixelwiseGmmDenoiser::new(p.linear_prior.clone(), p.sigma, "gaussian_linear")?),
            Some(&p.linear_prior),
        ),
        "identity" => (Box::new(IdentityDenoiser), None),
        other => return Err(PnpError::Config(format!("unknown denoiser `{other}`"))),
    })
}

/// `γ` for a run: explicit, or `0.9/(2M̂)` with `M̂` the sampled Lipschitz
/// constant of `∇h_mmse` at `γ_ref = σ²` (samples over `[−0.5, 1.5]^d`).
/// With no implicit regularizer (identity denoiser) `auto` gives `σ²`.
pub fn resolve_gamma(policy: GammaPolicy, prior: Option<&GmmPrior>, sigma: f64, seed: u64) -> Result<(f64, Option<f64>)> {
    match (policy, prior) {
        (GammaPolicy::Fixed(g), _) => Ok((g, None)),
        (GammaPolicy::Sigma2, _) => Ok((sigma * sigma, None)),
        (GammaPolicy::Auto, None) => Ok((sigma * sigma, None)),
        (GammaPolicy::Auto, Some(p)) => {
            let b = SampleBox::cube(p.dim(), -0.5, 1.5);
            let m = estimate_lipschitz_m(p, sigma, sigma * sigma, &b, AUTO_M_SAMPLES, seed)?;
            Ok((admissible_step(m, STEP_SAFETY)?, Some(m)))
        }
    }
}

/// Runs PnP-ADMM or PnP-FISTA from `x⁰ = z⁰ = y`, recording PSNR/SSIM per
/// iteration.
pub fn restore(d: &Degraded, p: &RestoreParams) -> Result<Restored> {
    let (den, prior) = make_denoiser(p)?;
    let fidelity = DataFidelity::new(d.blur.clone(), d.observed.clone(), p.lambda)?;
    let probe = MetricsProbe { truth: &d.truth };
    let (gamma, m_hat, trace) = match p.solver.as_str() {
        "admm" => {
            let (gamma, m_hat) = resolve_gamma(p.gamma, prior, p.sigma, p.seed)?;
            let mut cfg = SolverConfig::new(gamma, p.sigma, p.max_iter);
            cfg.stop_tol = p.stop_tol;
            let init = AdmmState::from_start(&d.observed);
            (gamma, m_hat, pnp_admm(&fidelity, den.as_ref(), init, &cfg, Some(&probe))?)
        }
        "fista" => {
            // The step plays the role of γ; the ADMM step policy does not apply.
            let step = p.fista_step.unwrap_or(p.lambda);
            let mut cfg = SolverConfig::new(step, p.sigma, p.max_iter);
            cfg.stop_tol = p.stop_tol;
            let x0 = d.observed.clone();
            (step, None, pnp_fista(&|x| fidelity.grad(x), den.as_ref(), x0, &cfg, step, Some(&probe))?)
        }
        other => return Err(PnpError::Config(format!("unknown solver `{other}`"))),
    };
    let restored = trace
        .final_x()
        .cloned()
        .ok_or_else(|| PnpError::Format("trace without final iterate".into()))?;
    Ok(Restored {
        gamma,
        m_hat,
        input_psnr: psnr(&d.observed, &d.truth, 1.0)?,
        final_psnr: psnr(&restored, &d.truth, 1.0)?,
        final_ssim: ssim(&restored, &d.truth)?,
        restored,
        trace,
    })
}

/// One cell of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub image: String,
    pub kernel: String,
    pub noise: f64,
    pub noise_index: usize,
    pub solver: String,
    pub denoiser: String,
    /// RNG stream of the (image, kernel, noise) observation, shared by all
    /// solver/denoiser pairs.
    pub stream: u64,
}

impl Cell {
    pub fn file_stem(&self) -> String {
        format!(
            "{:03}_{}_{}_n{}_{}_{}",
            self.index,
            sanitize(&label_of(&self.image)),
            sanitize(&self.kernel),
            self.noise,
            self.solver,
            self.denoiser
        )
    }
}

fn label_of(image: &str) -> String {
    Path::new(image)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| image.to_string())
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '-' })
        .collect()
}

pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    let mut stream = 0u64;
    for image in &cfg.images {
        for kernel in &cfg.kernels {
            for (ni, &noise) in cfg.noise_levels.iter().enumerate() {
                for solver in &cfg.solvers {
                    for denoiser in &cfg.denoisers {
                        out.push(Cell {
                            index: out.len(),
                            image: image.clone(),
                            kernel: kernel.clone(),
                            noise,
                            noise_index: ni,
                            solver: solver.clone(),
                            denoiser: denoiser.clone(),
                            stream,
                        });
                    }
                }
                stream += 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub outcome: std::result::Result<CellSummary, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub gamma: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub input_psnr: f64,
    pub final_psnr: f64,
    pub final_ssim: f64,
    pub min_rel_change: f64,
    pub trace_file: String,
}

fn run_cell(cfg: &ExperimentConfig, cell: &Cell, runs_dir: &Path) -> Result<CellSummary> {
    let truth = load_image(&cell.image)?;
    let kernel = parse_kernel(&cell.kernel)?;
    let d = degrade(&truth, kernel, cell.noise, cfg.seed, cell.stream)?;
    let params = RestoreParams {
        solver: cell.solver.clone(),
        denoiser: cell.denoiser.clone(),
        gamma: cfg.gamma,
        sigma: cfg.sigma_for(cell.noise),
        lambda: cfg.lambda_for(cell.noise),
        fista_step: cfg.fista_step,
        max_iter: cfg.max_iter,
        stop_tol: cfg.stop_tol,
        seed: cfg.seed,
        gmm_prior: cfg.gmm_prior()?,
        linear_prior: cfg.linear_prior()?,
    };
    let r = restore(&d, &params)?;
    let trace_file = format!("{}.csv", cell.file_stem());
    r.trace.write_csv(fs::File::create(runs_dir.join(&trace_file))?)?;
    Ok(CellSummary {
        gamma: r.gamma,
        sigma: params.sigma,
        lambda: params.lambda,
        iterations: r.trace.iterations(),
        input_psnr: r.input_psnr,
        final_psnr: r.final_psnr,
        final_ssim: r.final_ssim,
        min_rel_change: r.trace.min_rel_change().unwrap_or(f64::NAN),
        trace_file,
    })
}

/// Mean final PSNR keyed by (solver, denoiser), per noise level and overall.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub noise_levels: Vec<f64>,
    pub rows: Vec<SummaryRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub solver: String,
    pub denoiser: String,
    /// `None` when every run at that level failed.
    pub per_noise: Vec<Option<f64>>,
    pub average: Option<f64>,
    pub failed: usize,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SummaryTable {
    pub fn from_results(cfg: &ExperimentConfig, results: &[CellResult]) -> Self {
        let mut rows = Vec::new();
        for solver in &cfg.solvers {
            for denoiser in &cfg.denoisers {
                let mine: Vec<_> = results
                    .iter()
                    .filter(|r| &r.cell.solver == solver && &r.cell.denoiser == denoiser)
                    .collect();
                let ok = |ni: Option<usize>| -> Vec<f64> {
                    mine.iter()
                        .filter(|r| ni.is_none_or(|n| r.cell.noise_index == n))
                        .filter_map(|r| r.outcome.as_ref().ok().map(|s| s.final_psnr))
                        .collect()
                };
                rows.push(SummaryRow {
                    solver: solver.clone(),
                    denoiser: denoiser.clone(),
                    per_noise: (0..cfg.noise_levels.len()).map(|n| mean(&ok(Some(n)))).collect(),
                    average: mean(&ok(None)),
                    failed: mine.iter().filter(|r| r.outcome.is_err()).count(),
                });
            }
        }
        SummaryTable { noise_levels: cfg.noise_levels.clone(), rows }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["solver".to_string(), "denoiser".to_string()];
        h.extend(self.noise_levels.iter().map(|n| format!("psnr_{n}")));
        h.push("average".into());
        h.push("failed".into());
        h
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = self.header().join(",");
        s.push('\n');
        for r in &self.rows {
            let mut f = vec![r.solver.clone(), r.denoiser.clone()];
            f.extend(r.per_noise.iter().map(|v| fmt_opt(*v)));
            f.push(fmt_opt(r.average));
            f.push(r.failed.to_string());
            s.push_str(&f.join(","));
            s.push('\n');
        }
        s
    }

    /// Aligned text rendering, PSNR to two decimals.
    pub fn to_text(&self) -> String {
        let header = self.header();
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut f = vec![r.solver.clone(), r.denoiser.clone()];
                let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
                f.extend(r.per_noise.iter().map(|v| cell(*v)));
                f.push(cell(r.average));
                f.push(r.failed.to_string());
                f
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|j| body.iter().map(|r| r[j].len()).chain([header[j].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let mut line = |fields: &[String]| {
            let parts: Vec<String> = fields
                .iter()
                .enumerate()
                .map(|(j, f)| if j < 2 { format!("{f:<w$}", w = widths[j]) } else { format!("{f:>w$}", w = widths[j]) })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&header);
        for r in &body {
            line(r);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub results: Vec<CellResult>,
    pub summary: SummaryTable,
    pub out_dir: PathBuf,
}

impl ExperimentReport {
    pub fn failed(&self) -> usize {
        self.results.iter().filter(|r| r.outcome.is_err()).count()
    }
}

/// Worker count from `PNPKIT_THREADS`; `None` when unset.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(PnpError::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

const RUNS_HEADER: &str = "index,image,kernel,noise,solver,denoiser,status,gamma,sigma,lambda,iterations,input_psnr,final_psnr,final_ssim,min_rel_change,trace_file,error";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn runs_csv(results: &[CellResult]) -> String {
    let mut s = String::from(RUNS_HEADER);
    s.push('\n');
    for r in results {
        let c = &r.cell;
        let head = format!(
            "{},{},{},{},{},{}",
            c.index,
            csv_field(&c.image),
            csv_field(&c.kernel),
            c.noise,
            c.solver,
            c.denoiser
        );
        let tail = match &r.outcome {
            Ok(o) => format!(
                "ok,{},{},{},{},{},{},{},{},{},",
                o.gamma, o.sigma, o.lambda, o.iterations, o.input_psnr, o.final_psnr, o.final_ssim, o.min_rel_change, o.trace_file
            ),
            Err(e) => format!("failed,,,,,,,,,,{}", csv_field(e)),
        };
        let _ = writeln!(s, "{head},{tail}");
    }
    s
}

/// gnuplot script drawing the relative-change curve of every successful run.
fn gnuplot_script(results: &[CellResult]) -> String {
    let col = 1 + crate::diagnostics::CSV_COLUMNS
        .iter()
        .position(|c| *c == "rel_change")
        .expect("rel_change column");
    let mut s = String::from(
        "# gnuplot plot.gp  ->  rel_change.png\n\
         set terminal pngcairo size 1000,700\n\
         set output 'rel_change.png'\n\
         set datafile separator ','\n\
         set logscale y\n\
         set xlabel 'iteration k'\n\
         set ylabel '||x^k - x^{k+1}|| / ||x^{k+1}||'\n\
         set key outside right font ',7'\n",
    );
    let plots: Vec<String> = results
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|o| (r, o)))
        .map(|(r, o)| {
            format!(
                "'runs/{}' using 1:{col} every ::1 with lines title '{}'",
                o.trace_file,
                r.cell.file_stem().replace('_', " ")
            )
        })
        .collect();
    if plots.is_empty() {
        s.push_str("# no successful runs\n");
    } else {
        let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    }
    s
}

/// Runs every cell (in parallel, capped by `PNPKIT_THREADS`), writing
/// `runs/*.csv`, `runs.csv`, `summary.csv`, `summary.txt` and `plot.gp`
/// under `out_dir`. Per-cell failures are recorded, not propagated.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    let runs_dir = out_dir.join("runs");
    fs::create_dir_all(&runs_dir)?;
    let all = cells(cfg);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| PnpError::Config(format!("thread pool: {e}")))?;
    let results: Vec<CellResult> = pool.install(|| {
        all.par_iter()
            .map(|cell| CellResult {
                cell: cell.clone(),
                outcome: run_cell(cfg, cell, &runs_dir).map_err(|e| e.to_string()),
            })
            .collect()
    });
    let summary = SummaryTable::from_results(cfg, &results);
    fs::write(out_dir.join("runs.csv"), runs_csv(&results))?;
    fs::write(out_dir.join("summary.csv"), summary.to_csv_string())?;
    fs::write(out_dir.join("summary.txt"), summary.to_text())?;
    fs::write(out_dir.join("plot.gp"), gnuplot_script(&results))?;
    Ok(ExperimentReport { results, summary, out_dir: out_dir.to_path_buf() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::images::shapes;

    fn tiny_cfg() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(
            r#"
            images = ["shapes", "bars"]
            kernels = ["box:3"]
            noise_levels = [0.01, 0.02]
            solvers = ["admm", "fista"]
            denoisers = ["identity"]
            max_iter = 3
            "#,
        )
        .unwrap()
    }

    #[test]
    fn cells_share_streams_per_observation() {
        let c = cells(&tiny_cfg());
        assert_eq!(c.len(), 8);
        assert_eq!(c[0].stream, c[1].stream);
        assert_ne!(c[0].stream, c[2].stream);
        assert_eq!(c.iter().map(|c| c.stream).max(), Some(3));
        assert!(c[5].file_stem().starts_with("005_bars_box-3_n0.01_fista"));
    }

    #[test]
    fn identity_delta_noiseless_is_exact() {
        let truth = shapes(16);
        let d = degrade(&truth, Kernel::delta(), 0.0, 1, 0).unwrap();
        let cfg = tiny_cfg();
        let p = RestoreParams {
            solver: "admm".into(),
            denoiser: "identity".into(),
            gamma: GammaPolicy::Auto,
            sigma: 0.01,
            lambda: 1e-4,
            fista_step: None,
            max_iter: 5,
            stop_tol: 0.0,
            seed: 1,
            gmm_prior: cfg.gmm_prior().unwrap(),
            linear_prior: cfg.linear_prior().unwrap(),
        };
        let r = restore(&d, &p).unwrap();
        assert!(r.final_psnr > 100.0, "{}", r.final_psnr);
    }

    #[test]
    fn summary_text_is_aligned() {
        let cfg = tiny_cfg();
        let results: Vec<CellResult> = cells(&cfg)
            .into_iter()
            .map(|cell| CellResult {
                outcome: if cell.index == 0 {
                    Err("boom".into())
                } else {
                    Ok(CellSummary {
                        gamma: 1.0,
                        sigma: 0.1,
                        lambda: 0.01,
                        iterations: 3,
                        input_psnr: 20.0,
                        final_psnr: 20.0 + cell.index as f64,
                        final_ssim: 0.5,
                        min_rel_change: 1e-3,
                        trace_file: String::new(),
                    })
                },
                cell,
            })
            .collect();
        let t = SummaryTable::from_results(&cfg, &results);
        // admm/identity: cells 0 (failed), 2, 4, 6
        assert_eq!(t.rows[0].failed, 1);
        assert_eq!(t.rows[0].average, Some(24.0));
        assert_eq!(t.rows[0].per_noise, vec![Some(24.0), Some(24.0)]);
        let text = t.to_text();
        let lens: Vec<usize> = text.lines().map(|l| l.len()).collect();
        assert!(lens.iter().all(|&l| l == lens[0]), "{text}");
    }
}
