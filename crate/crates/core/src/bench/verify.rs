//! Verification suites run by `pnpkit verify`: the convergence argument on
//! the reference problem, prox–denoiser identities, and score identities.

use std::fmt;

use rand::Rng;

use crate::bench::reference::{
    midpoint_jacobian_norm, witness_jacobian_norm, ReferenceProblem, StepPolicy, REF_MAX_ITER,
    REF_SIGMA,
};
use crate::blur::{BlurOperator, Kernel};
use crate::diagnostics::{CheckReport, RunTrace};
use crate::error::{PnpError, Result};
use crate::implicit::{hmmse_eval, hmmse_grad, score_identity_gap, ImplicitRegularizer};
use crate::noise::seeded_rng;
use crate::prior::{mmse_denoise, Component, Covariance, GmmPrior};
use crate::prox::{prox_quadratic_fft, DataFidelity, Grid, GridOracle};
use crate::signal::{Shape, Signal};

pub const SUITES: [&str; 4] = ["theorem1", "prox", "tweedie", "all"];
pub const VERIFY_SEED: u64 = 1234;

pub const PROX_GRID: (f64, f64, usize) = (-4.0, 4.0, 8001);
pub const PROX_POINTS: usize = 200;
pub const PROX_STEPS_TOL: f64 = 2.0;
pub const PROX_PASS_FRACTION: f64 = 0.99;
pub const CG_TOL: f64 = 1e-8;
pub const TWEEDIE_TOL: f64 = 1e-10;
pub const GRAD_REL_TOL: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub checks: Vec<CheckReport>,
    /// Reference-problem trace (theorem1 only), for the relative-change plot.
    pub trace: Option<RunTrace>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckReport::passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "== suite {} ==", self.suite)?;
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

/// PnP-ADMM on the reference problem and every inequality of the descent
/// argument. `gamma` overrides the `0.9/(2M̂)` step.
pub fn theorem1(gamma: Option<f64>) -> Result<SuiteReport> {
    let policy = gamma.map_or(StepPolicy::Auto, StepPolicy::Fixed);
    let problem = ReferenceProblem::new(policy)?;
    let trace = problem.run(REF_MAX_ITER)?;
    let mut checks = problem.check(&trace);

    let mut rel = CheckReport::new("relative change (‖x^k − x^{k+1}‖/‖x^{k+1}‖ < 1e-6)");
    match trace.first_rel_change_below(1e-6) {
        Some(k) => {
            rel.check(k, trace.records[k].rel_change.unwrap_or(f64::INFINITY), 1e-6);
            rel.notes.push(format!("below 1e-6 from k = {k}"));
        }
        None => rel.check(trace.last().k, trace.min_rel_change().unwrap_or(f64::INFINITY), 1e-6),
    }
    checks.push(rel);

    let mut expans = CheckReport::new("denoiser Jacobian norm at midpoint (info)");
    let j_ref = midpoint_jacobian_norm(&problem.prior, REF_SIGMA)?;
    expans.notes.push(format!(
        "reference prior ‖J‖ = {j_ref:.4} (expansive); 1-D witness prior ‖J‖ = {:.4}",
        witness_jacobian_norm()
    ));
    checks.push(expans);
    Ok(SuiteReport { suite: "theorem1", checks, trace: Some(trace) })
}

/// Three scalar priors used by the prox and score suites.
pub fn scalar_priors() -> Vec<(GmmPrior, f64)> {
    let comp = |w: f64, m: f64, v: f64| Component {
        weight: w,
        mean: vec![m],
        covariance: Covariance::Iso(v),
    };
    vec![
        (GmmPrior::new(vec![comp(0.5, -1.0, 0.25), comp(0.5, 1.0, 0.25)]).unwrap(), 0.5),
        (
            GmmPrior::new(vec![comp(0.2, -1.5, 0.1), comp(0.5, 0.0, 0.3), comp(0.3, 1.2, 0.05)]).unwrap(),
            0.4,
        ),
        (GmmPrior::new(vec![comp(0.7, 0.5, 0.5), comp(0.3, -1.0, 0.2)]).unwrap(), 0.7),
    ]
}

/// `|D_σ(z) − prox_{γ h_mmse}(z)| ≤ 2` grid steps at `γ = σ²`, brute-force
/// prox over 8001 points on `[−4, 4]`.
pub fn prox_correspondence(n_points: usize, seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new("prox–denoiser correspondence (grid prox = D_σ)");
    let grid = Grid::new(PROX_GRID.0, PROX_GRID.1, PROX_GRID.2)?;
    let mut rng = seeded_rng(seed, 1);
    let (mut within, mut total) = (0usize, 0usize);
    let mut worst: f64 = 0.0;
    for (pi, (prior, sigma)) in scalar_priors().into_iter().enumerate() {
        let gamma = sigma * sigma;
        let reg = ImplicitRegularizer::new(&prior, sigma, gamma)?;
        let oracle = GridOracle::new(|x| reg.eval(x), 1, grid)?;
        for _ in 0..n_points {
            let z = rng.random_range(-3.0..3.0);
            let d = mmse_denoise(&prior, &[z], sigma)?[0];
            let p = oracle.prox(gamma, &[z])?[0];
            let steps = (d - p).abs() / grid.step();
            worst = worst.max(steps);
            total += 1;
            if steps <= PROX_STEPS_TOL {
                within += 1;
            }
        }
        report.notes.push(format!("prior {pi}: σ = {sigma}"));
    }
    let frac = within as f64 / total as f64;
    report.check(0, PROX_PASS_FRACTION, frac);
    report.notes.push(format!(
        "{within}/{total} points within {PROX_STEPS_TOL} grid steps ({:.2}%), worst {worst:.2} steps",
        100.0 * frac
    ));
    Ok(report)
}

/// `(Aᵀ A)` via direct circular convolution loops, independent of the FFT.
fn spatial_apply(k: &Kernel, h: usize, w: usize, x: &[f64], adjoint: bool) -> Vec<f64> {
    let (ci, cj) = ((k.rows() / 2) as isize, (k.cols() / 2) as isize);
    let mut out = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let mut acc = 0.0;
            for i in 0..k.rows() as isize {
                for j in 0..k.cols() as isize {
                    let (di, dj) = (i - ci, j - cj);
                    let (sr, sc) = if adjoint { (r + di, c + dj) } else { (r - di, c - dj) };
                    let sr = sr.rem_euclid(h as isize) as usize;
                    let sc = sc.rem_euclid(w as isize) as usize;
                    acc += k.at(i as usize, j as usize) * x[sr * w + sc];
                }
            }
            out[r as usize * w + c as usize] = acc;
        }
    }
    out
}

/// Solves `(I + (γ/λ) AᵀA) x = v + (γ/λ) Aᵀ y` by conjugate gradients.
pub fn prox_quadratic_cg(k: &Kernel, h: usize, w: usize, y: &[f64], lambda: f64, gamma: f64, v: &[f64]) -> Vec<f64> {
    let c = gamma / lambda;
    let op = |x: &[f64]| -> Vec<f64> {
        let ata = spatial_apply(k, h, w, &spatial_apply(k, h, w, x, false), true);
        x.iter().zip(&ata).map(|(a, b)| a + c * b).collect()
    };
    let aty = spatial_apply(k, h, w, y, true);
    let b: Vec<f64> = v.iter().zip(&aty).map(|(a, t)| a + c * t).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = v.to_vec();
    let ax = op(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(a, b)| a - b).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let bnorm = dot(&b, &b).sqrt();
    for _ in 0..10 * h * w {
        if rr.sqrt() <= 1e-15 * bnorm {
            break;
        }
        let ap = op(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    x
}

/// FFT prox vs conjugate gradients on random 16×16 problems.
pub fn fft_prox_vs_cg(trials: usize, seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new("FFT data prox vs conjugate gradients (≤ 1e-8)");
    let mut rng = seeded_rng(seed, 2);
    let (h, w) = (16, 16);
    for t in 0..trials {
        let size = [3, 5, 7][t % 3];
        let kdata: Vec<f64> = (0..size * size).map(|_| rng.random::<f64>()).collect();
        let kernel = Kernel::new(kdata, size, size)?.normalized()?;
        let y: Vec<f64> = (0..h * w).map(|_| rng.random::<f64>()).collect();
        let v: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lambda = 10f64.powf(rng.random_range(-3.0..0.0));
        let gamma = 10f64.powf(rng.random_range(-2.0..1.0));
        let shape = Shape::image(h, w, 1);
        let df = DataFidelity::new(
            BlurOperator::for_shape(kernel.clone(), shape)?,
            Signal::new(y.clone(), shape)?,
            lambda,
        )?;
        let fft = prox_quadratic_fft(&df, gamma, &Signal::new(v.clone(), shape)?)?;
        let cg = prox_quadratic_cg(&kernel, h, w, &y, lambda, gamma, &v);
        let err = fft.data().iter().zip(&cg).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        report.check(t, err, CG_TOL);
    }
    Ok(report)
}

fn random_prior(rng: &mut impl Rng, dim: usize) -> Result<GmmPrior> {
    let k = rng.random_range(1..=3);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut comps = Vec::new();
    for (i, r) in raw.iter().enumerate() {
        let mean = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let covariance = match i % 3 {
            0 => Covariance::Iso(rng.random_range(0.05..1.0)),
            1 => Covariance::Diag((0..dim).map(|_| rng.random_range(0.05..1.0)).collect()),
            _ => {
                // B Bᵀ + 0.1 I
                let b: Vec<Vec<f64>> = (0..dim)
                    .map(|_| (0..dim).map(|_| rng.random_range(-0.7..0.7)).collect())
                    .collect();
                Covariance::Full(
                    (0..dim)
                        .map(|a| {
                            (0..dim)
                                .map(|c| {
                                    (0..dim).map(|l| b[a][l] * b[c][l]).sum::<f64>()
                                        + if a == c { 0.1 } else { 0.0 }
                                })
                                .collect()
                        })
                        .collect(),
                )
            }
        };
        comps.push(Component { weight: r / total, mean, covariance });
    }
    // Renormalise against rounding so the weights sum to one.
    let s: f64 = comps.iter().map(|c| c.weight).sum();
    comps[0].weight += 1.0 - s;
    GmmPrior::new(comps)
}

/// `D_σ(z) = z − σ²∇h_σ(z)` on random priors (`d ≤ 4`), σ and z.
pub fn tweedie_identity(n: usize, seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new("Tweedie identity (≤ 1e-10)");
    let mut rng = seeded_rng(seed, 3);
    for t in 0..n {
        let dim = 1 + t % 4;
        let prior = random_prior(&mut rng, dim)?;
        let sigma = rng.random_range(0.2..1.5);
        let z: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        report.check(t, score_identity_gap(&prior, &z, sigma)?, TWEEDIE_TOL);
    }
    Ok(report)
}

/// `∇h_mmse` against central differences of `h_mmse` at points `D_σ(z)`.
pub fn gradient_consistency(points_per_prior: usize, seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new("h_mmse gradient vs finite differences (rel ≤ 1e-4)");
    let mut rng = seeded_rng(seed, 4);
    let mut priors = scalar_priors();
    priors.push((random_prior(&mut rng, 2)?, 0.6));
    let mut k = 0;
    for (prior, sigma) in &priors {
        let gamma = sigma * sigma;
        let d = prior.dim();
        for _ in 0..points_per_prior {
            let z: Vec<f64> = (0..d).map(|_| rng.random_range(-2.5..2.5)).collect();
            let x = mmse_denoise(prior, &z, *sigma)?;
            let g = hmmse_grad(prior, &x, *sigma, gamma)?;
            let mut err2 = 0.0;
            for i in 0..d {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += FD_STEP;
                xm[i] -= FD_STEP;
                let fd = (hmmse_eval(prior, &xp, *sigma, gamma)? - hmmse_eval(prior, &xm, *sigma, gamma)?)
                    / (2.0 * FD_STEP);
                err2 += (fd - g[i]).powi(2);
            }
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            report.check(k, err2.sqrt() / gnorm.max(1e-6), GRAD_REL_TOL);
            k += 1;
        }
    }
    Ok(report)
}

pub fn prox_suite() -> Result<SuiteReport> {
    Ok(SuiteReport {
        suite: "prox",
        checks: vec![prox_correspondence(PROX_POINTS, VERIFY_SEED)?, fft_prox_vs_cg(10, VERIFY_SEED)?],
        trace: None,
    })
}

pub fn tweedie_suite() -> Result<SuiteReport> {
    Ok(SuiteReport {
        suite: "tweedie",
        checks: vec![tweedie_identity(100, VERIFY_SEED)?, gradient_consistency(50, VERIFY_SEED)?],
        trace: None,
    })
}

/// Runs `suite` (`theorem1`, `prox`, `tweedie` or `all`).
pub fn run_suite(suite: &str, gamma: Option<f64>) -> Result<Vec<SuiteReport>> {
    match suite {
        "theorem1" => Ok(vec![theorem1(gamma)?]),
        "prox" => Ok(vec![prox_suite()?]),
        "tweedie" => Ok(vec![tweedie_suite()?]),
        "all" => Ok(vec![theorem1(gamma)?, prox_suite()?, tweedie_suite()?]),
        other => Err(PnpError::Config(format!("unknown suite `{other}` (expected one of {SUITES:?})"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spatial_adjoint_matches_fft_adjoint() {
        let k = Kernel::new(vec![0.1, 0.5, 0.2, 0.0, 0.3, 0.1, 0.0, 0.0, 0.2], 3, 3).unwrap();
        let shape = Shape::image(5, 6, 1);
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin()).collect();
        let op = BlurOperator::for_shape(k.clone(), shape).unwrap();
        let sx = Signal::new(x.clone(), shape).unwrap();
        let fwd = op.apply(&sx).unwrap();
        let adj = op.adjoint(&sx).unwrap();
        let sf = spatial_apply(&k, 5, 6, &x, false);
        let sa = spatial_apply(&k, 5, 6, &x, true);
        for i in 0..30 {
            assert!((fwd.data()[i] - sf[i]).abs() < 1e-14);
            assert!((adj.data()[i] - sa[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn random_priors_are_valid() {
        let mut rng = seeded_rng(9, 0);
        for d in 1..=4 {
            for _ in 0..20 {
                random_prior(&mut rng, d).unwrap();
            }
        }
    }

    #[test]
    fn inadmissible_gamma_fails_descent_precondition() {
        let r = theorem1(Some(10.0)).unwrap();
        assert!(!r.passed());
        let descent = r.checks.iter().find(|c| c.name.starts_with("descent")).unwrap();
        assert!(!descent.precondition_ok);
        assert!(descent.notes.iter().any(|n| n.contains("≤ 0")));
    }

    #[test]
    fn unknown_suite() {
        assert!(matches!(run_suite("bogus", None), Err(PnpError::Config(_))));
    }
}
