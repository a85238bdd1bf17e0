//! Per-iteration records of a solver run and the inequality checks of the
//! PnP-ADMM descent argument.
//!
//! With `μ(x, z, s) = g(x) + h(z) + (1/γ) sᵀ(x − z) + (1/(2γ))‖x − z‖²`, an
//! exact-MMSE run with `γM < 1/2` satisfies, for every `k ≥ 1`:
//!
//! * `s^k = γ ∇h(z^k)` (dual identity)
//! * `μ^k − μ^{k−1} ≤ −η ‖z^k − z^{k−1}‖²`, `η = (1 − γM − 2γ²M²)/(2γ)`
//! * `‖s^k − s^{k−1}‖ ≤ γ M ‖z^k − z^{k−1}‖`
//! * `Σ_{j≤k} ‖z^j − z^{j−1}‖² ≤ (μ⁰ − μ*)/η`
//! * `‖∇f(x^k)‖ ≤ (1/γ)‖z^k − z^{k−1}‖ + M ‖x^k − z^k‖`
//!
//! Each `check_*` function replays one of these over a [`RunTrace`].

use std::fmt;
use std::io::Write;

use crate::error::Result;
use crate::implicit::ImplicitRegularizer;
use crate::metrics::{psnr, ssim};
use crate::prox::DataFidelity;
use crate::signal::Signal;

/// Iterations whose predecessor violates the dual identity by more than
/// this are excluded from the checks that rely on it.
pub const DUAL_CONSISTENCY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterRecord {
    pub k: usize,
    pub x: Option<Signal>,
    pub z: Option<Signal>,
    pub s: Option<Signal>,
    pub lagrangian: Option<f64>,
    /// `g(x^k) + h(x^k)`
    pub objective: Option<f64>,
    pub primal_residual: Option<f64>,
    pub z_diff: Option<f64>,
    pub s_diff: Option<f64>,
    /// `‖x^k − x^{k+1}‖ / ‖x^{k+1}‖`; filled in once `x^{k+1}` exists.
    pub rel_change: Option<f64>,
    pub grad_f_norm: Option<f64>,
    pub dual_gap: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub solver: String,
    pub gamma: f64,
    pub records: Vec<IterRecord>,
    /// True when the run stopped on `stop_tol` before `max_iter`.
    pub stopped_early: bool,
}

pub const CSV_COLUMNS: [&str; 10] = [
    "k",
    "lagrangian",
    "primal_residual",
    "z_diff",
    "s_diff",
    "rel_change",
    "grad_f_norm",
    "dual_gap",
    "psnr",
    "ssim",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunTrace {
    pub fn last(&self) -> &IterRecord {
        self.records.last().expect("trace always holds the initial record")
    }

    pub fn iterations(&self) -> usize {
        self.last().k
    }

    pub fn final_x(&self) -> Option<&Signal> {
        self.records.iter().rev().find_map(|r| r.x.as_ref())
    }

    /// Smallest recorded Fig.-2 metric.
    pub fn min_rel_change(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.rel_change)
            .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.min(v))))
    }

    /// First `k` whose relative change is below `tol`.
    pub fn first_rel_change_below(&self, tol: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.rel_change.is_some_and(|v| v < tol))
            .map(|r| r.k)
    }

    pub fn max_dual_gap(&self) -> Option<f64> {
        self.records
            .iter()
            .skip(1)
            .filter_map(|r| r.dual_gap)
            .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
    }

    /// Writes one row per record with [`CSV_COLUMNS`] as header; missing
    /// values are empty fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for r in &self.records {
            w.write_record([
                r.k.to_string(),
                fmt_opt(r.lagrangian),
                fmt_opt(r.primal_residual),
                fmt_opt(r.z_diff),
                fmt_opt(r.s_diff),
                fmt_opt(r.rel_change),
                fmt_opt(r.grad_f_norm),
                fmt_opt(r.dual_gap),
                fmt_opt(r.psnr),
                fmt_opt(r.ssim),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Quantities a probe can attach to a record.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProbeValues {
    pub lagrangian: Option<f64>,
    pub objective: Option<f64>,
    pub grad_f_norm: Option<f64>,
    pub dual_gap: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

/// Computes diagnostics from the current iterates. `zs` is `None` for
/// single-sequence solvers (FISTA).
pub trait IterateProbe {
    fn probe(&self, x: &Signal, zs: Option<(&Signal, &Signal)>, gamma: f64) -> ProbeValues;
}

/// PSNR / SSIM against a ground truth.
#[derive(Debug, Clone)]
pub struct MetricsProbe<'a> {
    pub truth: &'a Signal,
}

impl IterateProbe for MetricsProbe<'_> {
    fn probe(&self, x: &Signal, _zs: Option<(&Signal, &Signal)>, _gamma: f64) -> ProbeValues {
        ProbeValues {
            psnr: psnr(x, self.truth, 1.0).ok(),
            ssim: ssim(x, self.truth).ok(),
            ..Default::default()
        }
    }
}

/// Every proof quantity for an exact-MMSE run: `μ`, `f(x^k)`, `‖∇f(x^k)‖`
/// and the dual gap, with `h = h_mmse` at the run's `γ`.
pub struct MmseProbe<'a> {
    pub fidelity: &'a DataFidelity,
    pub regularizer: &'a ImplicitRegularizer<'a>,
    pub truth: Option<&'a Signal>,
}

impl IterateProbe for MmseProbe<'_> {
    fn probe(&self, x: &Signal, zs: Option<(&Signal, &Signal)>, gamma: f64) -> ProbeValues {
        let g = |v: &Signal| self.fidelity.eval(v).unwrap_or(f64::INFINITY);
        let h = |v: &Signal| self.regularizer.eval(v.data());
        let mut out = ProbeValues {
            grad_f_norm: Some(grad_f_norm(x, self.fidelity, self.regularizer)),
            ..Default::default()
        };
        let hx = h(x);
        out.objective = hx.is_finite().then(|| g(x) + hx);
        if let Some((z, s)) = zs {
            let mu = augmented_lagrangian(g, h, x, z, s, gamma);
            out.lagrangian = Some(mu);
            out.dual_gap = self.regularizer.grad(z.data()).ok().map(|gh| {
                s.data()
                    .iter()
                    .zip(&gh)
                    .map(|(si, gi)| (si - gamma * gi).powi(2))
                    .sum::<f64>()
                    .sqrt()
            });
        }
        if let Some(t) = self.truth {
            out.psnr = psnr(x, t, 1.0).ok();
            out.ssim = ssim(x, t).ok();
        }
        out
    }
}

/// `μ(x, z, s) = g(x) + h(z) + (1/γ) sᵀ(x − z) + (1/(2γ))‖x − z‖²`;
/// `+∞` when `h(z)` is.
pub fn augmented_lagrangian(
    g: impl Fn(&Signal) -> f64,
    h: impl Fn(&Signal) -> f64,
    x: &Signal,
    z: &Signal,
    s: &Signal,
    gamma: f64,
) -> f64 {
    let hz = h(z);
    if !hz.is_finite() {
        return f64::INFINITY;
    }
    let diff = x.sub(z);
    g(x) + hz + s.dot(&diff) / gamma + diff.norm_sq() / (2.0 * gamma)
}

/// `η = (1 − γM − 2γ²M²)/(2γ)`; positive exactly when `γ < 1/(2M)`.
pub fn descent_margin_eta(gamma: f64, m: f64) -> f64 {
    (1.0 - gamma * m - 2.0 * gamma * gamma * m * m) / (2.0 * gamma)
}

/// `‖∇g(x) + ∇h_mmse(x)‖₂`, or `+∞` when `x` is off the denoiser image.
pub fn grad_f_norm(x: &Signal, df: &DataFidelity, reg: &ImplicitRegularizer<'_>) -> f64 {
    let (Ok(gg), Ok(gh)) = (df.grad(x), reg.grad(x.data())) else {
        return f64::INFINITY;
    };
    gg.data()
        .iter()
        .zip(&gh)
        .map(|(a, b)| (a + b).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    /// Iterations that were evaluated.
    pub checked: usize,
    pub violations: Vec<Violation>,
    /// `(k, reason)` for iterations left out of the check.
    pub skipped: Vec<(usize, String)>,
    pub notes: Vec<String>,
    /// False when a precondition (e.g. `η > 0`) fails, independent of
    /// per-iteration violations.
    pub precondition_ok: bool,
}

impl CheckReport {
    pub fn new(name: &'static str) -> Self {
        CheckReport {
            name,
            checked: 0,
            violations: Vec::new(),
            skipped: Vec::new(),
            notes: Vec::new(),
            precondition_ok: true,
        }
    }

    pub fn passed(&self) -> bool {
        self.precondition_ok && self.violations.is_empty()
    }

    /// The violation with the largest excess `lhs − rhs`.
    pub fn worst(&self) -> Option<&Violation> {
        self.violations
            .iter()
            .max_by(|a, b| (a.lhs - a.rhs).total_cmp(&(b.lhs - b.rhs)))
    }

    /// Records one `lhs ≤ rhs` verdict.
    pub fn check(&mut self, k: usize, lhs: f64, rhs: f64) {
        self.checked += 1;
        if !(lhs <= rhs) {
            self.violations.push(Violation { k, lhs, rhs });
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(
            f,
            "[{verdict}] {}: {} checked, {} violations, {} skipped",
            self.name,
            self.checked,
            self.violations.len(),
            self.skipped.len()
        )?;
        if let Some(w) = self.worst() {
            write!(f, " (worst at k={}: {:.3e} > {:.3e})", w.k, w.lhs, w.rhs)?;
        }
        for n in &self.notes {
            write!(f, "\n    note: {n}")?;
        }
        Ok(())
    }
}

/// Records `k ≥ 1` whose predecessor satisfies the dual identity; the
/// descent and `s`-bound arguments need `s^{k−1} = γ∇h(z^{k−1})`.
fn dual_consistent_steps<'a>(
    trace: &'a RunTrace,
    report: &mut CheckReport,
) -> Vec<(&'a IterRecord, &'a IterRecord)> {
    let mut out = Vec::new();
    for pair in trace.records.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        match prev.dual_gap {
            Some(g) if g > DUAL_CONSISTENCY_TOL => report
                .skipped
                .push((cur.k, format!("s^{} ≠ γ∇h(z^{}) (gap {g:.2e})", prev.k, prev.k))),
            _ => out.push((prev, cur)),
        }
    }
    out
}

/// `μ^k − μ^{k−1} ≤ −η ‖z^k − z^{k−1}‖² + tol`. With `η ≤ 0` the margin
/// check is skipped and the report fails its precondition; the plain
/// monotonicity verdict is still noted.
pub fn check_descent(trace: &RunTrace, eta: f64, tol: f64) -> CheckReport {
    let mut report = CheckReport::new("descent (augmented Lagrangian)");
    let steps = dual_consistent_steps(trace, &mut report);
    let mut increases = 0;
    let mut valid = Vec::new();
    for (prev, cur) in steps {
        match (prev.lagrangian, cur.lagrangian, cur.z_diff) {
            (Some(a), Some(b), Some(dz)) if a.is_finite() && b.is_finite() => {
                if b - a > tol {
                    increases += 1;
                }
                valid.push((cur.k, b - a, dz));
            }
            _ => report.skipped.push((cur.k, "Lagrangian not finite".into())),
        }
    }
    report.notes.push(if increases == 0 {
        "augmented Lagrangian non-increasing at every checked iteration".into()
    } else {
        format!("augmented Lagrangian increased at {increases} iterations")
    });
    if !(eta > 0.0) {
        report.precondition_ok = false;
        report
            .notes
            .push(format!("η = {eta:.4e} ≤ 0: step size inadmissible (needs γ < 1/(2M)); margin check skipped"));
        return report;
    }
    for (k, delta, dz) in valid {
        report.check(k, delta, -eta * dz * dz + tol);
    }
    report
}

/// `‖s^k − s^{k−1}‖ ≤ γ M ‖z^k − z^{k−1}‖ + tol`.
pub fn check_s_bound(trace: &RunTrace, gamma: f64, m: f64, tol: f64) -> CheckReport {
    let mut report = CheckReport::new("dual step bound (‖Δs‖ ≤ γM‖Δz‖)");
    for (_, cur) in dual_consistent_steps(trace, &mut report) {
        match (cur.s_diff, cur.z_diff) {
            (Some(ds), Some(dz)) => report.check(cur.k, ds, gamma * m * dz + tol),
            _ => report.skipped.push((cur.k, "missing residuals".into())),
        }
    }
    report
}

/// Lower bound on `μ*` from the trace: `min_k g(x^k) + h(x^k)` over
/// iterations with `x^k` on the denoiser image.
pub fn trace_lower_bound(trace: &RunTrace) -> Option<f64> {
    trace
        .records
        .iter()
        .filter_map(|r| r.objective)
        .filter(|v| v.is_finite())
        .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.min(v))))
}

/// Every prefix sum of `‖z^k − z^{k−1}‖²` stays below
/// `(μ⁰ − μ*)/η + tol`.
pub fn check_residual_sum(
    trace: &RunTrace,
    mu0: f64,
    mu_star_lower: f64,
    eta: f64,
    tol: f64,
) -> CheckReport {
    let mut report = CheckReport::new("summed residual bound");
    if !(eta > 0.0) {
        report.precondition_ok = false;
        report.notes.push(format!("η = {eta:.4e} ≤ 0: bound undefined"));
        return report;
    }
    let bound = (mu0 - mu_star_lower) / eta;
    report.notes.push(format!(
        "bound (μ⁰ − μ*)/η = ({mu0:.6e} − {mu_star_lower:.6e})/{eta:.4e} = {bound:.6e}"
    ));
    let mut sum = 0.0;
    for r in trace.records.iter().skip(1) {
        match r.z_diff {
            Some(dz) => {
                sum += dz * dz;
                report.check(r.k, sum, bound + tol);
            }
            None => report.skipped.push((r.k, "missing z_diff".into())),
        }
    }
    report
}

/// `‖∇f(x^k)‖ ≤ (1/γ)‖z^k − z^{k−1}‖ + M‖x^k − z^k‖ + tol`. Iterations with
/// `x^k` off the denoiser image are excluded and noted.
pub fn check_grad_bound(trace: &RunTrace, gamma: f64, m: f64, tol: f64) -> CheckReport {
    let mut report = CheckReport::new("gradient-norm bound");
    for r in trace.records.iter().skip(1) {
        match (r.grad_f_norm, r.z_diff, r.primal_residual) {
            (Some(gn), _, _) if !gn.is_finite() => {
                report.skipped.push((r.k, "x^k not in denoiser image".into()))
            }
            (Some(gn), Some(dz), Some(pr)) => report.check(r.k, gn, dz / gamma + m * pr + tol),
            _ => report.skipped.push((r.k, "missing residuals".into())),
        }
    }
    if !report.skipped.is_empty() {
        report
            .notes
            .push(format!("{} iterations excluded", report.skipped.len()));
    }
    report
}
