//! ADMM, PnP-ADMM and PnP-FISTA with fixed step sizes.

use crate::denoiser::Denoiser;
use crate::diagnostics::{IterRecord, IterateProbe, ProbeValues, RunTrace};
use crate::error::{invalid, PnpError, Result};
use crate::prox::Prox;
use crate::signal::Signal;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Step size `γ`.
    pub gamma: f64,
    /// Denoiser strength `σ`.
    pub sigma: f64,
    pub max_iter: usize,
    /// Stop once `‖x^k − x^{k+1}‖/‖x^{k+1}‖ < stop_tol`; 0 runs to `max_iter`.
    pub stop_tol: f64,
    /// Call the probe (if any) at every iteration.
    pub record_diagnostics: bool,
    /// Store `x, z, s` snapshots in every record.
    pub keep_iterates: bool,
}

impl SolverConfig {
    pub fn new(gamma: f64, sigma: f64, max_iter: usize) -> Self {
        SolverConfig {
            gamma,
            sigma,
            max_iter,
            stop_tol: 0.0,
            record_diagnostics: true,
            keep_iterates: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(invalid("gamma", format!("must be > 0, got {}", self.gamma)));
        }
        if !(self.sigma > 0.0) {
            return Err(invalid("sigma", format!("must be > 0, got {}", self.sigma)));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(invalid("stop_tol", "must be ≥ 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub x: Signal,
    pub z: Signal,
    pub s: Signal,
    pub k: usize,
}

impl AdmmState {
    pub fn new(x: Signal, z: Signal, s: Signal) -> Result<Self> {
        x.ensure_same_shape(&z)?;
        x.ensure_same_shape(&s)?;
        Ok(AdmmState { x, z, s, k: 0 })
    }

    /// `x⁰ = z⁰ = start`, `s⁰ = 0`.
    pub fn from_start(start: &Signal) -> Self {
        AdmmState {
            x: start.clone(),
            z: start.clone(),
            s: Signal::zeros(start.shape()),
            k: 0,
        }
    }
}

/// `‖x^k − x^{k+1}‖ / ‖x^{k+1}‖`; the absolute change when `x^{k+1} = 0`.
pub fn relative_change(prev: &Signal, next: &Signal) -> f64 {
    let diff = prev.dist(next);
    let n = next.norm();
    if n > 0.0 {
        diff / n
    } else {
        diff
    }
}

fn ensure_finite(s: &Signal, iteration: usize, which: &'static str) -> Result<()> {
    if s.is_finite() {
        Ok(())
    } else {
        Err(PnpError::Diverged { iteration, which })
    }
}

fn apply_probe(rec: &mut IterRecord, v: ProbeValues) {
    rec.lagrangian = v.lagrangian;
    rec.objective = v.objective;
    rec.grad_f_norm = v.grad_f_norm;
    rec.dual_gap = v.dual_gap;
    rec.psnr = v.psnr;
    rec.ssim = v.ssim;
}

fn run_admm(
    solver: &str,
    prox_g: &dyn Prox,
    z_step: &dyn Fn(&Signal) -> Result<Signal>,
    init: AdmmState,
    cfg: &SolverConfig,
    probe: Option<&dyn IterateProbe>,
) -> Result<RunTrace> {
    cfg.validate()?;
    let gamma = cfg.gamma;
    let probe = probe.filter(|_| cfg.record_diagnostics);
    let AdmmState { mut x, mut z, mut s, k: k0 } = init;

    let mut first = IterRecord {
        k: k0,
        primal_residual: Some(x.dist(&z)),
        ..Default::default()
    };
    if let Some(p) = probe {
        apply_probe(&mut first, p.probe(&x, Some((&z, &s)), gamma));
    }
    if cfg.keep_iterates {
        first.x = Some(x.clone());
        first.z = Some(z.clone());
        first.s = Some(s.clone());
    }
    let mut records = vec![first];
    let mut stopped_early = false;

    for k in k0 + 1..=k0 + cfg.max_iter {
        let x_new = prox_g.prox(&z.sub(&s), gamma)?;
        ensure_finite(&x_new, k, "x")?;
        let z_new = z_step(&x_new.add(&s))?;
        ensure_finite(&z_new, k, "z")?;
        let s_new = s.add(&x_new).sub(&z_new);
        ensure_finite(&s_new, k, "s")?;

        let rel = relative_change(&x, &x_new);
        records.last_mut().unwrap().rel_change = Some(rel);

        let mut rec = IterRecord {
            k,
            primal_residual: Some(x_new.dist(&z_new)),
            z_diff: Some(z_new.dist(&z)),
            s_diff: Some(s_new.dist(&s)),
            ..Default::default()
        };
        if let Some(p) = probe {
            apply_probe(&mut rec, p.probe(&x_new, Some((&z_new, &s_new)), gamma));
        }
        if cfg.keep_iterates {
            rec.x = Some(x_new.clone());
            rec.z = Some(z_new.clone());
            rec.s = Some(s_new.clone());
        }
        records.push(rec);
        x = x_new;
        z = z_new;
        s = s_new;
        if cfg.stop_tol > 0.0 && rel < cfg.stop_tol {
            stopped_early = true;
            break;
        }
    }
    if !cfg.keep_iterates {
        let last = records.last_mut().unwrap();
        last.x = Some(x);
        last.z = Some(z);
        last.s = Some(s);
    }
    Ok(RunTrace {
        solver: solver.to_string(),
        gamma,
        records,
        stopped_early,
    })
}

/// Classic ADMM:
/// `x^k = prox_{γg}(z^{k−1} − s^{k−1})`, `z^k = prox_{γh}(x^k + s^{k−1})`,
/// `s^k = s^{k−1} + x^k − z^k`.
pub fn admm_classic(
    prox_g: &dyn Prox,
    prox_h: &dyn Prox,
    init: AdmmState,
    cfg: &SolverConfig,
    probe: Option<&dyn IterateProbe>,
) -> Result<RunTrace> {
    let gamma = cfg.gamma;
    run_admm("admm", prox_g, &|v| prox_h.prox(v, gamma), init, cfg, probe)
}

/// PnP-ADMM: classic ADMM with the `z`-update replaced by `D_σ`.
pub fn pnp_admm(
    prox_g: &dyn Prox,
    denoiser: &dyn Denoiser,
    init: AdmmState,
    cfg: &SolverConfig,
    probe: Option<&dyn IterateProbe>,
) -> Result<RunTrace> {
    run_admm(
        "pnp_admm",
        prox_g,
        &|v| {
            let out = denoiser.denoise(v)?;
            v.ensure_same_shape(&out)?;
            Ok(out)
        },
        init,
        cfg,
        probe,
    )
}

/// FISTA momentum sequence: `t_0 = 1`, `t_{k+1} = (1 + √(1 + 4t_k²))/2`.
pub fn fista_momentum(k: usize) -> f64 {
    (0..k).fold(1.0, |t, _| (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0)
}

/// PnP-FISTA:
/// `w^k = x^k + ((t_{k−1} − 1)/t_k)(x^k − x^{k−1})`,
/// `x^{k+1} = D_σ(w^k − step·∇g(w^k))`, with `w^0 = x^0`.
pub fn pnp_fista(
    grad_g: &dyn Fn(&Signal) -> Result<Signal>,
    denoiser: &dyn Denoiser,
    x0: Signal,
    cfg: &SolverConfig,
    step: f64,
    probe: Option<&dyn IterateProbe>,
) -> Result<RunTrace> {
    cfg.validate()?;
    if !(step > 0.0) || !step.is_finite() {
        return Err(invalid("step", format!("must be > 0, got {step}")));
    }
    let probe = probe.filter(|_| cfg.record_diagnostics);
    let mut first = IterRecord {
        k: 0,
        ..Default::default()
    };
    if let Some(p) = probe {
        apply_probe(&mut first, p.probe(&x0, None, cfg.gamma));
    }
    if cfg.keep_iterates {
        first.x = Some(x0.clone());
    }
    let mut records = vec![first];
    let mut stopped_early = false;

    let mut x_prev = x0.clone();
    let mut x = x0;
    let mut t_prev = 1.0; // t_{k-1}
    let mut t = 1.0; // t_k
    for k in 0..cfg.max_iter {
        let w = if k == 0 {
            x.clone()
        } else {
            x.axpy((t_prev - 1.0) / t, &x.sub(&x_prev))
        };
        let g = grad_g(&w)?;
        let x_new = denoiser.denoise(&w.axpy(-step, &g))?;
        ensure_finite(&x_new, k + 1, "x")?;

        let rel = relative_change(&x, &x_new);
        records.last_mut().unwrap().rel_change = Some(rel);

        let mut rec = IterRecord {
            k: k + 1,
            ..Default::default()
        };
        if let Some(p) = probe {
            apply_probe(&mut rec, p.probe(&x_new, None, cfg.gamma));
        }
        if cfg.keep_iterates {
            rec.x = Some(x_new.clone());
        }
        records.push(rec);

        x_prev = std::mem::replace(&mut x, x_new);
        t_prev = t;
        t = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        if cfg.stop_tol > 0.0 && rel < cfg.stop_tol {
            stopped_early = true;
            break;
        }
    }
    if !cfg.keep_iterates {
        records.last_mut().unwrap().x = Some(x);
    }
    Ok(RunTrace {
        solver: "pnp_fista".into(),
        gamma: cfg.gamma,
        records,
        stopped_early,
    })
}

/// `safety / (2M)`: the fixed step of the convergence result, strictly
/// inside `γ < 1/(2M)` when `safety < 1`.
pub fn admissible_step(m: f64, safety: f64) -> Result<f64> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(invalid("M", format!("must be > 0, got {m}")));
    }
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(invalid("safety", format!("must lie in (0, 1], got {safety}")));
    }
    Ok(safety / (2.0 * m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::IdentityDenoiser;

    fn scalar(v: f64) -> Signal {
        Signal::vector(vec![v]).unwrap()
    }

    #[test]
    fn step_rule() {
        assert_eq!(admissible_step(1.0, 1.0).unwrap(), 0.5);
        assert!((admissible_step(1.0, 0.9).unwrap() - 0.45).abs() < 1e-15);
        assert!((admissible_step(2.0, 0.9).unwrap() - 0.225).abs() < 1e-15);
        assert!(admissible_step(0.0, 0.9).is_err());
        assert!(admissible_step(-1.0, 0.9).is_err());
        assert!(admissible_step(1.0, 1.5).is_err());
    }

    #[test]
    fn momentum_sequence() {
        assert_eq!(fista_momentum(0), 1.0);
        assert!((fista_momentum(1) - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((fista_momentum(1) - 1.618).abs() < 1e-3);
    }

    #[test]
    fn scalar_fixed_point() {
        // g = ½(x−2)², h = ½x²: prox_{γg}(v) = (v + 2γ)/(1 + γ), prox_{γh}(v) = v/(1 + γ)
        let prox_g = |v: &Signal, g: f64| Ok(v.map(|t| (t + 2.0 * g) / (1.0 + g)));
        let prox_h = |v: &Signal, g: f64| Ok(v.map(|t| t / (1.0 + g)));
        let cfg = SolverConfig::new(1.0, 1.0, 200);
        let tr = admm_classic(&prox_g, &prox_h, AdmmState::from_start(&scalar(0.0)), &cfg, None).unwrap();
        let x = tr.final_x().unwrap().data()[0];
        assert!((x - 1.0).abs() < 1e-10, "{x}");
        assert_eq!(tr.records.len(), 201);
        assert!(tr.last().rel_change.is_none());
    }

    #[test]
    fn divergence_reports_iteration() {
        let prox_g = |v: &Signal, _: f64| Ok(v.map(|t| if t > 1e300 { f64::INFINITY } else { 1e200 * (t + 1.0) }));
        let cfg = SolverConfig::new(1.0, 1.0, 10);
        let err = pnp_admm(&prox_g, &IdentityDenoiser, AdmmState::from_start(&scalar(1.0)), &cfg, None).unwrap_err();
        assert!(matches!(err, PnpError::Diverged { iteration: 2, .. }), "{err}");
    }

    #[test]
    fn stop_tol_ends_run_early() {
        let prox_g = |v: &Signal, g: f64| Ok(v.map(|t| (t + 2.0 * g) / (1.0 + g)));
        let mut cfg = SolverConfig::new(1.0, 1.0, 1000);
        cfg.stop_tol = 1e-6;
        let tr = pnp_admm(&prox_g, &IdentityDenoiser, AdmmState::from_start(&scalar(0.0)), &cfg, None).unwrap();
        assert!(tr.stopped_early);
        assert!(tr.iterations() < 1000);
        let rc = tr.records[tr.records.len() - 2].rel_change.unwrap();
        assert!(rc < 1e-6);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SolverConfig::new(0.0, 1.0, 10);
        let pg = |v: &Signal, _: f64| Ok(v.clone());
        assert!(pnp_admm(&pg, &IdentityDenoiser, AdmmState::from_start(&scalar(0.0)), &cfg, None).is_err());
        let cfg = SolverConfig::new(1.0, 1.0, 0);
        assert!(pnp_fista(&|v: &Signal| Ok(v.clone()), &IdentityDenoiser, scalar(0.0), &cfg, 1.0, None).is_err());
    }
}
