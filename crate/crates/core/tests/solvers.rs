use nalgebra::{DMatrix, DVector};

use pnpkit::noise::{seeded_rng, standard_normals};
use pnpkit::solvers::fista_momentum;
use pnpkit::{
    admissible_step, admm_classic, pnp_admm, pnp_fista, AdmmState, BlurOperator, DataFidelity,
    FnDenoiser, IdentityDenoiser, Kernel, Prox, Result, RunTrace, Shape, Signal, SolverConfig,
};

fn scalar(v: f64) -> Signal {
    Signal::vector(vec![v]).unwrap()
}

fn soft(v: &Signal, t: f64) -> Signal {
    v.map(|x| x.signum() * (x.abs() - t).max(0.0))
}

fn x_path(trace: &RunTrace) -> Vec<Signal> {
    trace.records.iter().map(|r| r.x.clone().unwrap()).collect()
}

fn max_path_gap(a: &RunTrace, b: &RunTrace) -> f64 {
    let fields = |r: &pnpkit::IterRecord| [r.x.clone().unwrap(), r.z.clone().unwrap(), r.s.clone().unwrap()];
    assert_eq!(a.records.len(), b.records.len());
    a.records
        .iter()
        .zip(&b.records)
        .flat_map(|(ra, rb)| fields(ra).into_iter().zip(fields(rb)).map(|(u, v)| u.max_abs_diff(&v)))
        .fold(0.0, f64::max)
}

#[test]
fn scalar_quadratics_reach_the_minimiser() {
    // g = ½(x − 2)², h = ½x²: minimiser of g + h is 1
    let prox_g = |v: &Signal, gamma: f64| -> Result<Signal> { Ok(v.map(|x| (x + 2.0 * gamma) / (1.0 + gamma))) };
    let prox_h = |v: &Signal, gamma: f64| -> Result<Signal> { Ok(v.scale(1.0 / (1.0 + gamma))) };
    let cfg = SolverConfig::new(1.0, 1.0, 200);
    let t = admm_classic(&prox_g, &prox_h, AdmmState::from_start(&scalar(0.0)), &cfg, None).unwrap();
    assert!((t.final_x().unwrap().data()[0] - 1.0).abs() < 1e-10);
}

#[test]
fn tikhonov_deblurring_matches_closed_form() {
    let (h, w) = (8, 8);
    let shape = Shape::image(h, w, 1);
    let mut rng = seeded_rng(21, 0);
    let k = Kernel::new(vec![1.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 1.0], 3, 3).unwrap().normalized().unwrap();
    let y = Signal::new(standard_normals(&mut rng, h * w), shape).unwrap();
    let (lambda, alpha) = (0.1, 0.5);
    let df = DataFidelity::new(BlurOperator::new(k.clone(), h, w).unwrap(), y.clone(), lambda).unwrap();
    let cfg = SolverConfig::new(0.5, 1.0, 3000);
    let den = FnDenoiser::new("ridge prox", move |v: &Signal| Ok(v.scale(1.0 / (1.0 + 0.5 * alpha))));
    let t = pnp_admm(&df, &den, AdmmState::from_start(&Signal::zeros(shape)), &cfg, None).unwrap();

    // (AᵀA/λ + αI) x = Aᵀy/λ, with A assembled column by column
    let n = h * w;
    let op = BlurOperator::new(k, h, w).unwrap();
    let mut a = DMatrix::zeros(n, n);
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let ae = op.apply(&Signal::new(e, shape).unwrap()).unwrap();
        a.set_column(col, &DVector::from_column_slice(ae.data()));
    }
    let lhs = a.transpose() * &a / lambda + alpha * DMatrix::identity(n, n);
    let rhs = a.transpose() * DVector::from_column_slice(y.data()) / lambda;
    let exact = lhs.lu().solve(&rhs).unwrap();
    let got = t.final_x().unwrap();
    let err = got.data().iter().zip(exact.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-8, "{err}");
}

#[test]
fn pnp_with_prox_oracle_equals_classic_admm() {
    let gamma = 0.7;
    let prox_g = |v: &Signal, g: f64| -> Result<Signal> { Ok(v.map(|x| (x + 3.0 * g) / (1.0 + g))) };
    let prox_h = |v: &Signal, g: f64| -> Result<Signal> { Ok(soft(v, 0.4 * g)) };
    let den = FnDenoiser::new("l1 prox", move |v: &Signal| prox_h.prox(v, gamma));
    let mut cfg = SolverConfig::new(gamma, 1.0, 100);
    cfg.keep_iterates = true;
    let init = AdmmState::from_start(&scalar(-1.0));
    let a = admm_classic(&prox_g, &prox_h, init.clone(), &cfg, None).unwrap();
    let b = pnp_admm(&prox_g, &den, init, &cfg, None).unwrap();
    assert!(max_path_gap(&a, &b) <= 1e-12);
}

#[test]
fn identity_denoiser_equals_zero_regulariser() {
    let gamma = 0.3;
    let prox_g = |v: &Signal, g: f64| -> Result<Signal> { Ok(v.map(|x| (x + 2.0 * g) / (1.0 + g))) };
    let prox_zero = |v: &Signal, _g: f64| -> Result<Signal> { Ok(v.clone()) };
    let mut cfg = SolverConfig::new(gamma, 1.0, 100);
    cfg.keep_iterates = true;
    let init = AdmmState::from_start(&scalar(5.0));
    let a = admm_classic(&prox_g, &prox_zero, init.clone(), &cfg, None).unwrap();
    let b = pnp_admm(&prox_g, &IdentityDenoiser, init, &cfg, None).unwrap();
    assert!(max_path_gap(&a, &b) <= 1e-12);
}

#[test]
fn fista_with_soft_threshold_is_textbook_lasso_fista() {
    let (m, n) = (6, 4);
    let mut rng = seeded_rng(22, 0);
    let a = DMatrix::from_row_slice(m, n, &standard_normals(&mut rng, m * n));
    let b = DVector::from_vec(standard_normals(&mut rng, m));
    let l = (a.transpose() * &a).symmetric_eigenvalues().max();
    let step = 1.0 / l;
    let reg = 0.3;
    let grad = {
        let a = a.clone();
        let b = b.clone();
        move |x: &Signal| -> Result<Signal> {
            let r = &a * DVector::from_column_slice(x.data()) - &b;
            Signal::vector((a.transpose() * r).as_slice().to_vec())
        }
    };
    let den = FnDenoiser::new("soft", move |v: &Signal| Ok(soft(v, reg * step)));
    let mut cfg = SolverConfig::new(step, 1.0, 60);
    cfg.keep_iterates = true;
    let t = pnp_fista(&grad, &den, Signal::zeros(Shape::Vector(n)), &cfg, step, None).unwrap();

    // Beck–Teboulle, written out independently
    let shrink = |v: DVector<f64>| v.map(|x| x.signum() * (x.abs() - reg * step).max(0.0));
    let mut x = DVector::zeros(n);
    let mut yk = x.clone();
    let mut tk = 1.0_f64;
    let mut reference = vec![x.clone()];
    for _ in 0..60 {
        let g = a.transpose() * (&a * &yk - &b);
        let x_new = shrink(&yk - step * g);
        let t_new = (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) / 2.0;
        yk = &x_new + ((tk - 1.0) / t_new) * (&x_new - &x);
        x = x_new;
        tk = t_new;
        reference.push(x.clone());
    }
    for (got, want) in x_path(&t).iter().zip(&reference) {
        let err = got.data().iter().zip(want.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }
}

#[test]
fn momentum_and_step_rule() {
    assert_eq!(fista_momentum(0), 1.0);
    assert!((fista_momentum(1) - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
    assert!((fista_momentum(1) - 1.618).abs() < 1e-3);
    assert_eq!(admissible_step(1.0, 1.0).unwrap(), 0.5);
    assert!((admissible_step(1.0, 0.9).unwrap() - 0.45).abs() < 1e-15);
    assert!((admissible_step(2.0, 0.9).unwrap() - 0.225).abs() < 1e-15);
}

#[test]
fn diverging_denoiser_is_reported() {
    let prox_g = |v: &Signal, _g: f64| -> Result<Signal> { Ok(v.clone()) };
    let den = FnDenoiser::new("blow-up", |v: &Signal| Ok(v.map(|x| x * 1e200 + 1.0)));
    let cfg = SolverConfig::new(1.0, 1.0, 10);
    let err = pnp_admm(&prox_g, &den, AdmmState::from_start(&scalar(1.0)), &cfg, None).unwrap_err();
    assert!(err.to_string().contains("iteration"), "{err}");
}
