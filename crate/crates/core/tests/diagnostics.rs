use pnpkit::bench::reference::{ReferenceProblem, StepPolicy};
use pnpkit::diagnostics::{trace_lower_bound, CSV_COLUMNS};
use pnpkit::{
    admissible_step, check_descent, check_grad_bound, check_residual_sum, check_s_bound,
    descent_margin_eta, estimate_lipschitz_m, pnp_admm, AdmmState, BlurOperator, Component,
    Covariance, DataFidelity, GmmDenoiser, GmmPrior, ImplicitRegularizer, Kernel, MmseProbe,
    SampleBox, Shape, Signal, SolverConfig,
};

/// Exact-MMSE PnP-ADMM on a 2×2 image, everything checked end to end.
#[test]
fn small_exact_run_satisfies_every_bound() {
    let prior = GmmPrior::new(vec![
        Component {
            weight: 0.4,
            mean: vec![0.4, -0.4, 0.4, -0.4],
            covariance: Covariance::Iso(0.5),
        },
        Component {
            weight: 0.6,
            mean: vec![-0.3, 0.3, -0.3, 0.3],
            covariance: Covariance::Diag(vec![0.4, 0.5, 0.45, 0.6]),
        },
    ])
    .unwrap();
    let sigma = 0.3;
    let shape = Shape::image(2, 2, 1);
    let k = Kernel::new(vec![0.1, 0.8, 0.1], 1, 3).unwrap();
    let y = Signal::new(vec![0.5, -0.2, 0.1, 0.3], shape).unwrap();
    let df = DataFidelity::new(BlurOperator::for_shape(k, shape).unwrap(), y, 0.05).unwrap();

    let bx = SampleBox::cube(4, -1.5, 1.5);
    let m_ref = estimate_lipschitz_m(&prior, sigma, sigma * sigma, &bx, 64, 5).unwrap();
    let gamma = admissible_step(m_ref, 0.9).unwrap();
    let m = m_ref.max(estimate_lipschitz_m(&prior, sigma, gamma, &bx, 64, 5).unwrap());
    let eta = descent_margin_eta(gamma, m);
    assert!(eta > 0.0);

    let den = GmmDenoiser::new(&prior, sigma).unwrap();
    let reg = ImplicitRegularizer::new(&prior, sigma, gamma).unwrap();
    let probe = MmseProbe {
        fidelity: &df,
        regularizer: &reg,
        truth: None,
    };
    let cfg = SolverConfig::new(gamma, sigma, 300);
    let t = pnp_admm(&df, &den, AdmmState::from_start(&Signal::zeros(shape)), &cfg, Some(&probe)).unwrap();

    // from zero the first denoiser output already satisfies s = γ∇h(z) exactly
    assert!(t.max_dual_gap().unwrap() < 1e-8);
    for r in [
        check_descent(&t, eta, 1e-8),
        check_s_bound(&t, gamma, m, 1e-6),
        check_residual_sum(&t, t.records[0].lagrangian.unwrap(), trace_lower_bound(&t).unwrap(), eta, 1e-6),
        check_grad_bound(&t, gamma, m, 1e-6),
    ] {
        assert!(r.passed(), "{r}");
        assert!(r.checked > 0);
    }
    assert!(t.last().grad_f_norm.unwrap() < 1e-8);
}

#[test]
fn reference_problem_passes_with_the_admissible_step() {
    let p = ReferenceProblem::new(StepPolicy::Auto).unwrap();
    assert!((p.gamma * p.m_hat - 0.45).abs() < 1e-12);
    assert!(p.eta > 0.0);
    let t = p.run(500).unwrap();
    for r in p.check(&t) {
        assert!(r.passed(), "{r}");
    }
}

#[test]
fn reference_problem_flags_an_inadmissible_step() {
    let p = ReferenceProblem::new(StepPolicy::Fixed(10.0)).unwrap();
    assert!(p.eta <= 0.0);
    let t = p.run(50).unwrap();
    let reports = p.check(&t);
    let descent = reports.iter().find(|r| r.name.starts_with("descent")).unwrap();
    assert!(!descent.precondition_ok);
    assert!(!descent.passed());
}

#[test]
fn trace_csv_has_the_documented_columns() {
    let p = ReferenceProblem::new(StepPolicy::Auto).unwrap();
    let t = p.run(5).unwrap();
    let csv = t.to_csv_string();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
    assert_eq!(lines.count(), 6);
}
