//! Acceptance gate: one test per criterion, each printing a pass/fail line
//! with the measured quantities. Every tolerance is pinned in code.
//!
//! Run with `cargo test -p dci-core --test acceptance -- --nocapture` to see
//! the per-criterion lines for passing tests as well.

use std::sync::Arc;
use std::time::Instant;

use dci_core::density::{
    chi2_pdf, chi2_quantile, fit_gkde, BandwidthRule, DensityModel,
};
use dci_core::domain::{evaluate_batch, ForwardModel};
use dci_core::experiments::{
    run_chi2_convergence, run_comparison, run_nonlinear_system, run_piecewise,
    run_stability_oracle, PriorKind, DEFAULT_N_GRID,
};
use dci_core::inference::{build_pushforward, PosteriorHandle};
use dci_core::models::{quadratic_chi2, BlockQuantileRule, Monomial, QuadraticFormSpec};
use dci_core::quadrature::{trapezoid, trapezoid_segments};
use dci_core::RngStream;

/// Canonical seed for the frozen acceptance fixtures.
const SEED: u64 = 42;
const MEDIAN_SEEDS: u64 = 20;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn assert_runtime(elapsed: std::time::Duration, budget_s: u64, criterion: u32) {
    assert!(
        elapsed.as_secs() < budget_s,
        "criterion {criterion}: runtime {elapsed:?} exceeds {budget_s} s budget"
    );
}

#[test]
fn criterion_01_nonlinear_system_uniform_prior() {
    let start = Instant::now();
    let mut integrals = Vec::new();
    let mut kls = Vec::new();
    for seed in 0..MEDIAN_SEEDS {
        let report = run_nonlinear_system(PriorKind::Uniform, 10_000, seed).unwrap();
        integrals.push(report.diagnostics.integral_estimate);
        kls.push(report.diagnostics.kl_divergence);
    }
    let (i_med, kl_med) = (median(integrals), median(kls));
    let elapsed = start.elapsed();
    println!(
        "acceptance criterion 1: median I = {i_med:.4} (target 0.9993 +- 0.05), \
         median KL = {kl_med:.4} (target 1.1344 +- 0.15), runtime {elapsed:?}"
    );
    assert!((i_med - 0.9993).abs() <= 0.05, "median I {i_med} out of band");
    assert!((kl_med - 1.1344).abs() <= 0.15, "median KL {kl_med} out of band");
    assert_runtime(elapsed, 30, 1);
    println!("acceptance criterion 1: PASS");
}

#[test]
fn criterion_02_nonlinear_system_beta_prior() {
    let start = Instant::now();
    let mut integrals = Vec::new();
    let mut kls = Vec::new();
    for seed in 0..MEDIAN_SEEDS {
        let report = run_nonlinear_system(PriorKind::Beta25, 10_000, seed).unwrap();
        integrals.push(report.diagnostics.integral_estimate);
        kls.push(report.diagnostics.kl_divergence);
    }
    let (i_med, kl_med) = (median(integrals), median(kls));
    let elapsed = start.elapsed();
    println!(
        "acceptance criterion 2: median I = {i_med:.4} (target 1.0106 +- 0.05), \
         median KL = {kl_med:.4} (target 0.4399 +- 0.15), runtime {elapsed:?}"
    );
    assert!((i_med - 1.0106).abs() <= 0.05, "median I {i_med} out of band");
    assert_runtime(elapsed, 30, 2);
    // Known discrepancy: the information gain of this configuration is
    // ~0.73 nats, confirmed against a 2e6-sample ground-truth push-forward
    // and against bandwidth-refined estimates, both of which agree to ~0.01.
    // The pinned reference value 0.4399 is inconsistent with the stated
    // configuration (it would require a push-forward density of ~6.2 at the
    // observed mean; the true value is ~5.2). The check is kept as specified
    // and fails deliberately rather than widening the band to fit.
    assert!(
        (kl_med - 0.4399).abs() <= 0.15,
        "median KL {kl_med} outside 0.4399 +- 0.15; measured ground truth is ~0.73 \
         (see 'Known failing check' in the README)"
    );
    println!("acceptance criterion 2: PASS");
}

#[test]
fn criterion_03_piecewise_map() {
    let start = Instant::now();
    let mut integrals = Vec::new();
    let mut kls = Vec::new();
    let mut min_gap = f64::INFINITY;
    for seed in 0..MEDIAN_SEEDS {
        let report = run_piecewise(10_000, seed).unwrap();
        integrals.push(report.diagnostics.integral_estimate);
        kls.push(report.diagnostics.kl_divergence);
        min_gap = min_gap.min(report.support_gap.unwrap());
    }
    let (i_med, kl_med) = (median(integrals), median(kls));
    let elapsed = start.elapsed();
    println!(
        "acceptance criterion 3: median I = {i_med:.4} (target 0.9998 +- 0.05), \
         median KL = {kl_med:.4} (target 1.6014 +- 0.15), min support gap = {min_gap:.3}, \
         runtime {elapsed:?}"
    );
    assert!((i_med - 0.9998).abs() <= 0.05, "median I {i_med} out of band");
    assert!((kl_med - 1.6014).abs() <= 0.15, "median KL {kl_med} out of band");
    assert!(min_gap > 0.0, "push-forward support gap not detected");
    assert_runtime(elapsed, 30, 3);
    println!("acceptance criterion 3: PASS");
}

#[test]
fn criterion_04_convergence_dimension_sweep() {
    let start = Instant::now();
    let studies = run_chi2_convergence(
        &[2, 10, 100],
        &[1],
        &DEFAULT_N_GRID,
        20,
        SEED,
        BlockQuantileRule::MassPreserving,
    )
    .unwrap();
    let slopes: Vec<f64> = studies.iter().map(|s| s.fitted_slope).collect();
    let elapsed = start.elapsed();
    println!(
        "acceptance criterion 4: slopes (d = 2, 10, 100) = \
         [{:.4}, {:.4}, {:.4}] (target -0.4 +- 0.1, pairwise within 0.05), runtime {elapsed:?}",
        slopes[0], slopes[1], slopes[2]
    );
    for (study, slope) in studies.iter().zip(&slopes) {
        assert!(
            (slope + 0.4).abs() <= 0.1,
            "d = {}: slope {slope} outside -0.4 +- 0.1",
            study.dim
        );
    }
    for i in 0..slopes.len() {
        for j in (i + 1)..slopes.len() {
            assert!(
                (slopes[i] - slopes[j]).abs() <= 0.05,
                "slopes for d = {} and d = {} differ by {:.4} > 0.05",
                studies[i].dim,
                studies[j].dim,
                (slopes[i] - slopes[j]).abs()
            );
        }
    }
    assert_runtime(elapsed, 300, 4);
    println!("acceptance criterion 4: PASS");
}

#[test]
fn criterion_05_convergence_qoi_sweep() {
    let start = Instant::now();
    let studies = run_chi2_convergence(
        &[8],
        &[1, 2, 4],
        &DEFAULT_N_GRID,
        20,
        SEED,
        BlockQuantileRule::MassPreserving,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let mut line = String::from("acceptance criterion 5: slopes");
    for study in &studies {
        let target = -2.0 / (study.qoi as f64 + 4.0);
        line.push_str(&format!(
            " m={}: {:.4} (target {:.4} +- 0.1)",
            study.qoi, study.fitted_slope, target
        ));
    }
    println!("{line}, runtime {elapsed:?}");
    for study in &studies {
        let target = -2.0 / (study.qoi as f64 + 4.0);
        assert!(
            (study.fitted_slope - target).abs() <= 0.1,
            "m = {}: slope {} outside {target} +- 0.1",
            study.qoi,
            study.fitted_slope
        );
    }
    assert_runtime(elapsed, 300, 5);
    println!("acceptance criterion 5: PASS");
}

#[test]
fn criterion_06_posterior_mass_one_analytic_pushforward() {
    // Analytic chi-squared(2) push-forward (identity covariance), smooth
    // observed density well inside the image: tensor-trapezoid quadrature of
    // the posterior over [-6, 6]^2 must recover unit mass.
    let start = Instant::now();
    let (model, exact_pf) = quadratic_chi2(&QuadraticFormSpec::<f64>::standard(2)).unwrap();
    let observed = DensityModel::normal(vec![1.5], vec![0.25]).unwrap();
    let handle = PosteriorHandle::new(
        DensityModel::standard_normal(2).unwrap(),
        observed,
        exact_pf,
        Arc::new(model),
    )
    .unwrap();
    let n = 1_201;
    let h = 12.0 / (n - 1) as f64;
    let mut mass = 0.0;
    for i in 0..n {
        let x = -6.0 + i as f64 * h;
        let wx = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let mut row = 0.0;
        for j in 0..n {
            let y = -6.0 + j as f64 * h;
            let wy = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            row += wy * handle.posterior_pdf(&[x, y]).unwrap();
        }
        mass += wx * row;
    }
    mass *= h * h;
    let elapsed = start.elapsed();
    println!(
        "acceptance criterion 6: posterior mass = {mass:.8} (target 1 +- 1e-3), \
         runtime {elapsed:?}"
    );
    assert!((mass - 1.0).abs() <= 1e-3, "posterior mass {mass}");
    assert_runtime(elapsed, 10, 6);
    println!("acceptance criterion 6: PASS");
}

#[test]
fn criterion_07_observed_perturbation_stability() {
    let start = Instant::now();
    let mut detail = String::new();
    for delta in [0.01, 0.05, 0.1] {
        let report = run_stability_oracle(delta, SEED).unwrap();
        let gap = (report.tv_posterior_pair - report.tv_observed_pair).abs();
        detail.push_str(&format!(" delta={delta}: |diff|={gap:.2e}"));
        assert!(
            gap < 1e-3,
            "delta = {delta}: |tv_post - tv_obs| = {gap} >= 1e-3"
        );
        // Independent closed form for the observed pair: 2 delta / width.
        let width = report.interval.1 - report.interval.0;
        assert!(
            (report.tv_observed_pair - 2.0 * delta / width).abs() < 1e-4,
            "quadrature drifted from the closed form at delta = {delta}"
        );
    }
    let elapsed = start.elapsed();
    println!("acceptance criterion 7: stability equality{detail}, runtime {elapsed:?}");
    assert_runtime(elapsed, 10, 7);
    println!("acceptance criterion 7: PASS");
}

#[test]
fn criterion_08_posterior_error_bound() {
    // d_TV(post, post_hat) <= C d_TV(pf, pf_hat) + 1e-3 on the 1-D squaring
    // map with the analytic chi-squared(1) push-forward versus its KDE
    // estimate, C taken as the max quadrature-node ratio obs / pf_hat.
    let start = Instant::now();
    let a: f64 = chi2_quantile(1, 0.4).unwrap();
    let b: f64 = chi2_quantile(1, 0.6).unwrap();
    let observed = DensityModel::uniform_interval(a, b).unwrap();
    let (model, _) = quadratic_chi2(&QuadraticFormSpec::<f64>::standard(1)).unwrap();
    let phi = |l: f64| (-0.5 * l * l).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut min_slack = f64::INFINITY;
    for seed in 0..20u64 {
        let mut rng = RngStream::from_seed(1_000 + seed);
        let params = model.sample_prior(1_000, &mut rng);
        let qois = evaluate_batch(&model, &params, 1).unwrap();
        let kde = fit_gkde(&qois, &BandwidthRule::Silverman).unwrap();
        let posterior = |pushforward: &dyn Fn(f64) -> f64, l: f64| {
            let q = l * l;
            let o = observed.pdf(&[q]).unwrap();
            if o == 0.0 {
                0.0
            } else {
                phi(l) * o / pushforward(q)
            }
        };
        let exact = |q: f64| chi2_pdf(1, q);
        let estimated = |q: f64| kde.pdf(&[q]).unwrap();
        let breaks = [-b.sqrt(), -a.sqrt(), a.sqrt(), b.sqrt()];
        let tv_post = trapezoid_segments(
            |l| (posterior(&exact, l) - posterior(&estimated, l)).abs(),
            &breaks,
            4_097,
        );
        let tv_pf = trapezoid(|q| (exact(q) - estimated(q)).abs(), a / 2.0, 8.0, 8_193);
        let nodes = 4_097;
        let mut c: f64 = 0.0;
        for i in 0..nodes {
            let q = a + (b - a) * i as f64 / (nodes - 1) as f64;
            c = c.max(observed.pdf(&[q]).unwrap() / estimated(q));
        }
        let slack = c * tv_pf + 1e-3 - tv_post;
        min_slack = min_slack.min(slack);
        assert!(
            slack >= 0.0,
            "seed {seed}: d_TV(post, post_hat) = {tv_post} exceeds C d_TV(pf, pf_hat) + 1e-3 = {}",
            c * tv_pf + 1e-3
        );
    }
    let elapsed = start.elapsed();
    println!(
        "acceptance criterion 8: error bound held for 20 seeds, min slack = {min_slack:.4}, \
         runtime {elapsed:?}"
    );
    assert_runtime(elapsed, 60, 8);
    println!("acceptance criterion 8: PASS");
}

#[test]
fn criterion_09_method_comparison_identity_and_divergence() {
    let start = Instant::now();
    let linear = run_comparison(1, 100_000, SEED).unwrap();
    let quintic = run_comparison(5, 100_000, SEED).unwrap();
    let elapsed = start.elapsed();
    println!(
        "acceptance criterion 9: p=1 posterior-KDE TV = {:.4} (< 0.05), \
         p=5 consistent TV = {:.4} (< 0.1) vs additive-noise TV = {:.4} (> 0.1), \
         runtime {elapsed:?}",
        linear.tv_between_posterior_parameter_kdes,
        quintic.tv_consistent_pushforward_vs_observed,
        quintic.tv_statistical_pushforward_vs_observed
    );
    assert!(
        linear.tv_between_posterior_parameter_kdes < 0.05,
        "p = 1: posterior parameter KDEs differ by {}",
        linear.tv_between_posterior_parameter_kdes
    );
    assert!(
        quintic.tv_consistent_pushforward_vs_observed < 0.1,
        "p = 5: consistent push-forward TV {}",
        quintic.tv_consistent_pushforward_vs_observed
    );
    assert!(
        quintic.tv_statistical_pushforward_vs_observed > 0.1,
        "p = 5: additive-noise push-forward TV {}",
        quintic.tv_statistical_pushforward_vs_observed
    );
    assert_runtime(elapsed, 120, 9);
    println!("acceptance criterion 9: PASS");
}

#[test]
fn criterion_10_property_suite() {
    let start = Instant::now();

    // Prior recovery is exact: observed == push-forward forces r == 1 and the
    // posterior equals the prior pointwise in floating point.
    let model: Arc<dyn ForwardModel<f64>> = Arc::new(Monomial::new(1).unwrap());
    let prior = DensityModel::uniform(vec![(-1.0, 1.0)]).unwrap();
    let mut rng = RngStream::from_seed(SEED);
    let (pf, batch) = build_pushforward(
        model.clone(),
        &prior,
        5_000,
        &mut rng,
        &BandwidthRule::Silverman,
        1,
    )
    .unwrap();
    let identity_handle =
        PosteriorHandle::new(prior.clone(), pf.clone(), pf, model.clone()).unwrap();
    for i in 0..100 {
        let l = [-0.99 + 0.02 * i as f64];
        assert_eq!(
            identity_handle.posterior_pdf(&l).unwrap().to_bits(),
            prior.pdf(&l).unwrap().to_bits(),
            "prior recovery not exact at {l:?}"
        );
    }
    let identity_diag = identity_handle.diagnostics(&batch).unwrap();
    assert_eq!(identity_diag.integral_estimate, 1.0);
    assert_eq!(identity_diag.kl_divergence, 0.0);

    // Rejection-sampler correctness: accepted samples against the exact
    // posterior CDF from 1-D quadrature (uniform prior through the identity
    // map has exact push-forward density 1/2).
    let observed = DensityModel::truncated_normal(0.25, 0.1, -1.0, 1.0, false).unwrap();
    let mut rng = RngStream::from_seed(SEED);
    let (pf, batch) = build_pushforward(
        model.clone(),
        &prior,
        100_000,
        &mut rng,
        &BandwidthRule::Silverman,
        1,
    )
    .unwrap();
    let handle = PosteriorHandle::new(prior.clone(), observed.clone(), pf, model).unwrap();
    let sweep = handle.ratio_sweep(&batch).unwrap();
    let (accepted, diag) = handle
        .rejection_from_sweep(&batch, &sweep, &mut rng, 1.0)
        .unwrap();

    let grid = 8_001;
    let h = 2.0 / (grid - 1) as f64;
    let pdf: Vec<f64> = (0..grid)
        .map(|i| {
            let l = -1.0 + i as f64 * h;
            prior.pdf(&[l]).unwrap() * observed.pdf(&[l]).unwrap() / 0.5
        })
        .collect();
    let mut cdf = vec![0.0; grid];
    for i in 1..grid {
        cdf[i] = cdf[i - 1] + 0.5 * (pdf[i] + pdf[i - 1]) * h;
    }
    let total = cdf[grid - 1];
    for v in cdf.iter_mut() {
        *v /= total;
    }
    let mut samples: Vec<f64> = accepted.params().column(0).to_vec();
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, &s) in samples.iter().enumerate() {
        let idx = (((s + 1.0) / h).floor() as usize).min(grid - 2);
        let frac = (s + 1.0) / h - idx as f64;
        let c = cdf[idx] * (1.0 - frac) + cdf[idx + 1] * frac;
        ks = ks.max((c - i as f64 / n).abs());
        ks = ks.max(((i + 1) as f64 / n - c).abs());
    }
    assert!(ks < 0.02, "rejection sampler KS distance {ks}");

    // Acceptance rate tracks I / max_ratio within three standard errors.
    let rate = diag.acceptance_rate.unwrap();
    let expected = diag.integral_estimate / diag.max_ratio;
    let se = (expected * (1.0 - expected) / batch.count() as f64).sqrt();
    assert!(
        (rate - expected).abs() <= 3.0 * se,
        "acceptance rate {rate} vs I/max_ratio {expected} (se {se})"
    );

    // Determinism: reruns are identical in every scientific field.
    let a = run_nonlinear_system(PriorKind::Uniform, 2_000, 7).unwrap();
    let b = run_nonlinear_system(PriorKind::Uniform, 2_000, 7).unwrap();
    assert_eq!(a.diagnostics, b.diagnostics);
    assert_eq!(
        a.tv_pushforward_prior_vs_observed.to_bits(),
        b.tv_pushforward_prior_vs_observed.to_bits()
    );
    assert_eq!(
        a.tv_pushforward_posterior_vs_observed.map(f64::to_bits),
        b.tv_pushforward_posterior_vs_observed.map(f64::to_bits)
    );
    assert_eq!(a.accepted_count, b.accepted_count);

    let elapsed = start.elapsed();
    println!(
        "acceptance criterion 10: prior recovery exact, rejection KS = {ks:.4} (< 0.02), \
         acceptance rate {rate:.4} vs {expected:.4}, deterministic reruns, runtime {elapsed:?}"
    );
    println!("acceptance criterion 10: PASS");
}
