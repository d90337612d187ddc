//! Scripted benchmark experiments producing serializable reports.
//!
//! Each runner drives the full pipeline (forward propagation, push-forward
//! KDE, diagnostics, rejection, push-forward comparison) with all randomness
//! drawn from one seeded stream, so every report is reproducible from
//! `(experiment id, configuration, seed)` alone; only the wall-clock field
//! varies between reruns.

use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::baselines::{
    parameter_kde, pushforward_compare, statistical_posterior_rejection, LikelihoodSpec,
};
use crate::density::{
    chi2_pdf, chi2_quantile, fit_gkde, lscv_bandwidth, BandwidthRule, DensityModel, GaussianKde,
};
use crate::domain::{evaluate_batch, ForwardModel, SampleBatch};
use crate::inference::{batch_from_params, build_pushforward, Diagnostics, PosteriorHandle};
use crate::metrics::{
    fit_rate, joint_support, posterior_l1_error, tv_distance_quadrature, ConvergenceRecord,
};
use crate::models::{
    quadratic_chi2_block, quantile_matched_uniform_observed, BlockQuantileRule, Monomial,
    NonlinearSystem, PiecewiseSmooth,
};
use crate::quadrature::trapezoid_segments;
use crate::{Error, Result, RngStream, Scalar};

/// Default sample count for the nonlinear-system and piecewise experiments.
pub const DEFAULT_SAMPLES: usize = 10_000;
/// Default sample count for the monomial comparison.
pub const DEFAULT_COMPARE_SAMPLES: usize = 100_000;
/// Default build-size grid for the convergence studies.
pub const DEFAULT_N_GRID: [usize; 5] = [100, 316, 1_000, 3_162, 10_000];
/// Evaluation sample count for the discrete L1 posterior error.
pub const L1_EVAL_SAMPLES: usize = 10_000;

const TV_NODES: usize = 8_193;
/// Push-forward density threshold below which a scan point counts as part of
/// a support gap.
const GAP_THRESHOLD: f64 = 1e-6;
const GAP_SCAN_POINTS: usize = 4_096;
/// The gap scan rebuilds the KDE at this fixed resolution (bandwidth =
/// range / GAP_SCAN_RESOLUTION). The pipeline's own bandwidth is tuned for
/// density accuracy and oversmooths interior gaps far above the threshold.
const GAP_SCAN_RESOLUTION: f64 = 256.0;

/// Diagnostics in plain-serializable form.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiagnosticsSummary {
    pub integral_estimate: f64,
    pub kl_divergence: f64,
    pub max_ratio: f64,
    pub acceptance_rate: Option<f64>,
    pub dominance_violations: usize,
}

impl From<&Diagnostics<f64>> for DiagnosticsSummary {
    fn from(d: &Diagnostics<f64>) -> Self {
        Self {
            integral_estimate: d.integral_estimate,
            kl_divergence: d.kl_divergence,
            max_ratio: d.max_ratio,
            acceptance_rate: d.acceptance_rate,
            dominance_violations: d.dominance_violations,
        }
    }
}

/// Record of one full pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment_id: String,
    /// Echo of the configuration that produced this report.
    pub config: serde_json::Value,
    pub diagnostics: DiagnosticsSummary,
    pub tv_pushforward_prior_vs_observed: f64,
    /// `None` when rejection accepted too few samples to fit a posterior
    /// push-forward estimate (fewer than 2).
    pub tv_pushforward_posterior_vs_observed: Option<f64>,
    pub accepted_count: usize,
    /// Longest interior interval of the QoI range where the push-forward
    /// density estimate is negligible; evidence of a disconnected image.
    pub support_gap: Option<f64>,
    pub wall_ms: u64,
    pub seed: u64,
}

impl ExperimentReport {
    /// Every reported real must be finite.
    pub fn validate(&self) -> Result<()> {
        let reals = [
            self.diagnostics.integral_estimate,
            self.diagnostics.kl_divergence,
            self.diagnostics.max_ratio,
            self.diagnostics.acceptance_rate.unwrap_or(0.0),
            self.tv_pushforward_prior_vs_observed,
            self.tv_pushforward_posterior_vs_observed.unwrap_or(0.0),
            self.support_gap.unwrap_or(0.0),
        ];
        if reals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "report {} contains non-finite values",
                self.experiment_id
            )));
        }
        Ok(())
    }
}

/// Prior families for the nonlinear-system experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    Uniform,
    Beta25,
}

#[allow(clippy::too_many_arguments)]
fn pipeline(
    experiment_id: &str,
    model: Arc<dyn ForwardModel<f64>>,
    prior: DensityModel<f64>,
    observed: DensityModel<f64>,
    samples: usize,
    seed: u64,
    config: serde_json::Value,
    scan_gap: bool,
    cross_validated_bandwidth: bool,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut rng = RngStream::from_seed(seed);
    let params = prior.sample(samples, &mut rng)?;
    let batch = batch_from_params(model.as_ref(), params, rng.seed(), 1)?;
    // Sharply multimodal push-forwards need a cross-validated width: the
    // normal-reference rules read the cluster separation as spread and
    // oversmooth, which biases every ratio-based diagnostic.
    let rule = if cross_validated_bandwidth {
        BandwidthRule::Explicit(vec![lscv_bandwidth(batch.qois())?])
    } else {
        BandwidthRule::Silverman
    };
    let pushforward = fit_gkde(batch.qois(), &rule)?;
    let handle = PosteriorHandle::new(prior, observed.clone(), pushforward.clone(), model)?;
    let sweep = handle.ratio_sweep(&batch)?;
    let (accepted, diagnostics) = handle.rejection_from_sweep(&batch, &sweep, &mut rng, 1.0)?;

    let (tv_prior, tv_posterior) = if accepted.count() >= 2 {
        let posterior_pf: DensityModel<f64> = fit_gkde(accepted.qois(), &BandwidthRule::Silverman)?;
        let (lo, hi) = {
            let (a, b) = joint_support(&pushforward, &observed)?;
            let (c, d) = joint_support(&posterior_pf, &observed)?;
            (a.min(c), b.max(d))
        };
        (
            tv_distance_quadrature(&pushforward, &observed, (lo, hi), TV_NODES)?,
            Some(tv_distance_quadrature(
                &posterior_pf,
                &observed,
                (lo, hi),
                TV_NODES,
            )?),
        )
    } else {
        let support = joint_support(&pushforward, &observed)?;
        (
            tv_distance_quadrature(&pushforward, &observed, support, TV_NODES)?,
            None,
        )
    };

    let support_gap = scan_gap.then(|| pushforward_support_gap(batch.qois()));

    let report = ExperimentReport {
        experiment_id: experiment_id.to_string(),
        config,
        diagnostics: DiagnosticsSummary::from(&diagnostics),
        tv_pushforward_prior_vs_observed: tv_prior,
        tv_pushforward_posterior_vs_observed: tv_posterior,
        accepted_count: accepted.count(),
        support_gap,
        wall_ms: start.elapsed().as_millis() as u64,
        seed,
    };
    report.validate()?;
    Ok(report)
}

/// Length of the longest interior run of the QoI range where a
/// fixed-resolution KDE over the samples stays below [`GAP_THRESHOLD`]:
/// evidence of a disconnected image. Zero for connected supports.
fn pushforward_support_gap(qois: &Array2<f64>) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &q in qois.column(0).iter() {
        lo = lo.min(q);
        hi = hi.max(q);
    }
    let bandwidth = (hi - lo) / GAP_SCAN_RESOLUTION;
    let Ok(scan_kde) = GaussianKde::new(qois.clone(), vec![bandwidth]) else {
        return 0.0;
    };
    let step = (hi - lo) / (GAP_SCAN_POINTS - 1) as f64;
    let mut longest = 0usize;
    let mut current = 0usize;
    for i in 0..GAP_SCAN_POINTS {
        let q = lo + step * i as f64;
        if scan_kde.pdf(&[q]).unwrap_or(0.0) < GAP_THRESHOLD {
            current += 1;
            longest = longest.max(current);
        } else {
            current = 0;
        }
    }
    longest as f64 * step
}

/// Nonlinear-system experiment: observed `N(0.3, 0.025^2)` on the scalar QoI,
/// uniform or scaled-Beta(2,5) prior over the calibrated parameter box.
///
/// The observed density is evaluated untruncated; any mass it places outside
/// the image of the map shows up as a deficit in the integral diagnostic.
pub fn run_nonlinear_system(
    prior_kind: PriorKind,
    samples: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    if samples < 100 {
        return Err(Error::InvalidInput("need at least 100 samples".into()));
    }
    let domain = NonlinearSystem::domain::<f64>();
    let bounds = domain.bounds().to_vec();
    let prior = match prior_kind {
        PriorKind::Uniform => DensityModel::uniform(bounds)?,
        PriorKind::Beta25 => DensityModel::beta(2.0, 5.0, bounds)?,
    };
    let observed = DensityModel::normal(vec![0.3], vec![0.025])?;
    let id = match prior_kind {
        PriorKind::Uniform => "nonlinear-system-uniform",
        PriorKind::Beta25 => "nonlinear-system-beta25",
    };
    let config = json!({
        "model": "nonlinear-system",
        "prior": prior_kind,
        "observed": {"kind": "normal", "mean": [0.3], "std": [0.025]},
        "samples": samples,
        "seed": seed,
        "bandwidth": "silverman",
    });
    pipeline(
        id,
        Arc::new(NonlinearSystem),
        prior,
        observed,
        samples,
        seed,
        config,
        false,
        false,
    )
}

/// Piecewise map on `[-1, 1]^2` with the default observed `N(-2, 0.25^2)`.
/// Also reports the push-forward support gap exhibiting the disconnected
/// image.
pub fn run_piecewise(samples: usize, seed: u64) -> Result<ExperimentReport> {
    run_piecewise_with_observed(samples, seed, -2.0, 0.25)
}

/// Piecewise experiment with a caller-chosen observed normal; moving the mean
/// outside the image is the standard way to exercise the dominance
/// diagnostics.
pub fn run_piecewise_with_observed(
    samples: usize,
    seed: u64,
    observed_mean: f64,
    observed_std: f64,
) -> Result<ExperimentReport> {
    if samples < 100 {
        return Err(Error::InvalidInput("need at least 100 samples".into()));
    }
    let model = PiecewiseSmooth::new(2)?;
    let prior = DensityModel::uniform(model.domain::<f64>().bounds().to_vec())?;
    let observed = DensityModel::normal(vec![observed_mean], vec![observed_std])?;
    let config = json!({
        "model": "piecewise-2d",
        "prior": "uniform",
        "observed": {"kind": "normal", "mean": [observed_mean], "std": [observed_std]},
        "samples": samples,
        "seed": seed,
        "bandwidth": "lscv",
    });
    pipeline(
        "piecewise-2d",
        Arc::new(model),
        prior,
        observed,
        samples,
        seed,
        config,
        true,
        true,
    )
}

/// One (dimension, QoI-count) cell of the convergence study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub dim: usize,
    pub qoi: usize,
    pub sample_sizes: Vec<usize>,
    /// Median L1 error per sample size.
    pub median_errors: Vec<f64>,
    pub fitted_slope: f64,
    pub repetitions: usize,
    /// `(sample size, repetition, error)` rows for CSV emission.
    pub per_rep: Vec<(usize, usize, f64)>,
    pub seed: u64,
}

impl ConvergenceStudy {
    pub fn record(&self) -> Result<ConvergenceRecord<f64>> {
        ConvergenceRecord::new(
            self.sample_sizes.clone(),
            self.median_errors.clone(),
            self.repetitions,
        )
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}

/// Convergence of the posterior error as the push-forward KDE is built from
/// more samples.
///
/// For each `(d, m)` pair: the block quadratic map with seeded covariances,
/// the exact chi-squared push-forward, and a quantile-matched uniform
/// observed box. Each repetition draws a fresh 10,000-sample evaluation set
/// and, per build size `N`, fits a KDE to `N` pushed prior samples and
/// computes the discrete L1 posterior error on the evaluation set. Medians
/// over repetitions feed the log-log rate fit.
///
/// Two variance-reduction couplings make the fitted rates comparable across
/// cells without changing any per-cell error distribution: build sets are
/// nested prefixes of one draw per repetition, and every cell of a
/// repetition consumes the same standard-normal matrix, so that e.g. the
/// `d = 2` and `d = 100` studies see coupled sample-quantile fluctuations.
/// Repetitions run in parallel, each owning its own split stream.
pub fn run_chi2_convergence(
    dims: &[usize],
    qoi_counts: &[usize],
    n_grid: &[usize],
    reps: usize,
    seed: u64,
    rule: BlockQuantileRule,
) -> Result<Vec<ConvergenceStudy>> {
    if reps < 3 {
        return Err(Error::InvalidInput("need at least 3 repetitions".into()));
    }
    if n_grid.len() < 3 || !n_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidInput(
            "build-size grid must be strictly increasing with at least 3 sizes".into(),
        ));
    }
    let mut cells = Vec::new();
    for &d in dims {
        for &m in qoi_counts {
            if d % m != 0 {
                return Err(Error::InvalidInput(format!(
                    "dim {d} not divisible by qoi count {m}"
                )));
            }
            let cov_seed = mix(seed, d as u64, m as u64);
            let (model, exact_pf) = quadratic_chi2_block::<f64>(d, m, Some(cov_seed))?;
            let observed = quantile_matched_uniform_observed::<f64>(d, m, rule)?;
            cells.push((d, m, model, exact_pf, observed));
        }
    }
    let max_dim = *dims.iter().max().expect("nonempty dims");
    let n_max = *n_grid.last().expect("nonempty grid");
    let base = RngStream::from_seed(seed);

    // rows[rep][cell][grid] = error
    let rows: Vec<Vec<Vec<f64>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = base.split(rep as u64);
            let mut draw = |count: usize| -> Array2<f64> {
                let mut z = Array2::zeros((count, max_dim));
                for v in z.iter_mut() {
                    *v = f64::standard_normal(&mut rng);
                }
                z
            };
            let eval_normals = draw(L1_EVAL_SAMPLES);
            let build_normals = draw(n_max);
            let mut cell_errs = Vec::with_capacity(cells.len());
            for (_, _, model, exact_pf, observed) in &cells {
                let eval_params = model.prior_from_normals(&eval_normals.view());
                let eval_qois = evaluate_batch(model, &eval_params, 1)?;
                let build_params = model.prior_from_normals(&build_normals.view());
                let build_qois = evaluate_batch(model, &build_params, 1)?;
                let mut errs = Vec::with_capacity(n_grid.len());
                for &n in n_grid {
                    let prefix = build_qois.slice(ndarray::s![..n, ..]).to_owned();
                    let kde = fit_gkde(&prefix, &BandwidthRule::Silverman)?;
                    let (err, _violations) =
                        posterior_l1_error(exact_pf, &kde, observed, &eval_qois)?;
                    errs.push(err);
                }
                cell_errs.push(errs);
            }
            Ok(cell_errs)
        })
        .collect::<Result<_>>()?;

    let mut studies = Vec::new();
    for (ci, (d, m, ..)) in cells.iter().enumerate() {
        let mut per_rep = Vec::with_capacity(reps * n_grid.len());
        let mut medians = Vec::with_capacity(n_grid.len());
        for (gi, &n) in n_grid.iter().enumerate() {
            let mut errs: Vec<f64> = (0..reps).map(|rep| rows[rep][ci][gi]).collect();
            for (rep, &e) in errs.iter().enumerate() {
                per_rep.push((n, rep, e));
            }
            medians.push(median(&mut errs));
        }
        let mut record = ConvergenceRecord::new(n_grid.to_vec(), medians.clone(), reps)?;
        let slope = fit_rate(&mut record)?;
        studies.push(ConvergenceStudy {
            dim: *d,
            qoi: *m,
            sample_sizes: n_grid.to_vec(),
            median_errors: medians,
            fitted_slope: slope,
            repetitions: reps,
            per_rep,
            seed,
        });
    }
    Ok(studies)
}

/// Monomial comparison between the observation-consistent and
/// likelihood-based posteriors on shared prior samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub experiment_id: String,
    pub config: serde_json::Value,
    pub power: u32,
    pub diagnostics: DiagnosticsSummary,
    pub tv_consistent_pushforward_vs_observed: f64,
    pub tv_statistical_pushforward_vs_observed: f64,
    /// Total variation between 1-D KDEs of the two accepted parameter sets.
    pub tv_between_posterior_parameter_kdes: f64,
    pub consistent_accepted: usize,
    pub statistical_accepted: usize,
    pub statistical_acceptance_rate: f64,
    pub statistical_normalization: f64,
    pub wall_ms: u64,
    pub seed: u64,
}

/// Run the monomial map comparison for odd `power`, with datum 0.25 and noise
/// / observed standard deviation 0.1.
pub fn run_comparison(power: u32, samples: usize, seed: u64) -> Result<ComparisonReport> {
    let start = Instant::now();
    let model = Arc::new(Monomial::new(power)?);
    let prior = DensityModel::uniform(vec![(-1.0, 1.0)])?;
    // Observed: the additive-noise normal truncated to the image [-1, 1],
    // deliberately left unnormalized to mirror the likelihood pairing.
    let observed = DensityModel::truncated_normal(0.25, 0.1, -1.0, 1.0, false)?;
    let mut rng = RngStream::from_seed(seed);
    let (pushforward, batch) = build_pushforward(
        model.clone(),
        &prior,
        samples,
        &mut rng,
        &BandwidthRule::Silverman,
        1,
    )?;
    let handle = PosteriorHandle::new(prior, observed.clone(), pushforward, model)?;
    let sweep = handle.ratio_sweep(&batch)?;
    let (consistent, diagnostics) = handle.rejection_from_sweep(&batch, &sweep, &mut rng, 1.0)?;

    let spec = LikelihoodSpec::new(vec![0.25], vec![0.1])?;
    let statistical = statistical_posterior_rejection(&spec, &batch, &mut rng)?;

    let (tv_c, tv_s) = pushforward_compare(
        &consistent,
        &statistical.accepted,
        &observed,
        &BandwidthRule::Silverman,
    )?;

    let kde_c: DensityModel<f64> = parameter_kde(&consistent, &BandwidthRule::Silverman)?.into();
    let kde_s: DensityModel<f64> =
        parameter_kde(&statistical.accepted, &BandwidthRule::Silverman)?.into();
    let support = joint_support(&kde_c, &kde_s)?;
    let tv_params = tv_distance_quadrature(&kde_c, &kde_s, support, TV_NODES)?;

    Ok(ComparisonReport {
        experiment_id: format!("monomial-compare-p{power}"),
        config: json!({
            "model": format!("monomial-p{power}"),
            "prior": "uniform",
            "observed": {"kind": "truncated-normal", "mean": 0.25, "std": 0.1,
                         "lo": -1.0, "hi": 1.0, "renormalize": false},
            "datum": 0.25,
            "noise_std": 0.1,
            "samples": samples,
            "seed": seed,
        }),
        power,
        diagnostics: DiagnosticsSummary::from(&diagnostics),
        tv_consistent_pushforward_vs_observed: tv_c,
        tv_statistical_pushforward_vs_observed: tv_s,
        tv_between_posterior_parameter_kdes: tv_params,
        consistent_accepted: consistent.count(),
        statistical_accepted: statistical.accepted.count(),
        statistical_acceptance_rate: statistical.acceptance_rate,
        statistical_normalization: statistical.normalization,
        wall_ms: start.elapsed().as_millis() as u64,
        seed,
    })
}

/// Stability oracle report: total variation between two observed densities
/// and between their exact posteriors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub delta: f64,
    pub interval: (f64, f64),
    pub tv_observed_pair: f64,
    pub tv_posterior_pair: f64,
    pub seed: u64,
}

/// Observed-perturbation stability on the 1-D squaring map.
///
/// `Q(lambda) = lambda^2` with a standard-normal prior has the exact
/// chi-squared(1) push-forward, so for a uniform observed interval the
/// posterior is available in closed form and both total variations can be
/// computed by breakpoint-aware quadrature. The posterior distance equals the
/// observed distance exactly; any reported difference is quadrature error.
pub fn run_stability_oracle(delta: f64, seed: u64) -> Result<StabilityReport> {
    let a: f64 = chi2_quantile(1, 0.4)?;
    let b: f64 = chi2_quantile(1, 0.6)?;
    if a + delta <= 0.0 {
        return Err(Error::Dominance(format!(
            "perturbed interval [{}, {}] leaves the image [0, inf) of the squaring map",
            a + delta,
            b + delta
        )));
    }
    let obs1 = DensityModel::uniform_interval(a, b)?;
    let obs2 = DensityModel::uniform_interval(a + delta, b + delta)?;

    let mut q_breaks = vec![a, a + delta, b, b + delta];
    q_breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let tv_obs = trapezoid_segments(
        |q| (obs1.pdf(&[q]).unwrap() - obs2.pdf(&[q]).unwrap()).abs(),
        &q_breaks,
        4_097,
    );

    // Exact posterior: prior(l) * obs(l^2) / chi2_pdf(1, l^2), nonzero only
    // where the observed interval pulls back, i.e. on +-[sqrt(a), sqrt(b)].
    let phi = |l: f64| (-0.5 * l * l).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let posterior = |obs: &DensityModel<f64>, l: f64| {
        let q = l * l;
        let o = obs.pdf(&[q]).unwrap();
        if o == 0.0 {
            0.0
        } else {
            phi(l) * o / chi2_pdf(1, q)
        }
    };
    let mut l_breaks: Vec<f64> = q_breaks
        .iter()
        .flat_map(|&q| [q.sqrt(), -q.sqrt()])
        .collect();
    l_breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let tv_post = trapezoid_segments(
        |l| (posterior(&obs1, l) - posterior(&obs2, l)).abs(),
        &l_breaks,
        4_097,
    );

    Ok(StabilityReport {
        delta,
        interval: (a, b),
        tv_observed_pair: tv_obs,
        tv_posterior_pair: tv_post,
        seed,
    })
}

/// Synthetic power-law error curve (`c * N^exponent`), for exercising the
/// convergence report path end to end without any simulation.
pub fn synthetic_powerlaw_study(
    dim: usize,
    qoi: usize,
    n_grid: &[usize],
    exponent: f64,
    seed: u64,
) -> Result<ConvergenceStudy> {
    let errors: Vec<f64> = n_grid
        .iter()
        .map(|&n| 2.5 * (n as f64).powf(exponent))
        .collect();
    let mut record = ConvergenceRecord::new(n_grid.to_vec(), errors.clone(), 1)?;
    let slope = fit_rate(&mut record)?;
    Ok(ConvergenceStudy {
        dim,
        qoi,
        sample_sizes: n_grid.to_vec(),
        median_errors: errors.clone(),
        fitted_slope: slope,
        repetitions: 1,
        per_rep: n_grid
            .iter()
            .zip(errors)
            .map(|(&n, e)| (n, 0, e))
            .collect(),
        seed,
    })
}

/// KDE over an accepted batch's QoI column; exposed for report tooling.
pub fn posterior_pushforward_kde(accepted: &SampleBatch<f64>) -> Result<GaussianKde<f64>> {
    GaussianKde::fit(accepted.qois(), &BandwidthRule::Silverman)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn small_nonlinear_run_produces_valid_report() {
        let report = run_nonlinear_system(PriorKind::Uniform, 100, 7).unwrap();
        report.validate().unwrap();
        assert_eq!(report.experiment_id, "nonlinear-system-uniform");
        assert!(report.accepted_count > 0);
        assert!(run_nonlinear_system(PriorKind::Uniform, 10, 7).is_err());
    }

    #[test]
    fn reports_are_reproducible_modulo_wall_clock() {
        let a = run_nonlinear_system(PriorKind::Beta25, 500, 11).unwrap();
        let b = run_nonlinear_system(PriorKind::Beta25, 500, 11).unwrap();
        assert_eq!(a.diagnostics, b.diagnostics);
        assert_eq!(
            a.tv_pushforward_posterior_vs_observed.map(f64::to_bits),
            b.tv_pushforward_posterior_vs_observed.map(f64::to_bits)
        );
        assert_eq!(a.accepted_count, b.accepted_count);
    }

    #[test]
    fn piecewise_detects_support_gap() {
        let report = run_piecewise(2_000, 3).unwrap();
        assert!(report.support_gap.unwrap() > 0.0);
    }

    #[test]
    fn piecewise_incompatible_observed_flags_dominance() {
        // Observed mean far outside the image: the report still comes back,
        // with the failure visible in both diagnostics.
        let report = run_piecewise_with_observed(2_000, 3, 10.0, 0.25).unwrap();
        assert!(report.diagnostics.dominance_violations > 0);
        assert!(
            report.diagnostics.integral_estimate < 0.5,
            "integral {} should be far from 1",
            report.diagnostics.integral_estimate
        );
    }

    #[test]
    fn stability_oracle_zero_delta() {
        let report = run_stability_oracle(0.0, 0).unwrap();
        assert_eq!(report.tv_observed_pair, 0.0);
        assert_eq!(report.tv_posterior_pair, 0.0);
    }

    #[test]
    fn stability_oracle_matches_theoretical_equality() {
        for delta in [0.01, 0.05, 0.1] {
            let report = run_stability_oracle(delta, 0).unwrap();
            // Closed form for the observed pair: 2 delta / (b - a) while the
            // shift stays within the interval length.
            let width = report.interval.1 - report.interval.0;
            // Quadrature tolerance: interval endpoints carry node weight h/2.
            assert_relative_eq!(report.tv_observed_pair, 2.0 * delta / width, epsilon = 1e-4);
            assert!((report.tv_posterior_pair - report.tv_observed_pair).abs() < 1e-3);
        }
    }

    #[test]
    fn stability_oracle_rejects_exiting_interval() {
        assert!(matches!(
            run_stability_oracle(-1.0, 0),
            Err(Error::Dominance(_))
        ));
    }

    #[test]
    fn comparison_rejects_even_powers() {
        assert!(run_comparison(2, 1_000, 1).is_err());
    }

    #[test]
    fn synthetic_powerlaw_recovers_exponent() {
        let study =
            synthetic_powerlaw_study(2, 1, &DEFAULT_N_GRID, -0.4, 0).unwrap();
        assert_relative_eq!(study.fitted_slope, -0.4, epsilon = 1e-10);
    }

    #[test]
    fn convergence_study_guards() {
        assert!(run_chi2_convergence(
            &[2],
            &[1],
            &DEFAULT_N_GRID,
            1,
            0,
            BlockQuantileRule::MassPreserving
        )
        .is_err());
        assert!(run_chi2_convergence(
            &[3],
            &[2],
            &DEFAULT_N_GRID,
            3,
            0,
            BlockQuantileRule::MassPreserving
        )
        .is_err());
        assert!(run_chi2_convergence(
            &[2],
            &[1],
            &[100, 200],
            3,
            0,
            BlockQuantileRule::MassPreserving
        )
        .is_err());
    }
}
