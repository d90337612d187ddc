//! The six subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use dci_core::density::{fit_gkde, BandwidthRule, DensityModel, GaussianKde};
use dci_core::experiments::{
    run_chi2_convergence, run_comparison, run_stability_oracle, synthetic_powerlaw_study,
    ConvergenceStudy, DiagnosticsSummary, ExperimentReport,
};
use dci_core::inference::{batch_from_params, PosteriorHandle, RatioSweep};
use dci_core::metrics::{joint_support, tv_distance_quadrature};
use dci_core::domain::SampleBatch;
use dci_core::RngStream;

use crate::config::{
    bandwidth_label, bandwidth_rule, load, resolve, CompareConfig, ConvergeConfig, RunConfig,
    StabilityConfig,
};
use crate::io::{
    read_json, read_samples_csv, write_json, write_samples_csv, PushforwardFile,
};
use crate::CliError;

const TV_NODES: usize = 8_193;

pub struct CommandContext {
    pub config_path: PathBuf,
    pub seed_override: Option<u64>,
    pub out_override: Option<PathBuf>,
    pub block_quantile_override: Option<crate::config::BlockQuantileConfig>,
    pub workers: usize,
}

impl CommandContext {
    fn out_dir(&self, configured: &Option<PathBuf>) -> PathBuf {
        self.out_override
            .clone()
            .or_else(|| configured.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    fn ensure_out(&self, configured: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        let dir = self.out_dir(configured);
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::io(format!("creating {}: {e}", dir.display())))?;
        Ok(dir)
    }

    fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut config: RunConfig = load(&self.config_path)?;
        if let Some(seed) = self.seed_override {
            config.seed = seed;
        }
        if let Some(rule) = self.block_quantile_override {
            config.flags.block_quantile = rule;
        }
        Ok(config)
    }
}

/// `pushforward`: forward-propagate the prior and persist the sample batch
/// plus the fitted KDE.
pub fn cmd_pushforward(ctx: &CommandContext) -> Result<(), CliError> {
    let config = ctx.run_config()?;
    let out = ctx.ensure_out(&config.output_dir)?;
    let resolved = resolve(&config)?;
    let mut rng = RngStream::from_seed(config.seed);
    let params = resolved
        .prior
        .sample(config.samples, &mut rng)
        .map_err(CliError::from)?;
    let batch = batch_from_params(
        resolved.built.model.as_ref(),
        params,
        config.seed,
        ctx.workers,
    )?;
    let rule = bandwidth_rule(&config.bandwidth, batch.qois())?;
    let kde = GaussianKde::fit(batch.qois(), &rule)?;

    write_samples_csv(&out.join("samples.csv"), &batch)?;
    write_json(
        &out.join("pushforward.json"),
        &PushforwardFile {
            kind: "gaussian-kde".into(),
            samples_file: "samples.csv".into(),
            model: resolved.built.model.name().to_string(),
            seed: config.seed,
            count: batch.count(),
            qoi_dim: batch.qoi_dim(),
            bandwidth: kde.bandwidth().to_vec(),
            bandwidth_rule: bandwidth_label(&config.bandwidth),
        },
    )?;
    eprintln!(
        "wrote {} samples and push-forward estimate to {}",
        batch.count(),
        out.display()
    );
    Ok(())
}

struct LoadedRun {
    config: RunConfig,
    out: PathBuf,
    batch: SampleBatch<f64>,
    handle: PosteriorHandle<f64>,
    sweep: RatioSweep<f64>,
}

fn load_run(ctx: &CommandContext, from: &Option<PathBuf>) -> Result<LoadedRun, CliError> {
    let config = ctx.run_config()?;
    let out = ctx.ensure_out(&config.output_dir)?;
    let from = from.clone().unwrap_or_else(|| out.clone());
    let resolved = resolve(&config)?;

    let pushforward_file: PushforwardFile = read_json(&from.join("pushforward.json"))?;
    let samples = read_samples_csv(&from.join(Path::new(&pushforward_file.samples_file)))?;
    let batch = SampleBatch::new(
        samples.params,
        samples.qois,
        pushforward_file.seed,
        pushforward_file.model.clone(),
    )?;
    let kde = GaussianKde::new(batch.qois().clone(), pushforward_file.bandwidth.clone())?;
    let handle = PosteriorHandle::new(
        resolved.prior,
        resolved.observed,
        kde.into(),
        resolved.built.model,
    )?;
    let sweep = handle.ratio_sweep(&batch)?;
    Ok(LoadedRun {
        config,
        out,
        batch,
        handle,
        sweep,
    })
}

fn dominance_exit(
    diagnostics: &DiagnosticsSummary,
    batch_count: usize,
    threshold: f64,
) -> Result<(), CliError> {
    let fraction = diagnostics.dominance_violations as f64 / batch_count as f64;
    if fraction > threshold {
        return Err(CliError::dominance(format!(
            "dominance violations on {:.1}% of probes (threshold {:.1}%): \
             the observed density is not covered by the push-forward of the prior",
            fraction * 100.0,
            threshold * 100.0
        )));
    }
    Ok(())
}

/// `posterior`: rejection-sample the posterior from persisted push-forward
/// files and write the accepted batch plus a full report.
pub fn cmd_posterior(ctx: &CommandContext, from: &Option<PathBuf>) -> Result<(), CliError> {
    let start = Instant::now();
    let run = load_run(ctx, from)?;
    let mut rng = RngStream::from_seed(run.config.seed).split(1);
    let (accepted, diagnostics) = run
        .handle
        .rejection_from_sweep(&run.batch, &run.sweep, &mut rng, run.config.flags.safety_factor)
        .map_err(CliError::from)?;

    let observed = run.handle.observed();
    let (lo, hi) = joint_support(run.handle.pushforward(), observed)?;
    let tv_prior = tv_distance_quadrature(run.handle.pushforward(), observed, (lo, hi), TV_NODES)?;
    let tv_posterior = if accepted.count() >= 2 {
        let posterior_pf: DensityModel<f64> =
            fit_gkde(accepted.qois(), &BandwidthRule::Silverman)?;
        let support = joint_support(&posterior_pf, observed)?;
        Some(tv_distance_quadrature(
            &posterior_pf,
            observed,
            support,
            TV_NODES,
        )?)
    } else {
        None
    };

    write_samples_csv(&run.out.join("accepted.csv"), &accepted)?;
    let summary = DiagnosticsSummary {
        integral_estimate: diagnostics.integral_estimate,
        kl_divergence: diagnostics.kl_divergence,
        max_ratio: diagnostics.max_ratio,
        acceptance_rate: diagnostics.acceptance_rate,
        dominance_violations: diagnostics.dominance_violations,
    };
    let report = ExperimentReport {
        experiment_id: run.config.experiment_id.clone(),
        config: serde_json::to_value(&run.config)
            .map_err(|e| CliError::io(format!("serializing config echo: {e}")))?,
        diagnostics: summary.clone(),
        tv_pushforward_prior_vs_observed: tv_prior,
        tv_pushforward_posterior_vs_observed: tv_posterior,
        accepted_count: accepted.count(),
        support_gap: None,
        wall_ms: start.elapsed().as_millis() as u64,
        seed: run.config.seed,
    };
    write_json(&run.out.join("report.json"), &report)?;
    eprintln!(
        "accepted {} of {} samples; report written to {}",
        accepted.count(),
        run.batch.count(),
        run.out.display()
    );
    dominance_exit(&summary, run.batch.count(), run.config.flags.dominance_threshold)
}

/// `diagnose`: mass/KL/dominance diagnostics without sampling the posterior.
pub fn cmd_diagnose(ctx: &CommandContext, from: &Option<PathBuf>) -> Result<(), CliError> {
    let start = Instant::now();
    let run = load_run(ctx, from)?;
    let diagnostics = run.handle.diagnostics_from_sweep(&run.sweep)?;
    let observed = run.handle.observed();
    let (lo, hi) = joint_support(run.handle.pushforward(), observed)?;
    let tv_prior = tv_distance_quadrature(run.handle.pushforward(), observed, (lo, hi), TV_NODES)?;
    let summary = DiagnosticsSummary {
        integral_estimate: diagnostics.integral_estimate,
        kl_divergence: diagnostics.kl_divergence,
        max_ratio: diagnostics.max_ratio,
        acceptance_rate: None,
        dominance_violations: diagnostics.dominance_violations,
    };
    let report = ExperimentReport {
        experiment_id: run.config.experiment_id.clone(),
        config: serde_json::to_value(&run.config)
            .map_err(|e| CliError::io(format!("serializing config echo: {e}")))?,
        diagnostics: summary.clone(),
        tv_pushforward_prior_vs_observed: tv_prior,
        tv_pushforward_posterior_vs_observed: None,
        accepted_count: 0,
        support_gap: None,
        wall_ms: start.elapsed().as_millis() as u64,
        seed: run.config.seed,
    };
    write_json(&run.out.join("report.json"), &report)?;
    eprintln!(
        "I = {:.4}, KL = {:.4}, max ratio = {:.4}; report written to {}",
        summary.integral_estimate,
        summary.kl_divergence,
        summary.max_ratio,
        run.out.display()
    );
    dominance_exit(&summary, run.batch.count(), run.config.flags.dominance_threshold)
}

fn fmt(value: f64) -> String {
    format!("{value:.16e}")
}

fn write_convergence_csv(path: &Path, studies: &[ConvergenceStudy]) -> Result<(), CliError> {
    let mut out = String::from("d,m,n,rep,l1_error,fitted_slope\n");
    for study in studies {
        for &(n, rep, err) in &study.per_rep {
            out.push_str(&format!("{},{},{n},{rep},{},\n", study.dim, study.qoi, fmt(err)));
        }
        out.push_str(&format!(
            "{},{},,,,{}\n",
            study.dim,
            study.qoi,
            fmt(study.fitted_slope)
        ));
    }
    std::fs::write(path, out).map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))
}

/// `converge`: the KDE build-size convergence study, one CSV row per
/// repetition plus a fitted-slope summary row per `(d, m)` cell.
pub fn cmd_converge(ctx: &CommandContext) -> Result<(), CliError> {
    let mut config: ConvergeConfig = load(&ctx.config_path)?;
    if let Some(seed) = ctx.seed_override {
        config.seed = seed;
    }
    if let Some(rule) = ctx.block_quantile_override {
        config.block_quantile = rule;
    }
    let out = ctx.ensure_out(&config.output_dir)?;
    let studies = if config.synthetic_powerlaw {
        let mut studies = Vec::new();
        for &d in &config.dims {
            for &m in &config.qoi_counts {
                studies.push(synthetic_powerlaw_study(
                    d,
                    m,
                    &config.n_grid,
                    -0.4,
                    config.seed,
                )?);
            }
        }
        studies
    } else {
        run_chi2_convergence(
            &config.dims,
            &config.qoi_counts,
            &config.n_grid,
            config.reps,
            config.seed,
            config.block_quantile.into(),
        )?
    };
    write_convergence_csv(&out.join("convergence.csv"), &studies)?;
    write_json(&out.join("convergence.json"), &studies)?;
    for study in &studies {
        eprintln!(
            "d = {}, m = {}: fitted slope {:.4}",
            study.dim, study.qoi, study.fitted_slope
        );
    }
    Ok(())
}

/// `compare`: observation-consistent versus additive-noise posteriors on
/// shared prior samples, one CSV row per method per power.
pub fn cmd_compare(ctx: &CommandContext) -> Result<(), CliError> {
    let mut config: CompareConfig = load(&ctx.config_path)?;
    if let Some(seed) = ctx.seed_override {
        config.seed = seed;
    }
    let out = ctx.ensure_out(&config.output_dir)?;
    let mut csv = String::from(
        "p,method,tv_pushforward_vs_observed,accepted_count,acceptance_rate\n",
    );
    let mut reports = Vec::new();
    for &p in &config.powers {
        let report = run_comparison(p, config.samples, config.seed)?;
        csv.push_str(&format!(
            "{p},consistent,{},{},{}\n",
            fmt(report.tv_consistent_pushforward_vs_observed),
            report.consistent_accepted,
            fmt(report.diagnostics.acceptance_rate.unwrap_or(f64::NAN)),
        ));
        csv.push_str(&format!(
            "{p},statistical,{},{},{}\n",
            fmt(report.tv_statistical_pushforward_vs_observed),
            report.statistical_accepted,
            fmt(report.statistical_acceptance_rate),
        ));
        eprintln!(
            "p = {p}: consistent TV {:.4}, additive-noise TV {:.4}",
            report.tv_consistent_pushforward_vs_observed,
            report.tv_statistical_pushforward_vs_observed
        );
        reports.push(report);
    }
    std::fs::write(out.join("compare.csv"), csv)
        .map_err(|e| CliError::io(format!("writing compare.csv: {e}")))?;
    write_json(&out.join("compare.json"), &reports)?;
    Ok(())
}

/// `stability`: observed-perturbation total variations on the squaring map.
pub fn cmd_stability(ctx: &CommandContext) -> Result<(), CliError> {
    let mut config: StabilityConfig = load(&ctx.config_path)?;
    if let Some(seed) = ctx.seed_override {
        config.seed = seed;
    }
    let out = ctx.ensure_out(&config.output_dir)?;
    let mut csv = String::from("delta,tv_observed_pair,tv_posterior_pair,abs_difference\n");
    for &delta in &config.deltas {
        let report = run_stability_oracle(delta, config.seed)?;
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt(delta),
            fmt(report.tv_observed_pair),
            fmt(report.tv_posterior_pair),
            fmt((report.tv_observed_pair - report.tv_posterior_pair).abs()),
        ));
        eprintln!(
            "delta = {delta}: tv(observed pair) = {:.6}, tv(posterior pair) = {:.6}",
            report.tv_observed_pair, report.tv_posterior_pair
        );
    }
    std::fs::write(out.join("stability.csv"), csv)
        .map_err(|e| CliError::io(format!("writing stability.csv: {e}")))?;
    Ok(())
}
