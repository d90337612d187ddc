//! Configuration schemas. Unknown keys are rejected and every field is echoed
//! into the emitted report for provenance.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dci_core::density::{BandwidthRule, DensityModel};
use dci_core::models::{self, BlockQuantileRule, BuiltModel, ModelOptions};

use crate::CliError;

fn default_safety() -> f64 {
    1.0
}

fn default_dominance_threshold() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelOptionsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qoi: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum PriorConfig {
    Uniform {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<Vec<(f64, f64)>>,
    },
    Beta {
        alpha: f64,
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<Vec<(f64, f64)>>,
    },
    StandardNormal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum ObservedConfig {
    Normal { mean: Vec<f64>, std: Vec<f64> },
    TruncatedNormal {
        mean: f64,
        std: f64,
        lo: f64,
        hi: f64,
        #[serde(default)]
        renormalize: bool,
    },
    Uniform { lo: f64, hi: f64 },
    /// Uniform interval/box between push-forward quantiles; only valid for
    /// the quadratic chi-squared models.
    QuantileMatched,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthConfig {
    #[default]
    Silverman,
    Scott,
    /// Least-squares cross-validation (1-D QoI only).
    Lscv,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BlockQuantileConfig {
    /// Per-dimension levels `1/2 -+ (1/5)^(1/m) / 2`: the observed box keeps
    /// push-forward mass 1/5 for every QoI count.
    #[default]
    MassPreserving,
    /// Per-dimension levels `1/2 -+ (1/5)^(1/m)`; mass grows with the QoI
    /// count and the levels are undefined for three or more QoIs.
    Paper,
}

impl From<BlockQuantileConfig> for BlockQuantileRule {
    fn from(value: BlockQuantileConfig) -> Self {
        match value {
            BlockQuantileConfig::MassPreserving => BlockQuantileRule::MassPreserving,
            BlockQuantileConfig::Paper => BlockQuantileRule::LevelOffset,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFlags {
    #[serde(default)]
    pub block_quantile: BlockQuantileConfig,
    #[serde(default)]
    pub renormalize_truncated_normal: bool,
    /// Inflation applied to the rejection bound; 1.0 is the plain batch
    /// maximum.
    #[serde(default = "default_safety")]
    pub safety_factor: f64,
    /// Fraction of dominance-violating probes above which the run exits with
    /// code 5.
    #[serde(default = "default_dominance_threshold")]
    pub dominance_threshold: f64,
}

impl Default for RunFlags {
    fn default() -> Self {
        Self {
            block_quantile: BlockQuantileConfig::default(),
            renormalize_truncated_normal: false,
            safety_factor: default_safety(),
            dominance_threshold: default_dominance_threshold(),
        }
    }
}

/// Configuration for `pushforward`, `posterior`, and `diagnose`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment_id: String,
    pub model: String,
    #[serde(default)]
    pub model_options: ModelOptionsConfig,
    pub prior: PriorConfig,
    pub observed: ObservedConfig,
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub bandwidth: BandwidthConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub flags: RunFlags,
}

/// Configuration for `converge`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub experiment_id: String,
    pub dims: Vec<usize>,
    pub qoi_counts: Vec<usize>,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub block_quantile: BlockQuantileConfig,
    /// Emit an exact synthetic power-law curve instead of running the
    /// simulation; exercises the report path end to end.
    #[serde(default)]
    pub synthetic_powerlaw: bool,
}

fn default_n_grid() -> Vec<usize> {
    dci_core::experiments::DEFAULT_N_GRID.to_vec()
}

/// Configuration for `compare`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub experiment_id: String,
    pub powers: Vec<u32>,
    pub samples: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Configuration for `stability`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub experiment_id: String,
    pub deltas: Vec<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Parse a config file, reporting the offending field path on failure.
pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let deserializer = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(deserializer).map_err(|e| {
        CliError::config(format!(
            "{}: invalid config at field '{}': {}",
            path.display(),
            e.path(),
            e.inner()
        ))
    })
}

/// Everything a pipeline command needs, resolved from a [`RunConfig`].
pub struct ResolvedRun {
    pub built: BuiltModel<f64>,
    pub prior: DensityModel<f64>,
    pub observed: DensityModel<f64>,
}

pub fn resolve(config: &RunConfig) -> Result<ResolvedRun, CliError> {
    if config.samples < 2 {
        return Err(CliError::config(format!(
            "field 'samples': need at least 2, got {}",
            config.samples
        )));
    }
    if config.flags.safety_factor < 1.0 || config.flags.safety_factor.is_nan() {
        return Err(CliError::config(
            "field 'flags.safety_factor': must be at least 1.0".into(),
        ));
    }
    let options = ModelOptions {
        dim: config.model_options.dim,
        qoi: config.model_options.qoi,
        cov_seed: config.model_options.cov_seed,
    };
    let built = models::build_model::<f64>(&config.model, &options)
        .map_err(|e| CliError::config(format!("field 'model': {e}")))?;
    let dim = built.model.in_dim();

    let box_bounds = |bounds: &Option<Vec<(f64, f64)>>| -> Result<Vec<(f64, f64)>, CliError> {
        match bounds {
            Some(b) => Ok(b.clone()),
            None if built.domain.is_bounded() => Ok(built.domain.bounds().to_vec()),
            None => Err(CliError::config(
                "field 'prior.bounds': required because the model's parameter domain is unbounded"
                    .into(),
            )),
        }
    };
    let prior = match &config.prior {
        PriorConfig::Uniform { bounds } => DensityModel::uniform(box_bounds(bounds)?),
        PriorConfig::Beta { alpha, beta, bounds } => {
            DensityModel::beta(*alpha, *beta, box_bounds(bounds)?)
        }
        PriorConfig::StandardNormal => DensityModel::standard_normal(dim),
    }
    .map_err(|e| CliError::config(format!("field 'prior': {e}")))?;
    if prior.dim() != dim {
        return Err(CliError::config(format!(
            "field 'prior': dimension {} does not match model dimension {dim}",
            prior.dim()
        )));
    }

    let observed = match &config.observed {
        ObservedConfig::Normal { mean, std } => DensityModel::normal(mean.clone(), std.clone()),
        ObservedConfig::TruncatedNormal {
            mean,
            std,
            lo,
            hi,
            renormalize,
        } => DensityModel::truncated_normal(
            *mean,
            *std,
            *lo,
            *hi,
            *renormalize || config.flags.renormalize_truncated_normal,
        ),
        ObservedConfig::Uniform { lo, hi } => DensityModel::uniform_interval(*lo, *hi),
        ObservedConfig::QuantileMatched => models::quantile_matched_uniform_observed(
            dim,
            built.model.out_dim(),
            config.flags.block_quantile.into(),
        ),
    }
    .map_err(|e| CliError::config(format!("field 'observed': {e}")))?;
    if observed.dim() != built.model.out_dim() {
        return Err(CliError::config(format!(
            "field 'observed': dimension {} does not match model QoI dimension {}",
            observed.dim(),
            built.model.out_dim()
        )));
    }

    Ok(ResolvedRun {
        built,
        prior,
        observed,
    })
}

/// Resolve the bandwidth rule; cross-validation needs the QoI samples.
pub fn bandwidth_rule(
    config: &BandwidthConfig,
    qois: &ndarray::Array2<f64>,
) -> Result<BandwidthRule<f64>, CliError> {
    Ok(match config {
        BandwidthConfig::Silverman => BandwidthRule::Silverman,
        BandwidthConfig::Scott => BandwidthRule::Scott,
        BandwidthConfig::Lscv => BandwidthRule::Explicit(vec![
            dci_core::density::lscv_bandwidth(qois)
                .map_err(|e| CliError::config(format!("field 'bandwidth': {e}")))?,
        ]),
        BandwidthConfig::Explicit(h) => BandwidthRule::Explicit(h.clone()),
    })
}

pub fn bandwidth_label(config: &BandwidthConfig) -> String {
    match config {
        BandwidthConfig::Silverman => "silverman".into(),
        BandwidthConfig::Scott => "scott".into(),
        BandwidthConfig::Lscv => "lscv".into(),
        BandwidthConfig::Explicit(h) => format!("explicit({h:?})"),
    }
}
