//! The observation-consistent posterior: push-forward construction, the
//! density ratio `r(Q(lambda)) = obs(Q(lambda)) / pushforward(Q(lambda))`,
//! mass and KL diagnostics, rejection sampling, and the set-based posterior
//! probability.
//!
//! The posterior density is `prior(lambda) * r(Q(lambda))`. No normalization
//! constant appears: when the observed density is dominated by the
//! push-forward of the prior, the posterior integrates to one by construction,
//! and the Monte Carlo estimate of that integral ([`Diagnostics::integral_estimate`])
//! is the primary runtime check that the dominance assumption actually holds.
//!
//! All densities here are with respect to Lebesgue measure on their spaces;
//! that is a convention, not a computation.

use std::sync::Arc;

use ndarray::Array2;

use crate::density::{fit_gkde, BandwidthRule, DensityModel};
use crate::domain::{evaluate_batch, ForwardModel, SampleBatch};
use crate::quadrature::trapezoid;
use crate::{Error, Result, RngStream, Scalar};

/// Default floor for the push-forward density inside the ratio. Ratios at
/// floored points are counted as dominance violations rather than silently
/// inflated.
pub const DEFAULT_RATIO_FLOOR: f64 = 1e-12;

/// Number of probe points on the observed support when scanning for
/// dominance violations (scalar QoI only).
const DOMINANCE_GRID: usize = 512;

/// A support probe point counts as a dominance violation when its ratio
/// exceeds the largest ratio seen at any predicted sample by this factor:
/// observed mass sits where the push-forward estimate is pure extrapolated
/// tail.
const DOMINANCE_RATIO_BLOWUP: f64 = 100.0;

/// Minimum number of in-region batch rows for the set-based posterior.
const MIN_REGION_ROWS: usize = 100;

/// Bound triple (prior, observed, push-forward estimate) together with the
/// forward model; evaluates `r(Q(lambda))` and the posterior density.
///
/// Immutable and cheap to share across threads.
pub struct PosteriorHandle<T: Scalar> {
    prior: DensityModel<T>,
    observed: DensityModel<T>,
    pushforward: DensityModel<T>,
    model: Arc<dyn ForwardModel<T>>,
    ratio_floor: T,
}

/// Diagnostics of a posterior against a prior sample batch.
///
/// `integral_estimate` is the Monte Carlo mass of the posterior (mean of `r`
/// over the batch), `kl_divergence` the prior-to-posterior KL divergence
/// (mean of `r log r`), `max_ratio` the batch maximum of `r` (the rejection
/// bound), and `dominance_violations` counts points where the observed
/// density is positive but the push-forward estimate is at or below the
/// ratio floor.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics<T> {
    pub integral_estimate: T,
    pub kl_divergence: T,
    pub max_ratio: T,
    /// Filled by rejection sampling; `None` from a plain diagnostics pass.
    pub acceptance_rate: Option<T>,
    pub dominance_violations: usize,
}

/// Ratio values over a batch, reusable between diagnostics and rejection so
/// the push-forward KDE is evaluated once per sample.
#[derive(Debug, Clone)]
pub struct RatioSweep<T> {
    values: Vec<T>,
    floored: usize,
}

impl<T: Scalar> RatioSweep<T> {
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn floored(&self) -> usize {
        self.floored
    }
}

impl<T: Scalar> PosteriorHandle<T> {
    /// Bind prior, observed, and push-forward densities to a model.
    pub fn new(
        prior: DensityModel<T>,
        observed: DensityModel<T>,
        pushforward: DensityModel<T>,
        model: Arc<dyn ForwardModel<T>>,
    ) -> Result<Self> {
        if prior.dim() != model.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.in_dim(),
                actual: prior.dim(),
            });
        }
        if observed.dim() != model.out_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.out_dim(),
                actual: observed.dim(),
            });
        }
        if pushforward.dim() != model.out_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.out_dim(),
                actual: pushforward.dim(),
            });
        }
        Ok(Self {
            prior,
            observed,
            pushforward,
            model,
            ratio_floor: T::of(DEFAULT_RATIO_FLOOR),
        })
    }

    pub fn with_ratio_floor(mut self, floor: T) -> Result<Self> {
        if floor <= T::zero() || !floor.is_finite() {
            return Err(Error::InvalidInput("ratio floor must be positive".into()));
        }
        self.ratio_floor = floor;
        Ok(self)
    }

    pub fn prior(&self) -> &DensityModel<T> {
        &self.prior
    }

    pub fn observed(&self) -> &DensityModel<T> {
        &self.observed
    }

    pub fn pushforward(&self) -> &DensityModel<T> {
        &self.pushforward
    }

    pub fn model(&self) -> &Arc<dyn ForwardModel<T>> {
        &self.model
    }

    pub fn ratio_floor(&self) -> T {
        self.ratio_floor
    }

    /// `r(q) = obs(q) / max(pushforward(q), floor)`, and zero wherever the
    /// observed density is zero regardless of the push-forward value.
    pub fn ratio(&self, q: &[T]) -> Result<T> {
        Ok(self.ratio_parts(q)?.0)
    }

    fn ratio_parts(&self, q: &[T]) -> Result<(T, bool)> {
        let obs = self.observed.pdf(q)?;
        if obs == T::zero() {
            return Ok((T::zero(), false));
        }
        let pf = self.pushforward.pdf(q)?;
        if pf <= self.ratio_floor {
            Ok((obs / self.ratio_floor, true))
        } else {
            Ok((obs / pf, false))
        }
    }

    fn ratio_from_values(&self, obs: T, pf: T) -> (T, bool) {
        if obs == T::zero() {
            (T::zero(), false)
        } else if pf <= self.ratio_floor {
            (obs / self.ratio_floor, true)
        } else {
            (obs / pf, false)
        }
    }

    /// Posterior density `prior(lambda) * r(Q(lambda))`; evaluates the model
    /// once, and not at all where the prior vanishes.
    pub fn posterior_pdf(&self, lambda: &[T]) -> Result<T> {
        let prior = self.prior.pdf(lambda)?;
        if prior == T::zero() {
            return Ok(T::zero());
        }
        let q = self.model.eval(lambda)?;
        Ok(prior * self.ratio(&q)?)
    }

    /// Posterior density with a precomputed QoI, honoring the reuse of model
    /// evaluations already paid for when building the push-forward.
    pub fn posterior_pdf_with_qoi(&self, lambda: &[T], qoi: &[T]) -> Result<T> {
        let prior = self.prior.pdf(lambda)?;
        if prior == T::zero() {
            return Ok(T::zero());
        }
        Ok(prior * self.ratio(qoi)?)
    }

    /// Evaluate `r` over every batch QoI row. Density evaluation over rows is
    /// parallel with deterministic ordering; reductions downstream are
    /// sequential.
    pub fn ratio_sweep(&self, batch: &SampleBatch<T>) -> Result<RatioSweep<T>> {
        if batch.count() == 0 {
            return Err(Error::InvalidInput("batch is empty".into()));
        }
        let obs = self.observed.pdf_batch(batch.qois())?;
        let pf = self.pushforward.pdf_batch(batch.qois())?;
        let mut values = Vec::with_capacity(obs.len());
        let mut floored = 0;
        for (&o, &p) in obs.iter().zip(&pf) {
            let (r, f) = self.ratio_from_values(o, p);
            values.push(r);
            floored += usize::from(f);
        }
        Ok(RatioSweep { values, floored })
    }

    /// Mass, KL, and dominance diagnostics from a batch drawn from the prior.
    pub fn diagnostics(&self, batch: &SampleBatch<T>) -> Result<Diagnostics<T>> {
        let sweep = self.ratio_sweep(batch)?;
        self.diagnostics_from_sweep(&sweep)
    }

    /// Diagnostics from a precomputed ratio sweep.
    pub fn diagnostics_from_sweep(&self, sweep: &RatioSweep<T>) -> Result<Diagnostics<T>> {
        if sweep.values.is_empty() {
            return Err(Error::InvalidInput("batch is empty".into()));
        }
        let n = T::of_usize(sweep.values.len());
        let mut sum = T::zero();
        let mut sum_rlogr = T::zero();
        let mut max_ratio = T::zero();
        for &r in &sweep.values {
            sum += r;
            if r > T::zero() {
                sum_rlogr += r * r.ln();
            }
            max_ratio = max_ratio.max(r);
        }
        Ok(Diagnostics {
            integral_estimate: sum / n,
            kl_divergence: sum_rlogr / n,
            max_ratio,
            acceptance_rate: None,
            dominance_violations: sweep.floored + self.scan_observed_support(max_ratio),
        })
    }

    /// Probe the observed support for regions the push-forward estimate does
    /// not cover (scalar QoI only): batch samples always sit where the KDE
    /// has mass, so an observed density outside the predicted range is only
    /// caught by scanning its own support. A probe point counts when the
    /// push-forward is floored there, or when its ratio dwarfs every ratio
    /// seen at actual samples ([`DOMINANCE_RATIO_BLOWUP`]).
    fn scan_observed_support(&self, batch_max_ratio: T) -> usize {
        if self.observed.dim() != 1 {
            return 0;
        }
        let Some((lo, hi)) = self.observed.support_hint() else {
            return 0;
        };
        let cap = T::of(DOMINANCE_RATIO_BLOWUP) * batch_max_ratio.max(T::one());
        let step = (hi - lo) / T::of_usize(DOMINANCE_GRID - 1);
        let mut violations = 0;
        for i in 0..DOMINANCE_GRID {
            let q = [lo + step * T::of_usize(i)];
            // Observed mass at or below the floor is itself negligible and
            // cannot witness a dominance failure.
            let obs = self.observed.pdf(&q).unwrap_or(T::zero());
            if obs > self.ratio_floor {
                let pf = self.pushforward.pdf(&q).unwrap_or(T::zero());
                if pf <= self.ratio_floor || obs / pf > cap {
                    violations += 1;
                }
            }
        }
        violations
    }

    /// Rejection sampling of the posterior from prior samples: row `p` is
    /// accepted iff `r_p / max_r > xi_p` with `xi_p` uniform on `[0, 1)`.
    /// Accepted rows preserve batch order.
    pub fn rejection_sample(
        &self,
        batch: &SampleBatch<T>,
        rng: &mut RngStream,
    ) -> Result<(SampleBatch<T>, Diagnostics<T>)> {
        let sweep = self.ratio_sweep(batch)?;
        self.rejection_from_sweep(batch, &sweep, rng, T::one())
    }

    /// Rejection with a precomputed sweep and a bound inflation factor
    /// (`safety >= 1` buys conservatism at the cost of acceptance rate).
    pub fn rejection_from_sweep(
        &self,
        batch: &SampleBatch<T>,
        sweep: &RatioSweep<T>,
        rng: &mut RngStream,
        safety: T,
    ) -> Result<(SampleBatch<T>, Diagnostics<T>)> {
        if sweep.values.len() != batch.count() {
            return Err(Error::InvalidInput(
                "ratio sweep does not match batch size".into(),
            ));
        }
        if safety < T::one() || safety.is_nan() {
            return Err(Error::InvalidInput("safety factor must be >= 1".into()));
        }
        let mut diag = self.diagnostics_from_sweep(sweep)?;
        if diag.max_ratio <= T::zero() || diag.max_ratio.is_nan() {
            return Err(Error::EmptyPosterior);
        }
        let bound = diag.max_ratio * safety;
        let mut keep = Vec::new();
        for (i, &r) in sweep.values.iter().enumerate() {
            let xi = T::unit_uniform(rng);
            if r / bound > xi {
                keep.push(i);
            }
        }
        diag.acceptance_rate = Some(T::of_usize(keep.len()) / T::of_usize(batch.count()));
        Ok((batch.select_rows(&keep), diag))
    }

    /// Set-based posterior probability of a box `region` in parameter space,
    /// for scalar-QoI models.
    ///
    /// The image `Q(region)` is approximated by the interval hull of the QoI
    /// values over batch rows falling in the region (requiring at least 100
    /// such rows), and the observed and push-forward probabilities of that
    /// interval are computed by quadrature. Returns zero when the Monte Carlo
    /// estimate of the prior probability of the region is zero.
    pub fn set_posterior_probability(
        &self,
        region: &[(T, T)],
        batch: &SampleBatch<T>,
    ) -> Result<T> {
        if self.model.out_dim() != 1 {
            return Err(Error::Unsupported(
                "set-based posterior probability requires a scalar QoI".into(),
            ));
        }
        if region.len() != self.model.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.model.in_dim(),
                actual: region.len(),
            });
        }
        if batch.count() == 0 {
            return Err(Error::InvalidInput("batch is empty".into()));
        }
        let inside: Vec<usize> = (0..batch.count())
            .filter(|&i| {
                batch
                    .params()
                    .row(i)
                    .iter()
                    .zip(region)
                    .all(|(&x, &(lo, hi))| x >= lo && x <= hi)
            })
            .collect();
        if inside.is_empty() {
            return Ok(T::zero());
        }
        if inside.len() < MIN_REGION_ROWS {
            return Err(Error::InsufficientCoverage {
                found: inside.len(),
                need: MIN_REGION_ROWS,
            });
        }
        let prior_prob = T::of_usize(inside.len()) / T::of_usize(batch.count());
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for &i in &inside {
            let q = batch.qois()[[i, 0]];
            lo = lo.min(q);
            hi = hi.max(q);
        }
        let nodes = 4097;
        let obs_mass = trapezoid(|q| self.observed.pdf(&[q]).unwrap_or(T::zero()), lo, hi, nodes);
        let pf_mass = trapezoid(
            |q| self.pushforward.pdf(&[q]).unwrap_or(T::zero()),
            lo,
            hi,
            nodes,
        );
        if pf_mass <= T::zero() || pf_mass.is_nan() {
            return Err(Error::Dominance(
                "push-forward mass of the image interval is zero".into(),
            ));
        }
        Ok((prior_prob * obs_mass / pf_mass).min(T::one()).max(T::zero()))
    }
}

/// Forward-propagate the prior and estimate the push-forward density.
///
/// Draws `count` samples from the prior, pushes them through the model
/// (`workers` threads, deterministic ordering), and fits a Gaussian KDE to
/// the QoI values. The returned batch keeps the parameter/QoI pairs for reuse
/// in diagnostics and rejection, so no model evaluation is paid twice.
pub fn build_pushforward<T: Scalar>(
    model: Arc<dyn ForwardModel<T>>,
    prior: &DensityModel<T>,
    count: usize,
    rng: &mut RngStream,
    rule: &BandwidthRule<T>,
    workers: usize,
) -> Result<(DensityModel<T>, SampleBatch<T>)> {
    if count < 2 {
        return Err(Error::InvalidInput(
            "push-forward estimation needs at least 2 samples".into(),
        ));
    }
    if prior.dim() != model.in_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.in_dim(),
            actual: prior.dim(),
        });
    }
    let params = prior.sample(count, rng)?;
    let qois = evaluate_batch(model.as_ref(), &params, workers)?;
    let pushforward = fit_gkde(&qois, rule)?;
    let batch = SampleBatch::new(params, qois, rng.seed(), model.name())?;
    Ok((pushforward, batch))
}

/// Build a prior batch from an existing parameter array (already drawn from
/// the prior) by evaluating the model.
pub fn batch_from_params<T: Scalar>(
    model: &dyn ForwardModel<T>,
    params: Array2<T>,
    seed: u64,
    workers: usize,
) -> Result<SampleBatch<T>> {
    let qois = evaluate_batch(model, &params, workers)?;
    SampleBatch::new(params, qois, seed, model.name())
}
