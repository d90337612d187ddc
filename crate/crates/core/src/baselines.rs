//! Additive-Gaussian-noise Bayesian posterior, for side-by-side comparison
//! with the observation-consistent posterior.
//!
//! Here the datum is modeled as `q = Q(lambda) + eta` with `eta ~ N(0, Sigma)`
//! (diagonal `Sigma`), the posterior is proportional to prior times
//! likelihood, and sampling reuses the same prior batch as the consistent
//! pipeline so the two posteriors can be compared on equal footing.

use crate::density::{fit_gkde, BandwidthRule, DensityModel, GaussianKde};
use crate::domain::{ForwardModel, SampleBatch};
use crate::metrics::{joint_support, tv_distance_quadrature};
use crate::{Error, Result, RngStream, Scalar};

/// Gaussian likelihood specification: observed datum and per-component noise
/// standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodSpec<T> {
    datum: Vec<T>,
    noise_std: Vec<T>,
}

impl<T: Scalar> LikelihoodSpec<T> {
    pub fn new(datum: Vec<T>, noise_std: Vec<T>) -> Result<Self> {
        if datum.is_empty() || datum.len() != noise_std.len() {
            return Err(Error::InvalidInput(
                "datum and noise_std must be matched and nonempty".into(),
            ));
        }
        if noise_std.iter().any(|s| *s <= T::zero() || !s.is_finite()) {
            return Err(Error::InvalidInput(
                "noise standard deviations must be positive".into(),
            ));
        }
        Ok(Self { datum, noise_std })
    }

    pub fn datum(&self) -> &[T] {
        &self.datum
    }

    /// Likelihood of the datum at a QoI value: the `N(0, Sigma)` density of
    /// the residual `datum - q`.
    pub fn likelihood_at_qoi(&self, qoi: &[T]) -> Result<T> {
        if qoi.len() != self.datum.len() {
            return Err(Error::DimensionMismatch {
                expected: self.datum.len(),
                actual: qoi.len(),
            });
        }
        let half = T::of(0.5);
        let ln_2pi = (T::of(2.0) * T::PI()).ln();
        let mut log_l = T::zero();
        for ((&d, &q), &s) in self.datum.iter().zip(qoi).zip(&self.noise_std) {
            let z = (d - q) / s;
            log_l = log_l - half * z * z - s.ln();
        }
        Ok((log_l - half * ln_2pi * T::of_usize(self.datum.len())).exp())
    }

    /// Likelihood at a parameter point; evaluates the model once.
    pub fn likelihood(&self, model: &dyn ForwardModel<T>, lambda: &[T]) -> Result<T> {
        let qoi = model.eval(lambda)?;
        self.likelihood_at_qoi(&qoi)
    }
}

/// Result of rejection sampling against the likelihood.
#[derive(Debug, Clone)]
pub struct StatisticalPosterior<T> {
    pub accepted: SampleBatch<T>,
    pub acceptance_rate: T,
    /// Monte Carlo estimate of the evidence: the prior mean of the likelihood.
    pub normalization: T,
    pub max_likelihood: T,
}

/// Rejection sampling of the likelihood-based posterior from a prior batch:
/// row `p` is accepted iff `L_p / max_L > xi_p`. Uses the QoI values cached
/// in the batch, so no model evaluations are repeated.
pub fn statistical_posterior_rejection<T: Scalar>(
    spec: &LikelihoodSpec<T>,
    prior_batch: &SampleBatch<T>,
    rng: &mut RngStream,
) -> Result<StatisticalPosterior<T>> {
    if prior_batch.count() == 0 {
        return Err(Error::InvalidInput("batch is empty".into()));
    }
    let mut likelihoods = Vec::with_capacity(prior_batch.count());
    for row in prior_batch.qois().rows() {
        let q: Vec<T> = row.iter().copied().collect();
        likelihoods.push(spec.likelihood_at_qoi(&q)?);
    }
    let max_l = likelihoods.iter().copied().fold(T::zero(), T::max);
    if max_l <= T::zero() || max_l.is_nan() {
        return Err(Error::EmptyPosterior);
    }
    let normalization = likelihoods.iter().copied().sum::<T>() / T::of_usize(likelihoods.len());
    let mut keep = Vec::new();
    for (i, &l) in likelihoods.iter().enumerate() {
        let xi = T::unit_uniform(rng);
        if l / max_l > xi {
            keep.push(i);
        }
    }
    Ok(StatisticalPosterior {
        accepted: prior_batch.select_rows(&keep),
        acceptance_rate: T::of_usize(keep.len()) / T::of_usize(prior_batch.count()),
        normalization,
        max_likelihood: max_l,
    })
}

/// Normalized likelihood-based posterior density at a parameter point, given
/// the evidence estimate from [`statistical_posterior_rejection`].
pub fn statistical_posterior_pdf<T: Scalar>(
    spec: &LikelihoodSpec<T>,
    model: &dyn ForwardModel<T>,
    prior: &DensityModel<T>,
    normalization: T,
    lambda: &[T],
) -> Result<T> {
    let prior_pdf = prior.pdf(lambda)?;
    if prior_pdf == T::zero() {
        return Ok(T::zero());
    }
    Ok(prior_pdf * spec.likelihood(model, lambda)? / normalization)
}

/// Fit a 1-D KDE to each batch's QoI values and measure both against the
/// observed density: returns `(tv_consistent, tv_statistical)` in the crate's
/// no-half total variation convention.
pub fn pushforward_compare<T: Scalar>(
    consistent_accepted: &SampleBatch<T>,
    statistical_accepted: &SampleBatch<T>,
    observed: &DensityModel<T>,
    rule: &BandwidthRule<T>,
) -> Result<(T, T)> {
    if consistent_accepted.qoi_dim() != 1 || statistical_accepted.qoi_dim() != 1 {
        return Err(Error::Unsupported(
            "push-forward comparison requires a scalar QoI".into(),
        ));
    }
    if consistent_accepted.count() == 0 || statistical_accepted.count() == 0 {
        return Err(Error::InvalidInput("accepted batches must be nonempty".into()));
    }
    let kde_c: DensityModel<T> = fit_gkde(consistent_accepted.qois(), rule)?;
    let kde_s: DensityModel<T> = fit_gkde(statistical_accepted.qois(), rule)?;
    let (lo_c, hi_c) = joint_support(&kde_c, observed)?;
    let (lo_s, hi_s) = joint_support(&kde_s, observed)?;
    let nodes = 8_193;
    let tv_c = tv_distance_quadrature(&kde_c, observed, (lo_c, hi_c), nodes)?;
    let tv_s = tv_distance_quadrature(&kde_s, observed, (lo_s, hi_s), nodes)?;
    Ok((tv_c, tv_s))
}

/// KDE over a single parameter column of a batch; used to compare posterior
/// parameter densities between methods.
pub fn parameter_kde<T: Scalar>(
    batch: &SampleBatch<T>,
    rule: &BandwidthRule<T>,
) -> Result<GaussianKde<T>> {
    if batch.param_dim() != 1 {
        return Err(Error::Unsupported("parameter KDE requires a 1-D parameter".into()));
    }
    GaussianKde::fit(batch.params(), rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::FnModel;
    use crate::inference::build_pushforward;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn identity_batch(count: usize, seed: u64) -> SampleBatch<f64> {
        let model: Arc<dyn ForwardModel<f64>> =
            Arc::new(FnModel::new("identity", 1, 1, |p: &[f64]| Ok(vec![p[0]])));
        let prior = DensityModel::uniform(vec![(-1.0, 1.0)]).unwrap();
        let mut rng = RngStream::from_seed(seed);
        let (_, batch) = build_pushforward(
            model,
            &prior,
            count,
            &mut rng,
            &BandwidthRule::Silverman,
            1,
        )
        .unwrap();
        batch
    }

    #[test]
    fn likelihood_peak_values() {
        // Zero residual: peak is prod 1/sqrt(2 pi sigma_j^2).
        let spec = LikelihoodSpec::new(vec![0.25], vec![0.1]).unwrap();
        let model = FnModel::new("identity", 1, 1, |p: &[f64]| Ok(vec![p[0]]));
        let peak = spec.likelihood(&model, &[0.25]).unwrap();
        assert_relative_eq!(
            peak,
            1.0 / (0.1 * (2.0 * std::f64::consts::PI).sqrt()),
            epsilon = 1e-12
        );
        // One-sigma residual scales the peak by exp(-1/2).
        let one_sigma = spec.likelihood(&model, &[0.35]).unwrap();
        assert_relative_eq!(one_sigma, peak * (-0.5_f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn likelihood_spec_validation() {
        assert!(LikelihoodSpec::new(vec![0.0], vec![0.0]).is_err());
        assert!(LikelihoodSpec::new(vec![0.0], vec![0.1, 0.2]).is_err());
        assert!(LikelihoodSpec::<f64>::new(vec![], vec![]).is_err());
    }

    #[test]
    fn constant_likelihood_accepts_everything() {
        let batch = identity_batch(500, 40);
        // Huge sigma: likelihood is flat over [-1, 1] up to ~1e-5 relative, so
        // virtually everything is accepted.
        let spec = LikelihoodSpec::new(vec![0.0], vec![1e4]).unwrap();
        let out = statistical_posterior_rejection(&spec, &batch, &mut RngStream::from_seed(1))
            .unwrap();
        assert!(out.acceptance_rate > 0.99);
    }

    #[test]
    fn all_zero_likelihoods_error() {
        let batch = identity_batch(100, 41);
        // Datum 40 sigma away from the image: the Gaussian underflows to zero.
        let spec = LikelihoodSpec::new(vec![500.0], vec![1.0]).unwrap();
        assert!(matches!(
            statistical_posterior_rejection(&spec, &batch, &mut RngStream::from_seed(1)),
            Err(Error::EmptyPosterior)
        ));
    }

    #[test]
    fn unnormalized_posterior_proportional_to_prior_times_likelihood() {
        let spec = LikelihoodSpec::new(vec![0.25], vec![0.1]).unwrap();
        let model = FnModel::new("identity", 1, 1, |p: &[f64]| Ok(vec![p[0]]));
        let prior = DensityModel::uniform(vec![(-1.0, 1.0)]).unwrap();
        let normalization = 0.731; // arbitrary positive constant
        let mut rng = RngStream::from_seed(77);
        let mut first_ratio = None;
        for _ in 0..100 {
            let l = -1.0 + 2.0 * f64::unit_uniform(&mut rng);
            let post =
                statistical_posterior_pdf(&spec, &model, &prior, normalization, &[l]).unwrap();
            let direct = prior.pdf(&[l]).unwrap() * spec.likelihood(&model, &[l]).unwrap();
            if direct == 0.0 {
                assert_eq!(post, 0.0);
                continue;
            }
            let ratio = post / direct;
            match first_ratio {
                None => first_ratio = Some(ratio),
                Some(r) => assert_relative_eq!(ratio, r, epsilon = 1e-12),
            }
        }
    }

    #[test]
    fn compare_requires_scalar_qoi_and_nonempty() {
        let batch = identity_batch(200, 42);
        let observed = DensityModel::truncated_normal(0.25, 0.1, -1.0, 1.0, false).unwrap();
        let empty = batch.select_rows(&[]);
        assert!(pushforward_compare(&empty, &batch, &observed, &BandwidthRule::Silverman).is_err());
    }

    #[test]
    fn compare_self_test_is_near_zero() {
        // Observed taken to be the KDE of the batch itself: tv_consistent
        // measures only quadrature and refit error.
        let batch = identity_batch(5_000, 43);
        let observed = fit_gkde(batch.qois(), &BandwidthRule::Silverman).unwrap();
        let (tv_c, tv_s) =
            pushforward_compare(&batch, &batch, &observed, &BandwidthRule::Silverman).unwrap();
        assert!(tv_c < 1e-10, "self TV {tv_c}");
        assert_eq!(tv_c, tv_s);
    }
}
