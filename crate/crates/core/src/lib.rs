//! Data-consistent stochastic inversion.
//!
//! Given a prior density on model parameters, a deterministic quantity-of-interest
//! (QoI) map, and an observed density on the QoI, this crate constructs the
//! posterior density
//!
//! ```text
//! post(lambda) = prior(lambda) * obs(Q(lambda)) / pushforward(Q(lambda))
//! ```
//!
//! whose push-forward through the map reproduces the observed density, and
//! provides the numerical machinery to verify that claim: Monte Carlo forward
//! propagation, Gaussian kernel density estimation of the push-forward,
//! rejection sampling of the posterior, mass/KL diagnostics, total-variation
//! metrics, and scripted benchmark experiments.
//!
//! The numerical core is generic over the floating-point scalar through
//! [`Scalar`] (implemented for `f32` and `f64`); concrete `f64` aliases for the
//! main types live at the crate root. The [`experiments`] module and everything
//! downstream of it is `f64`-only.
//!
//! Total variation throughout this crate is the plain integral of the absolute
//! density difference, **without** the conventional 1/2 factor; see [`metrics`].

pub mod baselines;
pub mod density;
pub mod domain;
mod error;
pub mod experiments;
pub mod inference;
pub mod metrics;
pub mod models;
pub mod quadrature;
mod rng;
mod scalar;
pub mod special;

pub use error::{Error, Result, RowFailure};
pub use rng::RngStream;
pub use scalar::Scalar;

/// `f64` parameter domain.
pub type Domain64 = domain::ParameterDomain<f64>;
/// `f64` sample batch (parameter rows paired with their QoI images).
pub type Batch64 = domain::SampleBatch<f64>;
/// `f64` density model.
pub type Density64 = density::DensityModel<f64>;
/// `f64` Gaussian kernel density estimate.
pub type Kde64 = density::GaussianKde<f64>;
/// `f64` bandwidth rule.
pub type Bandwidth64 = density::BandwidthRule<f64>;
/// `f64` posterior handle.
pub type Posterior64 = inference::PosteriorHandle<f64>;
/// `f64` posterior diagnostics.
pub type Diagnostics64 = inference::Diagnostics<f64>;
/// `f64` convergence record.
pub type Convergence64 = metrics::ConvergenceRecord<f64>;
