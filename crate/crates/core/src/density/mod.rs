//! Probability densities: analytic families, Gaussian KDE, and chi-squared
//! CDF/quantile machinery.

mod kde;

pub use kde::{lscv_bandwidth, BandwidthRule, GaussianKde};

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use crate::special::{ln_gamma, normal_cdf, normal_quantile, reg_lower_gamma};
use crate::{Error, Result, Scalar};

/// Standardized half-width covering all but ~1e-10 of normal mass; used when
/// truncating unbounded supports for quadrature.
const Z_TAIL: f64 = 6.3614;

/// An evaluable probability density over `R^k`, optionally sampleable.
///
/// Every variant has `pdf(x) >= 0` with value zero outside its support. All
/// variants except `TruncatedNormal { renormalize: false }` integrate to one;
/// that one is deliberately left unnormalized (the truncated-but-unscaled form
/// used when comparing against an additive-noise likelihood).
#[derive(Debug, Clone, PartialEq)]
pub enum DensityModel<T: Scalar> {
    /// Uniform over a finite box.
    Uniform { bounds: Vec<(T, T)> },
    /// Independent normal coordinates (diagonal covariance).
    Normal { mean: Vec<T>, std: Vec<T> },
    /// 1-D normal restricted to `[lo, hi]`.
    TruncatedNormal {
        mean: T,
        std: T,
        lo: T,
        hi: T,
        renormalize: bool,
    },
    /// The same `Beta(alpha, beta)` marginal in every dimension, affinely
    /// mapped onto a box.
    Beta {
        alpha: T,
        beta: T,
        bounds: Vec<(T, T)>,
    },
    /// `N(0, I)` in `dim` dimensions.
    StandardNormal { dim: usize },
    /// Chi-squared with `dof` degrees of freedom.
    ChiSquared { dof: u32 },
    /// Uniform on an interval.
    UniformInterval { lo: T, hi: T },
    /// Gaussian kernel density estimate.
    GaussianKde(GaussianKde<T>),
    /// Product of independent 1-D densities.
    Product(Vec<DensityModel<T>>),
}

fn check_box<T: Scalar>(bounds: &[(T, T)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::InvalidInput("box needs at least one dimension".into()));
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi || lo.is_nan() || hi.is_nan() {
            return Err(Error::InvalidInput(format!(
                "dimension {i}: box bounds ({lo}, {hi}) must be finite with lower < upper"
            )));
        }
    }
    Ok(())
}

impl<T: Scalar> DensityModel<T> {
    pub fn uniform(bounds: Vec<(T, T)>) -> Result<Self> {
        check_box(&bounds)?;
        Ok(Self::Uniform { bounds })
    }

    pub fn normal(mean: Vec<T>, std: Vec<T>) -> Result<Self> {
        if mean.is_empty() || mean.len() != std.len() {
            return Err(Error::InvalidInput(
                "normal needs matching, nonempty mean and std vectors".into(),
            ));
        }
        if std.iter().any(|s| *s <= T::zero() || !s.is_finite()) {
            return Err(Error::InvalidInput("normal stds must be positive".into()));
        }
        Ok(Self::Normal { mean, std })
    }

    pub fn truncated_normal(mean: T, std: T, lo: T, hi: T, renormalize: bool) -> Result<Self> {
        if std <= T::zero() || !std.is_finite() {
            return Err(Error::InvalidInput("std must be positive".into()));
        }
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::InvalidInput(
                "truncation interval must be finite with lo < hi".into(),
            ));
        }
        Ok(Self::TruncatedNormal {
            mean,
            std,
            lo,
            hi,
            renormalize,
        })
    }

    pub fn beta(alpha: T, beta: T, bounds: Vec<(T, T)>) -> Result<Self> {
        if !(alpha > T::zero() && beta > T::zero()) {
            return Err(Error::InvalidInput("beta shape parameters must be positive".into()));
        }
        check_box(&bounds)?;
        Ok(Self::Beta { alpha, beta, bounds })
    }

    pub fn standard_normal(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        Ok(Self::StandardNormal { dim })
    }

    pub fn chi_squared(dof: u32) -> Result<Self> {
        if dof == 0 {
            return Err(Error::InvalidInput("degrees of freedom must be at least 1".into()));
        }
        Ok(Self::ChiSquared { dof })
    }

    pub fn uniform_interval(lo: T, hi: T) -> Result<Self> {
        check_box(&[(lo, hi)])?;
        Ok(Self::UniformInterval { lo, hi })
    }

    pub fn product(components: Vec<DensityModel<T>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("product needs at least one component".into()));
        }
        if let Some(c) = components.iter().find(|c| c.dim() != 1) {
            return Err(Error::InvalidInput(format!(
                "product components must be 1-D, found dimension {}",
                c.dim()
            )));
        }
        Ok(Self::Product(components))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Uniform { bounds } => bounds.len(),
            Self::Normal { mean, .. } => mean.len(),
            Self::TruncatedNormal { .. } => 1,
            Self::Beta { bounds, .. } => bounds.len(),
            Self::StandardNormal { dim } => *dim,
            Self::ChiSquared { .. } => 1,
            Self::UniformInterval { .. } => 1,
            Self::GaussianKde(kde) => kde.dim(),
            Self::Product(components) => components.len(),
        }
    }

    /// Density value at `x`; zero outside the support.
    pub fn pdf(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self.pdf_unchecked(x))
    }

    fn pdf_unchecked(&self, x: &[T]) -> T {
        let half = T::of(0.5);
        let ln_2pi = (T::of(2.0) * T::PI()).ln();
        match self {
            Self::Uniform { bounds } => {
                let mut vol = T::one();
                for (&xi, &(lo, hi)) in x.iter().zip(bounds) {
                    if xi < lo || xi > hi {
                        return T::zero();
                    }
                    vol *= hi - lo;
                }
                vol.recip()
            }
            Self::Normal { mean, std } => {
                let mut log_p = T::zero();
                for ((&xi, &mu), &sd) in x.iter().zip(mean).zip(std) {
                    let z = (xi - mu) / sd;
                    log_p = log_p - half * z * z - sd.ln();
                }
                (log_p - half * ln_2pi * T::of_usize(x.len())).exp()
            }
            Self::TruncatedNormal {
                mean,
                std,
                lo,
                hi,
                renormalize,
            } => {
                let xi = x[0];
                if xi < *lo || xi > *hi {
                    return T::zero();
                }
                let z = (xi - *mean) / *std;
                let base = (-half * z * z - half * ln_2pi).exp() / *std;
                if *renormalize {
                    let mass = normal_cdf((*hi - *mean) / *std) - normal_cdf((*lo - *mean) / *std);
                    base / mass
                } else {
                    base
                }
            }
            Self::Beta { alpha, beta, bounds } => {
                let ln_b = ln_gamma(*alpha) + ln_gamma(*beta) - ln_gamma(*alpha + *beta);
                let mut p = T::one();
                for (&xi, &(lo, hi)) in x.iter().zip(bounds) {
                    if xi < lo || xi > hi {
                        return T::zero();
                    }
                    let w = hi - lo;
                    let u = (xi - lo) / w;
                    p = p * u.powf(*alpha - T::one()) * (T::one() - u).powf(*beta - T::one())
                        / (ln_b.exp() * w);
                }
                p
            }
            Self::StandardNormal { dim } => {
                let d2: T = x.iter().map(|&xi| xi * xi).sum();
                (-half * d2 - half * ln_2pi * T::of_usize(*dim)).exp()
            }
            Self::ChiSquared { dof } => chi2_pdf(*dof, x[0]),
            Self::UniformInterval { lo, hi } => {
                if x[0] < *lo || x[0] > *hi {
                    T::zero()
                } else {
                    (*hi - *lo).recip()
                }
            }
            Self::GaussianKde(kde) => kde.pdf_unchecked(x),
            Self::Product(components) => {
                let mut p = T::one();
                for (c, &xi) in components.iter().zip(x) {
                    p *= c.pdf_unchecked(&[xi]);
                    if p == T::zero() {
                        return p;
                    }
                }
                p
            }
        }
    }

    /// Density at every row of `xs`, in row order; parallel with deterministic
    /// per-row results.
    pub fn pdf_batch(&self, xs: &Array2<T>) -> Result<Vec<T>> {
        if xs.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: xs.ncols(),
            });
        }
        if let Self::GaussianKde(kde) = self {
            return kde.pdf_batch(xs);
        }
        let k = self.dim();
        let standard = xs.as_standard_layout();
        let flat = standard.as_slice().expect("standard layout");
        Ok(flat
            .par_chunks(k * 1024)
            .flat_map_iter(|chunk| chunk.chunks_exact(k).map(|row| self.pdf_unchecked(row)))
            .collect())
    }

    /// Draw `count` i.i.d. samples as an `count x k` array, sequentially from
    /// `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Array2<T>> {
        let k = self.dim();
        match self {
            Self::Uniform { bounds } => {
                let mut data = Vec::with_capacity(count * k);
                for _ in 0..count {
                    for &(lo, hi) in bounds {
                        data.push(lo + (hi - lo) * T::unit_uniform(rng));
                    }
                }
                Ok(Array2::from_shape_vec((count, k), data).expect("row-major"))
            }
            Self::Normal { mean, std } => {
                let mut data = Vec::with_capacity(count * k);
                for _ in 0..count {
                    for (&mu, &sd) in mean.iter().zip(std) {
                        data.push(mu + sd * T::standard_normal(rng));
                    }
                }
                Ok(Array2::from_shape_vec((count, k), data).expect("row-major"))
            }
            Self::TruncatedNormal {
                mean, std, lo, hi, ..
            } => {
                // Inverse-CDF through the untruncated normal; robust for any
                // interval with representable mass.
                let u_lo = normal_cdf((*lo - *mean) / *std);
                let u_hi = normal_cdf((*hi - *mean) / *std);
                if u_hi - u_lo <= T::zero() || (u_hi - u_lo).is_nan() {
                    return Err(Error::DegenerateData(
                        "truncation interval carries no representable normal mass".into(),
                    ));
                }
                let eps = T::epsilon();
                let mut data = Vec::with_capacity(count);
                for _ in 0..count {
                    let u = (u_lo + (u_hi - u_lo) * T::unit_uniform(rng))
                        .max(eps)
                        .min(T::one() - eps);
                    let z = normal_quantile(u)?;
                    data.push((*mean + *std * z).max(*lo).min(*hi));
                }
                Ok(Array2::from_shape_vec((count, 1), data).expect("row-major"))
            }
            Self::Beta { alpha, beta, bounds } => {
                let mut data = Vec::with_capacity(count * k);
                for _ in 0..count {
                    for &(lo, hi) in bounds {
                        let u = T::beta_draw(*alpha, *beta, rng)?;
                        data.push(lo + (hi - lo) * u);
                    }
                }
                Ok(Array2::from_shape_vec((count, k), data).expect("row-major"))
            }
            Self::StandardNormal { dim } => {
                let mut data = Vec::with_capacity(count * dim);
                for _ in 0..count * dim {
                    data.push(T::standard_normal(rng));
                }
                Ok(Array2::from_shape_vec((count, *dim), data).expect("row-major"))
            }
            Self::ChiSquared { dof } => {
                let mut data = Vec::with_capacity(count);
                for _ in 0..count {
                    data.push(T::chi_squared_draw(*dof, rng)?);
                }
                Ok(Array2::from_shape_vec((count, 1), data).expect("row-major"))
            }
            Self::UniformInterval { lo, hi } => {
                let mut data = Vec::with_capacity(count);
                for _ in 0..count {
                    data.push(*lo + (*hi - *lo) * T::unit_uniform(rng));
                }
                Ok(Array2::from_shape_vec((count, 1), data).expect("row-major"))
            }
            Self::GaussianKde(kde) => Ok(kde.sample(count, rng)),
            Self::Product(components) => {
                let mut out = Array2::from_elem((count, k), T::zero());
                for (j, c) in components.iter().enumerate() {
                    let col = c.sample(count, rng)?;
                    for i in 0..count {
                        out[[i, j]] = col[[i, 0]];
                    }
                }
                Ok(out)
            }
        }
    }

    /// Interval carrying all but ~1e-10 of the mass; `None` when the density
    /// is multivariate. Used to pick quadrature windows.
    pub fn support_hint(&self) -> Option<(T, T)> {
        if self.dim() != 1 {
            if let Self::Product(c) = self {
                if c.len() == 1 {
                    return c[0].support_hint();
                }
            }
            return None;
        }
        let z = T::of(Z_TAIL);
        match self {
            Self::Uniform { bounds } => Some(bounds[0]),
            Self::Normal { mean, std } => Some((mean[0] - z * std[0], mean[0] + z * std[0])),
            Self::TruncatedNormal {
                mean, std, lo, hi, ..
            } => Some(((*mean - z * *std).max(*lo), (*mean + z * *std).min(*hi))),
            Self::Beta { bounds, .. } => Some(bounds[0]),
            Self::StandardNormal { .. } => Some((-z, z)),
            Self::ChiSquared { dof } => {
                let hi = chi2_quantile(*dof, T::one() - T::of(1e-10)).ok()?;
                Some((T::zero(), hi))
            }
            Self::UniformInterval { lo, hi } => Some((*lo, *hi)),
            Self::GaussianKde(kde) => kde.support_hint(),
            Self::Product(c) => c[0].support_hint(),
        }
    }
}

impl<T: Scalar> From<GaussianKde<T>> for DensityModel<T> {
    fn from(kde: GaussianKde<T>) -> Self {
        Self::GaussianKde(kde)
    }
}

/// Fit a product-Gaussian-kernel KDE to `M x k` sample points.
pub fn fit_gkde<T: Scalar>(points: &Array2<T>, rule: &BandwidthRule<T>) -> Result<DensityModel<T>> {
    Ok(GaussianKde::fit(points, rule)?.into())
}

/// Chi-squared density with `dof` degrees of freedom; zero for `q < 0`.
pub fn chi2_pdf<T: Scalar>(dof: u32, q: T) -> T {
    if q < T::zero() || q.is_nan() {
        return T::zero();
    }
    let half = T::of(0.5);
    let a = T::of(dof as f64) * half;
    if q == T::zero() {
        // Limit of q^(a-1) at the origin.
        return match dof {
            1 => T::infinity(),
            2 => half,
            _ => T::zero(),
        };
    }
    ((a - T::one()) * q.ln() - half * q - a * T::of(2.0).ln() - ln_gamma(a)).exp()
}

/// Chi-squared CDF: the regularized lower incomplete gamma `P(dof/2, q/2)`.
pub fn chi2_cdf<T: Scalar>(dof: u32, q: T) -> Result<T> {
    if dof == 0 {
        return Err(Error::InvalidInput("degrees of freedom must be at least 1".into()));
    }
    if q < T::zero() || q.is_nan() {
        return Err(Error::InvalidInput(format!(
            "chi-squared CDF requires q >= 0, got {q}"
        )));
    }
    let half = T::of(0.5);
    reg_lower_gamma(T::of(dof as f64) * half, q * half)
}

/// Chi-squared quantile by bracketing bisection on [`chi2_cdf`], accurate to
/// well within 1e-9 in CDF value.
pub fn chi2_quantile<T: Scalar>(dof: u32, p: T) -> Result<T> {
    if dof == 0 {
        return Err(Error::InvalidInput("degrees of freedom must be at least 1".into()));
    }
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::InvalidInput(format!(
            "quantile requires p in (0, 1), got {p}"
        )));
    }
    let mut hi = T::of(dof as f64).max(T::one());
    let mut grow = 0;
    while chi2_cdf(dof, hi)? < p {
        hi *= T::of(2.0);
        grow += 1;
        if grow > 300 {
            return Err(Error::NoConvergence("chi-squared quantile bracketing"));
        }
    }
    let mut lo = T::zero();
    for _ in 0..200 {
        let mid = (lo + hi) * T::of(0.5);
        if chi2_cdf(dof, mid)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * hi.max(T::one()) {
            break;
        }
    }
    Ok((lo + hi) * T::of(0.5))
}
