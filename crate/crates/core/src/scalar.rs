use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, StandardNormal, StandardUniform};

use crate::{Error, Result};

/// Floating-point scalar the numerical core is generic over.
///
/// Implemented for `f32` and `f64`. Besides the usual float arithmetic this
/// bundles the elementary random draws so that generic code never names a
/// concrete distribution type.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum<Self>
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Conversion from an `f64` constant baked into a formula.
    fn of(value: f64) -> Self;

    fn of_usize(value: usize) -> Self;

    fn as_f64(self) -> f64;

    /// One standard-normal draw.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw uniform on `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One `Beta(alpha, beta)` draw on `[0, 1]`.
    fn beta_draw<R: Rng + ?Sized>(alpha: Self, beta: Self, rng: &mut R) -> Result<Self>;

    /// One chi-squared draw with `dof` degrees of freedom.
    fn chi_squared_draw<R: Rng + ?Sized>(dof: u32, rng: &mut R) -> Result<Self>;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn of(value: f64) -> Self {
                value as $t
            }

            #[inline]
            fn of_usize(value: usize) -> Self {
                value as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            #[inline]
            fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardUniform.sample(rng)
            }

            fn beta_draw<R: Rng + ?Sized>(alpha: Self, beta: Self, rng: &mut R) -> Result<Self> {
                let dist = Beta::new(alpha, beta)
                    .map_err(|e| Error::InvalidInput(format!("beta({alpha}, {beta}): {e}")))?;
                Ok(dist.sample(rng))
            }

            fn chi_squared_draw<R: Rng + ?Sized>(dof: u32, rng: &mut R) -> Result<Self> {
                let dist = ChiSquared::new(dof as $t)
                    .map_err(|e| Error::InvalidInput(format!("chi-squared({dof}): {e}")))?;
                Ok(dist.sample(rng))
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);
