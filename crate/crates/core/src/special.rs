//! Special functions backing the chi-squared and normal machinery.
//!
//! The regularized lower incomplete gamma uses the series expansion for
//! `x < a + 1` and a modified-Lentz continued fraction otherwise; quantiles
//! elsewhere in the crate invert these by bracketing bisection rather than
//! Newton steps, trading speed for unconditional robustness.

use crate::{Error, Result, Scalar};

// Lanczos approximation, g = 7, 9 terms; canonical published digits.
const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const MAX_ITER: usize = 500;

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    if x < T::of(0.5) {
        // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x).
        let pi = T::PI();
        (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x)
    } else {
        let z = x - T::one();
        let mut acc = T::of(LANCZOS[0]);
        for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
            acc += T::of(c) / (z + T::of_usize(i));
        }
        let t = z + T::of(LANCZOS_G) + T::of(0.5);
        (T::of(2.0) * T::PI()).ln() * T::of(0.5) + (z + T::of(0.5)) * t.ln() - t + acc.ln()
    }
}

/// Regularized lower incomplete gamma function `P(a, x)` for `a > 0`, `x >= 0`.
pub fn reg_lower_gamma<T: Scalar>(a: T, x: T) -> Result<T> {
    if a <= T::zero() || !a.is_finite() || a.is_nan() {
        return Err(Error::InvalidInput(format!(
            "incomplete gamma requires a > 0, got {a}"
        )));
    }
    if x < T::zero() || x.is_nan() {
        return Err(Error::InvalidInput(format!(
            "incomplete gamma requires x >= 0, got {x}"
        )));
    }
    if x == T::zero() {
        return Ok(T::zero());
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + T::one() {
        // Series: P(a,x) = prefactor * sum_n x^n / (a (a+1) ... (a+n)).
        let mut term = T::one() / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..MAX_ITER {
            ap += T::one();
            term = term * x / ap;
            sum += term;
            if term.abs() < sum.abs() * T::epsilon() {
                return Ok((log_prefactor.exp() * sum).min(T::one()));
            }
        }
        Err(Error::NoConvergence("incomplete gamma series"))
    } else {
        // Modified Lentz continued fraction for Q(a,x).
        let tiny = T::of(1e-30);
        let one = T::one();
        let b0 = x + one - a;
        let mut f = if b0.abs() < tiny { tiny } else { b0 };
        let mut c = f;
        let mut d = T::zero();
        for n in 1..=MAX_ITER {
            let nf = T::of_usize(n);
            let an = nf * (a - nf);
            let bn = x + T::of_usize(2 * n + 1) - a;
            d = bn + an * d;
            if d.abs() < tiny {
                d = tiny;
            }
            d = one / d;
            c = bn + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            let delta = c * d;
            f *= delta;
            if (delta - one).abs() < T::epsilon() {
                let q = log_prefactor.exp() / f;
                return Ok((one - q).max(T::zero()));
            }
        }
        Err(Error::NoConvergence("incomplete gamma continued fraction"))
    }
}

/// Standard normal CDF, accurate to roughly machine precision via
/// `erf(z / sqrt(2)) = P(1/2, z^2 / 2)`.
pub fn normal_cdf<T: Scalar>(z: T) -> T {
    if z == T::zero() {
        return T::of(0.5);
    }
    let half = T::of(0.5);
    let p = reg_lower_gamma(half, z * z * half)
        .expect("incomplete gamma converges for a = 1/2, x >= 0");
    if z > T::zero() {
        half * (T::one() + p)
    } else {
        half * (T::one() - p)
    }
}

/// Standard normal quantile by bracketing bisection on [`normal_cdf`].
pub fn normal_quantile<T: Scalar>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::InvalidInput(format!(
            "normal quantile requires p in (0, 1), got {p}"
        )));
    }
    let mut lo = T::of(-40.0);
    let mut hi = T::of(40.0);
    for _ in 0..200 {
        let mid = (lo + hi) * T::of(0.5);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * (T::one() + mid.abs()) {
            break;
        }
    }
    Ok((lo + hi) * T::of(0.5))
}
