//! Distances and error measures between densities.
//!
//! Total variation here is `integral |p - q|` with **no** 1/2 factor. The
//! stability and error-bound identities verified by the experiment suite hold
//! exactly in this convention, so it is used everywhere; halve the values to
//! compare against the textbook definition.

use ndarray::Array2;

use crate::density::DensityModel;
use crate::inference::DEFAULT_RATIO_FLOOR;
use crate::quadrature::trapezoid;
use crate::{Error, Result, Scalar};

/// Sample-size / error curve from a convergence study, with the fitted
/// log-log slope.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord<T> {
    sample_sizes: Vec<usize>,
    errors: Vec<T>,
    repetitions: usize,
    fitted_slope: Option<T>,
}

impl<T: Scalar> ConvergenceRecord<T> {
    /// `errors[i]` is the (median) error at `sample_sizes[i]`; sizes must be
    /// strictly increasing and errors strictly positive.
    pub fn new(sample_sizes: Vec<usize>, errors: Vec<T>, repetitions: usize) -> Result<Self> {
        if sample_sizes.len() != errors.len() || sample_sizes.is_empty() {
            return Err(Error::InvalidInput(
                "sample sizes and errors must be matched and nonempty".into(),
            ));
        }
        if !sample_sizes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput(
                "sample sizes must be strictly increasing".into(),
            ));
        }
        if errors.iter().any(|e| *e <= T::zero() || !e.is_finite()) {
            return Err(Error::InvalidInput("errors must be positive and finite".into()));
        }
        Ok(Self {
            sample_sizes,
            errors,
            repetitions,
            fitted_slope: None,
        })
    }

    pub fn sample_sizes(&self) -> &[usize] {
        &self.sample_sizes
    }

    pub fn errors(&self) -> &[T] {
        &self.errors
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions
    }

    pub fn fitted_slope(&self) -> Option<T> {
        self.fitted_slope
    }
}

/// Least-squares slope of `log(error)` against `log(N)`, stored in the
/// record. Needs at least three points.
pub fn fit_rate<T: Scalar>(record: &mut ConvergenceRecord<T>) -> Result<T> {
    let n = record.sample_sizes.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "rate fit needs at least 3 points, got {n}"
        )));
    }
    let xs: Vec<T> = record
        .sample_sizes
        .iter()
        .map(|&s| T::of_usize(s).ln())
        .collect();
    let ys: Vec<T> = record.errors.iter().map(|e| e.ln()).collect();
    let nf = T::of_usize(n);
    let mean_x = xs.iter().copied().sum::<T>() / nf;
    let mean_y = ys.iter().copied().sum::<T>() / nf;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&x, &y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = sxy / sxx;
    record.fitted_slope = Some(slope);
    Ok(slope)
}

/// Total variation between two 1-D densities by composite trapezoid
/// quadrature of `|p - q|` over `support` (no 1/2 factor).
pub fn tv_distance_quadrature<T: Scalar>(
    p: &DensityModel<T>,
    q: &DensityModel<T>,
    support: (T, T),
    nodes: usize,
) -> Result<T> {
    if p.dim() != 1 || q.dim() != 1 {
        return Err(Error::Unsupported(
            "quadrature total variation requires 1-D densities; use the Monte Carlo variant".into(),
        ));
    }
    if nodes < 64 {
        return Err(Error::InvalidInput(format!(
            "need at least 64 quadrature nodes, got {nodes}"
        )));
    }
    let (lo, hi) = support;
    if lo >= hi || !lo.is_finite() || !hi.is_finite() || lo.is_nan() {
        return Err(Error::InvalidInput("support must be a finite interval".into()));
    }
    Ok(trapezoid(
        |x| {
            let px = p.pdf(&[x]).unwrap_or(T::zero());
            let qx = q.pdf(&[x]).unwrap_or(T::zero());
            (px - qx).abs()
        },
        lo,
        hi,
        nodes,
    ))
}

/// Support interval covering both densities, from their tail hints.
pub fn joint_support<T: Scalar>(p: &DensityModel<T>, q: &DensityModel<T>) -> Result<(T, T)> {
    let (plo, phi) = p.support_hint().ok_or_else(|| {
        Error::Unsupported("density has no 1-D support hint".into())
    })?;
    let (qlo, qhi) = q.support_hint().ok_or_else(|| {
        Error::Unsupported("density has no 1-D support hint".into())
    })?;
    Ok((plo.min(qlo), phi.max(qhi)))
}

/// Monte Carlo total variation between two density evaluators over `R^k`:
/// `(1/M) sum |p(x_i) - q(x_i)| / sampler(x_i)` with `x_i` the rows of
/// `batch`, drawn from `sampler`.
pub fn tv_distance_mc<T, P, Q>(
    p_pdf: P,
    q_pdf: Q,
    sampler: &DensityModel<T>,
    batch: &Array2<T>,
) -> Result<T>
where
    T: Scalar,
    P: Fn(&[T]) -> T,
    Q: Fn(&[T]) -> T,
{
    if batch.nrows() == 0 {
        return Err(Error::InvalidInput("batch is empty".into()));
    }
    if batch.ncols() != sampler.dim() {
        return Err(Error::DimensionMismatch {
            expected: sampler.dim(),
            actual: batch.ncols(),
        });
    }
    let standard = batch.as_standard_layout();
    let flat = standard.as_slice().expect("standard layout");
    let k = batch.ncols();
    let mut acc = T::zero();
    for row in flat.chunks_exact(k) {
        let s = sampler.pdf(row)?;
        if s <= T::zero() || s.is_nan() {
            return Err(Error::InvalidInput(
                "sampler density is zero at a sample point; its support must cover both densities"
                    .into(),
            ));
        }
        acc += (p_pdf(row) - q_pdf(row)).abs() / s;
    }
    Ok(acc / T::of_usize(batch.nrows()))
}

/// Discrete L1 error between the posterior built from the exact push-forward
/// and the one built from its estimate:
/// `(1/N) sum_i |obs(q_i)/exact(q_i) - obs(q_i)/approx(q_i)|` over QoI rows
/// pushed from prior samples.
///
/// Denominators at or below the ratio floor are clamped there; the second
/// return value counts those dominance violations.
pub fn posterior_l1_error<T: Scalar>(
    exact_pf: &DensityModel<T>,
    approx_pf: &DensityModel<T>,
    observed: &DensityModel<T>,
    qois: &Array2<T>,
) -> Result<(T, usize)> {
    if qois.nrows() == 0 {
        return Err(Error::InvalidInput("qois is empty".into()));
    }
    let floor = T::of(DEFAULT_RATIO_FLOOR);
    let obs = observed.pdf_batch(qois)?;
    // The exact density is cheap; the KDE dominates, so batch it too.
    let exact = exact_pf.pdf_batch(qois)?;
    let approx = approx_pf.pdf_batch(qois)?;
    let mut acc = T::zero();
    let mut violations = 0;
    for ((&o, &e), &a) in obs.iter().zip(&exact).zip(&approx) {
        if o == T::zero() {
            continue;
        }
        let de = if e <= floor {
            violations += 1;
            floor
        } else {
            e
        };
        let da = if a <= floor {
            violations += 1;
            floor
        } else {
            a
        };
        acc += (o / de - o / da).abs();
    }
    Ok((acc / T::of_usize(qois.nrows()), violations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngStream;
    use approx::assert_relative_eq;

    #[test]
    fn tv_identical_densities_is_zero() {
        let p: DensityModel<f64> = DensityModel::normal(vec![0.0], vec![1.0]).unwrap();
        let tv = tv_distance_quadrature(&p, &p.clone(), (-8.0, 8.0), 4097).unwrap();
        assert!(tv.abs() < 1e-12);
    }

    #[test]
    fn tv_disjoint_halves_of_uniforms() {
        let p = DensityModel::uniform_interval(0.0, 1.0).unwrap();
        let q = DensityModel::uniform_interval(0.5, 1.5).unwrap();
        let tv = tv_distance_quadrature(&p, &q, (0.0, 1.5), 3 * 4096 + 1).unwrap();
        assert_relative_eq!(tv, 1.0, epsilon = 5e-3);
    }

    #[test]
    fn tv_equal_variance_normals_closed_form() {
        // integral |N(0,1) - N(0.1,1)| = 2 (2 Phi(0.05) - 1). Oracle: Taylor
        // series of erf around zero, independent of the library's gamma path.
        let p = DensityModel::normal(vec![0.0], vec![1.0]).unwrap();
        let q = DensityModel::normal(vec![0.1], vec![1.0]).unwrap();
        let tv = tv_distance_quadrature(&p, &q, (-9.0, 9.1), 65_537).unwrap();
        let x = 0.05_f64 / std::f64::consts::SQRT_2;
        let mut erf = 0.0;
        let mut term = x;
        for n in 0..20 {
            erf += term / (2 * n + 1) as f64;
            term *= -x * x / (n + 1) as f64;
        }
        erf *= 2.0 / std::f64::consts::PI.sqrt();
        let expected = 2.0 * erf; // 2 (2 Phi - 1) with Phi = (1 + erf)/2.
        assert_relative_eq!(tv, expected, epsilon = 1e-6);
        assert_relative_eq!(tv, 0.079_755, epsilon = 1e-4);
    }

    #[test]
    fn tv_rejects_multivariate_and_few_nodes() {
        let p = DensityModel::standard_normal(2).unwrap();
        let q = DensityModel::standard_normal(2).unwrap();
        assert!(matches!(
            tv_distance_quadrature(&p, &q, (0.0, 1.0), 1024),
            Err(Error::Unsupported(_))
        ));
        let p1 = DensityModel::uniform_interval(0.0, 1.0).unwrap();
        assert!(tv_distance_quadrature(&p1, &p1.clone(), (0.0, 1.0), 32).is_err());
    }

    #[test]
    fn tv_mc_matches_closed_forms() {
        let sampler = DensityModel::uniform_interval(0.0, 1.0).unwrap();
        let mut rng = RngStream::from_seed(64);
        let batch = sampler.sample(10_000, &mut rng).unwrap();
        // p uniform, q(x) = 2x on [0,1]: integral |1 - 2x| = 1/2.
        let tv = tv_distance_mc(
            |x: &[f64]| if (0.0..=1.0).contains(&x[0]) { 1.0 } else { 0.0 },
            |x: &[f64]| if (0.0..=1.0).contains(&x[0]) { 2.0 * x[0] } else { 0.0 },
            &sampler,
            &batch,
        )
        .unwrap();
        assert_relative_eq!(tv, 0.5, epsilon = 0.02);
        // p == q gives exactly zero.
        let tv = tv_distance_mc(|x: &[f64]| x[0], |x: &[f64]| x[0], &sampler, &batch).unwrap();
        assert_eq!(tv, 0.0);
    }

    #[test]
    fn tv_mc_agrees_with_quadrature() {
        let p = DensityModel::normal(vec![0.0], vec![1.0]).unwrap();
        let q = DensityModel::normal(vec![0.1], vec![1.0]).unwrap();
        let quad = tv_distance_quadrature(&p, &q, (-9.0, 9.1), 65_537).unwrap();
        let sampler = DensityModel::normal(vec![0.05], vec![2.0]).unwrap();
        let mut rng = RngStream::from_seed(65);
        let batch = sampler.sample(100_000, &mut rng).unwrap();
        let mc = tv_distance_mc(
            |x: &[f64]| p.pdf(x).unwrap(),
            |x: &[f64]| q.pdf(x).unwrap(),
            &sampler,
            &batch,
        )
        .unwrap();
        assert_relative_eq!(mc, quad, epsilon = 0.01);
    }

    #[test]
    fn tv_mc_rejects_uncovered_sampler() {
        let sampler = DensityModel::uniform_interval(0.0, 1.0).unwrap();
        let batch = Array2::from_shape_vec((1, 1), vec![2.0]).unwrap();
        assert!(tv_distance_mc(|_: &[f64]| 1.0, |_: &[f64]| 1.0, &sampler, &batch).is_err());
    }

    #[test]
    fn l1_error_trivial_cases() {
        let exact = DensityModel::chi_squared(2).unwrap();
        let observed = DensityModel::uniform_interval(1.0, 2.0).unwrap();
        let mut rng = RngStream::from_seed(10);
        let qois = exact.sample(500, &mut rng).unwrap();
        // Identical push-forwards: zero error.
        let (err, v) = posterior_l1_error(&exact, &exact.clone(), &observed, &qois).unwrap();
        assert_eq!(err, 0.0);
        assert_eq!(v, 0);
        // Observed vanishing on all rows: zero error.
        let far = DensityModel::uniform_interval(100.0, 101.0).unwrap();
        let approx = DensityModel::chi_squared(4).unwrap();
        let (err, _) = posterior_l1_error(&exact, &approx, &far, &qois).unwrap();
        assert_eq!(err, 0.0);
        assert!(posterior_l1_error(
            &exact,
            &approx,
            &far,
            &Array2::from_shape_vec((0, 1), vec![]).unwrap()
        )
        .is_err());
    }

    #[test]
    fn fit_rate_exact_power_law() {
        let sizes = vec![100, 316, 1_000, 3_162, 10_000];
        let errors: Vec<f64> = sizes.iter().map(|&n| 3.7 * (n as f64).powf(-0.4)).collect();
        let mut record = ConvergenceRecord::new(sizes, errors, 1).unwrap();
        let slope = fit_rate(&mut record).unwrap();
        assert_relative_eq!(slope, -0.4, epsilon = 1e-10);
        assert_eq!(record.fitted_slope(), Some(slope));
    }

    #[test]
    fn fit_rate_needs_three_points() {
        let mut record = ConvergenceRecord::new(vec![10, 100], vec![1.0, 0.5], 1).unwrap();
        assert!(fit_rate(&mut record).is_err());
    }

    #[test]
    fn convergence_record_validation() {
        assert!(ConvergenceRecord::<f64>::new(vec![10, 10], vec![1.0, 1.0], 1).is_err());
        assert!(ConvergenceRecord::new(vec![10, 20], vec![1.0, -1.0], 1).is_err());
        assert!(ConvergenceRecord::new(vec![10], vec![1.0, 1.0], 1).is_err());
    }
}
