//! Parameter domains, the forward-model interface, and sample batches.

use ndarray::Array2;
use rayon::prelude::*;

use crate::{Error, Result, RngStream, RowFailure, Scalar};

/// Box-shaped parameter domain in `R^n`; either side of a coordinate bound may
/// be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDomain<T> {
    bounds: Vec<(T, T)>,
}

impl<T: Scalar> ParameterDomain<T> {
    /// Build a domain from per-dimension `(lower, upper)` bounds. Requires at
    /// least one dimension and `lower < upper` for every pair.
    pub fn new(bounds: Vec<(T, T)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidInput("domain needs at least one dimension".into()));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::InvalidInput(format!(
                    "dimension {i}: bounds ({lo}, {hi}) must satisfy lower < upper"
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// All coordinates unbounded.
    pub fn unbounded(dim: usize) -> Result<Self> {
        Self::new(vec![(T::neg_infinity(), T::infinity()); dim])
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: T, hi: T) -> Result<Self> {
        Self::new(vec![(lo, hi); dim])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(T, T)] {
        &self.bounds
    }

    /// A point is inside iff every coordinate lies within its (possibly
    /// infinite) bounds; boundary points count as inside.
    pub fn contains(&self, point: &[T]) -> bool {
        point.len() == self.bounds.len()
            && point
                .iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }

    pub fn is_bounded(&self) -> bool {
        self.bounds
            .iter()
            .all(|&(lo, hi)| lo.is_finite() && hi.is_finite())
    }
}

/// Deterministic map from parameters in `R^n` to QoI vectors in `R^m`.
///
/// Evaluation must be pure: the same input always yields the same output.
pub trait ForwardModel<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn eval(&self, params: &[T]) -> Result<Vec<T>>;
}

/// Adapter turning a closure into a [`ForwardModel`].
pub struct FnModel<T, F> {
    name: String,
    in_dim: usize,
    out_dim: usize,
    f: F,
    _marker: std::marker::PhantomData<fn(T)>,
}

impl<T, F> FnModel<T, F>
where
    T: Scalar,
    F: Fn(&[T]) -> Result<Vec<T>> + Send + Sync,
{
    pub fn new(name: impl Into<String>, in_dim: usize, out_dim: usize, f: F) -> Self {
        Self {
            name: name.into(),
            in_dim,
            out_dim,
            f,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<T, F> ForwardModel<T> for FnModel<T, F>
where
    T: Scalar,
    F: Fn(&[T]) -> Result<Vec<T>> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn in_dim(&self) -> usize {
        self.in_dim
    }

    fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn eval(&self, params: &[T]) -> Result<Vec<T>> {
        (self.f)(params)
    }
}

/// Paired parameter samples and their QoI images, with provenance.
///
/// Immutable after construction; row `i` of `qois` is the model image of row
/// `i` of `params`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch<T> {
    params: Array2<T>,
    qois: Array2<T>,
    seed: u64,
    model_name: String,
}

impl<T: Scalar> SampleBatch<T> {
    pub fn new(
        params: Array2<T>,
        qois: Array2<T>,
        seed: u64,
        model_name: impl Into<String>,
    ) -> Result<Self> {
        if params.nrows() != qois.nrows() {
            return Err(Error::InvalidInput(format!(
                "params has {} rows but qois has {}",
                params.nrows(),
                qois.nrows()
            )));
        }
        Ok(Self {
            params,
            qois,
            seed,
            model_name: model_name.into(),
        })
    }

    pub fn count(&self) -> usize {
        self.params.nrows()
    }

    pub fn param_dim(&self) -> usize {
        self.params.ncols()
    }

    pub fn qoi_dim(&self) -> usize {
        self.qois.ncols()
    }

    pub fn params(&self) -> &Array2<T> {
        &self.params
    }

    pub fn qois(&self) -> &Array2<T> {
        &self.qois
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    /// New batch keeping only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let n = self.param_dim();
        let m = self.qoi_dim();
        let mut params = Vec::with_capacity(rows.len() * n);
        let mut qois = Vec::with_capacity(rows.len() * m);
        for &r in rows {
            params.extend(self.params.row(r).iter().copied());
            qois.extend(self.qois.row(r).iter().copied());
        }
        Self {
            params: Array2::from_shape_vec((rows.len(), n), params).expect("row-major"),
            qois: Array2::from_shape_vec((rows.len(), m), qois).expect("row-major"),
            seed: self.seed,
            model_name: self.model_name.clone(),
        }
    }
}

/// Evaluate the model on every row of `params`.
///
/// Output row `i` is `model.eval(params[i])` regardless of `workers`; per-row
/// failures are collected into one [`Error::EvalFailures`] rather than
/// aborting at the first bad row.
pub fn evaluate_batch<T: Scalar>(
    model: &dyn ForwardModel<T>,
    params: &Array2<T>,
    workers: usize,
) -> Result<Array2<T>> {
    if workers == 0 {
        return Err(Error::InvalidInput("workers must be at least 1".into()));
    }
    let n = model.in_dim();
    if params.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: params.ncols(),
        });
    }
    let m = model.out_dim();
    let rows = params.nrows();
    let standard = params.as_standard_layout();
    let flat = standard.as_slice().expect("standard layout");
    let eval_row = |i: usize| model.eval(&flat[i * n..(i + 1) * n]);

    let results: Vec<Result<Vec<T>>> = if workers == 1 {
        (0..rows).map(eval_row).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
        pool.install(|| (0..rows).into_par_iter().map(eval_row).collect())
    };

    let mut out = Vec::with_capacity(rows * m);
    let mut failures = Vec::new();
    for (row, result) in results.into_iter().enumerate() {
        match result {
            Ok(q) if q.len() == m => out.extend_from_slice(&q),
            Ok(q) => failures.push(RowFailure {
                row,
                message: format!("model returned {} values, expected {m}", q.len()),
            }),
            Err(e) => failures.push(RowFailure {
                row,
                message: e.to_string(),
            }),
        }
    }
    if !failures.is_empty() {
        return Err(Error::EvalFailures {
            total: rows,
            failures,
        });
    }
    Ok(Array2::from_shape_vec((rows, m), out).expect("row-major assembly"))
}

/// Draw `count` i.i.d. uniform samples over a bounded box domain.
pub fn sample_uniform<T: Scalar>(
    domain: &ParameterDomain<T>,
    count: usize,
    rng: &mut RngStream,
) -> Result<Array2<T>> {
    if !domain.is_bounded() {
        return Err(Error::InvalidInput(
            "uniform sampling requires finite bounds in every dimension".into(),
        ));
    }
    let n = domain.dim();
    let mut data = Vec::with_capacity(count * n);
    for _ in 0..count {
        for &(lo, hi) in domain.bounds() {
            let u = T::unit_uniform(rng);
            data.push(lo + (hi - lo) * u);
        }
    }
    Ok(Array2::from_shape_vec((count, n), data).expect("row-major"))
}
