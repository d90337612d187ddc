//! Benchmark forward maps, with exact push-forward densities where they exist
//! in closed form, and a name-keyed registry for CLI selection.

use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::density::{chi2_quantile, DensityModel};
use crate::domain::{ForwardModel, ParameterDomain};
use crate::{Error, Result, RngStream, Scalar};

/// Two-parameter nonlinear system with a scalar QoI.
///
/// Solves `l1 x1^2 + x2^2 = 1`, `x1^2 - l2 x2^2 = 1` for the positive root of
/// the second solution component: `q = x2 = sqrt((1 - l1) / (1 + l1 l2))`.
/// The positive root is the branch whose image contains the observed values
/// used in the experiments.
pub struct NonlinearSystem;

impl NonlinearSystem {
    /// Parameter box the map is calibrated for:
    /// `[0.79, 0.99] x [1 - 4.5 sqrt(0.1), 1 + 4.5 sqrt(0.1)]`.
    pub fn domain<T: Scalar>() -> ParameterDomain<T> {
        let spread = T::of(4.5) * T::of(0.1).sqrt();
        ParameterDomain::new(vec![
            (T::of(0.79), T::of(0.99)),
            (T::one() - spread, T::one() + spread),
        ])
        .expect("static bounds")
    }
}

impl<T: Scalar> ForwardModel<T> for NonlinearSystem {
    fn name(&self) -> &str {
        "nonlinear-system"
    }

    fn in_dim(&self) -> usize {
        2
    }

    fn out_dim(&self) -> usize {
        1
    }

    fn eval(&self, params: &[T]) -> Result<Vec<T>> {
        let (l1, l2) = (params[0], params[1]);
        let x2_sq = (T::one() - l1) / (T::one() + l1 * l2);
        if x2_sq < T::zero() {
            return Err(Error::Eval(format!(
                "no real solution at ({l1}, {l2}): x2^2 = {x2_sq}"
            )));
        }
        Ok(vec![x2_sq.sqrt()])
    }
}

/// Piecewise-smooth scalar map on `[-1, 1]^d` whose image is a disconnected
/// region of the real line.
pub struct PiecewiseSmooth {
    dim: usize,
    name: String,
}

impl PiecewiseSmooth {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidInput(
                "piecewise map needs at least two dimensions".into(),
            ));
        }
        Ok(Self {
            dim,
            name: format!("piecewise-{dim}d"),
        })
    }

    pub fn domain<T: Scalar>(&self) -> ParameterDomain<T> {
        ParameterDomain::cube(self.dim, T::of(-1.0), T::one()).expect("static bounds")
    }

    /// Which branch fires at `x` (1-4). The wedge branches cover the
    /// half-plane `3 x1 + 2 x2 >= 0`; the disk around `(-1, -1)` (active only
    /// for `d = 2`) lies entirely in the complementary half-plane, so exactly
    /// one predicate holds for every point of the domain.
    pub fn branch_index<T: Scalar>(&self, x: &[T]) -> usize {
        let (x1, x2) = (x[0], x[1]);
        let wedge = T::of(3.0) * x1 + T::of(2.0) * x2 >= T::zero();
        if wedge {
            if -x1 + T::of(0.3) * x2 < T::zero() {
                1
            } else {
                2
            }
        } else {
            let r1 = x1 + T::one();
            let r2 = x2 + T::one();
            if self.dim == 2 && r1 * r1 + r2 * r2 < T::of(0.95 * 0.95) {
                3
            } else {
                4
            }
        }
    }
}

fn piecewise_q1<T: Scalar>(x: &[T]) -> T {
    let sum_sq: T = x.iter().map(|&v| v * v).sum();
    (-sum_sq).exp() - x[0].powi(3) - x[1].powi(3)
}

impl<T: Scalar> ForwardModel<T> for PiecewiseSmooth {
    fn name(&self) -> &str {
        &self.name
    }

    fn in_dim(&self) -> usize {
        self.dim
    }

    fn out_dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &[T]) -> Result<Vec<T>> {
        let q1 = piecewise_q1(x);
        let q = match self.branch_index(x) {
            1 => q1 - T::of(2.0),
            2 => {
                let sum_sq: T = x.iter().map(|&v| v * v).sum();
                let q2 = T::one() + q1 + sum_sq / T::of_usize(4 * self.dim);
                T::of(2.0) * q2
            }
            3 => T::of(2.0) * q1 + T::of(4.0),
            _ => q1,
        };
        Ok(vec![q])
    }
}

/// Monomial map `q = lambda^p` on `[-1, 1]` for odd `p`.
pub struct Monomial {
    power: u32,
    name: String,
}

impl Monomial {
    pub fn new(power: u32) -> Result<Self> {
        if power == 0 || power.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "monomial power must be odd and positive, got {power}"
            )));
        }
        Ok(Self {
            power,
            name: format!("monomial-p{power}"),
        })
    }

    pub fn power(&self) -> u32 {
        self.power
    }

    pub fn domain<T: Scalar>() -> ParameterDomain<T> {
        ParameterDomain::cube(1, T::of(-1.0), T::one()).expect("static bounds")
    }
}

impl<T: Scalar> ForwardModel<T> for Monomial {
    fn name(&self) -> &str {
        &self.name
    }

    fn in_dim(&self) -> usize {
        1
    }

    fn out_dim(&self) -> usize {
        1
    }

    fn eval(&self, params: &[T]) -> Result<Vec<T>> {
        Ok(vec![params[0].powi(self.power as i32)])
    }
}

/// Covariance selection for the quadratic-form maps.
#[derive(Debug, Clone)]
pub enum CovarianceSpec<T> {
    Identity,
    Matrix(Array2<T>),
    /// `C = A^T A` with the entries of `A` drawn i.i.d. standard normal from
    /// this seed.
    Seeded(u64),
}

/// Specification of a quadratic-form QoI
/// `Q(lambda) = (lambda - mu)^T C^{-1} (lambda - mu)`.
#[derive(Debug, Clone)]
pub struct QuadraticFormSpec<T> {
    pub dim: usize,
    /// Defaults to the zero vector when empty.
    pub mean: Vec<T>,
    pub covariance: CovarianceSpec<T>,
}

impl<T: Scalar> QuadraticFormSpec<T> {
    pub fn standard(dim: usize) -> Self {
        Self {
            dim,
            mean: Vec::new(),
            covariance: CovarianceSpec::Identity,
        }
    }

    pub fn seeded(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            mean: Vec::new(),
            covariance: CovarianceSpec::Seeded(seed),
        }
    }
}

/// Lower-triangular Cholesky factor, packed row-major.
#[derive(Debug, Clone)]
struct Cholesky<T> {
    dim: usize,
    factor: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    fn new(matrix: &Array2<T>) -> Result<Self> {
        let d = matrix.nrows();
        if matrix.ncols() != d || d == 0 {
            return Err(Error::InvalidInput(
                "covariance must be square and nonempty".into(),
            ));
        }
        for i in 0..d {
            for j in 0..i {
                let rel =
                    (matrix[[i, j]] - matrix[[j, i]]).abs() / (T::one() + matrix[[i, j]].abs());
                if rel > T::epsilon().sqrt() {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        let mut l = vec![T::zero(); d * d];
        for i in 0..d {
            for j in 0..=i {
                let mut sum = matrix[[i, j]];
                for k in 0..j {
                    sum -= l[i * d + k] * l[j * d + k];
                }
                if i == j {
                    if sum <= T::zero() || sum.is_nan() {
                        return Err(Error::NotPositiveDefinite);
                    }
                    l[i * d + i] = sum.sqrt();
                } else {
                    l[i * d + j] = sum / l[j * d + j];
                }
            }
        }
        Ok(Self { dim: d, factor: l })
    }

    /// Solve `L y = b` by forward substitution.
    #[allow(clippy::needless_range_loop)]
    fn forward_solve(&self, b: &[T], y: &mut [T]) {
        let d = self.dim;
        for i in 0..d {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.factor[i * d + k] * y[k];
            }
            y[i] = sum / self.factor[i * d + i];
        }
    }

    /// `L z` for standard-normal `z`: a draw from `N(0, L L^T)`.
    #[allow(clippy::needless_range_loop)]
    fn correlate(&self, z: &[T], out: &mut [T]) {
        let d = self.dim;
        for i in 0..d {
            let mut sum = T::zero();
            for k in 0..=i {
                sum += self.factor[i * d + k] * z[k];
            }
            out[i] = sum;
        }
    }
}

fn random_spd<T: Scalar>(dim: usize, seed: u64) -> Array2<T> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut a = Array2::from_elem((dim, dim), T::zero());
    for i in 0..dim {
        for j in 0..dim {
            a[[i, j]] = T::standard_normal(&mut rng);
        }
    }
    let mut c = Array2::from_elem((dim, dim), T::zero());
    for i in 0..dim {
        for j in 0..dim {
            let mut sum = T::zero();
            for k in 0..dim {
                sum += a[[k, i]] * a[[k, j]];
            }
            c[[i, j]] = sum;
        }
    }
    c
}

/// Quadratic-form QoI map. When parameters are drawn from `N(mean, C)` the
/// exact push-forward of the QoI is chi-squared with `dim` degrees of
/// freedom; [`quadratic_chi2`] returns that density alongside the model.
pub struct QuadraticForm<T> {
    name: String,
    mean: Vec<T>,
    chol: Cholesky<T>,
}

impl<T: Scalar> QuadraticForm<T> {
    pub fn new(spec: &QuadraticFormSpec<T>) -> Result<Self> {
        if spec.dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        let mean = if spec.mean.is_empty() {
            vec![T::zero(); spec.dim]
        } else if spec.mean.len() == spec.dim {
            spec.mean.clone()
        } else {
            return Err(Error::DimensionMismatch {
                expected: spec.dim,
                actual: spec.mean.len(),
            });
        };
        let matrix = match &spec.covariance {
            CovarianceSpec::Identity => Array2::from_diag_elem(spec.dim, T::one()),
            CovarianceSpec::Matrix(m) => m.clone(),
            CovarianceSpec::Seeded(seed) => random_spd(spec.dim, *seed),
        };
        if matrix.nrows() != spec.dim {
            return Err(Error::DimensionMismatch {
                expected: spec.dim,
                actual: matrix.nrows(),
            });
        }
        Ok(Self {
            name: format!("chi2-quadratic-d{}", spec.dim),
            mean,
            chol: Cholesky::new(&matrix)?,
        })
    }

    /// Draw from the Gaussian prior `N(mean, C)` this map is paired with.
    pub fn sample_prior(&self, count: usize, rng: &mut RngStream) -> Array2<T> {
        let d = self.chol.dim;
        let mut data = Vec::with_capacity(count * d);
        let mut z = vec![T::zero(); d];
        let mut x = vec![T::zero(); d];
        for _ in 0..count {
            for zi in z.iter_mut() {
                *zi = T::standard_normal(rng);
            }
            self.chol.correlate(&z, &mut x);
            for (xi, mu) in x.iter().zip(&self.mean) {
                data.push(*xi + *mu);
            }
        }
        Array2::from_shape_vec((count, d), data).expect("row-major")
    }

    fn quadratic(&self, params: &[T]) -> T {
        let d = self.chol.dim;
        let centered: Vec<T> = params
            .iter()
            .zip(&self.mean)
            .map(|(&p, &mu)| p - mu)
            .collect();
        let mut y = vec![T::zero(); d];
        // (lambda - mu)^T C^{-1} (lambda - mu) = ||L^{-1}(lambda - mu)||^2.
        self.chol.forward_solve(&centered, &mut y);
        y.iter().map(|&v| v * v).sum()
    }
}

impl<T: Scalar> ForwardModel<T> for QuadraticForm<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn in_dim(&self) -> usize {
        self.chol.dim
    }

    fn out_dim(&self) -> usize {
        1
    }

    fn eval(&self, params: &[T]) -> Result<Vec<T>> {
        Ok(vec![self.quadratic(params)])
    }
}

/// Build the quadratic-form map together with its exact push-forward under
/// the matching Gaussian prior.
pub fn quadratic_chi2<T: Scalar>(
    spec: &QuadraticFormSpec<T>,
) -> Result<(QuadraticForm<T>, DensityModel<T>)> {
    let model = QuadraticForm::new(spec)?;
    let dof =
        u32::try_from(spec.dim).map_err(|_| Error::InvalidInput("dimension too large".into()))?;
    Ok((model, DensityModel::chi_squared(dof)?))
}

/// Block variant: `m` quadratic-form QoIs over disjoint coordinate blocks of
/// size `dim / m`, each with its own covariance.
pub struct BlockQuadratic<T> {
    name: String,
    block_dim: usize,
    blocks: Vec<QuadraticForm<T>>,
}

impl<T: Scalar> BlockQuadratic<T> {
    pub fn qoi_count(&self) -> usize {
        self.blocks.len()
    }

    /// Draw from the block-diagonal Gaussian prior.
    pub fn sample_prior(&self, count: usize, rng: &mut RngStream) -> Array2<T> {
        let d = self.block_dim * self.blocks.len();
        let mut normals = Array2::from_elem((count, d), T::zero());
        for z in normals.iter_mut() {
            *z = T::standard_normal(rng);
        }
        self.prior_from_normals(&normals.view())
    }

    /// Map standard-normal rows onto prior draws (`lambda = L z` blockwise).
    ///
    /// Feeding the same normals to models of different dimensions couples
    /// their prior samples, which is what lets convergence studies compare
    /// dimensions under common random numbers. Rows may be wider than the
    /// parameter dimension; extra columns are ignored.
    pub fn prior_from_normals(&self, normals: &ndarray::ArrayView2<T>) -> Array2<T> {
        let d = self.block_dim * self.blocks.len();
        assert!(normals.ncols() >= d, "need at least {d} normal columns");
        let count = normals.nrows();
        let mut out = Array2::from_elem((count, d), T::zero());
        let mut x = vec![T::zero(); self.block_dim];
        for i in 0..count {
            for (b, block) in self.blocks.iter().enumerate() {
                let offset = b * self.block_dim;
                let z: Vec<T> = (0..self.block_dim)
                    .map(|j| normals[[i, offset + j]])
                    .collect();
                block.chol.correlate(&z, &mut x);
                for j in 0..self.block_dim {
                    out[[i, offset + j]] = x[j] + block.mean[j];
                }
            }
        }
        out
    }
}

impl<T: Scalar> ForwardModel<T> for BlockQuadratic<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn in_dim(&self) -> usize {
        self.block_dim * self.blocks.len()
    }

    fn out_dim(&self) -> usize {
        self.blocks.len()
    }

    fn eval(&self, params: &[T]) -> Result<Vec<T>> {
        Ok(self
            .blocks
            .iter()
            .enumerate()
            .map(|(b, block)| {
                block.quadratic(&params[b * self.block_dim..(b + 1) * self.block_dim])
            })
            .collect())
    }
}

/// Build the block quadratic map plus its exact push-forward: the tensor
/// product of chi-squared marginals with `dim / qoi_count` degrees of
/// freedom each.
///
/// Requires `dim` divisible by `qoi_count`. Block covariances are
/// `C_i = A_i^T A_i` seeded from `cov_seed` (identity when `None`).
pub fn quadratic_chi2_block<T: Scalar>(
    dim: usize,
    qoi_count: usize,
    cov_seed: Option<u64>,
) -> Result<(BlockQuadratic<T>, DensityModel<T>)> {
    if qoi_count == 0 || dim == 0 {
        return Err(Error::InvalidInput(
            "dim and qoi_count must be at least 1".into(),
        ));
    }
    if !dim.is_multiple_of(qoi_count) {
        return Err(Error::InvalidInput(format!(
            "dim {dim} is not divisible by qoi_count {qoi_count}"
        )));
    }
    let block_dim = dim / qoi_count;
    let mut blocks = Vec::with_capacity(qoi_count);
    for b in 0..qoi_count {
        let covariance = match cov_seed {
            Some(seed) => CovarianceSpec::Seeded(seed.wrapping_add(b as u64)),
            None => CovarianceSpec::Identity,
        };
        blocks.push(QuadraticForm::new(&QuadraticFormSpec {
            dim: block_dim,
            mean: Vec::new(),
            covariance,
        })?);
    }
    let dof = u32::try_from(block_dim)
        .map_err(|_| Error::InvalidInput("block dimension too large".into()))?;
    let marginal = DensityModel::chi_squared(dof)?;
    let pushforward = if qoi_count == 1 {
        marginal
    } else {
        DensityModel::product(vec![marginal; qoi_count])?
    };
    Ok((
        BlockQuadratic {
            name: format!("chi2-block-d{dim}-m{qoi_count}"),
            block_dim,
            blocks,
        },
        pushforward,
    ))
}

/// Quantile convention for the block observed box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockQuantileRule {
    /// Per-dimension quantile levels `1/2 -+ (1/5)^(1/m) / 2`, so the box has
    /// push-forward mass exactly 1/5 for every `m`.
    MassPreserving,
    /// Per-dimension quantile levels `1/2 -+ (1/5)^(1/m)`; the box mass then
    /// grows as `2^m / 5` and the levels leave `(0, 1)` for `m >= 3`.
    LevelOffset,
}

/// Observed density for the chi-squared studies: a uniform interval (or box)
/// whose endpoints are quantiles of the exact push-forward.
///
/// For a single QoI the interval runs between the 0.4 and 0.6 quantiles of
/// the chi-squared push-forward with `dim` degrees of freedom. For `m > 1`
/// QoIs the box is a product of intervals in the chi-squared marginals with
/// `dim / m` degrees of freedom, with per-dimension levels set by `rule`.
pub fn quantile_matched_uniform_observed<T: Scalar>(
    dim: usize,
    qoi_count: usize,
    rule: BlockQuantileRule,
) -> Result<DensityModel<T>> {
    if qoi_count == 0 || dim == 0 || !dim.is_multiple_of(qoi_count) {
        return Err(Error::InvalidInput(format!(
            "invalid dim {dim} / qoi_count {qoi_count}"
        )));
    }
    if qoi_count == 1 {
        let dof = u32::try_from(dim).map_err(|_| Error::InvalidInput("dim too large".into()))?;
        let a = chi2_quantile(dof, T::of(0.4))?;
        let b = chi2_quantile(dof, T::of(0.6))?;
        return DensityModel::uniform_interval(a, b);
    }
    let dof = u32::try_from(dim / qoi_count)
        .map_err(|_| Error::InvalidInput("dim too large".into()))?;
    let offset = T::of(0.2).powf(T::of_usize(qoi_count).recip());
    let (level_lo, level_hi) = match rule {
        BlockQuantileRule::MassPreserving => {
            let h = offset * T::of(0.5);
            (T::of(0.5) - h, T::of(0.5) + h)
        }
        BlockQuantileRule::LevelOffset => (T::of(0.5) - offset, T::of(0.5) + offset),
    };
    if !(level_lo > T::zero() && level_hi < T::one()) {
        return Err(Error::InvalidInput(format!(
            "quantile levels ({level_lo}, {level_hi}) leave (0, 1); \
             the level-offset rule is undefined for qoi_count {qoi_count}"
        )));
    }
    let a = chi2_quantile(dof, level_lo)?;
    let b = chi2_quantile(dof, level_hi)?;
    DensityModel::product(vec![DensityModel::uniform_interval(a, b)?; qoi_count])
}

/// Extra parameters for registry models that need them.
#[derive(Debug, Clone, Default)]
pub struct ModelOptions {
    pub dim: Option<usize>,
    pub qoi: Option<usize>,
    pub cov_seed: Option<u64>,
}

/// A registry entry: the model, its canonical parameter domain, and its exact
/// push-forward density when one is known.
pub struct BuiltModel<T: Scalar> {
    pub model: Arc<dyn ForwardModel<T>>,
    pub domain: ParameterDomain<T>,
    pub exact_pushforward: Option<DensityModel<T>>,
}

/// Names accepted by [`build_model`].
pub fn model_names() -> &'static [&'static str] {
    &[
        "nonlinear-system",
        "piecewise-2d",
        "chi2-quadratic",
        "chi2-block",
        "monomial-p1",
        "monomial-p3",
        "monomial-p5",
    ]
}

/// Instantiate a registry model by name.
pub fn build_model<T: Scalar>(name: &str, options: &ModelOptions) -> Result<BuiltModel<T>> {
    match name {
        "nonlinear-system" => Ok(BuiltModel {
            model: Arc::new(NonlinearSystem),
            domain: NonlinearSystem::domain(),
            exact_pushforward: None,
        }),
        "piecewise-2d" => {
            let model = PiecewiseSmooth::new(2)?;
            let domain = model.domain();
            Ok(BuiltModel {
                model: Arc::new(model),
                domain,
                exact_pushforward: None,
            })
        }
        "chi2-quadratic" => {
            let dim = options.dim.unwrap_or(2);
            let spec = match options.cov_seed {
                Some(seed) => QuadraticFormSpec::seeded(dim, seed),
                None => QuadraticFormSpec::standard(dim),
            };
            let (model, pushforward) = quadratic_chi2(&spec)?;
            Ok(BuiltModel {
                model: Arc::new(model),
                domain: ParameterDomain::unbounded(dim)?,
                exact_pushforward: Some(pushforward),
            })
        }
        "chi2-block" => {
            let dim = options
                .dim
                .ok_or_else(|| Error::InvalidInput("chi2-block requires dim".into()))?;
            let qoi = options
                .qoi
                .ok_or_else(|| Error::InvalidInput("chi2-block requires qoi".into()))?;
            let (model, pushforward) = quadratic_chi2_block(dim, qoi, options.cov_seed)?;
            Ok(BuiltModel {
                model: Arc::new(model),
                domain: ParameterDomain::unbounded(dim)?,
                exact_pushforward: Some(pushforward),
            })
        }
        "monomial-p1" | "monomial-p3" | "monomial-p5" => {
            let power: u32 = name["monomial-p".len()..].parse().expect("static suffix");
            Ok(BuiltModel {
                model: Arc::new(Monomial::new(power)?),
                domain: Monomial::domain(),
                exact_pushforward: None,
            })
        }
        other => Err(Error::InvalidInput(format!(
            "unknown model '{other}'; known models: {}",
            model_names().join(", ")
        ))),
    }
}
