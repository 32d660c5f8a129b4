//! The data model: parameter draws, prediction ensembles, interpretation
//! neighborhoods, kernels, and the simulation generators that produce them
//! for linear models.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::linalg;
use crate::ot::EmpiricalCloud;
use crate::seeding;

/// `k`×`T` matrix of coefficient draws from the original model's posterior or
/// bootstrap distribution.
#[derive(Debug, Clone)]
pub struct ParameterDraws {
    /// One row per coefficient, one column per draw.
    pub theta: Array2<f64>,
    /// Marks row 0 as an unmaskable intercept.
    pub intercept_row: bool,
}

impl ParameterDraws {
    pub fn new(theta: Array2<f64>, intercept_row: bool) -> Result<Self> {
        if theta.nrows() == 0 || theta.ncols() == 0 {
            return Err(Error::EmptyInput {
                context: "parameter draws",
            });
        }
        check_finite("parameter draws", &theta.view())?;
        Ok(Self {
            theta,
            intercept_row,
        })
    }

    /// Number of coefficients `k`.
    pub fn k(&self) -> usize {
        self.theta.nrows()
    }

    /// Number of draws `T`.
    pub fn t(&self) -> usize {
        self.theta.ncols()
    }

    /// Copy with the rows outside `active` zeroed. Row 0 survives regardless
    /// when it is an intercept row.
    pub fn masked(&self, active: &[bool]) -> ParameterDraws {
        assert_eq!(active.len(), self.k(), "mask length must equal k");
        let mut theta = Array2::<f64>::zeros(self.theta.raw_dim());
        for (j, &keep) in active.iter().enumerate() {
            if keep || (j == 0 && self.intercept_row) {
                theta.row_mut(j).assign(&self.theta.row(j));
            }
        }
        ParameterDraws {
            theta,
            intercept_row: self.intercept_row,
        }
    }
}

/// `N`×`T` matrix of predictions: one row per observation, one column per
/// parameter draw.
#[derive(Debug, Clone)]
pub struct PredictionEnsemble {
    pub values: Array2<f64>,
    /// Free-form label of the prediction scale (e.g. "linear-predictor").
    pub scale_tag: String,
}

impl PredictionEnsemble {
    pub fn new(values: Array2<f64>, scale_tag: impl Into<String>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyInput {
                context: "prediction ensemble",
            });
        }
        check_finite("prediction ensemble", &values.view())?;
        Ok(Self {
            values,
            scale_tag: scale_tag.into(),
        })
    }

    /// Number of observations `N`.
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of draws `T`.
    pub fn t(&self) -> usize {
        self.values.ncols()
    }

    /// View the ensemble as a cloud of `T` atoms in `ℝᴺ`.
    pub fn to_cloud(&self) -> EmpiricalCloud {
        EmpiricalCloud::new(self.values.t().to_owned())
            .expect("validated ensemble always forms a cloud")
    }

    /// Cloud of one observation's `T` scalar predictions.
    pub fn row_cloud(&self, i: usize) -> EmpiricalCloud {
        let col = self
            .values
            .row(i)
            .to_owned()
            .into_shape_with_order((self.t(), 1))
            .expect("row reshapes to T x 1");
        EmpiricalCloud::new(col).expect("validated ensemble row forms a cloud")
    }
}

/// How a neighborhood was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborhoodKind {
    Gaussian,
    Knn,
    UserGrid,
}

/// Interpretation points `z ∈ ℝᵏ` around a center `x₀`, with per-point
/// kernel weights.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    /// `N`×`k` matrix of interpretation points.
    pub points: Array2<f64>,
    pub center: Array1<f64>,
    /// Nonnegative kernel weights, at least one positive.
    pub weights: Array1<f64>,
    pub construction: NeighborhoodKind,
    /// Set when the requested covariance needed eigenvalue clipping.
    pub covariance_clipped: bool,
}

impl Neighborhood {
    pub fn from_points(points: Array2<f64>, center: Array1<f64>) -> Result<Self> {
        let n = points.nrows();
        let nb = Self {
            weights: Array1::ones(n),
            points,
            center,
            construction: NeighborhoodKind::UserGrid,
            covariance_clipped: false,
        };
        nb.validate()?;
        Ok(nb)
    }

    /// The single-observation neighborhood `𝓑 = {x₀}`.
    pub fn single(center: Array1<f64>) -> Self {
        let k = center.len();
        let points = center
            .clone()
            .into_shape_with_order((1, k))
            .expect("center reshapes to 1 x k");
        Self {
            points,
            center,
            weights: Array1::ones(1),
            construction: NeighborhoodKind::UserGrid,
            covariance_clipped: false,
        }
    }

    /// The `count` data rows closest to `center` in Euclidean distance.
    pub fn nearest(data: &ArrayView2<'_, f64>, center: Array1<f64>, count: usize) -> Result<Self> {
        if count == 0 || count > data.nrows() {
            return Err(Error::InvalidParameter {
                name: "count",
                reason: format!("must be in 1..={}, got {count}", data.nrows()),
            });
        }
        let mut by_dist: Vec<(f64, usize)> = data
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                let d = row
                    .iter()
                    .zip(center.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (d, i)
            })
            .collect();
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut points = Array2::<f64>::zeros((count, data.ncols()));
        for (r, &(_, i)) in by_dist.iter().take(count).enumerate() {
            points.row_mut(r).assign(&data.row(i));
        }
        let nb = Self {
            points,
            center,
            weights: Array1::ones(count),
            construction: NeighborhoodKind::Knn,
            covariance_clipped: false,
        };
        nb.validate()?;
        Ok(nb)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.nrows() == 0 {
            return Err(Error::EmptyInput {
                context: "neighborhood points",
            });
        }
        if self.points.nrows() != self.weights.len() {
            return Err(Error::shape(
                "neighborhood weights",
                (self.points.nrows(), self.points.ncols()),
                (self.weights.len(), 1),
            ));
        }
        if self.points.ncols() != self.center.len() {
            return Err(Error::shape(
                "neighborhood center",
                (self.points.nrows(), self.points.ncols()),
                (1, self.center.len()),
            ));
        }
        check_finite("neighborhood points", &self.points.view())?;
        if self.weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "weights",
                reason: "must be nonnegative and finite".into(),
            });
        }
        if !self.weights.iter().any(|&w| w > 0.0) {
            return Err(Error::InvalidParameter {
                name: "weights",
                reason: "at least one weight must be positive".into(),
            });
        }
        Ok(())
    }

    /// Number of interpretation points `N`.
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    /// Covariate dimension `k`.
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Default neighborhood size: `max(3k, 50)`.
    pub fn default_size(k: usize) -> usize {
        (3 * k).max(50)
    }
}

/// Kernel families for neighborhood weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    GaussianMahalanobis,
    Uniform,
}

/// A kernel plus its `k`×`k` scale matrix (`n⁻¹Σ̂` for the Gaussian kernel).
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub scale_matrix: Array2<f64>,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, scale_matrix: Array2<f64>) -> Result<Self> {
        let k = scale_matrix.nrows();
        if k != scale_matrix.ncols() {
            return Err(Error::shape(
                "kernel scale matrix",
                (k, scale_matrix.ncols()),
                (k, k),
            ));
        }
        let scale = scale_matrix
            .iter()
            .fold(0.0f64, |acc, x| acc.max(x.abs()))
            .max(1.0);
        for i in 0..k {
            for j in (i + 1)..k {
                if (scale_matrix[[i, j]] - scale_matrix[[j, i]]).abs() > 1e-10 * scale {
                    return Err(Error::InvalidParameter {
                        name: "scale_matrix",
                        reason: format!("asymmetric at ({i},{j})"),
                    });
                }
            }
        }
        Ok(Self { kind, scale_matrix })
    }
}

/// Linear predictions: `values[i][t] = Σ_j points[i][j] · theta[j][t]`.
pub fn predict_linear(
    points: &ArrayView2<'_, f64>,
    draws: &ParameterDraws,
) -> Result<PredictionEnsemble> {
    if points.ncols() != draws.k() {
        return Err(Error::shape(
            "linear prediction",
            (points.nrows(), points.ncols()),
            (draws.k(), draws.t()),
        ));
    }
    check_finite("prediction points", points)?;
    let values = points.dot(&draws.theta);
    PredictionEnsemble::new(values, "linear-predictor")
}

/// Kernel weights at each point: `exp(−(x₀−z)ᵀ S (x₀−z))` for the Gaussian
/// kernel with scale matrix `S`, all ones for the uniform kernel.
pub fn kernel_weights(
    spec: &KernelSpec,
    center: &ArrayView1<'_, f64>,
    points: &ArrayView2<'_, f64>,
) -> Result<Array1<f64>> {
    if points.ncols() != center.len() || spec.scale_matrix.nrows() != center.len() {
        return Err(Error::shape(
            "kernel weights",
            (points.nrows(), points.ncols()),
            (spec.scale_matrix.nrows(), spec.scale_matrix.ncols()),
        ));
    }
    let n = points.nrows();
    match spec.kind {
        KernelKind::Uniform => Ok(Array1::ones(n)),
        KernelKind::GaussianMahalanobis => {
            let k = center.len();
            let mut w = Array1::<f64>::zeros(n);
            for i in 0..n {
                let mut quad = 0.0;
                for a in 0..k {
                    let da = center[a] - points[[i, a]];
                    for b in 0..k {
                        let db = center[b] - points[[i, b]];
                        quad += da * spec.scale_matrix[[a, b]] * db;
                    }
                }
                w[i] = (-quad).exp();
            }
            Ok(w)
        }
    }
}

/// Draws `count` points from `N(center, covariance / n)` with all-equal
/// weights. A covariance that fails Cholesky falls back to eigenvalue
/// clipping at zero; the result flags that it happened.
pub fn gaussian_neighborhood(
    center: &ArrayView1<'_, f64>,
    covariance: &ArrayView2<'_, f64>,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<Neighborhood> {
    let k = center.len();
    if covariance.nrows() != k || covariance.ncols() != k {
        return Err(Error::shape(
            "gaussian neighborhood covariance",
            (covariance.nrows(), covariance.ncols()),
            (k, k),
        ));
    }
    if n == 0 || count == 0 {
        return Err(Error::InvalidParameter {
            name: "n/count",
            reason: "sample size and point count must be positive".into(),
        });
    }
    let scaled = covariance.mapv(|v| v / n as f64);
    let zero_cov = scaled.iter().all(|&v| v == 0.0);
    let (factor, clipped) = if zero_cov {
        (Array2::<f64>::zeros((k, k)), false)
    } else {
        linalg::psd_factor(&scaled.view())
    };
    let mut rng = seeding::rng(seed);
    let mut points = Array2::<f64>::zeros((count, k));
    let mut z = Array1::<f64>::zeros(k);
    for mut row in points.rows_mut() {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        for a in 0..k {
            let mut v = center[a];
            for b in 0..k {
                v += factor[[a, b]] * z[b];
            }
            row[a] = v;
        }
    }
    Ok(Neighborhood {
        points,
        center: center.to_owned(),
        weights: Array1::ones(count),
        construction: NeighborhoodKind::Gaussian,
        covariance_clipped: clipped,
    })
}

/// Which empirical covariance to form from a data matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceForm {
    /// `(1/n) Σ (xᵢ−x̄)(xᵢ−x̄)ᵀ` — the default.
    Centered,
    /// `Σ xᵢxᵢᵀ` — un-normalized, un-centered alternative.
    SumOuter,
}

/// Empirical covariance of the rows of `data`.
pub fn empirical_covariance(data: &ArrayView2<'_, f64>, form: CovarianceForm) -> Array2<f64> {
    let n = data.nrows();
    let k = data.ncols();
    let mut cov = Array2::<f64>::zeros((k, k));
    match form {
        CovarianceForm::SumOuter => {
            for row in data.rows() {
                for a in 0..k {
                    for b in a..k {
                        cov[[a, b]] += row[a] * row[b];
                    }
                }
            }
        }
        CovarianceForm::Centered => {
            let mut mean = Array1::<f64>::zeros(k);
            for row in data.rows() {
                mean += &row;
            }
            mean.mapv_inplace(|v| v / n as f64);
            for row in data.rows() {
                for a in 0..k {
                    let da = row[a] - mean[a];
                    for b in a..k {
                        cov[[a, b]] += da * (row[b] - mean[b]);
                    }
                }
            }
            cov.mapv_inplace(|v| v / n as f64);
        }
    }
    for a in 0..k {
        for b in 0..a {
            cov[[a, b]] = cov[[b, a]];
        }
    }
    cov
}

/// Block-diagonal correlation matrix with 5-wide equicorrelated unit-variance
/// blocks (the trailing block may be narrower).
pub fn block_correlation(k: usize, rho: f64) -> Array2<f64> {
    let mut omega = Array2::<f64>::eye(k);
    for start in (0..k).step_by(5) {
        let end = (start + 5).min(k);
        for a in start..end {
            for b in start..end {
                if a != b {
                    omega[[a, b]] = rho;
                }
            }
        }
    }
    omega
}

/// `n` i.i.d. rows from `N(0, Ω)` with `Ω` the block-diagonal equicorrelation
/// of [`block_correlation`]. Sampled by the shared-factor construction
/// `x_j = √ρ·g₀ + √(1−ρ)·g_j` within each block, which is exact for
/// `ρ ∈ [0, 1)`.
pub fn simulate_predictors(n: usize, k: usize, rho: f64, seed: u64) -> Result<Array2<f64>> {
    if k == 0 || n == 0 {
        return Err(Error::EmptyInput {
            context: "predictor simulation",
        });
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter {
            name: "rho",
            reason: format!("must lie in [0, 1), got {rho}"),
        });
    }
    let mut rng = seeding::rng(seed);
    let sqrt_rho = rho.sqrt();
    let sqrt_rest = (1.0 - rho).sqrt();
    let mut x = Array2::<f64>::zeros((n, k));
    for i in 0..n {
        for start in (0..k).step_by(5) {
            let end = (start + 5).min(k);
            let shared: f64 = StandardNormal.sample(&mut rng);
            for j in start..end {
                let own: f64 = StandardNormal.sample(&mut rng);
                x[[i, j]] = sqrt_rho * shared + sqrt_rest * own;
            }
        }
    }
    Ok(x)
}

/// Draws from the normal–inverse-gamma posterior of a Gaussian linear model
/// with prior `θ | σ² ~ N(0, σ²·prior_scale·I)` and `σ² ~ InvGamma(shape, rate)`.
///
/// This is the standard conjugate family; a prior on θ that ignores σ² (as
/// quoted in some toy setups) is approximated by the σ²-scaled version here.
/// With zero observations the draws come from the prior. Returns the
/// coefficient draws (no intercept row marked; the caller owns the design)
/// and the matching σ² draws.
pub fn conjugate_gaussian_posterior(
    x: &ArrayView2<'_, f64>,
    y: &ArrayView1<'_, f64>,
    prior_scale: f64,
    ig_shape: f64,
    ig_rate: f64,
    t_draws: usize,
    seed: u64,
) -> Result<(ParameterDraws, Vec<f64>)> {
    let n = x.nrows();
    let k = x.ncols();
    if n != y.len() {
        return Err(Error::shape("posterior data", (n, k), (y.len(), 1)));
    }
    if k == 0 || t_draws == 0 {
        return Err(Error::EmptyInput {
            context: "posterior draws",
        });
    }
    if !(prior_scale > 0.0) || !(ig_shape > 0.0) || !(ig_rate > 0.0) {
        return Err(Error::InvalidParameter {
            name: "prior",
            reason: "prior_scale, ig_shape and ig_rate must be positive".into(),
        });
    }

    // Posterior precision A = XᵀX + I/prior_scale, mean m = A⁻¹Xᵀy.
    let mut precision = Array2::<f64>::eye(k);
    precision.mapv_inplace(|v| v / prior_scale);
    let mut xty = Array1::<f64>::zeros(k);
    for i in 0..n {
        for a in 0..k {
            let xa = x[[i, a]];
            xty[a] += xa * y[i];
            for b in a..k {
                precision[[a, b]] += xa * x[[i, b]];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            precision[[a, b]] = precision[[b, a]];
        }
    }
    let chol = linalg::cholesky(&precision.view()).ok_or(Error::InvalidParameter {
        name: "design",
        reason: "posterior precision is not positive definite".into(),
    })?;
    let tmp = linalg::solve_lower(&chol.view(), &xty.view());
    let mean = linalg::solve_lower_transpose(&chol.view(), &tmp.view());

    let yty: f64 = y.iter().map(|v| v * v).sum();
    let fit_term: f64 = mean.iter().zip(xty.iter()).map(|(m, c)| m * c).sum();
    let shape_n = ig_shape + 0.5 * n as f64;
    let rate_n = ig_rate + 0.5 * (yty - fit_term).max(0.0);

    let mut rng = seeding::rng(seed);
    let gamma = Gamma::new(shape_n, 1.0 / rate_n).map_err(|e| Error::InvalidParameter {
        name: "inverse-gamma",
        reason: e.to_string(),
    })?;
    let mut theta = Array2::<f64>::zeros((k, t_draws));
    let mut sigma2 = Vec::with_capacity(t_draws);
    let mut z = Array1::<f64>::zeros(k);
    for t in 0..t_draws {
        let g: f64 = gamma.sample(&mut rng);
        let s2 = 1.0 / g;
        sigma2.push(s2);
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        // θ = m + σ·L⁻ᵀ z has covariance σ²·A⁻¹.
        let delta = linalg::solve_lower_transpose(&chol.view(), &z.view());
        let s = s2.sqrt();
        for a in 0..k {
            theta[[a, t]] = mean[a] + s * delta[a];
        }
    }
    Ok((ParameterDraws::new(theta, false)?, sigma2))
}

/// Uniform draw on `[lo, hi)`, used by the simulation harnesses.
pub fn uniform_in(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
