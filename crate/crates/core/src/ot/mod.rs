//! Exact and approximate optimal transport plans and p-Wasserstein distances
//! between equal-size empirical prediction clouds.
//!
//! A cloud holds `T` atoms in `ℝᴺ`, each carrying uniform mass `1/T`; the
//! ground metric is Euclidean distance raised to the order `p`. With equal
//! uniform weights the optimum of the coupling problem is attained at a
//! permutation, so the exact solver runs a linear assignment on the `T`×`T`
//! cost matrix. Two cheaper routes are provided: rank matching for
//! one-dimensional atoms (exact) and Hilbert curve sorting (feasible,
//! generally suboptimal). All arithmetic stays in `f64`; the `1/p` root is
//! applied only at the distance boundary, never inside solvers.

mod assignment;
mod hilbert;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

/// Which coupling algorithm to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Linear assignment on the full cost matrix; optimal.
    Exact,
    /// Pair atoms by Hilbert curve rank; feasible upper bound.
    Hilbert,
    /// Pair order statistics; optimal, requires one-dimensional atoms.
    Rank1d,
}

/// Order and solver for a Wasserstein computation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WassersteinConfig {
    /// Positive, finite order of the distance.
    pub p: f64,
    pub solver: SolverKind,
}

impl WassersteinConfig {
    pub fn new(p: f64, solver: SolverKind) -> Result<Self> {
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::InvalidOrder { p });
        }
        Ok(Self { p, solver })
    }

    pub fn exact(p: f64) -> Result<Self> {
        Self::new(p, SolverKind::Exact)
    }
}

impl Default for WassersteinConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            solver: SolverKind::Exact,
        }
    }
}

/// `T` atoms in `ℝᴺ` with implicit uniform weights `1/T`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCloud {
    atoms: Array2<f64>,
}

impl EmpiricalCloud {
    /// Wrap a `T`×`N` atom matrix. Requires `T ≥ 1`, `N ≥ 1`, finite entries.
    pub fn new(atoms: Array2<f64>) -> Result<Self> {
        if atoms.nrows() == 0 || atoms.ncols() == 0 {
            return Err(Error::EmptyInput {
                context: "empirical cloud atoms",
            });
        }
        check_finite("empirical cloud atoms", &atoms.view())?;
        Ok(Self { atoms })
    }

    /// Number of atoms `T`.
    pub fn len(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.nrows() == 0
    }

    /// Ambient dimension `N`.
    pub fn dim(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atoms(&self) -> ArrayView2<'_, f64> {
        self.atoms.view()
    }
}

/// A coupling between two equal-size clouds together with its attained cost
/// (the sum of p-th power ground costs, before the `1/p` root).
#[derive(Debug, Clone)]
pub struct TransportPlan {
    /// `T`×`T′` nonnegative couplings; rows sum to `1/T`, columns to `1/T′`.
    pub gamma: Array2<f64>,
    /// Attained transport cost `Σ_{t,t′} d(μ⁽ᵗ⁾, ν⁽ᵗ′⁾)ᵖ γ_{t,t′}`.
    pub objective: f64,
}

impl TransportPlan {
    fn from_permutation(perm: &[usize], objective: f64) -> Self {
        let t = perm.len();
        let mass = 1.0 / t as f64;
        let mut gamma = Array2::<f64>::zeros((t, t));
        for (row, &col) in perm.iter().enumerate() {
            gamma[[row, col]] = mass;
        }
        Self { gamma, objective }
    }

    /// Maximum deviation of row and column sums from their uniform targets.
    pub fn marginal_residuals(&self) -> (f64, f64) {
        let (t, tp) = (self.gamma.nrows(), self.gamma.ncols());
        let row_target = 1.0 / t as f64;
        let col_target = 1.0 / tp as f64;
        let mut row_dev = 0.0f64;
        for row in self.gamma.rows() {
            row_dev = row_dev.max((row.sum() - row_target).abs());
        }
        let mut col_dev = 0.0f64;
        for col in self.gamma.columns() {
            col_dev = col_dev.max((col.sum() - col_target).abs());
        }
        (row_dev, col_dev)
    }
}

fn check_pair(a: &EmpiricalCloud, b: &EmpiricalCloud, context: &'static str) -> Result<()> {
    if a.len() != b.len() || a.dim() != b.dim() {
        return Err(Error::shape(
            context,
            (a.len(), a.dim()),
            (b.len(), b.dim()),
        ));
    }
    Ok(())
}

/// Euclidean distance raised to `p`, computed from the squared norm.
fn pair_cost(a: &EmpiricalCloud, b: &EmpiricalCloud, i: usize, j: usize, p: f64) -> f64 {
    let mut ss = 0.0;
    for d in 0..a.dim() {
        let diff = a.atoms[[i, d]] - b.atoms[[j, d]];
        ss += diff * diff;
    }
    if p == 2.0 {
        ss
    } else if p == 1.0 {
        ss.sqrt()
    } else {
        ss.powf(0.5 * p)
    }
}

fn cost_matrix(a: &EmpiricalCloud, b: &EmpiricalCloud, p: f64) -> Result<Array2<f64>> {
    let t = a.len();
    let mut cost = Array2::<f64>::zeros((t, t));
    for i in 0..t {
        for j in 0..t {
            let c = pair_cost(a, b, i, j, p);
            if !c.is_finite() {
                return Err(Error::NonFinite {
                    context: "transport cost matrix",
                    row: i,
                    col: j,
                });
            }
            cost[[i, j]] = c;
        }
    }
    Ok(cost)
}

/// Objective accumulated over rows in ascending order so every solver sums
/// the matched costs identically.
fn permutation_objective(a: &EmpiricalCloud, b: &EmpiricalCloud, perm: &[usize], p: f64) -> f64 {
    let mass = 1.0 / perm.len() as f64;
    let mut obj = 0.0;
    for (i, &j) in perm.iter().enumerate() {
        obj += pair_cost(a, b, i, j, p) * mass;
    }
    obj
}

/// Optimal coupling of two equal-size clouds via linear assignment.
///
/// The returned plan is a permutation scaled by `1/T`. When several
/// matchings are optimal the solver's deterministic scan order (lowest row
/// index first) picks one; only the objective is contract-bearing.
pub fn exact_plan(
    a: &EmpiricalCloud,
    b: &EmpiricalCloud,
    cfg: &WassersteinConfig,
) -> Result<TransportPlan> {
    check_pair(a, b, "exact transport plan")?;
    if !cfg.p.is_finite() || cfg.p <= 0.0 {
        return Err(Error::InvalidOrder { p: cfg.p });
    }
    let cost = cost_matrix(a, b, cfg.p)?;
    let perm = assignment::min_cost_assignment(&cost.view());
    let objective = permutation_objective(a, b, &perm, cfg.p);
    Ok(TransportPlan::from_permutation(&perm, objective))
}

fn sorted_order_1d(c: &EmpiricalCloud) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.sort_by(|&i, &j| c.atoms[[i, 0]].total_cmp(&c.atoms[[j, 0]]).then(i.cmp(&j)));
    idx
}

fn rank_permutation(a: &EmpiricalCloud, b: &EmpiricalCloud) -> Vec<usize> {
    let order_a = sorted_order_1d(a);
    let order_b = sorted_order_1d(b);
    let mut perm = vec![0usize; a.len()];
    for (ra, &ia) in order_a.iter().enumerate() {
        perm[ia] = order_b[ra];
    }
    perm
}

/// Optimal coupling for one-dimensional atoms: the t-th order statistic of
/// `a` pairs with the t-th order statistic of `b`.
pub fn rank1d_plan(
    a: &EmpiricalCloud,
    b: &EmpiricalCloud,
    cfg: &WassersteinConfig,
) -> Result<TransportPlan> {
    check_pair(a, b, "rank transport plan")?;
    if a.dim() != 1 {
        return Err(Error::UnsupportedDimension { dim: a.dim() });
    }
    if !cfg.p.is_finite() || cfg.p <= 0.0 {
        return Err(Error::InvalidOrder { p: cfg.p });
    }
    let perm = rank_permutation(a, b);
    let objective = permutation_objective(a, b, &perm, cfg.p);
    Ok(TransportPlan::from_permutation(&perm, objective))
}

/// Feasible coupling from sorting both clouds along a Hilbert curve built on
/// their joint bounding box (16 bits per coordinate). Its objective is an
/// upper bound on the exact one. One-dimensional inputs reduce to rank
/// matching, since the curve order on a line is the sort order.
pub fn hilbert_plan(
    a: &EmpiricalCloud,
    b: &EmpiricalCloud,
    cfg: &WassersteinConfig,
) -> Result<TransportPlan> {
    check_pair(a, b, "hilbert transport plan")?;
    if !cfg.p.is_finite() || cfg.p <= 0.0 {
        return Err(Error::InvalidOrder { p: cfg.p });
    }
    let perm = if a.dim() == 1 {
        rank_permutation(a, b)
    } else {
        let dims = a.dim();
        let mut lo = vec![f64::INFINITY; dims];
        let mut hi = vec![f64::NEG_INFINITY; dims];
        for cloud in [a, b] {
            for row in cloud.atoms().rows() {
                for d in 0..dims {
                    lo[d] = lo[d].min(row[d]);
                    hi[d] = hi[d].max(row[d]);
                }
            }
        }
        let order_a = hilbert::hilbert_order(&a.atoms(), &lo, &hi);
        let order_b = hilbert::hilbert_order(&b.atoms(), &lo, &hi);
        let mut perm = vec![0usize; a.len()];
        for (ra, &ia) in order_a.iter().enumerate() {
            perm[ia] = order_b[ra];
        }
        perm
    };
    let objective = permutation_objective(a, b, &perm, cfg.p);
    Ok(TransportPlan::from_permutation(&perm, objective))
}

/// Compute a plan with the configured solver.
pub fn plan(
    a: &EmpiricalCloud,
    b: &EmpiricalCloud,
    cfg: &WassersteinConfig,
) -> Result<TransportPlan> {
    match cfg.solver {
        SolverKind::Exact => exact_plan(a, b, cfg),
        SolverKind::Hilbert => hilbert_plan(a, b, cfg),
        SolverKind::Rank1d => rank1d_plan(a, b, cfg),
    }
}

/// Solver policy used by fit paths and searches: the rank solver for scalar
/// atoms (exact and cheap), the assignment solver up to 512 atoms, Hilbert
/// sorting beyond that.
pub fn auto_solver(dim: usize, t: usize) -> SolverKind {
    if dim == 1 {
        SolverKind::Rank1d
    } else if t <= 512 {
        SolverKind::Exact
    } else {
        SolverKind::Hilbert
    }
}

/// p-Wasserstein distance: solve for a plan, then take the `1/p` root of its
/// objective.
pub fn wasserstein_distance(
    a: &EmpiricalCloud,
    b: &EmpiricalCloud,
    cfg: &WassersteinConfig,
) -> Result<f64> {
    let plan = plan(a, b, cfg)?;
    Ok(plan.objective.powf(1.0 / cfg.p))
}
