//! Model-size-targeted combinatorial search over coefficient subsets: best
//! subsets, simulated annealing, and backward stepwise, each parameterized
//! by how the surviving coefficients are produced (refit or masked).

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{predict_linear, Neighborhood, ParameterDraws, PredictionEnsemble};
use crate::error::{Error, Result};
use crate::linalg;
use crate::ot::{self, EmpiricalCloud, SolverKind, WassersteinConfig};
use crate::seeding;
use crate::slim_a::CoefficientMatrix;

/// How coefficients are produced for an active set.
///
/// `Adaptive` refits an unpenalized per-draw least squares on the active
/// columns (pseudo-inverse semantics under rank deficiency); `Fixed` keeps
/// the original draws on active rows and zeroes the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientRule {
    Adaptive,
    Fixed,
}

/// Temperatures and per-temperature sweep budget for annealing.
#[derive(Debug, Clone)]
pub struct AnnealingSchedule {
    /// Strictly decreasing positive temperatures.
    pub temperatures: Vec<f64>,
    /// Proposals per temperature.
    pub iters_per_temp: usize,
}

impl AnnealingSchedule {
    /// Default schedule: 30 temperatures decaying geometrically by 0.9 from
    /// the initial distance, `50·k` proposals each.
    pub fn default_for(initial_distance: f64, k: usize) -> Self {
        let r0 = initial_distance.max(1e-8);
        Self {
            temperatures: (0..30).map(|i| r0 * 0.9f64.powi(i)).collect(),
            iters_per_temp: 50 * k.max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = !self.temperatures.is_empty()
            && self.temperatures.iter().all(|&r| r > 0.0 && r.is_finite())
            && self.temperatures.windows(2).all(|w| w[0] > w[1])
            && self.iters_per_temp >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "annealing schedule",
                reason: "temperatures must be positive, strictly decreasing; L ≥ 1".into(),
            })
        }
    }
}

/// Which search produced a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMethod {
    BestSubsets,
    Stepwise,
    Annealing,
}

/// One model size's champion.
#[derive(Debug, Clone)]
pub struct SizeEntry {
    /// Number of active (non-intercept) covariates.
    pub size: usize,
    /// Active covariate indices, ascending.
    pub active: Vec<usize>,
    pub coefficients: CoefficientMatrix,
    /// Realized Wasserstein distance of the masked/refit predictions.
    pub distance: f64,
}

/// Champions for every model size `1..k−1`.
#[derive(Debug, Clone)]
pub struct SizePath {
    pub entries: Vec<SizeEntry>,
    pub provenance: SearchMethod,
    pub rule: CoefficientRule,
    /// Transport solver the distance evaluations used.
    pub solver: SolverKind,
}

/// Knobs shared by the searches.
#[derive(Debug, Clone)]
pub struct SearchOptions {
    /// Wasserstein order for the distance evaluations.
    pub p: f64,
    /// Refuse exhaustive enumeration beyond this many covariates.
    pub enumeration_cap: usize,
    /// Switch from the exact transport solver to Hilbert sorting above this
    /// many draws.
    pub exact_t_cap: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            p: 2.0,
            enumeration_cap: 20,
            exact_t_cap: 512,
        }
    }
}

struct Evaluator<'a> {
    nb: &'a Neighborhood,
    draws: &'a ParameterDraws,
    mu_cloud: EmpiricalCloud,
    cfg: WassersteinConfig,
    k_free: usize,
    intercept: bool,
}

impl<'a> Evaluator<'a> {
    fn new(
        nb: &'a Neighborhood,
        draws: &'a ParameterDraws,
        mu: &PredictionEnsemble,
        opts: &SearchOptions,
    ) -> Result<Self> {
        nb.validate()?;
        if nb.dim() != draws.k() || mu.n() != nb.len() || mu.t() != draws.t() {
            return Err(Error::shape(
                "subset search",
                (nb.len(), nb.dim()),
                (mu.n(), mu.t()),
            ));
        }
        let solver = if nb.len() == 1 {
            SolverKind::Rank1d
        } else if draws.t() <= opts.exact_t_cap {
            SolverKind::Exact
        } else {
            SolverKind::Hilbert
        };
        Ok(Self {
            nb,
            draws,
            mu_cloud: mu.to_cloud(),
            cfg: WassersteinConfig::new(opts.p, solver)?,
            k_free: draws.k() - usize::from(draws.intercept_row),
            intercept: draws.intercept_row,
        })
    }

    /// Map free covariate indices (0-based over non-intercept rows) to rows.
    fn row_of(&self, free_idx: usize) -> usize {
        free_idx + usize::from(self.intercept)
    }

    fn coefficients(&self, active_free: &[usize], rule: CoefficientRule) -> CoefficientMatrix {
        let k = self.draws.k();
        match rule {
            CoefficientRule::Fixed => {
                let mut mask = vec![false; k];
                for &j in active_free {
                    mask[self.row_of(j)] = true;
                }
                let masked = self.draws.masked(&mask);
                CoefficientMatrix::new(masked.theta, None)
            }
            CoefficientRule::Adaptive => {
                let mut cols: Vec<usize> = Vec::with_capacity(active_free.len() + 1);
                if self.intercept {
                    cols.push(0);
                }
                cols.extend(active_free.iter().map(|&j| self.row_of(j)));
                let n = self.nb.len();
                let mut x_active = Array2::<f64>::zeros((n, cols.len()));
                for (c, &j) in cols.iter().enumerate() {
                    for i in 0..n {
                        x_active[[i, c]] = self.nb.points[[i, j]];
                    }
                }
                let mu_dense = self.mu_cloud.atoms().t().to_owned();
                let beta_active = linalg::weighted_least_squares(
                    &x_active.view(),
                    &mu_dense.view(),
                    Some(&self.nb.weights.view()),
                );
                let mut beta = Array2::<f64>::zeros((k, self.draws.t()));
                for (c, &j) in cols.iter().enumerate() {
                    beta.row_mut(j).assign(&beta_active.row(c));
                }
                CoefficientMatrix::new(beta, None)
            }
        }
    }

    fn evaluate(&self, active_free: &[usize], rule: CoefficientRule) -> (CoefficientMatrix, f64) {
        let coefs = self.coefficients(active_free, rule);
        let nu = predict_linear(
            &self.nb.points.view(),
            &ParameterDraws {
                theta: coefs.beta.clone(),
                intercept_row: self.intercept,
            },
        )
        .expect("shapes validated at construction");
        let dist = ot::wasserstein_distance(&self.mu_cloud, &nu.to_cloud(), &self.cfg)
            .expect("finite ensembles validated at construction");
        (coefs, dist)
    }
}

/// Lexicographically ordered subsets of `{0..k-1}` of size `j`.
fn for_each_subset(k: usize, j: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..j).collect();
    if j == 0 || j > k {
        return;
    }
    loop {
        f(&idx);
        // Advance to the next combination.
        let mut pos = j;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            if idx[pos] != pos + k - j {
                break;
            }
            if pos == 0 {
                return;
            }
        }
        idx[pos] += 1;
        for l in (pos + 1)..j {
            idx[l] = idx[l - 1] + 1;
        }
    }
}

/// Exhaustive search: for every size `1..k−1`, the subset minimizing the
/// realized distance over all candidates; ties go to the lexicographically
/// smallest subset. Refuses covariate counts beyond the enumeration cap.
pub fn best_subsets(
    nb: &Neighborhood,
    draws: &ParameterDraws,
    mu: &PredictionEnsemble,
    rule: CoefficientRule,
    opts: &SearchOptions,
) -> Result<SizePath> {
    let ev = Evaluator::new(nb, draws, mu, opts)?;
    let k = ev.k_free;
    if k > opts.enumeration_cap {
        return Err(Error::EnumerationCap {
            k,
            cap: opts.enumeration_cap,
        });
    }
    if k < 2 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "subset search needs at least two selectable covariates".into(),
        });
    }
    let mut entries = Vec::with_capacity(k - 1);
    for size in 1..k {
        let mut candidates: Vec<Vec<usize>> = Vec::new();
        for_each_subset(k, size, |s| candidates.push(s.to_vec()));
        // Distances are embarrassingly parallel; the argmin scan stays
        // sequential in lexicographic order so ties break deterministically.
        let dists: Vec<f64> = candidates
            .par_iter()
            .map(|s| ev.evaluate(s, rule).1)
            .collect();
        let mut best = 0usize;
        for (i, &d) in dists.iter().enumerate() {
            if d < dists[best] {
                best = i;
            }
        }
        let (coefficients, distance) = ev.evaluate(&candidates[best], rule);
        entries.push(SizeEntry {
            size,
            active: candidates[best].clone(),
            coefficients,
            distance,
        });
    }
    Ok(SizePath {
        entries,
        provenance: SearchMethod::BestSubsets,
        rule,
        solver: ev.cfg.solver,
    })
}

/// Backward elimination: from the full active set, repeatedly drop the
/// covariate whose removal yields the smallest realized distance (ties to
/// the lowest index), recording the nested path for sizes `k−1..1`.
pub fn backward_stepwise(
    nb: &Neighborhood,
    draws: &ParameterDraws,
    mu: &PredictionEnsemble,
    rule: CoefficientRule,
    opts: &SearchOptions,
) -> Result<SizePath> {
    let ev = Evaluator::new(nb, draws, mu, opts)?;
    let k = ev.k_free;
    if k < 2 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "stepwise elimination needs at least two covariates".into(),
        });
    }
    let mut active: Vec<usize> = (0..k).collect();
    let mut entries: Vec<SizeEntry> = Vec::with_capacity(k - 1);
    while active.len() > 1 {
        let trials: Vec<(usize, f64)> = active
            .par_iter()
            .map(|&drop| {
                let reduced: Vec<usize> = active.iter().copied().filter(|&j| j != drop).collect();
                (drop, ev.evaluate(&reduced, rule).1)
            })
            .collect();
        let (drop, _) = trials
            .iter()
            .copied()
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("active set is non-empty");
        active.retain(|&j| j != drop);
        let (coefficients, distance) = ev.evaluate(&active, rule);
        entries.push(SizeEntry {
            size: active.len(),
            active: active.clone(),
            coefficients,
            distance,
        });
    }
    entries.reverse();
    Ok(SizePath {
        entries,
        provenance: SearchMethod::Stepwise,
        rule,
        solver: ev.cfg.solver,
    })
}

/// Metropolis search at a fixed model size with the symmetric swap-one
/// proposal (exchange one active with one inactive index, uniformly), so the
/// Hastings correction is 1. Returns the best state seen across all chains.
#[allow(clippy::too_many_arguments)]
pub fn simulated_annealing(
    nb: &Neighborhood,
    draws: &ParameterDraws,
    mu: &PredictionEnsemble,
    rule: CoefficientRule,
    schedule: &AnnealingSchedule,
    target_size: usize,
    seed: u64,
    restarts: usize,
    opts: &SearchOptions,
) -> Result<SizeEntry> {
    schedule.validate()?;
    let ev = Evaluator::new(nb, draws, mu, opts)?;
    let k = ev.k_free;
    if target_size == 0 || target_size >= k {
        return Err(Error::InvalidParameter {
            name: "target_size",
            reason: format!("must lie in 1..{k}, got {target_size}"),
        });
    }
    let restarts = restarts.max(1);

    let chains: Vec<(f64, Vec<usize>, usize)> = (0..restarts)
        .into_par_iter()
        .map(|chain| {
            let mut rng = seeding::rng(seeding::derive(seed, "annealing-restart", chain as u64));
            // Uniform random initial active set via partial Fisher–Yates.
            let mut pool: Vec<usize> = (0..k).collect();
            for i in 0..target_size {
                let j = i + (rng.random::<u64>() as usize) % (k - i);
                pool.swap(i, j);
            }
            let mut active: Vec<usize> = pool[..target_size].to_vec();
            let mut inactive: Vec<usize> = pool[target_size..].to_vec();
            let mut w = ev.evaluate(&active, rule).1;
            let mut best_w = w;
            let mut best_active = active.clone();
            for &temp in &schedule.temperatures {
                for _ in 0..schedule.iters_per_temp {
                    let ai = (rng.random::<u64>() as usize) % active.len();
                    let ci = (rng.random::<u64>() as usize) % inactive.len();
                    std::mem::swap(&mut active[ai], &mut inactive[ci]);
                    let w_new = ev.evaluate(&active, rule).1;
                    let accept = if w_new <= w {
                        true
                    } else {
                        rng.random::<f64>() < ((w - w_new) / temp).exp()
                    };
                    if accept {
                        w = w_new;
                        if w < best_w {
                            best_w = w;
                            best_active = active.clone();
                        }
                    } else {
                        std::mem::swap(&mut active[ai], &mut inactive[ci]);
                    }
                }
            }
            (best_w, best_active, chain)
        })
        .collect();

    let (_, best_active, _) = chains
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)))
        .expect("at least one restart");
    let mut active = best_active;
    active.sort_unstable();
    let (coefficients, distance) = ev.evaluate(&active, rule);
    Ok(SizeEntry {
        size: target_size,
        active,
        coefficients,
        distance,
    })
}
