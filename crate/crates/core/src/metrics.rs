//! Performance diagnostics: Wasserstein R², average per-observation
//! distances, simulation-only relative mean-squared errors, and a
//! leave-one-covariate-out importance ranking.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::Serialize;

use crate::ensemble::{predict_linear, ParameterDraws, PredictionEnsemble};
use crate::error::{Error, Result};
use crate::ot::{self, SolverKind, WassersteinConfig};

/// Null model against which surrogates are scored.
///
/// `InterceptOnly` depends on context: with a model attached it keeps only
/// the model's intercept row (a model without one predicts zero); without a
/// model it is the best constant-per-draw fit to the target ensemble, i.e.
/// the weighted per-draw mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullModelSpec {
    InterceptOnly,
    AllZero,
    MeanOverDraws,
}

/// Build the null prediction ensemble matching `mu`'s shape.
pub fn null_ensemble(
    spec: NullModelSpec,
    mu: &PredictionEnsemble,
    weights: Option<&ArrayView1<'_, f64>>,
    model: Option<(&ParameterDraws, &ArrayView2<'_, f64>)>,
) -> Result<PredictionEnsemble> {
    let (n, t) = (mu.n(), mu.t());
    let values = match spec {
        NullModelSpec::AllZero => Array2::zeros((n, t)),
        NullModelSpec::MeanOverDraws => {
            let mut v = Array2::zeros((n, t));
            for i in 0..n {
                let row_mean = mu.values.row(i).sum() / t as f64;
                v.row_mut(i).fill(row_mean);
            }
            v
        }
        NullModelSpec::InterceptOnly => match model {
            Some((draws, points)) => {
                let mask = vec![false; draws.k()];
                let masked = draws.masked(&mask);
                return predict_linear(points, &masked);
            }
            None => {
                // Intercept-only surrogate: weighted per-draw mean of mu.
                let mut v = Array2::zeros((n, t));
                let sw: f64 = match weights {
                    Some(w) => w.sum(),
                    None => n as f64,
                };
                for tcol in 0..t {
                    let mut mean = 0.0;
                    for i in 0..n {
                        let wi = weights.map_or(1.0, |w| w[i]);
                        mean += wi * mu.values[[i, tcol]];
                    }
                    mean /= sw;
                    for i in 0..n {
                        v[[i, tcol]] = mean;
                    }
                }
                v
            }
        },
    };
    PredictionEnsemble::new(values, mu.scale_tag.clone())
}

/// A Wasserstein R² value together with the edge-case flags of its ratio.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WassersteinR2 {
    /// `1 − W_p(m,q)^p / W_p(m,null)^p`; `-inf` when the ratio is infinite.
    pub value: f64,
    /// Both powers were exactly zero; the ratio is defined as 0, so R² = 1.
    pub zero_over_zero: bool,
    /// Positive numerator over a zero denominator; R² reported as `-inf`.
    pub infinite_ratio: bool,
}

/// Apply the ratio conventions to already-computed p-th power distances.
pub fn r2_from_power_distances(num: f64, den: f64) -> WassersteinR2 {
    if den == 0.0 {
        if num == 0.0 {
            WassersteinR2 {
                value: 1.0,
                zero_over_zero: true,
                infinite_ratio: false,
            }
        } else {
            WassersteinR2 {
                value: f64::NEG_INFINITY,
                zero_over_zero: false,
                infinite_ratio: true,
            }
        }
    } else {
        WassersteinR2 {
            value: 1.0 - num / den,
            zero_over_zero: false,
            infinite_ratio: false,
        }
    }
}

/// Wasserstein R²: one minus the ratio of p-th power distances from the
/// original predictions to the surrogate and to the null model.
pub fn wasserstein_r2(
    m_pred: &PredictionEnsemble,
    q_pred: &PredictionEnsemble,
    null_pred: &PredictionEnsemble,
    cfg: &WassersteinConfig,
) -> Result<WassersteinR2> {
    let m_cloud = m_pred.to_cloud();
    let num = ot::plan(&m_cloud, &q_pred.to_cloud(), cfg)?.objective;
    let den = ot::plan(&m_cloud, &null_pred.to_cloud(), cfg)?.objective;
    Ok(r2_from_power_distances(num, den))
}

/// Average p-Wasserstein distance: the mean over observations of the
/// distance between the two per-observation scalar clouds. Each term is a
/// one-dimensional problem, so the rank solver is exact.
pub fn average_wasserstein(
    m_pred: &PredictionEnsemble,
    q_pred: &PredictionEnsemble,
    cfg: &WassersteinConfig,
) -> Result<f64> {
    let dists = per_observation_distances(m_pred, q_pred, cfg)?;
    Ok(dists.iter().sum::<f64>() / dists.len() as f64)
}

/// Distance between the two scalar prediction clouds of every observation.
pub fn per_observation_distances(
    m_pred: &PredictionEnsemble,
    q_pred: &PredictionEnsemble,
    cfg: &WassersteinConfig,
) -> Result<Vec<f64>> {
    if m_pred.n() != q_pred.n() || m_pred.t() != q_pred.t() {
        return Err(Error::shape(
            "per-observation distances",
            (m_pred.n(), m_pred.t()),
            (q_pred.n(), q_pred.t()),
        ));
    }
    let rank_cfg = WassersteinConfig::new(cfg.p, SolverKind::Rank1d)?;
    (0..m_pred.n())
        .map(|i| ot::wasserstein_distance(&m_pred.row_cloud(i), &q_pred.row_cloud(i), &rank_cfg))
        .collect()
}

/// A relative mean-squared error together with a degenerate-denominator flag.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RelativeMse {
    /// `E(target − truth)² / E(reference − truth)²`; `inf` when flagged.
    pub value: f64,
    pub degenerate_denominator: bool,
}

/// Relative mean-squared error against a known truth, with expectations
/// taken as empirical means over all entries (rows = entities, columns =
/// draws). Covers both the prediction version (entities = observations) and
/// the coefficient version (entities = coefficients).
pub fn relative_mse(
    target: &ArrayView2<'_, f64>,
    reference: &ArrayView2<'_, f64>,
    truth: &ArrayView1<'_, f64>,
) -> Result<RelativeMse> {
    if target.nrows() != truth.len() || reference.nrows() != truth.len() {
        return Err(Error::shape(
            "relative mse",
            (target.nrows(), target.ncols()),
            (reference.nrows(), reference.ncols()),
        ));
    }
    let mse = |m: &ArrayView2<'_, f64>| -> f64 {
        let mut s = 0.0;
        for (i, row) in m.rows().into_iter().enumerate() {
            for v in row.iter() {
                let d = v - truth[i];
                s += d * d;
            }
        }
        s / (m.nrows() * m.ncols()) as f64
    };
    let num = mse(target);
    let den = mse(reference);
    if den == 0.0 {
        Ok(RelativeMse {
            value: if num == 0.0 { 0.0 } else { f64::INFINITY },
            degenerate_denominator: true,
        })
    } else {
        Ok(RelativeMse {
            value: num / den,
            degenerate_denominator: false,
        })
    }
}

/// Leave-one-covariate-out importance: the distance between the reference
/// ensemble and predictions with one coefficient row masked, ranked
/// descending (ties broken by covariate index). The intercept row is never
/// masked.
pub fn loo_importance(
    points: &ArrayView2<'_, f64>,
    draws: &ParameterDraws,
    mu: &PredictionEnsemble,
    cfg: &WassersteinConfig,
) -> Result<Vec<(usize, f64)>> {
    let k = draws.k();
    let mu_cloud = mu.to_cloud();
    let start = usize::from(draws.intercept_row);
    let mut scores = Vec::with_capacity(k - start);
    for j in start..k {
        let mut mask = vec![true; k];
        mask[j] = false;
        let nu = predict_linear(points, &draws.masked(&mask))?;
        let d = ot::wasserstein_distance(&mu_cloud, &nu.to_cloud(), cfg)?;
        scores.push((j, d));
    }
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scores)
}

/// Summary of how a surrogate tracks the original predictions.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub per_observation: Vec<f64>,
    pub average: f64,
    pub r2: f64,
    pub r2_zero_over_zero: bool,
    pub r2_infinite_ratio: bool,
    pub best_index: usize,
    pub median_index: usize,
    pub worst_index: usize,
    pub p: f64,
}

/// Assemble the full diagnostics for a surrogate against a null model.
pub fn diagnostics_report(
    m_pred: &PredictionEnsemble,
    q_pred: &PredictionEnsemble,
    null_pred: &PredictionEnsemble,
    cfg: &WassersteinConfig,
) -> Result<DiagnosticsReport> {
    let per_observation = per_observation_distances(m_pred, q_pred, cfg)?;
    let average = per_observation.iter().sum::<f64>() / per_observation.len() as f64;
    let r2 = wasserstein_r2(m_pred, q_pred, null_pred, cfg)?;
    let mut order: Vec<usize> = (0..per_observation.len()).collect();
    order.sort_by(|&a, &b| {
        per_observation[a]
            .total_cmp(&per_observation[b])
            .then(a.cmp(&b))
    });
    Ok(DiagnosticsReport {
        best_index: order[0],
        median_index: order[(order.len() - 1) / 2],
        worst_index: order[order.len() - 1],
        per_observation,
        average,
        r2: r2.value,
        r2_zero_over_zero: r2.zero_over_zero,
        r2_infinite_ratio: r2.infinite_ratio,
        p: cfg.p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ens(values: Array2<f64>) -> PredictionEnsemble {
        PredictionEnsemble::new(values, "test").unwrap()
    }

    #[test]
    fn r2_edge_conventions() {
        let cfg = WassersteinConfig::default();
        let m = ens(array![[0.0, 1.0], [1.0, 2.0]]);
        let q = m.clone();
        let null = ens(array![[5.0, 5.0], [5.0, 5.0]]);

        // q == m, null != m → R² = 1 with no flags.
        let r = wasserstein_r2(&m, &q, &null, &cfg).unwrap();
        assert_eq!(r.value, 1.0);
        assert!(!r.zero_over_zero && !r.infinite_ratio);

        // q == null != m → ratio 1 → R² = 0.
        let r = wasserstein_r2(&m, &null, &null, &cfg).unwrap();
        assert!(r.value.abs() < 1e-12);

        // q == m and null == m → 0/0 defined as 0 → R² = 1, flagged.
        let r = wasserstein_r2(&m, &q, &m, &cfg).unwrap();
        assert_eq!(r.value, 1.0);
        assert!(r.zero_over_zero);

        // q != m and null == m → ratio d/0 → R² = -inf sentinel, flagged.
        let r = wasserstein_r2(&m, &null, &m, &cfg).unwrap();
        assert_eq!(r.value, f64::NEG_INFINITY);
        assert!(r.infinite_ratio);
    }

    #[test]
    fn average_distance_hand_case() {
        // Observation clouds {0,1} vs {1,2} (distance 1 at p=1) and {5,5} vs
        // {5,5} (distance 0): average 0.5.
        let cfg = WassersteinConfig::new(1.0, SolverKind::Rank1d).unwrap();
        let m = ens(array![[0.0, 1.0], [5.0, 5.0]]);
        let q = ens(array![[1.0, 2.0], [5.0, 5.0]]);
        let avg = average_wasserstein(&m, &q, &cfg).unwrap();
        assert!((avg - 0.5).abs() < 1e-15);
    }

    #[test]
    fn average_equals_mean_of_per_observation() {
        let cfg = WassersteinConfig::default();
        let m = ens(array![[0.0, 1.0, 2.0], [3.0, -1.0, 0.5], [2.0, 2.0, 2.0]]);
        let q = ens(array![[1.0, 0.0, 2.0], [3.0, 0.0, 0.0], [1.0, 2.0, 3.0]]);
        let per = per_observation_distances(&m, &q, &cfg).unwrap();
        let avg = average_wasserstein(&m, &q, &cfg).unwrap();
        let mean = per.iter().sum::<f64>() / per.len() as f64;
        assert!((avg - mean).abs() < 1e-12);
    }

    #[test]
    fn single_observation_average_is_its_distance() {
        let cfg = WassersteinConfig::default();
        let m = ens(array![[0.0, 2.0]]);
        let q = ens(array![[1.0, 3.0]]);
        let avg = average_wasserstein(&m, &q, &cfg).unwrap();
        let d = ot::wasserstein_distance(
            &m.row_cloud(0),
            &q.row_cloud(0),
            &WassersteinConfig::new(2.0, SolverKind::Rank1d).unwrap(),
        )
        .unwrap();
        assert!((avg - d).abs() < 1e-15);
    }

    #[test]
    fn average_is_permutation_invariant_and_triangular() {
        use rand::Rng;
        let cfg = WassersteinConfig::default();
        let mut rng = crate::seeding::rng(77);
        let m = ens(Array2::from_shape_fn((5, 4), |_| rng.random::<f64>()));
        let q = ens(Array2::from_shape_fn((5, 4), |_| rng.random::<f64>()));
        let r = ens(Array2::from_shape_fn((5, 4), |_| rng.random::<f64>()));
        let base = average_wasserstein(&m, &q, &cfg).unwrap();

        let perm = [3usize, 0, 4, 1, 2];
        let permute = |e: &PredictionEnsemble| {
            let mut v = Array2::<f64>::zeros((5, 4));
            for (new_i, &old_i) in perm.iter().enumerate() {
                v.row_mut(new_i).assign(&e.values.row(old_i));
            }
            ens(v)
        };
        let permuted = average_wasserstein(&permute(&m), &permute(&q), &cfg).unwrap();
        assert!((base - permuted).abs() < 1e-12);

        let via_r =
            average_wasserstein(&m, &r, &cfg).unwrap() + average_wasserstein(&r, &q, &cfg).unwrap();
        assert!(base <= via_r + 1e-10, "triangle: {base} vs {via_r}");
    }

    #[test]
    fn relative_mse_cases() {
        let truth = array![1.0, 2.0];
        let original = array![[1.5, 0.5], [2.5, 1.5]];
        // Surrogate equals original → ratio 1.
        let r = relative_mse(&original.view(), &original.view(), &truth.view()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-15);
        // Surrogate equals truth → numerator 0 → ratio 0.
        let exact = array![[1.0, 1.0], [2.0, 2.0]];
        let r = relative_mse(&exact.view(), &original.view(), &truth.view()).unwrap();
        assert_eq!(r.value, 0.0);
        // Degenerate denominator flagged.
        let r = relative_mse(&original.view(), &exact.view(), &truth.view()).unwrap();
        assert!(r.degenerate_denominator);
        assert_eq!(r.value, f64::INFINITY);
    }

    #[test]
    fn loo_importance_ranks_by_contribution() {
        let draws = ParameterDraws::new(array![[0.0, 0.0], [2.0, 2.1], [0.5, 0.4]], false).unwrap();
        let points = array![[1.0, 1.0, 1.0], [0.5, 1.0, -1.0]];
        let mu = predict_linear(&points.view(), &draws).unwrap();
        let cfg = WassersteinConfig::default();
        let ranking = loo_importance(&points.view(), &draws, &mu, &cfg).unwrap();
        assert_eq!(ranking[0].0, 1);
        assert_eq!(ranking.last().unwrap().0, 0);
        assert!(
            ranking.last().unwrap().1.abs() < 1e-12,
            "zero row → importance 0"
        );
    }

    #[test]
    fn loo_importance_single_covariate() {
        let draws = ParameterDraws::new(array![[1.0, 2.0]], false).unwrap();
        let points = array![[1.0], [2.0]];
        let mu = predict_linear(&points.view(), &draws).unwrap();
        let cfg = WassersteinConfig::default();
        let ranking = loo_importance(&points.view(), &draws, &mu, &cfg).unwrap();
        assert_eq!(ranking.len(), 1);
        assert_eq!(ranking[0].0, 0);
    }

    #[test]
    fn null_ensembles() {
        let mu = ens(array![[1.0, 3.0], [2.0, 4.0]]);
        let zero = null_ensemble(NullModelSpec::AllZero, &mu, None, None).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));

        let mean_draws = null_ensemble(NullModelSpec::MeanOverDraws, &mu, None, None).unwrap();
        assert_eq!(mean_draws.values, array![[2.0, 2.0], [3.0, 3.0]]);

        // Without model context: per-draw mean across observations.
        let icp = null_ensemble(NullModelSpec::InterceptOnly, &mu, None, None).unwrap();
        assert_eq!(icp.values, array![[1.5, 3.5], [1.5, 3.5]]);

        // With a model that has no intercept row: the zero ensemble.
        let draws = ParameterDraws::new(array![[1.0, 1.0], [0.5, 0.2]], false).unwrap();
        let points = array![[1.0, 2.0], [3.0, 4.0]];
        let icp_model = null_ensemble(
            NullModelSpec::InterceptOnly,
            &mu,
            None,
            Some((&draws, &points.view())),
        )
        .unwrap();
        assert!(icp_model.values.iter().all(|&v| v == 0.0));

        // With an intercept row: that row's predictions survive.
        let draws_i = ParameterDraws::new(array![[1.0, -1.0], [0.5, 0.2]], true).unwrap();
        let ones = array![[1.0, 9.0], [1.0, -3.0]];
        let icp_model = null_ensemble(
            NullModelSpec::InterceptOnly,
            &mu,
            None,
            Some((&draws_i, &ones.view())),
        )
        .unwrap();
        assert_eq!(icp_model.values, array![[1.0, -1.0], [1.0, -1.0]]);
    }

    #[test]
    fn report_indices_are_ordered() {
        let cfg = WassersteinConfig::default();
        let m = ens(array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        let q = ens(array![[0.5, 0.5], [1.0, 1.0], [4.0, 4.0]]);
        let null = null_ensemble(NullModelSpec::AllZero, &m, None, None).unwrap();
        let report = diagnostics_report(&m, &q, &null, &cfg).unwrap();
        assert_eq!(report.best_index, 1);
        assert_eq!(report.median_index, 0);
        assert_eq!(report.worst_index, 2);
        let mean = report.per_observation.iter().sum::<f64>() / 3.0;
        assert!((report.average - mean).abs() < 1e-12);
    }
}
