//! Simulation harnesses: generate predictors, outcomes, posterior draws, a
//! test point and its neighborhood, run the configured summary methods, and
//! aggregate per-size diagnostics over replicates.

use anyhow::{bail, Result};
use ndarray::{Array1, Array2, ArrayView1};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use slim_core::ensemble::{
    conjugate_gaussian_posterior, empirical_covariance, gaussian_neighborhood, predict_linear,
    simulate_predictors, uniform_in, CovarianceForm, Neighborhood, ParameterDraws,
    PredictionEnsemble,
};
use slim_core::metrics::{self, NullModelSpec};
use slim_core::ot::{self, WassersteinConfig};
use slim_core::search::{best_subsets, CoefficientRule, SearchOptions};
use slim_core::seeding;
use slim_core::slim_a::{fit_slim_a, PenaltyConfig, PenaltyFamily};
use slim_core::slim_p::{quadratic_slim_p, MaskSchedule, SlimPOptions};

use crate::bundle::{Provenance, ResultBundle};

/// The coefficient-generating draws of the Gaussian scenario are fixed once
/// for every run, independent of the user seed.
const XI_SEED: u64 = 0x51ab_c0ef_f1c1_e475;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Toy,
    Gaussian,
}

/// Configuration of the `simulate` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: Scenario,
    pub rho: f64,
    pub seed: u64,
    pub replicates: usize,
    /// Training sample size.
    pub n: usize,
    /// Posterior draws.
    pub t_draws: usize,
    /// Neighborhood size for the model-agnostic fit (defaults per scenario).
    pub neighborhood: Option<usize>,
    /// Which methods run: any of "best-subsets", "exact", "relaxed", "slim-a".
    pub methods: Vec<String>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Toy,
            rho: 0.5,
            seed: 7,
            replicates: 1,
            n: 1024,
            t_draws: 100,
            neighborhood: None,
            methods: vec![
                "best-subsets".into(),
                "exact".into(),
                "relaxed".into(),
                "slim-a".into(),
            ],
        }
    }
}

/// One method's diagnostics at one model size for one replicate.
#[derive(Debug, Clone, Serialize)]
pub struct SimEntry {
    pub record: &'static str,
    pub replicate: usize,
    pub method: &'static str,
    pub size: usize,
    pub w2: f64,
    pub w2_r2: f64,
    pub rel_mse_pred: f64,
    pub rel_mse_coef: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionRecord {
    pub record: &'static str,
    pub replicate: usize,
    pub method: &'static str,
    /// Active covariate indices (1-based) per model size, ascending size.
    pub sets_by_size: Vec<Vec<usize>>,
}

/// Per-size aggregate across replicates.
#[derive(Debug, Clone, Serialize)]
pub struct SimAggregate {
    pub record: &'static str,
    pub scenario: Scenario,
    pub method: &'static str,
    pub size: usize,
    pub mean_w2: f64,
    pub mean_w2_r2: f64,
    pub mean_rel_mse_pred: f64,
    pub mean_rel_mse_coef: Option<f64>,
    pub replicates: usize,
}

pub struct SimulateOutput {
    pub bundle: ResultBundle,
    pub aggregates: Vec<SimAggregate>,
}

/// Square indices and the interaction pair of the quadratic feature map
/// (0-based covariate positions).
const PHI_SQUARES: [usize; 3] = [0, 2, 6];
const PHI_CROSS: (usize, usize) = (12, 14);

/// Feature map of the Gaussian scenario: the covariates themselves plus
/// three squares and one interaction.
pub fn phi_row(x: &ArrayView1<'_, f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + 4);
    out.extend(x.iter().copied());
    for &j in &PHI_SQUARES {
        out.push(x[j] * x[j]);
    }
    out.push(x[PHI_CROSS.0] * x[PHI_CROSS.1]);
    out
}

pub fn phi_matrix(x: &Array2<f64>) -> Array2<f64> {
    let kp = x.ncols() + 4;
    let mut out = Array2::<f64>::zeros((x.nrows(), kp));
    for (i, row) in x.rows().into_iter().enumerate() {
        for (j, v) in phi_row(&row).into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    out
}

/// Population correlation matrix of the mapped features under `x ~ N(0, Ω)`,
/// from the Gaussian moment identities: `cov(x_a², x_b²) = 2Ω_ab²`,
/// `cov(x_a², x_b x_c) = 2Ω_ab Ω_ac`, `var(x_b x_c) = 1 + Ω_bc²`, and all
/// odd moments vanish.
pub fn phi_correlation(omega: &Array2<f64>) -> Array2<f64> {
    let k = omega.nrows();
    let kp = k + 4;
    let (cb, cc) = PHI_CROSS;
    let cross_var = 1.0 + omega[[cb, cc]] * omega[[cb, cc]];
    let mut corr = Array2::<f64>::eye(kp);
    // Linear block.
    for a in 0..k {
        for b in 0..k {
            corr[[a, b]] = omega[[a, b]];
        }
    }
    // Squares.
    for (i, &sa) in PHI_SQUARES.iter().enumerate() {
        let row = k + i;
        for (j, &sb) in PHI_SQUARES.iter().enumerate() {
            if i != j {
                let c = omega[[sa, sb]];
                corr[[row, k + j]] = c * c;
            }
        }
        // Square against the interaction.
        let cov = 2.0 * omega[[sa, cb]] * omega[[sa, cc]];
        let denom = (2.0f64).sqrt() * cross_var.sqrt();
        corr[[row, k + 3]] = cov / denom;
        corr[[k + 3, row]] = cov / denom;
    }
    corr
}

/// Draw the scenario's ξ vector from its documented uniform ranges under the
/// fixed master seed: ξ₀ and the first five entries on (1,2), the next five
/// on (−2,−1), then (0,0.5), (−0.5,0), and (0,0.5) for the mapped features.
pub fn xi_draws() -> (f64, Array1<f64>) {
    let mut rng = seeding::rng(XI_SEED);
    let xi0 = uniform_in(&mut rng, 1.0, 2.0);
    let mut xi = Array1::<f64>::zeros(24);
    for j in 0..5 {
        xi[j] = uniform_in(&mut rng, 1.0, 2.0);
    }
    for j in 5..10 {
        xi[j] = uniform_in(&mut rng, -2.0, -1.0);
    }
    for j in 10..15 {
        xi[j] = uniform_in(&mut rng, 0.0, 0.5);
    }
    for j in 15..20 {
        xi[j] = uniform_in(&mut rng, -0.5, 0.0);
    }
    for j in 20..24 {
        xi[j] = uniform_in(&mut rng, 0.0, 0.5);
    }
    (xi0, xi)
}

/// Scale ξ so the linear predictor has unit variance: `w = (ξᵀ Ω_φ ξ)^{-1/2}`.
pub fn gaussian_scenario_theta(rho: f64) -> (f64, Array1<f64>) {
    let omega = slim_core::ensemble::block_correlation(20, rho);
    let omega_phi = phi_correlation(&omega);
    let (xi0, xi) = xi_draws();
    let mut quad = 0.0;
    for a in 0..24 {
        for b in 0..24 {
            quad += xi[a] * omega_phi[[a, b]] * xi[b];
        }
    }
    let w = 1.0 / quad.sqrt();
    (xi0, xi.mapv(|v| v * w))
}

struct MethodEntries {
    method: &'static str,
    /// `(size, w2, r2, rel_mse_pred, rel_mse_coef)` per fitted entry.
    rows: Vec<(usize, f64, f64, f64, Option<f64>)>,
    selection: Option<Vec<Vec<usize>>>,
}

fn wants(cfg: &SimulateConfig, name: &str) -> bool {
    cfg.methods.iter().any(|m| m == name)
}

fn rel_mse_pred(
    surrogate: &PredictionEnsemble,
    original: &PredictionEnsemble,
    truth: &Array1<f64>,
) -> f64 {
    metrics::relative_mse(
        &surrogate.values.view(),
        &original.values.view(),
        &truth.view(),
    )
    .expect("consistent shapes")
    .value
}

fn rel_mse_coef(beta: &Array2<f64>, reference: &Array2<f64>, truth: &Array1<f64>) -> f64 {
    metrics::relative_mse(&beta.view(), &reference.view(), &truth.view())
        .expect("consistent shapes")
        .value
}

/// Shared diagnostics: distance and R² of a surrogate ensemble against the
/// originals, with the model's intercept-only ensemble as the null.
fn score(
    mu: &PredictionEnsemble,
    nu: &PredictionEnsemble,
    null: &PredictionEnsemble,
) -> (f64, f64) {
    let cfg = WassersteinConfig::new(2.0, ot::auto_solver(mu.n(), mu.t())).expect("valid order");
    let mu_cloud = mu.to_cloud();
    let num = ot::plan(&mu_cloud, &nu.to_cloud(), &cfg)
        .expect("validated ensembles")
        .objective;
    let den = ot::plan(&mu_cloud, &null.to_cloud(), &cfg)
        .expect("validated ensembles")
        .objective;
    let r2 = metrics::r2_from_power_distances(num, den);
    (num.sqrt(), r2.value)
}

fn toy_replicate(cfg: &SimulateConfig, rep: usize) -> Result<Vec<MethodEntries>> {
    let k = 5;
    let theta_true = Array1::from_vec(vec![-0.1, -0.2, 1.3, 1.4, 1.5]);
    let x = simulate_predictors(
        cfg.n,
        k,
        cfg.rho,
        seeding::derive(cfg.seed, "toy-x", rep as u64),
    )?;
    let mut rng = seeding::rng(seeding::derive(cfg.seed, "toy-noise", rep as u64));
    let mut y = Array1::<f64>::zeros(cfg.n);
    for i in 0..cfg.n {
        let eps: f64 = StandardNormal.sample(&mut rng);
        y[i] = x.row(i).dot(&theta_true) + eps;
    }
    let (draws, _) = conjugate_gaussian_posterior(
        &x.view(),
        &y.view(),
        1.0,
        1.0,
        1.0,
        cfg.t_draws,
        seeding::derive(cfg.seed, "toy-posterior", rep as u64),
    )?;

    let x0 = Array1::from_vec(vec![100.0, 90.0, 0.01, 0.01, 0.01]);
    let nb_point = Neighborhood::single(x0.clone());
    let mu_point = predict_linear(&nb_point.points.view(), &draws)?;
    let null_point = metrics::null_ensemble(
        NullModelSpec::InterceptOnly,
        &mu_point,
        None,
        Some((&draws, &nb_point.points.view())),
    )?;
    let truth_point = Array1::from_vec(vec![x0.dot(&theta_true)]);

    let mut out = Vec::new();
    let coef_reference = draws.theta.clone();

    if wants(cfg, "best-subsets") {
        let path = best_subsets(
            &nb_point,
            &draws,
            &mu_point,
            CoefficientRule::Fixed,
            &SearchOptions::default(),
        )?;
        let mut rows = Vec::new();
        let mut sets = Vec::new();
        for entry in &path.entries {
            let nu = predict_linear(
                &nb_point.points.view(),
                &ParameterDraws {
                    theta: entry.coefficients.beta.clone(),
                    intercept_row: false,
                },
            )?;
            let (w2, r2) = score(&mu_point, &nu, &null_point);
            rows.push((
                entry.size,
                w2,
                r2,
                rel_mse_pred(&nu, &mu_point, &truth_point),
                Some(rel_mse_coef(
                    &entry.coefficients.beta,
                    &coef_reference,
                    &theta_true,
                )),
            ));
            sets.push(entry.active.iter().map(|j| j + 1).collect());
        }
        out.push(MethodEntries {
            method: "best-subsets",
            rows,
            selection: Some(sets),
        });
    }

    if wants(cfg, "exact") {
        let budgets: Vec<usize> = (0..=k).collect();
        let result = quadratic_slim_p(
            &nb_point,
            &draws,
            &mu_point,
            &MaskSchedule::Budgets(budgets),
            &SlimPOptions::default(),
        )?;
        let mut rows = Vec::new();
        let mut sets = Vec::new();
        for entry in &result.entries {
            let nu = entry.coefficients.predict(&nb_point.points.view())?;
            let (w2, r2) = score(&mu_point, &nu, &null_point);
            rows.push((
                entry.mask.count(),
                w2,
                r2,
                rel_mse_pred(&nu, &mu_point, &truth_point),
                Some(rel_mse_coef(
                    &entry.coefficients.beta,
                    &coef_reference,
                    &theta_true,
                )),
            ));
            sets.push(entry.mask.active_indices().iter().map(|j| j + 1).collect());
        }
        out.push(MethodEntries {
            method: "exact",
            rows,
            selection: Some(sets),
        });
    }

    if wants(cfg, "relaxed") {
        // Penalty levels spanning activation of all coordinates, from the
        // full-model moment magnitudes.
        let plan = ot::exact_plan(
            &mu_point.to_cloud(),
            &mu_point.to_cloud(),
            &WassersteinConfig::default(),
        )?;
        let stats = slim_core::slim_p::build_stats(&nb_point, &draws, &mu_point, &plan)?;
        let top = stats
            .s_zmu
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
            .max(1e-8)
            * 2.0;
        let grid: Vec<f64> = (0..20)
            .map(|i| top * (1e-4f64).powf(i as f64 / 19.0))
            .collect();
        let result = quadratic_slim_p(
            &nb_point,
            &draws,
            &mu_point,
            &MaskSchedule::LambdaGrid(grid),
            &SlimPOptions {
                relaxed_penalty: PenaltyFamily::GroupMcp,
                mcp_gamma: 1.5,
                ..Default::default()
            },
        )?;
        let mut rows = Vec::new();
        let mut sets = Vec::new();
        for entry in &result.entries {
            let nu = entry.coefficients.predict(&nb_point.points.view())?;
            let (w2, r2) = score(&mu_point, &nu, &null_point);
            rows.push((
                entry.mask.count(),
                w2,
                r2,
                rel_mse_pred(&nu, &mu_point, &truth_point),
                Some(rel_mse_coef(
                    &entry.coefficients.beta,
                    &coef_reference,
                    &theta_true,
                )),
            ));
            sets.push(entry.mask.active_indices().iter().map(|j| j + 1).collect());
        }
        out.push(MethodEntries {
            method: "relaxed",
            rows,
            selection: Some(sets),
        });
    }

    if wants(cfg, "slim-a") {
        let count = cfg.neighborhood.unwrap_or(100);
        let sigma = empirical_covariance(&x.view(), CovarianceForm::Centered);
        let nb = gaussian_neighborhood(
            &x0.view(),
            &sigma.view(),
            cfg.n,
            count,
            seeding::derive(cfg.seed, "toy-neighborhood", rep as u64),
        )?;
        let mu = predict_linear(&nb.points.view(), &draws)?;
        let truth: Array1<f64> = nb.points.dot(&theta_true);
        let mut pen = PenaltyConfig::group_mcp(2.0, 1.5);
        pen.mix = 0.99;
        let path = fit_slim_a(&mu, &nb, &pen)?;
        let null = metrics::null_ensemble(
            NullModelSpec::InterceptOnly,
            &mu,
            None,
            Some((&draws, &nb.points.view())),
        )?;
        let mut rows = Vec::new();
        for entry in &path.entries {
            let nu = entry.coefficients.predict(&nb.points.view())?;
            let (w2, r2) = score(&mu, &nu, &null);
            rows.push((
                entry.active_groups.len(),
                w2,
                r2,
                rel_mse_pred(&nu, &mu, &truth),
                Some(rel_mse_coef(
                    &entry.coefficients.beta,
                    &coef_reference,
                    &theta_true,
                )),
            ));
        }
        out.push(MethodEntries {
            method: "slim-a",
            rows,
            selection: None,
        });
    }

    Ok(out)
}

fn gaussian_replicate(cfg: &SimulateConfig, rep: usize) -> Result<Vec<MethodEntries>> {
    let k = 20;
    let (theta0, theta) = gaussian_scenario_theta(cfg.rho);
    let x = simulate_predictors(
        cfg.n,
        k,
        cfg.rho,
        seeding::derive(cfg.seed, "gauss-x", rep as u64),
    )?;
    let phi_x = phi_matrix(&x);
    let mut rng = seeding::rng(seeding::derive(cfg.seed, "gauss-noise", rep as u64));
    let mut y = Array1::<f64>::zeros(cfg.n);
    for i in 0..cfg.n {
        let eps: f64 = StandardNormal.sample(&mut rng);
        y[i] = theta0 + phi_x.row(i).dot(&theta) + eps;
    }
    // Posterior over the intercept and the mapped features.
    let mut design = Array2::<f64>::zeros((cfg.n, 25));
    for i in 0..cfg.n {
        design[[i, 0]] = 1.0;
        for j in 0..24 {
            design[[i, j + 1]] = phi_x[[i, j]];
        }
    }
    let (raw_draws, _) = conjugate_gaussian_posterior(
        &design.view(),
        &y.view(),
        1.0,
        1.0,
        1.0,
        cfg.t_draws,
        seeding::derive(cfg.seed, "gauss-posterior", rep as u64),
    )?;
    let draws = ParameterDraws::new(raw_draws.theta, true)?;

    let x0 = simulate_predictors(
        1,
        k,
        cfg.rho,
        seeding::derive(cfg.seed, "gauss-x0", rep as u64),
    )?;
    let x0 = x0.row(0).to_owned();
    let sigma = empirical_covariance(&x.view(), CovarianceForm::Centered);
    let count = cfg.neighborhood.unwrap_or(Neighborhood::default_size(k));
    let nb_raw = gaussian_neighborhood(
        &x0.view(),
        &sigma.view(),
        cfg.n,
        count,
        seeding::derive(cfg.seed, "gauss-neighborhood", rep as u64),
    )?;

    // The model's predictions over the neighborhood, on the mapped design.
    let mut mapped = Array2::<f64>::zeros((count, 25));
    for i in 0..count {
        mapped[[i, 0]] = 1.0;
        for (j, v) in phi_row(&nb_raw.points.row(i)).into_iter().enumerate() {
            mapped[[i, j + 1]] = v;
        }
    }
    let mu = predict_linear(&mapped.view(), &draws)?;
    let truth: Array1<f64> = Array1::from_iter(
        mapped
            .rows()
            .into_iter()
            .map(|row| theta0 + (0..24).map(|j| row[j + 1] * theta[j]).sum::<f64>()),
    );
    let null = metrics::null_ensemble(
        NullModelSpec::InterceptOnly,
        &mu,
        None,
        Some((&draws, &mapped.view())),
    )?;

    let mut truth_coef = Array1::<f64>::zeros(25);
    truth_coef[0] = theta0;
    for j in 0..24 {
        truth_coef[j + 1] = theta[j];
    }

    let mut out = Vec::new();

    if wants(cfg, "slim-a") {
        let pen = PenaltyConfig::group_lasso(2.0);
        let path = fit_slim_a(&mu, &nb_raw, &pen)?;
        let mut rows = Vec::new();
        for entry in &path.entries {
            let nu = entry.coefficients.predict(&nb_raw.points.view())?;
            let (w2, r2) = score(&mu, &nu, &null);
            rows.push((
                entry.active_groups.len(),
                w2,
                r2,
                rel_mse_pred(&nu, &mu, &truth),
                None,
            ));
        }
        out.push(MethodEntries {
            method: "slim-a",
            rows,
            selection: None,
        });
    }

    if wants(cfg, "relaxed") {
        let nb_mapped = Neighborhood::from_points(mapped.clone(), {
            let mut c = Array1::<f64>::zeros(25);
            c[0] = 1.0;
            for (j, v) in phi_row(&x0.view()).into_iter().enumerate() {
                c[j + 1] = v;
            }
            c
        })?;
        let plan = ot::exact_plan(
            &mu.to_cloud(),
            &mu.to_cloud(),
            &WassersteinConfig::default(),
        )?;
        let stats = slim_core::slim_p::build_stats(&nb_mapped, &draws, &mu, &plan)?;
        let top = stats
            .s_zmu
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
            .max(1e-8)
            * 2.0;
        let grid: Vec<f64> = (0..20)
            .map(|i| top * (1e-4f64).powf(i as f64 / 19.0))
            .collect();
        let result = quadratic_slim_p(
            &nb_mapped,
            &draws,
            &mu,
            &MaskSchedule::LambdaGrid(grid),
            &SlimPOptions {
                relaxed_penalty: PenaltyFamily::GroupMcp,
                mcp_gamma: 1.1,
                ..Default::default()
            },
        )?;
        let mut rows = Vec::new();
        for entry in &result.entries {
            let nu = entry.coefficients.predict(&nb_mapped.points.view())?;
            let (w2, r2) = score(&mu, &nu, &null);
            rows.push((
                entry.mask.count(),
                w2,
                r2,
                rel_mse_pred(&nu, &mu, &truth),
                Some(rel_mse_coef(
                    &entry.coefficients.beta,
                    &draws.theta,
                    &truth_coef,
                )),
            ));
        }
        out.push(MethodEntries {
            method: "relaxed",
            rows,
            selection: None,
        });
    }

    Ok(out)
}

/// Mean diagnostics per model size: within each replicate the best (lowest
/// distance) entry of each size wins, missing sizes carry the nearest
/// smaller size forward, and replicate curves average pointwise.
pub fn aggregate_by_size(
    scenario: Scenario,
    method: &'static str,
    per_replicate: &[Vec<(usize, f64, f64, f64, Option<f64>)>],
    max_size: usize,
) -> Vec<SimAggregate> {
    let mut curves: Vec<Vec<Option<(f64, f64, f64, Option<f64>)>>> = Vec::new();
    for rows in per_replicate {
        let mut by_size: Vec<Option<(f64, f64, f64, Option<f64>)>> = vec![None; max_size + 1];
        let mut largest = 0usize;
        for &(size, w2, r2, mse, coef) in rows {
            if size > max_size {
                continue;
            }
            largest = largest.max(size);
            let better = match by_size[size] {
                Some((w, _, _, _)) => w2 < w,
                None => true,
            };
            if better {
                by_size[size] = Some((w2, r2, mse, coef));
            }
        }
        // Fill interior gaps from the nearest smaller size; sizes beyond the
        // method's largest fitted size stay empty.
        for s in 1..=largest.min(max_size) {
            if by_size[s].is_none() {
                by_size[s] = by_size[s - 1];
            }
        }
        curves.push(by_size);
    }
    let mut out = Vec::new();
    for size in 0..=max_size {
        let rows: Vec<&(f64, f64, f64, Option<f64>)> =
            curves.iter().filter_map(|c| c[size].as_ref()).collect();
        if rows.is_empty() {
            continue;
        }
        let nrep = rows.len();
        let mean = |f: &dyn Fn(&(f64, f64, f64, Option<f64>)) -> f64| {
            rows.iter().map(|r| f(r)).sum::<f64>() / nrep as f64
        };
        let coef_values: Vec<f64> = rows.iter().filter_map(|r| r.3).collect();
        out.push(SimAggregate {
            record: "sim-aggregate",
            scenario,
            method,
            size,
            mean_w2: mean(&|r| r.0),
            mean_w2_r2: mean(&|r| r.1),
            mean_rel_mse_pred: mean(&|r| r.2),
            mean_rel_mse_coef: if coef_values.len() == nrep {
                Some(coef_values.iter().sum::<f64>() / nrep as f64)
            } else {
                None
            },
            replicates: nrep,
        });
    }
    out
}

/// Run the configured scenario and assemble the result bundle.
pub fn run_simulate(cfg: &SimulateConfig) -> Result<SimulateOutput> {
    if !(0.0..1.0).contains(&cfg.rho) {
        bail!("rho must lie in [0, 1), got {}", cfg.rho);
    }
    if cfg.replicates == 0 {
        bail!("replicates must be positive");
    }
    let provenance = Provenance::new("simulate", Some(cfg.seed), cfg);
    let mut bundle = ResultBundle::new(provenance);

    let max_size = match cfg.scenario {
        Scenario::Toy => 5,
        Scenario::Gaussian => 25,
    };
    let mut per_method: Vec<(&'static str, Vec<Vec<(usize, f64, f64, f64, Option<f64>)>>)> =
        Vec::new();
    for rep in 0..cfg.replicates {
        let methods = match cfg.scenario {
            Scenario::Toy => toy_replicate(cfg, rep)?,
            Scenario::Gaussian => gaussian_replicate(cfg, rep)?,
        };
        for m in methods {
            for &(size, w2, r2, mse, coef) in &m.rows {
                bundle.push(&SimEntry {
                    record: "sim-entry",
                    replicate: rep,
                    method: m.method,
                    size,
                    w2,
                    w2_r2: r2,
                    rel_mse_pred: mse,
                    rel_mse_coef: coef,
                });
            }
            if let Some(sets) = &m.selection {
                bundle.push(&SelectionRecord {
                    record: "selection",
                    replicate: rep,
                    method: m.method,
                    sets_by_size: sets.clone(),
                });
            }
            match per_method.iter_mut().find(|(name, _)| *name == m.method) {
                Some((_, reps)) => reps.push(m.rows),
                None => per_method.push((m.method, vec![m.rows])),
            }
        }
    }

    let mut aggregates = Vec::new();
    for (method, reps) in &per_method {
        aggregates.extend(aggregate_by_size(cfg.scenario, method, reps, max_size));
    }
    for agg in &aggregates {
        bundle.push(agg);
    }
    Ok(SimulateOutput { bundle, aggregates })
}

/// Plot-ready aggregate table.
pub fn aggregates_to_csv(aggregates: &[SimAggregate]) -> String {
    let mut out = String::from(
        "scenario,method,size,mean_w2,mean_w2_r2,mean_rel_mse_pred,mean_rel_mse_coef,replicates\n",
    );
    for a in aggregates {
        let scenario = match a.scenario {
            Scenario::Toy => "toy",
            Scenario::Gaussian => "gaussian",
        };
        let coef = a
            .mean_rel_mse_coef
            .map(|v| format!("{v:.16e}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{scenario},{},{},{:.16e},{:.16e},{:.16e},{coef},{}\n",
            a.method, a.size, a.mean_w2, a.mean_w2_r2, a.mean_rel_mse_pred, a.replicates
        ));
    }
    out
}
