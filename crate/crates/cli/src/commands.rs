//! Command implementations. Each command takes a fully-resolved config
//! struct (defaults, then config file, then explicit flags) and returns a
//! result bundle; writing happens at the edge.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use slim_core::ensemble::{
    empirical_covariance, gaussian_neighborhood, CovarianceForm, Neighborhood, ParameterDraws,
    PredictionEnsemble,
};
use slim_core::metrics::{self, NullModelSpec};
use slim_core::ot::{self, SolverKind, WassersteinConfig};
use slim_core::search::{
    backward_stepwise, best_subsets, simulated_annealing, AnnealingSchedule, CoefficientRule,
    SearchOptions,
};
use slim_core::slim_a::{fit_slim_a, PenaltyConfig, PenaltyFamily};
use slim_core::slim_p::{quadratic_slim_p, MaskSchedule, SlimPOptions};

use crate::bundle::{Provenance, ResultBundle};
use crate::io::{read_matrix, read_vector, RowKind};

fn load_ensemble(path: &PathBuf) -> Result<PredictionEnsemble> {
    let (m, kind) = read_matrix(path)?;
    if kind != RowKind::Observations {
        bail!(
            "{} must be an ensemble file (rows = observations), header says {:?}",
            path.display(),
            kind.label()
        );
    }
    Ok(PredictionEnsemble::new(m, "file")?)
}

fn load_draws(path: &PathBuf, intercept_row: bool) -> Result<ParameterDraws> {
    let (m, kind) = read_matrix(path)?;
    if kind != RowKind::Coefficients {
        bail!(
            "{} must be a parameter-draw file (rows = coefficients), header says {:?}",
            path.display(),
            kind.label()
        );
    }
    Ok(ParameterDraws::new(m, intercept_row)?)
}

fn load_points(path: &PathBuf) -> Result<Array2<f64>> {
    let (m, _) = read_matrix(path)?;
    Ok(m)
}

fn load_neighborhood(
    points_path: &PathBuf,
    weights_path: Option<&PathBuf>,
) -> Result<Neighborhood> {
    let points = load_points(points_path)?;
    let center = points.row(0).to_owned();
    let mut nb = Neighborhood::from_points(points, center)?;
    if let Some(wp) = weights_path {
        let (w, _) = read_vector(wp)?;
        if w.len() != nb.len() {
            bail!(
                "weights length {} does not match {} points",
                w.len(),
                nb.len()
            );
        }
        nb.weights = w;
        nb.validate()?;
    }
    Ok(nb)
}

pub fn parse_solver(s: &str) -> Result<SolverKind> {
    match s {
        "exact" => Ok(SolverKind::Exact),
        "hilbert" => Ok(SolverKind::Hilbert),
        "rank1d" => Ok(SolverKind::Rank1d),
        other => bail!("unknown solver {other:?}: expected exact, hilbert or rank1d"),
    }
}

pub fn parse_penalty(s: &str) -> Result<PenaltyFamily> {
    match s {
        "group-lasso" => Ok(PenaltyFamily::GroupLasso),
        "group-mcp" => Ok(PenaltyFamily::GroupMcp),
        other => bail!("unknown penalty {other:?}: expected group-lasso or group-mcp"),
    }
}

pub fn parse_null(s: &str) -> Result<NullModelSpec> {
    match s {
        "intercept" => Ok(NullModelSpec::InterceptOnly),
        "zero" => Ok(NullModelSpec::AllZero),
        "mean" => Ok(NullModelSpec::MeanOverDraws),
        other => bail!("unknown null model {other:?}: expected intercept, zero or mean"),
    }
}

// ---------------------------------------------------------------------------
// wasserstein

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WassersteinCmd {
    pub a: Option<PathBuf>,
    pub b: Option<PathBuf>,
    pub p: f64,
    pub solver: String,
}

impl Default for WassersteinCmd {
    fn default() -> Self {
        Self {
            a: None,
            b: None,
            p: 2.0,
            solver: "exact".into(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DistanceReport {
    pub record: &'static str,
    pub distance: f64,
    pub objective: f64,
    pub p: f64,
    pub solver: String,
    pub row_marginal_residual: f64,
    pub col_marginal_residual: f64,
    pub atoms: usize,
    pub dimension: usize,
}

pub fn cmd_wasserstein(cfg: &WassersteinCmd) -> Result<(DistanceReport, ResultBundle)> {
    let a_path = cfg.a.as_ref().ok_or_else(|| anyhow!("--a is required"))?;
    let b_path = cfg.b.as_ref().ok_or_else(|| anyhow!("--b is required"))?;
    let a = load_ensemble(a_path)?.to_cloud();
    let b = load_ensemble(b_path)?.to_cloud();
    let wcfg = WassersteinConfig::new(cfg.p, parse_solver(&cfg.solver)?)?;
    let plan = ot::plan(&a, &b, &wcfg)?;
    let (row_dev, col_dev) = plan.marginal_residuals();
    let report = DistanceReport {
        record: "distance",
        distance: plan.objective.powf(1.0 / cfg.p),
        objective: plan.objective,
        p: cfg.p,
        solver: cfg.solver.clone(),
        row_marginal_residual: row_dev,
        col_marginal_residual: col_dev,
        atoms: a.len(),
        dimension: a.dim(),
    };
    let mut bundle = ResultBundle::new(Provenance::new("wasserstein", None, cfg));
    bundle.push(&report);
    Ok((report, bundle))
}

// ---------------------------------------------------------------------------
// fit-a

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitACmd {
    pub ensemble: Option<PathBuf>,
    pub points: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub p: f64,
    pub penalty: String,
    pub mcp_gamma: f64,
    pub mix: f64,
    pub lambda_grid: Vec<f64>,
}

impl Default for FitACmd {
    fn default() -> Self {
        Self {
            ensemble: None,
            points: None,
            weights: None,
            p: 2.0,
            penalty: "group-lasso".into(),
            mcp_gamma: 1.1,
            mix: 1.0,
            lambda_grid: Vec::new(),
        }
    }
}

#[derive(Debug, Serialize)]
struct PathEntryRecord<'a> {
    record: &'static str,
    lambda: f64,
    active: &'a [usize],
    n_active: usize,
    w2_distance: f64,
    w2_r2: f64,
    objective: f64,
    iterations: usize,
    converged: bool,
    kkt_active_residual: Option<f64>,
    kkt_inactive_ratio: Option<f64>,
    intercept: Vec<f64>,
    beta: Vec<Vec<f64>>,
    diagnostics: metrics::DiagnosticsReport,
}

pub fn cmd_fit_a(cfg: &FitACmd) -> Result<ResultBundle> {
    let ensemble_path = cfg
        .ensemble
        .as_ref()
        .ok_or_else(|| anyhow!("--ensemble is required"))?;
    let points_path = cfg
        .points
        .as_ref()
        .ok_or_else(|| anyhow!("--points is required"))?;
    let mu = load_ensemble(ensemble_path)?;
    let nb = load_neighborhood(points_path, cfg.weights.as_ref())?;
    if nb.len() <= nb.dim() {
        eprintln!(
            "warning: {} interpretation points for {} covariates; coefficients are not identified \
             and the fit proceeds with pseudo-inverse semantics",
            nb.len(),
            nb.dim()
        );
    }
    let pen = PenaltyConfig {
        family: parse_penalty(&cfg.penalty)?,
        lambda_grid: cfg.lambda_grid.clone(),
        mcp_gamma: cfg.mcp_gamma,
        p: cfg.p,
        mix: cfg.mix,
    };
    let path = fit_slim_a(&mu, &nb, &pen)?;
    let null = metrics::null_ensemble(
        NullModelSpec::InterceptOnly,
        &mu,
        Some(&nb.weights.view()),
        None,
    )?;
    let diag_cfg = WassersteinConfig::new(2.0, ot::auto_solver(mu.n(), mu.t()))?;
    let mut bundle = ResultBundle::new(Provenance::new("fit-a", None, cfg));
    for entry in &path.entries {
        let nu = entry.coefficients.predict(&nb.points.view())?;
        let diagnostics = metrics::diagnostics_report(&mu, &nu, &null, &diag_cfg)?;
        bundle.push(&PathEntryRecord {
            record: "path-entry",
            lambda: entry.lambda,
            active: &entry.active_groups,
            n_active: entry.active_groups.len(),
            w2_distance: entry.w2_distance,
            w2_r2: entry.w2_r2,
            objective: entry.objective,
            iterations: entry.iterations,
            converged: entry.converged,
            kkt_active_residual: entry.kkt_active_residual,
            kkt_inactive_ratio: entry.kkt_inactive_ratio,
            intercept: entry
                .coefficients
                .intercept
                .as_ref()
                .map(|v| v.to_vec())
                .unwrap_or_default(),
            beta: entry
                .coefficients
                .beta
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            diagnostics,
        });
    }
    Ok(bundle)
}

// ---------------------------------------------------------------------------
// fit-p

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitPCmd {
    pub ensemble: Option<PathBuf>,
    pub draws: Option<PathBuf>,
    pub points: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub mode: String,
    pub budgets: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    pub penalty: String,
    pub mcp_gamma: f64,
    pub box_constrained: bool,
    pub intercept_row: bool,
}

impl Default for FitPCmd {
    fn default() -> Self {
        Self {
            ensemble: None,
            draws: None,
            points: None,
            weights: None,
            mode: "exact".into(),
            budgets: Vec::new(),
            lambda_grid: Vec::new(),
            penalty: "group-lasso".into(),
            mcp_gamma: 1.5,
            box_constrained: false,
            intercept_row: false,
        }
    }
}

#[derive(Debug, Serialize)]
struct MaskEntryRecord {
    record: &'static str,
    budget: Option<usize>,
    lambda: Option<f64>,
    alpha: Vec<bool>,
    active: Vec<usize>,
    w2_distance: f64,
    iterations: usize,
    converged: bool,
    diagnostics: metrics::DiagnosticsReport,
}

pub fn cmd_fit_p(cfg: &FitPCmd) -> Result<ResultBundle> {
    let mu = load_ensemble(
        cfg.ensemble
            .as_ref()
            .ok_or_else(|| anyhow!("--ensemble is required"))?,
    )?;
    let draws = load_draws(
        cfg.draws
            .as_ref()
            .ok_or_else(|| anyhow!("--draws is required"))?,
        cfg.intercept_row,
    )?;
    let nb = load_neighborhood(
        cfg.points
            .as_ref()
            .ok_or_else(|| anyhow!("--points is required"))?,
        cfg.weights.as_ref(),
    )?;
    let schedule = match cfg.mode.as_str() {
        "exact" => {
            let budgets = if cfg.budgets.is_empty() {
                (0..=draws.k() - usize::from(cfg.intercept_row)).collect()
            } else {
                cfg.budgets.clone()
            };
            MaskSchedule::Budgets(budgets)
        }
        "relaxed" => {
            if cfg.lambda_grid.is_empty() {
                bail!("relaxed mode needs --lambda-grid");
            }
            MaskSchedule::LambdaGrid(cfg.lambda_grid.clone())
        }
        other => bail!("unknown mode {other:?}: expected exact or relaxed"),
    };
    let opts = SlimPOptions {
        relaxed_penalty: parse_penalty(&cfg.penalty)?,
        mcp_gamma: cfg.mcp_gamma,
        box_constrained: cfg.box_constrained,
        ..Default::default()
    };
    let result = quadratic_slim_p(&nb, &draws, &mu, &schedule, &opts)?;
    let null = metrics::null_ensemble(
        NullModelSpec::InterceptOnly,
        &mu,
        None,
        Some((&draws, &nb.points.view())),
    )?;
    let diag_cfg = WassersteinConfig::new(2.0, ot::auto_solver(mu.n(), mu.t()))?;
    let mut bundle = ResultBundle::new(Provenance::new("fit-p", None, cfg));
    for entry in &result.entries {
        let nu = entry.coefficients.predict(&nb.points.view())?;
        let diagnostics = metrics::diagnostics_report(&mu, &nu, &null, &diag_cfg)?;
        bundle.push(&MaskEntryRecord {
            record: "mask-entry",
            budget: entry.budget,
            lambda: entry.lambda,
            alpha: entry.mask.alpha.clone(),
            active: entry.mask.active_indices(),
            w2_distance: entry.w2_distance,
            iterations: entry.iterations,
            converged: entry.converged,
            diagnostics,
        });
    }
    Ok(bundle)
}

// ---------------------------------------------------------------------------
// search

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchCmd {
    pub ensemble: Option<PathBuf>,
    pub draws: Option<PathBuf>,
    pub points: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub method: String,
    pub rule: String,
    pub target_size: Option<usize>,
    pub seed: u64,
    pub restarts: usize,
    pub p: f64,
    pub enumeration_cap: usize,
    pub intercept_row: bool,
}

impl Default for SearchCmd {
    fn default() -> Self {
        Self {
            ensemble: None,
            draws: None,
            points: None,
            weights: None,
            method: "best-subsets".into(),
            rule: "fixed".into(),
            target_size: None,
            seed: 7,
            restarts: 20,
            p: 2.0,
            enumeration_cap: 20,
            intercept_row: false,
        }
    }
}

#[derive(Debug, Serialize)]
struct SizeEntryRecord {
    record: &'static str,
    method: String,
    size: usize,
    active: Vec<usize>,
    distance: f64,
}

pub fn cmd_search(cfg: &SearchCmd) -> Result<ResultBundle> {
    let mu = load_ensemble(
        cfg.ensemble
            .as_ref()
            .ok_or_else(|| anyhow!("--ensemble is required"))?,
    )?;
    let draws = load_draws(
        cfg.draws
            .as_ref()
            .ok_or_else(|| anyhow!("--draws is required"))?,
        cfg.intercept_row,
    )?;
    let nb = load_neighborhood(
        cfg.points
            .as_ref()
            .ok_or_else(|| anyhow!("--points is required"))?,
        cfg.weights.as_ref(),
    )?;
    let rule = match cfg.rule.as_str() {
        "fixed" => CoefficientRule::Fixed,
        "adaptive" => CoefficientRule::Adaptive,
        other => bail!("unknown rule {other:?}: expected fixed or adaptive"),
    };
    let opts = SearchOptions {
        p: cfg.p,
        enumeration_cap: cfg.enumeration_cap,
        ..Default::default()
    };
    let mut bundle = ResultBundle::new(Provenance::new("search", Some(cfg.seed), cfg));
    match cfg.method.as_str() {
        "best-subsets" | "stepwise" => {
            let path = if cfg.method == "best-subsets" {
                best_subsets(&nb, &draws, &mu, rule, &opts)?
            } else {
                backward_stepwise(&nb, &draws, &mu, rule, &opts)?
            };
            for entry in &path.entries {
                bundle.push(&SizeEntryRecord {
                    record: "size-entry",
                    method: cfg.method.clone(),
                    size: entry.size,
                    active: entry.active.clone(),
                    distance: entry.distance,
                });
            }
        }
        "annealing" => {
            let target = cfg
                .target_size
                .ok_or_else(|| anyhow!("--target-size is required for annealing"))?;
            // Seed the default temperature ladder with the full-model
            // distance, the natural scale of the search.
            let mu_cloud = mu.to_cloud();
            let nu_cloud =
                slim_core::ensemble::predict_linear(&nb.points.view(), &draws)?.to_cloud();
            let init_dist = ot::wasserstein_distance(
                &mu_cloud,
                &nu_cloud,
                &WassersteinConfig::new(cfg.p, ot::auto_solver(nb.len(), draws.t()))?,
            )?;
            let schedule = AnnealingSchedule::default_for(init_dist.max(1e-3), draws.k());
            let entry = simulated_annealing(
                &nb,
                &draws,
                &mu,
                rule,
                &schedule,
                target,
                cfg.seed,
                cfg.restarts,
                &opts,
            )?;
            bundle.push(&SizeEntryRecord {
                record: "size-entry",
                method: "annealing".into(),
                size: entry.size,
                active: entry.active.clone(),
                distance: entry.distance,
            });
        }
        other => bail!("unknown method {other:?}: expected best-subsets, stepwise or annealing"),
    }
    Ok(bundle)
}

// ---------------------------------------------------------------------------
// metrics

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsCmd {
    pub m: Option<PathBuf>,
    pub q: Option<PathBuf>,
    pub null: String,
    pub draws: Option<PathBuf>,
    pub points: Option<PathBuf>,
    pub intercept_row: bool,
    pub p: f64,
    pub solver: String,
}

impl Default for MetricsCmd {
    fn default() -> Self {
        Self {
            m: None,
            q: None,
            null: "intercept".into(),
            draws: None,
            points: None,
            intercept_row: false,
            p: 2.0,
            solver: "exact".into(),
        }
    }
}

pub fn cmd_metrics(cfg: &MetricsCmd) -> Result<(metrics::DiagnosticsReport, ResultBundle)> {
    let m = load_ensemble(cfg.m.as_ref().ok_or_else(|| anyhow!("--m is required"))?)?;
    let q = load_ensemble(cfg.q.as_ref().ok_or_else(|| anyhow!("--q is required"))?)?;
    let spec = parse_null(&cfg.null)?;
    let model = match (&cfg.draws, &cfg.points) {
        (Some(dp), Some(pp)) => Some((load_draws(dp, cfg.intercept_row)?, load_points(pp)?)),
        (None, None) => None,
        _ => bail!("--draws and --points must be given together"),
    };
    let null = match &model {
        Some((draws, points)) => {
            metrics::null_ensemble(spec, &m, None, Some((draws, &points.view())))?
        }
        None => metrics::null_ensemble(spec, &m, None, None)?,
    };
    let wcfg = WassersteinConfig::new(cfg.p, parse_solver(&cfg.solver)?)?;
    let report = metrics::diagnostics_report(&m, &q, &null, &wcfg)?;
    let mut bundle = ResultBundle::new(Provenance::new("metrics", None, cfg));
    bundle.push(&report);
    Ok((report, bundle))
}

// ---------------------------------------------------------------------------
// neighborhood

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeighborhoodCmd {
    /// Training data whose empirical covariance defines the sampler.
    pub data: Option<PathBuf>,
    /// Center point file (single row); defaults to the data's first row.
    pub center: Option<PathBuf>,
    pub count: Option<usize>,
    pub seed: u64,
    /// `gaussian` or `knn`.
    pub construction: String,
    /// Use the un-centered `Σ xxᵀ` covariance form.
    pub sum_outer: bool,
}

impl Default for NeighborhoodCmd {
    fn default() -> Self {
        Self {
            data: None,
            center: None,
            count: None,
            seed: 7,
            construction: "gaussian".into(),
            sum_outer: false,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct NeighborhoodSummary {
    pub record: &'static str,
    pub count: usize,
    pub dimension: usize,
    pub construction: String,
    pub covariance_clipped: bool,
}

pub fn cmd_neighborhood(cfg: &NeighborhoodCmd) -> Result<(Neighborhood, ResultBundle)> {
    let data = load_points(
        cfg.data
            .as_ref()
            .ok_or_else(|| anyhow!("--data is required"))?,
    )?;
    let center: Array1<f64> = match &cfg.center {
        Some(path) => {
            let m = load_points(path)?;
            if m.nrows() != 1 {
                bail!("--center must contain exactly one row");
            }
            m.row(0).to_owned()
        }
        None => data.row(0).to_owned(),
    };
    let count = cfg
        .count
        .unwrap_or_else(|| Neighborhood::default_size(data.ncols()));
    let nb = match cfg.construction.as_str() {
        "gaussian" => {
            let form = if cfg.sum_outer {
                CovarianceForm::SumOuter
            } else {
                CovarianceForm::Centered
            };
            let sigma = empirical_covariance(&data.view(), form);
            gaussian_neighborhood(&center.view(), &sigma.view(), data.nrows(), count, cfg.seed)?
        }
        "knn" => Neighborhood::nearest(&data.view(), center, count)?,
        other => bail!("unknown construction {other:?}: expected gaussian or knn"),
    };
    if nb.covariance_clipped {
        eprintln!("warning: covariance was not positive semidefinite; negative modes clipped");
    }
    let mut bundle = ResultBundle::new(Provenance::new("neighborhood", Some(cfg.seed), cfg));
    bundle.push(&NeighborhoodSummary {
        record: "neighborhood",
        count: nb.len(),
        dimension: nb.dim(),
        construction: cfg.construction.clone(),
        covariance_clipped: nb.covariance_clipped,
    });
    Ok((nb, bundle))
}

/// Load a config file into a command struct, rejecting unknown keys.
pub fn load_config<T: for<'de> Deserialize<'de>>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}
