use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use slim_cli::commands::{
    self, FitACmd, FitPCmd, MetricsCmd, NeighborhoodCmd, SearchCmd, WassersteinCmd,
};
use slim_cli::io::{write_matrix, RowKind};
use slim_cli::sim::{self, Scenario, SimulateConfig};

/// Sparse local interpretable model summaries over prediction ensembles.
#[derive(Parser)]
#[command(name = "slim", version, about)]
struct Cli {
    /// Worker threads for parallel sections (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory for result bundles.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distance between two prediction ensembles.
    Wasserstein(WassersteinArgs),
    /// Fit the model-agnostic surrogate path.
    FitA(FitAArgs),
    /// Select coefficient masks by the alternating transport scheme.
    FitP(FitPArgs),
    /// Model-size-targeted subset searches.
    Search(SearchArgs),
    /// Diagnostics for a surrogate against the original ensemble.
    Metrics(MetricsArgs),
    /// Run a simulation scenario end to end.
    Simulate(SimulateArgs),
    /// Generate an interpretation neighborhood around a center point.
    Neighborhood(NeighborhoodArgs),
}

#[derive(Args)]
struct WassersteinArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// First ensemble file (rows = observations, columns = draws).
    #[arg(long)]
    a: Option<PathBuf>,
    /// Second ensemble file, same shape.
    #[arg(long)]
    b: Option<PathBuf>,
    /// Wasserstein order.
    #[arg(long)]
    p: Option<f64>,
    /// exact | hilbert | rank1d
    #[arg(long)]
    solver: Option<String>,
}

#[derive(Args)]
struct FitAArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ensemble: Option<PathBuf>,
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    /// group-lasso | group-mcp
    #[arg(long)]
    penalty: Option<String>,
    #[arg(long)]
    mcp_gamma: Option<f64>,
    /// Group-norm fraction of the penalty; the rest is ridge.
    #[arg(long)]
    mix: Option<f64>,
    /// Explicit penalty levels, descending; omit for the automatic grid.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
}

#[derive(Args)]
struct FitPArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ensemble: Option<PathBuf>,
    #[arg(long)]
    draws: Option<PathBuf>,
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// exact | relaxed
    #[arg(long)]
    mode: Option<String>,
    /// Cardinality budgets for exact mode.
    #[arg(long, alias = "budget", num_args = 1.., value_delimiter = ',')]
    budgets: Option<Vec<usize>>,
    /// Penalty levels for relaxed mode.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// group-lasso | group-mcp (relaxed mode)
    #[arg(long)]
    penalty: Option<String>,
    #[arg(long)]
    mcp_gamma: Option<f64>,
    /// Constrain relaxed coordinates to [0, 1].
    #[arg(long)]
    box_constrained: bool,
    /// Treat the first coefficient row as an unmaskable intercept.
    #[arg(long)]
    intercept_row: bool,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ensemble: Option<PathBuf>,
    #[arg(long)]
    draws: Option<PathBuf>,
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// best-subsets | stepwise | annealing
    #[arg(long)]
    method: Option<String>,
    /// fixed | adaptive
    #[arg(long)]
    rule: Option<String>,
    #[arg(long)]
    target_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    enumeration_cap: Option<usize>,
    #[arg(long)]
    intercept_row: bool,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Original prediction ensemble.
    #[arg(long)]
    m: Option<PathBuf>,
    /// Surrogate prediction ensemble.
    #[arg(long)]
    q: Option<PathBuf>,
    /// intercept | zero | mean
    #[arg(long)]
    null: Option<String>,
    #[arg(long)]
    draws: Option<PathBuf>,
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    intercept_row: bool,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    solver: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// toy | gaussian
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t_draws: Option<usize>,
    #[arg(long)]
    neighborhood: Option<usize>,
    /// Any of: best-subsets, exact, relaxed, slim-a.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    methods: Option<Vec<String>>,
}

#[derive(Args)]
struct NeighborhoodArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    center: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// gaussian | knn
    #[arg(long)]
    construction: Option<String>,
    /// Use the un-centered Σxxᵀ covariance form.
    #[arg(long)]
    sum_outer: bool,
}

fn base<T: Default + for<'de> serde::Deserialize<'de>>(config: &Option<PathBuf>) -> Result<T> {
    match config {
        Some(path) => commands::load_config(path),
        None => Ok(T::default()),
    }
}

macro_rules! merge {
    ($cfg:expr, $args:expr, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $args.$field { $cfg.$field = Some(v); })+
    };
}

macro_rules! merge_plain {
    ($cfg:expr, $args:expr, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $args.$field { $cfg.$field = v; })+
    };
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));

    match cli.command {
        Command::Wasserstein(args) => {
            let mut cfg: WassersteinCmd = base(&args.config)?;
            merge!(cfg, args, a, b);
            merge_plain!(cfg, args, p, solver);
            let (report, bundle) = commands::cmd_wasserstein(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if cli.out.is_some() {
                bundle.write(&out_dir, "wasserstein.jsonl")?;
            }
        }
        Command::FitA(args) => {
            let mut cfg: FitACmd = base(&args.config)?;
            merge!(cfg, args, ensemble, points, weights);
            merge_plain!(cfg, args, p, penalty, mcp_gamma, mix, lambda_grid);
            let bundle = commands::cmd_fit_a(&cfg)?;
            let path = bundle.write(&out_dir, "fit_a.jsonl")?;
            println!("wrote {}", path.display());
        }
        Command::FitP(args) => {
            let mut cfg: FitPCmd = base(&args.config)?;
            merge!(cfg, args, ensemble, draws, points, weights);
            merge_plain!(cfg, args, mode, budgets, lambda_grid, penalty, mcp_gamma);
            cfg.box_constrained |= args.box_constrained;
            cfg.intercept_row |= args.intercept_row;
            let bundle = commands::cmd_fit_p(&cfg)?;
            let path = bundle.write(&out_dir, "fit_p.jsonl")?;
            println!("wrote {}", path.display());
        }
        Command::Search(args) => {
            let mut cfg: SearchCmd = base(&args.config)?;
            merge!(cfg, args, ensemble, draws, points, weights, target_size);
            merge_plain!(cfg, args, method, rule, seed, restarts, p, enumeration_cap);
            cfg.intercept_row |= args.intercept_row;
            let bundle = commands::cmd_search(&cfg)?;
            let path = bundle.write(&out_dir, "search.jsonl")?;
            println!("wrote {}", path.display());
        }
        Command::Metrics(args) => {
            let mut cfg: MetricsCmd = base(&args.config)?;
            merge!(cfg, args, m, q, draws, points);
            merge_plain!(cfg, args, null, p, solver);
            cfg.intercept_row |= args.intercept_row;
            let (report, bundle) = commands::cmd_metrics(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if cli.out.is_some() {
                bundle.write(&out_dir, "metrics.jsonl")?;
            }
        }
        Command::Simulate(args) => {
            let mut cfg: SimulateConfig = base(&args.config)?;
            if let Some(s) = args.scenario {
                cfg.scenario = match s.as_str() {
                    "toy" => Scenario::Toy,
                    "gaussian" => Scenario::Gaussian,
                    other => anyhow::bail!("unknown scenario {other:?}"),
                };
            }
            merge!(cfg, args, neighborhood);
            merge_plain!(cfg, args, rho, seed, replicates, n, t_draws, methods);
            let output = sim::run_simulate(&cfg)?;
            let path = output.bundle.write(&out_dir, "simulate.jsonl")?;
            std::fs::write(
                out_dir.join("summary.csv"),
                sim::aggregates_to_csv(&output.aggregates),
            )?;
            println!("wrote {} and summary.csv", path.display());
        }
        Command::Neighborhood(args) => {
            let mut cfg: NeighborhoodCmd = base(&args.config)?;
            merge!(cfg, args, data, center, count);
            merge_plain!(cfg, args, seed, construction);
            cfg.sum_outer |= args.sum_outer;
            let (nb, bundle) = commands::cmd_neighborhood(&cfg)?;
            std::fs::create_dir_all(&out_dir)?;
            write_matrix(
                &out_dir.join("points.csv"),
                &nb.points,
                RowKind::Observations,
                "x",
            )?;
            let weights = nb
                .weights
                .clone()
                .into_shape_with_order((nb.len(), 1))
                .expect("weights reshape");
            write_matrix(
                &out_dir.join("weights.csv"),
                &weights,
                RowKind::Observations,
                "w",
            )?;
            bundle.write(&out_dir, "neighborhood.jsonl")?;
            println!("wrote points.csv, weights.csv, neighborhood.jsonl");
        }
    }
    Ok(())
}
