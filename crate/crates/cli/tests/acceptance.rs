//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//! Run with `cargo test -p slim-cli --test acceptance -- --nocapture`.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use slim_cli::sim::{run_simulate, Scenario, SimulateConfig};
use slim_core::ensemble::{
    conjugate_gaussian_posterior, predict_linear, simulate_predictors, Neighborhood,
    ParameterDraws, PredictionEnsemble,
};
use slim_core::linalg;
use slim_core::metrics;
use slim_core::oracle;
use slim_core::ot::{self, EmpiricalCloud, SolverKind, WassersteinConfig};
use slim_core::search::{
    backward_stepwise, best_subsets, simulated_annealing, AnnealingSchedule, CoefficientRule,
    SearchOptions,
};
use slim_core::seeding;
use slim_core::slim_a::{fit_slim_a, PenaltyConfig};
use slim_core::slim_p::{quadratic_slim_p, MaskSchedule, SlimPOptions};

fn report(criterion: u32, label: &str, pass: bool) {
    println!(
        "criterion {criterion:02} [{}] {label}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {label}");
}

fn random_cloud(rng: &mut impl Rng, t: usize, n: usize, scale: f64) -> EmpiricalCloud {
    let m = Array2::from_shape_fn((t, n), |_| (rng.random::<f64>() - 0.5) * scale);
    EmpiricalCloud::new(m).unwrap()
}

#[test]
fn criterion_01_ot_exactness() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..200u64 {
        let mut rng = seeding::rng(seeding::derive(11, "ot-exact", seed));
        let t = 1 + (seed as usize % 6);
        let n = 1 + (seed as usize % 4);
        let p = [1.0, 2.0, 3.0][seed as usize % 3];
        let a = random_cloud(&mut rng, t, n, 8.0);
        let b = random_cloud(&mut rng, t, n, 8.0);
        let cfg = WassersteinConfig::exact(p).unwrap();
        let plan = ot::exact_plan(&a, &b, &cfg).unwrap();
        let oracle_obj = oracle::brute_force_transport_objective(&a, &b, p);
        worst = worst.max((plan.objective - oracle_obj).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        1,
        &format!(
            "assignment objective equals brute force on 200 instances \
             (worst gap {worst:.2e}, {elapsed:.2}s)"
        ),
        worst < 1e-10 && elapsed < 5.0,
    );
}

#[test]
fn criterion_02_rank_solver_consistency() {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = seeding::rng(seeding::derive(12, "rank", seed));
        let t = 2 + (seed as usize % 30);
        let p = [1.0, 2.0, 3.0][seed as usize % 3];
        let a = random_cloud(&mut rng, t, 1, 6.0);
        let b = random_cloud(&mut rng, t, 1, 6.0);
        let exact =
            ot::wasserstein_distance(&a, &b, &WassersteinConfig::exact(p).unwrap()).unwrap();
        let rank = ot::wasserstein_distance(
            &a,
            &b,
            &WassersteinConfig::new(p, SolverKind::Rank1d).unwrap(),
        )
        .unwrap();
        worst = worst.max((exact - rank).abs());
    }
    report(
        2,
        &format!("rank matching equals assignment on 100 scalar instances (worst gap {worst:.2e})"),
        worst < 1e-12,
    );
}

#[test]
fn criterion_03_single_draw_collapse() {
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let mut rng = seeding::rng(seeding::derive(13, "single", seed));
        let n = 1 + (seed as usize % 12);
        let a = random_cloud(&mut rng, 1, n, 10.0);
        let b = random_cloud(&mut rng, 1, n, 10.0);
        let d = ot::wasserstein_distance(&a, &b, &WassersteinConfig::default()).unwrap();
        let euclid: f64 = a
            .atoms()
            .row(0)
            .iter()
            .zip(b.atoms().row(0).iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        worst = worst.max((d - euclid).abs());
    }
    report(
        3,
        &format!("T = 1 distance equals the Euclidean norm (worst gap {worst:.2e})"),
        worst < 1e-12,
    );
}

#[test]
fn criterion_04_quadratic_form_identity() {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = seeding::rng(seeding::derive(14, "identity", seed));
        let k = 1 + (seed as usize % 6);
        let t = 1 + (seed as usize % 8);
        let n = 1 + (seed as usize % 5);
        let points = Array2::from_shape_fn((n, k), |_| rng.random::<f64>() * 2.0 - 1.0);
        let theta = Array2::from_shape_fn((k, t), |_| rng.random::<f64>() * 2.0 - 1.0);
        let mut nb = Neighborhood::from_points(points, Array1::zeros(k)).unwrap();
        if seed % 2 == 0 {
            nb.weights = Array1::from_shape_fn(n, |_| 0.1 + rng.random::<f64>());
        }
        let draws = ParameterDraws::new(theta, false).unwrap();
        let mu = PredictionEnsemble::new(
            Array2::from_shape_fn((n, t), |_| rng.random::<f64>() * 4.0 - 2.0),
            "t",
        )
        .unwrap();
        let plan = oracle::random_feasible_plan(t, 4, &mut rng);
        let stats = slim_core::slim_p::build_stats(&nb, &draws, &mu, &plan).unwrap();
        let alpha: Vec<bool> = (0..k).map(|_| rng.random::<f64>() < 0.5).collect();
        let quadratic = stats.loss(&alpha);
        let direct = oracle::direct_masked_loss(&nb, &draws, &mu, &alpha, &plan.gamma.view());
        worst = worst.max((quadratic - direct).abs() / direct.abs().max(1e-12));
    }
    report(
        4,
        &format!("quadratic form + constant equals the direct loss (worst rel gap {worst:.2e})"),
        worst < 1e-8,
    );
}

#[test]
fn criterion_05_slim_p_exact_optimality() {
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let mut rng = seeding::rng(seeding::derive(15, "exact-mode", seed));
        let k = 3 + (seed as usize % 6); // 3..8
        let t = 2 + (seed as usize % 7); // 2..8
        let n = 2 + (seed as usize % 5);
        let points = Array2::from_shape_fn((n, k), |_| rng.random::<f64>() * 2.0 - 1.0);
        let theta = Array2::from_shape_fn((k, t), |_| rng.random::<f64>() * 2.0 - 1.0);
        let nb = Neighborhood::from_points(points, Array1::zeros(k)).unwrap();
        let draws = ParameterDraws::new(theta, false).unwrap();
        let mut mu = predict_linear(&nb.points.view(), &draws).unwrap();
        let noise = [0.1, 0.5, 2.0][seed as usize % 3];
        for v in mu.values.iter_mut() {
            *v += noise * (rng.random::<f64>() - 0.5);
        }
        let budget = 1 + (seed as usize % k);
        let result = quadratic_slim_p(
            &nb,
            &draws,
            &mu,
            &MaskSchedule::Budgets(vec![budget]),
            &SlimPOptions::default(),
        )
        .unwrap();
        let (_, oracle_dist) = oracle::exhaustive_mask_minimum(&nb, &draws, &mu, budget);
        worst = worst.max(result.entries[0].w2_distance - oracle_dist);
    }
    report(
        5,
        &format!(
            "alternating exact mode matches exhaustive enumeration on 50 instances \
             (worst excess {worst:.2e})"
        ),
        worst.abs() < 1e-8,
    );
}

struct ToyFit {
    nb: Neighborhood,
    draws: ParameterDraws,
    mu: PredictionEnsemble,
}

fn toy_fit(seed: u64) -> ToyFit {
    let n = 1024;
    let k = 5;
    let theta_true = Array1::from_vec(vec![-0.1, -0.2, 1.3, 1.4, 1.5]);
    let x = simulate_predictors(n, k, 0.5, seeding::derive(seed, "toy-x", 0)).unwrap();
    let mut rng = seeding::rng(seeding::derive(seed, "toy-noise", 0));
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let eps: f64 = StandardNormal.sample(&mut rng);
        y[i] = x.row(i).dot(&theta_true) + eps;
    }
    let (draws, _) = conjugate_gaussian_posterior(
        &x.view(),
        &y.view(),
        1.0,
        1.0,
        1.0,
        100,
        seeding::derive(seed, "toy-posterior", 0),
    )
    .unwrap();
    let x0 = Array1::from_vec(vec![100.0, 90.0, 0.01, 0.01, 0.01]);
    let nb = Neighborhood::single(x0);
    let mu = predict_linear(&nb.points.view(), &draws).unwrap();
    ToyFit { nb, draws, mu }
}

#[test]
fn criterion_06_toy_selection_orders() {
    let start = Instant::now();
    let seeds: Vec<u64> = (1..=20).collect();
    let mut size1_ok = 0;
    let mut size2_ok = 0;
    let mut last_ok = 0;
    for &seed in &seeds {
        let toy = toy_fit(seed);
        let path = best_subsets(
            &toy.nb,
            &toy.draws,
            &toy.mu,
            CoefficientRule::Fixed,
            &SearchOptions::default(),
        )
        .unwrap();
        let size1 = &path.entries[0];
        // 0-based indices: covariates 1 and 2 are rows 0 and 1.
        if size1.active == vec![0] || size1.active == vec![1] {
            size1_ok += 1;
        }
        let size2 = &path.entries[1];
        if size2.active == vec![0, 1] {
            size2_ok += 1;
        }
        let size4 = &path.entries[3];
        if !size4.active.contains(&2) {
            last_ok += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        6,
        &format!(
            "toy selection orders: size-1 in {{1,2}} {size1_ok}/20, size-2 = {{1,2}} \
             {size2_ok}/20, covariate 3 last {last_ok}/20, {elapsed:.1}s"
        ),
        size1_ok >= 18 && size2_ok >= 18 && last_ok >= 18 && elapsed < 120.0,
    );
}

#[test]
fn criterion_07_toy_two_covariate_adequacy() {
    let seeds: Vec<u64> = (1..=20).collect();
    let mut ok = 0;
    for &seed in &seeds {
        let toy = toy_fit(seed);
        let masked = toy.draws.masked(&[true, true, false, false, false]);
        let nu = predict_linear(&toy.nb.points.view(), &masked).unwrap();
        let null = metrics::null_ensemble(
            metrics::NullModelSpec::InterceptOnly,
            &toy.mu,
            None,
            Some((&toy.draws, &toy.nb.points.view())),
        )
        .unwrap();
        let r2 =
            metrics::wasserstein_r2(&toy.mu, &nu, &null, &WassersteinConfig::default()).unwrap();
        if r2.value >= 0.95 {
            ok += 1;
        }
    }
    report(
        7,
        &format!("size-2 mask reaches R² ≥ 0.95 against the intercept-only null in {ok}/20 seeds"),
        ok >= 18,
    );
}

#[test]
fn criterion_08_degenerate_recovery() {
    let mut rng = seeding::rng(801);
    let n = 40;
    let k = 6;
    let t = 5;
    let points = Array2::from_shape_fn((n, k), |_| rng.random::<f64>() * 2.0 - 1.0);
    let truth = Array2::from_shape_fn((k, t), |_| rng.random::<f64>() * 2.0 - 1.0);
    let draws = ParameterDraws::new(truth, false).unwrap();
    let mu = predict_linear(&points.view(), &draws).unwrap();
    let nb = Neighborhood::from_points(points.clone(), Array1::zeros(k)).unwrap();
    let pen = PenaltyConfig::group_lasso(2.0).with_lambda_grid(vec![0.0]);
    let path = fit_slim_a(&mu, &nb, &pen).unwrap();
    let entry = &path.entries[0];
    let oracle_beta = linalg::weighted_least_squares(&points.view(), &mu.values.view(), None);
    let coef_err = entry
        .coefficients
        .beta
        .iter()
        .zip(oracle_beta.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    report(
        8,
        &format!(
            "unpenalized fit recovers the generator (coef err {coef_err:.2e}, \
             distance {:.2e})",
            entry.w2_distance
        ),
        coef_err < 1e-8 && entry.w2_distance < 1e-8,
    );
}

#[test]
fn criterion_09_group_lasso_kkt() {
    let mut worst_active = 0.0f64;
    let mut worst_inactive = 0.0f64;
    for seed in [901u64, 902, 903] {
        let mut rng = seeding::rng(seed);
        let n = 30;
        let k = 6;
        let t = 5;
        let points = Array2::from_shape_fn((n, k), |_| rng.random::<f64>() * 2.0 - 1.0);
        let theta = Array2::from_shape_fn((k, t), |_| rng.random::<f64>() * 2.0 - 1.0);
        let draws = ParameterDraws::new(theta, false).unwrap();
        let mut mu = predict_linear(&points.view(), &draws).unwrap();
        for v in mu.values.iter_mut() {
            *v += 0.2 * (rng.random::<f64>() - 0.5);
        }
        let nb = Neighborhood::from_points(points, Array1::zeros(k)).unwrap();
        let pen = PenaltyConfig::group_lasso(2.0);
        let path = fit_slim_a(&mu, &nb, &pen).unwrap();
        for entry in &path.entries {
            worst_active = worst_active.max(entry.kkt_active_residual.unwrap());
            worst_inactive = worst_inactive.max(entry.kkt_inactive_ratio.unwrap());
        }
    }
    report(
        9,
        &format!(
            "group-lasso stationarity along 300 path entries \
             (worst active {worst_active:.2e}, worst inactive ratio {worst_inactive:.8})"
        ),
        worst_active < 1e-6 && worst_inactive <= 1.0 + 1e-6,
    );
}

#[test]
fn criterion_10_search_dominance_and_annealing() {
    // Dominance: exhaustive beats stepwise at every size.
    let mut dominance_ok = true;
    for seed in [1001u64, 1002] {
        let mut rng = seeding::rng(seed);
        let n = 8;
        let k = 8;
        let t = 8;
        let points = Array2::from_shape_fn((n, k), |_| rng.random::<f64>() * 2.0 - 1.0);
        let theta = Array2::from_shape_fn((k, t), |_| rng.random::<f64>() * 2.0 - 1.0);
        let draws = ParameterDraws::new(theta, false).unwrap();
        let mut mu = predict_linear(&points.view(), &draws).unwrap();
        for v in mu.values.iter_mut() {
            *v += 0.4 * (rng.random::<f64>() - 0.5);
        }
        let nb = Neighborhood::from_points(points, Array1::zeros(k)).unwrap();
        let opts = SearchOptions::default();
        for rule in [CoefficientRule::Fixed, CoefficientRule::Adaptive] {
            let bs = best_subsets(&nb, &draws, &mu, rule, &opts).unwrap();
            let sw = backward_stepwise(&nb, &draws, &mu, rule, &opts).unwrap();
            for (b, s) in bs.entries.iter().zip(sw.entries.iter()) {
                if b.distance > s.distance + 1e-10 {
                    dominance_ok = false;
                }
            }
        }
    }

    // Annealing with the default schedule and 20 restarts must match the
    // exhaustive optimum at the target size in at least 95 of 100 trials.
    let mut matches = 0;
    for trial in 0..100u64 {
        let mut rng = seeding::rng(seeding::derive(1010, "sa-trial", trial));
        let n = 8;
        let k = 8;
        let t = 6;
        let points = Array2::from_shape_fn((n, k), |_| rng.random::<f64>() * 2.0 - 1.0);
        let theta = Array2::from_shape_fn((k, t), |_| rng.random::<f64>() * 2.0 - 1.0);
        let draws = ParameterDraws::new(theta, false).unwrap();
        let mut mu = predict_linear(&points.view(), &draws).unwrap();
        for v in mu.values.iter_mut() {
            *v += 0.4 * (rng.random::<f64>() - 0.5);
        }
        let nb = Neighborhood::from_points(points, Array1::zeros(k)).unwrap();
        let opts = SearchOptions::default();
        let target = 1 + (trial as usize % 7);
        let bs = best_subsets(&nb, &draws, &mu, CoefficientRule::Fixed, &opts).unwrap();
        let best_at_target = bs.entries.iter().find(|e| e.size == target).unwrap();
        // Temperature ladder seeded by the distance of the empty model: the
        // natural scale before any search has run.
        let zero_pred = PredictionEnsemble::new(Array2::zeros((n, t)), "null").unwrap();
        let r0 = ot::wasserstein_distance(
            &mu.to_cloud(),
            &zero_pred.to_cloud(),
            &WassersteinConfig::default(),
        )
        .unwrap();
        let schedule = AnnealingSchedule::default_for(r0, k);
        let sa = simulated_annealing(
            &nb,
            &draws,
            &mu,
            CoefficientRule::Fixed,
            &schedule,
            target,
            seeding::derive(1011, "sa-seed", trial),
            20,
            &opts,
        )
        .unwrap();
        if (sa.distance - best_at_target.distance).abs() <= 1e-8 * (1.0 + best_at_target.distance) {
            matches += 1;
        }
    }
    report(
        10,
        &format!(
            "best subsets dominates stepwise ({}) and annealing matches it in {matches}/100 trials",
            if dominance_ok { "yes" } else { "no" }
        ),
        dominance_ok && matches >= 95,
    );
}

#[test]
fn criterion_11_gaussian_shape_check() {
    let cfg = SimulateConfig {
        scenario: Scenario::Gaussian,
        rho: 0.5,
        seed: 1100,
        replicates: 10,
        n: 1024,
        t_draws: 100,
        neighborhood: None,
        methods: vec!["slim-a".into()],
    };
    let output = run_simulate(&cfg).unwrap();
    let mut curve: Vec<(usize, f64, f64)> = output
        .aggregates
        .iter()
        .filter(|a| a.method == "slim-a")
        .map(|a| (a.size, a.mean_w2, a.mean_w2_r2))
        .collect();
    curve.sort_by_key(|&(s, _, _)| s);
    let mut monotone = true;
    for w in curve.windows(2) {
        if w[1].1 > w[0].1 * 1.02 {
            monotone = false;
        }
    }
    let (largest, _, r2_at_largest) = *curve.last().unwrap();
    report(
        11,
        &format!(
            "mean distance non-increasing across {} sizes (2% slack) and R² at size {largest} \
             is {r2_at_largest:.6}",
            curve.len()
        ),
        monotone && r2_at_largest > 0.99,
    );
}

#[test]
fn criterion_12_metric_edge_cases() {
    let m = PredictionEnsemble::new(
        Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 1.0, 2.0]).unwrap(),
        "m",
    )
    .unwrap();
    let far = PredictionEnsemble::new(Array2::from_elem((2, 2), 5.0), "far").unwrap();
    let cfg = WassersteinConfig::default();

    let zero_over_zero = metrics::wasserstein_r2(&m, &m, &m, &cfg).unwrap();
    let infinite = metrics::wasserstein_r2(&m, &far, &m, &cfg).unwrap();
    let conventions_ok = zero_over_zero.value == 1.0
        && zero_over_zero.zero_over_zero
        && infinite.value == f64::NEG_INFINITY
        && infinite.infinite_ratio;

    let mut rng = seeding::rng(1201);
    let a = PredictionEnsemble::new(Array2::from_shape_fn((7, 9), |_| rng.random::<f64>()), "a")
        .unwrap();
    let b = PredictionEnsemble::new(Array2::from_shape_fn((7, 9), |_| rng.random::<f64>()), "b")
        .unwrap();
    let per = metrics::per_observation_distances(&a, &b, &cfg).unwrap();
    let avg = metrics::average_wasserstein(&a, &b, &cfg).unwrap();
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    let average_ok = (avg - mean).abs() < 1e-12;

    report(
        12,
        &format!(
            "ratio conventions hold and the average equals the per-observation mean \
             (gap {:.2e})",
            (avg - mean).abs()
        ),
        conventions_ok && average_ok,
    );
}

#[test]
fn criterion_13_simulate_determinism() {
    let cfg = SimulateConfig {
        scenario: Scenario::Toy,
        rho: 0.5,
        seed: 1300,
        replicates: 1,
        n: 512,
        t_draws: 60,
        neighborhood: Some(60),
        methods: vec!["best-subsets".into(), "exact".into(), "slim-a".into()],
    };
    let first = run_simulate(&cfg).unwrap();
    let second = run_simulate(&cfg).unwrap();
    let bytes_a = first.bundle.to_jsonl().into_bytes();
    let bytes_b = second.bundle.to_jsonl().into_bytes();

    // Also exercise the on-disk round trip.
    let dir = tempfile::tempdir().unwrap();
    let p1 = first.bundle.write(dir.path(), "run1.jsonl").unwrap();
    let p2 = second.bundle.write(dir.path(), "run2.jsonl").unwrap();
    let file_a = std::fs::read(p1).unwrap();
    let file_b = std::fs::read(p2).unwrap();

    report(
        13,
        &format!(
            "re-running a fixed config reproduces the bundle byte for byte ({} bytes)",
            bytes_a.len()
        ),
        bytes_a == bytes_b && file_a == file_b && !bytes_a.is_empty(),
    );
}
