//! Property suite for the transport solvers: brute-force equality, metric
//! axioms, plan feasibility, scaling, and the cheap-solver contracts.

use ndarray::Array2;
use proptest::prelude::*;
use slim_core::oracle;
use slim_core::ot::{
    exact_plan, hilbert_plan, rank1d_plan, wasserstein_distance, EmpiricalCloud, SolverKind,
    WassersteinConfig,
};

fn cloud_from(values: Vec<f64>, t: usize, n: usize) -> EmpiricalCloud {
    EmpiricalCloud::new(Array2::from_shape_vec((t, n), values).unwrap()).unwrap()
}

fn cloud_strategy(t: usize, n: usize) -> impl Strategy<Value = EmpiricalCloud> {
    proptest::collection::vec(-10.0..10.0f64, t * n).prop_map(move |v| cloud_from(v, t, n))
}

fn plan_is_feasible(plan: &slim_core::ot::TransportPlan) {
    let (row_dev, col_dev) = plan.marginal_residuals();
    assert!(row_dev < 1e-12, "row marginal deviation {row_dev}");
    assert!(col_dev < 1e-12, "column marginal deviation {col_dev}");
    assert!(plan.gamma.iter().all(|&g| g >= 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_matches_brute_force(
        (t, n) in (1usize..=5, 1usize..=3),
        seed in any::<u32>(),
        p in prop_oneof![Just(1.0), Just(2.0), Just(3.0)],
    ) {
        let mut rng = slim_core::seeding::rng(seed as u64);
        use rand::Rng;
        let a = cloud_from((0..t * n).map(|_| rng.random::<f64>() * 8.0 - 4.0).collect(), t, n);
        let b = cloud_from((0..t * n).map(|_| rng.random::<f64>() * 8.0 - 4.0).collect(), t, n);
        let cfg = WassersteinConfig::exact(p).unwrap();
        let plan = exact_plan(&a, &b, &cfg).unwrap();
        plan_is_feasible(&plan);
        // Exactly one entry of 1/T per row and column.
        for row in plan.gamma.rows() {
            let nz: Vec<f64> = row.iter().copied().filter(|&g| g != 0.0).collect();
            prop_assert_eq!(nz.len(), 1);
            prop_assert!((nz[0] - 1.0 / t as f64).abs() < 1e-15);
        }
        let oracle_obj = oracle::brute_force_transport_objective(&a, &b, p);
        prop_assert!((plan.objective - oracle_obj).abs() < 1e-10,
            "objective {} vs oracle {}", plan.objective, oracle_obj);
    }

    #[test]
    fn symmetry_and_scaling(a in cloud_strategy(4, 2), b in cloud_strategy(4, 2), c in 0.1..4.0f64) {
        let cfg = WassersteinConfig::default();
        let d_ab = wasserstein_distance(&a, &b, &cfg).unwrap();
        let d_ba = wasserstein_distance(&b, &a, &cfg).unwrap();
        prop_assert!((d_ab - d_ba).abs() < 1e-10);

        let scale = |cl: &EmpiricalCloud| cloud_from(
            cl.atoms().iter().map(|v| v * c).collect(), cl.len(), cl.dim());
        let d_scaled = wasserstein_distance(&scale(&a), &scale(&b), &cfg).unwrap();
        prop_assert!((d_scaled - c * d_ab).abs() < 1e-9 * (1.0 + d_ab),
            "homogeneity: {} vs {}", d_scaled, c * d_ab);
    }

    #[test]
    fn triangle_inequality(
        a in cloud_strategy(4, 2),
        b in cloud_strategy(4, 2),
        c in cloud_strategy(4, 2),
        p in prop_oneof![Just(1.0), Just(2.0)],
    ) {
        let cfg = WassersteinConfig::exact(p).unwrap();
        let d_ac = wasserstein_distance(&a, &c, &cfg).unwrap();
        let d_ab = wasserstein_distance(&a, &b, &cfg).unwrap();
        let d_bc = wasserstein_distance(&b, &c, &cfg).unwrap();
        prop_assert!(d_ac <= d_ab + d_bc + 1e-9);
    }

    #[test]
    fn rank_solver_agrees_with_exact_in_one_dimension(a in cloud_strategy(6, 1), b in cloud_strategy(6, 1)) {
        for p in [1.0, 2.0, 3.5] {
            let exact_cfg = WassersteinConfig::exact(p).unwrap();
            let rank_cfg = WassersteinConfig::new(p, SolverKind::Rank1d).unwrap();
            let e = exact_plan(&a, &b, &exact_cfg).unwrap();
            let r = rank1d_plan(&a, &b, &rank_cfg).unwrap();
            plan_is_feasible(&r);
            prop_assert!((e.objective - r.objective).abs() < 1e-12,
                "rank {} vs exact {}", r.objective, e.objective);
        }
    }

    #[test]
    fn hilbert_is_feasible_and_dominated(a in cloud_strategy(6, 2), b in cloud_strategy(6, 2)) {
        let cfg = WassersteinConfig::default();
        let h = hilbert_plan(&a, &b, &cfg).unwrap();
        plan_is_feasible(&h);
        let e = exact_plan(&a, &b, &cfg).unwrap();
        prop_assert!(h.objective >= e.objective - 1e-12,
            "hilbert {} below exact {}", h.objective, e.objective);
    }

    #[test]
    fn identity_of_indiscernibles(values in proptest::collection::vec(-3i8..=3i8, 8), shuffle_seed in any::<u32>()) {
        // Integer-valued atoms: distinct multisets are well separated, so
        // distance zero is equivalent to multiset equality.
        let t = 4;
        let n = 2;
        let a = cloud_from(values.iter().map(|&v| v as f64).collect(), t, n);
        // A permuted copy is the same multiset.
        let mut rng = slim_core::seeding::rng(shuffle_seed as u64);
        use rand::Rng;
        let mut order: Vec<usize> = (0..t).collect();
        for i in (1..t).rev() {
            let j = (rng.random::<u64>() as usize) % (i + 1);
            order.swap(i, j);
        }
        let mut shuffled: Vec<f64> = Vec::with_capacity(t * n);
        for &r in &order {
            for c in 0..n {
                shuffled.push(values[r * n + c] as f64);
            }
        }
        let b = cloud_from(shuffled, t, n);
        let cfg = WassersteinConfig::default();
        let d = wasserstein_distance(&a, &b, &cfg).unwrap();
        prop_assert!(d == 0.0, "same multiset must have zero distance, got {d}");

        // Perturb one atom into a different multiset: distance strictly positive.
        let mut other = values.iter().map(|&v| v as f64).collect::<Vec<f64>>();
        other[0] += 7.0;
        let c = cloud_from(other, t, n);
        let d2 = wasserstein_distance(&a, &c, &cfg).unwrap();
        prop_assert!(d2 > 0.0);
    }
}

#[test]
fn permutation_optimum_on_all_sizes_up_to_seven() {
    // The exact optimum over couplings with uniform marginals is attained at
    // a permutation: feasibility plus oracle equality pins this down.
    use rand::Rng;
    let mut rng = slim_core::seeding::rng(2024);
    for t in 1..=7usize {
        let n = 2;
        let vals_a: Vec<f64> = (0..t * n).map(|_| rng.random::<f64>() * 4.0).collect();
        let vals_b: Vec<f64> = (0..t * n).map(|_| rng.random::<f64>() * 4.0).collect();
        let a = cloud_from(vals_a, t, n);
        let b = cloud_from(vals_b, t, n);
        let cfg = WassersteinConfig::default();
        let plan = exact_plan(&a, &b, &cfg).unwrap();
        let oracle_obj = oracle::brute_force_transport_objective(&a, &b, 2.0);
        assert!((plan.objective - oracle_obj).abs() < 1e-12);
    }
}

#[test]
fn single_draw_collapses_to_euclidean_distance() {
    let a = cloud_from(vec![0.0, 0.0, 1.0], 1, 3);
    let b = cloud_from(vec![2.0, 3.0, 7.0], 1, 3);
    let cfg = WassersteinConfig::default();
    let d = wasserstein_distance(&a, &b, &cfg).unwrap();
    let expected = (4.0f64 + 9.0 + 36.0).sqrt();
    assert!((d - expected).abs() < 1e-12);
}
