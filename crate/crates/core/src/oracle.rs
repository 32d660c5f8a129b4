//! Independent reference implementations used by the test suites: brute
//! force enumerations and closed forms kept deliberately separate from the
//! production code paths they check. Enabled by the `oracle` feature; not
//! part of the supported API.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::ensemble::{Neighborhood, ParameterDraws, PredictionEnsemble};
use crate::ot::{self, EmpiricalCloud, TransportPlan, WassersteinConfig};

/// Visit every permutation of `0..n` (Heap's algorithm).
pub fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    fn heap(p: &mut Vec<usize>, size: usize, f: &mut impl FnMut(&[usize])) {
        if size == 1 {
            f(p);
            return;
        }
        for i in 0..size {
            heap(p, size - 1, f);
            if size % 2 == 0 {
                p.swap(i, size - 1);
            } else {
                p.swap(0, size - 1);
            }
        }
    }
    let mut p: Vec<usize> = (0..n).collect();
    heap(&mut p, n, &mut f);
}

/// Minimum transport objective over all permutation couplings:
/// `min_σ (1/T) Σ_t ‖a_t − b_σ(t)‖₂ᵖ`.
pub fn brute_force_transport_objective(a: &EmpiricalCloud, b: &EmpiricalCloud, p: f64) -> f64 {
    let t = a.len();
    let dim = a.dim();
    let cost = |i: usize, j: usize| -> f64 {
        let mut ss = 0.0;
        for d in 0..dim {
            let diff = a.atoms()[[i, d]] - b.atoms()[[j, d]];
            ss += diff * diff;
        }
        if p == 2.0 {
            ss
        } else {
            ss.powf(0.5 * p)
        }
    };
    let mut best = f64::INFINITY;
    for_each_permutation(t, |perm| {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost(i, j)).sum();
        if total < best {
            best = total;
        }
    });
    best / t as f64
}

/// A random feasible coupling with uniform marginals: a convex combination
/// of random permutation matrices.
pub fn random_feasible_plan(t: usize, components: usize, rng: &mut impl Rng) -> TransportPlan {
    let mut gamma = Array2::<f64>::zeros((t, t));
    let mut weights = Vec::with_capacity(components);
    let mut total = 0.0;
    for _ in 0..components {
        let w = rng.random::<f64>() + 0.05;
        weights.push(w);
        total += w;
    }
    for w in &weights {
        let mut perm: Vec<usize> = (0..t).collect();
        for i in (1..t).rev() {
            let j = (rng.random::<u64>() as usize) % (i + 1);
            perm.swap(i, j);
        }
        let mass = w / total / t as f64;
        for (row, &col) in perm.iter().enumerate() {
            gamma[[row, col]] += mass;
        }
    }
    TransportPlan {
        gamma,
        objective: f64::NAN,
    }
}

/// Direct double-sum evaluation of the kernel-weighted transport loss of a
/// masked model at a fixed coupling:
/// `(1/N) Σ_i w_i Σ_{t,t′} (μ_i^{(t)} − ν_i^{(t′)}(α))² γ_{t,t′}`.
pub fn direct_masked_loss(
    nb: &Neighborhood,
    draws: &ParameterDraws,
    mu: &PredictionEnsemble,
    alpha: &[bool],
    gamma: &ArrayView2<'_, f64>,
) -> f64 {
    let n = nb.len();
    let k = draws.k();
    let t = draws.t();
    let mut total = 0.0;
    for i in 0..n {
        let wi = nb.weights[i];
        for ti in 0..t {
            for tp in 0..t {
                let g = gamma[[ti, tp]];
                if g == 0.0 {
                    continue;
                }
                let mut nu = 0.0;
                for j in 0..k {
                    if alpha[j] {
                        nu += nb.points[[i, j]] * draws.theta[[j, tp]];
                    }
                }
                let d = mu.values[[i, ti]] - nu;
                total += wi * d * d * g;
            }
        }
    }
    total / n as f64
}

/// Exhaustive mask search: every `α ∈ {0,1}ᵏ` with `Σα ≤ budget` (the
/// intercept row, when marked, stays on), scored by the exact transport
/// distance of its masked predictions. Returns the best mask and distance.
pub fn exhaustive_mask_minimum(
    nb: &Neighborhood,
    draws: &ParameterDraws,
    mu: &PredictionEnsemble,
    budget: usize,
) -> (Vec<bool>, f64) {
    let k = draws.k();
    let start = usize::from(draws.intercept_row);
    let free = k - start;
    let cfg = WassersteinConfig::default();
    let mu_cloud = mu.to_cloud();
    let mut best = (vec![false; k], f64::INFINITY);
    for bits in 0..(1usize << free) {
        if (bits.count_ones() as usize) > budget {
            continue;
        }
        let mut alpha = vec![false; k];
        if draws.intercept_row {
            alpha[0] = true;
        }
        for j in 0..free {
            alpha[start + j] = bits >> j & 1 == 1;
        }
        let masked = draws.masked(&alpha);
        let nu =
            crate::ensemble::predict_linear(&nb.points.view(), &masked).expect("validated shapes");
        let d =
            ot::wasserstein_distance(&mu_cloud, &nu.to_cloud(), &cfg).expect("finite ensembles");
        if d < best.1 {
            best = (alpha, d);
        }
    }
    best
}

/// Gaussian elimination with partial pivoting; smallish systems only.
fn solve_dense(mut a: Array2<f64>, mut b: Array1<f64>) -> Array1<f64> {
    let n = a.nrows();
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a[[r, col]].abs() > a[[piv, col]].abs() {
                piv = r;
            }
        }
        if a[[piv, col]].abs() < 1e-14 {
            continue;
        }
        if piv != col {
            for c in 0..n {
                let tmp = a[[col, c]];
                a[[col, c]] = a[[piv, c]];
                a[[piv, c]] = tmp;
            }
            b.swap(col, piv);
        }
        for r in (col + 1)..n {
            let factor = a[[r, col]] / a[[col, col]];
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[[r, c]] -= factor * a[[col, c]];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = Array1::<f64>::zeros(n);
    for r in (0..n).rev() {
        if a[[r, r]].abs() < 1e-14 {
            x[r] = 0.0;
            continue;
        }
        let mut s = b[r];
        for c in (r + 1)..n {
            s -= a[[r, c]] * x[c];
        }
        x[r] = s / a[[r, r]];
    }
    x
}

/// Independently coded subset enumeration: for each size, scan all bitmasks
/// and score via its own rule application (ridge-free normal equations by
/// Gaussian elimination for the refit rule). Ties keep the earlier bitmask,
/// which scans lexicographically over sorted index lists.
pub fn second_subset_enumeration(
    nb: &Neighborhood,
    draws: &ParameterDraws,
    mu: &PredictionEnsemble,
    adaptive: bool,
    size: usize,
) -> (Vec<usize>, f64) {
    let k = draws.k();
    let t = draws.t();
    let n = nb.len();
    let cfg = WassersteinConfig::default();
    let mu_cloud = mu.to_cloud();
    let mut best: Option<(Vec<usize>, f64)> = None;

    let mut subsets: Vec<Vec<usize>> = Vec::new();
    for bits in 0..(1usize << k) {
        if bits.count_ones() as usize == size {
            subsets.push((0..k).filter(|j| bits >> j & 1 == 1).collect());
        }
    }
    subsets.sort();

    for active in subsets {
        let mut beta = Array2::<f64>::zeros((k, t));
        if adaptive {
            let m = active.len();
            let mut gram = Array2::<f64>::zeros((m, m));
            for (a, &ja) in active.iter().enumerate() {
                for (b, &jb) in active.iter().enumerate() {
                    let mut s = 0.0;
                    for i in 0..n {
                        s += nb.weights[i] * nb.points[[i, ja]] * nb.points[[i, jb]];
                    }
                    gram[[a, b]] = s;
                }
            }
            for tcol in 0..t {
                let mut rhs = Array1::<f64>::zeros(m);
                for (a, &ja) in active.iter().enumerate() {
                    let mut s = 0.0;
                    for i in 0..n {
                        s += nb.weights[i] * nb.points[[i, ja]] * mu.values[[i, tcol]];
                    }
                    rhs[a] = s;
                }
                let sol = solve_dense(gram.clone(), rhs);
                for (a, &ja) in active.iter().enumerate() {
                    beta[[ja, tcol]] = sol[a];
                }
            }
        } else {
            for &j in &active {
                beta.row_mut(j).assign(&draws.theta.row(j));
            }
        }
        let nu_values = nb.points.dot(&beta);
        let nu = PredictionEnsemble::new(nu_values, "oracle").expect("finite");
        let d = ot::wasserstein_distance(&mu_cloud, &nu.to_cloud(), &cfg).expect("finite");
        match &best {
            Some((_, bd)) if d >= *bd => {}
            _ => best = Some((active, d)),
        }
    }
    best.expect("at least one subset")
}

/// Proximal-gradient (ISTA) reference for single-response lasso on the
/// objective `Σ_i w_i (y_i − x_iᵀβ)² + λ‖β‖₁`.
pub fn ista_lasso_single(
    x: &ArrayView2<'_, f64>,
    y: &ArrayView1<'_, f64>,
    w: Option<&ArrayView1<'_, f64>>,
    lambda: f64,
    iterations: usize,
) -> Array1<f64> {
    let (n, k) = (x.nrows(), x.ncols());
    let weight = |i: usize| w.map_or(1.0, |w| w[i]);
    // Lipschitz bound for the gradient of the squared loss.
    let mut lip = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..k {
            row += x[[i, j]] * x[[i, j]];
        }
        lip += 2.0 * weight(i) * row;
    }
    let step = 1.0 / lip.max(1e-12);
    let mut beta = Array1::<f64>::zeros(k);
    for _ in 0..iterations {
        let mut grad = Array1::<f64>::zeros(k);
        for i in 0..n {
            let mut fit = 0.0;
            for j in 0..k {
                fit += x[[i, j]] * beta[j];
            }
            let r = y[i] - fit;
            for j in 0..k {
                grad[j] += -2.0 * weight(i) * x[[i, j]] * r;
            }
        }
        for j in 0..k {
            let v = beta[j] - step * grad[j];
            let thr = step * lambda;
            beta[j] = if v > thr {
                v - thr
            } else if v < -thr {
                v + thr
            } else {
                0.0
            };
        }
    }
    beta
}

/// Exact minimizer of `Σ_i w_i |y_i − x_i b|` for scalar designs: the
/// weighted median of the ratios `y_i/x_i` with weights `w_i|x_i|`, found by
/// scanning the breakpoints.
pub fn weighted_median_ratio(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let mut pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .zip(w)
        .filter(|((x, _), _)| **x != 0.0)
        .map(|((x, y), w)| (y / x, w * x.abs()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let objective = |b: f64| -> f64 {
        x.iter()
            .zip(y)
            .zip(w)
            .map(|((x, y), w)| w * (y - x * b).abs())
            .sum()
    };
    let mut best = pts[0].0;
    let mut best_val = objective(best);
    for &(b, _) in &pts[1..] {
        let v = objective(b);
        if v < best_val {
            best_val = v;
            best = b;
        }
    }
    best
}

/// Exact minimizer of `max_i |y_i − x_i b|` for scalar designs by
/// enumerating the pairwise active-constraint candidates.
pub fn minimax_scalar_fit(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let objective = |b: f64| -> f64 {
        x.iter()
            .zip(y)
            .map(|(x, y)| (y - x * b).abs())
            .fold(0.0f64, f64::max)
    };
    let mut candidates = Vec::new();
    for i in 0..n {
        if x[i] != 0.0 {
            candidates.push(y[i] / x[i]);
        }
        for j in (i + 1)..n {
            let d_minus = x[i] - x[j];
            if d_minus.abs() > 1e-14 {
                candidates.push((y[i] - y[j]) / d_minus);
            }
            let d_plus = x[i] + x[j];
            if d_plus.abs() > 1e-14 {
                candidates.push((y[i] + y[j]) / d_plus);
            }
        }
    }
    candidates
        .into_iter()
        .min_by(|&a, &b| objective(a).total_cmp(&objective(b)))
        .expect("at least one candidate")
}

/// Golden-section minimization of a unimodal scalar function.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo).abs() > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}
