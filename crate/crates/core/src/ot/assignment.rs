//! Minimum-cost linear assignment by shortest augmenting paths.
//!
//! With equal uniform weights the optimal transport problem over
//! `Γ_{T,T}` reduces to an assignment on the `T`×`T` cost matrix, solved
//! here with the dual-updating successive-shortest-path scheme in `O(T³)`.

use ndarray::ArrayView2;

const NONE: usize = usize::MAX;

/// Returns `col4row`: the column assigned to each row of a square, finite
/// cost matrix. Deterministic: rows are processed in ascending order and
/// equal-cost sinks resolve toward unassigned columns scanned in ascending
/// column order, so a constant matrix yields the identity assignment.
pub(crate) fn min_cost_assignment(cost: &ArrayView2<'_, f64>) -> Vec<usize> {
    let n = cost.nrows();
    debug_assert_eq!(n, cost.ncols());
    if n == 0 {
        return Vec::new();
    }

    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];
    let mut col4row = vec![NONE; n];
    let mut row4col = vec![NONE; n];

    let mut shortest = vec![f64::INFINITY; n];
    let mut path = vec![NONE; n];
    let mut visited_row = vec![false; n];
    let mut visited_col = vec![false; n];
    let mut remaining: Vec<usize> = Vec::with_capacity(n);

    for cur_row in 0..n {
        shortest.fill(f64::INFINITY);
        path.fill(NONE);
        visited_row.fill(false);
        visited_col.fill(false);
        remaining.clear();
        // Reverse fill + swap_remove keeps the scan order ascending, which
        // pins down tie-breaking.
        for j in (0..n).rev() {
            remaining.push(j);
        }

        let mut min_val = 0.0f64;
        let mut i = cur_row;
        let mut sink = NONE;
        while sink == NONE {
            visited_row[i] = true;
            let mut lowest = f64::INFINITY;
            let mut index = NONE;
            for (it, &j) in remaining.iter().enumerate() {
                let r = min_val + cost[[i, j]] - u[i] - v[j];
                if r < shortest[j] {
                    shortest[j] = r;
                    path[j] = i;
                }
                if shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == NONE) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            let j = remaining[index];
            if row4col[j] == NONE {
                sink = j;
            } else {
                i = row4col[j];
            }
            visited_col[j] = true;
            remaining.swap_remove(index);
        }

        u[cur_row] += min_val;
        for r in 0..n {
            if visited_row[r] && r != cur_row {
                u[r] += min_val - shortest[col4row[r]];
            }
        }
        for j in 0..n {
            if visited_col[j] {
                v[j] -= min_val - shortest[j];
            }
        }

        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = r;
            std::mem::swap(&mut col4row[r], &mut j);
            if r == cur_row {
                break;
            }
        }
    }
    col4row
}
