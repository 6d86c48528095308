//! Minimum-cost bipartite assignment.
//!
//! Rectangular matrices are padded to square with unit cost (the cost of a
//! fully disjoint box pair), so exactly `min(rows, cols)` real pairs come
//! back. Among equal-cost optima the lexicographically smallest assignment
//! by `(col, row)` is returned, which pins down reports when many pairs tie
//! at cost 1.

/// Cost charged for pairing with a padding row/column.
pub const PAD_COST: f64 = 1.0;

/// Tolerance when deciding whether a candidate assignment still achieves the
/// optimal total during tie refinement.
const TIE_TOL: f64 = 1e-9;

/// Shortest-augmenting-path assignment on an `n x n` cost function.
/// Returns `col -> row`.
fn hungarian_square(cost: &dyn Fn(usize, usize) -> f64, n: usize) -> Vec<usize> {
    // 1-based potentials; p[j] is the row matched to column j, 0 = none.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    (1..=n).map(|j| p[j] - 1).collect()
}

/// Total of a full square assignment, summed in column order so equal
/// assignments always produce bit-identical totals.
fn assignment_total(cost: &dyn Fn(usize, usize) -> f64, col_to_row: &[usize]) -> f64 {
    col_to_row
        .iter()
        .enumerate()
        .map(|(j, &i)| cost(i, j))
        .sum()
}

/// Optimal completion of a partial assignment: `pins` maps some columns to
/// rows; the free remainder is solved optimally. Returns the full
/// `col -> row` map.
fn solve_with_pins(
    cost: &dyn Fn(usize, usize) -> f64,
    n: usize,
    pins: &[(usize, usize)],
) -> Vec<usize> {
    let mut row_taken = vec![false; n];
    let mut col_taken = vec![false; n];
    for &(r, c) in pins {
        row_taken[r] = true;
        col_taken[c] = true;
    }
    let free_rows: Vec<usize> = (0..n).filter(|&r| !row_taken[r]).collect();
    let free_cols: Vec<usize> = (0..n).filter(|&c| !col_taken[c]).collect();

    let mut full = vec![usize::MAX; n];
    for &(r, c) in pins {
        full[c] = r;
    }
    if !free_cols.is_empty() {
        let sub = |fi: usize, fj: usize| cost(free_rows[fi], free_cols[fj]);
        let sub_assignment = hungarian_square(&sub, free_cols.len());
        for (fj, &fi) in sub_assignment.iter().enumerate() {
            full[free_cols[fj]] = free_rows[fi];
        }
    }
    full
}

/// One-to-one minimum-cost matching over a rectangular matrix indexed
/// `[row][col]`. Entries must be finite and nonnegative. Returns the
/// `min(rows, cols)` real `(row, col)` pairs sorted by column.
pub fn min_cost_matching(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    assert!(
        cost.iter().all(|r| r.len() == cols),
        "cost matrix must be rectangular"
    );
    if cols == 0 {
        return Vec::new();
    }
    debug_assert!(cost
        .iter()
        .all(|r| r.iter().all(|&v| v.is_finite() && v >= 0.0)));

    let n = rows.max(cols);
    let padded = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            cost[i][j]
        } else {
            PAD_COST
        }
    };

    let base = hungarian_square(&padded, n);
    let base_total = assignment_total(&padded, &base);

    // Lexicographic refinement: for each real column in order, pin the
    // smallest real row that keeps the assignment optimal.
    let mut pins: Vec<(usize, usize)> = Vec::new();
    for c in 0..cols {
        for r in 0..rows {
            if pins.iter().any(|&(pr, _)| pr == r) {
                continue;
            }
            let mut attempt = pins.clone();
            attempt.push((r, c));
            let candidate = solve_with_pins(&padded, n, &attempt);
            if assignment_total(&padded, &candidate) <= base_total + TIE_TOL {
                pins = attempt;
                break;
            }
        }
    }
    let refined = solve_with_pins(&padded, n, &pins);
    let chosen = if assignment_total(&padded, &refined) > base_total {
        base
    } else {
        refined
    };

    let mut out: Vec<(usize, usize)> = Vec::new();
    for (c, &r) in chosen.iter().enumerate() {
        if r < rows && c < cols {
            out.push((r, c));
        }
    }
    out.sort_by_key(|&(_, c)| c);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive minimum over injections of the smaller side into the
    /// larger. Only real pairs contribute (the padding cost is a constant
    /// for a fixed shape) and every candidate is summed in ascending column
    /// order, so totals of equal assignments are bit-identical.
    pub(crate) fn brute_force_min_total(cost: &[Vec<f64>]) -> f64 {
        let rows = cost.len();
        let cols = cost[0].len();
        let m = rows.min(cols);
        let mut best = f64::INFINITY;
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(m);
        let mut used = vec![false; rows.max(cols)];
        inject(cost, rows, cols, 0, &mut used, &mut pairs, &mut best);
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn inject(
        cost: &[Vec<f64>],
        rows: usize,
        cols: usize,
        k: usize,
        used: &mut Vec<bool>,
        pairs: &mut Vec<(usize, usize)>,
        best: &mut f64,
    ) {
        let m = rows.min(cols);
        if k == m {
            let total = matching_total(cost, pairs);
            if total < *best {
                *best = total;
            }
            return;
        }
        // The smaller side index k maps to every unused larger-side index.
        let larger = rows.max(cols);
        for x in 0..larger {
            if used[x] {
                continue;
            }
            used[x] = true;
            let pair = if rows <= cols { (k, x) } else { (x, k) };
            pairs.push(pair);
            inject(cost, rows, cols, k + 1, used, pairs, best);
            pairs.pop();
            used[x] = false;
        }
    }

    fn matching_total(cost: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
        let mut sorted: Vec<(usize, usize)> = pairs.to_vec();
        sorted.sort_by_key(|&(_, c)| c);
        sorted.iter().map(|&(r, c)| cost[r][c]).sum()
    }

    #[test]
    fn diagonal_case() {
        let cost = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(min_cost_matching(&cost), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn single_entry() {
        assert_eq!(min_cost_matching(&[vec![0.3]]), vec![(0, 0)]);
        assert_eq!(min_cost_matching(&[vec![1.0]]), vec![(0, 0)]);
    }

    #[test]
    fn empty_matrix() {
        assert!(min_cost_matching(&[]).is_empty());
        let zero_cols: Vec<Vec<f64>> = vec![vec![], vec![]];
        assert!(min_cost_matching(&zero_cols).is_empty());
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let flat = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        assert_eq!(min_cost_matching(&flat), vec![(0, 0), (1, 1)]);

        // One prediction, two equally bad ground truths: prefer column 0.
        let wide = vec![vec![0.5, 0.5]];
        assert_eq!(min_cost_matching(&wide), vec![(0, 0)]);

        // Two predictions, one ground truth: both cost the same, prefer row 0.
        let tall = vec![vec![0.5], vec![0.5]];
        assert_eq!(min_cost_matching(&tall), vec![(0, 0)]);
    }

    #[test]
    fn rectangular_pair_counts() {
        let cost = vec![vec![0.2, 0.9, 0.9], vec![0.9, 0.1, 0.9]];
        let pairs = min_cost_matching(&cost);
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);

        let tall = vec![vec![0.9], vec![0.05], vec![0.9]];
        assert_eq!(min_cost_matching(&tall), vec![(1, 0)]);
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..300 {
            let rows = rng.random_range(1..=5usize);
            let cols = rng.random_range(1..=5usize);
            let cost: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..cols).map(|_| rng.random::<f64>()).collect())
                .collect();
            let pairs = min_cost_matching(&cost);
            assert_eq!(pairs.len(), rows.min(cols));
            let got = matching_total(&cost, &pairs);
            let want = brute_force_min_total(&cost);
            assert_eq!(got.to_bits(), want.to_bits(), "trial {trial}: {got} vs {want}");
        }
    }

    #[test]
    fn matches_brute_force_with_many_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let rows = rng.random_range(1..=4usize);
            let cols = rng.random_range(1..=4usize);
            // Costs drawn from a tiny set force frequent ties.
            let choices = [0.0, 0.5, 1.0];
            let cost: Vec<Vec<f64>> = (0..rows)
                .map(|_| {
                    (0..cols)
                        .map(|_| choices[rng.random_range(0..3)])
                        .collect()
                })
                .collect();
            let pairs = min_cost_matching(&cost);
            let got = matching_total(&cost, &pairs);
            let want = brute_force_min_total(&cost);
            assert_eq!(got.to_bits(), want.to_bits());
            // Lexicographic means re-running is reproducible.
            assert_eq!(pairs, min_cost_matching(&cost));
        }
    }
}
