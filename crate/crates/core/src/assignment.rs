//! Optimal one-to-one assignment (Hungarian method with potentials, O(n³)).

/// Solves the minimum-cost assignment for a `rows × cols` cost matrix given in
/// row-major order. Returns, for each row, the assigned column (`None` when
/// `rows > cols` leaves the row unassigned).
pub fn min_cost_assignment(costs: &[f64], rows: usize, cols: usize) -> Vec<Option<usize>> {
    assert_eq!(costs.len(), rows * cols, "cost matrix has wrong size");
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    // the algorithm below needs rows <= cols; transpose otherwise
    if rows > cols {
        let transposed: Vec<f64> = (0..cols)
            .flat_map(|c| (0..rows).map(move |r| (r, c)))
            .map(|(r, c)| costs[r * cols + c])
            .collect();
        let by_col = min_cost_assignment(&transposed, cols, rows);
        let mut out = vec![None; rows];
        for (c, r) in by_col.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        return out;
    }

    let n = rows;
    let m = cols;
    let cost = |i: usize, j: usize| costs[(i - 1) * m + (j - 1)];
    // 1-based arrays, index 0 is the virtual start column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
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

    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// Maximum-weight matching restricted to pairs whose weight is at least `threshold`.
/// Returns `(row, col)` pairs sorted by row.
pub fn max_weight_matching(weights: &[f64], rows: usize, cols: usize, threshold: f64) -> Vec<(usize, usize)> {
    let costs: Vec<f64> = weights
        .iter()
        .map(|&w| if w >= threshold { -w } else { 0.0 })
        .collect();
    min_cost_assignment(&costs, rows, cols)
        .into_iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| (r, c)))
        .filter(|&(r, c)| weights[r * cols + c] >= threshold)
        .collect()
}
