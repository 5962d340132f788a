//! Min-cost perfect matching on a square cost matrix (Hungarian algorithm with
//! row/column potentials, O(n³)).

use serde::{Deserialize, Serialize};

use super::OptimizeError;

/// Matrices up to this size get lexicographic tie-breaking; larger ones keep
/// the plain algorithm's (still deterministic) choice.
const TIE_BREAK_LIMIT: usize = 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `row_to_col[i]` is the column matched to row `i`.
    pub row_to_col: Vec<usize>,
    pub total: f64,
}

/// Minimum-cost perfect matching of rows (workers) to columns (points).
///
/// Among optimal matchings, the one whose column sequence is lexicographically
/// smallest in row order is returned: row 0 takes the lowest column it can
/// while staying optimal, then row 1, and so on.
pub fn min_cost_matching(cost: &[Vec<f64>]) -> Result<Matching, OptimizeError> {
    let n = cost.len();
    if cost.iter().any(|row| row.len() != n) {
        return Err(OptimizeError::NonSquare { rows: n, cols: cost.iter().map(Vec::len).max().unwrap_or(0) });
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(OptimizeError::NonFiniteCost);
    }
    if n == 0 {
        return Ok(Matching { row_to_col: vec![], total: 0.0 });
    }
    let base = hungarian(cost);
    let row_to_col = if n <= TIE_BREAK_LIMIT { lexicographic(cost, &base) } else { base };
    let total = row_to_col.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok(Matching { row_to_col, total })
}

fn total_of(cost: &[Vec<f64>], rows: &[usize], cols: &[usize], m: &[usize]) -> f64 {
    m.iter().enumerate().map(|(r, &c)| cost[rows[r]][cols[c]]).sum()
}

fn lexicographic(cost: &[Vec<f64>], optimal: &[usize]) -> Vec<usize> {
    let n = cost.len();
    let all: Vec<usize> = (0..n).collect();
    let best = total_of(cost, &all, &all, optimal);
    let tol = 1e-12 * (1.0 + best.abs());
    let mut fixed_cost = 0.0;
    let mut used = vec![false; n];
    let mut out = Vec::with_capacity(n);
    for r in 0..n {
        let rows: Vec<usize> = (r + 1..n).collect();
        let mut chosen = None;
        for c in (0..n).filter(|&c| !used[c]) {
            let cols: Vec<usize> = (0..n).filter(|&j| !used[j] && j != c).collect();
            let sub: Vec<Vec<f64>> = rows.iter().map(|&i| cols.iter().map(|&j| cost[i][j]).collect()).collect();
            let rest = if sub.is_empty() { 0.0 } else { total_of(cost, &rows, &cols, &hungarian(&sub)) };
            if fixed_cost + cost[r][c] + rest <= best + tol {
                chosen = Some(c);
                break;
            }
        }
        // The optimal column always qualifies; fall back to it on rounding trouble.
        let c = chosen.unwrap_or(optimal[r]);
        if used[c] {
            return optimal.to_vec();
        }
        used[c] = true;
        fixed_cost += cost[r][c];
        out.push(c);
    }
    out
}

/// Shortest-augmenting-path Hungarian algorithm. Returns row → column.
fn hungarian(a: &[Vec<f64>]) -> Vec<usize> {
    let n = a.len();
    let inf = f64::INFINITY;
    // 1-based internally; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
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
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}
