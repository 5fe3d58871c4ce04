//! Optimal one-to-one alignment of text blocks.
//!
//! The assignment maximizes the summed Dice score over all pairs. Among
//! assignments with equal objective, the lexicographically smallest one
//! (compare the gen index chosen for ref 0, then ref 1, ...) wins, so results
//! never depend on solver internals.

use serde::{Deserialize, Serialize};

use super::dice::dice;
use crate::render::Block;

/// Default minimum Dice score for a pair to survive.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.5;

const TIGHT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub ref_index: usize,
    pub gen_index: usize,
    pub dice: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockMatching {
    /// Pairs sorted by `ref_index`.
    pub pairs: Vec<MatchedPair>,
    pub unmatched_ref: Vec<usize>,
    pub unmatched_gen: Vec<usize>,
    /// Total Dice of the optimal assignment before threshold filtering.
    pub objective: f64,
}

/// Align blocks by text similarity. Pairs scoring below `threshold` after
/// the assignment is solved are dropped and both sides become unmatched.
pub fn match_blocks(reference: &[Block], generated: &[Block], threshold: f64) -> BlockMatching {
    let r: Vec<&str> = reference.iter().map(|b| b.text.as_str()).collect();
    let g: Vec<&str> = generated.iter().map(|b| b.text.as_str()).collect();
    match_texts(&r, &g, threshold)
}

pub fn match_texts(reference: &[&str], generated: &[&str], threshold: f64) -> BlockMatching {
    let weights: Vec<Vec<f64>> = reference
        .iter()
        .map(|a| generated.iter().map(|b| dice(a, b)).collect())
        .collect();
    let assignment = max_weight_assignment(&weights, generated.len());

    let mut pairs = Vec::new();
    let mut objective = 0.0;
    let mut gen_used = vec![false; generated.len()];
    let mut unmatched_ref = Vec::new();
    for (ri, slot) in assignment.iter().enumerate() {
        match *slot {
            Some(gi) => {
                let d = weights[ri][gi];
                objective += d;
                if d >= threshold {
                    gen_used[gi] = true;
                    pairs.push(MatchedPair {
                        ref_index: ri,
                        gen_index: gi,
                        dice: d,
                    });
                } else {
                    unmatched_ref.push(ri);
                }
            }
            None => unmatched_ref.push(ri),
        }
    }
    let unmatched_gen = gen_used
        .iter()
        .enumerate()
        .filter_map(|(i, used)| (!used).then_some(i))
        .collect();
    BlockMatching {
        pairs,
        unmatched_ref,
        unmatched_gen,
        objective,
    }
}

/// Maximum-weight assignment of rows to columns on a (possibly rectangular)
/// weight matrix with `cols` columns. Returns the chosen column per row, or
/// `None` when the row is left unassigned because there are more rows than
/// columns.
///
/// The matrix is padded to square with zero-weight dummies. The Hungarian
/// method yields an optimal dual; every optimal assignment is a perfect
/// matching on the edges that are tight under that dual, so the
/// lexicographically smallest one is found greedily on the tight graph.
pub fn max_weight_assignment(weights: &[Vec<f64>], cols: usize) -> Vec<Option<usize>> {
    let rows = weights.len();
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            -weights[i][j]
        } else {
            0.0
        }
    };

    let (u, v, mut row_to_col) = hungarian_min(n, &cost);
    let tight = |i: usize, j: usize| (cost(i, j) - u[i] - v[j]).abs() <= TIGHT_EPS;

    let mut col_to_row = vec![0usize; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }
    let mut row_fixed = vec![false; n];
    let mut col_fixed = vec![false; n];

    for i in 0..n {
        for j in 0..n {
            if col_fixed[j] || !tight(i, j) {
                continue;
            }
            if row_to_col[i] == j {
                break;
            }
            // Give j to i; j's old row must reach i's old column.
            let freed = row_to_col[i];
            let displaced = col_to_row[j];
            let mut visited = vec![false; n];
            visited[j] = true;
            row_fixed[i] = true;
            let mut path = Vec::new();
            let ok = augment(
                displaced,
                freed,
                &tight,
                &row_fixed,
                &col_fixed,
                &col_to_row,
                &mut visited,
                &mut path,
            );
            row_fixed[i] = false;
            if ok {
                // path holds (row, new col) hops from `displaced` to `freed`.
                for &(r, c) in &path {
                    row_to_col[r] = c;
                    col_to_row[c] = r;
                }
                row_to_col[i] = j;
                col_to_row[j] = i;
                break;
            }
        }
        row_fixed[i] = true;
        col_fixed[row_to_col[i]] = true;
    }

    (0..rows)
        .map(|i| {
            let j = row_to_col[i];
            (j < cols).then_some(j)
        })
        .collect()
}

/// Alternating-path search: can `row` move to some tight column such that the
/// chain of displaced rows ends on `target` (the only free column)?
#[allow(clippy::too_many_arguments)]
fn augment(
    row: usize,
    target: usize,
    tight: &dyn Fn(usize, usize) -> bool,
    row_fixed: &[bool],
    col_fixed: &[bool],
    col_to_row: &[usize],
    visited: &mut [bool],
    path: &mut Vec<(usize, usize)>,
) -> bool {
    let n = col_to_row.len();
    for c in 0..n {
        if visited[c] || col_fixed[c] || !tight(row, c) {
            continue;
        }
        visited[c] = true;
        if c == target {
            path.push((row, c));
            return true;
        }
        let next = col_to_row[c];
        if row_fixed[next] {
            continue;
        }
        if augment(next, target, tight, row_fixed, col_fixed, col_to_row, visited, path) {
            path.push((row, c));
            return true;
        }
    }
    false
}

/// O(n³) Hungarian method on a square cost matrix (minimization). Returns the
/// row potentials, column potentials and the row→column assignment.
fn hungarian_min(n: usize, cost: &dyn Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    // 1-based internally; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
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
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    (u[1..].to_vec(), v[1..].to_vec(), row_to_col)
}
