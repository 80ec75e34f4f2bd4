//! Dense linear assignment.
//!
//! Shortest augmenting path Hungarian method (`O(n³)`), followed by a pass
//! that picks the lexicographically smallest assignment among the optimal
//! ones, so equal-cost alternatives always resolve the same way.

use alloc::vec;
use alloc::vec::Vec;
use alloc::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum AssignmentError {
    #[error("cost matrix must be square, got {rows}×{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("cost matrix has a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// Row-major square cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, AssignmentError> {
        if rows != cols || data.len() != rows * cols {
            return Err(AssignmentError::NonSquare { rows, cols });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(AssignmentError::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self { n: rows, data })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, AssignmentError> {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self::new(n, n, data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AssignmentError> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(AssignmentError::NonSquare { rows: n, cols: r.len() });
        }
        Self::new(n, n, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// `Σ_i cost[i, perm[i]]`.
    pub fn total(&self, perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(i, &j)| self.get(i, j)).sum()
    }
}

/// Permutation `perm` (row `i` → column `perm[i]`) minimizing
/// `Σ_i cost[i, perm[i]]`. Among optimal permutations the lexicographically
/// smallest is returned.
pub fn solve_assignment(cost: &CostMatrix) -> Vec<usize> {
    let n = cost.n;
    if n == 0 {
        return Vec::new();
    }
    let (row_to_col, u, v) = hungarian(cost);

    let scale = cost.data.iter().fold(1.0f64, |m, &c| m.max(c.abs()));
    let eps = 1e-9 * scale * n as f64;
    let tight = |i: usize, j: usize| cost.get(i, j) - u[i] - v[j] <= eps;
    lexicographic_min(n, row_to_col, tight)
}

/// Returns the assignment plus row and column potentials with
/// `cost[i,j] - u[i] - v[j] >= 0` and equality on assigned pairs.
fn hungarian(cost: &CostMatrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.n;
    // 1-based internally; index 0 is the virtual root column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|m| *m = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
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
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Lexicographically smallest perfect matching of the tight-edge graph,
/// starting from the perfect matching `row_to_col`.
fn lexicographic_min(n: usize, mut row_to_col: Vec<usize>, tight: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let mut col_to_row = vec![0usize; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }
    let adj: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| tight(i, j)).collect()).collect();

    let mut prev_col = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    for i in 0..n {
        let current = row_to_col[i];
        for &j in adj[i].iter().take_while(|&&j| j < current) {
            let owner = col_to_row[j];
            if owner < i {
                continue;
            }
            // Re-seat `owner` so that column `current` absorbs the chain,
            // using only rows after `i`.
            seen.iter_mut().for_each(|s| *s = false);
            queue.clear();
            seen[j] = true;
            queue.push_back(owner);
            let mut end = None;
            'bfs: while let Some(r) = queue.pop_front() {
                for &c in &adj[r] {
                    if seen[c] {
                        continue;
                    }
                    let c_owner = col_to_row[c];
                    if c != current && c_owner <= i {
                        continue;
                    }
                    seen[c] = true;
                    prev_col[c] = row_to_col[r];
                    if c == current {
                        end = Some(c);
                        break 'bfs;
                    }
                    queue.push_back(c_owner);
                }
            }
            if let Some(mut c) = end {
                // Walk back: the row that reached `c` takes it, releasing its
                // old column to the previous row in the chain.
                loop {
                    let from = prev_col[c];
                    let r = col_to_row[from];
                    row_to_col[r] = c;
                    col_to_row[c] = r;
                    if from == j {
                        break;
                    }
                    c = from;
                }
                row_to_col[i] = j;
                col_to_row[j] = i;
                break;
            }
        }
    }
    row_to_col
}
