//! Clustering quality and agreement metrics.
//!
//! Label values are arbitrary non-negative integers; every metric here only
//! looks at the partition they induce, so it is invariant to relabeling.
//! Entropies use natural logarithms and NMI is normalised by the arithmetic
//! mean of the two entropies.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::AssignmentMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("label vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {required} samples, found {found}")]
    TooFew { required: usize, found: usize },
    #[error("cost matrix must be square and non-empty")]
    NotSquare,
    #[error("cost matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
}

/// Counts of co-occurring label values between two labelings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `rows × cols`, row-major; rows index distinct values of the first labeling.
    pub counts: Vec<u64>,
    pub rows: usize,
    pub cols: usize,
    pub n: u64,
}

fn compress(labels: &[usize]) -> (Vec<usize>, usize) {
    let distinct: BTreeSet<usize> = labels.iter().copied().collect();
    let sorted: BTreeMap<usize, usize> = distinct.into_iter().enumerate().map(|(i, l)| (l, i)).collect();
    (labels.iter().map(|l| sorted[l]).collect(), sorted.len())
}

impl ContingencyTable {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self, MetricsError> {
        if a.len() != b.len() {
            return Err(MetricsError::LengthMismatch(a.len(), b.len()));
        }
        let (a, rows) = compress(a);
        let (b, cols) = compress(b);
        let mut counts = vec![0u64; rows * cols];
        for (&i, &j) in a.iter().zip(&b) {
            counts[i * cols + j] += 1;
        }
        Ok(Self { counts, rows, cols, n: a.len() as u64 })
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.rows).map(|i| (0..self.cols).map(|j| self.get(i, j)).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.cols).map(|j| (0..self.rows).map(|i| self.get(i, j)).sum()).collect()
    }

    /// True when the two labelings induce the same partition.
    pub fn same_partition(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..self.cols).filter(|&j| self.get(i, j) > 0).count() == 1)
            && (0..self.cols).all(|j| (0..self.rows).filter(|&i| self.get(i, j) > 0).count() == 1)
    }
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalised mutual information; 0 when both labelings are constant.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64, MetricsError> {
    if a.is_empty() {
        return Err(MetricsError::TooFew { required: 1, found: 0 });
    }
    let t = ContingencyTable::new(a, b)?;
    let n = t.n as f64;
    let (ra, cb) = (t.row_sums(), t.col_sums());
    let (ha, hb) = (entropy(&ra, n), entropy(&cb, n));
    if ha + hb == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for i in 0..t.rows {
        for j in 0..t.cols {
            let c = t.get(i, j);
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (ra[i] as f64 * cb[j] as f64)).ln();
            }
        }
    }
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

fn pairs(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. When the chance adjustment degenerates (zero
/// denominator) the result is 1 for identical partitions and 0 otherwise.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64, MetricsError> {
    if a.len() < 2 {
        return Err(MetricsError::TooFew { required: 2, found: a.len() });
    }
    let t = ContingencyTable::new(a, b)?;
    let index: f64 = t.counts.iter().map(|&c| pairs(c)).sum();
    let sum_a: f64 = t.row_sums().into_iter().map(pairs).sum();
    let sum_b: f64 = t.col_sums().into_iter().map(pairs).sum();
    let expected = sum_a * sum_b / pairs(t.n);
    let max = (sum_a + sum_b) / 2.0;
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(if t.same_partition() { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

/// Fraction of samples whose cluster maps to their class under the best
/// one-to-one cluster→class matching. Unequal counts are padded with empty
/// clusters or classes.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64, MetricsError> {
    if pred.is_empty() {
        return Err(MetricsError::TooFew { required: 1, found: 0 });
    }
    let t = ContingencyTable::new(pred, truth)?;
    let size = t.rows.max(t.cols);
    let mut cost = vec![vec![0.0; size]; size];
    for i in 0..t.rows {
        for j in 0..t.cols {
            cost[i][j] = -(t.get(i, j) as f64);
        }
    }
    let perm = optimal_assignment(&cost)?;
    let matched: u64 = perm
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < t.rows && j < t.cols)
        .map(|(i, &j)| t.get(i, j))
        .sum();
    Ok(matched as f64 / t.n as f64)
}

/// Minimum-cost perfect assignment of rows to columns, `perm[row] = col`.
///
/// Solved with the O(n³) shortest-augmenting-path Hungarian method. Among
/// optimal assignments the lexicographically smallest permutation is
/// returned: optimal assignments are exactly the perfect matchings on edges
/// with zero reduced cost under the final dual potentials, and the smallest
/// of those is found row by row with alternating-path rerouting.
pub fn optimal_assignment(cost: &[Vec<f64>]) -> Result<Vec<usize>, MetricsError> {
    let n = cost.len();
    if n == 0 || cost.iter().any(|r| r.len() != n) {
        return Err(MetricsError::NotSquare);
    }
    for (i, row) in cost.iter().enumerate() {
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite { row: i, col: j });
        }
    }
    let (row_to_col, u, v) = hungarian(cost);
    let scale = cost.iter().flatten().fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-9 * scale;
    let tight: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| cost[i][j] - u[i + 1] - v[j + 1] <= tol).collect())
        .collect();
    Ok(smallest_perfect_matching(&tight, row_to_col))
}

/// Returns the matching and the row/column potentials (1-based, index 0 unused).
fn hungarian(cost: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[owner[j] - 1] = j - 1;
    }
    (row_to_col, u, v)
}

fn smallest_perfect_matching(tight: &[Vec<bool>], mut row_to_col: Vec<usize>) -> Vec<usize> {
    let n = tight.len();
    let mut col_to_row = vec![0; n];
    for (r, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = r;
    }
    for i in 0..n {
        for j in 0..n {
            // columns held by earlier rows are fixed
            if !tight[i][j] || col_to_row[j] < i {
                continue;
            }
            if row_to_col[i] == j {
                break;
            }
            let target = row_to_col[i];
            let mut visited = vec![false; n];
            visited[j] = true;
            let displaced = col_to_row[j];
            if reroute(tight, i, target, displaced, &mut visited, &mut row_to_col, &mut col_to_row) {
                row_to_col[i] = j;
                col_to_row[j] = i;
                break;
            }
        }
    }
    row_to_col
}

/// Find a new column for `row` along an alternating path ending at `target`,
/// using only rows after `fixed` and columns not yet visited.
fn reroute(
    tight: &[Vec<bool>],
    fixed: usize,
    target: usize,
    row: usize,
    visited: &mut [bool],
    row_to_col: &mut [usize],
    col_to_row: &mut [usize],
) -> bool {
    for c in 0..tight.len() {
        if !tight[row][c] || visited[c] || (c != target && col_to_row[c] <= fixed) {
            continue;
        }
        visited[c] = true;
        if c == target || reroute(tight, fixed, target, col_to_row[c], visited, row_to_col, col_to_row) {
            row_to_col[row] = c;
            col_to_row[c] = row;
            return true;
        }
    }
    false
}

/// Mean over all heads and samples of the largest assignment probability.
pub fn cnf(assignments: &[AssignmentMatrix]) -> f64 {
    let (total, count) = assignments.iter().fold((0.0, 0usize), |(t, c), a| {
        let conf = a.confidences();
        (t + conf.iter().sum::<f64>(), c + conf.len())
    });
    total / count as f64
}

/// Symmetric `K × K` NMI matrix with a unit diagonal.
pub fn pairwise_nmi_matrix(labelings: &[Vec<usize>]) -> Result<Vec<Vec<f64>>, MetricsError> {
    let k = labelings.len();
    let mut m = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = nmi(&labelings[i], &labelings[j])?;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok(m)
}

/// Mean NMI over the `K(K−1)/2` unordered pairs; 1 for a single labeling.
pub fn mean_pairwise_nmi(labelings: &[Vec<usize>]) -> Result<f64, MetricsError> {
    let k = labelings.len();
    if k < 2 {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            total += nmi(&labelings[i], &labelings[j])?;
        }
    }
    Ok(total / (k * (k - 1) / 2) as f64)
}

/// Mean of the strict upper triangle of a square matrix.
pub fn upper_triangle_mean(matrix: &[Vec<f64>]) -> f64 {
    let k = matrix.len();
    let mut total = 0.0;
    let mut count = 0;
    for (i, row) in matrix.iter().enumerate() {
        for v in &row[i + 1..k] {
            total += v;
            count += 1;
        }
    }
    if count == 0 { 1.0 } else { total / count as f64 }
}
