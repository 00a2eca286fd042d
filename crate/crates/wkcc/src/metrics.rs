//! Cluster-quality measures: correct classification rate, adjusted Rand
//! index, and the silhouette over Wasserstein distances.

use crate::error::{Result, WkccError};
use crate::geometry::{wasserstein_distance, GridDistribution};

/// A partition of `n` items into labelled groups, canonicalized so that
/// labels are contiguous in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn new(raw: &[usize]) -> Partition {
        let mut map = std::collections::HashMap::new();
        let mut labels = Vec::with_capacity(raw.len());
        for &l in raw {
            let next = map.len();
            let id = *map.entry(l).or_insert(next);
            labels.push(id);
        }
        Partition { labels, k: map.len() }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn contingency(&self, other: &Partition) -> Vec<Vec<usize>> {
        let mut table = vec![vec![0usize; other.k]; self.k];
        for (&a, &b) in self.labels.iter().zip(&other.labels) {
            table[a][b] += 1;
        }
        table
    }
}

/// Minimum-cost assignment on a square cost matrix (Hungarian algorithm).
/// Returns, for each row, the assigned column.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // O(n^3) shortest-augmenting-path formulation with dual potentials.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j] = row assigned to column j (1-based)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
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
    let mut result = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            result[p[j] - 1] = j - 1;
        }
    }
    result
}

/// Best-permutation classification accuracy via optimal assignment on the
/// contingency table. Rectangular tables are padded with zero rows/columns.
pub fn correct_classification_rate(pred: &Partition, truth: &Partition) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(WkccError::LengthMismatch { a: pred.len(), b: truth.len() });
    }
    if pred.is_empty() {
        return Err(WkccError::EmptyInput);
    }
    let table = pred.contingency(truth);
    let k = pred.k.max(truth.k);
    let mut cost = vec![vec![0.0; k]; k];
    for (i, row) in cost.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            let count = if i < pred.k && j < truth.k { table[i][j] } else { 0 };
            *c = -(count as f64);
        }
    }
    let assign = hungarian(&cost);
    let matched: f64 = assign.iter().enumerate().map(|(i, &j)| -cost[i][j]).sum();
    Ok(matched / pred.len() as f64)
}

fn comb2(n: usize) -> f64 {
    n as f64 * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand index (Hubert–Arabie).
///
/// Returns 1 by convention when both partitions are single-cluster (and hence
/// identical); errors for n < 2.
pub fn adjusted_rand_index(pred: &Partition, truth: &Partition) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(WkccError::LengthMismatch { a: pred.len(), b: truth.len() });
    }
    let n = pred.len();
    if n < 2 {
        return Err(WkccError::DomainError("adjusted Rand index needs n >= 2".into()));
    }
    if pred.k == 1 && truth.k == 1 {
        return Ok(1.0);
    }
    let table = pred.contingency(truth);
    let a: Vec<usize> = table.iter().map(|row| row.iter().sum()).collect();
    let mut b = vec![0usize; truth.k];
    for row in &table {
        for (j, &c) in row.iter().enumerate() {
            b[j] += c;
        }
    }
    let sum_ij: f64 = table.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_a: f64 = a.iter().map(|&c| comb2(c)).sum();
    let sum_b: f64 = b.iter().map(|&c| comb2(c)).sum();
    let expected = sum_a * sum_b / comb2(n);
    let max_index = 0.5 * (sum_a + sum_b);
    Ok((sum_ij - expected) / (max_index - expected))
}

/// Mean silhouette of a clustering under the Wasserstein distance.
/// Singleton clusters contribute 0; a single cluster overall is an error.
pub fn silhouette(ds: &[GridDistribution], labels: &Partition) -> Result<f64> {
    let n = ds.len();
    if labels.len() != n {
        return Err(WkccError::LengthMismatch { a: labels.len(), b: n });
    }
    if labels.k < 2 {
        return Err(WkccError::SingleCluster);
    }
    // O(n^2) distances dominate; fill the matrix once.
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = wasserstein_distance(&ds[i], &ds[j])?;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut cluster_sizes = vec![0usize; labels.k];
    for &l in labels.labels() {
        cluster_sizes[l] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = labels.labels()[i];
        if cluster_sizes[own] == 1 {
            continue; // contributes 0
        }
        let mut sums = vec![0.0; labels.k];
        for j in 0..n {
            if j != i {
                sums[labels.labels()[j]] += dist[i][j];
            }
        }
        let a_i = sums[own] / (cluster_sizes[own] - 1) as f64;
        let b_i = (0..labels.k)
            .filter(|&c| c != own && cluster_sizes[c] > 0)
            .map(|c| sums[c] / cluster_sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a_i.max(b_i);
        if denom > 0.0 {
            total += (b_i - a_i) / denom;
        }
    }
    Ok(total / n as f64)
}
