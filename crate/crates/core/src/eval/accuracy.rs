//! Clustering accuracy under the best one-to-one cluster↔label mapping.

use crate::{Error, Result};

/// Minimum-cost perfect matching on a square matrix (Hungarian method with
/// potentials, O(n³)). Returns `col[row]`.
pub fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    assert!(cost.iter().all(|r| r.len() == n), "cost matrix must be square");
    // 1-based arrays; index 0 is the virtual start column.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
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
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col = vec![0; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            col[row_of[j] - 1] = j - 1;
        }
    }
    col
}

fn dense_ids(values: &[usize]) -> (Vec<usize>, usize) {
    let mut uniq: Vec<usize> = values.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    let ids = values
        .iter()
        .map(|v| uniq.binary_search(v).expect("present"))
        .collect();
    (ids, uniq.len())
}

/// Square contingency matrix (zero-padded) of cluster × label counts.
pub fn contingency(assignments: &[usize], labels: &[usize]) -> Vec<Vec<i64>> {
    let (a, ka) = dense_ids(assignments);
    let (l, kl) = dense_ids(labels);
    let k = ka.max(kl);
    let mut m = vec![vec![0i64; k]; k];
    for (&ai, &li) in a.iter().zip(&l) {
        m[ai][li] += 1;
    }
    m
}

/// Fraction of rows whose label matches the label optimally assigned to
/// their cluster.
pub fn clustering_accuracy(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    if assignments.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} assignments for {} labels",
            assignments.len(),
            labels.len()
        )));
    }
    if assignments.is_empty() {
        return Err(Error::Argument("accuracy of an empty labeling".into()));
    }
    let m = contingency(assignments, labels);
    let cost: Vec<Vec<i64>> = m.iter().map(|r| r.iter().map(|&c| -c).collect()).collect();
    let col = min_cost_assignment(&cost);
    let matched: i64 = col.iter().enumerate().map(|(r, &c)| m[r][c]).sum();
    Ok(matched as f64 / labels.len() as f64)
}
