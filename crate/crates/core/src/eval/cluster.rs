//! Agglomerative clustering with Lance–Williams updates.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    #[default]
    Ward,
    Average,
    Complete,
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cuts the merge tree at `k` clusters. Among equally close pairs the one
/// with the lexicographically smallest `(i, j)` merges first, where a
/// cluster is identified by its smallest row index. Cluster ids are numbered
/// in order of first appearance.
pub fn hierarchical_cluster(x: ArrayView2<f64>, k: usize, linkage: Linkage) -> Result<Vec<usize>> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::Argument(format!("cannot form {k} clusters from {n} rows")));
    }
    // Ward works on squared Euclidean distances, the others on plain ones.
    let mut d = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s = sq_dist(x.row(i), x.row(j));
            let v = if linkage == Linkage::Ward { s } else { s.sqrt() };
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut parent: Vec<usize> = (0..n).collect();
    for _ in 0..(n - k) {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for i in (0..n).filter(|&i| active[i]) {
            for j in ((i + 1)..n).filter(|&j| active[j]) {
                if d[i * n + j] < best.0 {
                    best = (d[i * n + j], i, j);
                }
            }
        }
        let (dij, i, j) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for m in (0..n).filter(|&m| active[m] && m != i && m != j) {
            let (dim, djm) = (d[i * n + m], d[j * n + m]);
            let nm = size[m] as f64;
            let v = match linkage {
                Linkage::Ward => ((ni + nm) * dim + (nj + nm) * djm - nm * dij) / (ni + nj + nm),
                Linkage::Average => (ni * dim + nj * djm) / (ni + nj),
                Linkage::Complete => dim.max(djm),
            };
            d[i * n + m] = v;
            d[m * n + i] = v;
        }
        size[i] += size[j];
        active[j] = false;
        parent[j] = i;
    }
    let root = |mut r: usize| {
        while parent[r] != r {
            r = parent[r];
        }
        r
    };
    let mut ids = vec![usize::MAX; n];
    let mut next = 0;
    let mut out = Vec::with_capacity(n);
    for r in 0..n {
        let c = root(r);
        if ids[c] == usize::MAX {
            ids[c] = next;
            next += 1;
        }
        out.push(ids[c]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        a.len() == b.len()
            && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn blobs_are_recovered() {
        let centers = [(0.0, 0.0), (50.0, 0.0), (0.0, 50.0)];
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            for i in 0..7 {
                let jitter = (i as f64 * 0.37).sin();
                rows.extend_from_slice(&[cx + jitter, cy - jitter * 0.5]);
                truth.push(c);
            }
        }
        let x = Array2::from_shape_vec((21, 2), rows).unwrap();
        for linkage in [Linkage::Ward, Linkage::Average, Linkage::Complete] {
            let a = hierarchical_cluster(x.view(), 3, linkage).unwrap();
            assert!(same_partition(&a, &truth), "{linkage:?}");
        }
    }

    #[test]
    fn singletons_and_duplicates() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [5.0, 5.0], [1.0, 0.0]];
        assert_eq!(hierarchical_cluster(x.view(), 4, Linkage::Ward).unwrap(), vec![0, 1, 2, 3]);
        let a = hierarchical_cluster(x.view(), 3, Linkage::Ward).unwrap();
        assert_eq!(a[1], a[3]);
        assert!(hierarchical_cluster(x.view(), 5, Linkage::Ward).is_err());
        assert!(hierarchical_cluster(x.view(), 0, Linkage::Ward).is_err());
    }

    #[test]
    fn ward_merge_cost_matches_centroid_formula() {
        // Ward cost of merging A and B is |A||B|/(|A|+|B|)·‖c_A − c_B‖²; the
        // Lance–Williams update must pick the cheaper pair.
        let x = array![[0.0], [1.0], [10.0], [30.0]];
        let a = hierarchical_cluster(x.view(), 2, Linkage::Ward).unwrap();
        // {0,1,10} vs {30}: merging 10 into {0,1} costs 2/3·9.5² ≈ 60 < 2/2·20² = 200.
        assert_eq!(a, vec![0, 0, 0, 1]);
    }

    #[test]
    fn ties_merge_lexicographically() {
        let x = array![[0.0], [1.0], [2.0]];
        // d(0,1) = d(1,2); (0,1) merges first.
        let a = hierarchical_cluster(x.view(), 2, Linkage::Average).unwrap();
        assert_eq!(a, vec![0, 0, 1]);
    }
}
