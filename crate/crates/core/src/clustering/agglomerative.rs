//! Bottom-up merging on `D` with Lance-Williams updates.
//!
//! A cluster lives in the slot of its smallest member. Each step merges the
//! active pair with the smallest linkage distance, ties going to the smallest
//! `(i, j)` slot pair, and stops once that distance exceeds the cutoff.

use ndarray::Array2;

use super::{Linkage, Partition};
use crate::similarity::SimilarityMatrix;

pub fn cluster_agglomerative(
    m: &SimilarityMatrix,
    linkage: Linkage,
    distance_cutoff: f64,
) -> Partition {
    let n = m.len();
    let mut d: Array2<f64> = m.distances.clone();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut label: Vec<usize> = (0..n).collect();

    for _ in 1..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                if best.is_none_or(|(b, _, _)| d[[i, j]] < b) {
                    best = Some((d[[i, j]], i, j));
                }
            }
        }
        let Some((dist, i, j)) = best else { break };
        if dist > distance_cutoff {
            break;
        }

        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
            let (dik, djk) = (d[[i, k]], d[[j, k]]);
            let merged = match linkage {
                Linkage::Single => dik.min(djk),
                Linkage::Complete => dik.max(djk),
                Linkage::Average => (ni * dik + nj * djk) / (ni + nj),
            };
            d[[i, k]] = merged;
            d[[k, i]] = merged;
        }
        active[j] = false;
        size[i] += size[j];
        for l in label.iter_mut().filter(|l| **l == j) {
            *l = i;
        }
    }
    Partition::new(label, true)
}
