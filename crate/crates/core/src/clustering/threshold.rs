use super::{Partition, UnionFind};
use crate::error::Result;
use crate::similarity::SimilarityMatrix;

/// Connected components of the graph with an edge wherever `S_ij >= lambda`.
pub fn cluster_threshold(m: &SimilarityMatrix, lambda: f64) -> Result<Partition> {
    let s = m.similarities()?;
    let n = m.len();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if s[[i, j]] >= lambda {
                uf.union(i, j);
            }
        }
    }
    Ok(Partition::new(uf.labels(), true))
}
