//! Pair retrieval accuracy for embedding models.

use crate::error::{Error, Result};

fn cosine(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Top-1 accuracy over a pool of `2 * pairs.len()` vectors. Each vector
/// queries every other pool member by cosine similarity and scores a hit when
/// the best match (lowest pool index on ties) is its partner.
pub fn top1_accuracy(pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    let pool: Vec<&[f64]> = pairs
        .iter()
        .flat_map(|(a, b)| [a.as_slice(), b.as_slice()])
        .collect();
    let dim = pool[0].len();
    let mut norms = Vec::with_capacity(pool.len());
    for (i, v) in pool.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                key: format!("pool[{i}]"),
                expected: dim,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("pool[{i}]")));
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::ZeroVector(i));
        }
        norms.push(n);
    }
    let hits = (0..pool.len())
        .filter(|&q| {
            let mut best: Option<(f64, usize)> = None;
            for c in (0..pool.len()).filter(|&c| c != q) {
                let s = cosine(pool[q], pool[c], norms[q], norms[c]);
                if best.is_none_or(|(b, _)| s > b) {
                    best = Some((s, c));
                }
            }
            best.map(|(_, c)| c) == Some(q ^ 1)
        })
        .count();
    Ok(hits as f64 / pool.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_pairs_are_perfect() {
        let e = |i: usize| {
            let mut v = vec![0.0; 3];
            v[i] = 1.0;
            v
        };
        let pairs: Vec<_> = (0..3).map(|i| (e(i), e(i))).collect();
        assert_eq!(top1_accuracy(&pairs).unwrap(), 1.0);
    }

    #[test]
    fn identical_pool_breaks_ties_by_index() {
        // Every similarity is 1; each query picks the lowest other index.
        // Query 0 -> 1 (hit), 1 -> 0 (hit), 2 -> 0, 3 -> 0 (misses).
        let pairs = vec![
            (vec![1.0, 1.0], vec![1.0, 1.0]),
            (vec![1.0, 1.0], vec![1.0, 1.0]),
        ];
        assert_eq!(top1_accuracy(&pairs).unwrap(), 0.5);
    }

    #[test]
    fn errors() {
        assert!(top1_accuracy(&[(vec![1.0], vec![1.0])]).is_err());
        let zero = vec![
            (vec![1.0, 0.0], vec![0.0, 0.0]),
            (vec![0.0, 1.0], vec![0.0, 1.0]),
        ];
        assert!(matches!(top1_accuracy(&zero), Err(Error::ZeroVector(1))));
        let dims = vec![
            (vec![1.0, 0.0], vec![1.0]),
            (vec![0.0, 1.0], vec![0.0, 1.0]),
        ];
        assert!(matches!(
            top1_accuracy(&dims),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
