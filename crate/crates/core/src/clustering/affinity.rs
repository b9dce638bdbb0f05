//! Affinity propagation on the normalised similarity matrix.
//!
//! Responsibilities `r(i, k)` and availabilities `a(i, k)` are exchanged
//! with damping until the exemplar set `{k : r(k, k) + a(k, k) > 0}` stays
//! the same for `convergence_iter` consecutive iterations (and is
//! non-empty), or `max_iter` is reached. The preference on the diagonal is a
//! quantile of the off-diagonal similarities. A seeded 1e-9 jitter breaks
//! exact ties. After message passing, each cluster's exemplar is moved once
//! to the member with the largest summed similarity from its cluster.

use log::warn;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Partition;
use crate::error::{Error, Result};
use crate::similarity::SimilarityMatrix;

const JITTER_SCALE: f64 = 1e-9;

/// Linear-interpolation quantile of `values` (sorted internally).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(v[lo] + (v[hi] - v[lo]) * frac)
}

/// Preference value for a matrix: the `q`-quantile of its upper-triangle
/// similarities. `None` for a single tracklet.
pub fn preference_from_quantile(m: &SimilarityMatrix, q: f64) -> Result<Option<f64>> {
    Ok(quantile(&m.off_diagonal_similarities()?, q))
}

/// Objective of an exemplar assignment: `Σ_i s(i, e(i))` with `s(k, k)`
/// replaced by `preference`. `exemplar_of[i]` is the exemplar index of `i`.
pub fn net_similarity(s: &Array2<f64>, preference: f64, exemplar_of: &[usize]) -> f64 {
    exemplar_of
        .iter()
        .enumerate()
        .map(|(i, &e)| if i == e { preference } else { s[[i, e]] })
        .sum()
}

/// Runs affinity propagation. The returned partition groups each point with
/// its exemplar; `converged` is false when `max_iter` was hit first.
pub fn cluster_affinity_propagation(
    m: &SimilarityMatrix,
    preference_quantile: f64,
    damping: f64,
    max_iter: usize,
    convergence_iter: usize,
    jitter_seed: u64,
) -> Result<Partition> {
    Ok(partition_from_exemplars(&affinity_exemplars(
        m,
        preference_quantile,
        damping,
        max_iter,
        convergence_iter,
        jitter_seed,
    )?))
}

/// Exemplar index per point plus convergence flag.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarAssignment {
    pub exemplar_of: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
}

fn partition_from_exemplars(e: &ExemplarAssignment) -> Partition {
    Partition::new(e.exemplar_of.clone(), e.converged)
}

/// Like [`cluster_affinity_propagation`] but keeps the exemplar of each
/// point rather than relabelling.
pub fn affinity_exemplars(
    m: &SimilarityMatrix,
    preference_quantile: f64,
    damping: f64,
    max_iter: usize,
    convergence_iter: usize,
    jitter_seed: u64,
) -> Result<ExemplarAssignment> {
    if !(0.5..1.0).contains(&damping) {
        return Err(Error::Config(format!("damping {damping} outside [0.5, 1)")));
    }
    let n = m.len();
    let base = m.similarities()?;
    if n <= 1 {
        return Ok(ExemplarAssignment {
            exemplar_of: (0..n).collect(),
            converged: true,
            iterations: 0,
        });
    }
    let preference = preference_from_quantile(m, preference_quantile)?.expect("n >= 2");

    let mut rng = ChaCha8Rng::seed_from_u64(jitter_seed);
    let mut s = base.clone();
    for k in 0..n {
        s[[k, k]] = preference;
    }
    for v in s.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += JITTER_SCALE * z;
    }

    let mut r = Array2::<f64>::zeros((n, n));
    let mut a = Array2::<f64>::zeros((n, n));
    let mut exemplars = vec![false; n];
    let mut stable_for = 0usize;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..max_iter {
        iterations = it + 1;
        // Responsibilities.
        for i in 0..n {
            let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            let mut arg = 0;
            for k in 0..n {
                let v = a[[i, k]] + s[[i, k]];
                if v > first {
                    second = first;
                    first = v;
                    arg = k;
                } else if v > second {
                    second = v;
                }
            }
            for k in 0..n {
                let competitor = if k == arg { second } else { first };
                let fresh = s[[i, k]] - competitor;
                r[[i, k]] = damping * r[[i, k]] + (1.0 - damping) * fresh;
            }
        }
        // Availabilities.
        for k in 0..n {
            let positive: f64 = (0..n).filter(|&i| i != k).map(|i| r[[i, k]].max(0.0)).sum();
            for i in 0..n {
                let fresh = if i == k {
                    positive
                } else {
                    (r[[k, k]] + positive - r[[i, k]].max(0.0)).min(0.0)
                };
                a[[i, k]] = damping * a[[i, k]] + (1.0 - damping) * fresh;
            }
        }

        let current: Vec<bool> = (0..n).map(|k| a[[k, k]] + r[[k, k]] > 0.0).collect();
        if current == exemplars {
            stable_for += 1;
        } else {
            exemplars = current;
            stable_for = 1;
        }
        if stable_for >= convergence_iter && exemplars.iter().any(|&e| e) {
            converged = true;
            break;
        }
    }

    let mut chosen: Vec<usize> = (0..n).filter(|&k| exemplars[k]).collect();
    if chosen.is_empty() {
        let best = (0..n)
            .max_by(|&x, &y| {
                (a[[x, x]] + r[[x, x]])
                    .total_cmp(&(a[[y, y]] + r[[y, y]]))
                    .then(y.cmp(&x))
            })
            .expect("n >= 2");
        chosen.push(best);
    }
    if !converged {
        warn!(
            "affinity propagation did not converge in {max_iter} iterations ({} exemplars)",
            chosen.len()
        );
    }
    let assign = |chosen: &[usize]| -> Vec<usize> {
        (0..n)
            .map(|i| {
                if chosen.contains(&i) {
                    return i;
                }
                *chosen
                    .iter()
                    .max_by(|&&x, &&y| s[[i, x]].total_cmp(&s[[i, y]]).then(y.cmp(&x)))
                    .expect("at least one exemplar")
            })
            .collect()
    };
    // One refinement pass: each cluster's exemplar moves to the member with
    // the largest summed similarity from the cluster, then points reassign.
    let first = assign(&chosen);
    let mut refined: Vec<usize> = chosen
        .iter()
        .map(|&k| {
            let members: Vec<usize> = (0..n).filter(|&i| first[i] == k).collect();
            *members
                .iter()
                .max_by(|&&x, &&y| {
                    let sx: f64 = members.iter().map(|&i| s[[i, x]]).sum();
                    let sy: f64 = members.iter().map(|&i| s[[i, y]]).sum();
                    sx.total_cmp(&sy).then(y.cmp(&x))
                })
                .expect("exemplar is its own member")
        })
        .collect();
    refined.sort_unstable();
    let exemplar_of = assign(&refined);
    Ok(ExemplarAssignment {
        exemplar_of,
        converged,
        iterations,
    })
}
