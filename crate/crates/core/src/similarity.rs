//! Per-video pairwise distance matrix `D` and min-max normalised similarity
//! `S = 1 - (D - d_min) / (d_max - d_min)`.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`.
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Which entries of `D` define `d_min` and `d_max`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Off-diagonal entries only; `S_ii = 1`.
    #[default]
    OffDiagonal,
    /// The whole matrix, so `d_min` is the zero diagonal.
    FullMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub tracklet_ids: Vec<String>,
    pub distances: Array2<f64>,
    pub similarities: Option<Array2<f64>>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.tracklet_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracklet_ids.is_empty()
    }

    pub fn similarities(&self) -> Result<&Array2<f64>> {
        self.similarities
            .as_ref()
            .ok_or(Error::MissingMatrix("similarities (S)"))
    }

    /// Builds a matrix from precomputed distances; ids are taken as given.
    pub fn from_distances(tracklet_ids: Vec<String>, distances: Array2<f64>) -> Result<Self> {
        let n = tracklet_ids.len();
        if distances.dim() != (n, n) {
            return Err(Error::Data(format!(
                "distance matrix is {:?}, expected {n}x{n}",
                distances.dim()
            )));
        }
        Ok(Self {
            tracklet_ids,
            distances,
            similarities: None,
        })
    }

    /// Upper-triangle entries of `S`, row-major.
    pub fn off_diagonal_similarities(&self) -> Result<Vec<f64>> {
        let s = self.similarities()?;
        let n = self.len();
        Ok((0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| s[[i, j]])
            .collect())
    }

    /// Writes `D` (or `S` when `similarity` is set) as CSV with a header row
    /// of tracklet ids.
    pub fn write_csv(&self, path: &Path, similarity: bool) -> Result<()> {
        let m = if similarity {
            self.similarities()?
        } else {
            &self.distances
        };
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
        let mut header = vec![String::new()];
        header.extend(self.tracklet_ids.iter().cloned());
        w.write_record(&header)
            .map_err(|e| Error::Data(e.to_string()))?;
        for (i, id) in self.tracklet_ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(m.row(i).iter().map(|v| v.to_string()));
            w.write_record(&row)
                .map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Pairwise distances between tracklet embeddings, ids in lexicographic order.
pub fn distance_matrix(
    embeddings: &BTreeMap<String, Vec<f64>>,
    metric: Metric,
) -> Result<SimilarityMatrix> {
    let ids: Vec<String> = embeddings.keys().cloned().collect();
    let vectors: Vec<&[f64]> = embeddings.values().map(Vec::as_slice).collect();
    if let Some(first) = vectors.first() {
        let dim = first.len();
        for (id, v) in ids.iter().zip(&vectors) {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    key: id.clone(),
                    expected: dim,
                    found: v.len(),
                });
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(id.clone()));
            }
        }
    }
    let norms: Vec<f64> = vectors.iter().map(|v| dot(v, v).sqrt()).collect();
    if metric == Metric::Cosine {
        if let Some(i) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::ZeroVector(i));
        }
    }

    let n = ids.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| match metric {
                    Metric::Euclidean => euclidean(vectors[i], vectors[j]),
                    Metric::Cosine => {
                        (1.0 - dot(vectors[i], vectors[j]) / (norms[i] * norms[j])).max(0.0)
                    }
                })
                .collect()
        })
        .collect();
    let mut d = Array2::zeros((n, n));
    for (i, row) in upper.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let j = i + 1 + k;
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    Ok(SimilarityMatrix {
        tracklet_ids: ids,
        distances: d,
        similarities: None,
    })
}

/// Fills `S` from `D`. With a single tracklet, or when all considered
/// distances are equal, `S` is all ones.
pub fn normalize_similarity(mut m: SimilarityMatrix, mode: Normalization) -> SimilarityMatrix {
    let n = m.len();
    let d = &m.distances;
    let considered = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| mode == Normalization::FullMatrix || i != j)
        .map(|(i, j)| d[[i, j]]);
    let (lo, hi) = considered.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let span = hi - lo;
    let s = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j || !(span > 0.0) {
            1.0
        } else {
            (1.0 - (d[[i, j]] - lo) / span).clamp(0.0, 1.0)
        }
    });
    m.similarities = Some(s);
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
