//! Re-association of a video's tracklets into entities.
//!
//! Every algorithm works on one video's [`SimilarityMatrix`] and returns a
//! [`Partition`]: one label per tracklet in matrix order, relabelled so that
//! labels are contiguous from 0 in order of first appearance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::similarity::SimilarityMatrix;

mod affinity;
mod agglomerative;
mod hdbscan;
mod threshold;

pub use affinity::{
    affinity_exemplars, cluster_affinity_propagation, net_similarity, preference_from_quantile,
    quantile, ExemplarAssignment,
};
pub use agglomerative::cluster_agglomerative;
pub use hdbscan::{cluster_hdbscan, core_distances, mutual_reachability};
pub use threshold::cluster_threshold;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Threshold,
    Agglomerative,
    Hdbscan,
    AffinityPropagation,
}

impl Algorithm {
    /// Names of the [`ClusteringConfig`] fields this algorithm reads.
    pub fn parameters(&self) -> &'static [&'static str] {
        match self {
            Algorithm::Threshold => &["lambda"],
            Algorithm::Agglomerative => &["linkage", "distance_cutoff"],
            Algorithm::Hdbscan => &["min_cluster_size", "min_samples"],
            Algorithm::AffinityPropagation => &[
                "preference_quantile",
                "damping",
                "max_iter",
                "convergence_iter",
                "jitter_seed",
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    Average,
}

/// Hyperparameters for all algorithms; only the fields of `algorithm` are
/// consulted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub algorithm: Algorithm,
    pub lambda: f64,
    pub linkage: Linkage,
    pub distance_cutoff: f64,
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub preference_quantile: f64,
    pub damping: f64,
    pub max_iter: usize,
    pub convergence_iter: usize,
    pub jitter_seed: u64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::AffinityPropagation,
            lambda: 0.5,
            linkage: Linkage::Average,
            distance_cutoff: 1.0,
            min_cluster_size: 2,
            min_samples: 1,
            preference_quantile: 0.5,
            damping: 0.9,
            max_iter: 1000,
            convergence_iter: 50,
            jitter_seed: 0,
        }
    }
}

impl ClusteringConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self.algorithm {
            Algorithm::Threshold => {
                if !(0.0..=1.0).contains(&self.lambda) {
                    return bad(format!("lambda {} outside [0, 1]", self.lambda));
                }
            }
            Algorithm::Agglomerative => {
                if !self.distance_cutoff.is_finite() {
                    return bad("distance_cutoff must be finite".into());
                }
            }
            Algorithm::Hdbscan => {
                if self.min_cluster_size < 2 {
                    return bad("min_cluster_size must be at least 2".into());
                }
                if self.min_samples < 1 {
                    return bad("min_samples must be at least 1".into());
                }
            }
            Algorithm::AffinityPropagation => {
                if !(0.0..=1.0).contains(&self.preference_quantile) {
                    return bad(format!(
                        "preference_quantile {} outside [0, 1]",
                        self.preference_quantile
                    ));
                }
                if !(0.5..1.0).contains(&self.damping) {
                    return bad(format!("damping {} outside [0.5, 1)", self.damping));
                }
                if self.max_iter == 0 || self.convergence_iter == 0 {
                    return bad("max_iter and convergence_iter must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// Sets one named field from a JSON value; used to expand sweep grids.
    pub fn set_param(&mut self, name: &str, value: &Value) -> Result<()> {
        let bad = || Error::Config(format!("bad value {value} for `{name}`"));
        let as_f64 = || value.as_f64().ok_or_else(bad);
        let as_usize = || {
            value
                .as_u64()
                .or_else(|| {
                    value
                        .as_f64()
                        .filter(|f| f.fract() == 0.0 && *f >= 0.0)
                        .map(|f| f as u64)
                })
                .map(|v| v as usize)
                .ok_or_else(bad)
        };
        match name {
            "lambda" => self.lambda = as_f64()?,
            "linkage" => self.linkage = serde_json::from_value(value.clone()).map_err(|_| bad())?,
            "distance_cutoff" => self.distance_cutoff = as_f64()?,
            "min_cluster_size" => self.min_cluster_size = as_usize()?,
            "min_samples" => self.min_samples = as_usize()?,
            "preference_quantile" => self.preference_quantile = as_f64()?,
            "damping" => self.damping = as_f64()?,
            "max_iter" => self.max_iter = as_usize()?,
            "convergence_iter" => self.convergence_iter = as_usize()?,
            "jitter_seed" => self.jitter_seed = as_usize()? as u64,
            other => return Err(Error::Config(format!("unknown hyperparameter `{other}`"))),
        }
        Ok(())
    }

    /// The consulted fields of the selected algorithm, as JSON values.
    pub fn active_params(&self) -> Vec<(&'static str, Value)> {
        let all = serde_json::to_value(self).expect("config serialises");
        self.algorithm
            .parameters()
            .iter()
            .map(|&p| (p, all[p].clone()))
            .collect()
    }
}

/// Labels in matrix order, plus whether the algorithm converged (always true
/// except for affinity propagation).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub labels: Vec<usize>,
    pub converged: bool,
}

impl Partition {
    pub fn new(labels: Vec<usize>, converged: bool) -> Self {
        Self {
            labels: canonical_labels(&labels),
            converged,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

/// Relabels so that the first point is cluster 0, the next unseen label is
/// cluster 1, and so on.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub video_id: String,
    #[serde(rename = "clusters")]
    pub assignment: BTreeMap<String, usize>,
    pub converged: bool,
}

impl ClusterAssignment {
    pub fn from_partition(video_id: &str, m: &SimilarityMatrix, p: &Partition) -> Self {
        Self {
            video_id: video_id.to_string(),
            assignment: m
                .tracklet_ids
                .iter()
                .cloned()
                .zip(p.labels.iter().copied())
                .collect(),
            converged: p.converged,
        }
    }

    /// Every tracklet in its own cluster.
    pub fn identity<'a>(video_id: &str, tracklet_ids: impl IntoIterator<Item = &'a str>) -> Self {
        let mut ids: Vec<&str> = tracklet_ids.into_iter().collect();
        ids.sort_unstable();
        Self {
            video_id: video_id.to_string(),
            assignment: ids
                .into_iter()
                .enumerate()
                .map(|(i, id)| (id.to_string(), i))
                .collect(),
            converged: true,
        }
    }

    pub fn n_clusters(&self) -> usize {
        let distinct: std::collections::BTreeSet<_> = self.assignment.values().collect();
        distinct.len()
    }
}

/// Runs the configured algorithm on one video's matrix.
pub fn cluster_partition(m: &SimilarityMatrix, cfg: &ClusteringConfig) -> Result<Partition> {
    cfg.validate()?;
    if m.is_empty() {
        return Ok(Partition::new(Vec::new(), true));
    }
    match cfg.algorithm {
        Algorithm::Threshold => cluster_threshold(m, cfg.lambda),
        Algorithm::Agglomerative => Ok(cluster_agglomerative(m, cfg.linkage, cfg.distance_cutoff)),
        Algorithm::Hdbscan => Ok(cluster_hdbscan(m, cfg.min_cluster_size, cfg.min_samples)),
        Algorithm::AffinityPropagation => cluster_affinity_propagation(
            m,
            cfg.preference_quantile,
            cfg.damping,
            cfg.max_iter,
            cfg.convergence_iter,
            cfg.jitter_seed,
        ),
    }
}

pub fn cluster(
    video_id: &str,
    m: &SimilarityMatrix,
    cfg: &ClusteringConfig,
) -> Result<ClusterAssignment> {
    let p = cluster_partition(m, cfg)?;
    Ok(ClusterAssignment::from_partition(video_id, m, &p))
}

/// Disjoint-set forest with path halving; unions keep the smaller root.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        lo
    }

    pub(crate) fn labels(&mut self) -> Vec<usize> {
        (0..self.parent.len()).map(|i| self.find(i)).collect()
    }
}
