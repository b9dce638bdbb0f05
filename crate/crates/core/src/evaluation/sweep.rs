//! Hyperparameter sweeps over a Cartesian grid.

use std::path::Path;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{evaluate_with, Conventions, EvalReport};
use crate::clustering::{cluster, Algorithm, ClusterAssignment, ClusteringConfig};
use crate::error::{Error, Result};
use crate::model::VideoRecord;
use crate::similarity::SimilarityMatrix;

/// A video together with its tracklet similarity matrix.
#[derive(Debug, Clone)]
pub struct PreparedVideo {
    pub video: VideoRecord,
    pub matrix: SimilarityMatrix,
}

/// Clusters every video with `cfg`, in input order.
pub fn cluster_videos(
    videos: &[PreparedVideo],
    cfg: &ClusteringConfig,
) -> Result<Vec<ClusterAssignment>> {
    videos
        .par_iter()
        .map(|p| cluster(&p.video.video_id, &p.matrix, cfg))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Smallest `|FPR - rho|`, then smallest FR, then grid order.
    #[default]
    ClosestToRho,
    /// Smallest FR among points with `FPR <= rho`, then grid order; falls
    /// back to [`SweepMode::ClosestToRho`] when no point qualifies.
    MaxMergeUnderCap,
}

impl std::str::FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closest_to_rho" => Ok(Self::ClosestToRho),
            "max_merge_under_cap" => Ok(Self::MaxMergeUnderCap),
            other => Err(Error::Config(format!("unknown sweep mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub algorithm: Algorithm,
    /// Values for fields not on an axis; defaults otherwise.
    #[serde(default)]
    pub base: Option<ClusteringConfig>,
    /// Axis name to candidate values. Expanded in insertion order with the
    /// last axis varying fastest.
    #[serde(default)]
    pub axes: IndexMap<String, Vec<Value>>,
}

impl SweepGrid {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            base: None,
            axes: IndexMap::new(),
        }
    }

    pub fn axis(mut self, name: &str, values: impl IntoIterator<Item = Value>) -> Self {
        self.axes
            .insert(name.to_string(), values.into_iter().collect());
        self
    }

    /// All grid points in order; a grid without axes has one point.
    pub fn points(&self) -> Result<Vec<ClusteringConfig>> {
        let mut base = self.base.clone().unwrap_or_default();
        base.algorithm = self.algorithm;
        for (name, values) in &self.axes {
            if !self.algorithm.parameters().contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "`{name}` is not a hyperparameter of {:?}",
                    self.algorithm
                )));
            }
            if values.is_empty() {
                return Err(Error::Empty("sweep grid"));
            }
        }
        let mut points = vec![base];
        for (name, values) in &self.axes {
            let mut next = Vec::with_capacity(points.len() * values.len());
            for p in &points {
                for v in values {
                    let mut q = p.clone();
                    q.set_param(name, v)?;
                    next.push(q);
                }
            }
            points = next;
        }
        for p in &points {
            p.validate()?;
        }
        Ok(points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub index: usize,
    pub params: IndexMap<String, Value>,
    pub fr_macro: f64,
    pub fr_std: f64,
    pub fpr_pooled: f64,
    pub fpr_video_mean: f64,
    pub converged: bool,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub mode: SweepMode,
    pub rho: f64,
    pub best_index: usize,
    pub best_config: ClusteringConfig,
    pub best_report: EvalReport,
    pub ledger: Vec<LedgerRow>,
}

fn select(reports: &[EvalReport], rho: f64, mode: SweepMode) -> usize {
    let closest = || {
        (0..reports.len())
            .min_by(|&a, &b| {
                let (ra, rb) = (&reports[a], &reports[b]);
                (ra.fpr() - rho)
                    .abs()
                    .total_cmp(&(rb.fpr() - rho).abs())
                    .then(ra.fr_macro.total_cmp(&rb.fr_macro))
                    .then(a.cmp(&b))
            })
            .expect("non-empty grid")
    };
    match mode {
        SweepMode::ClosestToRho => closest(),
        SweepMode::MaxMergeUnderCap => (0..reports.len())
            .filter(|&i| reports[i].fpr() <= rho)
            .min_by(|&a, &b| {
                reports[a]
                    .fr_macro
                    .total_cmp(&reports[b].fr_macro)
                    .then(a.cmp(&b))
            })
            .unwrap_or_else(closest),
    }
}

/// Evaluates every grid point on `videos` and picks one according to `mode`.
/// Results do not depend on thread count.
pub fn sweep(
    grid: &SweepGrid,
    videos: &[PreparedVideo],
    rho: f64,
    mode: SweepMode,
    conventions: Conventions,
) -> Result<SweepOutcome> {
    let points = grid.points()?;
    let records: Vec<VideoRecord> = videos.iter().map(|p| p.video.clone()).collect();
    let reports: Vec<EvalReport> = points
        .par_iter()
        .map(|cfg| {
            let assignments = cluster_videos(videos, cfg)?;
            let mut r = evaluate_with(&assignments, &records, rho, conventions)?;
            r.config = Some(cfg.clone());
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let best = select(&reports, rho, mode);
    let ledger = points
        .iter()
        .zip(&reports)
        .enumerate()
        .map(|(index, (cfg, r))| {
            let all = serde_json::to_value(cfg).expect("config serialises");
            LedgerRow {
                index,
                params: grid
                    .axes
                    .keys()
                    .map(|k| (k.clone(), all[k.as_str()].clone()))
                    .collect(),
                fr_macro: r.fr_macro,
                fr_std: r.fr_std,
                fpr_pooled: r.fpr_pooled,
                fpr_video_mean: r.fpr_video_mean,
                converged: r.converged,
                selected: index == best,
            }
        })
        .collect();
    Ok(SweepOutcome {
        mode,
        rho,
        best_index: best,
        best_config: points[best].clone(),
        best_report: reports[best].clone(),
        ledger,
    })
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// One CSV row per grid point, axis columns in grid order.
pub fn write_ledger(path: &Path, outcome: &SweepOutcome) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let wrap = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    let axes: Vec<String> = outcome
        .ledger
        .first()
        .map(|r| r.params.keys().cloned().collect())
        .unwrap_or_default();
    let mut header = vec!["index".to_string()];
    header.extend(axes.iter().cloned());
    header.extend(
        [
            "fr_macro",
            "fr_std",
            "fpr_pooled",
            "fpr_video_mean",
            "converged",
            "selected",
        ]
        .map(String::from),
    );
    w.write_record(&header).map_err(wrap)?;
    for r in &outcome.ledger {
        let mut rec = vec![r.index.to_string()];
        rec.extend(r.params.values().map(cell));
        rec.extend([
            r.fr_macro.to_string(),
            r.fr_std.to_string(),
            r.fpr_pooled.to_string(),
            r.fpr_video_mean.to_string(),
            r.converged.to_string(),
            r.selected.to_string(),
        ]);
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
