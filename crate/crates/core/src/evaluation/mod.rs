//! Fragmentation rate and false-positive rate of re-associated tracklets.
//!
//! FR of a video is `clusters / entities`; the split-level FR is the
//! unweighted mean over videos. A tracklet is a false positive when its
//! entity is not the majority entity of its cluster; FPR is pooled over all
//! tracklets of the split by default.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterAssignment, ClusteringConfig};
use crate::error::{Error, Result};
use crate::model::VideoRecord;

mod retrieval;
mod sweep;

pub use retrieval::top1_accuracy;
pub use sweep::{
    cluster_videos, sweep, write_ledger, LedgerRow, PreparedVideo, SweepGrid, SweepMode,
    SweepOutcome,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FprConvention {
    /// False positives over all tracklets of the split.
    #[default]
    Pooled,
    /// Mean of per-video FPR.
    VideoMean,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdConvention {
    #[default]
    Population,
    Sample,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Conventions {
    pub fpr: FprConvention,
    pub std: StdConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEval {
    pub fr: f64,
    pub n_clusters: usize,
    pub n_entities: usize,
    pub n_tracklets: usize,
    pub n_false_positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_video: BTreeMap<String, VideoEval>,
    pub fr_macro: f64,
    pub fr_std: f64,
    pub fpr_pooled: f64,
    pub fpr_video_mean: f64,
    pub rho: f64,
    pub conventions: Conventions,
    /// False when any video's clustering hit its iteration cap.
    pub converged: bool,
    pub config: Option<ClusteringConfig>,
}

impl EvalReport {
    /// FPR under the report's convention.
    pub fn fpr(&self) -> f64 {
        match self.conventions.fpr {
            FprConvention::Pooled => self.fpr_pooled,
            FprConvention::VideoMean => self.fpr_video_mean,
        }
    }
}

fn check_coverage(a: &ClusterAssignment, video: &VideoRecord) -> Result<()> {
    let coverage = |detail: String| Error::Coverage {
        video_id: video.video_id.clone(),
        detail,
    };
    if a.video_id != video.video_id {
        return Err(coverage(format!(
            "assignment is for video `{}`",
            a.video_id
        )));
    }
    let expected: BTreeSet<&str> = video
        .tracklets
        .iter()
        .map(|t| t.tracklet_id.as_str())
        .collect();
    let got: BTreeSet<&str> = a.assignment.keys().map(String::as_str).collect();
    if let Some(missing) = expected.difference(&got).next() {
        return Err(coverage(format!("tracklet `{missing}` is unassigned")));
    }
    if let Some(extra) = got.difference(&expected).next() {
        return Err(coverage(format!("unknown tracklet `{extra}`")));
    }
    Ok(())
}

/// `|distinct clusters| / |entities|` for one video.
pub fn fragmentation_rate(a: &ClusterAssignment, video: &VideoRecord) -> Result<f64> {
    check_coverage(a, video)?;
    if video.n_entities() == 0 {
        return Err(Error::Empty("video without entities"));
    }
    Ok(a.n_clusters() as f64 / video.n_entities() as f64)
}

/// Number of false-positive tracklets in one video.
///
/// The majority entity of a cluster has the most member tracklets; ties go to
/// the larger total frame count, then to the smaller entity id.
pub fn false_positive_count(a: &ClusterAssignment, video: &VideoRecord) -> Result<usize> {
    check_coverage(a, video)?;
    // cluster -> entity -> (tracklets, frames)
    let mut tally: BTreeMap<usize, BTreeMap<&str, (usize, usize)>> = BTreeMap::new();
    for t in &video.tracklets {
        let c = a.assignment[&t.tracklet_id];
        let e = tally.entry(c).or_default().entry(&t.entity_id).or_default();
        e.0 += 1;
        e.1 += t.len();
    }
    Ok(tally
        .values()
        .map(|entities| {
            let total: usize = entities.values().map(|(n, _)| n).sum();
            // BTreeMap iterates entity ids ascending; `max_by` keeps the last
            // maximum, so compare ids in reverse to prefer the smallest.
            let majority = entities
                .iter()
                .max_by(|(ea, (na, fa)), (eb, (nb, fb))| {
                    na.cmp(nb).then(fa.cmp(fb)).then(eb.cmp(ea))
                })
                .map(|(_, (n, _))| *n)
                .unwrap_or(0);
            total - majority
        })
        .sum())
}

fn pair_up<'a>(
    assignments: &'a [ClusterAssignment],
    videos: &'a [VideoRecord],
) -> Result<Vec<(&'a ClusterAssignment, &'a VideoRecord)>> {
    if assignments.len() != videos.len() {
        return Err(Error::Data(format!(
            "{} assignments for {} videos",
            assignments.len(),
            videos.len()
        )));
    }
    let by_id: BTreeMap<&str, &ClusterAssignment> = assignments
        .iter()
        .map(|a| (a.video_id.as_str(), a))
        .collect();
    videos
        .iter()
        .map(|v| {
            by_id
                .get(v.video_id.as_str())
                .map(|a| (*a, v))
                .ok_or_else(|| Error::Coverage {
                    video_id: v.video_id.clone(),
                    detail: "no assignment for this video".into(),
                })
        })
        .collect()
}

/// Pooled FPR over all videos.
pub fn false_positive_rate(
    assignments: &[ClusterAssignment],
    videos: &[VideoRecord],
) -> Result<f64> {
    let mut fp = 0;
    let mut total = 0;
    for (a, v) in pair_up(assignments, videos)? {
        fp += false_positive_count(a, v)?;
        total += v.n_tracklets();
    }
    Ok(if total == 0 {
        0.0
    } else {
        fp as f64 / total as f64
    })
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn std_dev(values: &[f64], convention: StdConvention) -> f64 {
    let n = values.len();
    let denom = match convention {
        StdConvention::Population => n as f64,
        StdConvention::Sample if n > 1 => (n - 1) as f64,
        StdConvention::Sample => return 0.0,
    };
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / denom).sqrt()
}

pub fn evaluate(
    assignments: &[ClusterAssignment],
    videos: &[VideoRecord],
    rho: f64,
) -> Result<EvalReport> {
    evaluate_with(assignments, videos, rho, Conventions::default())
}

pub fn evaluate_with(
    assignments: &[ClusterAssignment],
    videos: &[VideoRecord],
    rho: f64,
    conventions: Conventions,
) -> Result<EvalReport> {
    if videos.is_empty() {
        return Err(Error::Empty("video list"));
    }
    let mut per_video = BTreeMap::new();
    let mut converged = true;
    for (a, v) in pair_up(assignments, videos)? {
        let fr = fragmentation_rate(a, v)?;
        let fp = false_positive_count(a, v)?;
        converged &= a.converged;
        per_video.insert(
            v.video_id.clone(),
            VideoEval {
                fr,
                n_clusters: a.n_clusters(),
                n_entities: v.n_entities(),
                n_tracklets: v.n_tracklets(),
                n_false_positives: fp,
            },
        );
    }
    if per_video.len() != videos.len() {
        return Err(Error::Data("duplicate video ids".into()));
    }
    let frs: Vec<f64> = per_video.values().map(|e| e.fr).collect();
    let fp: usize = per_video.values().map(|e| e.n_false_positives).sum();
    let total: usize = per_video.values().map(|e| e.n_tracklets).sum();
    let per_video_fpr: Vec<f64> = per_video
        .values()
        .map(|e| {
            if e.n_tracklets == 0 {
                0.0
            } else {
                e.n_false_positives as f64 / e.n_tracklets as f64
            }
        })
        .collect();
    Ok(EvalReport {
        fr_macro: mean(&frs),
        fr_std: std_dev(&frs, conventions.std),
        fpr_pooled: if total == 0 {
            0.0
        } else {
            fp as f64 / total as f64
        },
        fpr_video_mean: mean(&per_video_fpr),
        per_video,
        rho,
        conventions,
        converged,
        config: None,
    })
}
