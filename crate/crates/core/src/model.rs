//! Ground-truth domain types and tracklet construction.
//!
//! A tracklet is a maximal run of annotations of one entity in one video
//! where every consecutive pair of frames is adjacent (`frame_idx` differs by
//! one) and the boxes overlap with IoU of at least `iou_min`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum IoU between consecutive boxes of one tracklet.
pub const DEFAULT_IOU_MIN: f64 = 0.1;

/// Axis-aligned box in pixel coordinates. Always has positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(into = "[f64; 4]")]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let invalid = |reason| Error::InvalidBox {
            x_min,
            y_min,
            x_max,
            y_max,
            reason,
        };
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        if x_min < 0.0 || y_min < 0.0 {
            return Err(invalid("negative coordinate"));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(invalid("zero or negative area"));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [a, b, c, e] = <[f64; 4]>::deserialize(d)?;
        BBox::new(a, b, c, e).map_err(serde::de::Error::custom)
    }
}

/// Intersection over union of two boxes, in `[0, 1]`. A box without positive
/// area is an invalid annotation.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    for bx in [a, b] {
        if !(bx.area() > 0.0) {
            return Err(Error::InvalidBox {
                x_min: bx.x_min,
                y_min: bx.y_min,
                x_max: bx.x_max,
                y_max: bx.y_max,
                reason: "zero or negative area",
            });
        }
    }
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameAnnotation {
    pub video_id: String,
    pub frame_idx: u64,
    pub entity_id: String,
    #[serde(rename = "bbox")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tracklet {
    pub tracklet_id: String,
    pub video_id: String,
    pub entity_id: String,
    pub frames: Vec<(u64, BBox)>,
}

impl Tracklet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn start_frame(&self) -> u64 {
        self.frames[0].0
    }

    pub fn end_frame(&self) -> u64 {
        self.frames[self.frames.len() - 1].0
    }
}

/// Deterministic tracklet identifier. The start frame is zero-padded so that
/// lexicographic order of ids follows time within one entity.
pub fn tracklet_id(video_id: &str, entity_id: &str, start_frame: u64) -> String {
    format!("{video_id}:{entity_id}:{start_frame:07}")
}

/// Cohort tag of a video: the part of its id before the first `-`
/// (REAL-Colon ids look like `001-013`), or the empty string.
pub fn cohort_of(video_id: &str) -> &str {
    video_id.split_once('-').map(|(c, _)| c).unwrap_or("")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub cohort: String,
    pub tracklets: Vec<Tracklet>,
    pub entity_ids: BTreeSet<String>,
}

impl VideoRecord {
    /// Builds a record; tracklets are stored sorted by id.
    pub fn new(video_id: impl Into<String>, mut tracklets: Vec<Tracklet>) -> Result<Self> {
        let video_id = video_id.into();
        if let Some(t) = tracklets.iter().find(|t| t.video_id != video_id) {
            return Err(Error::Data(format!(
                "tracklet `{}` belongs to video `{}`, not `{video_id}`",
                t.tracklet_id, t.video_id
            )));
        }
        tracklets.sort_by(|a, b| a.tracklet_id.cmp(&b.tracklet_id));
        let entity_ids = tracklets.iter().map(|t| t.entity_id.clone()).collect();
        Ok(Self {
            cohort: cohort_of(&video_id).to_string(),
            video_id,
            tracklets,
            entity_ids,
        })
    }

    pub fn n_tracklets(&self) -> usize {
        self.tracklets.len()
    }

    pub fn n_entities(&self) -> usize {
        self.entity_ids.len()
    }

    pub fn n_annotations(&self) -> usize {
        self.tracklets.iter().map(Tracklet::len).sum()
    }
}

/// Splits annotations into tracklets.
///
/// Within each `(video_id, entity_id)` group, sorted by frame, a new tracklet
/// starts whenever the frame is not the predecessor plus one or the IoU with
/// the previous box is below `iou_min`. Output is sorted by tracklet id and
/// does not depend on input order.
pub fn build_tracklets(annotations: &[FrameAnnotation], iou_min: f64) -> Result<Vec<Tracklet>> {
    if !(0.0..=1.0).contains(&iou_min) {
        return Err(Error::Config(format!("iou_min {iou_min} outside [0, 1]")));
    }
    let mut groups: BTreeMap<(&str, &str), Vec<(u64, BBox)>> = BTreeMap::new();
    for a in annotations {
        groups
            .entry((a.video_id.as_str(), a.entity_id.as_str()))
            .or_default()
            .push((a.frame_idx, a.bbox));
    }

    let mut duplicates = Vec::new();
    for ((video, entity), frames) in groups.iter_mut() {
        frames.sort_by_key(|(f, _)| *f);
        for w in frames.windows(2) {
            if w[0].0 == w[1].0 {
                duplicates.push(format!(
                    "video_id={video} frame_idx={} entity_id={entity}",
                    w[0].0
                ));
            }
        }
    }
    if !duplicates.is_empty() {
        duplicates.dedup();
        return Err(Error::DuplicateAnnotations(duplicates));
    }

    let groups: Vec<_> = groups.into_iter().collect();
    let per_group: Result<Vec<Vec<Tracklet>>> = groups
        .par_iter()
        .map(|((video, entity), frames)| split_group(video, entity, frames, iou_min))
        .collect();
    let mut tracklets: Vec<Tracklet> = per_group?.into_iter().flatten().collect();
    tracklets.sort_by(|a, b| a.tracklet_id.cmp(&b.tracklet_id));
    Ok(tracklets)
}

fn split_group(
    video: &str,
    entity: &str,
    frames: &[(u64, BBox)],
    iou_min: f64,
) -> Result<Vec<Tracklet>> {
    let mut out = Vec::new();
    let mut run: Vec<(u64, BBox)> = Vec::new();
    for &(frame, bbox) in frames {
        if let Some(&(prev_frame, prev_box)) = run.last() {
            let linked = frame == prev_frame + 1 && iou(&prev_box, &bbox)? >= iou_min;
            if !linked {
                out.push(make_tracklet(video, entity, std::mem::take(&mut run)));
            }
        }
        run.push((frame, bbox));
    }
    if !run.is_empty() {
        out.push(make_tracklet(video, entity, run));
    }
    Ok(out)
}

fn make_tracklet(video: &str, entity: &str, frames: Vec<(u64, BBox)>) -> Tracklet {
    Tracklet {
        tracklet_id: tracklet_id(video, entity, frames[0].0),
        video_id: video.to_string(),
        entity_id: entity.to_string(),
        frames,
    }
}

/// Groups tracklets into per-video records, sorted by video id.
pub fn group_videos(tracklets: Vec<Tracklet>) -> Result<Vec<VideoRecord>> {
    let mut by_video: BTreeMap<String, Vec<Tracklet>> = BTreeMap::new();
    for t in tracklets {
        by_video.entry(t.video_id.clone()).or_default().push(t);
    }
    by_video
        .into_iter()
        .map(|(v, ts)| VideoRecord::new(v, ts))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Val, SplitName::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub split_name: SplitName,
    pub video_ids: Vec<String>,
}

/// The full train/val/test manifest, as stored on disk.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    #[serde(default)]
    pub train: Vec<String>,
    #[serde(default)]
    pub val: Vec<String>,
    #[serde(default)]
    pub test: Vec<String>,
}

impl Splits {
    pub fn get(&self, split: SplitName) -> &[String] {
        match split {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }

    pub fn manifests(&self) -> Vec<SplitManifest> {
        SplitName::ALL
            .iter()
            .map(|&s| SplitManifest {
                split_name: s,
                video_ids: self.get(s).to_vec(),
            })
            .collect()
    }

    /// Checks that ids are unique within each split and that splits are
    /// pairwise disjoint.
    pub fn validate(&self) -> Result<()> {
        let mut owner: BTreeMap<&str, SplitName> = BTreeMap::new();
        for split in SplitName::ALL {
            for id in self.get(split) {
                if let Some(prev) = owner.insert(id.as_str(), split) {
                    return Err(Error::SplitLeakage {
                        video_id: id.clone(),
                        a: prev.to_string(),
                        b: split.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let splits: Splits = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        splits.validate()?;
        Ok(splits)
    }
}
