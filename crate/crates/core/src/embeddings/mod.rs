//! Appearance embeddings at frame or tracklet granularity, and the mean
//! aggregation that turns frame embeddings into one vector per tracklet.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Tracklet, VideoRecord};

pub mod format;
pub mod synth;

pub use format::{load_embeddings, read_binary, read_csv, write_binary, write_csv};
pub use synth::{synthesize, SynthConfig, SynthData};

/// Default frame stride when encoding a tracklet from frame embeddings.
pub const DEFAULT_STRIDE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Frame,
    Tracklet,
}

impl Granularity {
    pub(crate) fn to_byte(self) -> u8 {
        match self {
            Granularity::Frame => 0,
            Granularity::Tracklet => 1,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Granularity::Frame),
            1 => Some(Granularity::Tracklet),
            _ => None,
        }
    }
}

/// Key of a frame embedding, serialised as `video_id/frame_idx/entity_id`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameKey {
    pub video_id: String,
    pub frame_idx: u64,
    pub entity_id: String,
}

impl FrameKey {
    pub fn new(video_id: &str, frame_idx: u64, entity_id: &str) -> Self {
        Self {
            video_id: video_id.to_string(),
            frame_idx,
            entity_id: entity_id.to_string(),
        }
    }
}

impl fmt::Display for FrameKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.video_id, self.frame_idx, self.entity_id)
    }
}

impl FromStr for FrameKey {
    type Err = Error;

    /// The frame index is the second-to-last `/` field, so video ids may
    /// themselves contain `/` but entity ids may not.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Data(format!("`{s}` is not a `video_id/frame_idx/entity_id` key"));
        let (rest, entity) = s.rsplit_once('/').ok_or_else(bad)?;
        let (video, frame) = rest.rsplit_once('/').ok_or_else(bad)?;
        if video.is_empty() || entity.is_empty() {
            return Err(bad());
        }
        let frame_idx = frame.parse().map_err(|_| bad())?;
        Ok(FrameKey::new(video, frame_idx, entity))
    }
}

/// Vectors of one dimension keyed by frame or by tracklet id. All components
/// are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    granularity: Granularity,
    entries: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, granularity: Granularity) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dim must be positive".into()));
        }
        Ok(Self {
            dim,
            granularity,
            entries: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts under a raw key. Frame tables require a parseable
    /// [`FrameKey`]. Replaces any previous vector for the key.
    pub fn insert(&mut self, key: String, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                key,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if !vector.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(key));
        }
        if self.granularity == Granularity::Frame {
            key.parse::<FrameKey>()?;
        }
        self.entries.insert(key, vector);
        Ok(())
    }

    pub fn insert_frame(&mut self, key: &FrameKey, vector: Vec<f32>) -> Result<()> {
        self.insert(key.to_string(), vector)
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    fn require(&self, key: &str) -> Result<&[f32]> {
        self.get(key)
            .ok_or_else(|| Error::MissingKey(key.to_string()))
    }
}

/// Positions `0, s, 2s, ...` below `n`; `ceil(n / s)` of them.
pub fn stride_positions(n: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..n).step_by(stride.max(1))
}

/// Mean of the frame embeddings at positions `0, s, 2s, ...` of the
/// tracklet's frame list.
pub fn aggregate_tracklet(
    tracklet: &Tracklet,
    table: &EmbeddingTable,
    stride: usize,
) -> Result<Vec<f64>> {
    if stride == 0 {
        return Err(Error::Config("stride must be positive".into()));
    }
    if table.granularity != Granularity::Frame {
        return Err(Error::Config(
            "aggregation needs a frame-granularity table".into(),
        ));
    }
    if tracklet.is_empty() {
        return Err(Error::Empty("tracklet"));
    }
    let mut sum = vec![0.0f64; table.dim];
    let mut count = 0usize;
    for pos in stride_positions(tracklet.len(), stride) {
        let frame = tracklet.frames[pos].0;
        let key = FrameKey::new(&tracklet.video_id, frame, &tracklet.entity_id).to_string();
        for (acc, &v) in sum.iter_mut().zip(table.require(&key)?) {
            *acc += f64::from(v);
        }
        count += 1;
    }
    let n = count as f64;
    sum.iter_mut().for_each(|v| *v /= n);
    Ok(sum)
}

/// One vector per tracklet of `video`: aggregated from frames, or looked up
/// directly in a tracklet table.
pub fn tracklet_embeddings(
    video: &VideoRecord,
    table: &EmbeddingTable,
    stride: usize,
) -> Result<BTreeMap<String, Vec<f64>>> {
    video
        .tracklets
        .iter()
        .map(|t| {
            let v = match table.granularity {
                Granularity::Frame => aggregate_tracklet(t, table, stride)?,
                Granularity::Tracklet => table
                    .require(&t.tracklet_id)?
                    .iter()
                    .map(|&x| f64::from(x))
                    .collect(),
            };
            Ok((t.tracklet_id.clone(), v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tracklet_id, BBox};

    fn tracklet(len: u64) -> Tracklet {
        let b = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        Tracklet {
            tracklet_id: tracklet_id("v", "e", 10),
            video_id: "v".into(),
            entity_id: "e".into(),
            frames: (10..10 + len).map(|f| (f, b)).collect(),
        }
    }

    fn frame_table(t: &Tracklet, f: impl Fn(usize) -> Vec<f32>) -> EmbeddingTable {
        let mut table = EmbeddingTable::new(2, Granularity::Frame).unwrap();
        for (pos, (frame, _)) in t.frames.iter().enumerate() {
            table
                .insert_frame(&FrameKey::new("v", *frame, "e"), f(pos))
                .unwrap();
        }
        table
    }

    #[test]
    fn single_frame_is_identity() {
        let t = tracklet(1);
        let table = frame_table(&t, |_| vec![1.5, -2.0]);
        assert_eq!(aggregate_tracklet(&t, &table, 4).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn stride_four_over_eight_frames_uses_positions_zero_and_four() {
        let t = tracklet(8);
        let table = frame_table(&t, |p| vec![p as f32, (p * p) as f32]);
        assert_eq!(aggregate_tracklet(&t, &table, 4).unwrap(), vec![2.0, 8.0]);
    }

    #[test]
    fn equal_vectors_average_to_themselves() {
        let t = tracklet(9);
        let table = frame_table(&t, |_| vec![0.25, 3.0]);
        assert_eq!(aggregate_tracklet(&t, &table, 4).unwrap(), vec![0.25, 3.0]);
    }

    #[test]
    fn missing_frame_is_named() {
        let t = tracklet(5);
        let mut table = frame_table(&t, |_| vec![0.0, 0.0]);
        table.entries.remove("v/14/e");
        match aggregate_tracklet(&t, &table, 4) {
            Err(Error::MissingKey(k)) => assert_eq!(k, "v/14/e"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn selected_positions() {
        assert_eq!(stride_positions(9, 4).collect::<Vec<_>>(), vec![0, 4, 8]);
        assert_eq!(stride_positions(3, 4).collect::<Vec<_>>(), vec![0]);
        for n in 1..40 {
            for s in 1..6 {
                assert_eq!(stride_positions(n, s).count(), n.div_ceil(s));
            }
        }
    }

    #[test]
    fn tracklet_table_passthrough_and_empty_video() {
        let t = tracklet(3);
        let mut table = EmbeddingTable::new(2, Granularity::Tracklet).unwrap();
        table.insert(t.tracklet_id.clone(), vec![0.1, 0.2]).unwrap();
        let video = VideoRecord::new("v", vec![t]).unwrap();
        let out = tracklet_embeddings(&video, &table, 4).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(
            out["v:e:0000010"],
            vec![f64::from(0.1f32), f64::from(0.2f32)]
        );

        let empty = VideoRecord::new("w", vec![]).unwrap();
        assert!(tracklet_embeddings(&empty, &table, 4).unwrap().is_empty());
    }

    #[test]
    fn frame_table_matches_aggregate() {
        let t = tracklet(11);
        let table = frame_table(&t, |p| vec![p as f32 * 0.5, 1.0]);
        let video = VideoRecord::new("v", vec![t.clone()]).unwrap();
        let out = tracklet_embeddings(&video, &table, 3).unwrap();
        assert_eq!(
            out[&t.tracklet_id],
            aggregate_tracklet(&t, &table, 3).unwrap()
        );
    }

    #[test]
    fn insert_validates() {
        let mut table = EmbeddingTable::new(2, Granularity::Frame).unwrap();
        assert!(matches!(
            table.insert("v/1/e".into(), vec![1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            table.insert("v/1/e".into(), vec![1.0, f32::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(table
            .insert("not-a-frame-key".into(), vec![1.0, 1.0])
            .is_err());
        assert!(EmbeddingTable::new(0, Granularity::Tracklet).is_err());
    }

    #[test]
    fn frame_key_round_trip() {
        let k: FrameKey = "a/b/17/p1".parse().unwrap();
        assert_eq!(k, FrameKey::new("a/b", 17, "p1"));
        assert_eq!(k.to_string(), "a/b/17/p1");
        assert!("v:e:0000001".parse::<FrameKey>().is_err());
        assert!("v/x/e".parse::<FrameKey>().is_err());
    }
}
