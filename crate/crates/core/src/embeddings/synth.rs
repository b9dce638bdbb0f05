//! Synthetic videos with known entity structure, for exercising the pipeline
//! without real encoder outputs.
//!
//! Every video gets its own entity centers, drawn on the sphere of radius
//! `inter_sep` and rejection-sampled until pairwise distances are at least
//! `inter_sep`. Frame embeddings are the entity center plus isotropic
//! Gaussian noise with per-component standard deviation `intra_sigma`.
//! Tracklets of different entities are interleaved in time with gaps, so
//! rebuilding tracklets from the emitted annotations reproduces them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EmbeddingTable, FrameKey, Granularity};
use crate::error::{Error, Result};
use crate::model::{tracklet_id, BBox, FrameAnnotation, Tracklet, VideoRecord};

const CENTER_ATTEMPTS: usize = 1000;
const FRAME_GAP: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub dim: usize,
    pub n_videos: usize,
    pub entities_per_video: usize,
    pub tracklets_per_entity: usize,
    pub frames_per_tracklet: usize,
    pub intra_sigma: f64,
    pub inter_sep: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            n_videos: 10,
            entities_per_video: 3,
            tracklets_per_entity: 5,
            frames_per_tracklet: 8,
            intra_sigma: 0.1,
            inter_sep: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("n_videos", self.n_videos),
            ("entities_per_video", self.entities_per_video),
            ("tracklets_per_entity", self.tracklets_per_entity),
            ("frames_per_tracklet", self.frames_per_tracklet),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.intra_sigma > 0.0 && self.intra_sigma.is_finite()) {
            return Err(Error::Config("intra_sigma must be positive".into()));
        }
        if !(self.inter_sep > 0.0 && self.inter_sep.is_finite()) {
            return Err(Error::Config("inter_sep must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub videos: Vec<VideoRecord>,
    /// Frame-granularity embeddings covering every annotated frame.
    pub table: EmbeddingTable,
    /// Entity centers per video, in entity order.
    pub centers: Vec<Vec<Vec<f64>>>,
}

impl SynthData {
    pub fn annotations(&self) -> Vec<FrameAnnotation> {
        self.videos
            .iter()
            .flat_map(|v| &v.tracklets)
            .flat_map(|t| {
                t.frames.iter().map(move |(f, b)| FrameAnnotation {
                    video_id: t.video_id.clone(),
                    frame_idx: *f,
                    entity_id: t.entity_id.clone(),
                    bbox: *b,
                })
            })
            .collect()
    }
}

pub fn video_name(v: usize) -> String {
    format!("synth-{v:03}")
}

pub fn entity_name(video: &str, e: usize) -> String {
    format!("{video}_p{e}")
}

pub fn synthesize(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let noise = Normal::new(0.0, cfg.intra_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut table = EmbeddingTable::new(cfg.dim, Granularity::Frame)?;
    let mut videos = Vec::with_capacity(cfg.n_videos);
    let mut all_centers = Vec::with_capacity(cfg.n_videos);

    for v in 0..cfg.n_videos {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(v as u64);
        let video_id = video_name(v);
        let centers = sample_centers(cfg, &mut rng)?;

        let mut tracklets = Vec::new();
        let mut cursor: u64 = 0;
        for _round in 0..cfg.tracklets_per_entity {
            for (e, center) in centers.iter().enumerate() {
                let entity_id = entity_name(&video_id, e);
                let bbox = entity_box(e);
                let frames: Vec<(u64, BBox)> = (0..cfg.frames_per_tracklet as u64)
                    .map(|k| (cursor + k, bbox))
                    .collect();
                for (frame, _) in &frames {
                    let vector: Vec<f32> = center
                        .iter()
                        .map(|c| (c + noise.sample(&mut rng)) as f32)
                        .collect();
                    table.insert_frame(&FrameKey::new(&video_id, *frame, &entity_id), vector)?;
                }
                tracklets.push(Tracklet {
                    tracklet_id: tracklet_id(&video_id, &entity_id, cursor),
                    video_id: video_id.clone(),
                    entity_id,
                    frames,
                });
                cursor += cfg.frames_per_tracklet as u64 + FRAME_GAP;
            }
        }
        videos.push(VideoRecord::new(video_id, tracklets)?);
        all_centers.push(centers);
    }
    Ok(SynthData {
        videos,
        table,
        centers: all_centers,
    })
}

fn sample_centers(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(cfg.entities_per_video);
    while centers.len() < cfg.entities_per_video {
        let mut placed = false;
        for _ in 0..CENTER_ATTEMPTS {
            let candidate = sphere_point(cfg.dim, cfg.inter_sep, rng);
            if centers
                .iter()
                .all(|c| euclidean(c, &candidate) >= cfg.inter_sep)
            {
                centers.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::SeparationImpossible {
                count: cfg.entities_per_video,
                dim: cfg.dim,
                sep: cfg.inter_sep,
            });
        }
    }
    Ok(centers)
}

fn sphere_point(dim: usize, radius: f64, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x * radius / norm).collect();
        }
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn entity_box(e: usize) -> BBox {
    let x = 20.0 + 60.0 * (e % 8) as f64;
    let y = 20.0 + 60.0 * (e / 8) as f64;
    BBox::new(x, y, x + 50.0, y + 40.0).expect("static box is valid")
}
