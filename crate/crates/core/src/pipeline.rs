//! End-to-end runs: annotations to tracklets, tracklet embeddings, per-video
//! similarity matrices, clustering, evaluation and sweeps.
//!
//! Every command writes into `output_dir` and embeds the resolved
//! [`RunConfig`] in its JSON outputs. Outputs contain no timestamps and do not
//! depend on the thread count.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::annotations::{load_annotations, write_annotations};
use crate::clustering::{ClusterAssignment, ClusteringConfig};
use crate::embeddings::{
    load_embeddings, synthesize, tracklet_embeddings, write_binary, EmbeddingTable, Granularity,
    SynthConfig, DEFAULT_STRIDE,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    cluster_videos, evaluate_with, sweep, write_ledger, Conventions, EvalReport, PreparedVideo,
    SweepGrid, SweepMode, SweepOutcome,
};
use crate::model::{
    build_tracklets, cohort_of, group_videos, SplitName, Splits, VideoRecord, DEFAULT_IOU_MIN,
};
use crate::similarity::{distance_matrix, normalize_similarity, Metric, Normalization};

pub const DEFAULT_RHO: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub annotations: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Split to cluster or evaluate; `test` when a split file is given, all
    /// videos otherwise.
    pub split: Option<SplitName>,
    pub metric: Metric,
    pub stride: usize,
    pub normalization: Normalization,
    pub iou_min: f64,
    /// Granularity of a CSV embedding file; inferred from keys when unset.
    pub embedding_granularity: Option<Granularity>,
    pub clustering: ClusteringConfig,
    pub grid: Option<SweepGrid>,
    pub rho: f64,
    pub sweep_mode: SweepMode,
    pub conventions: Conventions,
    /// Worker threads; all available cores when unset.
    pub parallelism: Option<usize>,
    /// Overrides the jitter seed of the clustering config and sweep grid.
    pub seed: Option<u64>,
    /// Fail when any video's clustering did not converge.
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            annotations: None,
            embeddings: None,
            splits: None,
            output_dir: PathBuf::from("out"),
            split: None,
            metric: Metric::default(),
            stride: DEFAULT_STRIDE,
            normalization: Normalization::default(),
            iou_min: DEFAULT_IOU_MIN,
            embedding_granularity: None,
            clustering: ClusteringConfig::default(),
            grid: None,
            rho: DEFAULT_RHO,
            sweep_mode: SweepMode::default(),
            conventions: Conventions::default(),
            parallelism: None,
            seed: None,
            strict: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `seed` and checks ranges and input paths.
    pub fn resolve(mut self) -> Result<Self> {
        if let Some(seed) = self.seed {
            self.clustering.jitter_seed = seed;
            if let Some(grid) = &mut self.grid {
                grid.base
                    .get_or_insert_with(ClusteringConfig::default)
                    .jitter_seed = seed;
            }
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho {} outside (0, 1)", self.rho)));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        if self.parallelism == Some(0) {
            return Err(Error::Config("parallelism must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.iou_min) {
            return Err(Error::Config(format!(
                "iou_min {} outside [0, 1]",
                self.iou_min
            )));
        }
        for (name, p) in [
            ("annotations", &self.annotations),
            ("embeddings", &self.embeddings),
            ("splits", &self.splits),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "{name} path {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        self.clustering.validate()?;
        Ok(self)
    }

    fn require<'a>(&self, p: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        p.as_deref()
            .ok_or_else(|| Error::Config(format!("`{name}` path is required for this command")))
    }

    /// Runs `f` on a pool with `parallelism` threads.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.parallelism {
            b = b.num_threads(n);
        }
        let pool = b.build().map_err(|e| Error::Config(e.to_string()))?;
        pool.install(f)
    }
}

/// All videos of an annotation file, sorted by id.
pub fn load_videos(annotations: &Path, iou_min: f64) -> Result<Vec<VideoRecord>> {
    let rows = load_annotations(annotations)?;
    group_videos(build_tracklets(&rows, iou_min)?)
}

/// The videos of `split` in manifest order.
pub fn select_split(
    videos: &[VideoRecord],
    splits: &Splits,
    split: SplitName,
) -> Result<Vec<VideoRecord>> {
    let by_id: BTreeMap<&str, &VideoRecord> =
        videos.iter().map(|v| (v.video_id.as_str(), v)).collect();
    splits
        .get(split)
        .iter()
        .map(|id| {
            by_id.get(id.as_str()).map(|v| (*v).clone()).ok_or_else(|| {
                Error::Data(format!(
                    "video `{id}` of split `{split}` has no annotations"
                ))
            })
        })
        .collect()
}

/// Tracklet embeddings and normalised similarity matrix per video.
pub fn prepare_videos(
    videos: &[VideoRecord],
    table: &EmbeddingTable,
    stride: usize,
    metric: Metric,
    normalization: Normalization,
) -> Result<Vec<PreparedVideo>> {
    videos
        .par_iter()
        .map(|v| {
            let emb = tracklet_embeddings(v, table, stride)?;
            let m = normalize_similarity(distance_matrix(&emb, metric)?, normalization);
            Ok(PreparedVideo {
                video: v.clone(),
                matrix: m,
            })
        })
        .collect()
}

/// Every tracklet in its own cluster.
pub fn no_reid(videos: &[VideoRecord]) -> Vec<ClusterAssignment> {
    videos
        .iter()
        .map(|v| {
            ClusterAssignment::identity(
                &v.video_id,
                v.tracklets.iter().map(|t| t.tracklet_id.as_str()),
            )
        })
        .collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn prepare_output(run: &RunConfig) -> Result<()> {
    fs::create_dir_all(&run.output_dir).map_err(|e| Error::io(&run.output_dir, e))?;
    write_json(&run.output_dir.join("config.json"), run)
}

fn check_converged(run: &RunConfig, assignments: &[ClusterAssignment]) -> Result<()> {
    let failed: Vec<String> = assignments
        .iter()
        .filter(|a| !a.converged)
        .map(|a| a.video_id.clone())
        .collect();
    if failed.is_empty() || !run.strict {
        return Ok(());
    }
    Err(Error::NotConverged(failed))
}

struct Inputs {
    videos: Vec<VideoRecord>,
    splits: Option<Splits>,
}

fn load_inputs(run: &RunConfig) -> Result<Inputs> {
    let videos = load_videos(run.require(&run.annotations, "annotations")?, run.iou_min)?;
    let splits = run.splits.as_deref().map(Splits::load).transpose()?;
    Ok(Inputs { videos, splits })
}

fn chosen_videos(run: &RunConfig, inputs: &Inputs) -> Result<Vec<VideoRecord>> {
    match (&inputs.splits, run.split) {
        (Some(s), split) => select_split(&inputs.videos, s, split.unwrap_or(SplitName::Test)),
        (None, Some(split)) => Err(Error::Config(format!(
            "split `{split}` requested without a split file"
        ))),
        (None, None) => Ok(inputs.videos.clone()),
    }
}

fn load_table(run: &RunConfig) -> Result<EmbeddingTable> {
    load_embeddings(
        run.require(&run.embeddings, "embeddings")?,
        run.embedding_granularity,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackletRow {
    pub video_id: String,
    pub cohort: String,
    pub n_tracklets: usize,
    pub n_entities: usize,
    pub n_annotations: usize,
    pub no_reid_fr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackletsOutput {
    pub rows: Vec<TrackletRow>,
    /// Identity clustering evaluated on the same videos.
    pub no_reid: EvalReport,
}

/// Writes `tracklets.jsonl`, `tracklet_summary.csv` and
/// `tracklet_summary.json` (No-ReID FR per video and overall).
pub fn cmd_tracklets(run: &RunConfig) -> Result<TrackletsOutput> {
    let run = run.clone().resolve()?;
    run.install(|| {
        let inputs = load_inputs(&run)?;
        let videos = chosen_videos(&run, &inputs)?;
        prepare_output(&run)?;
        let listing: Vec<Value> = videos
            .iter()
            .flat_map(|v| &v.tracklets)
            .map(|t| {
                json!({
                    "tracklet_id": t.tracklet_id,
                    "video_id": t.video_id,
                    "entity_id": t.entity_id,
                    "start_frame": t.start_frame(),
                    "end_frame": t.end_frame(),
                    "n_frames": t.len(),
                })
            })
            .collect();
        write_jsonl(&run.output_dir.join("tracklets.jsonl"), &listing)?;

        let no_reid = evaluate_with(&no_reid(&videos), &videos, run.rho, run.conventions)?;
        let rows: Vec<TrackletRow> = videos
            .iter()
            .map(|v| TrackletRow {
                video_id: v.video_id.clone(),
                cohort: cohort_of(&v.video_id).to_string(),
                n_tracklets: v.n_tracklets(),
                n_entities: v.n_entities(),
                n_annotations: v.n_annotations(),
                no_reid_fr: no_reid.per_video[&v.video_id].fr,
            })
            .collect();
        let csv_path = run.output_dir.join("tracklet_summary.csv");
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::Data(e.to_string()))?;
        for r in &rows {
            w.serialize(r).map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        write_json(
            &run.output_dir.join("tracklet_summary.json"),
            &json!({ "run_config": &run, "videos": &rows, "no_reid": &no_reid }),
        )?;
        Ok(TrackletsOutput { rows, no_reid })
    })
}

/// Writes a synthetic data set: `annotations.jsonl`, frame embeddings in
/// `embeddings.pem`, `splits.json` (first half of the videos `val`, the rest
/// `test`) and the generator config.
pub fn cmd_synth(cfg: &SynthConfig, out: &Path) -> Result<()> {
    let data = synthesize(cfg)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_annotations(&out.join("annotations.jsonl"), &data.annotations())?;
    write_binary(&out.join("embeddings.pem"), &data.table)?;
    let ids: Vec<String> = data.videos.iter().map(|v| v.video_id.clone()).collect();
    let half = ids.len() / 2;
    let splits = Splits {
        train: Vec::new(),
        val: ids[..half].to_vec(),
        test: ids[half..].to_vec(),
    };
    write_json(&out.join("splits.json"), &splits)?;
    write_json(&out.join("synth_config.json"), cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutput {
    pub assignments: Vec<ClusterAssignment>,
    pub report: EvalReport,
}

/// Clusters the chosen split with the fixed config; writes
/// `assignments.jsonl` and `report.json`.
pub fn cmd_cluster(run: &RunConfig) -> Result<ClusterOutput> {
    let run = run.clone().resolve()?;
    run.install(|| {
        let inputs = load_inputs(&run)?;
        let videos = chosen_videos(&run, &inputs)?;
        let table = load_table(&run)?;
        let prepared = prepare_videos(&videos, &table, run.stride, run.metric, run.normalization)?;
        prepare_output(&run)?;
        let assignments = cluster_videos(&prepared, &run.clustering)?;
        let mut report = evaluate_with(&assignments, &videos, run.rho, run.conventions)?;
        report.config = Some(run.clustering.clone());
        write_jsonl(&run.output_dir.join("assignments.jsonl"), &assignments)?;
        write_json(
            &run.output_dir.join("report.json"),
            &json!({ "run_config": &run, "report": &report }),
        )?;
        check_converged(&run, &assignments)?;
        Ok(ClusterOutput {
            assignments,
            report,
        })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRunOutput {
    pub val: SweepOutcome,
    pub test: ClusterOutput,
}

/// Sweeps the grid on `val`, freezes the winner and evaluates it once on
/// `test`. Writes `ledger.csv`, `sweep.json`, `test_assignments.jsonl` and
/// `test_report.json`.
pub fn cmd_sweep(run: &RunConfig) -> Result<SweepRunOutput> {
    let run = run.clone().resolve()?;
    let grid = run
        .grid
        .clone()
        .ok_or_else(|| Error::Config("`grid` is required for a sweep".into()))?;
    run.install(|| {
        let inputs = load_inputs(&run)?;
        let splits = inputs
            .splits
            .as_ref()
            .ok_or_else(|| Error::Config("a split file is required for a sweep".into()))?;
        let val = select_split(&inputs.videos, splits, SplitName::Val)?;
        let test = select_split(&inputs.videos, splits, SplitName::Test)?;
        if val.is_empty() || test.is_empty() {
            return Err(Error::Config(
                "sweep needs non-empty val and test splits".into(),
            ));
        }
        let table = load_table(&run)?;
        let val_prepared = prepare_videos(&val, &table, run.stride, run.metric, run.normalization)?;
        let outcome = sweep(
            &grid,
            &val_prepared,
            run.rho,
            run.sweep_mode,
            run.conventions,
        )?;
        drop(val_prepared);

        let test_prepared =
            prepare_videos(&test, &table, run.stride, run.metric, run.normalization)?;
        let assignments = cluster_videos(&test_prepared, &outcome.best_config)?;
        let mut report = evaluate_with(&assignments, &test, run.rho, run.conventions)?;
        report.config = Some(outcome.best_config.clone());

        prepare_output(&run)?;
        write_ledger(&run.output_dir.join("ledger.csv"), &outcome)?;
        write_json(
            &run.output_dir.join("sweep.json"),
            &json!({ "run_config": &run, "sweep": &outcome }),
        )?;
        write_jsonl(&run.output_dir.join("test_assignments.jsonl"), &assignments)?;
        write_json(
            &run.output_dir.join("test_report.json"),
            &json!({ "run_config": &run, "report": &report }),
        )?;
        check_converged(&run, &assignments)?;
        Ok(SweepRunOutput {
            val: outcome,
            test: ClusterOutput {
                assignments,
                report,
            },
        })
    })
}

pub fn load_assignments(path: &Path) -> Result<Vec<ClusterAssignment>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Evaluates an existing assignment file against the chosen split; writes
/// `eval_report.json`.
pub fn cmd_eval(run: &RunConfig, assignments: &Path) -> Result<EvalReport> {
    let run = run.clone().resolve()?;
    run.install(|| {
        let inputs = load_inputs(&run)?;
        let videos = chosen_videos(&run, &inputs)?;
        let a = load_assignments(assignments)?;
        let report = evaluate_with(&a, &videos, run.rho, run.conventions)?;
        prepare_output(&run)?;
        write_json(
            &run.output_dir.join("eval_report.json"),
            &json!({ "run_config": &run, "assignments": assignments, "report": &report }),
        )?;
        Ok(report)
    })
}

/// Text table for a report file written by any command (the `report`,
/// `no_reid` or `sweep.best_report` member, or a bare report).
pub fn render_report(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let inner = v
        .get("report")
        .or_else(|| v.get("no_reid"))
        .or_else(|| v.get("sweep").and_then(|s| s.get("best_report")))
        .unwrap_or(&v);
    let r: EvalReport = serde_json::from_value(inner.clone())
        .map_err(|e| Error::Data(format!("{}: not a report: {e}", path.display())))?;
    Ok(format_report(&r))
}

pub fn format_report(r: &EvalReport) -> String {
    let mut out = format!(
        "{:<24} {:>9} {:>9} {:>9} {:>8} {:>6}\n",
        "video_id", "tracklets", "entities", "clusters", "FR", "FP"
    );
    for (id, e) in &r.per_video {
        out.push_str(&format!(
            "{:<24} {:>9} {:>9} {:>9} {:>8.3} {:>6}\n",
            id, e.n_tracklets, e.n_entities, e.n_clusters, e.fr, e.n_false_positives
        ));
    }
    out.push_str(&format!(
        "FR {:.3} +/- {:.3}  FPR {:.4} (pooled {:.4}, video mean {:.4})  rho {}{}\n",
        r.fr_macro,
        r.fr_std,
        r.fpr(),
        r.fpr_pooled,
        r.fpr_video_mean,
        r.rho,
        if r.converged { "" } else { "  [not converged]" }
    ));
    out
}
