use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use polypcount::annotations::{realcolon, write_annotations};
use polypcount::embeddings::SynthConfig;
use polypcount::evaluation::SweepGrid;
use polypcount::model::SplitName;
use polypcount::pipeline::{self, RunConfig};
use polypcount::sampling::{sample_fragment_pair, sample_frame_pair, SamplingConfig};
use polypcount::similarity::Metric;
use polypcount::{Error, Result};

#[derive(Parser)]
#[command(
    name = "polypcount",
    version,
    about = "Tracklet re-association for polyp counting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build tracklets and the No-ReID summary.
    Tracklets(RunArgs),
    /// Write a synthetic data set.
    Synth(SynthArgs),
    /// Cluster one split with a fixed config and evaluate it.
    Cluster(RunArgs),
    /// Sweep a grid on val, then evaluate the winner on test.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Sweep grid JSON; overrides `grid` in the config file.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Evaluate an existing assignment file.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        assignments: PathBuf,
    },
    /// Print a report file as a table.
    Report { path: PathBuf },
    /// Convert a directory of per-frame VOC XML annotations to JSONL.
    Convert {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print sampled index pairs as CSV.
    Sample(SampleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run config JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long = "out")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Target FPR [default: 0.05]
    #[arg(long)]
    rho: Option<f64>,
    /// Frame stride for tracklet embeddings [default: 4]
    #[arg(long)]
    stride: Option<usize>,
    /// euclidean or cosine [default: euclidean]
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Exit with status 4 when any clustering did not converge.
    #[arg(long)]
    strict: bool,
}

impl RunArgs {
    fn build(&self) -> Result<RunConfig> {
        let mut run = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
            if v.is_some() {
                *slot = v.clone();
            }
        };
        set(&mut run.annotations, &self.annotations);
        set(&mut run.embeddings, &self.embeddings);
        set(&mut run.splits, &self.splits);
        if let Some(s) = &self.split {
            run.split = Some(s.parse::<SplitName>()?);
        }
        if let Some(o) = &self.output_dir {
            run.output_dir = o.clone();
        }
        if self.seed.is_some() {
            run.seed = self.seed;
        }
        if let Some(r) = self.rho {
            run.rho = r;
        }
        if let Some(s) = self.stride {
            run.stride = s;
        }
        if let Some(m) = &self.metric {
            run.metric = m.parse::<Metric>()?;
        }
        if self.parallelism.is_some() {
            run.parallelism = self.parallelism;
        }
        run.strict |= self.strict;
        Ok(run)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Generator config JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_videos: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    intra_sigma: Option<f64>,
    #[arg(long)]
    inter_sep: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleKind {
    Frame,
    Fragment,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_enum, default_value = "frame")]
    kind: SampleKind,
    /// Tracklet length.
    #[arg(long)]
    length: usize,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30.0)]
    sigma: f64,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Tracklets(a) => {
            let out = pipeline::cmd_tracklets(&a.build()?)?;
            print!("{}", pipeline::format_report(&out.no_reid));
        }
        Command::Synth(a) => {
            let mut cfg: SynthConfig = match &a.config {
                Some(p) => read_json(p)?,
                None => SynthConfig::default(),
            };
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(v) = a.n_videos {
                cfg.n_videos = v;
            }
            if let Some(v) = a.dim {
                cfg.dim = v;
            }
            if let Some(v) = a.intra_sigma {
                cfg.intra_sigma = v;
            }
            if let Some(v) = a.inter_sep {
                cfg.inter_sep = v;
            }
            pipeline::cmd_synth(&cfg, &a.out)?;
        }
        Command::Cluster(a) => {
            let out = pipeline::cmd_cluster(&a.build()?)?;
            print!("{}", pipeline::format_report(&out.report));
        }
        Command::Sweep { run, grid } => {
            let mut cfg = run.build()?;
            if let Some(g) = grid {
                cfg.grid = Some(read_json::<SweepGrid>(&g)?);
            }
            let out = pipeline::cmd_sweep(&cfg)?;
            println!("selected grid point {}", out.val.best_index);
            print!("{}", pipeline::format_report(&out.test.report));
        }
        Command::Eval { run, assignments } => {
            let r = pipeline::cmd_eval(&run.build()?, &assignments)?;
            print!("{}", pipeline::format_report(&r));
        }
        Command::Report { path } => print!("{}", pipeline::render_report(&path)?),
        Command::Convert { root, out } => {
            let rows = realcolon::convert_dir(&root)?;
            write_annotations(&out, &rows)?;
        }
        Command::Sample(a) => {
            let cfg = SamplingConfig {
                seed: a.seed,
                sigma: a.sigma,
                ..Default::default()
            };
            cfg.validate()?;
            let mut rng = cfg.rng();
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            let io = |e: std::io::Error| Error::Data(e.to_string());
            match a.kind {
                SampleKind::Frame => {
                    writeln!(w, "i,j").map_err(io)?;
                    for _ in 0..a.count {
                        let (i, j) = sample_frame_pair(a.length, &cfg, &mut rng)?;
                        writeln!(w, "{i},{j}").map_err(io)?;
                    }
                }
                SampleKind::Fragment => {
                    writeln!(w, "fragment_a,fragment_b").map_err(io)?;
                    let join =
                        |f: &[usize]| f.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
                    for _ in 0..a.count {
                        let (f1, f2) = sample_fragment_pair(a.length, &cfg, &mut rng)?;
                        writeln!(w, "{},{}", join(&f1), join(&f2)).map_err(io)?;
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match &e {
                Error::NotConverged(_) => 4,
                e if e.is_config() => 2,
                _ => 3,
            })
        }
    }
}
