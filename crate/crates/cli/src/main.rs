//! `synthsight` command-line pipeline.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or fingerprint error,
//! 4 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use synthsight::eval::EvalSummary;
use synthsight::features::{LabelPair, NormStats};
use synthsight::io::{read_dataset, write_dataset, GraphDoc, Role, Split};
use synthsight::library::{default_library, CellLibrary};
use synthsight::nn::{Checkpoint, ModelConfig, TrainConfig};
use synthsight::physopt::DEFAULT_TARGET_ALPHA;
use synthsight::pipeline::{self, FileDigest, Manifest, SplitCounts, Stopwatch};
use synthsight::reconstruct::{reconstruct_metrics, sweep_curve, InferredGraph, SweepCurve, SweepPoint, DEFAULT_K_PATHS};
use synthsight::{Error, Result};

#[derive(Parser)]
#[command(name = "synthsight", version, about = "Predict post-synthesis delay and area of gate-level netlists")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a cell library (seed 0 is the canonical library).
    GenLib {
        /// Root random seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate pre-synthesis graphs of random prefix adders.
    GenDataset {
        /// Adder width in bits.
        #[arg(long, default_value_t = 16)]
        width: u32,
        /// Total designs, split 60/20/20; overrides --train/--val/--test.
        #[arg(long)]
        count: Option<usize>,
        /// Training designs.
        #[arg(long, default_value_t = 200)]
        train: usize,
        /// Validation designs.
        #[arg(long, default_value_t = 50)]
        val: usize,
        /// Test designs.
        #[arg(long, default_value_t = 50)]
        test: usize,
        /// Root random seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cell library TOML; defaults to the built-in canonical library.
        #[arg(long)]
        lib: Option<PathBuf>,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the reference sizing/buffering optimizer on every graph.
    Synth {
        /// Target delay as a fraction of each design's pre-synthesis delay.
        #[arg(long, default_value_t = DEFAULT_TARGET_ALPHA)]
        target_alpha: f64,
        /// Input dataset (JSON Lines graph documents).
        #[arg(long = "in")]
        input: PathBuf,
        /// Cell library TOML; defaults to the built-in canonical library.
        #[arg(long)]
        lib: Option<PathBuf>,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Annotate pre-synthesis graphs with features and delta labels.
    Label {
        /// Pre-synthesis dataset.
        #[arg(long)]
        pre: PathBuf,
        /// Synthesized dataset from `synth`.
        #[arg(long)]
        post: PathBuf,
        /// Cell library TOML; defaults to the built-in canonical library.
        #[arg(long)]
        lib: Option<PathBuf>,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit z-score statistics on the training split of a labeled dataset.
    FitNorm {
        /// Input dataset (JSON Lines graph documents).
        #[arg(long = "in")]
        input: PathBuf,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the graph attention regressor.
    Train {
        /// Input dataset (JSON Lines graph documents).
        #[arg(long = "in")]
        input: PathBuf,
        /// Normalization statistics (JSON).
        #[arg(long)]
        norm: PathBuf,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
        /// Maximum training epochs.
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        /// Graphs per mini-batch.
        #[arg(long, default_value_t = 8)]
        batch: usize,
        /// Stop after this many epochs without validation improvement.
        #[arg(long, default_value_t = 10)]
        patience: usize,
        /// Root random seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// ADAM learning rate.
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        /// Dropout probability.
        #[arg(long, default_value_t = 0.1)]
        dropout: f64,
        /// Hidden width (heads x head size).
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        /// Attention layers.
        #[arg(long, default_value_t = 6)]
        layers: usize,
        /// Attention heads per layer.
        #[arg(long, default_value_t = 8)]
        heads: usize,
    },
    /// Predict per-node deltas; reads node features only.
    Predict {
        /// Model checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Normalization statistics (JSON).
        #[arg(long)]
        norm: PathBuf,
        /// Input dataset (JSON Lines graph documents).
        #[arg(long = "in")]
        input: PathBuf,
        /// Restrict to one split (train, val, test).
        #[arg(long)]
        split: Option<Split>,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Design-level delay and area from inferred graphs, as CSV.
    Reconstruct {
        /// Input dataset (JSON Lines graph documents).
        #[arg(long = "in")]
        input: PathBuf,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Delay/area trade-off curves across delay targets, as CSV.
    Sweep {
        /// Comma-separated delay targets.
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<f64>,
        /// Interpret targets as fractions of each design's pre-synthesis delay.
        #[arg(long)]
        relative: bool,
        /// Model checkpoint (with --norm).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Normalization statistics (with --model).
        #[arg(long)]
        norm: Option<PathBuf>,
        /// Use the labels of a labeled dataset as predictions.
        #[arg(long)]
        ground_truth: bool,
        /// Input dataset (JSON Lines graph documents).
        #[arg(long = "in")]
        input: PathBuf,
        /// Only this design id.
        #[arg(long)]
        design: Option<String>,
        /// Restrict to one split (train, val, test).
        #[arg(long)]
        split: Option<Split>,
        /// Number of slowest paths visited per sweep.
        #[arg(long, default_value_t = DEFAULT_K_PATHS)]
        k_paths: usize,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predictions with oracle results and the pre-synthesis baseline.
    Eval {
        /// Inferred dataset.
        #[arg(long)]
        pred: PathBuf,
        /// Labeled dataset with oracle post-synthesis metrics.
        #[arg(long)]
        truth: PathBuf,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print an evaluation summary and/or a sweep curve file.
    Report {
        /// Evaluation summary from `eval`.
        #[arg(long)]
        eval: Option<PathBuf>,
        /// Curve file from `sweep`.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
}

fn load_library(path: &Option<PathBuf>) -> Result<CellLibrary> {
    match path {
        Some(p) => CellLibrary::load(p),
        None => Ok(default_library(0)),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })
}

struct Record {
    command: &'static str,
    clock: Stopwatch,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
}

impl Record {
    fn new(command: &'static str, inputs: &[&Path]) -> Self {
        Record { command, clock: Stopwatch::start(), seed: None, inputs: inputs.iter().map(|p| p.to_path_buf()).collect() }
    }

    fn finish(self, output: &Path, extra: serde_json::Value) -> Result<()> {
        let digests = |paths: &[PathBuf]| paths.iter().map(FileDigest::of).collect::<Result<Vec<_>>>();
        Manifest {
            command: self.command.into(),
            args: std::env::args().skip(1).collect(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: self.seed,
            inputs: digests(&self.inputs)?,
            outputs: digests(&[output.to_path_buf()])?,
            wall_seconds: self.clock.seconds(),
            extra,
        }
        .save(output)
    }
}

fn inferred_for(doc: &GraphDoc, model: Option<&(Checkpoint, NormStats)>, ground_truth: bool) -> Result<InferredGraph> {
    match (doc.header.role, ground_truth, model) {
        (Role::Inferred, _, _) | (Role::Labeled, true, _) => pipeline::inferred_graph(doc),
        (Role::Labeled, false, Some((ck, norm))) => {
            let inf = pipeline::predict_docs(ck, norm, std::slice::from_ref(doc))?;
            pipeline::inferred_graph(&inf[0])
        }
        (Role::Labeled, false, None) => Err(Error::Consistency(
            "sweeping a labeled dataset needs --model and --norm, or --ground-truth".into(),
        )),
        (role, ..) => Err(Error::Consistency(format!("cannot sweep graph {} with role {role:?}", doc.header.id))),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenLib { seed, out } => {
            let mut rec = Record::new("gen-lib", &[]);
            rec.seed = Some(seed);
            let lib = default_library(seed);
            lib.save(&out)?;
            rec.finish(&out, json!({ "library": lib.fingerprint(), "version": lib.version }))
        }
        Command::GenDataset { width, count, train, val, test, seed, lib, out } => {
            let inputs: Vec<&Path> = lib.iter().map(|p| p.as_path()).collect();
            let mut rec = Record::new("gen-dataset", &inputs);
            rec.seed = Some(seed);
            let library = load_library(&lib)?;
            let counts = count.map(SplitCounts::proportional).unwrap_or(SplitCounts { train, val, test });
            let docs = pipeline::gen_dataset(width, counts, seed, &library)?;
            write_dataset(&out, &docs)?;
            rec.finish(&out, json!({ "width": width, "splits": counts, "library": library.fingerprint() }))
        }
        Command::Synth { target_alpha, input, lib, out } => {
            let rec = Record::new("synth", &[&input]);
            let library = load_library(&lib)?;
            let post = pipeline::synth_docs(&read_dataset(&input)?, &library, target_alpha)?;
            let met = post.iter().filter(|d| d.header.target_met == Some(true)).count();
            write_dataset(&out, &post)?;
            rec.finish(&out, json!({ "target_alpha": target_alpha, "targets_met": met, "designs": post.len() }))
        }
        Command::Label { pre, post, lib, out } => {
            let rec = Record::new("label", &[&pre, &post]);
            let library = load_library(&lib)?;
            let docs = pipeline::label_docs(&read_dataset(&pre)?, &read_dataset(&post)?, &library)?;
            write_dataset(&out, &docs)?;
            rec.finish(&out, json!({ "designs": docs.len() }))
        }
        Command::FitNorm { input, out } => {
            let rec = Record::new("fit-norm", &[&input]);
            let norm = pipeline::fit_norm(&read_dataset(&input)?)?;
            norm.save(&out)?;
            rec.finish(&out, json!({ "fingerprint": norm.fingerprint() }))
        }
        Command::Train { input, norm, out, epochs, batch, patience, seed, lr, dropout, hidden, layers, heads } => {
            let mut rec = Record::new("train", &[&input, &norm]);
            rec.seed = Some(seed);
            let stats = NormStats::load(&norm)?;
            let docs = read_dataset(&input)?;
            if heads == 0 || !hidden.is_multiple_of(heads) {
                return Err(Error::Domain(format!("--hidden {hidden} must be a multiple of --heads {heads}")));
            }
            let config = ModelConfig {
                hidden,
                layers,
                heads,
                head_dim: hidden / heads,
                dropout_p: dropout,
                lr,
                seed,
                ..ModelConfig::default()
            };
            let cfg = TrainConfig { epochs, batch_graphs: batch, patience };
            let (ck, report) = pipeline::train_model(&docs, &stats, config, &cfg)?;
            ck.save(&out)?;
            rec.finish(&out, json!({ "train": cfg, "report": report, "norm": stats.fingerprint(), "step": ck.step() }))
        }
        Command::Predict { model, norm, input, split, out } => {
            let rec = Record::new("predict", &[&model, &norm, &input]);
            let ck = Checkpoint::load(&model)?;
            let stats = NormStats::load(&norm)?;
            let docs = pipeline::select_split(read_dataset(&input)?, split);
            let clock = Stopwatch::start();
            let inferred = pipeline::predict_docs(&ck, &stats, &docs)?;
            let per_graph = clock.seconds() / docs.len().max(1) as f64;
            write_dataset(&out, &inferred)?;
            rec.finish(&out, json!({ "designs": inferred.len(), "mean_inference_seconds": per_graph }))
        }
        Command::Reconstruct { input, out } => {
            let rec = Record::new("reconstruct", &[&input]);
            let rows = pipeline::reconstruct_docs(&read_dataset(&input)?)?;
            let mut text = String::from("design,delay,area\n");
            for (id, d, a) in &rows {
                text.push_str(&format!("{id},{d},{a}\n"));
            }
            write_text(&out, &text)?;
            rec.finish(&out, json!({ "designs": rows.len() }))
        }
        Command::Sweep { targets, relative, model, norm, ground_truth, input, design, split, k_paths, out } => {
            let mut inputs: Vec<&Path> = vec![&input];
            inputs.extend(model.iter().map(|p| p.as_path()));
            inputs.extend(norm.iter().map(|p| p.as_path()));
            let rec = Record::new("sweep", &inputs);
            let loaded = match (&model, &norm) {
                (Some(m), Some(n)) => Some((Checkpoint::load(m)?, NormStats::load(n)?)),
                (None, None) => None,
                _ => return Err(Error::Domain("--model and --norm must be given together".into())),
            };
            let mut docs = pipeline::select_split(read_dataset(&input)?, split);
            if let Some(id) = &design {
                docs.retain(|d| &d.header.id == id);
                if docs.is_empty() {
                    return Err(Error::Consistency(format!("design {id} not found in {}", input.display())));
                }
            }
            let mut text = String::from("design,target,delay,area,swapped_node_count\n");
            for doc in &docs {
                let ig = inferred_for(doc, loaded.as_ref(), ground_truth)?;
                let scale = if relative {
                    let zero = InferredGraph::new(ig.base().clone(), vec![LabelPair::default(); ig.base().len()])?;
                    reconstruct_metrics(&zero).delay
                } else {
                    1.0
                };
                let ts: Vec<f64> = targets.iter().map(|t| t * scale).collect();
                let curve = sweep_curve(&ig, &ts, k_paths)?;
                for p in &curve.points {
                    text.push_str(&format!("{},{},{},{},{}\n", doc.header.id, p.target, p.delay, p.area, p.swapped_node_count));
                }
            }
            write_text(&out, &text)?;
            rec.finish(&out, json!({ "designs": docs.len(), "k_paths": k_paths }))
        }
        Command::Eval { pred, truth, out } => {
            let rec = Record::new("eval", &[&pred, &truth]);
            let summary = pipeline::evaluate(&read_dataset(&pred)?, &read_dataset(&truth)?)?;
            write_text(&out, &serde_json::to_string_pretty(&summary)?)?;
            print!("{}", summary.report());
            rec.finish(&out, json!({ "designs": summary.designs.len() }))
        }
        Command::Report { eval, curve } => {
            if eval.is_none() && curve.is_none() {
                return Err(Error::Domain("report needs --eval and/or --curve".into()));
            }
            if let Some(path) = eval {
                let s: EvalSummary = serde_json::from_str(&read_text(&path)?)?;
                println!("{:<16} {:>12} {:>12} {:>12} {:>12}", "design", "pred delay", "gt delay", "pred area", "gt area");
                for d in &s.designs {
                    println!("{:<16} {:>12.3} {:>12.3} {:>12.3} {:>12.3}", d.id, d.pred_delay, d.gt_delay, d.pred_area, d.gt_area);
                }
                print!("{}", s.report());
            }
            if let Some(path) = curve {
                print_curve(&read_text(&path)?)?;
            }
            Ok(())
        }
    }
}

fn print_curve(text: &str) -> Result<()> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if !header.starts_with("design,") {
        return Err(Error::Parse("curve file must start with a design,target,... header".into()));
    }
    let mut current: Option<String> = None;
    let mut block = String::from("target,delay,area,swapped_node_count\n");
    let flush = |id: &Option<String>, block: &mut String| -> Result<()> {
        if let Some(id) = id {
            let curve = SweepCurve::from_csv(block)?;
            println!("{id}");
            for SweepPoint { target, delay, area, swapped_node_count } in curve.points {
                println!("  target {target:>10.3}  delay {delay:>10.3}  area {area:>10.3}  swapped {swapped_node_count}");
            }
        }
        *block = String::from("target,delay,area,swapped_node_count\n");
        Ok(())
    };
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let (id, rest) = line.split_once(',').ok_or_else(|| Error::Parse(format!("bad curve row {line:?}")))?;
        if current.as_deref() != Some(id) {
            flush(&current, &mut block)?;
            current = Some(id.to_string());
        }
        block.push_str(rest);
        block.push('\n');
    }
    flush(&current, &mut block)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            log::debug!("{e:?}");
            ExitCode::from(match e {
                Error::Numeric(_) => 4,
                _ => 3,
            })
        }
    }
}
