use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use xmodal::dataio::{
    load_features, load_label_map, load_sequence_labels, read_fasta_file, save_features,
    FeatureTable,
};
use xmodal::embednet::{embed, load_checkpoint, save_checkpoint, StageTag};
use xmodal::evalkit::{
    centroid_distance_matrix, kamada_kawai_layout, EmbeddingTable, LayoutOptions,
    DEFAULT_HEAD_THRESHOLD, DEFAULT_K, DEFAULT_TAIL_THRESHOLD,
};
use xmodal::pipeline::{evaluate, run_pipeline, stage_checkpoint, thread_cap, EvalConfig, PipelineConfig};
use xmodal::sgt::{anchors_from_table, embed_corpus, load_anchors, save_anchors};
use xmodal::synthgen::{generate, write_dataset, SynthSpec};
use xmodal::trainer::{align_stage2, train_stage1, TrainConfig};

#[derive(Parser)]
#[command(name = "xmodal", version, about = "Visual-genetic cross-modal metric learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic long-tailed visual-genetic dataset
    Synth {
        /// Spec JSON file, or `default`
        #[arg(long, default_value = "default")]
        spec: String,
        /// Overrides the spec's seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// SGT-embed sequences into a 256-column feature table
    SgtEmbed {
        #[arg(long)]
        fasta: PathBuf,
        /// `sequence_id,taxon_id` CSV
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-taxon median anchors from an SGT feature table
    Anchors {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage 1: train a projection head on visual features
    Train {
        /// TrainConfig JSON; missing keys take their defaults
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Classifier size; defaults to the largest label + 1
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `history.json` beside `--out`
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Stage 2: align a trained head with genetic anchors
    Align {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        anchors: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `history.json` beside `--out`
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Cosine-KNN evaluation of a checkpoint
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        /// `taxon_id,name,train_count` CSV; defaults to the gallery's label counts
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Use class-mean embeddings as the gallery
        #[arg(long)]
        centroids: bool,
        #[arg(long, default_value_t = DEFAULT_TAIL_THRESHOLD)]
        tail_threshold: usize,
        #[arg(long, default_value_t = DEFAULT_HEAD_THRESHOLD)]
        head_threshold: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// 2-D stress layout of class-centroid cosine distances
    Layout {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = LayoutOptions::default().iters)]
        iters: usize,
        #[arg(long, default_value_t = LayoutOptions::default().tol)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize, embed, train and evaluate the four variants
    Pipeline {
        /// Synth spec JSON file, or `default` to keep the config's
        #[arg(long, default_value = "default")]
        spec: String,
        /// PipelineConfig JSON; missing keys take their defaults
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn history_path(explicit: Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.unwrap_or_else(|| out.with_file_name("history.json"))
}

fn load_train_config(path: &Path) -> Result<TrainConfig> {
    TrainConfig::from_json(&read_text(path)?).with_context(|| format!("config {}", path.display()))
}

fn embedding_table(ckpt: &Path, features: &FeatureTable) -> Result<EmbeddingTable> {
    let params = load_checkpoint(ckpt)?.params;
    let emb = embed(&params, features.matrix().view())?;
    Ok(EmbeddingTable::from_features(features, emb)?)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { spec, seed, out } => {
            let mut spec = if spec == "default" {
                SynthSpec::default()
            } else {
                SynthSpec::from_json(&read_text(Path::new(&spec))?)?
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            write_dataset(&out, &generate(&spec)?)?;
        }
        Command::SgtEmbed { fasta, labels, kappa, out } => {
            let records = read_fasta_file(&fasta)?;
            let labels = load_sequence_labels(&labels)?;
            save_features(&out, &embed_corpus(&records, &labels, kappa)?)?;
        }
        Command::Anchors { input, out } => {
            save_anchors(&out, &anchors_from_table(&load_features(&input)?)?)?;
        }
        Command::Train { config, features, classes, out, history } => {
            let cfg = load_train_config(&config)?;
            let train = load_features(&features)?;
            let classes = classes.unwrap_or_else(|| train.num_classes());
            let (params, hist) = train_stage1(&cfg, &train, classes)?;
            save_checkpoint(&out, &stage_checkpoint(&cfg, StageTag::Stage1, params)?)?;
            write_json(&history_path(history, &out), &hist)?;
        }
        Command::Align { config, ckpt, anchors, features, out, history } => {
            let cfg = load_train_config(&config)?;
            if !cfg.align_enabled {
                bail!("config {} has align_enabled = false", config.display());
            }
            let start = load_checkpoint(&ckpt)?;
            let (params, hist) =
                align_stage2(&cfg, start.params, &load_anchors(&anchors)?, &load_features(&features)?)?;
            save_checkpoint(&out, &stage_checkpoint(&cfg, StageTag::Stage2, params)?)?;
            write_json(&history_path(history, &out), &hist)?;
        }
        Command::Eval {
            ckpt,
            gallery,
            queries,
            k,
            counts,
            centroids,
            tail_threshold,
            head_threshold,
            out,
        } => {
            let params = load_checkpoint(&ckpt)?.params;
            let gallery = load_features(&gallery)?;
            let queries = load_features(&queries)?;
            let train_counts = match counts {
                Some(path) => load_label_map(&path)?.train_counts().to_vec(),
                None => gallery.class_counts(params.dims().classes),
            };
            let eval = EvalConfig {
                k,
                tail_threshold,
                head_threshold,
                centroid_gallery: centroids,
            };
            let report = evaluate(&params, &gallery, &queries, &train_counts, &eval)?;
            write_json(&out, &report)?;
        }
        Command::Layout { ckpt, features, seed, iters, tol, out } => {
            let table = embedding_table(&ckpt, &load_features(&features)?)?;
            let (classes, dist) = centroid_distance_matrix(&table)?;
            let opts = LayoutOptions { iters, tol, seed, ..LayoutOptions::default() };
            let layout = kamada_kawai_layout(&dist, opts)?;
            let mut csv = String::from("class_id,x,y,stress\n");
            for (c, p) in classes.iter().zip(&layout.coords) {
                csv.push_str(&format!("{c},{},{},{}\n", p[0], p[1], layout.stress));
            }
            write_text(&out, &csv)?;
        }
        Command::Pipeline { spec, config, seed, out } => {
            let mut cfg = match config {
                Some(path) => PipelineConfig::from_json(&read_text(&path)?)
                    .with_context(|| format!("config {}", path.display()))?,
                None => PipelineConfig::default(),
            };
            if spec != "default" {
                cfg.synth = SynthSpec::from_json(&read_text(Path::new(&spec))?)?;
            }
            let output = run_pipeline(&cfg, seed, thread_cap(), Some(&out))?;
            for (name, run) in &output.variants {
                let m = &run.metrics;
                let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.1}", 100.0 * v));
                println!(
                    "{name:>8}: overall {:.1}  macro {}  tail {}",
                    100.0 * m.overall,
                    pct(m.macro_per_class),
                    pct(m.tail_per_class)
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
