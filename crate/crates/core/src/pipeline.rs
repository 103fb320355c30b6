//! The end-to-end synthetic comparison: generate a dataset, embed its
//! sequences, build anchors, train the four variants and evaluate them.
//!
//! | variant  | stage 1 LTR | stage 2 |
//! |----------|-------------|---------|
//! | `naive`  | off         | no      |
//! | `naive+A`| off         | yes     |
//! | `wd+m`   | on          | no      |
//! | `wd+m+A` | on          | yes     |
//!
//! Both chains start from the same initial head. The dataset seed and the
//! training seed are derived from the run seed with names `"synth"` and
//! `"train"`.
//!
//! The default configuration keeps every training default except the layer
//! widths and the epoch counts. The synthetic training split has about 1,350
//! items, so an epoch is 22 batches of 64; 400 and 100 epochs give roughly the
//! optimizer step counts of 20 and 5 epochs over 27,731 images.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{save_feature_csv, FeatureTable};
use crate::embednet::{embed, save_checkpoint, Checkpoint, HeadParams, StageTag};
use crate::error::{Error, Result};
use crate::evalkit::{
    compute_metrics, knn_predict, EmbeddingTable, MetricsReport, DEFAULT_HEAD_THRESHOLD, DEFAULT_K,
    DEFAULT_TAIL_THRESHOLD,
};
use crate::seed::derive_seed;
use crate::sgt::{anchors_from_table, embed_corpus, save_anchors, GeneticAnchor};
use crate::synthgen::{generate, write_dataset, SynthSpec};
use crate::trainer::{
    align_stage2, anchor_alignment, init_params, seed_lineage, train_stage1_from, TrainConfig,
    TrainHistory, INIT_STREAM, STAGE1_STREAM, STAGE2_STREAM,
};

pub const VARIANTS: [&str; 4] = ["naive", "naive+A", "wd+m", "wd+m+A"];

/// Evaluation settings shared by the `eval` subcommand and the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub k: usize,
    pub tail_threshold: usize,
    pub head_threshold: usize,
    /// Use per-class mean embeddings as the gallery instead of every item.
    pub centroid_gallery: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: DEFAULT_K,
            tail_threshold: DEFAULT_TAIL_THRESHOLD,
            head_threshold: DEFAULT_HEAD_THRESHOLD,
            centroid_gallery: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub synth: SynthSpec,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let synth = SynthSpec::default();
        let train = TrainConfig {
            input_dim: synth.dim,
            hidden_dim: 128,
            epochs_stage1: 400,
            epochs_stage2: 100,
            ..TrainConfig::default()
        };
        PipelineConfig {
            synth,
            train,
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        if self.train.input_dim != self.synth.dim {
            return Err(Error::invalid(format!(
                "train.input_dim = {} but synth.dim = {}",
                self.train.input_dim, self.synth.dim
            )));
        }
        if self.eval.k == 0 {
            return Err(Error::invalid("eval.k must be >= 1"));
        }
        Ok(())
    }

    /// Parse a config whose keys override [`PipelineConfig::default`],
    /// section by section. Unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let overrides: serde_json::Value = serde_json::from_str(text)?;
        let mut merged = serde_json::to_value(PipelineConfig::default())?;
        merge_json(&mut merged, overrides);
        let cfg: PipelineConfig = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Copy with the dataset and training seeds derived from `seed`.
    pub fn seeded(&self, seed: u64) -> PipelineConfig {
        let mut cfg = self.clone();
        cfg.synth.seed = derive_seed(seed, "synth");
        cfg.train.seed = derive_seed(seed, "train");
        cfg
    }
}

fn merge_json(base: &mut serde_json::Value, overrides: serde_json::Value) {
    match (base, overrides) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (key, value) in o {
                match b.get_mut(&key) {
                    Some(slot) => merge_json(slot, value),
                    None => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

/// Embed `gallery` and `queries` with `params`, classify the queries by
/// cosine KNN and score them against `train_counts`.
pub fn evaluate(
    params: &HeadParams,
    gallery: &FeatureTable,
    queries: &FeatureTable,
    train_counts: &[usize],
    eval: &EvalConfig,
) -> Result<MetricsReport> {
    let g = EmbeddingTable::from_features(gallery, embed(params, gallery.matrix().view())?)?;
    let g = if eval.centroid_gallery { g.class_centroids()? } else { g };
    let q = EmbeddingTable::from_features(queries, embed(params, queries.matrix().view())?)?;
    let predictions = knn_predict(&g, &q, eval.k)?;
    let mut report = compute_metrics(
        &predictions,
        queries.labels(),
        train_counts,
        eval.tail_threshold,
        eval.head_threshold,
    )?;
    report.k = Some(eval.k);
    Ok(report)
}

/// Anchor-centroid cosine of a stage-2 variant before and after alignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentShift {
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantRun {
    pub checkpoint: Checkpoint,
    pub history: TrainHistory,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub config: PipelineConfig,
    pub anchors: Vec<GeneticAnchor>,
    pub variants: BTreeMap<String, VariantRun>,
    /// Keyed by the aligned variant's tag.
    pub alignment: BTreeMap<String, AlignmentShift>,
}

impl PipelineOutput {
    /// `{variant → MetricsReport}`.
    pub fn report(&self) -> BTreeMap<&str, &MetricsReport> {
        self.variants.iter().map(|(k, v)| (k.as_str(), &v.metrics)).collect()
    }

    pub fn report_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.report())? + "\n")
    }
}

/// Checkpoint of `params` after `stage`, recording `config` and the seeds of
/// every stream used so far.
pub fn stage_checkpoint(config: &TrainConfig, stage: StageTag, params: HeadParams) -> Result<Checkpoint> {
    let streams: &[&str] = match stage {
        StageTag::Init => &[INIT_STREAM],
        StageTag::Stage1 => &[INIT_STREAM, STAGE1_STREAM],
        StageTag::Stage2 => &[INIT_STREAM, STAGE1_STREAM, STAGE2_STREAM],
    };
    Ok(Checkpoint {
        stage,
        seed_lineage: seed_lineage(config, streams),
        config: Some(serde_json::to_value(config)?),
        params,
    })
}

struct ChainInputs<'a> {
    init: &'a HeadParams,
    train: &'a FeatureTable,
    test: &'a FeatureTable,
    anchors: &'a [GeneticAnchor],
    train_counts: &'a [usize],
    eval: &'a EvalConfig,
}

type ChainOutput = (VariantRun, VariantRun, AlignmentShift);

/// Stage 1 then stage 2 for one LTR setting.
fn run_chain(config: &TrainConfig, inputs: &ChainInputs<'_>) -> Result<ChainOutput> {
    let (p1, h1) = train_stage1_from(config, inputs.init.clone(), inputs.train)?;
    let m1 = evaluate(&p1, inputs.train, inputs.test, inputs.train_counts, inputs.eval)?;
    let before = anchor_alignment(&p1, inputs.train, inputs.anchors)?;
    let (p2, h2) = align_stage2(config, p1.clone(), inputs.anchors, inputs.train)?;
    let after = anchor_alignment(&p2, inputs.train, inputs.anchors)?;
    let m2 = evaluate(&p2, inputs.train, inputs.test, inputs.train_counts, inputs.eval)?;
    let mut h12 = h1.clone();
    h12.extend(h2);
    Ok((
        VariantRun {
            checkpoint: stage_checkpoint(config, StageTag::Stage1, p1)?,
            history: h1,
            metrics: m1,
        },
        VariantRun {
            checkpoint: stage_checkpoint(config, StageTag::Stage2, p2)?,
            history: h12,
            metrics: m2,
        },
        AlignmentShift { before, after },
    ))
}

/// Worker threads allowed by `XMODAL_THREADS` (default 2, minimum 1).
pub fn thread_cap() -> usize {
    std::env::var("XMODAL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(2)
        .max(1)
}

/// Run the comparison with seeds derived from `seed`, using at most
/// `threads` worker threads. Results do not depend on `threads`.
///
/// With `out` set, every intermediate artifact is written there.
pub fn run_pipeline(
    base: &PipelineConfig,
    seed: u64,
    threads: usize,
    out: Option<&Path>,
) -> Result<PipelineOutput> {
    let config = base.seeded(seed);
    config.validate()?;
    let data = generate(&config.synth)?;
    let genetic = embed_corpus(&data.sequences, &data.sequence_labels, config.train.kappa)?.quantized();
    let anchors = anchors_from_table(&genetic)?;
    let classes = config.synth.num_classes();

    let naive_cfg = TrainConfig {
        ltr_enabled: false,
        ..config.train.clone()
    };
    let ltr_cfg = TrainConfig {
        ltr_enabled: true,
        ..config.train.clone()
    };
    let init = init_params(&config.train, classes)?;
    let inputs = ChainInputs {
        init: &init,
        train: &data.train,
        test: &data.test,
        anchors: &anchors,
        train_counts: data.taxa.train_counts(),
        eval: &config.eval,
    };
    let (naive, ltr) = if threads >= 2 {
        std::thread::scope(|s| {
            let handle = s.spawn(|| run_chain(&naive_cfg, &inputs));
            let ltr = run_chain(&ltr_cfg, &inputs);
            let naive = handle.join().expect("training thread panicked");
            (naive, ltr)
        })
    } else {
        (run_chain(&naive_cfg, &inputs), run_chain(&ltr_cfg, &inputs))
    };
    let (naive, naive_a, naive_shift) = naive?;
    let (ltr, ltr_a, ltr_shift) = ltr?;

    let variants: BTreeMap<String, VariantRun> = VARIANTS
        .iter()
        .map(|v| v.to_string())
        .zip([naive, naive_a, ltr, ltr_a])
        .collect();
    let alignment = BTreeMap::from([
        ("naive+A".to_string(), naive_shift),
        ("wd+m+A".to_string(), ltr_shift),
    ]);
    let output = PipelineOutput {
        config,
        anchors,
        variants,
        alignment,
    };
    if let Some(dir) = out {
        write_dataset(&dir.join("data"), &data)?;
        save_feature_csv(&dir.join("genetic.csv"), &genetic)?;
        save_anchors(&dir.join("anchors.csv"), &output.anchors)?;
        write_outputs(dir, &output)?;
    }
    Ok(output)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// File name of a variant's checkpoint, e.g. `wd+m+A.ckpt.json`.
pub fn checkpoint_file(variant: &str) -> String {
    format!("{variant}.ckpt.json")
}

fn write_outputs(dir: &Path, output: &PipelineOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(
        &dir.join("config.json"),
        &(serde_json::to_string_pretty(&output.config)? + "\n"),
    )?;
    for (name, run) in &output.variants {
        save_checkpoint(&dir.join(checkpoint_file(name)), &run.checkpoint)?;
        write_text(
            &dir.join(format!("{name}.history.json")),
            &(serde_json::to_string_pretty(&run.history)? + "\n"),
        )?;
    }
    write_text(
        &dir.join("alignment.json"),
        &(serde_json::to_string_pretty(&output.alignment)? + "\n"),
    )?;
    write_text(&dir.join("report.json"), &output.report_json()?)
}
