//! Two-stage training of the projection head.
//!
//! Stage 1 learns a class-discriminative embedding from visual features alone
//! with softmax cross-entropy on the anchor item plus a weighted reciprocal
//! triplet term, optionally under weight decay and classifier max-norm.
//!
//! Stage 2 aligns the embedding with per-taxon genetic anchors: each sample
//! pairs a taxon's anchor with one visual item of that taxon and one of
//! another taxon under the cosine alignment loss. The classifier is frozen.
//!
//! Both stages are pure functions of their inputs and the configured seed.
//! Each stage draws from its own ChaCha8 stream; all of a stage's randomness
//! is consumed by triplet sampling, in batch order.

mod config;
mod sampling;

use std::time::Instant;

use ndarray::{s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::TrainConfig;
pub use sampling::{sample_triplets, TripletIndex, TripletSampler};

use crate::dataio::FeatureTable;
use crate::embednet::{
    backward, forward, init_head, maxnorm_project_scoped, sgd_step_masked, HeadParams, LayerMask,
    SeedEntry, StageTag,
};
use crate::error::{Error, Result};
use crate::losses::{cosine_align, cross_entropy, rtl, TripletEmbeddings};
use crate::seed::derive_seed;
use crate::sgt::GeneticAnchor;

/// Summary of one completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: StageTag,
    pub epoch: usize,
    pub mean_loss: f64,
    pub softmax: f64,
    pub rtl: f64,
    pub cosine: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Number of max-norm projections applied.
    pub maxnorm_calls: usize,
}

impl TrainHistory {
    pub fn extend(&mut self, other: TrainHistory) {
        self.epochs.extend(other.epochs);
        self.maxnorm_calls += other.maxnorm_calls;
    }
}

/// Seed names used with [`derive_seed`] on `config.seed`.
pub const INIT_STREAM: &str = "init";
pub const STAGE1_STREAM: &str = "stage1";
pub const STAGE2_STREAM: &str = "stage2";

/// The seed lineage recorded in checkpoints.
pub fn seed_lineage(config: &TrainConfig, stages: &[&str]) -> Vec<SeedEntry> {
    std::iter::once(SeedEntry {
        stage: "root".into(),
        seed: config.seed,
    })
    .chain(stages.iter().map(|s| SeedEntry {
        stage: (*s).to_string(),
        seed: derive_seed(config.seed, s),
    }))
    .collect()
}

/// Fresh head for `classes` taxa, seeded from the config.
pub fn init_params(config: &TrainConfig, classes: usize) -> Result<HeadParams> {
    init_head(config.head_dims(classes), derive_seed(config.seed, INIT_STREAM))
}

fn batches_per_epoch(n: usize, batch: usize) -> usize {
    n.div_ceil(batch)
}

fn check_features(config: &TrainConfig, params: &HeadParams, train: &FeatureTable) -> Result<()> {
    config.validate()?;
    params.validate()?;
    if train.dim() != params.dims().input {
        return Err(Error::DimMismatch {
            context: "training features",
            expected: params.dims().input,
            actual: train.dim(),
        });
    }
    if let Some(&bad) = train.labels().iter().find(|&&l| l >= params.dims().classes) {
        return Err(Error::invalid(format!(
            "label {bad} exceeds classifier size {}",
            params.dims().classes
        )));
    }
    Ok(())
}

fn gather(matrix: &Array2<f64>, rows: impl Iterator<Item = usize>, out: &mut Array2<f64>) {
    for (dst, src) in rows.enumerate() {
        out.row_mut(dst).assign(&matrix.row(src));
    }
}

/// Stage 1 from a fresh head.
pub fn train_stage1(
    config: &TrainConfig,
    train: &FeatureTable,
    classes: usize,
) -> Result<(HeadParams, TrainHistory)> {
    let params = init_params(config, classes)?;
    train_stage1_from(config, params, train)
}

/// Stage 1 starting from `params`.
///
/// With LTR enabled the starting classifier is projected onto the max-norm
/// ball before the first step and after every step.
pub fn train_stage1_from(
    config: &TrainConfig,
    mut params: HeadParams,
    train: &FeatureTable,
) -> Result<(HeadParams, TrainHistory)> {
    check_features(config, &params, train)?;
    let sampler = TripletSampler::new(train.labels())?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STAGE1_STREAM));
    let b = config.batch_size;
    let nb = batches_per_epoch(train.len(), b);
    let wd = config.effective_weight_decay();
    let scale = 1.0 / b as f64;
    let dims = params.dims();
    let mut history = TrainHistory::default();

    if config.ltr_enabled {
        maxnorm_project_scoped(&mut params, config.maxnorm_delta, config.maxnorm_scope)?;
        history.maxnorm_calls += 1;
    }

    let mut x = Array2::zeros((3 * b, train.dim()));
    for epoch in 0..config.epochs_stage1 {
        let start = Instant::now();
        let (mut sum_ce, mut sum_rtl) = (0.0, 0.0);
        for batch in 0..nb {
            let triplets = sampler.sample(b, &mut rng);
            gather(
                train.matrix(),
                triplets
                    .iter()
                    .map(|t| t.anchor)
                    .chain(triplets.iter().map(|t| t.positive))
                    .chain(triplets.iter().map(|t| t.negative)),
                &mut x,
            );
            let cache = forward(&params, x.view())?;
            let mut d_emb = Array2::zeros((3 * b, dims.embedding));
            let mut d_logits = Array2::zeros((3 * b, dims.classes));
            let (mut batch_ce, mut batch_rtl) = (0.0, 0.0);
            for (i, t) in triplets.iter().enumerate() {
                let ce = cross_entropy(
                    cache.logits.row(i).as_slice().expect("standard layout"),
                    train.labels()[t.anchor],
                )?;
                let emb = |r: usize| cache.embedding.row(r).to_vec();
                let (ea, ep, en) = (emb(i), emb(b + i), emb(2 * b + i));
                let r = rtl(TripletEmbeddings::new(&ea, &ep, &en)?)?;
                batch_ce += ce.value;
                batch_rtl += r.value;
                for (k, g) in ce.grads[0].iter().enumerate() {
                    d_logits[[i, k]] = g * scale;
                }
                for (slot, grad) in r.grads.iter().enumerate() {
                    let row = slot * b + i;
                    for (k, g) in grad.iter().enumerate() {
                        d_emb[[row, k]] = config.lambda * g * scale;
                    }
                }
            }
            let loss = (batch_ce + config.lambda * batch_rtl) * scale;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "stage 1 epoch {epoch} batch {batch}: softmax {} rtl {}",
                    batch_ce * scale,
                    batch_rtl * scale
                )));
            }
            sum_ce += batch_ce * scale;
            sum_rtl += batch_rtl * scale;
            let grads = backward(&params, &cache, d_emb.view(), d_logits.view())?;
            sgd_step_masked(&mut params, &grads, config.lr, wd, LayerMask::ALL)?;
            if config.ltr_enabled {
                maxnorm_project_scoped(&mut params, config.maxnorm_delta, config.maxnorm_scope)?;
                history.maxnorm_calls += 1;
            }
        }
        let softmax = sum_ce / nb as f64;
        let rtl_mean = sum_rtl / nb as f64;
        history.epochs.push(EpochRecord {
            stage: StageTag::Stage1,
            epoch,
            mean_loss: softmax + config.lambda * rtl_mean,
            softmax,
            rtl: rtl_mean,
            cosine: 0.0,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((params, history))
}

/// Stage 2: align embeddings with genetic anchors.
///
/// Each sample draws a taxon uniformly among taxa present in `train`, then a
/// positive item of that taxon and a negative item of any other taxon. Only
/// the projection layers are updated.
pub fn align_stage2(
    config: &TrainConfig,
    mut params: HeadParams,
    anchors: &[GeneticAnchor],
    train: &FeatureTable,
) -> Result<(HeadParams, TrainHistory)> {
    check_features(config, &params, train)?;
    let dims = params.dims();
    let classes = dims.classes;
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in train.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let present: Vec<usize> = (0..classes).filter(|&c| !by_class[c].is_empty()).collect();
    if present.len() < 2 {
        return Err(Error::invalid("alignment needs at least 2 taxa with visual samples"));
    }
    let mut anchor_of: Vec<Option<&[f64]>> = vec![None; classes];
    for a in anchors {
        if a.values.len() != dims.embedding {
            return Err(Error::DimMismatch {
                context: "genetic anchor",
                expected: dims.embedding,
                actual: a.values.len(),
            });
        }
        if a.taxon < classes {
            anchor_of[a.taxon] = Some(&a.values);
        }
    }
    if let Some(&missing) = present.iter().find(|&&c| anchor_of[c].is_none()) {
        return Err(Error::invalid(format!("no genetic anchor for taxon {missing}")));
    }
    let others: Vec<Vec<usize>> = (0..classes)
        .map(|c| (0..train.len()).filter(|&i| train.labels()[i] != c).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STAGE2_STREAM));
    let b = config.batch_size;
    let nb = batches_per_epoch(train.len(), b);
    let wd = config.effective_weight_decay();
    let scale = 1.0 / b as f64;
    let mut history = TrainHistory::default();
    let mut x = Array2::zeros((2 * b, train.dim()));
    let zero_logits = Array2::zeros((2 * b, dims.classes));

    for epoch in 0..config.epochs_stage2 {
        let start = Instant::now();
        let mut sum = 0.0;
        for batch in 0..nb {
            let mut taxa = Vec::with_capacity(b);
            let mut pos = Vec::with_capacity(b);
            let mut neg = Vec::with_capacity(b);
            for _ in 0..b {
                let taxon = present[rng.random_range(0..present.len())];
                let mates = &by_class[taxon];
                let rest = &others[taxon];
                taxa.push(taxon);
                pos.push(mates[rng.random_range(0..mates.len())]);
                neg.push(rest[rng.random_range(0..rest.len())]);
            }
            gather(train.matrix(), pos.iter().chain(&neg).copied(), &mut x);
            let cache = forward(&params, x.view())?;
            let mut d_emb = Array2::zeros((2 * b, dims.embedding));
            let mut batch_loss = 0.0;
            for (i, &taxon) in taxa.iter().enumerate() {
                let anchor = anchor_of[taxon].expect("checked above");
                let ep = cache.embedding.row(i).to_vec();
                let en = cache.embedding.row(b + i).to_vec();
                let l = cosine_align(anchor, &ep, &en, config.margin_m)?;
                batch_loss += l.value;
                d_emb
                    .slice_mut(s![i, ..])
                    .iter_mut()
                    .zip(&l.grads[1])
                    .for_each(|(d, g)| *d = g * scale);
                d_emb
                    .slice_mut(s![b + i, ..])
                    .iter_mut()
                    .zip(&l.grads[2])
                    .for_each(|(d, g)| *d = g * scale);
            }
            let loss = batch_loss * scale;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "stage 2 epoch {epoch} batch {batch}: cosine {loss}"
                )));
            }
            sum += loss;
            let grads = backward(&params, &cache, d_emb.view(), zero_logits.view())?;
            sgd_step_masked(&mut params, &grads, config.lr, wd, LayerMask::PROJECTION)?;
        }
        let mean = sum / nb as f64;
        history.epochs.push(EpochRecord {
            stage: StageTag::Stage2,
            epoch,
            mean_loss: mean,
            softmax: 0.0,
            rtl: 0.0,
            cosine: mean,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((params, history))
}

/// Mean over taxa of `cos(centroid_c, anchor_c)`, where `centroid_c` is the
/// mean embedding of the taxon's items in `table`. Taxa without items or
/// without an anchor are skipped.
pub fn anchor_alignment(
    params: &HeadParams,
    table: &FeatureTable,
    anchors: &[GeneticAnchor],
) -> Result<f64> {
    let emb = crate::embednet::embed(params, table.matrix().view())?;
    let classes = params.dims().classes;
    let mut sums = Array2::<f64>::zeros((classes, emb.ncols()));
    let mut counts = vec![0usize; classes];
    for (row, &l) in emb.axis_iter(Axis(0)).zip(table.labels()) {
        let mut dst = sums.row_mut(l);
        dst += &row;
        counts[l] += 1;
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for a in anchors {
        if a.taxon >= classes || counts[a.taxon] == 0 {
            continue;
        }
        let centroid = sums.row(a.taxon).mapv(|v| v / counts[a.taxon] as f64);
        total += crate::losses::cosine(centroid.as_slice().expect("owned"), &a.values)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("no taxon has both items and an anchor"));
    }
    Ok(total / n as f64)
}
