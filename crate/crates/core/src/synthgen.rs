//! Synthetic long-tailed visual-genetic datasets.
//!
//! A taxonomy of `genera × species_per_genus` classes is grown from one random
//! root sequence: genus masters mutate from the root, species masters from
//! their genus, and individual sequences from their species. Each species'
//! genetic anchor (median SGT) is pushed through one random linear map into
//! the visual feature space, so visually close classes are genetically close
//! by construction. Class `j` receives `max(tail, round(head · ratio^j))`
//! visual samples drawn around its mean, split 80/20 per class.
//!
//! A mutation replaces a base by one of the three other bases, uniformly.
//! All randomness is drawn from one ChaCha8 stream seeded with `seed`, in the
//! order: root, genus masters, species masters, individuals, map, class means,
//! samples, split.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{
    save_feature_csv, save_label_map, save_sequence_labels, save_split, write_fasta, FeatureTable,
    LabelMap, SequenceLabels, SequenceRecord, SplitSpec,
};
use crate::error::{Error, Result};
use crate::sgt::{compute_anchor, embed_residues, GeneticAnchor, GeneticEmbedding, SGT_DIM};

const BASES: [u8; 4] = *b"ACGT";

/// Fraction of each class held out for testing.
pub const TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub genera: usize,
    pub species_per_genus: usize,
    /// Sample count of class 0.
    pub head: usize,
    /// Floor on every class's sample count.
    pub tail: usize,
    /// Geometric decay of class sizes.
    pub ratio: f64,
    /// Visual feature dimension.
    pub dim: usize,
    /// Standard deviation of visual samples around their class mean.
    pub sigma_v: f64,
    pub seq_len: usize,
    pub mu_genus: f64,
    pub mu_species: f64,
    pub mu_individual: f64,
    pub seqs_per_species: usize,
    /// Entries of the anchor-to-visual map are `N(0, map_gain² / 256)`.
    pub map_gain: f64,
    /// Standard deviation of the per-class offset added after the map.
    pub sigma_map: f64,
    /// SGT decay used for the anchors behind the visual means.
    pub kappa: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            genera: 4,
            species_per_genus: 4,
            head: 500,
            tail: 10,
            ratio: 0.7,
            dim: 64,
            sigma_v: 0.2,
            seq_len: 400,
            mu_genus: 0.15,
            mu_species: 0.1,
            mu_individual: 0.01,
            seqs_per_species: 5,
            map_gain: 1.0,
            sigma_map: 0.1,
            kappa: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn num_classes(&self) -> usize {
        self.genera * self.species_per_genus
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("genera", self.genera),
            ("species_per_genus", self.species_per_genus),
            ("head", self.head),
            ("tail", self.tail),
            ("dim", self.dim),
            ("seqs_per_species", self.seqs_per_species),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("synth spec: {name} must be >= 1")));
        }
        if self.num_classes() < 2 {
            return Err(Error::invalid("synth spec: need at least 2 classes"));
        }
        if self.seq_len < 4 {
            return Err(Error::invalid("synth spec: seq_len must be >= 4"));
        }
        for (name, mu) in [
            ("mu_genus", self.mu_genus),
            ("mu_species", self.mu_species),
            ("mu_individual", self.mu_individual),
        ] {
            if !(0.0..=1.0).contains(&mu) {
                return Err(Error::invalid(format!("synth spec: {name} = {mu} outside [0, 1]")));
            }
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::invalid(format!("synth spec: ratio = {} outside (0, 1]", self.ratio)));
        }
        for (name, s) in [
            ("sigma_v", self.sigma_v),
            ("sigma_map", self.sigma_map),
            ("map_gain", self.map_gain),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("synth spec: {name} = {s} must be >= 0")));
            }
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid(format!("synth spec: kappa = {} must be > 0", self.kappa)));
        }
        for (class, n) in self.class_counts().into_iter().enumerate() {
            if split_sizes(n).0 == 0 {
                return Err(Error::invalid(format!(
                    "synth spec: class {class} has {n} samples, leaving none for training"
                )));
            }
        }
        Ok(())
    }

    /// Samples per class, non-increasing in class index.
    pub fn class_counts(&self) -> Vec<usize> {
        (0..self.num_classes())
            .map(|j| {
                let geometric = (self.head as f64 * self.ratio.powi(j as i32)).round() as usize;
                geometric.max(self.tail)
            })
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SynthSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// `(train, test)` sizes for a class of `n` samples.
fn split_sizes(n: usize) -> (usize, usize) {
    let test = ((TEST_FRACTION * n as f64).round() as usize).max(1).min(n);
    (n - test, test)
}

/// Everything needed to check a generated dataset against its construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    /// `genus[c]` for every class.
    pub genus: Vec<usize>,
    pub counts: Vec<usize>,
    pub train_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
    /// Class means in visual space, one row per class.
    pub visual_means: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub sequences: Vec<SequenceRecord>,
    pub sequence_labels: SequenceLabels,
    /// Anchors of the generated sequences, as used for the visual means.
    pub anchors: Vec<GeneticAnchor>,
    pub train: FeatureTable,
    pub test: FeatureTable,
    pub split: SplitSpec,
    pub taxa: LabelMap,
    pub truth: GroundTruth,
}

fn mutate(seq: &[u8], rate: f64, rng: &mut ChaCha8Rng) -> Vec<u8> {
    seq.iter()
        .map(|&b| {
            if rng.random::<f64>() < rate {
                let from = BASES.iter().position(|&x| x == b).expect("ACGT");
                BASES[(from + rng.random_range(1..4)) % 4]
            } else {
                b
            }
        })
        .collect()
}

fn residues(seq: &[u8]) -> String {
    String::from_utf8(seq.to_vec()).expect("ACGT is ASCII")
}

pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let classes = spec.num_classes();
    let genus: Vec<usize> = (0..classes).map(|c| c / spec.species_per_genus).collect();

    let root: Vec<u8> = (0..spec.seq_len).map(|_| BASES[rng.random_range(0..4)]).collect();
    let genus_masters: Vec<Vec<u8>> = (0..spec.genera)
        .map(|_| mutate(&root, spec.mu_genus, &mut rng))
        .collect();
    let species_masters: Vec<Vec<u8>> = genus
        .iter()
        .map(|&g| mutate(&genus_masters[g], spec.mu_species, &mut rng))
        .collect();

    let mut sequences = Vec::with_capacity(classes * spec.seqs_per_species);
    let mut sequence_labels = SequenceLabels::default();
    let mut anchors = Vec::with_capacity(classes);
    for (c, master) in species_masters.iter().enumerate() {
        let mut embeddings = Vec::with_capacity(spec.seqs_per_species);
        for k in 0..spec.seqs_per_species {
            let seq = residues(&mutate(master, spec.mu_individual, &mut rng));
            let id = format!("seq_c{c}_{k}");
            let values = embed_residues(&seq, spec.kappa)?.values;
            embeddings.push(GeneticEmbedding {
                values,
                sequence_id: Some(id.clone()),
                taxon: Some(c),
            });
            sequence_labels.entries.push((id.clone(), c));
            sequences.push(SequenceRecord::new(id, seq));
        }
        anchors.push(compute_anchor(&embeddings, c)?);
    }

    let map = Array2::from_shape_fn((spec.dim, SGT_DIM), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * spec.map_gain / (SGT_DIM as f64).sqrt()
    });
    let map_noise = Normal::new(0.0, spec.sigma_map).map_err(|e| Error::invalid(e.to_string()))?;
    let means: Vec<Array1<f64>> = anchors
        .iter()
        .map(|a| {
            let projected = map.dot(&Array1::from(a.values.clone()));
            projected.mapv(|v| v + map_noise.sample(&mut rng))
        })
        .collect();

    let counts = spec.class_counts();
    let sample_noise = Normal::new(0.0, spec.sigma_v).map_err(|e| Error::invalid(e.to_string()))?;
    let total: usize = counts.iter().sum();
    let mut ids = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut values = Vec::with_capacity(total * spec.dim);
    for (c, &n) in counts.iter().enumerate() {
        for k in 0..n {
            ids.push(format!("img_c{c}_{k}"));
            labels.push(c);
            values.extend(means[c].iter().map(|m| m + sample_noise.sample(&mut rng)));
        }
    }
    let all = FeatureTable::new(
        ids,
        labels,
        Array2::from_shape_vec((total, spec.dim), values).map_err(|e| Error::data(e.to_string()))?,
    )?
    .quantized();

    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    let mut train_counts = Vec::with_capacity(classes);
    let mut test_counts = Vec::with_capacity(classes);
    let mut offset = 0;
    for &n in &counts {
        let mut members: Vec<usize> = (offset..offset + n).collect();
        members.shuffle(&mut rng);
        let (n_train, n_test) = split_sizes(n);
        let (tr, te) = members.split_at(n_train);
        let mut tr = tr.to_vec();
        let mut te = te.to_vec();
        tr.sort_unstable();
        te.sort_unstable();
        train_idx.extend(tr);
        test_idx.extend(te);
        train_counts.push(n_train);
        test_counts.push(n_test);
        offset += n;
    }
    let train = all.select(&train_idx);
    let test = all.select(&test_idx);
    let split = SplitSpec {
        train: train.ids().to_vec(),
        test: test.ids().to_vec(),
    };
    let taxa = LabelMap::new(
        (0..classes)
            .map(|c| format!("genus{}_species{}", genus[c], c % spec.species_per_genus))
            .collect(),
        train_counts.clone(),
    )?;
    let truth = GroundTruth {
        spec: spec.clone(),
        genus,
        counts,
        train_counts,
        test_counts,
        visual_means: means.iter().map(|m| m.to_vec()).collect(),
    };
    Ok(SynthDataset {
        sequences,
        sequence_labels,
        anchors,
        train,
        test,
        split,
        taxa,
        truth,
    })
}

/// File names written by [`write_dataset`].
pub mod files {
    pub const SEQUENCES: &str = "sequences.fa";
    pub const LABELS: &str = "labels.csv";
    pub const TRAIN: &str = "train.csv";
    pub const TEST: &str = "test.csv";
    pub const SPLIT: &str = "split.json";
    pub const TRUTH: &str = "truth.json";
    pub const TAXA: &str = "taxa.csv";
}

/// Write the dataset into `dir`, creating it if needed.
pub fn write_dataset(dir: &Path, data: &SynthDataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let fasta = dir.join(files::SEQUENCES);
    std::fs::write(&fasta, write_fasta(&data.sequences, 80)).map_err(|e| Error::io(&fasta, e))?;
    save_sequence_labels(&dir.join(files::LABELS), &data.sequence_labels)?;
    save_feature_csv(&dir.join(files::TRAIN), &data.train)?;
    save_feature_csv(&dir.join(files::TEST), &data.test)?;
    save_split(&dir.join(files::SPLIT), &data.split)?;
    save_label_map(&dir.join(files::TAXA), &data.taxa)?;
    let truth = dir.join(files::TRUTH);
    let text = serde_json::to_string_pretty(&data.truth)?;
    std::fs::write(&truth, text + "\n").map_err(|e| Error::io(&truth, e))
}
