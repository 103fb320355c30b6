//! Sequence Graph Transform embedding of nucleotide sequences.
//!
//! Sequences are first cut into non-overlapping base pairs, giving a
//! 16-symbol alphabet (`AA`, `AC`, ..., `TT`). The length-sensitive SGT then
//! scores every ordered symbol pair `(u, v)` by the exponentially decayed mass
//! of all occurrences of `v` after `u`:
//!
//! ```text
//! W(u, v) = Σ_{l < m, s_l = u, s_m = v} exp(-κ (m - l))
//! ψ(u, v) = W(u, v) / |Λ_u|
//! ```
//!
//! where `|Λ_u|` counts occurrences of `u` at positions that can start a
//! pair (every position but the last). Rows with `|Λ_u| = 0` are zero. The
//! resulting 16×16 matrix is flattened row-major into a 256-vector.
//!
//! Genetic anchors are per-taxon coordinate-wise medians of these vectors.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataio::{FeatureTable, SequenceLabels, SequenceRecord};
use crate::error::{Error, Result};

/// Size of the bigram alphabet.
pub const ALPHABET: usize = 16;
/// Length of an SGT embedding, `ALPHABET²`.
pub const SGT_DIM: usize = ALPHABET * ALPHABET;

const BASES: [u8; 4] = [b'A', b'C', b'G', b'T'];

fn base_index(b: u8) -> Option<u8> {
    match b {
        b'A' => Some(0),
        b'C' => Some(1),
        b'G' => Some(2),
        b'T' => Some(3),
        _ => None,
    }
}

/// An ordered pair of bases, indexed `4·first + second` in `0..16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BigramSymbol(u8);

impl BigramSymbol {
    pub fn from_bases(first: u8, second: u8) -> Option<Self> {
        Some(BigramSymbol(base_index(first)? * 4 + base_index(second)?))
    }

    pub fn from_index(index: usize) -> Option<Self> {
        (index < ALPHABET).then_some(BigramSymbol(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for BigramSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = BASES[(self.0 / 4) as usize] as char;
        let b = BASES[(self.0 % 4) as usize] as char;
        write!(f, "{a}{b}")
    }
}

/// Frame `residues` into non-overlapping pairs.
///
/// A trailing odd base is dropped and any pair containing a letter outside
/// `ACGT` is skipped. Fails when fewer than two symbols remain.
pub fn tokenize_bigrams(residues: &str) -> Result<Vec<BigramSymbol>> {
    let symbols: Vec<BigramSymbol> = residues
        .as_bytes()
        .chunks_exact(2)
        .filter_map(|p| BigramSymbol::from_bases(p[0], p[1]))
        .collect();
    if symbols.len() < 2 {
        return Err(Error::data(format!(
            "sequence yields {} usable bigram symbols, need at least 2",
            symbols.len()
        )));
    }
    Ok(symbols)
}

/// Which SGT formulation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SgtVariant {
    #[default]
    LengthSensitive,
}

/// A 256-dim SGT vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneticEmbedding {
    pub values: Vec<f64>,
    pub sequence_id: Option<String>,
    pub taxon: Option<usize>,
}

/// Length-sensitive SGT of a symbol sequence.
///
/// Runs in `O(L·|V|)` by carrying, for every symbol `u`, the decayed mass
/// `Σ_{l<m, s_l=u} exp(-κ(m-l))` forward one position at a time.
pub fn sgt_embed(symbols: &[BigramSymbol], kappa: f64) -> Result<GeneticEmbedding> {
    if symbols.len() < 2 {
        return Err(Error::invalid(format!(
            "SGT needs at least 2 symbols, got {}",
            symbols.len()
        )));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::invalid(format!("kappa must be positive, got {kappa}")));
    }
    let decay = (-kappa).exp();
    let mut carry = [0.0f64; ALPHABET];
    let mut weights = [[0.0f64; ALPHABET]; ALPHABET];
    let mut starts = [0usize; ALPHABET];

    for (m, sym) in symbols.iter().enumerate() {
        let v = sym.index();
        for (u, &mass) in carry.iter().enumerate() {
            weights[u][v] += mass;
        }
        carry[v] += 1.0;
        for mass in carry.iter_mut() {
            *mass *= decay;
        }
        if m + 1 < symbols.len() {
            starts[v] += 1;
        }
    }

    let mut values = Vec::with_capacity(SGT_DIM);
    for u in 0..ALPHABET {
        let count = starts[u];
        for v in 0..ALPHABET {
            values.push(if count > 0 { weights[u][v] / count as f64 } else { 0.0 });
        }
    }
    Ok(GeneticEmbedding {
        values,
        sequence_id: None,
        taxon: None,
    })
}

/// Tokenize and embed a residue string.
pub fn embed_residues(residues: &str, kappa: f64) -> Result<GeneticEmbedding> {
    sgt_embed(&tokenize_bigrams(residues)?, kappa)
}

/// Embed every record; each record must have a taxon in `labels`.
///
/// The result is a feature table with `D = 256`, ids taken from the records.
pub fn embed_corpus(
    records: &[SequenceRecord],
    labels: &SequenceLabels,
    kappa: f64,
) -> Result<FeatureTable> {
    let lookup = labels.lookup();
    let mut ids = Vec::with_capacity(records.len());
    let mut taxa = Vec::with_capacity(records.len());
    let mut values = Vec::with_capacity(records.len() * SGT_DIM);
    for rec in records {
        let taxon = *lookup
            .get(rec.id.as_str())
            .ok_or_else(|| Error::data(format!("sequence \"{}\" has no taxon label", rec.id)))?;
        let emb = embed_residues(&rec.residues, kappa)
            .map_err(|e| Error::data(format!("sequence \"{}\": {e}", rec.id)))?;
        ids.push(rec.id.clone());
        taxa.push(taxon);
        values.extend(emb.values);
    }
    let matrix = Array2::from_shape_vec((ids.len(), SGT_DIM), values)
        .map_err(|e| Error::data(e.to_string()))?;
    FeatureTable::new(ids, taxa, matrix)
}

/// Per-taxon target vector for cross-modal alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneticAnchor {
    pub taxon: usize,
    pub values: Vec<f64>,
    pub count: usize,
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Coordinate-wise median of `embeddings` (mean of the middle pair for even
/// counts).
pub fn compute_anchor(embeddings: &[GeneticEmbedding], taxon: usize) -> Result<GeneticAnchor> {
    let first = embeddings
        .first()
        .ok_or_else(|| Error::invalid(format!("no embeddings for taxon {taxon}")))?;
    let dim = first.values.len();
    for e in embeddings {
        if let Some(t) = e.taxon.filter(|&t| t != taxon) {
            return Err(Error::invalid(format!(
                "embedding of taxon {t} passed for anchor of taxon {taxon}"
            )));
        }
        if e.values.len() != dim {
            return Err(Error::DimMismatch {
                context: "anchor inputs",
                expected: dim,
                actual: e.values.len(),
            });
        }
    }
    let mut column = vec![0.0; embeddings.len()];
    let values = (0..dim)
        .map(|j| {
            for (slot, e) in column.iter_mut().zip(embeddings) {
                *slot = e.values[j];
            }
            column.sort_by(f64::total_cmp);
            median_sorted(&column)
        })
        .collect();
    Ok(GeneticAnchor {
        taxon,
        values,
        count: embeddings.len(),
    })
}

/// One anchor per taxon present in `table`, sorted by taxon id.
pub fn anchors_from_table(table: &FeatureTable) -> Result<Vec<GeneticAnchor>> {
    let classes = table.num_classes();
    let mut groups: Vec<Vec<GeneticEmbedding>> = vec![Vec::new(); classes];
    for (i, &label) in table.labels().iter().enumerate() {
        groups[label].push(GeneticEmbedding {
            values: table.row(i).to_vec(),
            sequence_id: Some(table.ids()[i].clone()),
            taxon: Some(label),
        });
    }
    groups
        .iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(t, g)| compute_anchor(g, t))
        .collect()
}

/// Reads `taxon_id,count,f0,...`.
pub fn read_anchors<R: Read>(reader: R) -> Result<Vec<GeneticAnchor>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    if headers.len() < 3 || &headers[0] != "taxon_id" || &headers[1] != "count" {
        return Err(Error::Csv("anchors header must be `taxon_id,count,f0,...`".into()));
    }
    let dim = headers.len() - 2;
    let mut anchors: Vec<GeneticAnchor> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        if rec.len() != dim + 2 {
            return Err(Error::Csv(format!("anchor row has {} fields, expected {}", rec.len(), dim + 2)));
        }
        let taxon: usize = rec[0]
            .parse()
            .map_err(|_| Error::Csv(format!("bad taxon id {:?}", &rec[0])))?;
        let count = rec[1]
            .parse()
            .map_err(|_| Error::Csv(format!("taxon {taxon}: bad count {:?}", &rec[1])))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Csv(format!("taxon {taxon}: bad value {f:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if anchors.iter().any(|a| a.taxon == taxon) {
            return Err(Error::Csv(format!("duplicate anchor for taxon {taxon}")));
        }
        anchors.push(GeneticAnchor { taxon, values, count });
    }
    anchors.sort_by_key(|a| a.taxon);
    Ok(anchors)
}

/// Anchors are written at full `f64` precision.
pub fn write_anchors<W: Write>(writer: W, anchors: &[GeneticAnchor]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Csv(e.to_string());
    let dim = anchors.first().map_or(0, |a| a.values.len());
    let mut header = vec!["taxon_id".to_string(), "count".to_string()];
    header.extend((0..dim).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(to_err)?;
    for a in anchors {
        let mut rec = vec![a.taxon.to_string(), a.count.to_string()];
        rec.extend(a.values.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub fn load_anchors(path: &Path) -> Result<Vec<GeneticAnchor>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_anchors(std::io::BufReader::new(f))
}

pub fn save_anchors(path: &Path, anchors: &[GeneticAnchor]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_anchors(std::io::BufWriter::new(f), anchors)
}
