//! Taxon assignments for sequences (`labels.csv`) and per-taxon metadata
//! (`taxa.csv`).

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Ordered `sequence_id → taxon_id` assignments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SequenceLabels {
    pub entries: Vec<(String, usize)>,
}

impl SequenceLabels {
    pub fn lookup(&self) -> HashMap<&str, usize> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v)).collect()
    }
}

pub fn read_sequence_labels<R: Read>(reader: R) -> Result<SequenceLabels> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Csv(e.to_string()))?;
    if headers.len() != 2 || &headers[0] != "sequence_id" || &headers[1] != "taxon_id" {
        return Err(Error::Csv("labels header must be `sequence_id,taxon_id`".into()));
    }
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let id = rec[0].to_string();
        let taxon = rec[1]
            .parse()
            .map_err(|_| Error::Csv(format!("sequence \"{id}\": bad taxon id {:?}", &rec[1])))?;
        if !seen.insert(id.clone()) {
            return Err(Error::Csv(format!("duplicate sequence id \"{id}\" in labels")));
        }
        entries.push((id, taxon));
    }
    Ok(SequenceLabels { entries })
}

pub fn write_sequence_labels<W: Write>(writer: W, labels: &SequenceLabels) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(["sequence_id", "taxon_id"]).map_err(to_err)?;
    for (id, t) in &labels.entries {
        w.write_record([id.as_str(), &t.to_string()]).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub fn load_sequence_labels(path: &Path) -> Result<SequenceLabels> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_sequence_labels(f)
}

pub fn save_sequence_labels(path: &Path, labels: &SequenceLabels) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_sequence_labels(f, labels)
}

/// Display names and training-sample counts for taxa `0..C`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    names: Vec<String>,
    train_counts: Vec<usize>,
}

impl LabelMap {
    pub fn new(names: Vec<String>, train_counts: Vec<usize>) -> Result<Self> {
        if names.len() != train_counts.len() {
            return Err(Error::DimMismatch {
                context: "label map",
                expected: names.len(),
                actual: train_counts.len(),
            });
        }
        Ok(LabelMap { names, train_counts })
    }

    /// Names default to `taxon<k>`.
    pub fn from_counts(train_counts: Vec<usize>) -> Self {
        let names = (0..train_counts.len()).map(|k| format!("taxon{k}")).collect();
        LabelMap { names, train_counts }
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn train_counts(&self) -> &[usize] {
        &self.train_counts
    }
}

/// Reads `taxon_id,name,train_count`; taxon ids must cover `0..C` exactly.
pub fn read_label_map<R: Read>(reader: R) -> Result<LabelMap> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Csv(e.to_string()))?;
    if headers.len() != 3
        || &headers[0] != "taxon_id"
        || &headers[1] != "name"
        || &headers[2] != "train_count"
    {
        return Err(Error::Csv("taxa header must be `taxon_id,name,train_count`".into()));
    }
    let mut rows: Vec<(usize, String, usize)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let tid = rec[0]
            .parse()
            .map_err(|_| Error::Csv(format!("bad taxon id {:?}", &rec[0])))?;
        let count = rec[2]
            .parse()
            .map_err(|_| Error::Csv(format!("taxon {tid}: bad train_count {:?}", &rec[2])))?;
        rows.push((tid, rec[1].to_string(), count));
    }
    rows.sort_by_key(|r| r.0);
    for (expect, row) in rows.iter().enumerate() {
        if row.0 != expect {
            return Err(Error::Csv(format!(
                "taxon ids must be contiguous from 0; missing or duplicate id near {expect}"
            )));
        }
    }
    let (names, counts) = rows.into_iter().map(|(_, n, c)| (n, c)).unzip();
    LabelMap::new(names, counts)
}

pub fn write_label_map<W: Write>(writer: W, map: &LabelMap) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(["taxon_id", "name", "train_count"]).map_err(to_err)?;
    for (k, (name, count)) in map.names.iter().zip(&map.train_counts).enumerate() {
        w.write_record([k.to_string(), name.clone(), count.to_string()])
            .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub fn load_label_map(path: &Path) -> Result<LabelMap> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_label_map(f)
}

pub fn save_label_map(path: &Path, map: &LabelMap) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_label_map(f, map)
}
