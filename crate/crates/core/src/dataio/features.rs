//! Feature tables and their CSV form (`id,label,f0,...,f{D-1}`).
//!
//! Values are 32-bit on disk and 64-bit in memory. The CSV reader parses each
//! value as `f32` before widening so that CSV and binary files holding the same
//! data load to identical tables.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// N feature vectors of dimension D, each with an item id and a taxon label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    ids: Vec<String>,
    labels: Vec<usize>,
    matrix: Array2<f64>,
}

impl FeatureTable {
    pub fn new(ids: Vec<String>, labels: Vec<usize>, matrix: Array2<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if ids.len() != n {
            return Err(Error::DimMismatch {
                context: "feature table ids",
                expected: n,
                actual: ids.len(),
            });
        }
        if labels.len() != n {
            return Err(Error::DimMismatch {
                context: "feature table labels",
                expected: n,
                actual: labels.len(),
            });
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if id.is_empty() || id.contains(|c: char| c.is_whitespace() || c == ',') {
                return Err(Error::data(format!("invalid item id {id:?}")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::data(format!("duplicate id \"{id}\"")));
            }
        }
        for (row, id) in matrix.rows().into_iter().zip(&ids) {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("feature row \"{id}\"")));
            }
        }
        Ok(FeatureTable {
            ids,
            labels,
            matrix,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.matrix.row(i)
    }

    /// Number of classes implied by the largest label (`max + 1`).
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Per-class item counts over `0..num_classes`.
    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes.max(self.num_classes())];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> FeatureTable {
        FeatureTable {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            matrix: self.matrix.select(Axis(0), indices),
        }
    }

    /// Round every value to the nearest `f32`, as the on-disk formats do.
    pub fn quantized(&self) -> FeatureTable {
        FeatureTable {
            ids: self.ids.clone(),
            labels: self.labels.clone(),
            matrix: self.matrix.mapv(|v| v as f32 as f64),
        }
    }

    pub fn into_parts(self) -> (Vec<String>, Vec<usize>, Array2<f64>) {
        (self.ids, self.labels, self.matrix)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

/// Read a feature CSV from any reader.
pub fn read_feature_csv<R: Read>(reader: R) -> Result<FeatureTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.len() < 3 || &headers[0] != "id" || &headers[1] != "label" {
        return Err(Error::Csv(
            "header must be `id,label,f0,...` with at least one feature".into(),
        ));
    }
    let dim = headers.len() - 2;
    for (j, name) in headers.iter().skip(2).enumerate() {
        if name != format!("f{j}") {
            return Err(Error::Csv(format!(
                "header column {} is {name:?}, expected \"f{j}\"",
                j + 2
            )));
        }
    }

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (rowno, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(format!("data row {}: {e}", rowno + 1)))?;
        let id = rec[0].to_string();
        if rec.len() != dim + 2 {
            return Err(Error::Csv(format!(
                "row \"{id}\" has {} fields, expected {}",
                rec.len(),
                dim + 2
            )));
        }
        let label: usize = rec[1]
            .parse()
            .map_err(|_| Error::Csv(format!("row \"{id}\": label {:?} is not a non-negative integer", &rec[1])))?;
        for field in rec.iter().skip(2) {
            let v: f32 = field
                .parse()
                .map_err(|_| Error::Csv(format!("row \"{id}\": non-numeric feature {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("row \"{id}\": {field}")));
            }
            values.push(v as f64);
        }
        ids.push(id);
        labels.push(label);
    }
    let matrix = Array2::from_shape_vec((ids.len(), dim), values)
        .map_err(|e| Error::Csv(e.to_string()))?;
    FeatureTable::new(ids, labels, matrix)
}

pub fn write_feature_csv<W: Write>(writer: W, table: &FeatureTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..table.dim()).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(csv_err)?;
    let mut rec = Vec::with_capacity(table.dim() + 2);
    for (i, id) in table.ids.iter().enumerate() {
        rec.clear();
        rec.push(id.clone());
        rec.push(table.labels[i].to_string());
        rec.extend(table.matrix.row(i).iter().map(|&v| (v as f32).to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

pub fn load_feature_csv(path: &Path) -> Result<FeatureTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_csv(std::io::BufReader::new(file))
}

pub fn save_feature_csv(path: &Path, table: &FeatureTable) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_feature_csv(std::io::BufWriter::new(file), table)
}

/// Load a feature table, choosing the binary reader for `.vgfb` files and the
/// CSV reader otherwise.
pub fn load_features(path: &Path) -> Result<FeatureTable> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("vgfb") => super::binfmt::read_feature_bin(path),
        _ => load_feature_csv(path),
    }
}

pub fn save_features(path: &Path, table: &FeatureTable) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("vgfb") => super::binfmt::write_feature_bin(path, table),
        _ => save_feature_csv(path, table),
    }
}
