use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::{Array2, ArrayView1, Axis};

use crate::dataio::FeatureTable;
use crate::error::{Error, Result};

/// Embedded items ready for cosine search. Zero-norm rows are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    ids: Vec<String>,
    labels: Vec<usize>,
    matrix: Array2<f64>,
    norms: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(ids: Vec<String>, labels: Vec<usize>, matrix: Array2<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if ids.len() != n || labels.len() != n {
            return Err(Error::DimMismatch {
                context: "embedding table",
                expected: n,
                actual: ids.len().min(labels.len()),
            });
        }
        let norms: Vec<f64> = matrix.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        for (i, &nrm) in norms.iter().enumerate() {
            if !nrm.is_finite() {
                return Err(Error::NonFinite(format!("embedding of \"{}\"", ids[i])));
            }
            if nrm == 0.0 {
                return Err(Error::data(format!("embedding of \"{}\" has zero norm", ids[i])));
            }
        }
        Ok(EmbeddingTable { ids, labels, matrix, norms })
    }

    /// Pair `embeddings` with the ids and labels of `source`.
    pub fn from_features(source: &FeatureTable, embeddings: Array2<f64>) -> Result<Self> {
        EmbeddingTable::new(source.ids().to_vec(), source.labels().to_vec(), embeddings)
    }

    /// One row per class present, holding the arithmetic mean embedding;
    /// ids are `class<k>`.
    pub fn class_centroids(&self) -> Result<EmbeddingTable> {
        let (classes, centroids) = centroids(&self.matrix, &self.labels);
        let ids = classes.iter().map(|c| format!("class{c}")).collect();
        EmbeddingTable::new(ids, classes, centroids)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
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

    fn cos(&self, i: usize, q: ArrayView1<'_, f64>, q_norm: f64) -> f64 {
        self.matrix.row(i).dot(&q) / (self.norms[i] * q_norm)
    }
}

/// Classes present (ascending) and their mean rows.
pub(crate) fn centroids(matrix: &Array2<f64>, labels: &[usize]) -> (Vec<usize>, Array2<f64>) {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = Array2::<f64>::zeros((classes, matrix.ncols()));
    let mut counts = vec![0usize; classes];
    for (row, &l) in matrix.axis_iter(Axis(0)).zip(labels) {
        let mut dst = sums.row_mut(l);
        dst += &row;
        counts[l] += 1;
    }
    let present: Vec<usize> = (0..classes).filter(|&c| counts[c] > 0).collect();
    let mut out = Array2::zeros((present.len(), matrix.ncols()));
    for (k, &c) in present.iter().enumerate() {
        out.row_mut(k).assign(&sums.row(c).mapv(|v| v / counts[c] as f64));
    }
    (present, out)
}

/// Neighbor candidate ordered so that the heap's maximum is the worst kept
/// neighbor: lower similarity, then higher gallery index.
#[derive(Debug, PartialEq)]
struct Candidate {
    sim: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .sim
            .total_cmp(&self.sim)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Majority vote among neighbor `(label, cosine distance)` pairs.
///
/// Ties go to the class with the smaller mean cosine distance among its
/// neighbors, then to the smaller class id.
pub fn vote(neighbors: &[(usize, f64)]) -> usize {
    let mut tally: Vec<(usize, usize, f64)> = Vec::new(); // (class, votes, distance sum)
    for &(label, dist) in neighbors {
        match tally.iter_mut().find(|t| t.0 == label) {
            Some(t) => {
                t.1 += 1;
                t.2 += dist;
            }
            None => tally.push((label, 1, dist)),
        }
    }
    tally
        .into_iter()
        .min_by(|a, b| {
            b.1.cmp(&a.1)
                .then((a.2 / a.1 as f64).total_cmp(&(b.2 / b.1 as f64)))
                .then(a.0.cmp(&b.0))
        })
        .map(|t| t.0)
        .expect("at least one neighbor")
}

/// The `k` gallery items most cosine-similar to `query`, best first; equal
/// similarities are ordered by gallery index.
pub fn nearest(gallery: &EmbeddingTable, query: ArrayView1<'_, f64>, k: usize) -> Vec<(usize, f64)> {
    let q_norm = query.dot(&query).sqrt();
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
    for i in 0..gallery.len() {
        let cand = Candidate { sim: gallery.cos(i, query, q_norm), index: i };
        if heap.len() < k {
            heap.push(cand);
        } else if let Some(worst) = heap.peek() {
            if cand < *worst {
                heap.pop();
                heap.push(cand);
            }
        }
    }
    heap.into_sorted_vec()
        .into_iter()
        .map(|c| (c.index, c.sim))
        .collect()
}

/// Cosine k-nearest-neighbor labels for every query row.
pub fn knn_predict(gallery: &EmbeddingTable, queries: &EmbeddingTable, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if gallery.is_empty() {
        return Err(Error::invalid("gallery is empty"));
    }
    if k > gallery.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds gallery size {}",
            gallery.len()
        )));
    }
    if gallery.matrix.ncols() != queries.matrix.ncols() {
        return Err(Error::DimMismatch {
            context: "knn query",
            expected: gallery.matrix.ncols(),
            actual: queries.matrix.ncols(),
        });
    }
    Ok(queries
        .matrix
        .rows()
        .into_iter()
        .map(|q| {
            let neigh: Vec<(usize, f64)> = nearest(gallery, q, k)
                .into_iter()
                .map(|(i, sim)| (gallery.labels[i], 1.0 - sim))
                .collect();
            vote(&neigh)
        })
        .collect())
}
