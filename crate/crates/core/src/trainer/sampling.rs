use rand::Rng;

use crate::error::{Error, Result};

/// Item indices of one training triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletIndex {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Uniform triplet sampler over a fixed label vector.
///
/// Anchors are uniform over items whose class has at least two members,
/// positives uniform over the anchor's classmates, negatives uniform over all
/// items of other classes.
#[derive(Debug, Clone)]
pub struct TripletSampler {
    labels: Vec<usize>,
    by_class: Vec<Vec<usize>>,
    others: Vec<Vec<usize>>,
    eligible: Vec<usize>,
}

impl TripletSampler {
    pub fn new(labels: &[usize]) -> Result<Self> {
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut by_class = vec![Vec::new(); classes];
        for (i, &l) in labels.iter().enumerate() {
            by_class[l].push(i);
        }
        let present = by_class.iter().filter(|c| !c.is_empty()).count();
        if present < 2 {
            return Err(Error::invalid(format!(
                "triplet sampling needs at least 2 classes, found {present}"
            )));
        }
        let eligible: Vec<usize> = (0..labels.len())
            .filter(|&i| by_class[labels[i]].len() >= 2)
            .collect();
        if eligible.is_empty() {
            return Err(Error::invalid("triplet sampling needs a class with at least 2 samples"));
        }
        let others = (0..classes)
            .map(|c| (0..labels.len()).filter(|&i| labels[i] != c).collect())
            .collect();
        Ok(TripletSampler {
            labels: labels.to_vec(),
            by_class,
            others,
            eligible,
        })
    }

    /// Draws `count` triplets. Each triplet consumes three draws from `rng` in
    /// the order anchor, positive, negative.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<TripletIndex> {
        (0..count)
            .map(|_| {
                let anchor = self.eligible[rng.random_range(0..self.eligible.len())];
                let class = self.labels[anchor];
                let mates = &self.by_class[class];
                let pos_at = mates.binary_search(&anchor).expect("anchor is in its class");
                let mut k = rng.random_range(0..mates.len() - 1);
                if k >= pos_at {
                    k += 1;
                }
                let others = &self.others[class];
                let negative = others[rng.random_range(0..others.len())];
                TripletIndex {
                    anchor,
                    positive: mates[k],
                    negative,
                }
            })
            .collect()
    }
}

/// One-shot form of [`TripletSampler::sample`].
pub fn sample_triplets<R: Rng + ?Sized>(
    labels: &[usize],
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<TripletIndex>> {
    Ok(TripletSampler::new(labels)?.sample(batch_size, rng))
}
