//! Confidence-based minority sampling and the epoch-shuffled random sampler.
//!
//! Per class, `P(k)` is the mean confidence over instances whose label for
//! `k` is positive and `A(k)` the mean of `1 - f` over the negatives. An
//! instance's score sums `P` or `A` over its labels; instances are then drawn
//! with probability proportional to the inverse score, so instances whose
//! labels the model is least sure about are oversampled.

use ndarray::{ArrayView1, ArrayView2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, shape, Result};
use crate::scalar::Scalar;

/// Scores are floored here before inversion.
pub const SCORE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ConfidenceTable<T> {
    /// Mean confidence over positives; `None` when the class has none.
    pub presence: Vec<Option<T>>,
    /// Mean of `1 - f` over negatives; `None` when the class has none.
    pub absence: Vec<Option<T>>,
    pub positive_support: Vec<usize>,
    pub negative_support: Vec<usize>,
}

impl<T: Scalar> ConfidenceTable<T> {
    pub fn num_classes(&self) -> usize {
        self.presence.len()
    }

    /// Score of one label vector, floored at [`SCORE_FLOOR`].
    pub fn score(&self, labels: ArrayView1<'_, u8>) -> Result<T> {
        if labels.len() != self.num_classes() {
            return Err(shape("label vector length differs from table width"));
        }
        let mut s = T::zero();
        for (k, &y) in labels.iter().enumerate() {
            let term = if y == 1 { self.presence[k] } else { self.absence[k] };
            s = s + term.ok_or_else(|| {
                contract(format!("class {k} has no {} support", if y == 1 { "positive" } else { "negative" }))
            })?;
        }
        Ok(s.max(T::of(SCORE_FLOOR)))
    }
}

pub fn update_confidence_table<T: Scalar>(
    confidences: ArrayView2<'_, T>,
    labels: ArrayView2<'_, u8>,
) -> Result<ConfidenceTable<T>> {
    if confidences.dim() != labels.dim() {
        return Err(shape(format!(
            "confidences {:?} and labels {:?} differ",
            confidences.dim(),
            labels.dim()
        )));
    }
    let k = labels.ncols();
    let mut pos_sum = vec![T::zero(); k];
    let mut neg_sum = vec![T::zero(); k];
    let mut pos_n = vec![0usize; k];
    let mut neg_n = vec![0usize; k];
    for (f_row, y_row) in confidences.outer_iter().zip(labels.outer_iter()) {
        for c in 0..k {
            if y_row[c] == 1 {
                pos_sum[c] = pos_sum[c] + f_row[c];
                pos_n[c] += 1;
            } else {
                neg_sum[c] = neg_sum[c] + (T::one() - f_row[c]);
                neg_n[c] += 1;
            }
        }
    }
    let mean = |s: T, n: usize| (n > 0).then(|| s / T::from_usize(n).unwrap());
    Ok(ConfidenceTable {
        presence: pos_sum.iter().zip(&pos_n).map(|(&s, &n)| mean(s, n)).collect(),
        absence: neg_sum.iter().zip(&neg_n).map(|(&s, &n)| mean(s, n)).collect(),
        positive_support: pos_n,
        negative_support: neg_n,
    })
}

pub fn instance_score<T: Scalar>(table: &ConfidenceTable<T>, labels: ArrayView1<'_, u8>) -> Result<T> {
    table.score(labels)
}

/// Normalized inverse scores.
pub fn sampling_distribution<T: Scalar>(scores: &[T]) -> Result<Vec<T>> {
    if scores.is_empty() {
        return Err(shape("no scores"));
    }
    if scores.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) {
        return Err(contract("scores must be positive and finite"));
    }
    let inv: Vec<T> = scores.iter().map(|&s| T::one() / s).collect();
    let total = inv.iter().fold(T::zero(), |a, &b| a + b);
    Ok(inv.into_iter().map(|v| v / total).collect())
}

/// State of the minority sampler: per-instance scores and draw probabilities.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SamplerState<T> {
    pub scores: Vec<T>,
    pub probs: Vec<T>,
    /// `None` until the first table update; probabilities are uniform then.
    pub epoch_of_last_update: Option<usize>,
    pub rng_seed: u64,
    #[serde(skip)]
    index: Option<WeightedIndex<f64>>,
}

impl<T: PartialEq> PartialEq for SamplerState<T> {
    fn eq(&self, other: &Self) -> bool {
        self.scores == other.scores
            && self.probs == other.probs
            && self.epoch_of_last_update == other.epoch_of_last_update
            && self.rng_seed == other.rng_seed
    }
}

impl<T: Scalar> SamplerState<T> {
    pub fn uniform(n: usize, rng_seed: u64) -> Result<Self> {
        Self::from_scores(vec![T::one(); n], None, rng_seed)
    }

    pub fn from_scores(scores: Vec<T>, epoch: Option<usize>, rng_seed: u64) -> Result<Self> {
        let probs = sampling_distribution(&scores)?;
        Ok(Self {
            scores,
            probs,
            epoch_of_last_update: epoch,
            rng_seed,
            index: None,
        })
    }

    /// Recompute scores and probabilities from a full-dataset snapshot.
    pub fn update(
        &mut self,
        table: &ConfidenceTable<T>,
        labels: ArrayView2<'_, u8>,
        epoch: usize,
    ) -> Result<()> {
        let scores = labels
            .outer_iter()
            .map(|row| table.score(row))
            .collect::<Result<Vec<_>>>()?;
        *self = Self::from_scores(scores, Some(epoch), self.rng_seed)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Shannon entropy of the draw distribution, in nats.
    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .map(|p| p.f64())
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }

    fn weighted_index(&mut self) -> Result<&WeightedIndex<f64>> {
        if self.index.is_none() {
            let w: Vec<f64> = self.probs.iter().map(|p| p.f64()).collect();
            self.index = Some(WeightedIndex::new(&w).map_err(|e| contract(e.to_string()))?);
        }
        Ok(self.index.as_ref().unwrap())
    }
}

/// `b` i.i.d. draws with replacement from the sampler probabilities.
pub fn draw_minority_batch<T: Scalar, R: Rng + ?Sized>(
    state: &mut SamplerState<T>,
    b: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if b > state.len() {
        return Err(config(format!("batch size {b} exceeds {} instances", state.len())));
    }
    let index = state.weighted_index()?;
    Ok((0..b).map(|_| index.sample(rng)).collect())
}

/// `b` distinct indices drawn uniformly from `0..n`.
pub fn draw_random_batch<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Result<Vec<usize>> {
    if b > n {
        return Err(config(format!("batch size {b} exceeds {n} instances")));
    }
    Ok(rand::seq::index::sample(rng, n, b).into_vec())
}

/// Epoch-shuffled sampling without replacement: each epoch is one permutation
/// consumed in consecutive batches; a trailing partial batch is dropped.
#[derive(Clone, Debug)]
pub struct EpochShuffler {
    order: Vec<usize>,
    cursor: usize,
}

impl EpochShuffler {
    pub fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            cursor: n,
        }
    }

    pub fn start_epoch<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.order.sort_unstable();
        self.order.shuffle(rng);
        self.cursor = 0;
    }

    pub fn next_batch(&mut self, b: usize) -> Result<&[usize]> {
        if b > self.order.len() {
            return Err(config(format!("batch size {b} exceeds {} instances", self.order.len())));
        }
        if self.cursor + b > self.order.len() {
            return Err(contract("epoch permutation exhausted"));
        }
        let batch = &self.order[self.cursor..self.cursor + b];
        self.cursor += b;
        Ok(batch)
    }

    pub fn batches_per_epoch(&self, b: usize) -> usize {
        self.order.len() / b.max(1)
    }
}

/// Empirical frequencies of `draws` over `n` slots.
pub fn frequencies(draws: &[usize], n: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n];
    draws.iter().for_each(|&i| counts[i] += 1);
    counts.into_iter().map(|c| c as f64 / draws.len() as f64).collect()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
