//! Synthetic imbalanced multi-label data and the three label-noise models.

use ndarray::{Array2, ArrayView1, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{config, contract, shape, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    Mislabel,
    Flip,
    SinglePositive,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(rename = "type")]
    pub kind: NoiseKind,
    /// Ignored for `single_positive`.
    #[serde(default)]
    pub tau: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn mislabel(tau: f64) -> Self {
        Self {
            kind: NoiseKind::Mislabel,
            tau,
        }
    }

    pub fn flip(tau: f64) -> Self {
        Self {
            kind: NoiseKind::Flip,
            tau,
        }
    }

    pub fn single_positive() -> Self {
        Self {
            kind: NoiseKind::SinglePositive,
            tau: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NoiseKind::None | NoiseKind::SinglePositive => Ok(()),
            NoiseKind::Mislabel | NoiseKind::Flip if (0.0..1.0).contains(&self.tau) => Ok(()),
            _ => Err(config(format!("noise rate {} outside [0, 1)", self.tau))),
        }
    }
}

/// Features, ground-truth and observed multi-labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    /// `[N × d]`
    pub features: Array2<T>,
    /// `[N × K]`, entries in {0, 1}.
    pub true_labels: Array2<u8>,
    /// `[N × K]`, entries in {0, 1}.
    pub observed_labels: Array2<u8>,
    pub seed: u64,
    pub noise: NoiseSpec,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Array2<T>, true_labels: Array2<u8>, observed_labels: Array2<u8>, seed: u64) -> Result<Self> {
        if features.nrows() != true_labels.nrows() || true_labels.dim() != observed_labels.dim() {
            return Err(shape(format!(
                "dataset parts disagree: features {:?}, true {:?}, observed {:?}",
                features.dim(),
                true_labels.dim(),
                observed_labels.dim()
            )));
        }
        if true_labels.iter().chain(observed_labels.iter()).any(|&v| v > 1) {
            return Err(contract("labels must be 0 or 1"));
        }
        Ok(Self {
            features,
            true_labels,
            observed_labels,
            seed,
            noise: NoiseSpec::none(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.true_labels.ncols()
    }

    /// Positive counts per class over observed labels.
    pub fn class_positive_counts(&self) -> Vec<usize> {
        column_counts(&self.observed_labels)
    }

    /// Negative counts per class over observed labels.
    pub fn class_negative_counts(&self) -> Vec<usize> {
        let n = self.len();
        self.class_positive_counts().into_iter().map(|p| n - p).collect()
    }

    pub fn true_positive_counts(&self) -> Vec<usize> {
        column_counts(&self.true_labels)
    }

    /// Fraction of label bits where observed differs from truth.
    pub fn realized_noise_rate(&self) -> f64 {
        let diff = self
            .true_labels
            .iter()
            .zip(self.observed_labels.iter())
            .filter(|(a, b)| a != b)
            .count();
        diff as f64 / self.true_labels.len().max(1) as f64
    }

    fn require_clean(&self) -> Result<()> {
        if self.observed_labels != self.true_labels {
            return Err(contract("noise must be injected into clean data (observed == true)"));
        }
        Ok(())
    }
}

fn column_counts(labels: &Array2<u8>) -> Vec<usize> {
    labels
        .axis_iter(Axis(1))
        .map(|col| col.iter().filter(|&&v| v == 1).count())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    /// Class `k` has prevalence `head_prevalence * decay_ratio^k`.
    pub decay_ratio: f64,
    pub head_prevalence: f64,
    /// Shared latent factor weight in `[0, 1]`; 0 gives independent classes.
    pub label_correlation: f64,
    /// Feature noise standard deviation is `1 / separability`.
    pub separability: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            d: 32,
            k: 10,
            decay_ratio: decay_for_imbalance(50.0, 10),
            head_prevalence: 0.5,
            label_correlation: 0.3,
            separability: 1.0,
            seed: 0,
        }
    }
}

/// Geometric decay giving `max/min` prevalence equal to `ratio` over `k` classes.
pub fn decay_for_imbalance(ratio: f64, k: usize) -> f64 {
    if k < 2 {
        return 1.0;
    }
    ratio.powf(-1.0 / (k as f64 - 1.0))
}

impl GeneratorConfig {
    pub fn prevalences(&self) -> Vec<f64> {
        (0..self.k)
            .map(|i| self.head_prevalence * self.decay_ratio.powi(i as i32))
            .collect()
    }

    /// Head-to-tail ratio of the requested profile.
    pub fn requested_imbalance(&self) -> f64 {
        self.decay_ratio.powi(-(self.k as i32 - 1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(config("n and d must be positive"));
        }
        if self.k < 2 {
            return Err(config("at least two classes are required"));
        }
        if !(self.decay_ratio > 0.0 && self.decay_ratio <= 1.0) {
            return Err(config("decay ratio must lie in (0, 1]"));
        }
        if !(self.head_prevalence > 0.0 && self.head_prevalence < 1.0) {
            return Err(config("head prevalence must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.label_correlation) {
            return Err(config("label correlation must lie in [0, 1]"));
        }
        if !(self.separability > 0.0) {
            return Err(config("separability must be positive"));
        }
        let tail = self.n as f64 * self.prevalences()[self.k - 1];
        if tail < 1.0 {
            return Err(config(format!(
                "infeasible profile: tail class expects {tail:.3} positives"
            )));
        }
        Ok(())
    }
}

/// Class prototypes drawn once from the config seed; samples share them.
#[derive(Clone, Debug)]
pub struct Generator {
    config: GeneratorConfig,
    prototypes: Array2<f64>,
    thresholds: Vec<f64>,
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let prototypes = Array2::from_shape_fn((config.k, config.d), |_| rng.sample(StandardNormal));
        let std_normal = Normal::standard();
        let thresholds = config
            .prevalences()
            .iter()
            .map(|&p| std_normal.inverse_cdf(1.0 - p))
            .collect();
        Ok(Self {
            config,
            prototypes,
            thresholds,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn prototypes(&self) -> &Array2<f64> {
        &self.prototypes
    }

    /// `n` instances from the shared prototypes, observed labels equal to truth.
    pub fn sample<T: Scalar>(&self, n: usize, seed: u64) -> Result<Dataset<T>> {
        let (k, d) = (self.config.k, self.config.d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let c = self.config.label_correlation;
        let (shared, own) = (c.sqrt(), (1.0 - c).sqrt());
        let noise_std = 1.0 / self.config.separability;

        let mut labels = Array2::<u8>::zeros((n, k));
        let mut features = Array2::<T>::zeros((n, d));
        for (mut row, mut x) in labels.outer_iter_mut().zip(features.outer_iter_mut()) {
            // rejection keeps prevalence ratios intact
            loop {
                let s: f64 = rng.sample(StandardNormal);
                for (y, &t) in row.iter_mut().zip(&self.thresholds) {
                    let e: f64 = rng.sample(StandardNormal);
                    *y = u8::from(shared * s + own * e > t);
                }
                if row.iter().any(|&y| y == 1) {
                    break;
                }
            }
            for (j, xj) in x.iter_mut().enumerate() {
                let mut v = noise_std * rng.sample::<f64, _>(StandardNormal);
                for (cls, &y) in row.iter().enumerate() {
                    if y == 1 {
                        v += self.prototypes[[cls, j]];
                    }
                }
                // stored values survive the f32 file format exactly
                *xj = T::of(v as f32 as f64);
            }
        }
        let mut ds = Dataset::new(features, labels.clone(), labels, seed)?;
        ds.noise = NoiseSpec::none();
        Ok(ds)
    }
}

/// Training set drawn with the config seed.
pub fn generate<T: Scalar>(config: &GeneratorConfig) -> Result<Dataset<T>> {
    Generator::new(config.clone())?.sample(config.n, config.seed)
}

/// Row `i`: probability that a positive of class `i` moves to class `j`,
/// `tau * N_j / sum_{j' != i} N_j'`. Diagonal is zero; rows sum to `tau`.
pub fn mislabel_transitions(true_counts: &[usize], tau: f64) -> Result<Array2<f64>> {
    let k = true_counts.len();
    if k < 2 {
        return Err(config("mislabeling needs at least two classes"));
    }
    if !(0.0..1.0).contains(&tau) {
        return Err(config(format!("noise rate {tau} outside [0, 1)")));
    }
    let total: usize = true_counts.iter().sum();
    let mut rho = Array2::zeros((k, k));
    for i in 0..k {
        let others = total - true_counts[i];
        if others == 0 {
            if true_counts[i] > 0 && tau > 0.0 {
                return Err(config(format!("class {i} has no destination classes")));
            }
            continue;
        }
        for j in (0..k).filter(|&j| j != i) {
            rho[[i, j]] = tau * true_counts[j] as f64 / others as f64;
        }
    }
    Ok(rho)
}

/// Class-dependent mislabeling: each true positive of class `i` moves to `j`
/// with probability `rho[i][j]`.
pub fn inject_mislabeling<T: Scalar>(ds: &Dataset<T>, tau: f64, seed: u64) -> Result<Dataset<T>> {
    ds.require_clean()?;
    let counts = ds.true_positive_counts();
    let rho = mislabel_transitions(&counts, tau)?;
    let k = ds.num_classes();
    // outcome 0 keeps the label, outcome j + 1 moves it to class j
    let mut choosers = Vec::with_capacity(k);
    for i in 0..k {
        let mut w = vec![1.0 - tau];
        w.extend(rho.row(i).iter().copied());
        choosers.push(WeightedIndex::new(&w).map_err(|e| config(e.to_string()))?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let mut out = ds.clone();
    for (truth, mut obs) in ds.true_labels.outer_iter().zip(out.observed_labels.outer_iter_mut()) {
        for i in positives(truth) {
            let outcome = choosers[i].sample(&mut rng);
            if outcome > 0 {
                obs[i] = 0;
                obs[outcome - 1] = 1;
            }
        }
    }
    out.noise = NoiseSpec::mislabel(tau);
    Ok(out)
}

/// Every label bit flips independently with probability `tau`.
pub fn inject_random_flip<T: Scalar>(ds: &Dataset<T>, tau: f64, seed: u64) -> Result<Dataset<T>> {
    ds.require_clean()?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(config(format!("flip rate {tau} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(4);
    let mut out = ds.clone();
    for y in out.observed_labels.iter_mut() {
        if rng.random_bool(tau) {
            *y = 1 - *y;
        }
    }
    out.noise = NoiseSpec::flip(tau);
    Ok(out)
}

/// Keeps one uniformly chosen true positive per instance.
pub fn inject_single_positive<T: Scalar>(ds: &Dataset<T>, seed: u64) -> Result<Dataset<T>> {
    ds.require_clean()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(5);
    let mut out = ds.clone();
    for (n, (truth, mut obs)) in ds
        .true_labels
        .outer_iter()
        .zip(out.observed_labels.outer_iter_mut())
        .enumerate()
    {
        let pos = positives(truth);
        if pos.is_empty() {
            return Err(contract(format!("instance {n} has no positive label")));
        }
        let keep = pos[rng.random_range(0..pos.len())];
        obs.fill(0);
        obs[keep] = 1;
    }
    out.noise = NoiseSpec::single_positive();
    Ok(out)
}

pub fn inject_noise<T: Scalar>(ds: &Dataset<T>, noise: NoiseSpec, seed: u64) -> Result<Dataset<T>> {
    noise.validate()?;
    match noise.kind {
        NoiseKind::None => Ok(ds.clone()),
        NoiseKind::Mislabel => inject_mislabeling(ds, noise.tau, seed),
        NoiseKind::Flip => inject_random_flip(ds, noise.tau, seed),
        NoiseKind::SinglePositive => inject_single_positive(ds, seed),
    }
}

fn positives(row: ArrayView1<'_, u8>) -> Vec<usize> {
    row.iter().enumerate().filter(|(_, &y)| y == 1).map(|(i, _)| i).collect()
}

/// `max N_i / min N_i`.
pub fn cls_imbalance(counts: &[usize]) -> Result<f64> {
    let max = counts.iter().copied().max().ok_or_else(|| config("no classes"))?;
    let min = counts.iter().copied().min().unwrap();
    if min == 0 {
        return Err(Error::Undefined("class with zero positive labels".into()));
    }
    Ok(max as f64 / min as f64)
}

/// Total negatives over total positives (observed labels).
pub fn pn_imbalance<T: Scalar>(ds: &Dataset<T>) -> Result<f64> {
    let pos: usize = ds.class_positive_counts().iter().sum();
    if pos == 0 {
        return Err(Error::Undefined("dataset has no positive labels".into()));
    }
    let neg: usize = ds.class_negative_counts().iter().sum();
    Ok(neg as f64 / pos as f64)
}
