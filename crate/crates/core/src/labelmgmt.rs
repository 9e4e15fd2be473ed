//! Label-wise management.
//!
//! For every class and polarity the BCE losses of the labels carrying that
//! polarity are modelled by a two-component univariate Gaussian mixture. The
//! posterior of the small-loss component is the clean probability of a label.
//! Labels above 0.5 are kept as clean (`C`). The rest are re-labeled (`R`)
//! when the averaged confidence over two perturbed views of the instance is
//! decisive, and otherwise kept as ambiguous (`U`) with their loss scaled by
//! the clean probability.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{config, shape, Result};
use crate::model::{bce, ModelState};
use crate::scalar::Scalar;

/// Fits with fewer points fall back to "everything clean".
pub const MIN_FIT_POINTS: usize = 20;
pub const VARIANCE_FLOOR: f64 = 1e-8;
pub const RESPONSIBILITY_FLOOR: f64 = 1e-12;
pub const EM_TOLERANCE: f64 = 1e-6;
pub const EM_MAX_ITERATIONS: usize = 100;

/// Re-labeling threshold for settings with several positives per instance.
pub const DEFAULT_EPSILON: f64 = 0.975;
/// Re-labeling threshold for the single-positive setting.
pub const SINGLE_POSITIVE_EPSILON: f64 = 0.550;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reliability {
    #[default]
    #[serde(rename = "C")]
    Clean,
    #[serde(rename = "R")]
    Relabeled,
    #[serde(rename = "U")]
    Ambiguous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    DegenerateFallback,
}

/// Two-component mixture over one class/polarity; index 0 is the clean
/// (smaller-mean) component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LossMixture<T> {
    pub means: [T; 2],
    pub variances: [T; 2],
    pub weights: [T; 2],
    pub status: FitStatus,
    pub iterations: usize,
    pub log_likelihood: T,
    pub num_points: usize,
}

impl<T: Scalar> LossMixture<T> {
    fn fallback(num_points: usize) -> Self {
        Self {
            means: [T::zero(); 2],
            variances: [T::of(VARIANCE_FLOOR); 2],
            weights: [T::one(), T::zero()],
            status: FitStatus::DegenerateFallback,
            iterations: 0,
            log_likelihood: T::zero(),
            num_points,
        }
    }

    pub fn clean_mean(&self) -> T {
        self.means[0]
    }

    pub fn noisy_mean(&self) -> T {
        self.means[1]
    }

    fn log_joint(&self, c: usize, x: T) -> T {
        let two = T::of(2.0);
        let var = self.variances[c];
        let d = x - self.means[c];
        self.weights[c].max(T::of(RESPONSIBILITY_FLOOR)).ln() - T::half() * (T::of(2.0 * PI) * var).ln()
            - d * d / (two * var)
    }
}

/// Mixtures for the positive and negative labels of one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GmmPair<T> {
    pub positive: LossMixture<T>,
    pub negative: LossMixture<T>,
}

impl<T: Scalar> GmmPair<T> {
    pub fn for_label(&self, label: u8) -> &LossMixture<T> {
        if label == 1 {
            &self.positive
        } else {
            &self.negative
        }
    }
}

pub type GmmBank<T> = Vec<GmmPair<T>>;

/// Per-class BCE losses split by label polarity.
#[derive(Clone, Debug, PartialEq)]
pub struct LossPartitions<T> {
    pub positive: Vec<Vec<T>>,
    pub negative: Vec<Vec<T>>,
}

pub fn collect_loss_partitions<T: Scalar>(
    confidences: ArrayView2<'_, T>,
    labels: ArrayView2<'_, u8>,
) -> Result<LossPartitions<T>> {
    if confidences.dim() != labels.dim() {
        return Err(shape("confidences and labels differ in shape"));
    }
    let k = labels.ncols();
    let mut parts = LossPartitions {
        positive: vec![Vec::new(); k],
        negative: vec![Vec::new(); k],
    };
    for (f_row, y_row) in confidences.outer_iter().zip(labels.outer_iter()) {
        for c in 0..k {
            if y_row[c] == 1 {
                parts.positive[c].push(bce(f_row[c], T::one()));
            } else {
                parts.negative[c].push(bce(f_row[c], T::zero()));
            }
        }
    }
    Ok(parts)
}

fn percentile<T: Scalar>(sorted: &[T], q: f64) -> T {
    let idx = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx]
}

/// Two-component EM; see [`fit_gmm_traced`] for the per-iteration likelihoods.
pub fn fit_gmm<T: Scalar>(losses: &[T]) -> LossMixture<T> {
    fit_gmm_traced(losses).0
}

/// Two-component EM from percentile initialization, also returning the
/// log-likelihood observed at every E-step.
pub fn fit_gmm_traced<T: Scalar>(losses: &[T]) -> (LossMixture<T>, Vec<T>) {
    let n = losses.len();
    if n < MIN_FIT_POINTS {
        return (LossMixture::fallback(n), Vec::new());
    }
    let nf = T::from_usize(n).unwrap();
    let mean = losses.iter().fold(T::zero(), |a, &b| a + b) / nf;
    let var = losses.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) / nf;
    let floor = T::of(VARIANCE_FLOOR);
    if !(var > floor) {
        return (LossMixture::fallback(n), Vec::new());
    }
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut gmm = LossMixture {
        means: [percentile(&sorted, 0.2), percentile(&sorted, 0.8)],
        variances: [var, var],
        weights: [T::half(), T::half()],
        status: FitStatus::Converged,
        iterations: 0,
        log_likelihood: T::neg_infinity(),
        num_points: n,
    };
    let r_floor = T::of(RESPONSIBILITY_FLOOR);
    let mut resp = vec![[T::zero(); 2]; n];
    let mut trace = Vec::new();
    for it in 0..EM_MAX_ITERATIONS {
        let mut ll = T::zero();
        for (r, &x) in resp.iter_mut().zip(losses) {
            let a = gmm.log_joint(0, x);
            let b = gmm.log_joint(1, x);
            let m = a.max(b);
            let lse = m + ((a - m).exp() + (b - m).exp()).ln();
            ll = ll + lse;
            *r = [(a - lse).exp().max(r_floor), (b - lse).exp().max(r_floor)];
        }
        trace.push(ll);
        gmm.log_likelihood = ll;
        gmm.iterations = it;
        if it > 0 && (ll - trace[it - 1]).abs() < T::of(EM_TOLERANCE) {
            break;
        }
        for c in 0..2 {
            let mass = resp.iter().fold(T::zero(), |a, r| a + r[c]);
            let mu = resp.iter().zip(losses).fold(T::zero(), |a, (r, &x)| a + r[c] * x) / mass;
            let v = resp
                .iter()
                .zip(losses)
                .fold(T::zero(), |a, (r, &x)| a + r[c] * (x - mu) * (x - mu))
                / mass;
            gmm.weights[c] = mass / nf;
            gmm.means[c] = mu;
            gmm.variances[c] = v.max(floor);
        }
        let total = gmm.weights[0] + gmm.weights[1];
        gmm.weights = [gmm.weights[0] / total, gmm.weights[1] / total];
    }
    if gmm.means[0] > gmm.means[1] {
        gmm.means.swap(0, 1);
        gmm.variances.swap(0, 1);
        gmm.weights.swap(0, 1);
    }
    (gmm, trace)
}

/// Posterior probability of the small-loss component; 1 for fallback fits.
pub fn clean_posterior<T: Scalar>(gmm: &LossMixture<T>, loss: T) -> T {
    if gmm.status == FitStatus::DegenerateFallback {
        return T::one();
    }
    let a = gmm.log_joint(0, loss);
    let b = gmm.log_joint(1, loss);
    // logistic form of a / (a + b) in log space, no 0/0
    T::one() / (T::one() + (b - a).exp())
}

/// Fits the 2K mixtures; `threads > 1` fans classes out over scoped threads.
pub fn fit_gmm_bank<T: Scalar>(parts: &LossPartitions<T>, threads: usize) -> GmmBank<T> {
    let k = parts.positive.len();
    let fit_class = |c: usize| GmmPair {
        positive: fit_gmm(&parts.positive[c]),
        negative: fit_gmm(&parts.negative[c]),
    };
    let threads = threads.clamp(1, k.max(1));
    if threads == 1 {
        return (0..k).map(fit_class).collect();
    }
    let chunk = k.div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..k)
            .step_by(chunk)
            .map(|start| {
                let fit_class = &fit_class;
                s.spawn(move || (start..(start + chunk).min(k)).map(fit_class).collect::<Vec<_>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("mixture fit thread panicked"))
            .collect()
    })
}

/// Stochastic feature view: additive Gaussian noise scaled per feature, then
/// inverted dropout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Noise standard deviation as a fraction of each feature's spread.
    pub noise_scale: f64,
    pub dropout: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_scale: 0.1,
            dropout: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        Self {
            noise_scale: 0.0,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_scale >= 0.0) || !(0.0..1.0).contains(&self.dropout) {
            return Err(config("augmentation needs noise_scale >= 0 and dropout in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FeatureAugmenter<T> {
    config: AugmentConfig,
    feature_std: Array1<T>,
}

impl<T: Scalar> FeatureAugmenter<T> {
    pub fn new(config: AugmentConfig, features: ArrayView2<'_, T>) -> Result<Self> {
        config.validate()?;
        let feature_std = if features.nrows() > 0 {
            features.std_axis(Axis(0), T::zero())
        } else {
            Array1::zeros(features.ncols())
        };
        Ok(Self { config, feature_std })
    }

    pub fn view<R: Rng + ?Sized>(&self, features: ArrayView2<'_, T>, rng: &mut R) -> Result<Array2<T>> {
        if features.ncols() != self.feature_std.len() {
            return Err(shape("augmenter was built for a different feature width"));
        }
        let scale = T::of(self.config.noise_scale);
        let keep = T::of(1.0 / (1.0 - self.config.dropout));
        let mut out = features.to_owned();
        for mut row in out.outer_iter_mut() {
            Zip::from(&mut row).and(&self.feature_std).for_each(|x, &sd| {
                let z: f64 = rng.sample(StandardNormal);
                let noisy = *x + scale * sd * T::of(z);
                *x = if rng.random_bool(self.config.dropout) {
                    T::zero()
                } else {
                    noisy * keep
                };
            });
        }
        Ok(out)
    }
}

/// Mean confidence over two independently augmented views, `[N × K]`.
pub fn two_view_confidences<T: Scalar, R: Rng + ?Sized>(
    model: &ModelState<T>,
    features: ArrayView2<'_, T>,
    augmenter: &FeatureAugmenter<T>,
    rng: &mut R,
) -> Result<Array2<T>> {
    let first = model.forward(augmenter.view(features, rng)?.view())?;
    let second = model.forward(augmenter.view(features, rng)?.view())?;
    Ok((first + second) * T::half())
}

/// Two-view confidence for class `k` of a single instance.
pub fn two_view_confidence<T: Scalar, R: Rng + ?Sized>(
    model: &ModelState<T>,
    features: ndarray::ArrayView1<'_, T>,
    k: usize,
    augmenter: &FeatureAugmenter<T>,
    rng: &mut R,
) -> Result<T> {
    if k >= model.num_classes() {
        return Err(shape(format!("class {k} out of range")));
    }
    let x = features.insert_axis(Axis(0));
    Ok(two_view_confidences(model, x, augmenter, rng)?[[0, k]])
}

/// Per-label triage state carried between epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LabelLedger<T> {
    pub working: Array2<u8>,
    pub reliability: Array2<Reliability>,
    pub clean_posterior: Array2<T>,
    /// Two-view mean confidence seen when the tag was assigned.
    pub view_confidence: Array2<T>,
}

impl<T: Scalar> LabelLedger<T> {
    /// Observed labels, all tagged clean with weight 1.
    pub fn from_observed(observed: &Array2<u8>) -> Self {
        Self {
            working: observed.clone(),
            reliability: Array2::from_elem(observed.dim(), Reliability::Clean),
            clean_posterior: Array2::from_elem(observed.dim(), T::one()),
            view_confidence: Array2::from_elem(observed.dim(), T::half()),
        }
    }

    pub fn counts(&self) -> TagCounts {
        let mut c = TagCounts::default();
        self.reliability.iter().for_each(|t| c.add(*t));
        c
    }

    pub fn class_counts(&self) -> Vec<TagCounts> {
        self.reliability
            .axis_iter(Axis(1))
            .map(|col| {
                let mut c = TagCounts::default();
                col.iter().for_each(|t| c.add(*t));
                c
            })
            .collect()
    }

    /// Working labels as soft targets.
    pub fn targets(&self) -> Array2<T> {
        self.working.mapv(|v| if v == 1 { T::one() } else { T::zero() })
    }

    /// Loss weight per label: 1 for C and R, clean posterior for U.
    pub fn loss_weights(&self) -> Array2<T> {
        let mut w = Array2::from_elem(self.working.dim(), T::one());
        Zip::from(&mut w)
            .and(&self.reliability)
            .and(&self.clean_posterior)
            .for_each(|w, &t, &p| {
                if t == Reliability::Ambiguous {
                    *w = p;
                }
            });
        w
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagCounts {
    pub clean: usize,
    pub relabeled: usize,
    pub ambiguous: usize,
}

impl TagCounts {
    fn add(&mut self, t: Reliability) {
        match t {
            Reliability::Clean => self.clean += 1,
            Reliability::Relabeled => self.relabeled += 1,
            Reliability::Ambiguous => self.ambiguous += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.clean + self.relabeled + self.ambiguous
    }
}

/// Which labels the mixtures and triage start from each epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelBase {
    /// The ledger's working labels (re-labels persist across epochs).
    #[default]
    Working,
    /// The observed labels, re-derived every epoch.
    Original,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManagementConfig {
    pub epsilon: f64,
    pub augment: AugmentConfig,
    pub base: LabelBase,
    pub threads: usize,
}

impl Default for ManagementConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            augment: AugmentConfig::default(),
            base: LabelBase::Working,
            threads: 1,
        }
    }
}

pub fn validate_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.5 && epsilon <= 1.0) {
        return Err(config(format!("re-labeling threshold {epsilon} outside (0.5, 1]")));
    }
    Ok(())
}

/// Assigns a tag to one label given its clean posterior and two-view confidence.
/// Returns the new working label.
pub fn triage<T: Scalar>(label: u8, posterior: T, view_confidence: T, epsilon: T) -> (u8, Reliability) {
    if posterior > T::half() {
        (label, Reliability::Clean)
    } else if view_confidence > epsilon {
        (1, Reliability::Relabeled)
    } else if view_confidence < T::one() - epsilon {
        (0, Reliability::Relabeled)
    } else {
        (label, Reliability::Ambiguous)
    }
}

/// One management pass over the full dataset with a frozen model.
pub fn manage_labels<T: Scalar, R: Rng + ?Sized>(
    model: &ModelState<T>,
    dataset: &Dataset<T>,
    ledger: &LabelLedger<T>,
    cfg: &ManagementConfig,
    augmenter: &FeatureAugmenter<T>,
    rng: &mut R,
) -> Result<(LabelLedger<T>, GmmBank<T>)> {
    validate_epsilon(cfg.epsilon)?;
    let base = match cfg.base {
        LabelBase::Working => &ledger.working,
        LabelBase::Original => &dataset.observed_labels,
    };
    if base.dim() != (dataset.len(), model.num_classes()) {
        return Err(shape("ledger does not match dataset and model"));
    }
    let x = dataset.features.view();
    let f = model.forward(x)?;
    let parts = collect_loss_partitions(f.view(), base.view())?;
    let bank = fit_gmm_bank(&parts, cfg.threads);
    let views = two_view_confidences(model, x, augmenter, rng)?;

    let eps = T::of(cfg.epsilon);
    let mut next = LabelLedger {
        working: base.clone(),
        reliability: Array2::from_elem(base.dim(), Reliability::Clean),
        clean_posterior: Array2::zeros(base.dim()),
        view_confidence: views,
    };
    for ((n, c), &label) in base.indexed_iter() {
        let target = if label == 1 { T::one() } else { T::zero() };
        let p = clean_posterior(bank[c].for_label(label), bce(f[[n, c]], target));
        let (new_label, tag) = triage(label, p, next.view_confidence[[n, c]], eps);
        next.working[[n, c]] = new_label;
        next.reliability[[n, c]] = tag;
        next.clean_posterior[[n, c]] = p;
    }
    Ok((next, bank))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_gaussians(n: usize, w: f64, a: (f64, f64), b: (f64, f64), seed: u64) -> (Vec<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(n);
        let mut from_a = Vec::with_capacity(n);
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            if rng.random_bool(w) {
                xs.push(a.0 + a.1 * z);
                from_a.push(true);
            } else {
                xs.push(b.0 + b.1 * z);
                from_a.push(false);
            }
        }
        (xs, from_a)
    }

    #[test]
    fn partitions_split_by_label() {
        let f: Array2<f64> = array![[0.9], [0.2], [0.6]];
        let y = array![[1u8], [0], [1]];
        let p = collect_loss_partitions(f.view(), y.view()).unwrap();
        assert_eq!(p.positive[0].len(), 2);
        assert_eq!(p.negative[0].len(), 1);
        assert!((p.negative[0][0] - -(0.8f64).ln()).abs() < 1e-15);

        let all_pos = array![[1u8], [1]];
        let p = collect_loss_partitions(array![[0.5], [0.5]].view(), all_pos.view()).unwrap();
        assert!(p.negative[0].is_empty());
    }

    #[test]
    fn partitions_match_scalar_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = Array2::from_shape_fn((20, 3), |_| rng.random_range(0.01..0.99));
        let y = Array2::from_shape_fn((20, 3), |_| u8::from(rng.random_bool(0.5)));
        let p = collect_loss_partitions(f.view(), y.view()).unwrap();
        for c in 0..3 {
            let mut pos = Vec::new();
            let mut neg = Vec::new();
            for n in 0..20 {
                if y[[n, c]] == 1 {
                    pos.push(-f64::ln(f[[n, c]]));
                } else {
                    neg.push(-f64::ln(1.0 - f[[n, c]]));
                }
            }
            assert_eq!(p.positive[c].len(), pos.len());
            assert!(p.positive[c].iter().zip(&pos).all(|(a, b)| (a - b).abs() < 1e-12));
            assert!(p.negative[c].iter().zip(&neg).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn recovers_generating_mixture() {
        let (xs, _) = two_gaussians(2000, 0.7, (0.1, 0.05), (1.5, 0.1), 1);
        let g = fit_gmm(&xs);
        assert_eq!(g.status, FitStatus::Converged);
        assert!((g.means[0] - 0.1).abs() < 0.05);
        assert!((g.means[1] - 1.5).abs() < 0.05);
        assert!((g.weights[0] - 0.7).abs() < 0.05);
    }

    #[test]
    fn identical_losses_fall_back() {
        let g = fit_gmm(&[0.3f64; 50]);
        assert_eq!(g.status, FitStatus::DegenerateFallback);
        assert_eq!(clean_posterior(&g, 10.0), 1.0);
        let small = fit_gmm(&[0.1f64, 0.2, 0.3]);
        assert_eq!(small.status, FitStatus::DegenerateFallback);
    }

    #[test]
    fn two_atoms_collapse_to_floor() {
        let mut xs = vec![0.2f64; 60];
        xs.extend(vec![1.0; 40]);
        let g = fit_gmm(&xs);
        assert_eq!(g.status, FitStatus::Converged);
        assert!((g.means[0] - 0.2).abs() < 1e-9);
        assert!((g.means[1] - 1.0).abs() < 1e-9);
        assert_eq!(g.variances, [VARIANCE_FLOOR; 2]);
        assert!((g.weights[0] - 0.6).abs() < 1e-9);
    }

    #[test]
    fn em_log_likelihood_never_decreases() {
        for seed in 0..5 {
            let (xs, _) = two_gaussians(500, 0.6, (0.2, 0.1), (0.9, 0.3), seed);
            let (_, trace) = fit_gmm_traced(&xs);
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
            }
        }
    }

    fn symmetric() -> LossMixture<f64> {
        LossMixture {
            means: [0.0, 2.0],
            variances: [0.25, 0.25],
            weights: [0.5, 0.5],
            status: FitStatus::Converged,
            iterations: 1,
            log_likelihood: 0.0,
            num_points: 100,
        }
    }

    #[test]
    fn posterior_symmetry_and_tails() {
        let g = symmetric();
        assert!((clean_posterior(&g, 1.0) - 0.5).abs() < 1e-15);
        assert!(clean_posterior(&g, 50.0) < 1e-12);
        assert!(clean_posterior(&g, 1e6) >= 0.0);
    }

    #[test]
    fn posterior_near_clean_mode_of_separated_mixture() {
        let g = LossMixture {
            means: [0.1, 3.0],
            variances: [0.01, 0.01],
            weights: [0.3, 0.7],
            ..symmetric()
        };
        // density ratio: exp(-(2.9)^2 / 0.02) is negligible
        let odds = (0.7 / 0.3) * (-(2.9f64 * 2.9) / 0.02).exp();
        let expect = 1.0 / (1.0 + odds);
        let p = clean_posterior(&g, 0.1);
        assert!(p > 0.99);
        assert!((p - expect).abs() < 1e-12);
    }

    #[test]
    fn calibration_on_separated_modes() {
        // modes 8 sigma apart
        let (xs, from_a) = two_gaussians(3000, 0.5, (0.0, 0.1), (0.8, 0.1), 4);
        let g = fit_gmm(&xs);
        let hits = xs
            .iter()
            .zip(&from_a)
            .filter(|(_, &a)| a)
            .filter(|(&x, _)| clean_posterior(&g, x) > 0.5)
            .count();
        let total = from_a.iter().filter(|&&a| a).count();
        assert!(hits as f64 / total as f64 >= 0.95);
    }

    #[test]
    fn triage_branches() {
        assert_eq!(triage(0u8, 0.9, 0.99, 0.975), (0, Reliability::Clean));
        assert_eq!(triage(0u8, 0.2, 0.98, 0.975), (1, Reliability::Relabeled));
        assert_eq!(triage(1u8, 0.2, 0.01, 0.975), (0, Reliability::Relabeled));
        assert_eq!(triage(1u8, 0.2, 0.5, 0.975), (1, Reliability::Ambiguous));
        // exactly one half is not clean
        assert_eq!(triage(1u8, 0.5, 0.5, 0.975), (1, Reliability::Ambiguous));
    }

    #[test]
    fn epsilon_must_exceed_half() {
        assert!(validate_epsilon(0.5).is_err());
        assert!(validate_epsilon(1.01).is_err());
        assert!(validate_epsilon(0.55).is_ok());
        assert!(validate_epsilon(1.0).is_ok());
    }

    #[test]
    fn identity_views_equal_plain_confidence() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = ModelState::<f64>::init(4, 6, 3, &mut rng).unwrap();
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i * 4 + j) as f64 * 0.1 - 1.0);
        let aug = FeatureAugmenter::new(AugmentConfig::identity(), x.view()).unwrap();
        let v = two_view_confidences(&m, x.view(), &aug, &mut rng).unwrap();
        let plain = m.forward(x.view()).unwrap();
        assert!(v.iter().zip(plain.iter()).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn two_views_match_explicit_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = ModelState::<f64>::init(4, 6, 3, &mut rng).unwrap();
        let x = Array2::from_shape_fn((5, 4), |(i, j)| ((i + 2 * j) % 5) as f64 * 0.3 - 0.6);
        let aug = FeatureAugmenter::new(AugmentConfig::default(), x.view()).unwrap();

        let mut r1 = ChaCha8Rng::seed_from_u64(77);
        let v = two_view_confidences(&m, x.view(), &aug, &mut r1).unwrap();

        let mut r2 = ChaCha8Rng::seed_from_u64(77);
        let a = m.forward(aug.view(x.view(), &mut r2).unwrap().view()).unwrap();
        let b = m.forward(aug.view(x.view(), &mut r2).unwrap().view()).unwrap();
        for ((v, a), b) in v.iter().zip(a.iter()).zip(b.iter()) {
            assert!((v - 0.5 * (a + b)).abs() < 1e-15);
        }

        let mut r3 = ChaCha8Rng::seed_from_u64(77);
        let single = two_view_confidence(&m, x.row(0), 2, &aug, &mut r3).unwrap();
        assert!(single > 0.0 && single < 1.0);
    }

    #[test]
    fn bank_is_independent_of_thread_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = Array2::from_shape_fn((300, 5), |_| rng.random_range(0.01..0.99));
        let y = Array2::from_shape_fn((300, 5), |_| u8::from(rng.random_bool(0.4)));
        let parts = collect_loss_partitions(f.view(), y.view()).unwrap();
        let one = fit_gmm_bank(&parts, 1);
        let many = fit_gmm_bank(&parts, 3);
        assert_eq!(one, many);
        assert!(one.iter().all(|p| p.positive.means[0] <= p.positive.means[1]));
    }
}
