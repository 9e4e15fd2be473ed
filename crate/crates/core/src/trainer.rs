//! The training loop: warm-up on minority-augmented batches with the plain
//! loss, then per-epoch label management with the reliability-weighted loss.
//! A plain BCE baseline shares the same loop with sampling, mixing and
//! management switched off.

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{config, contract, shape, Result};
use crate::labelmgmt::{
    manage_labels, validate_epsilon, AugmentConfig, FeatureAugmenter, GmmBank, LabelBase, LabelLedger,
    ManagementConfig, Reliability, TagCounts,
};
use crate::metrics::{evaluate_scores, selection_metrics, GroupSpec, ManagementDiagnostics, MetricsReport};
use crate::mixing::{draw_lambda, mix, InstanceRef, MixedInstance};
use crate::model::{sgd_step, Gradients, MiniBatch, ModelState, OptimizerState};
use crate::sampling::{draw_minority_batch, update_confidence_table, ConfidenceTable, EpochShuffler, SamplerState};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Balancemix,
    BceBaseline,
}

/// Labels the minority sampler scores instances with after warm-up.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerLabelSource {
    #[default]
    Refined,
    Original,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub hidden_dim: usize,
    pub seed: u64,
    pub mode: Mode,
    pub sampler_label_source: SamplerLabelSource,
    pub label_base: LabelBase,
    pub augment: AugmentConfig,
    pub cosine_decay: bool,
    /// Threads for the per-epoch mixture fits; results do not depend on it.
    pub threads: usize,
    /// Shot-group thresholds; fractions of the validation size when absent.
    pub groups: Option<GroupSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            warmup_epochs: 10,
            batch_size: 32,
            alpha: crate::mixing::DEFAULT_ALPHA,
            epsilon: crate::labelmgmt::DEFAULT_EPSILON,
            learning_rate: 0.02,
            momentum: 0.9,
            weight_decay: 1e-4,
            hidden_dim: 128,
            seed: 0,
            mode: Mode::Balancemix,
            sampler_label_source: SamplerLabelSource::Refined,
            label_base: LabelBase::Working,
            augment: AugmentConfig::default(),
            cosine_decay: false,
            threads: 1,
            groups: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(config("epochs must be positive"));
        }
        if self.warmup_epochs > self.epochs {
            return Err(config("warm-up cannot exceed the number of epochs"));
        }
        if self.batch_size == 0 || self.hidden_dim == 0 {
            return Err(config("batch size and hidden width must be positive"));
        }
        if !(self.alpha > 0.0) {
            return Err(config("mixup alpha must be positive"));
        }
        validate_epsilon(self.epsilon)?;
        self.augment.validate()?;
        if let Some(g) = self.groups {
            GroupSpec::new(g.many, g.medium)?;
        }
        Ok(())
    }

    fn learning_rate_at(&self, epoch: usize) -> f64 {
        if !self.cosine_decay {
            return self.learning_rate;
        }
        let progress = (epoch - 1) as f64 / self.epochs as f64;
        0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub learning_rate: f64,
    pub mean_loss: f64,
    /// Tag counts of the ledger in force after this epoch; `None` before management starts.
    pub tags: Option<TagCounts>,
    pub sampler_entropy: Option<f64>,
    pub validation: MetricsReport,
    pub diagnostics: Option<ManagementDiagnostics>,
}

/// Per-epoch state dumps for offline inspection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EpochTrace<T> {
    pub epoch: usize,
    pub table: Option<ConfidenceTable<T>>,
    pub sampler: Option<SamplerState<T>>,
    pub gmm: Option<GmmBank<T>>,
    pub class_tags: Option<Vec<TagCounts>>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: ModelState<T>,
    pub reports: Vec<EpochReport>,
    pub traces: Vec<EpochTrace<T>>,
    pub ledger: Option<LabelLedger<T>>,
}

/// Mean over the batch of the per-label loss sum, with weight 1 for clean or
/// re-labeled labels and the clean posterior for ambiguous ones; with gradients.
pub fn composite_loss_and_grads<T: Scalar>(
    batch: &[MixedInstance<T>],
    model: &ModelState<T>,
) -> Result<(T, Gradients<T>)> {
    let first = batch.first().ok_or_else(|| shape("empty mixed batch"))?;
    let (b, d, k) = (batch.len(), first.features.len(), first.labels.len());
    let mut x = Array2::zeros((b, d));
    let mut y = Array2::zeros((b, k));
    let mut w = Array2::zeros((b, k));
    for (i, m) in batch.iter().enumerate() {
        if m.features.len() != d || m.labels.len() != k {
            return Err(shape("mixed instances differ in width"));
        }
        x.row_mut(i).assign(&m.features);
        y.row_mut(i).assign(&m.labels);
        w.row_mut(i).assign(&m.loss_weights()?);
    }
    model.batch_loss_and_grads(&MiniBatch::new(x, y, w)?)
}

pub fn composite_loss<T: Scalar>(batch: &[MixedInstance<T>], model: &ModelState<T>) -> Result<T> {
    Ok(composite_loss_and_grads(batch, model)?.0)
}

/// Metrics of `model` on the true labels of `valset`.
pub fn evaluate<T: Scalar>(model: &ModelState<T>, valset: &Dataset<T>, spec: &GroupSpec) -> Result<MetricsReport> {
    let scores = model.forward(valset.features.view())?;
    evaluate_scores(scores.view(), valset.true_labels.view(), spec)
}

/// Independent streams derived from one seed.
struct Streams {
    shuffle: ChaCha8Rng,
    minority: ChaCha8Rng,
    lambda: ChaCha8Rng,
    augment: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

pub fn train<T: Scalar>(cfg: &TrainConfig, dataset: &Dataset<T>, valset: &Dataset<T>) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let (n, d, k) = (dataset.len(), dataset.dim(), dataset.num_classes());
    if valset.dim() != d || valset.num_classes() != k {
        return Err(shape("training and validation sets differ in feature width or classes"));
    }
    if cfg.batch_size > n {
        return Err(config(format!("batch size {} exceeds {} instances", cfg.batch_size, n)));
    }
    let groups = cfg.groups.unwrap_or_else(|| GroupSpec::fractional(valset.len()));
    let balancemix = cfg.mode == Mode::Balancemix;

    let mut model = ModelState::init(d, cfg.hidden_dim, k, &mut stream(cfg.seed, 10))?;
    let mut opt = OptimizerState::new(&model, T::of(cfg.learning_rate), T::of(cfg.momentum), T::of(cfg.weight_decay))?;
    let mut rngs = Streams {
        shuffle: stream(cfg.seed, 11),
        minority: stream(cfg.seed, 12),
        lambda: stream(cfg.seed, 13),
        augment: stream(cfg.seed, 14),
    };
    let mut shuffler = EpochShuffler::new(n);
    let mut sampler = SamplerState::<T>::uniform(n, cfg.seed)?;
    let augmenter = FeatureAugmenter::new(cfg.augment.clone(), dataset.features.view())?;
    let management = ManagementConfig {
        epsilon: cfg.epsilon,
        augment: cfg.augment.clone(),
        base: cfg.label_base,
        threads: cfg.threads.max(1),
    };

    let observed_targets = dataset.observed_labels.mapv(|v| if v == 1 { T::one() } else { T::zero() });
    let all_clean = vec![Reliability::Clean; k];
    let unit_weights = Array2::from_elem((n, k), T::one());

    let mut ledger: Option<LabelLedger<T>> = None;
    let mut reports = Vec::with_capacity(cfg.epochs);
    let mut traces = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        opt.learning_rate = T::of(cfg.learning_rate_at(epoch));
        shuffler.start_epoch(&mut rngs.shuffle);
        let steps = shuffler.batches_per_epoch(cfg.batch_size);

        // tags and targets are frozen for the whole epoch
        let (targets, weights) = match &ledger {
            Some(l) => (l.targets(), l.loss_weights()),
            None => (observed_targets.clone(), unit_weights.clone()),
        };

        let mut loss_sum = 0.0;
        for _ in 0..steps {
            let random_idx = shuffler.next_batch(cfg.batch_size)?.to_vec();
            let (loss, grads) = if balancemix {
                let minority_idx = draw_minority_batch(&mut sampler, cfg.batch_size, &mut rngs.minority)?;
                let mut mixed = Vec::with_capacity(cfg.batch_size);
                for (&r, &m) in random_idx.iter().zip(&minority_idx) {
                    let lambda = draw_lambda::<T, _>(cfg.alpha, &mut rngs.lambda)?;
                    let tags_r: Vec<Reliability> = match &ledger {
                        Some(l) => l.reliability.row(r).to_vec(),
                        None => all_clean.clone(),
                    };
                    let tags_m: Vec<Reliability> = match &ledger {
                        Some(l) => l.reliability.row(m).to_vec(),
                        None => all_clean.clone(),
                    };
                    let random = InstanceRef {
                        features: dataset.features.row(r),
                        labels: targets.row(r),
                        reliability: &tags_r,
                        ambiguous_weight: weights.row(r),
                    };
                    let minority = InstanceRef {
                        features: dataset.features.row(m),
                        labels: targets.row(m),
                        reliability: &tags_m,
                        ambiguous_weight: weights.row(m),
                    };
                    mixed.push(mix(random, minority, lambda)?);
                }
                composite_loss_and_grads(&mixed, &model)?
            } else {
                let x = dataset.features.select(Axis(0), &random_idx);
                let y = observed_targets.select(Axis(0), &random_idx);
                model.batch_loss_and_grads(&MiniBatch::unweighted(x, y)?)?
            };
            if !loss.is_finite() {
                return Err(contract(format!("non-finite loss at epoch {epoch}")));
            }
            sgd_step(&mut model, &mut opt, &grads)?;
            loss_sum += loss.f64();
        }

        let mut trace = EpochTrace {
            epoch,
            table: None,
            sampler: None,
            gmm: None,
            class_tags: None,
        };
        let mut diagnostics = None;
        if balancemix {
            if epoch >= cfg.warmup_epochs && cfg.warmup_epochs < cfg.epochs {
                let current = ledger
                    .take()
                    .unwrap_or_else(|| LabelLedger::from_observed(&dataset.observed_labels));
                let (next, bank) = manage_labels(&model, dataset, &current, &management, &augmenter, &mut rngs.augment)?;
                diagnostics = Some(selection_metrics(
                    &next,
                    dataset.true_labels.view(),
                    dataset.observed_labels.view(),
                )?);
                trace.gmm = Some(bank);
                trace.class_tags = Some(next.class_counts());
                ledger = Some(next);
            }
            let confidences = model.forward(dataset.features.view())?;
            let labels = match (&ledger, cfg.sampler_label_source) {
                (Some(l), SamplerLabelSource::Refined) => &l.working,
                _ => &dataset.observed_labels,
            };
            let table = update_confidence_table(confidences.view(), labels.view())?;
            sampler.update(&table, labels.view(), epoch)?;
            trace.table = Some(table);
            trace.sampler = Some(sampler.clone());
        }

        reports.push(EpochReport {
            epoch,
            learning_rate: cfg.learning_rate_at(epoch),
            mean_loss: loss_sum / steps.max(1) as f64,
            tags: ledger.as_ref().map(|l| l.counts()),
            sampler_entropy: balancemix.then(|| sampler.entropy()),
            validation: evaluate(&model, valset, &groups)?,
            diagnostics,
        });
        traces.push(trace);
    }

    if !model.is_finite() {
        return Err(contract("training produced non-finite parameters"));
    }
    Ok(TrainOutcome {
        model,
        reports,
        traces,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::bce;
    use ndarray::array;

    fn tagged(features: Array2<f64>, labels: Array2<f64>, tags: Vec<Reliability>, w: Vec<f64>) -> MixedInstance<f64> {
        MixedInstance {
            features: features.row(0).to_owned(),
            labels: labels.row(0).to_owned(),
            reliability: tags,
            ambiguous_weight: w.into(),
            lambda: 1.0,
        }
    }

    #[test]
    fn all_clean_equals_plain_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = ModelState::<f64>::init(3, 4, 2, &mut rng).unwrap();
        let x = array![[0.2, -0.4, 1.0]];
        let y = array![[1.0, 0.3]];
        let inst = tagged(x.clone(), y.clone(), vec![Reliability::Clean; 2], vec![0.1, 0.2]);
        let plain = m.batch_loss_and_grads(&MiniBatch::unweighted(x, y).unwrap()).unwrap().0;
        assert_eq!(composite_loss(&[inst], &m).unwrap(), plain);
    }

    #[test]
    fn zero_weight_ambiguous_labels_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = ModelState::<f64>::init(3, 4, 2, &mut rng).unwrap();
        let inst = tagged(
            array![[0.2, -0.4, 1.0]],
            array![[1.0, 0.0]],
            vec![Reliability::Ambiguous; 2],
            vec![0.0, 0.0],
        );
        assert_eq!(composite_loss(&[inst], &m).unwrap(), 0.0);
    }

    #[test]
    fn mixed_tags_weight_each_label() {
        // biases chosen so the per-label BCEs are 0.7 and 1.0
        let mut m = ModelState::<f64>::zeros(1, 1, 2);
        let f0 = (-0.7f64).exp(); // -ln f0 = 0.7 with label 1
        let f1 = 1.0 - (-1.0f64).exp(); // -ln(1 - f1) = 1.0 with label 0
        m.b2[0] = (f0 / (1.0 - f0)).ln();
        m.b2[1] = (f1 / (1.0 - f1)).ln();
        let inst = tagged(
            array![[0.0]],
            array![[1.0, 0.0]],
            vec![Reliability::Clean, Reliability::Ambiguous],
            vec![1.0, 0.4],
        );
        assert!((bce(f0, 1.0) - 0.7).abs() < 1e-12);
        assert!((composite_loss(&[inst], &m).unwrap() - 1.1).abs() < 1e-12);
    }

    #[test]
    fn missing_tags_are_a_contract_error() {
        let m = ModelState::<f64>::zeros(1, 1, 2);
        let inst = tagged(array![[0.0]], array![[1.0, 0.0]], vec![Reliability::Clean], vec![1.0]);
        assert!(matches!(composite_loss(&[inst], &m), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            warmup_epochs: 50,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            epsilon: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cosine_schedule_ends_near_zero() {
        let cfg = TrainConfig {
            cosine_decay: true,
            epochs: 10,
            ..Default::default()
        };
        assert_eq!(cfg.learning_rate_at(1), cfg.learning_rate);
        assert!(cfg.learning_rate_at(10) < 0.05 * cfg.learning_rate);
    }
}
