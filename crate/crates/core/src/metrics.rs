//! Average precision, shot-grouped mAP and label-management diagnostics.

use ndarray::{ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{config, shape, Result};
use crate::labelmgmt::{LabelLedger, Reliability};
use crate::scalar::Scalar;

/// AP of one ranking; `None` when there is no positive.
///
/// Ranks by descending score; ties keep ascending index order.
pub fn average_precision<T: Scalar>(scores: &[T], truths: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), truths.len(), "scores and truths differ in length");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps index order on ties
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if truths[i] == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Column-wise AP of `[N × K]` scores against `[N × K]` truths.
pub fn per_class_ap<T: Scalar>(scores: ArrayView2<'_, T>, truths: ArrayView2<'_, u8>) -> Result<Vec<Option<f64>>> {
    if scores.dim() != truths.dim() {
        return Err(shape("scores and truths differ in shape"));
    }
    Ok(scores
        .axis_iter(Axis(1))
        .zip(truths.axis_iter(Axis(1)))
        .map(|(s, t)| average_precision(&s.to_vec(), &t.to_vec()))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotGroup {
    Many,
    Medium,
    Few,
}

/// Many-shot: more than `many` positives; few-shot: fewer than `medium`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub many: f64,
    pub medium: f64,
}

impl GroupSpec {
    pub fn new(many: f64, medium: f64) -> Result<Self> {
        if !(many > medium && medium > 0.0) {
            return Err(config("group thresholds need many > medium > 0"));
        }
        Ok(Self { many, medium })
    }

    /// 25% and 5% of `n` instances.
    pub fn fractional(n: usize) -> Self {
        Self {
            many: 0.25 * n as f64,
            medium: 0.05 * n as f64,
        }
    }

    pub fn group(&self, count: usize) -> ShotGroup {
        let c = count as f64;
        if c > self.many {
            ShotGroup::Many
        } else if c < self.medium {
            ShotGroup::Few
        } else {
            ShotGroup::Medium
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupedMap {
    pub all: Option<f64>,
    pub many: Option<f64>,
    pub medium: Option<f64>,
    pub few: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Arithmetic mean of the defined APs overall and within each group.
pub fn grouped_map(per_class_ap: &[Option<f64>], counts: &[usize], spec: &GroupSpec) -> GroupedMap {
    assert_eq!(per_class_ap.len(), counts.len(), "one count per class");
    let within = |g: Option<ShotGroup>| {
        mean(
            per_class_ap
                .iter()
                .zip(counts)
                .filter(|(_, &c)| g.is_none_or(|g| spec.group(c) == g))
                .filter_map(|(ap, _)| *ap),
        )
    };
    GroupedMap {
        all: within(None),
        many: within(Some(ShotGroup::Many)),
        medium: within(Some(ShotGroup::Medium)),
        few: within(Some(ShotGroup::Few)),
    }
}

/// Clean-label selection and re-labeling quality against ground truth.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ManagementDiagnostics {
    pub label_precision: Option<f64>,
    pub label_recall: Option<f64>,
    pub relabel_proportion: f64,
    pub relabel_accuracy: Option<f64>,
    pub clean_selected: usize,
    pub clean_correct: usize,
    pub relabeled: usize,
    pub relabeled_correct: usize,
    pub ambiguous: usize,
    /// Labels whose observed value equals the truth.
    pub truly_clean: usize,
    pub total: usize,
}

pub fn selection_metrics<T: Scalar>(
    ledger: &LabelLedger<T>,
    true_labels: ArrayView2<'_, u8>,
    observed_labels: ArrayView2<'_, u8>,
) -> Result<ManagementDiagnostics> {
    if ledger.working.dim() != true_labels.dim() || true_labels.dim() != observed_labels.dim() {
        return Err(shape("ledger and label matrices differ in shape"));
    }
    let mut d = ManagementDiagnostics {
        total: true_labels.len(),
        ..Default::default()
    };
    Zip::from(&ledger.reliability)
        .and(&ledger.working)
        .and(true_labels)
        .and(observed_labels)
        .for_each(|&tag, &w, &t, &o| {
            if o == t {
                d.truly_clean += 1;
            }
            match tag {
                Reliability::Clean => {
                    d.clean_selected += 1;
                    d.clean_correct += usize::from(w == t);
                }
                Reliability::Relabeled => {
                    d.relabeled += 1;
                    d.relabeled_correct += usize::from(w == t);
                }
                Reliability::Ambiguous => d.ambiguous += 1,
            }
        });
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    d.label_precision = ratio(d.clean_correct, d.clean_selected);
    d.label_recall = ratio(d.clean_correct, d.truly_clean);
    d.relabel_proportion = d.relabeled as f64 / d.total.max(1) as f64;
    d.relabel_accuracy = ratio(d.relabeled_correct, d.relabeled);
    Ok(d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: usize,
    pub ap: Option<f64>,
    pub positives: usize,
    pub group: ShotGroup,
}

/// The metrics JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub map_all: Option<f64>,
    pub map_many: Option<f64>,
    pub map_medium: Option<f64>,
    pub map_few: Option<f64>,
    pub per_class: Vec<ClassReport>,
    pub diagnostics: Option<ManagementDiagnostics>,
}

/// Per-class AP against `truths`, grouped by each class's positive count in `truths`.
pub fn evaluate_scores<T: Scalar>(
    scores: ArrayView2<'_, T>,
    truths: ArrayView2<'_, u8>,
    spec: &GroupSpec,
) -> Result<MetricsReport> {
    let aps = per_class_ap(scores, truths)?;
    let counts: Vec<usize> = truths
        .axis_iter(Axis(1))
        .map(|c| c.iter().filter(|&&v| v == 1).count())
        .collect();
    let g = grouped_map(&aps, &counts, spec);
    Ok(MetricsReport {
        map_all: g.all,
        map_many: g.many,
        map_medium: g.medium,
        map_few: g.few,
        per_class: aps
            .iter()
            .zip(&counts)
            .enumerate()
            .map(|(class, (&ap, &positives))| ClassReport {
                class,
                ap,
                positives,
                group: spec.group(positives),
            })
            .collect(),
        diagnostics: None,
    })
}
