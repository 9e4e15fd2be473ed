use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use balancemix::benchmark::draw_splits;
use balancemix::datagen::{cls_imbalance, pn_imbalance, Dataset, Generator, GeneratorConfig, NoiseSpec};
use balancemix::io::{load_dataset, save_dataset};
use balancemix::labelmgmt::TagCounts;
use balancemix::metrics::{GroupSpec, MetricsReport};
use balancemix::trainer::{evaluate, train, EpochTrace};
use balancemix::Checkpoint;
use serde::Serialize;

use crate::config::{ExperimentConfig, Overrides};
use crate::error::CliError;

pub const TRAIN_FILE: &str = "train.bmd";
pub const VALIDATION_FILE: &str = "val.bmd";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const EPOCH_LOG_FILE: &str = "epochs.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRACE_FILE: &str = "trace.jsonl";

#[derive(Debug, Serialize)]
struct SplitSummary {
    n: usize,
    class_positive_counts: Vec<usize>,
    /// Head-to-tail ratio of true positive counts; `None` when a class has no positive.
    cls_imb: Option<f64>,
    observed_cls_imb: Option<f64>,
    pn_imb: Option<f64>,
    realized_noise_rate: f64,
}

impl SplitSummary {
    fn of(ds: &Dataset<f64>) -> Self {
        Self {
            n: ds.len(),
            class_positive_counts: ds.true_positive_counts(),
            cls_imb: cls_imbalance(&ds.true_positive_counts()).ok(),
            observed_cls_imb: cls_imbalance(&ds.class_positive_counts()).ok(),
            pn_imb: pn_imbalance(ds).ok(),
            realized_noise_rate: ds.realized_noise_rate(),
        }
    }
}

#[derive(Debug, Serialize)]
struct Manifest {
    seed: u64,
    generator: GeneratorConfig,
    noise: NoiseSpec,
    requested_cls_imb: f64,
    train: SplitSummary,
    validation: SplitSummary,
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(balancemix::Error::from)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn write_lines<S: Serialize>(path: &Path, items: &[S]) -> Result<(), CliError> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(balancemix::Error::from)?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact(path.display().to_string()))
    }
}

/// Writes the training split, the validation split and a manifest to `out`.
pub fn generate(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let generator = Generator::new(cfg.generator.clone())?;
    let (train_set, val_set) = draw_splits::<f64>(
        &generator,
        cfg.generator.n,
        cfg.validation_size(),
        cfg.noise,
        cfg.seed(),
    )?;
    create_dir(out)?;
    save_dataset(&train_set, Some(&cfg.generator), &out.join(TRAIN_FILE))?;
    save_dataset(&val_set, Some(&cfg.generator), &out.join(VALIDATION_FILE))?;
    let manifest = Manifest {
        seed: cfg.seed(),
        generator: cfg.generator.clone(),
        noise: cfg.noise,
        requested_cls_imb: cfg.generator.requested_imbalance(),
        train: SplitSummary::of(&train_set),
        validation: SplitSummary::of(&val_set),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)
}

/// The validation file next to `dataset` when none is given.
pub fn default_valset(dataset: &Path) -> PathBuf {
    dataset.with_file_name(VALIDATION_FILE)
}

fn load(path: &Path) -> Result<Dataset<f64>, CliError> {
    require(path)?;
    Ok(load_dataset(path)?.0)
}

/// Trains on `dataset`, validates on `valset`, and writes the run artifacts to `out`.
pub fn train_run(cfg: &ExperimentConfig, dataset: &Path, valset: &Path, out: &Path) -> Result<MetricsReport, CliError> {
    let train_set = load(dataset)?;
    let val_set = load(valset)?;
    let outcome = train(&cfg.train, &train_set, &val_set)?;
    create_dir(out)?;
    write_json(&out.join(CONFIG_FILE), cfg)?;
    write_lines(&out.join(EPOCH_LOG_FILE), &outcome.reports)?;
    write_lines(&out.join(TRACE_FILE), &outcome.traces)?;
    let last = outcome.reports.last().expect("at least one epoch");
    let mut metrics = last.validation.clone();
    metrics.diagnostics = last.diagnostics.clone();
    write_json(&out.join(METRICS_FILE), &metrics)?;
    Checkpoint::new(outcome.model, cfg.train.clone()).save(&out.join(CHECKPOINT_FILE))?;
    Ok(metrics)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum LabelSource {
    /// Ground-truth labels stored in the file.
    True,
    /// Observed (possibly noisy) labels.
    Observed,
}

/// Metrics of a checkpoint on a dataset file.
pub fn evaluate_checkpoint(checkpoint: &Path, dataset: &Path, labels: LabelSource) -> Result<MetricsReport, CliError> {
    require(checkpoint)?;
    let ck = Checkpoint::load(checkpoint)?;
    let mut ds = load(dataset)?;
    if labels == LabelSource::Observed {
        ds.true_labels = ds.observed_labels.clone();
    }
    let groups = ck.config.groups.unwrap_or_else(|| GroupSpec::fractional(ds.len()));
    Ok(evaluate(&ck.model, &ds, &groups)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Artifact {
    Sampler,
    Gmm,
    Ledger,
}

fn read_traces(run: &Path) -> Result<Vec<EpochTrace<f64>>, CliError> {
    let path = run.join(TRACE_FILE);
    require(&path)?;
    let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let mut traces = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| CliError::io(&path, e))?;
        if !line.trim().is_empty() {
            traces.push(serde_json::from_str(&line).map_err(balancemix::Error::from)?);
        }
    }
    Ok(traces)
}

fn csv_writer(path: &Path, header: &str) -> Result<BufWriter<File>, CliError> {
    let mut w = create(path)?;
    writeln!(w, "{header}").map_err(|e| CliError::io(path, e))?;
    Ok(w)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Dumps per-epoch state of a run as CSV files in `out`; returns the files written.
pub fn inspect(run: &Path, what: Artifact, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let traces = read_traces(run)?;
    create_dir(out)?;
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| CliError::io(&p, e)
    };
    let mut written = Vec::new();
    match what {
        Artifact::Sampler => {
            let path = out.join("sampler.csv");
            let mut w = csv_writer(&path, "epoch,instance,score,prob")?;
            let classes = out.join("sampler_classes.csv");
            let mut wc = csv_writer(&classes, "epoch,class,presence,absence,positive_support,negative_support")?;
            let mut found = false;
            for t in &traces {
                if let Some(s) = &t.sampler {
                    found = true;
                    for (i, (score, prob)) in s.scores.iter().zip(&s.probs).enumerate() {
                        writeln!(w, "{},{i},{score},{prob}", t.epoch).map_err(io(&path))?;
                    }
                }
                if let Some(table) = &t.table {
                    for k in 0..table.num_classes() {
                        writeln!(
                            wc,
                            "{},{k},{},{},{},{}",
                            t.epoch,
                            opt(table.presence[k]),
                            opt(table.absence[k]),
                            table.positive_support[k],
                            table.negative_support[k]
                        )
                        .map_err(io(&classes))?;
                    }
                }
            }
            if !found {
                return Err(CliError::MissingArtifact("run has no sampler states".into()));
            }
            w.flush().map_err(io(&path))?;
            wc.flush().map_err(io(&classes))?;
            written.extend([path, classes]);
        }
        Artifact::Gmm => {
            let path = out.join("gmm.csv");
            let mut w = csv_writer(
                &path,
                "epoch,class,polarity,clean_mean,noisy_mean,clean_variance,noisy_variance,clean_weight,noisy_weight,status,iterations,points",
            )?;
            for t in &traces {
                for (k, pair) in t.gmm.iter().flatten().enumerate() {
                    for (polarity, m) in [("positive", &pair.positive), ("negative", &pair.negative)] {
                        let status = serde_json::to_value(m.status).map_err(balancemix::Error::from)?;
                        writeln!(
                            w,
                            "{},{k},{polarity},{},{},{},{},{},{},{},{},{}",
                            t.epoch,
                            m.means[0],
                            m.means[1],
                            m.variances[0],
                            m.variances[1],
                            m.weights[0],
                            m.weights[1],
                            status.as_str().unwrap_or_default(),
                            m.iterations,
                            m.num_points
                        )
                        .map_err(io(&path))?;
                    }
                }
            }
            w.flush().map_err(io(&path))?;
            written.push(path);
        }
        Artifact::Ledger => {
            let path = out.join("ledger.csv");
            let mut w = csv_writer(&path, "epoch,class,clean,relabeled,ambiguous")?;
            for t in &traces {
                let tags: &[TagCounts] = t.class_tags.as_deref().unwrap_or_default();
                for (k, c) in tags.iter().enumerate() {
                    writeln!(w, "{},{k},{},{},{}", t.epoch, c.clean, c.relabeled, c.ambiguous).map_err(io(&path))?;
                }
            }
            w.flush().map_err(io(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::load(path)?.resolve(overrides)
}
