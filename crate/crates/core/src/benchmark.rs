//! The standard synthetic benchmark: 2,000 training instances, 32 features,
//! 10 classes with a 50:1 head-to-tail ratio, and a clean validation split
//! drawn from the same class prototypes.

use crate::datagen::{decay_for_imbalance, inject_noise, Dataset, Generator, GeneratorConfig, NoiseSpec};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::trainer::{Mode, TrainConfig};

pub const TRAIN_SIZE: usize = 2000;
pub const VALIDATION_SIZE: usize = 2000;

pub fn generator_config(seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        n: TRAIN_SIZE,
        d: 32,
        k: 10,
        decay_ratio: decay_for_imbalance(50.0, 10),
        head_prevalence: 0.8,
        label_correlation: 0.3,
        separability: 1.0,
        seed,
    }
}

pub fn train_config(seed: u64, mode: Mode) -> TrainConfig {
    TrainConfig {
        seed,
        mode,
        ..TrainConfig::default()
    }
}

/// Noisy training split and clean validation split.
pub fn splits<T: Scalar>(seed: u64, noise: NoiseSpec) -> Result<(Dataset<T>, Dataset<T>)> {
    let generator = Generator::new(generator_config(seed))?;
    draw_splits(&generator, TRAIN_SIZE, VALIDATION_SIZE, noise, seed)
}

/// Draws a training split of `n_train` instances with `noise` applied and a
/// clean validation split of `n_val` instances from the same prototypes.
pub fn draw_splits<T: Scalar>(
    generator: &Generator,
    n_train: usize,
    n_val: usize,
    noise: NoiseSpec,
    seed: u64,
) -> Result<(Dataset<T>, Dataset<T>)> {
    let clean = generator.sample(n_train, seed)?;
    let train = inject_noise(&clean, noise, seed.wrapping_add(1))?;
    let val = generator.sample(n_val, seed.wrapping_add(1_000_003))?;
    Ok((train, val))
}
