//! Dataset files and model checkpoints.
//!
//! A dataset file is one line of JSON header terminated by `\n`, followed by
//! the `N × d` features as row-major little-endian `f32`, then the true and
//! the observed `N × K` label matrices, each bit-packed row-major with the
//! least significant bit first and padded to a whole byte.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, GeneratorConfig, NoiseSpec};
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::scalar::Scalar;
use crate::trainer::TrainConfig;

pub const DATASET_FORMAT: &str = "balancemix-dataset";
pub const CHECKPOINT_FORMAT: &str = "balancemix-checkpoint";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub seed: u64,
    pub noise: NoiseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
}

fn pack_bits(labels: &Array2<u8>) -> Vec<u8> {
    let mut out = vec![0u8; labels.len().div_ceil(8)];
    for (i, &v) in labels.iter().enumerate() {
        if v == 1 {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn unpack_bits(bytes: &[u8], rows: usize, cols: usize) -> Array2<u8> {
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let i = r * cols + c;
        (bytes[i / 8] >> (i % 8)) & 1
    })
}

pub fn write_dataset<T: Scalar, W: Write>(
    ds: &Dataset<T>,
    generator: Option<&GeneratorConfig>,
    mut w: W,
) -> Result<()> {
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        version: 1,
        n: ds.len(),
        d: ds.dim(),
        k: ds.num_classes(),
        seed: ds.seed,
        noise: ds.noise,
        generator: generator.cloned(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for v in ds.features.iter() {
        w.write_all(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes())?;
    }
    w.write_all(&pack_bits(&ds.true_labels))?;
    w.write_all(&pack_bits(&ds.observed_labels))?;
    w.flush()?;
    Ok(())
}

pub fn read_dataset<T: Scalar, R: Read>(r: R) -> Result<(Dataset<T>, DatasetHeader)> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("missing header line".into()));
    }
    let header: DatasetHeader = serde_json::from_slice(&line[..line.len() - 1])?;
    if header.format != DATASET_FORMAT || header.version != 1 {
        return Err(Error::Format(format!("unsupported format {} v{}", header.format, header.version)));
    }
    let (n, d, k) = (header.n, header.d, header.k);
    let mut feat = vec![0u8; n * d * 4];
    r.read_exact(&mut feat).map_err(|_| Error::Format("truncated features".into()))?;
    let features = Array2::from_shape_vec(
        (n, d),
        feat.chunks_exact(4)
            .map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect(),
    )
    .map_err(|e| Error::Format(e.to_string()))?;
    let packed = (n * k).div_ceil(8);
    let mut truth = vec![0u8; packed];
    let mut observed = vec![0u8; packed];
    r.read_exact(&mut truth).map_err(|_| Error::Format("truncated true labels".into()))?;
    r.read_exact(&mut observed).map_err(|_| Error::Format("truncated observed labels".into()))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", rest.len())));
    }
    let mut ds = Dataset::new(features, unpack_bits(&truth, n, k), unpack_bits(&observed, n, k), header.seed)?;
    ds.noise = header.noise;
    Ok((ds, header))
}

pub fn save_dataset<T: Scalar>(ds: &Dataset<T>, generator: Option<&GeneratorConfig>, path: &Path) -> Result<()> {
    write_dataset(ds, generator, BufWriter::new(File::create(path)?))
}

pub fn load_dataset<T: Scalar>(path: &Path) -> Result<(Dataset<T>, DatasetHeader)> {
    read_dataset(File::open(path)?)
}

/// Serialized model with the configuration and seed that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Checkpoint<T> {
    pub format: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub model: ModelState<T>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(model: ModelState<T>, config: TrainConfig) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            seed: config.seed,
            config,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("not a checkpoint: {}", ck.format)));
        }
        if !ck.model.is_finite() {
            return Err(Error::Format("checkpoint has non-finite parameters".into()));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, inject_random_flip};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            n: 37,
            d: 5,
            k: 3,
            decay_ratio: 0.7,
            head_prevalence: 0.4,
            ..Default::default()
        }
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let clean: Dataset<f64> = generate(&small()).unwrap();
        let ds = inject_random_flip(&clean, 0.3, 9).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, Some(&small()), &mut buf).unwrap();
        let (back, header) = read_dataset::<f64, _>(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(header.generator, Some(small()));
        assert_eq!(header.noise, NoiseSpec::flip(0.3));
    }

    #[test]
    fn layout_is_header_then_payload() {
        let ds: Dataset<f32> = generate(&small()).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, None, &mut buf).unwrap();
        let nl = buf.iter().position(|&b| b == b'\n').unwrap();
        let packed = (37 * 3usize).div_ceil(8);
        assert_eq!(buf.len() - nl - 1, 37 * 5 * 4 + 2 * packed);
        let first = f32::from_le_bytes(buf[nl + 1..nl + 5].try_into().unwrap());
        assert_eq!(first, ds.features[[0, 0]]);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let ds: Dataset<f64> = generate(&small()).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, None, &mut buf).unwrap();
        buf.pop();
        assert!(matches!(read_dataset::<f64, _>(buf.as_slice()), Err(Error::Format(_))));
        assert!(read_dataset::<f64, _>(&b"{\"format\":\"x\"}"[..]).is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds: Dataset<f64> = generate(&small()).unwrap();
        let path = dir.path().join("d.bmd");
        save_dataset(&ds, None, &path).unwrap();
        assert_eq!(load_dataset::<f64>(&path).unwrap().0, ds);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let model = ModelState::<f64>::init(5, 4, 3, &mut rng).unwrap();
        let ck = Checkpoint::new(model, TrainConfig { seed: 17, ..TrainConfig::default() });
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::<f64>::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.seed, 17);
        assert!(matches!(load_dataset::<f64>(&path), Err(_)));
    }

    proptest! {
        #[test]
        fn bit_packing_round_trips(rows in 1usize..20, cols in 1usize..20, seed in any::<u64>()) {
            let m = Array2::from_shape_fn((rows, cols), |(r, c)| {
                ((seed.rotate_left((r * cols + c) as u32 % 64)) & 1) as u8
            });
            prop_assert_eq!(unpack_bits(&pack_bits(&m), rows, cols), m);
        }
    }
}
