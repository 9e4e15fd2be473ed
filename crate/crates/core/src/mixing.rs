//! Mixup between a random-sampler instance and a minority-sampler instance.
//!
//! The coefficient is folded to `[0.5, 1]`, so the random-sampler instance
//! always carries the larger weight and the mixed labels inherit its
//! reliability tags and ambiguous-label weights.

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{config, contract, shape, Result};
use crate::labelmgmt::Reliability;
use crate::scalar::Scalar;

/// Mixup concentration used unless configured otherwise.
pub const DEFAULT_ALPHA: f64 = 4.0;

/// `max(l, 1 - l)`.
#[inline]
pub fn fold_lambda<T: Scalar>(raw: T) -> T {
    raw.max(T::one() - raw)
}

/// Draws `l ~ Beta(alpha, alpha)` and folds it into `[0.5, 1]`.
pub fn draw_lambda<T: Scalar, R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<T> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(config(format!("mixup alpha must be positive, got {alpha}")));
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| config(e.to_string()))?;
    Ok(fold_lambda(T::of(beta.sample(rng))))
}

/// Borrowed view of one training instance with its ledger row.
#[derive(Clone, Copy, Debug)]
pub struct InstanceRef<'a, T> {
    pub features: ArrayView1<'a, T>,
    pub labels: ArrayView1<'a, T>,
    pub reliability: &'a [Reliability],
    pub ambiguous_weight: ArrayView1<'a, T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixedInstance<T> {
    pub features: Array1<T>,
    pub labels: Array1<T>,
    pub reliability: Vec<Reliability>,
    pub ambiguous_weight: Array1<T>,
    pub lambda: T,
}

impl<T: Scalar> MixedInstance<T> {
    /// Loss weight of each label: 1 for clean or re-labeled, the clean
    /// posterior for ambiguous labels.
    pub fn loss_weights(&self) -> Result<Array1<T>> {
        if self.reliability.len() != self.labels.len() || self.ambiguous_weight.len() != self.labels.len() {
            return Err(contract("every label of a mixed instance needs a reliability tag"));
        }
        Ok(self
            .reliability
            .iter()
            .zip(self.ambiguous_weight.iter())
            .map(|(tag, &w)| match tag {
                Reliability::Clean | Reliability::Relabeled => T::one(),
                Reliability::Ambiguous => w,
            })
            .collect())
    }
}

/// `x = l x_R + (1 - l) x_M`, `y = l y_R + (1 - l) y_M`; tags and weights
/// come from the random-sampler instance.
pub fn mix<T: Scalar>(random: InstanceRef<'_, T>, minority: InstanceRef<'_, T>, lambda: T) -> Result<MixedInstance<T>> {
    if !(lambda >= T::half() && lambda <= T::one()) {
        return Err(contract(format!("mixing coefficient {lambda} outside [0.5, 1]")));
    }
    if random.features.len() != minority.features.len() || random.labels.len() != minority.labels.len() {
        return Err(shape("mixed instances differ in feature or label width"));
    }
    if random.reliability.len() != random.labels.len() || random.ambiguous_weight.len() != random.labels.len() {
        return Err(contract("random-sampler instance lacks a full ledger row"));
    }
    let rest = T::one() - lambda;
    let blend = |a: ArrayView1<'_, T>, b: ArrayView1<'_, T>| -> Array1<T> {
        a.iter().zip(b.iter()).map(|(&a, &b)| lambda * a + rest * b).collect()
    };
    Ok(MixedInstance {
        features: blend(random.features, minority.features),
        labels: blend(random.labels, minority.labels),
        reliability: random.reliability.to_vec(),
        ambiguous_weight: random.ambiguous_weight.to_owned(),
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const C2: [Reliability; 2] = [Reliability::Clean, Reliability::Clean];

    fn inst<'a>(x: &'a Array1<f64>, y: &'a Array1<f64>, w: &'a Array1<f64>) -> InstanceRef<'a, f64> {
        InstanceRef {
            features: x.view(),
            labels: y.view(),
            reliability: &C2,
            ambiguous_weight: w.view(),
        }
    }

    #[test]
    fn folding() {
        assert_eq!(fold_lambda(0.2), 0.8);
        assert_eq!(fold_lambda(0.5), 0.5);
        assert_eq!(fold_lambda(0.9), 0.9);
    }

    #[test]
    fn lambda_rejects_bad_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(draw_lambda::<f64, _>(0.0, &mut rng).is_err());
        assert!(draw_lambda::<f64, _>(-1.0, &mut rng).is_err());
        for _ in 0..1000 {
            let l: f32 = draw_lambda(4.0, &mut rng).unwrap();
            assert!((0.5..=1.0).contains(&l));
        }
    }

    #[test]
    fn mix_of_identical_instances_is_identity() {
        let (x, y, w) = (array![0.3, -1.2], array![1.0, 0.0], array![1.0, 1.0]);
        for lambda in [0.5, 0.77, 1.0] {
            let m = mix(inst(&x, &y, &w), inst(&x, &y, &w), lambda).unwrap();
            assert!(m.features.iter().zip(x.iter()).all(|(a, b)| (a - b).abs() < 1e-15));
            assert!(m.labels.iter().zip(y.iter()).all(|(a, b)| (a - b).abs() < 1e-15));
        }
    }

    #[test]
    fn lambda_one_returns_random_instance() {
        let (xr, yr, w) = (array![0.3, -1.2], array![1.0, 0.0], array![1.0, 1.0]);
        let (xm, ym) = (array![5.0, 5.0], array![0.0, 1.0]);
        let m = mix(inst(&xr, &yr, &w), inst(&xm, &ym, &w), 1.0).unwrap();
        assert_eq!(m.features, xr);
        assert_eq!(m.labels, yr);
    }

    #[test]
    fn direct_interpolation() {
        let (xr, yr, w) = (array![1.0, 0.0], array![1.0, 0.0], array![1.0, 1.0]);
        let (xm, ym) = (array![0.0, 1.0], array![0.0, 1.0]);
        let m = mix(inst(&xr, &yr, &w), inst(&xm, &ym, &w), 0.7).unwrap();
        assert!((m.features[0] - 0.7).abs() < 1e-15 && (m.features[1] - 0.3).abs() < 1e-15);
        assert!((m.labels[0] - 0.7).abs() < 1e-15 && (m.labels[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn reliability_is_inherited_from_random_instance() {
        let tags = [Reliability::Ambiguous, Reliability::Relabeled];
        let (x, y, w) = (array![0.0, 1.0], array![1.0, 0.0], array![0.25, 1.0]);
        let random = InstanceRef {
            features: x.view(),
            labels: y.view(),
            reliability: &tags,
            ambiguous_weight: w.view(),
        };
        let other_w = array![0.9, 0.9];
        let m = mix(random, inst(&x, &y, &other_w), 0.5).unwrap();
        assert_eq!(m.reliability, tags.to_vec());
        assert_eq!(m.ambiguous_weight, w);
        assert_eq!(m.loss_weights().unwrap(), array![0.25, 1.0]);
    }

    #[test]
    fn out_of_range_lambda_is_a_contract_error() {
        let (x, y, w) = (array![0.0], array![1.0], array![1.0]);
        let one = [Reliability::Clean];
        let i = InstanceRef {
            features: x.view(),
            labels: y.view(),
            reliability: &one,
            ambiguous_weight: w.view(),
        };
        assert!(matches!(mix(i, i, 0.4), Err(crate::Error::Contract(_))));
        assert!(matches!(mix(i, i, 1.01), Err(crate::Error::Contract(_))));
    }
}
