//! One-hidden-layer multi-label classifier with sigmoid outputs, BCE loss,
//! analytic gradients and SGD with momentum.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, shape, Result};
use crate::scalar::Scalar;

/// Confidences are clamped to `[CLAMP, 1 - CLAMP]` so BCE stays finite.
pub const CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelState<T> {
    /// Hidden weights, `[hidden × input]`.
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    /// Output weights, `[classes × hidden]`.
    pub w2: Array2<T>,
    pub b2: Array1<T>,
    pub activation: Activation,
}

/// Gradients share the parameter layout.
pub type Gradients<T> = ModelState<T>;

impl<T: Scalar> ModelState<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        Self {
            w1: Array2::zeros((hidden_dim, input_dim)),
            b1: Array1::zeros(hidden_dim),
            w2: Array2::zeros((num_classes, hidden_dim)),
            b2: Array1::zeros(num_classes),
            activation: Activation::Relu,
        }
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization for weights and biases.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || num_classes == 0 {
            return Err(shape("model dimensions must be positive"));
        }
        let mut m = Self::zeros(input_dim, hidden_dim, num_classes);
        let a1 = 1.0 / (input_dim as f64).sqrt();
        let a2 = 1.0 / (hidden_dim as f64).sqrt();
        m.w1.iter_mut()
            .chain(m.b1.iter_mut())
            .for_each(|p| *p = T::of(rng.random_range(-a1..=a1)));
        m.w2.iter_mut()
            .chain(m.b2.iter_mut())
            .for_each(|p| *p = T::of(rng.random_range(-a2..=a2)));
        Ok(m)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_dim(), self.num_classes())
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.nrows()
    }

    pub fn num_parameters(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Parameters in a fixed order: w1, b1, w2, b2 (row-major).
    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.w1.dim() == other.w1.dim()
            && self.b1.dim() == other.b1.dim()
            && self.w2.dim() == other.w2.dim()
            && self.b2.dim() == other.b2.dim()
    }

    fn hidden(&self, features: ArrayView2<'_, T>) -> (Array2<T>, Array2<T>) {
        let pre = features.dot(&self.w1.t()) + &self.b1;
        let act = pre.mapv(|v| v.max(T::zero()));
        (pre, act)
    }

    pub fn logits(&self, features: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_input(features)?;
        let (_, h) = self.hidden(features);
        Ok(h.dot(&self.w2.t()) + &self.b2)
    }

    /// Per-class confidences in `[CLAMP, 1 - CLAMP]`, `[b × K]`.
    pub fn forward(&self, features: ArrayView2<'_, T>) -> Result<Array2<T>> {
        Ok(self.logits(features)?.mapv(confidence))
    }

    fn check_input(&self, features: ArrayView2<'_, T>) -> Result<()> {
        if features.ncols() != self.input_dim() {
            return Err(shape(format!(
                "features have {} columns, model expects {}",
                features.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Weighted mean-over-batch BCE, summed over classes, and its exact gradient.
    pub fn batch_loss_and_grads(&self, batch: &MiniBatch<T>) -> Result<(T, Gradients<T>)> {
        let x = batch.features.view();
        self.check_input(x)?;
        if batch.labels.ncols() != self.num_classes() {
            return Err(shape(format!(
                "labels have {} columns, model has {} classes",
                batch.labels.ncols(),
                self.num_classes()
            )));
        }
        let b = T::from_usize(batch.len()).unwrap();
        let (pre, h) = self.hidden(x);
        let f = (h.dot(&self.w2.t()) + &self.b2).mapv(confidence);

        let mut loss = T::zero();
        Zip::from(&f)
            .and(&batch.labels)
            .and(&batch.weights)
            .for_each(|&f, &y, &w| {
                if w != T::zero() {
                    loss = loss + w * bce(f, y);
                }
            });
        loss = loss / b;

        let mut dz = &f - &batch.labels;
        Zip::from(&mut dz)
            .and(&batch.weights)
            .for_each(|d, &w| *d = *d * w / b);

        let mut dh = dz.dot(&self.w2);
        Zip::from(&mut dh).and(&pre).for_each(|d, &p| {
            if p <= T::zero() {
                *d = T::zero();
            }
        });

        let grads = ModelState {
            w1: dh.t().dot(&x),
            b1: dh.sum_axis(Axis(0)),
            w2: dz.t().dot(&h),
            b2: dz.sum_axis(Axis(0)),
            activation: self.activation,
        };
        Ok((loss, grads))
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Sigmoid followed by the `[CLAMP, 1 - CLAMP]` clamp.
#[inline]
pub fn confidence<T: Scalar>(z: T) -> T {
    let eta = T::of(CLAMP);
    sigmoid(z).max(eta).min(T::one() - eta)
}

/// Binary cross-entropy, linear in the (possibly soft) label.
#[inline]
pub fn bce<T: Scalar>(f: T, y: T) -> T {
    -(y * f.ln() + (T::one() - y) * (T::one() - f).ln())
}

/// Features, (soft) labels and per-label loss weights for one update.
#[derive(Clone, Debug, PartialEq)]
pub struct MiniBatch<T> {
    pub features: Array2<T>,
    pub labels: Array2<T>,
    pub weights: Array2<T>,
}

impl<T: Scalar> MiniBatch<T> {
    pub fn new(features: Array2<T>, labels: Array2<T>, weights: Array2<T>) -> Result<Self> {
        if features.nrows() != labels.nrows() || labels.dim() != weights.dim() {
            return Err(shape(format!(
                "batch parts disagree: features {:?}, labels {:?}, weights {:?}",
                features.dim(),
                labels.dim(),
                weights.dim()
            )));
        }
        if features.nrows() == 0 {
            return Err(shape("empty mini-batch"));
        }
        let unit = |v: &T| *v >= T::zero() && *v <= T::one();
        if !labels.iter().all(unit) || !weights.iter().all(unit) {
            return Err(contract("labels and weights must lie in [0, 1]"));
        }
        Ok(Self {
            features,
            labels,
            weights,
        })
    }

    /// Every label weighted 1.
    pub fn unweighted(features: Array2<T>, labels: Array2<T>) -> Result<Self> {
        let weights = Array2::from_elem(labels.dim(), T::one());
        Self::new(features, labels, weights)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OptimizerState<T> {
    pub velocity: ModelState<T>,
    pub learning_rate: T,
    pub momentum: T,
    pub weight_decay: T,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(model: &ModelState<T>, learning_rate: T, momentum: T, weight_decay: T) -> Result<Self> {
        if !(learning_rate > T::zero()) {
            return Err(crate::error::config("learning rate must be positive"));
        }
        if !(momentum >= T::zero() && momentum < T::one()) {
            return Err(crate::error::config("momentum must lie in [0, 1)"));
        }
        if !(weight_decay >= T::zero()) {
            return Err(crate::error::config("weight decay must be nonnegative"));
        }
        Ok(Self {
            velocity: model.zeros_like(),
            learning_rate,
            momentum,
            weight_decay,
        })
    }
}

/// `v <- momentum * v + g + wd * theta; theta <- theta - lr * v`.
pub fn sgd_step<T: Scalar>(
    model: &mut ModelState<T>,
    opt: &mut OptimizerState<T>,
    grads: &Gradients<T>,
) -> Result<()> {
    if !model.same_shape(grads) || !model.same_shape(&opt.velocity) {
        return Err(shape("gradient, velocity and parameter shapes differ"));
    }
    let (lr, mu, wd) = (opt.learning_rate, opt.momentum, opt.weight_decay);
    for ((theta, v), g) in model
        .params_mut()
        .zip(opt.velocity.params_mut())
        .zip(grads.params())
    {
        *v = mu * *v + *g + wd * *theta;
        *theta = *theta - lr * *v;
    }
    Ok(())
}
