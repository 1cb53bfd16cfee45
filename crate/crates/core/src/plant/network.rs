use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{cross_entropy_grad, cross_entropy_loss};
use super::set::LabeledSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fully connected layer computing `x·W + b`; `W` is `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

/// Feedforward classifier: ReLU hidden layers, softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    layers: Vec<Dense<T>>,
}

/// Per-layer gradients, laid out like [`Network::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Flat access in [`Network::parameter`] order.
    pub fn get(&self, index: usize) -> Option<T> {
        flat_get(&self.layers, index)
    }
}

impl<T: Scalar> Network<T> {
    /// Xavier-uniform weights in `±sqrt(6/(fan_in+fan_out))`, zero biases.
    pub fn xavier(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights =
                    Array2::from_shape_simple_fn((fan_in, fan_out), || T::lit(rng.random_range(-limit..=limit)));
                Dense {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Network { layers })
    }

    /// All weights and biases zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| Dense {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Network { layers })
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.ncols() {
                return Err(Error::InvalidNetwork(format!("layer {i}: bias length mismatch")));
            }
            if let Some(next) = layers.get(i + 1) {
                if next.weights.nrows() != l.weights.ncols() {
                    return Err(Error::InvalidNetwork(format!(
                        "layer {i} outputs {} but layer {} expects {}",
                        l.weights.ncols(),
                        i + 1,
                        next.weights.nrows()
                    )));
                }
            }
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].weights.nrows())
            .chain(self.layers.iter().map(|l| l.weights.ncols()))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flat parameter access: per layer, row-major weights then bias.
    pub fn parameter(&self, index: usize) -> Option<T> {
        flat_get(&self.layers, index)
    }

    pub fn set_parameter(&mut self, mut index: usize, value: T) -> Result<()> {
        for l in &mut self.layers {
            let nw = l.weights.len();
            if index < nw {
                let cols = l.weights.ncols();
                l.weights[[index / cols, index % cols]] = value;
                return Ok(());
            }
            index -= nw;
            if index < l.bias.len() {
                l.bias[index] = value;
                return Ok(());
            }
            index -= l.bias.len();
        }
        Err(Error::InvalidNetwork("parameter index out of range".into()))
    }

    /// Row-stochastic `T×C` class probabilities.
    pub fn forward(&self, features: ArrayView2<'_, T>) -> Result<Array2<T>> {
        Ok(self.forward_cached(features)?.probabilities)
    }

    fn forward_cached(&self, features: ArrayView2<'_, T>) -> Result<ForwardCache<T>> {
        if features.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "features have dimension {} but network expects {}",
                features.ncols(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(last);
        let mut a = features.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let z = a.dot(&l.weights) + &l.bias;
            activations.push(a);
            if i == last {
                return Ok(ForwardCache {
                    activations,
                    pre_activations,
                    probabilities: softmax_rows(z),
                });
            }
            a = z.mapv(relu);
            pre_activations.push(z);
        }
        unreachable!("network has at least one layer")
    }

    /// Loss and analytic gradient of the cross-entropy on `(features, labels)`.
    pub fn loss_and_gradient(
        &self,
        features: ArrayView2<'_, T>,
        labels: ArrayView2<'_, T>,
    ) -> Result<(T, Gradients<T>)> {
        let cache = self.forward_cached(features)?;
        let p = &cache.probabilities;
        let loss = cross_entropy_loss(p.view(), labels)?;
        let dp = cross_entropy_grad(p.view(), labels)?;

        // softmax Jacobian: dz_j = p_j (g_j - Σ_c g_c p_c)
        let inner = (&dp * p).sum_axis(Axis(1)).insert_axis(Axis(1));
        let mut dz = p * &(&dp - &inner);

        let mut grads: Vec<Dense<T>> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let a_prev = &cache.activations[i];
            grads.push(Dense {
                weights: a_prev.t().dot(&dz),
                bias: dz.sum_axis(Axis(0)),
            });
            if i > 0 {
                let da = dz.dot(&self.layers[i].weights.t());
                let z_prev = &cache.pre_activations[i - 1];
                dz = ndarray::Zip::from(&da)
                    .and(z_prev)
                    .map_collect(|&d, &z| if z > T::zero() { d } else { T::zero() });
            }
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }

    /// One SGD update `θ ← θ − lr·∇loss` on a mini-batch.
    pub fn sgd_step(&mut self, features: ArrayView2<'_, T>, labels: ArrayView2<'_, T>, lr: T) -> Result<T> {
        if !(lr >= T::zero()) || !lr.is_finite() {
            return Err(Error::InvalidMeasurement(format!(
                "learning rate must be nonnegative, got {lr}"
            )));
        }
        if features.nrows() == 0 {
            return Err(Error::Shape("empty mini-batch".into()));
        }
        let (loss, grads) = self.loss_and_gradient(features, labels)?;
        for (layer, g) in grads.layers.iter().enumerate() {
            if g.weights.iter().chain(g.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { layer });
            }
        }
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            l.weights.scaled_add(-lr, &g.weights);
            l.bias.scaled_add(-lr, &g.bias);
        }
        Ok(loss)
    }

    /// One pass over `set` in shuffled mini-batches of `mini_batch` rows.
    pub fn train_epoch<R: Rng>(&mut self, set: &LabeledSet<T>, lr: T, mini_batch: usize, rng: &mut R) -> Result<()> {
        if mini_batch == 0 {
            return Err(Error::InvalidNetwork("mini-batch size must be positive".into()));
        }
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(rng);
        let labels = set.one_hot();
        for chunk in order.chunks(mini_batch) {
            let x = set.features().select(Axis(0), chunk);
            let y = labels.select(Axis(0), chunk);
            self.sgd_step(x.view(), y.view(), lr)?;
        }
        Ok(())
    }
}

struct ForwardCache<T> {
    /// Input of each layer.
    activations: Vec<Array2<T>>,
    /// Hidden-layer pre-activations.
    pre_activations: Vec<Array2<T>>,
    probabilities: Array2<T>,
}

fn relu<T: Scalar>(x: T) -> T {
    x.max(T::zero())
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows<T: Scalar>(mut z: Array2<T>) -> Array2<T> {
    for mut row in z.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum: T = row.iter().copied().sum();
        row.mapv_inplace(|v| v / sum);
    }
    z
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidNetwork(format!(
            "need input and output sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::InvalidNetwork(format!("zero-width layer in {layer_sizes:?}")));
    }
    Ok(())
}

fn flat_get<T: Scalar>(layers: &[Dense<T>], mut index: usize) -> Option<T> {
    for l in layers {
        let nw = l.weights.len();
        if index < nw {
            let cols = l.weights.ncols();
            return Some(l.weights[[index / cols, index % cols]]);
        }
        index -= nw;
        if index < l.bias.len() {
            return Some(l.bias[index]);
        }
        index -= l.bias.len();
    }
    None
}
