//! Neural crack-length regressor: two ReLU hidden layers of ten units,
//! linear output, trained with Adam on a squared error weighted by a
//! crack-length penalty. The network sees only signal features, never
//! cycle counts.

use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;
use crate::scalar::{cvt, Real};

/// Hidden layer widths.
pub const HIDDEN_UNITS: [usize; 2] = [10, 10];
/// Feature vector width.
pub const INPUT_DIM: usize = 4;

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("training needs at least 2 samples (got {0})")]
    TooFewSamples(usize),
    #[error("features and targets differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("degenerate normalizer: feature {0} has (near-)zero variance")]
    DegenerateFeature(usize),
    #[error("layer {index}: expected {expected} inputs, found {found}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite parameter in layer {0}")]
    NonFiniteParameter(usize),
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
}

/// One dense layer, weights stored row-major as `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Real> DenseLayer<T> {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            biases: vec![T::zero(); out_dim],
        }
    }

    fn affine(&self, input: &[T]) -> Vec<T> {
        let mut z = self.biases.clone();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = T::zero();
            for (w, x) in row.iter().zip(input) {
                acc += *w * *x;
            }
            z[o] += acc;
        }
        z
    }
}

/// Full parameter set of the regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub layers: Vec<DenseLayer<T>>,
}

impl<T: Real> MlpParams<T> {
    /// He-initialized network for the given layer sizes.
    pub fn he_init(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (2.0 / fan_in as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| cvt::<T>(std * rng.sample::<f64, _>(StandardNormal)))
                    .collect();
                DenseLayer {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    weights,
                    biases: vec![T::zero(); fan_out],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].in_dim];
        sizes.extend(self.layers.iter().map(|l| l.out_dim));
        sizes
    }

    pub fn validate(&self) -> Result<(), MlpError> {
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.weights.len() != layer.in_dim * layer.out_dim
                || layer.biases.len() != layer.out_dim
            {
                return Err(MlpError::DimensionMismatch {
                    index: i,
                    expected: layer.in_dim * layer.out_dim,
                    found: layer.weights.len(),
                });
            }
            if i > 0 && layer.in_dim != self.layers[i - 1].out_dim {
                return Err(MlpError::DimensionMismatch {
                    index: i,
                    expected: self.layers[i - 1].out_dim,
                    found: layer.in_dim,
                });
            }
            if layer
                .weights
                .iter()
                .chain(&layer.biases)
                .any(|v| !v.is_finite())
            {
                return Err(MlpError::NonFiniteParameter(i));
            }
        }
        Ok(())
    }

    fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, &mut T)) {
        let mut idx = 0;
        for layer in &mut self.layers {
            for w in &mut layer.weights {
                f(idx, w);
                idx += 1;
            }
            for b in &mut layer.biases {
                f(idx, b);
                idx += 1;
            }
        }
    }

    fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }
}

/// Per-feature standardization fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer<T> {
    pub means: Vec<T>,
    pub stds: Vec<T>,
}

impl<T: Real> Normalizer<T> {
    pub fn fit(features: &[FeatureVector<T>]) -> Result<Self, MlpError> {
        if features.len() < 2 {
            return Err(MlpError::TooFewSamples(features.len()));
        }
        let n = cvt::<T>(features.len() as f64);
        let mut means = vec![T::zero(); INPUT_DIM];
        for fv in features {
            for (m, x) in means.iter_mut().zip(fv.as_array()) {
                *m += x;
            }
        }
        for m in means.iter_mut() {
            *m /= n;
        }
        let mut stds = vec![T::zero(); INPUT_DIM];
        for fv in features {
            for ((s, x), m) in stds.iter_mut().zip(fv.as_array()).zip(&means) {
                let d = x - *m;
                *s += d * d;
            }
        }
        for (i, s) in stds.iter_mut().enumerate() {
            *s = (*s / n).sqrt();
            let floor = cvt::<T>(1e-12) * (T::one() + means[i].abs());
            if *s < floor {
                return Err(MlpError::DegenerateFeature(i));
            }
        }
        Ok(Self { means, stds })
    }

    pub fn apply(&self, fv: &FeatureVector<T>) -> [T; 4] {
        let mut out = fv.as_array();
        for ((x, m), s) in out.iter_mut().zip(&self.means).zip(&self.stds) {
            *x = (*x - *m) / *s;
        }
        out
    }
}

/// Training setup. Defaults follow the fixed architecture: learning rate
/// 0.001, full-batch updates, penalty weight T = 2 + 10 y.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub learning_rate: T,
    /// `None` trains full batch.
    pub batch_size: Option<usize>,
    pub max_epochs: usize,
    pub seed: u64,
    pub penalty_offset: T,
    pub penalty_slope: T,
    pub adam_beta1: T,
    pub adam_beta2: T,
    pub adam_epsilon: T,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            learning_rate: cvt(0.001),
            batch_size: None,
            max_epochs: 3000,
            seed: 0,
            penalty_offset: cvt(2.0),
            penalty_slope: cvt(10.0),
            adam_beta1: cvt(0.9),
            adam_beta2: cvt(0.999),
            adam_epsilon: cvt(1e-8),
        }
    }
}

// Forward pass keeping pre-activations and activations for backprop.
// activations[0] is the input; z[l] the pre-activation of layer l.
struct Trace<T> {
    z: Vec<Vec<T>>,
    act: Vec<Vec<T>>,
}

fn forward_trace<T: Real>(params: &MlpParams<T>, x: &[T]) -> Trace<T> {
    let n_layers = params.layers.len();
    let mut z = Vec::with_capacity(n_layers);
    let mut act = Vec::with_capacity(n_layers + 1);
    act.push(x.to_vec());
    for (li, layer) in params.layers.iter().enumerate() {
        let zi = layer.affine(act.last().unwrap());
        let ai = if li + 1 == n_layers {
            zi.clone() // linear output
        } else {
            zi.iter().map(|&v| v.max(T::zero())).collect()
        };
        z.push(zi);
        act.push(ai);
    }
    Trace { z, act }
}

/// Network output for a normalized input.
pub fn forward<T: Real>(params: &MlpParams<T>, x: &[T]) -> T {
    let mut act = x.to_vec();
    let last = params.layers.len() - 1;
    for (li, layer) in params.layers.iter().enumerate() {
        let z = layer.affine(&act);
        act = if li == last {
            z
        } else {
            z.into_iter().map(|v| v.max(T::zero())).collect()
        };
    }
    act[0]
}

/// Mean squared error weighted per sample by `offset + slope * y`.
pub fn penalized_cost<T: Real>(
    params: &MlpParams<T>,
    xs: &[[T; 4]],
    ys: &[T],
    config: &TrainConfig<T>,
) -> T {
    let mut cost = T::zero();
    for (x, &y) in xs.iter().zip(ys) {
        let pred = forward(params, x);
        let delta = y - pred;
        let weight = config.penalty_offset + config.penalty_slope * y;
        cost += delta * delta * weight;
    }
    cost / cvt(xs.len() as f64)
}

/// Exact gradient of [`penalized_cost`] by backpropagation, same shape
/// as the parameters.
pub fn gradient<T: Real>(
    params: &MlpParams<T>,
    xs: &[[T; 4]],
    ys: &[T],
    config: &TrainConfig<T>,
) -> MlpParams<T> {
    let sizes = params.layer_sizes();
    let mut grad = MlpParams::zeros(&sizes);
    let n = cvt::<T>(xs.len() as f64);
    let two = cvt::<T>(2.0);
    for (x, &y) in xs.iter().zip(ys) {
        let trace = forward_trace(params, x);
        let pred = trace.act.last().unwrap()[0];
        let weight = config.penalty_offset + config.penalty_slope * y;
        // dL/dpred for this sample (mean over batch folded in).
        let mut delta = vec![-two * weight * (y - pred) / n];
        for li in (0..params.layers.len()).rev() {
            let layer = &params.layers[li];
            let input = &trace.act[li];
            let glayer = &mut grad.layers[li];
            for o in 0..layer.out_dim {
                glayer.biases[o] += delta[o];
                let row = &mut glayer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, xi) in row.iter_mut().zip(input) {
                    *gw += delta[o] * *xi;
                }
            }
            if li == 0 {
                break;
            }
            // Propagate through the ReLU of the previous layer.
            let mut next = vec![T::zero(); layer.in_dim];
            for (i, nv) in next.iter_mut().enumerate() {
                let mut acc = T::zero();
                for (o, d) in delta.iter().enumerate() {
                    acc += layer.weights[o * layer.in_dim + i] * *d;
                }
                let gate = if trace.z[li - 1][i] > T::zero() {
                    T::one()
                } else {
                    T::zero()
                };
                *nv = acc * gate;
            }
            delta = next;
        }
    }
    grad
}

/// Train with Adam from He-initialized weights; deterministic for a
/// fixed seed. Returns the best-cost parameters, the fitted normalizer,
/// and the per-epoch full-batch cost history.
pub fn train<T: Real>(
    features: &[FeatureVector<T>],
    targets: &[T],
    config: &TrainConfig<T>,
) -> Result<(MlpParams<T>, Normalizer<T>, Vec<T>), MlpError> {
    if features.len() != targets.len() {
        return Err(MlpError::LengthMismatch(features.len(), targets.len()));
    }
    if features.len() < 2 {
        return Err(MlpError::TooFewSamples(features.len()));
    }
    let normalizer = Normalizer::fit(features)?;
    let xs: Vec<[T; 4]> = features.iter().map(|f| normalizer.apply(f)).collect();

    let sizes = [INPUT_DIM, HIDDEN_UNITS[0], HIDDEN_UNITS[1], 1];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = MlpParams::he_init(&sizes, &mut rng);

    let n_params = params.param_count();
    let mut m1 = vec![T::zero(); n_params];
    let mut m2 = vec![T::zero(); n_params];
    let mut step = 0usize;

    let mut history = Vec::with_capacity(config.max_epochs);
    let mut best_cost = penalized_cost(&params, &xs, targets, config);
    let mut best_params = params.clone();

    let batch = config.batch_size.unwrap_or(xs.len()).max(1).min(xs.len());
    let mut order: Vec<usize> = (0..xs.len()).collect();

    for _epoch in 0..config.max_epochs {
        if batch < xs.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let bx: Vec<[T; 4]> = chunk.iter().map(|&i| xs[i]).collect();
            let by: Vec<T> = chunk.iter().map(|&i| targets[i]).collect();
            let grad = gradient(&params, &bx, &by, config);

            step += 1;
            let t = cvt::<T>(step as f64);
            let b1 = config.adam_beta1;
            let b2 = config.adam_beta2;
            let corr1 = T::one() - b1.powf(t);
            let corr2 = T::one() - b2.powf(t);
            let lr = config.learning_rate;
            let eps = config.adam_epsilon;

            let mut gflat = Vec::with_capacity(n_params);
            for layer in &grad.layers {
                gflat.extend_from_slice(&layer.weights);
                gflat.extend_from_slice(&layer.biases);
            }
            params.for_each_param_mut(|idx, p| {
                let g = gflat[idx];
                m1[idx] = b1 * m1[idx] + (T::one() - b1) * g;
                m2[idx] = b2 * m2[idx] + (T::one() - b2) * g * g;
                let mhat = m1[idx] / corr1;
                let vhat = m2[idx] / corr2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            });
        }
        let cost = penalized_cost(&params, &xs, targets, config);
        history.push(cost);
        if cost < best_cost {
            best_cost = cost;
            best_params = params.clone();
        }
    }
    Ok((best_params, normalizer, history))
}

/// Crack-length estimate for one feature vector. Estimates are returned
/// raw; the pipeline clamps negatives to zero.
pub fn predict<T: Real>(
    params: &MlpParams<T>,
    normalizer: &Normalizer<T>,
    features: &FeatureVector<T>,
) -> T {
    forward(params, &normalizer.apply(features))
}

pub fn predict_batch<T: Real>(
    params: &MlpParams<T>,
    normalizer: &Normalizer<T>,
    features: &[FeatureVector<T>],
) -> Vec<T> {
    features.iter().map(|f| predict(params, normalizer, f)).collect()
}

// Serialized model layout (always written as f64).
#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TrainConfigFile {
    learning_rate: f64,
    batch_size: Option<usize>,
    max_epochs: usize,
    seed: u64,
    penalty_offset: f64,
    penalty_slope: f64,
    adam_beta1: f64,
    adam_beta2: f64,
    adam_epsilon: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    layer_sizes: Vec<usize>,
    layers: Vec<LayerFile>,
    normalizer_means: Vec<f64>,
    normalizer_stds: Vec<f64>,
    config: TrainConfigFile,
}

/// Write the model as versioned JSON (weights row-major, f64).
pub fn save_model<T: Real>(
    path: &Path,
    params: &MlpParams<T>,
    normalizer: &Normalizer<T>,
    config: &TrainConfig<T>,
) -> Result<(), MlpError> {
    params.validate()?;
    let to64 = |v: &[T]| -> Vec<f64> { v.iter().map(|x| x.to_f64().unwrap()).collect() };
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        layer_sizes: params.layer_sizes(),
        layers: params
            .layers
            .iter()
            .map(|l| LayerFile {
                weights: to64(&l.weights),
                biases: to64(&l.biases),
            })
            .collect(),
        normalizer_means: to64(&normalizer.means),
        normalizer_stds: to64(&normalizer.stds),
        config: TrainConfigFile {
            learning_rate: config.learning_rate.to_f64().unwrap(),
            batch_size: config.batch_size,
            max_epochs: config.max_epochs,
            seed: config.seed,
            penalty_offset: config.penalty_offset.to_f64().unwrap(),
            penalty_slope: config.penalty_slope.to_f64().unwrap(),
            adam_beta1: config.adam_beta1.to_f64().unwrap(),
            adam_beta2: config.adam_beta2.to_f64().unwrap(),
            adam_epsilon: config.adam_epsilon.to_f64().unwrap(),
        },
    };
    let writer = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(writer, &file)?;
    Ok(())
}

/// Load a model saved by [`save_model`].
pub fn load_model<T: Real>(
    path: &Path,
) -> Result<(MlpParams<T>, Normalizer<T>, TrainConfig<T>), MlpError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let file: ModelFile = serde_json::from_reader(reader)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(MlpError::UnsupportedVersion(file.format_version));
    }
    let from64 = |v: &[f64]| -> Vec<T> { v.iter().map(|&x| cvt(x)).collect() };
    let layers = file
        .layer_sizes
        .windows(2)
        .zip(&file.layers)
        .map(|(w, l)| DenseLayer {
            in_dim: w[0],
            out_dim: w[1],
            weights: from64(&l.weights),
            biases: from64(&l.biases),
        })
        .collect();
    let params = MlpParams { layers };
    params.validate()?;
    let normalizer = Normalizer {
        means: from64(&file.normalizer_means),
        stds: from64(&file.normalizer_stds),
    };
    let config = TrainConfig {
        learning_rate: cvt(file.config.learning_rate),
        batch_size: file.config.batch_size,
        max_epochs: file.config.max_epochs,
        seed: file.config.seed,
        penalty_offset: cvt(file.config.penalty_offset),
        penalty_slope: cvt(file.config.penalty_slope),
        adam_beta1: cvt(file.config.adam_beta1),
        adam_beta2: cvt(file.config.adam_beta2),
        adam_epsilon: cvt(file.config.adam_epsilon),
    };
    Ok((params, normalizer, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(a: f64, b: f64, c: f64, d: f64) -> FeatureVector<f64> {
        FeatureVector::from_array([a, b, c, d])
    }

    fn random_inputs(rng: &mut ChaCha8Rng, n: usize) -> (Vec<[f64; 4]>, Vec<f64>) {
        let xs = (0..n)
            .map(|_| {
                [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ]
            })
            .collect();
        let ys = (0..n).map(|_| rng.gen_range(0.2..5.0)).collect();
        (xs, ys)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let params = MlpParams::<f64>::zeros(&[4, 10, 10, 1]);
        assert_eq!(forward(&params, &[1.0, -2.0, 3.0, 0.5]), 0.0);
    }

    #[test]
    fn single_relay_unit_passes_first_input() {
        // One active path: x1 -> h1[0] -> h2[0] -> y with unit weights.
        let mut params = MlpParams::<f64>::zeros(&[4, 10, 10, 1]);
        params.layers[0].weights[0] = 1.0; // h1[0] reads x[0]
        params.layers[1].weights[0] = 1.0; // h2[0] reads h1[0]
        params.layers[2].weights[0] = 1.0; // y reads h2[0]
        assert_eq!(forward(&params, &[0.7, -3.0, 2.0, 1.0]), 0.7);
        // ReLU gates the negative side and scales positively.
        assert_eq!(forward(&params, &[-0.7, 0.0, 0.0, 0.0]), 0.0);
        assert_eq!(forward(&params, &[1.4, 0.0, 0.0, 0.0]), 1.4);
    }

    #[test]
    fn forward_matches_independent_reimplementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let params = MlpParams::<f64>::he_init(&[4, 10, 10, 1], &mut rng);
        let (xs, _) = random_inputs(&mut rng, 6);
        for x in &xs {
            // Straightforward re-implementation with explicit loops.
            let step = |w: &[f64], b: &[f64], input: &[f64], relu: bool| -> Vec<f64> {
                let out_dim = b.len();
                let in_dim = input.len();
                (0..out_dim)
                    .map(|o| {
                        let mut s = b[o];
                        for i in 0..in_dim {
                            s += w[o * in_dim + i] * input[i];
                        }
                        if relu && s < 0.0 {
                            0.0
                        } else {
                            s
                        }
                    })
                    .collect()
            };
            let l = &params.layers;
            let h1 = step(&l[0].weights, &l[0].biases, x, true);
            let h2 = step(&l[1].weights, &l[1].biases, &h1, true);
            let y = step(&l[2].weights, &l[2].biases, &h2, false)[0];
            assert!((forward(&params, x) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn penalized_cost_arithmetic() {
        let cfg = TrainConfig::<f64>::default();
        let params = MlpParams::<f64>::zeros(&[4, 10, 10, 1]);
        // Single sample, y = 1, prediction 0: 1^2 * (2 + 10) = 12.
        let cost = penalized_cost(&params, &[[0.0; 4]], &[1.0], &cfg);
        assert_eq!(cost, 12.0);
    }

    #[test]
    fn cost_is_zero_iff_perfect_and_quadratic_in_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = MlpParams::<f64>::he_init(&[4, 10, 10, 1], &mut rng);
        let cfg = TrainConfig::<f64>::default();
        let (xs, _) = random_inputs(&mut rng, 5);
        // Perfect targets: zero cost.
        let perfect: Vec<f64> = xs.iter().map(|x| forward(&params, x)).collect();
        let c0 = penalized_cost(&params, &xs, &perfect, &cfg);
        assert!(c0.abs() < 1e-24);
        // Note y enters the weight too, so scale residuals at fixed y by
        // comparing against a prediction offset instead.
        let off1: Vec<f64> = perfect.iter().map(|y| y + 0.1).collect();
        let off2: Vec<f64> = perfect.iter().map(|y| y + 0.2).collect();
        let c1 = penalized_cost(&params, &xs, &off1, &cfg);
        let c2 = penalized_cost(&params, &xs, &off2, &cfg);
        // Doubling every residual at (nearly) fixed weight quadruples the
        // quadratic part; the weight shift adds a small cubic correction.
        assert!((c2 / c1 - 4.0).abs() < 0.3, "ratio {}", c2 / c1);
    }

    #[test]
    fn zero_residual_batch_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params = MlpParams::<f64>::he_init(&[4, 10, 10, 1], &mut rng);
        let cfg = TrainConfig::<f64>::default();
        let (xs, _) = random_inputs(&mut rng, 4);
        let ys: Vec<f64> = xs.iter().map(|x| forward(&params, x)).collect();
        let grad = gradient(&params, &xs, &ys, &cfg);
        for layer in &grad.layers {
            for v in layer.weights.iter().chain(&layer.biases) {
                assert!(v.abs() < 1e-18);
            }
        }
    }

    #[test]
    fn duplicated_batch_keeps_the_mean_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params = MlpParams::<f64>::he_init(&[4, 10, 10, 1], &mut rng);
        let cfg = TrainConfig::<f64>::default();
        let (xs, ys) = random_inputs(&mut rng, 4);
        let mut xs2 = xs.clone();
        xs2.extend_from_slice(&xs);
        let mut ys2 = ys.clone();
        ys2.extend_from_slice(&ys);
        let g1 = gradient(&params, &xs, &ys, &cfg);
        let g2 = gradient(&params, &xs2, &ys2, &cfg);
        for (l1, l2) in g1.layers.iter().zip(&g2.layers) {
            for (a, b) in l1.weights.iter().zip(&l2.weights) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    // Sample a configuration whose pre-activations stay away from the
    // ReLU kinks so finite differences are valid.
    fn away_from_kinks(seed: u64) -> (MlpParams<f64>, Vec<[f64; 4]>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let params = MlpParams::<f64>::he_init(&[4, 10, 10, 1], &mut rng);
            let (xs, ys) = random_inputs(&mut rng, 8);
            let clear = xs.iter().all(|x| {
                let trace = forward_trace(&params, x);
                trace.z[..trace.z.len() - 1]
                    .iter()
                    .all(|zs| zs.iter().all(|z| z.abs() > 1e-3))
            });
            if clear {
                return (params, xs, ys);
            }
        }
    }

    #[test]
    fn backprop_matches_central_finite_differences() {
        let cfg = TrainConfig::<f64>::default();
        let h = 1e-6;
        for seed in [101u64, 202, 303] {
            let (params, xs, ys) = away_from_kinks(seed);
            let analytic = gradient(&params, &xs, &ys, &cfg);
            let mut gflat = Vec::new();
            for layer in &analytic.layers {
                gflat.extend_from_slice(&layer.weights);
                gflat.extend_from_slice(&layer.biases);
            }
            let n_params = params.param_count();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
            for _ in 0..20 {
                let idx = rng.gen_range(0..n_params);
                let mut plus = params.clone();
                plus.for_each_param_mut(|i, p| {
                    if i == idx {
                        *p += h;
                    }
                });
                let mut minus = params.clone();
                minus.for_each_param_mut(|i, p| {
                    if i == idx {
                        *p -= h;
                    }
                });
                let fd = (penalized_cost(&plus, &xs, &ys, &cfg)
                    - penalized_cost(&minus, &xs, &ys, &cfg))
                    / (2.0 * h);
                let g = gflat[idx];
                let denom = g.abs().max(fd.abs());
                if denom < 1e-10 {
                    continue; // dead coordinate both ways
                }
                let rel = (g - fd).abs() / denom;
                assert!(rel < 1e-4, "seed {seed} idx {idx}: {g} vs {fd} (rel {rel})");
            }
        }
    }

    #[test]
    fn overfits_ten_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let features: Vec<FeatureVector<f64>> = (0..10)
            .map(|_| {
                fv(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.1..1.0),
                    rng.gen_range(2.0..4.0),
                )
            })
            .collect();
        let targets: Vec<f64> = (0..10).map(|_| rng.gen_range(0.5..6.0)).collect();
        let cfg = TrainConfig {
            max_epochs: 5000,
            seed: 3,
            ..TrainConfig::default()
        };
        let (_, _, history) = train(&features, &targets, &cfg).unwrap();
        let initial = history[0];
        let last = *history.last().unwrap();
        let best = history.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(
            best < 1e-3 * initial,
            "initial {initial}, best {best}, last {last}"
        );
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let features: Vec<FeatureVector<f64>> = (0..12)
            .map(|_| {
                fv(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.1..1.0),
                    rng.gen_range(2.0..4.0),
                )
            })
            .collect();
        let targets: Vec<f64> = (0..12).map(|_| rng.gen_range(0.5..6.0)).collect();
        let cfg = TrainConfig {
            max_epochs: 200,
            seed: 42,
            batch_size: Some(4),
            ..TrainConfig::default()
        };
        let (p1, _, h1) = train(&features, &targets, &cfg).unwrap();
        let (p2, _, h2) = train(&features, &targets, &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn small_learning_rate_gives_non_increasing_loss() {
        // Empirical envelope on a fixed tiny problem, full batch.
        let features: Vec<FeatureVector<f64>> = vec![
            fv(0.1, -0.2, 0.5, 3.0),
            fv(-0.4, 0.3, 0.7, 2.5),
            fv(0.9, 0.1, 0.4, 3.5),
            fv(-0.2, -0.6, 0.8, 2.8),
        ];
        let targets = vec![1.0, 2.0, 0.5, 1.5];
        for seed in [1u64, 2, 3] {
            let cfg = TrainConfig {
                learning_rate: 1e-4,
                max_epochs: 400,
                seed,
                ..TrainConfig::default()
            };
            let (_, _, history) = train(&features, &targets, &cfg).unwrap();
            for w in history.windows(2) {
                assert!(
                    w[1] <= w[0] * (1.0 + 1e-9),
                    "seed {seed}: loss rose {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn degenerate_feature_is_rejected() {
        let features = vec![fv(1.0, 0.5, 0.5, 3.0), fv(1.0, 0.7, 0.6, 2.0)];
        let err = Normalizer::fit(&features).unwrap_err();
        assert!(matches!(err, MlpError::DegenerateFeature(0)));
    }

    #[test]
    fn batch_predict_equals_per_sample_predict() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let features: Vec<FeatureVector<f64>> = (0..8)
            .map(|_| {
                fv(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.1..1.0),
                    rng.gen_range(2.0..4.0),
                )
            })
            .collect();
        let targets: Vec<f64> = (0..8).map(|_| rng.gen_range(0.5..6.0)).collect();
        let cfg = TrainConfig {
            max_epochs: 50,
            ..TrainConfig::default()
        };
        let (params, norm, _) = train(&features, &targets, &cfg).unwrap();
        let batch = predict_batch(&params, &norm, &features);
        for (b, f) in batch.iter().zip(&features) {
            assert_eq!(*b, predict(&params, &norm, f));
        }
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = MlpParams::<f64>::he_init(&[4, 10, 10, 1], &mut rng);
        let normalizer = Normalizer {
            means: vec![0.1, 0.2, 0.3, 0.4],
            stds: vec![1.0, 2.0, 3.0, 4.0],
        };
        let cfg = TrainConfig::<f64>::default();
        save_model(&path, &params, &normalizer, &cfg).unwrap();
        let (p2, n2, c2) = load_model::<f64>(&path).unwrap();
        assert_eq!(params, p2);
        assert_eq!(normalizer, n2);
        assert_eq!(cfg, c2);
    }

    #[test]
    fn trains_in_f32_too() {
        let features: Vec<FeatureVector<f32>> = vec![
            FeatureVector::from_array([0.1, -0.2, 0.5, 3.0]),
            FeatureVector::from_array([-0.4, 0.3, 0.7, 2.5]),
            FeatureVector::from_array([0.9, 0.1, 0.4, 3.5]),
        ];
        let targets = vec![1.0f32, 2.0, 0.5];
        let cfg = TrainConfig::<f32> {
            max_epochs: 50,
            ..TrainConfig::default()
        };
        let (params, norm, history) = train(&features, &targets, &cfg).unwrap();
        assert_eq!(history.len(), 50);
        let p = predict(&params, &norm, &features[0]);
        assert!(p.is_finite());
    }
}
