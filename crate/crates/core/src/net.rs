//! Fully connected encoder/decoder networks trained by backpropagation with
//! Adadelta on mean squared reconstruction error.
//!
//! The encoder is described by its layer widths (input first, bottleneck
//! last); the decoder mirrors them. Hidden layers use the rectifier, the
//! final decoder layer a logistic unit so reconstructions stay in (0, 1).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output; the rectifier
    /// uses subgradient 0 at exactly 0.
    fn derivative(self, output: f64) -> f64 {
        match self {
            Activation::Relu => {
                if output > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => output * (1.0 - output),
            Activation::Identity => 1.0,
        }
    }
}

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetSpec {
    /// Encoder widths from input to bottleneck; the decoder mirrors them.
    pub encoder_widths: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    /// Adadelta decay.
    pub rho: f64,
    /// Adadelta conditioning constant.
    pub epsilon: f64,
    /// Independent trainings; the lowest final loss wins. Rectified
    /// bottlenecks can pin distinct clusters to the same clipped code for
    /// unlucky inits, and the collapsed embedding shows up directly as a
    /// much larger reconstruction loss.
    pub restarts: usize,
}

impl Default for NetSpec {
    fn default() -> Self {
        NetSpec {
            encoder_widths: vec![15, 12, 8, 4, 2],
            epochs: 15,
            batch_size: 30,
            rho: 0.95,
            epsilon: 1e-6,
            restarts: 3,
        }
    }
}

impl NetSpec {
    /// Dimensionality-reducing spec for `n_inputs` cameras: the wide default
    /// pyramid for large networks, a short two-step encoder for small ones.
    pub fn autoencoder(n_inputs: usize) -> NetSpec {
        let encoder_widths = if n_inputs > 12 {
            vec![n_inputs, 12, 8, 4, 2]
        } else if n_inputs >= 3 {
            vec![n_inputs, 3.min(n_inputs), 2]
        } else {
            vec![n_inputs, 2]
        };
        NetSpec {
            encoder_widths,
            ..NetSpec::default()
        }
    }

    pub fn input_width(&self) -> usize {
        *self.encoder_widths.first().unwrap_or(&0)
    }

    pub fn bottleneck(&self) -> usize {
        *self.encoder_widths.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_widths.len() < 2 {
            return Err(Error::InvalidConfig(
                "encoder needs at least an input and a bottleneck width".into(),
            ));
        }
        if self.encoder_widths.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.rho) || self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig(
                "Adadelta parameters out of range".into(),
            ));
        }
        Ok(())
    }

    /// (fan_in, fan_out, activation) of every layer, encoder then decoder.
    fn layer_plan(&self) -> Vec<(usize, usize, Activation)> {
        let mut plan = Vec::new();
        for pair in self.encoder_widths.windows(2) {
            plan.push((pair[0], pair[1], Activation::Relu));
        }
        let decoder: Vec<usize> = self.encoder_widths.iter().rev().copied().collect();
        let n_dec = decoder.len() - 1;
        for (i, pair) in decoder.windows(2).enumerate() {
            let act = if i + 1 == n_dec {
                Activation::Sigmoid
            } else {
                Activation::Relu
            };
            plan.push((pair[0], pair[1], act));
        }
        plan
    }
}

/// Overcomplete baseline: two encoder layers of the input width each, so no
/// dimensionality reduction takes place; training setup as the default.
pub fn dnn_spec(n_cameras: usize) -> NetSpec {
    NetSpec {
        encoder_widths: vec![n_cameras; 3],
        ..NetSpec::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Row-major weights, one row per output unit.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

/// Per-layer Adadelta accumulators, shaped like the parameters they drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub grad_sq_w: Vec<Vec<f64>>,
    pub step_sq_w: Vec<Vec<f64>>,
    pub grad_sq_b: Vec<f64>,
    pub step_sq_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralNet {
    pub spec: NetSpec,
    pub layers: Vec<Layer>,
    pub n_encoder_layers: usize,
    /// Optimizer accumulators; checkpoints may omit them, in which case the
    /// network is usable for inference but not for resumed training.
    #[serde(default)]
    pub opt_state: Vec<OptState>,
}

impl NeuralNet {
    /// Fresh network with uniform Glorot weights. Biases start at a small
    /// positive constant so rectified units begin active instead of sitting
    /// exactly on the kink.
    pub fn init(spec: &NetSpec, seed: u64) -> Result<NeuralNet> {
        spec.validate()?;
        let mut rng = seeds::rng_for(seed, Stream::Net);
        let plan = spec.layer_plan();
        let layers: Vec<Layer> = plan
            .iter()
            .map(|&(fan_in, fan_out, activation)| {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = (0..fan_out)
                    .map(|_| {
                        (0..fan_in)
                            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit)
                            .collect()
                    })
                    .collect();
                Layer {
                    weights,
                    biases: vec![1e-2; fan_out],
                    activation,
                }
            })
            .collect();
        let opt_state = layers
            .iter()
            .map(|layer| OptState {
                grad_sq_w: layer
                    .weights
                    .iter()
                    .map(|row| vec![0.0; row.len()])
                    .collect(),
                step_sq_w: layer
                    .weights
                    .iter()
                    .map(|row| vec![0.0; row.len()])
                    .collect(),
                grad_sq_b: vec![0.0; layer.biases.len()],
                step_sq_b: vec![0.0; layer.biases.len()],
            })
            .collect();
        Ok(NeuralNet {
            spec: spec.clone(),
            layers,
            n_encoder_layers: spec.encoder_widths.len() - 1,
            opt_state,
        })
    }

    fn forward_layers(&self, range: std::ops::Range<usize>, input: &[f64]) -> Vec<f64> {
        let mut current = input.to_vec();
        for layer in &self.layers[range] {
            current = layer_forward(layer, &current);
        }
        current
    }

    /// Compress points through the encoder half.
    pub fn encode(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let width = self.spec.input_width();
        points
            .iter()
            .map(|p| {
                if p.len() != width {
                    return Err(Error::ShapeMismatch {
                        context: "encode input",
                        expected: width,
                        got: p.len(),
                    });
                }
                Ok(self.forward_layers(0..self.n_encoder_layers, p))
            })
            .collect()
    }

    /// Project codes back through the decoder half; the final logistic layer
    /// keeps outputs strictly inside (0, 1).
    pub fn decode(&self, codes: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let width = self.spec.bottleneck();
        codes
            .iter()
            .map(|c| {
                if c.len() != width {
                    return Err(Error::ShapeMismatch {
                        context: "decode input",
                        expected: width,
                        got: c.len(),
                    });
                }
                Ok(self.forward_layers(self.n_encoder_layers..self.layers.len(), c))
            })
            .collect()
    }

    /// Reconstruction of `points` through the full network.
    pub fn reconstruct(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.decode(&self.encode(points)?)
    }

    /// Mean squared reconstruction error, averaged over rows and components.
    pub fn mse(&self, points: &[Vec<f64>]) -> Result<f64> {
        let recon = self.reconstruct(points)?;
        let width = self.spec.input_width();
        let mut acc = 0.0;
        for (x, r) in points.iter().zip(&recon) {
            for d in 0..width {
                let diff = r[d] - x[d];
                acc += diff * diff;
            }
        }
        Ok(acc / (points.len() * width) as f64)
    }
}

fn layer_forward(layer: &Layer, input: &[f64]) -> Vec<f64> {
    layer
        .weights
        .iter()
        .zip(&layer.biases)
        .map(|(row, &b)| {
            let z = b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
            layer.activation.apply(z)
        })
        .collect()
}

/// Per-layer weight gradients, indexed [layer][output][input].
type WeightGrads = Vec<Vec<Vec<f64>>>;
/// Per-layer bias gradients, indexed [layer][output].
type BiasGrads = Vec<Vec<f64>>;

/// Gradients of the batch MSE with respect to every parameter, shaped like
/// the network. Also returns the batch loss.
fn backprop(net: &NeuralNet, batch: &[&Vec<f64>]) -> (WeightGrads, BiasGrads, f64) {
    let n_layers = net.layers.len();
    let width = net.spec.input_width();
    let mut grad_w: Vec<Vec<Vec<f64>>> = net
        .layers
        .iter()
        .map(|l| l.weights.iter().map(|row| vec![0.0; row.len()]).collect())
        .collect();
    let mut grad_b: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect();
    let scale = 1.0 / (batch.len() * width) as f64;
    let mut loss = 0.0;

    for &x in batch {
        // Forward pass keeping every activation.
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        activations.push(x.clone());
        for layer in &net.layers {
            let next = layer_forward(layer, activations.last().unwrap());
            activations.push(next);
        }
        let output = activations.last().unwrap();
        for d in 0..width {
            let diff = output[d] - x[d];
            loss += diff * diff * scale;
        }

        // Output delta of the elementwise MSE, then walk backwards.
        let mut delta: Vec<f64> = output
            .iter()
            .zip(x)
            .map(|(o, t)| {
                2.0 * (o - t) * scale * net.layers[n_layers - 1].activation.derivative(*o)
            })
            .collect();
        for l in (0..n_layers).rev() {
            let input = &activations[l];
            for (o, &d) in delta.iter().enumerate() {
                grad_b[l][o] += d;
                for (i, &a) in input.iter().enumerate() {
                    grad_w[l][o][i] += d * a;
                }
            }
            if l > 0 {
                let prev_act = net.layers[l - 1].activation;
                delta = (0..input.len())
                    .map(|i| {
                        let back: f64 = delta
                            .iter()
                            .enumerate()
                            .map(|(o, &d)| d * net.layers[l].weights[o][i])
                            .sum();
                        back * prev_act.derivative(input[i])
                    })
                    .collect();
            }
        }
    }
    (grad_w, grad_b, loss)
}

fn adadelta_step(value: &mut f64, grad: f64, g2: &mut f64, d2: &mut f64, rho: f64, eps: f64) {
    *g2 = rho * *g2 + (1.0 - rho) * grad * grad;
    let step = -((*d2 + eps) / (*g2 + eps)).sqrt() * grad;
    *d2 = rho * *d2 + (1.0 - rho) * step * step;
    *value += step;
}

/// Apply one optimizer update from accumulated gradients.
fn apply_gradients(net: &mut NeuralNet, grad_w: &[Vec<Vec<f64>>], grad_b: &[Vec<f64>]) {
    let rho = net.spec.rho;
    let eps = net.spec.epsilon;
    for (l, layer) in net.layers.iter_mut().enumerate() {
        let state = &mut net.opt_state[l];
        for (o, row) in layer.weights.iter_mut().enumerate() {
            for (i, w) in row.iter_mut().enumerate() {
                adadelta_step(
                    w,
                    grad_w[l][o][i],
                    &mut state.grad_sq_w[o][i],
                    &mut state.step_sq_w[o][i],
                    rho,
                    eps,
                );
            }
        }
        for (o, b) in layer.biases.iter_mut().enumerate() {
            adadelta_step(
                b,
                grad_b[l][o],
                &mut state.grad_sq_b[o],
                &mut state.step_sq_b[o],
                rho,
                eps,
            );
        }
    }
}

/// Train a reconstruction network on `data`, keeping the best of
/// `spec.restarts` independent trainings by final loss. Returns the trained
/// network and its per-epoch mean loss trace.
pub fn train(spec: &NetSpec, data: &[Vec<f64>], seed: u64) -> Result<(NeuralNet, Vec<f64>)> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::EmptySamples {
            context: "network training",
        });
    }
    let width = spec.input_width();
    for row in data {
        if row.len() != width {
            return Err(Error::ShapeMismatch {
                context: "training data",
                expected: width,
                got: row.len(),
            });
        }
    }
    let mut best: Option<(NeuralNet, Vec<f64>)> = None;
    for restart in 0..spec.restarts.max(1) {
        let restart_seed = seeds::derive(seed, Stream::Restart(restart as u64));
        let candidate = train_once(spec, data, restart_seed)?;
        let better = match &best {
            None => true,
            Some((_, trace)) => candidate.1.last() < trace.last(),
        };
        if better {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn train_once(spec: &NetSpec, data: &[Vec<f64>], seed: u64) -> Result<(NeuralNet, Vec<f64>)> {
    let mut net = NeuralNet::init(spec, seed)?;
    let mut shuffle_rng: ChaCha8Rng = seeds::rng_for(seed, Stream::Split);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(spec.epochs);

    for epoch in 0..spec.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(spec.batch_size) {
            let batch: Vec<&Vec<f64>> = chunk.iter().map(|&i| &data[i]).collect();
            let (grad_w, grad_b, loss) = backprop(&net, &batch);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            apply_gradients(&mut net, &grad_w, &grad_b);
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
        }
        trace.push(epoch_loss / seen as f64);
    }
    Ok((net, trace))
}

/// Compare analytic gradients with central finite differences (step 1e-5)
/// over every parameter of a freshly initialized network; returns the
/// largest relative error.
pub fn gradient_check(spec: &NetSpec, sample: &[Vec<f64>], seed: u64) -> Result<f64> {
    const STEP: f64 = 1e-5;
    spec.validate()?;
    if sample.is_empty() {
        return Err(Error::EmptySamples {
            context: "gradient check",
        });
    }
    let net = NeuralNet::init(spec, seed)?;
    let batch: Vec<&Vec<f64>> = sample.iter().collect();
    let (grad_w, grad_b, _) = backprop(&net, &batch);

    let loss_of = |n: &NeuralNet| -> f64 {
        let (_, _, loss) = backprop(n, &batch);
        loss
    };
    let mut max_rel = 0.0f64;
    let mut check = |analytic: f64, perturb: &mut dyn FnMut(&mut NeuralNet, f64)| {
        let mut plus = net.clone();
        perturb(&mut plus, STEP);
        let mut minus = net.clone();
        perturb(&mut minus, -STEP);
        let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * STEP);
        let denom = (analytic.abs() + numeric.abs()).max(1e-8);
        max_rel = max_rel.max((analytic - numeric).abs() / denom);
    };

    for l in 0..net.layers.len() {
        for o in 0..net.layers[l].weights.len() {
            for i in 0..net.layers[l].weights[o].len() {
                check(grad_w[l][o][i], &mut |n, h| n.layers[l].weights[o][i] += h);
            }
            check(grad_b[l][o], &mut |n, h| n.layers[l].biases[o] += h);
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_rows(value: f64, width: usize, count: usize) -> Vec<Vec<f64>> {
        vec![vec![value; width]; count]
    }

    #[test]
    fn spec_defaults_match_training_setup() {
        let spec = NetSpec::default();
        assert_eq!(spec.encoder_widths, vec![15, 12, 8, 4, 2]);
        assert_eq!(spec.epochs, 15);
        assert_eq!(spec.batch_size, 30);
        assert_eq!(spec.bottleneck(), 2);
    }

    #[test]
    fn dnn_spec_is_overcomplete() {
        let spec = dnn_spec(15);
        assert_eq!(spec.encoder_widths, vec![15, 15, 15]);
        assert_eq!(spec.bottleneck(), 15);
    }

    #[test]
    fn small_network_autoencoder_spec() {
        assert_eq!(NetSpec::autoencoder(3).encoder_widths, vec![3, 3, 2]);
        assert_eq!(NetSpec::autoencoder(15).encoder_widths, vec![15, 12, 8, 4, 2]);
    }

    #[test]
    fn constant_dataset_trains_to_negligible_loss() {
        let spec = NetSpec {
            encoder_widths: vec![4, 3, 2],
            epochs: 400,
            batch_size: 16,
            ..NetSpec::default()
        };
        let data = constant_rows(0.8, 4, 64);
        let (_, trace) = train(&spec, &data, 1).unwrap();
        assert!(
            *trace.last().unwrap() < 1e-3,
            "final loss {}",
            trace.last().unwrap()
        );
    }

    #[test]
    fn training_is_seed_deterministic() {
        let spec = NetSpec {
            encoder_widths: vec![5, 3, 2],
            epochs: 3,
            ..NetSpec::default()
        };
        let data: Vec<Vec<f64>> = (0..40)
            .map(|i| (0..5).map(|d| ((i * 5 + d) % 10) as f64 / 10.0).collect())
            .collect();
        let (net_a, trace_a) = train(&spec, &data, 9).unwrap();
        let (net_b, trace_b) = train(&spec, &data, 9).unwrap();
        assert_eq!(net_a, net_b);
        assert_eq!(trace_a, trace_b);
        let (net_c, _) = train(&spec, &data, 10).unwrap();
        assert_ne!(net_a, net_c);
    }

    #[test]
    fn encode_has_bottleneck_width_and_no_batch_coupling() {
        let spec = NetSpec::default();
        let net = NeuralNet::init(&spec, 3).unwrap();
        let points: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..15).map(|d| ((i + d) % 7) as f64 / 7.0).collect())
            .collect();
        let codes = net.encode(&points).unwrap();
        assert!(codes.iter().all(|c| c.len() == 2));
        let alone = net.encode(&points[2..3]).unwrap();
        assert_eq!(alone[0], codes[2]);
    }

    #[test]
    fn zero_network_encodes_to_zero_and_decodes_to_half() {
        let spec = NetSpec {
            encoder_widths: vec![3, 2],
            ..NetSpec::default()
        };
        let mut net = NeuralNet::init(&spec, 0).unwrap();
        for layer in &mut net.layers {
            for row in &mut layer.weights {
                row.fill(0.0);
            }
            layer.biases.fill(0.0);
        }
        let codes = net.encode(&[vec![0.4, 0.9, 0.1]]).unwrap();
        assert_eq!(codes[0], vec![0.0, 0.0]);
        let recon = net.decode(&codes).unwrap();
        assert_eq!(recon[0], vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn decode_stays_strictly_inside_unit_interval() {
        let spec = NetSpec {
            encoder_widths: vec![6, 4, 2],
            ..NetSpec::default()
        };
        let net = NeuralNet::init(&spec, 5).unwrap();
        let codes = vec![vec![-6.0, 9.0], vec![0.0, 0.0], vec![3.0, -2.0]];
        for row in net.decode(&codes).unwrap() {
            for v in row {
                assert!(v > 0.0 && v < 1.0);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let net = NeuralNet::init(&NetSpec::default(), 0).unwrap();
        assert!(matches!(
            net.encode(&[vec![0.0; 14]]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            net.decode(&[vec![0.0; 3]]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let spec = NetSpec {
            encoder_widths: vec![3, 2],
            ..NetSpec::default()
        };
        let mut net = NeuralNet::init(&spec, 2).unwrap();
        let before = net.layers.clone();
        let grad_w: Vec<Vec<Vec<f64>>> = net
            .layers
            .iter()
            .map(|l| l.weights.iter().map(|r| vec![0.0; r.len()]).collect())
            .collect();
        let grad_b: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect();
        apply_gradients(&mut net, &grad_w, &grad_b);
        assert_eq!(before, net.layers);
    }

    #[test]
    fn gradient_check_passes_on_assorted_specs() {
        let specs = [
            NetSpec {
                encoder_widths: vec![4, 3, 2],
                ..NetSpec::default()
            },
            NetSpec {
                encoder_widths: vec![6, 2],
                ..NetSpec::default()
            },
        ];
        let data: Vec<Vec<f64>> = (0..8)
            .map(|i| (0..6).map(|d| 0.1 + 0.08 * ((i * 3 + d) % 9) as f64).collect())
            .collect();
        for (s, spec) in specs.iter().enumerate() {
            let sample: Vec<Vec<f64>> = data.iter().map(|r| r[..spec.input_width()].to_vec()).collect();
            let err = gradient_check(spec, &sample[..5], s as u64).unwrap();
            assert!(err < 1e-4, "spec {s}: max relative error {err}");
        }
    }

    #[test]
    fn linear_identity_layer_matches_closed_form_gradient() {
        // One identity layer, one sample: loss = (1/w) sum (Wx + b - x)^2,
        // so dL/dW[o][i] = 2 (z_o - x_o) x_i / w.
        let spec = NetSpec {
            encoder_widths: vec![2, 2],
            ..NetSpec::default()
        };
        let mut net = NeuralNet::init(&spec, 4).unwrap();
        net.layers.truncate(1);
        net.opt_state.truncate(1);
        net.layers[0].activation = Activation::Identity;
        net.n_encoder_layers = 1;
        let x = vec![0.3, -0.7];
        let batch = vec![&x];
        let (grad_w, grad_b, _) = backprop(&net, &batch);
        let z = layer_forward(&net.layers[0], &x);
        for o in 0..2 {
            let delta = 2.0 * (z[o] - x[o]) / 2.0;
            for i in 0..2 {
                assert!((grad_w[0][o][i] - delta * x[i]).abs() < 1e-8);
            }
            assert!((grad_b[0][o] - delta).abs() < 1e-8);
        }
    }

    fn nominal_observations(count: usize, seed: u64) -> crate::observe::ObservationDataset {
        use crate::model::{SensingParams, StimulationModel};
        let model =
            StimulationModel::random(15, 3, 20, SensingParams::default(), seed).unwrap();
        crate::observe::generate_dataset(&model, count, seed).unwrap()
    }

    #[test]
    fn loss_trend_decreases_on_nominal_data() {
        let dataset = nominal_observations(1500, 21);
        let rows = dataset.rows();
        let spec = NetSpec {
            restarts: 1,
            ..NetSpec::default()
        };
        let (net, trace) = train(&spec, &rows, 8).unwrap();
        assert_eq!(trace.len(), 15);
        assert!(
            trace.last().unwrap() < trace.first().unwrap(),
            "trace {trace:?}"
        );
        // Reconstruction on training-like data stays near the trained loss.
        let mse = net.mse(&rows).unwrap();
        assert!(mse < trace.last().unwrap() + 0.01, "mse {mse}");
        // The overcomplete baseline trains on the same data without issue.
        let dnn = NetSpec {
            restarts: 1,
            epochs: 3,
            ..dnn_spec(15)
        };
        train(&dnn, &rows, 9).unwrap();
    }

    #[test]
    fn trained_codes_cluster_by_event() {
        let dataset = nominal_observations(2000, 33);
        let rows = dataset.rows();
        let (net, _) = train(&NetSpec::default(), &rows, 5).unwrap();
        let codes = net.encode(&rows).unwrap();
        let labels: Vec<usize> = dataset
            .observations
            .iter()
            .map(|o| o.true_event.unwrap())
            .collect();
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let mut intra = (0.0, 0usize);
        let mut inter = (0.0, 0usize);
        for i in (0..codes.len()).step_by(7) {
            for j in (i + 1..codes.len()).step_by(11) {
                let d = dist(&codes[i], &codes[j]);
                if labels[i] == labels[j] {
                    intra = (intra.0 + d, intra.1 + 1);
                } else {
                    inter = (inter.0 + d, inter.1 + 1);
                }
            }
        }
        let mean_intra = intra.0 / intra.1 as f64;
        let mean_inter = inter.0 / inter.1 as f64;
        assert!(
            mean_intra < mean_inter,
            "intra {mean_intra} vs inter {mean_inter}"
        );
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let spec = NetSpec {
            encoder_widths: vec![4, 2],
            epochs: 2,
            ..NetSpec::default()
        };
        let data = constant_rows(0.25, 4, 32);
        let (net, _) = train(&spec, &data, 6).unwrap();
        let text = serde_json::to_string(&net).unwrap();
        let back: NeuralNet = serde_json::from_str(&text).unwrap();
        assert_eq!(net, back);
    }
}
