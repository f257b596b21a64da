//! Small dense networks with hand-written backpropagation and Adam.
//!
//! Hidden layers use `tanh`. The final layer feeds one of three heads: a
//! softmax over actions, an unbounded scalar, or a sigmoid probability.

mod adam;
mod checkpoint;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{NetCheckpoint, CHECKPOINT_VERSION};

use crate::par::Execution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input has {got} values, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("activation cache does not belong to the current network parameters")]
    StaleCache,
    #[error("gradient contains a non-finite value")]
    NonFiniteGradient,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("network needs at least an input and an output layer")]
    TooFewLayers,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Softmax,
    Scalar,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major, `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.inputs).zip(&self.biases) {
            out.push(b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    layers: Vec<Dense>,
    head: Head,
    // Bumped on every parameter update so stale caches can be detected.
    generation: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layer_sizes == other.layer_sizes && self.layers == other.layers && self.head == other.head
    }
}

/// Activations recorded by [`Mlp::forward`] for a later backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    generation: u64,
    /// Input followed by each hidden layer's post-tanh activation.
    activations: Vec<Vec<f64>>,
    /// Final affine output before the head nonlinearity.
    raw: Vec<f64>,
    output: Vec<f64>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Parameter gradients with the same layout as an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad { weights: vec![0.0; l.weights.len()], biases: vec![0.0; l.biases.len()] })
                .collect(),
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for a in self.values_mut() {
            *a *= k;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|&v| v == 0.0)
    }

    /// Rescales so the global L2 norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n.is_finite() {
            self.scale(max_norm / n);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    /// Sums per-sample gradients over `0..n`.
    ///
    /// Samples are processed in fixed-size chunks whose partial sums are added
    /// in chunk order, so the result is bit-identical whether the chunks run
    /// sequentially or in parallel.
    pub fn accumulate<F>(net: &Mlp, exec: Execution, n: usize, per_sample: F) -> (Gradients, f64)
    where
        F: Fn(usize, &mut Gradients) -> f64 + Sync + Send,
    {
        const CHUNK: usize = 32;
        let chunks = n.div_ceil(CHUNK);
        let partials = exec.map_range(chunks, |c| {
            let mut g = Gradients::zeros_like(net);
            let mut total = 0.0;
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                total += per_sample(i, &mut g);
            }
            (g, total)
        });
        let mut grads = Gradients::zeros_like(net);
        let mut total = 0.0;
        for (g, t) in &partials {
            grads.add_assign(g);
            total += t;
        }
        (grads, total)
    }
}

impl Mlp {
    /// All-zero parameters.
    pub fn zeros(layer_sizes: &[usize], head: Head) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 {
            return Err(NnError::TooFewLayers);
        }
        if layer_sizes.contains(&0) {
            return Err(NnError::ShapeMismatch("layer sizes must be positive".into()));
        }
        match head {
            Head::Scalar | Head::Sigmoid if *layer_sizes.last().unwrap() != 1 => {
                return Err(NnError::ShapeMismatch(format!("{head:?} head needs exactly one output")));
            }
            _ => {}
        }
        let layers = layer_sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self { layer_sizes: layer_sizes.to_vec(), layers, head, generation: 0 })
    }

    /// Orthogonal initialisation: hidden layers with gain √2, the output layer
    /// with `output_gain`. Biases start at zero.
    pub fn init<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        head: Head,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut net = Self::zeros(layer_sizes, head)?;
        let last = net.layers.len() - 1;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let gain = if i == last { output_gain } else { std::f64::consts::SQRT_2 };
            layer.weights = orthogonal(layer.outputs, layer.inputs, gain, rng);
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Mutable access to the parameters; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Cache), NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch { expected: self.input_dim(), got: input.len() });
        }
        let mut activations = Vec::with_capacity(self.layers.len());
        activations.push(input.to_vec());
        let mut buf = Vec::new();
        let last = self.layers.len() - 1;
        for layer in &self.layers[..last] {
            layer.apply(activations.last().unwrap(), &mut buf);
            activations.push(buf.iter().map(|v| v.tanh()).collect());
        }
        let mut raw = Vec::new();
        self.layers[last].apply(activations.last().unwrap(), &mut raw);
        let output = apply_head(self.head, &raw);
        let cache = Cache { generation: self.generation, activations, raw, output: output.clone() };
        Ok((output, cache))
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.forward(input).map(|(out, _)| out)
    }

    /// Gradients given dLoss/dOutput, where output is the head's result.
    pub fn backward(&self, cache: &Cache, output_grad: &[f64]) -> Result<Gradients, NnError> {
        let raw_grad = self.head_backward(cache, output_grad)?;
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_raw(cache, &raw_grad, &mut grads)?;
        Ok(grads)
    }

    /// Gradients given dLoss/dRaw, the pre-head affine output (logits for the
    /// softmax head, the pre-sigmoid score for the sigmoid head).
    pub fn backward_raw(&self, cache: &Cache, raw_grad: &[f64]) -> Result<Gradients, NnError> {
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_raw(cache, raw_grad, &mut grads)?;
        Ok(grads)
    }

    fn head_backward(&self, cache: &Cache, g: &[f64]) -> Result<Vec<f64>, NnError> {
        if g.len() != self.output_dim() {
            return Err(NnError::DimensionMismatch { expected: self.output_dim(), got: g.len() });
        }
        let y = &cache.output;
        Ok(match self.head {
            Head::Scalar => g.to_vec(),
            Head::Sigmoid => vec![g[0] * y[0] * (1.0 - y[0])],
            Head::Softmax => {
                let gy: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                y.iter().zip(g).map(|(p, gi)| p * (gi - gy)).collect()
            }
        })
    }

    /// Adds this sample's parameter gradients into `grads`.
    pub fn accumulate_raw(&self, cache: &Cache, raw_grad: &[f64], grads: &mut Gradients) -> Result<(), NnError> {
        if cache.generation != self.generation
            || cache.activations.len() != self.layers.len()
            || cache.activations.iter().zip(&self.layer_sizes).any(|(a, &s)| a.len() != s)
        {
            return Err(NnError::StaleCache);
        }
        if raw_grad.len() != self.output_dim() {
            return Err(NnError::DimensionMismatch { expected: self.output_dim(), got: raw_grad.len() });
        }
        if grads.layers.len() != self.layers.len() {
            return Err(NnError::ShapeMismatch("gradient buffer layout".into()));
        }
        let mut delta = raw_grad.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let x = &cache.activations[li];
            let g = &mut grads.layers[li];
            for (o, d) in delta.iter().enumerate() {
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, xi) in row.iter_mut().zip(x) {
                    *w += d * xi;
                }
            }
            if li == 0 {
                break;
            }
            // back through the weights, then through tanh of the previous layer
            let mut prev = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            for (p, a) in prev.iter_mut().zip(x) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
        Ok(())
    }
}

fn apply_head(head: Head, raw: &[f64]) -> Vec<f64> {
    match head {
        Head::Scalar => raw.to_vec(),
        Head::Sigmoid => vec![sigmoid(raw[0])],
        Head::Softmax => softmax(raw),
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Log-softmax, stable for large logits.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Row-major `rows x cols` matrix with orthonormal rows or columns, scaled.
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (n, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut w = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            w[r * cols + c] = gain * if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_nets_are_uniform() {
        let net = Mlp::zeros(&[3, 4, 5], Head::Softmax).unwrap();
        let out = net.predict(&[1.0, -2.0, 3.0]).unwrap();
        assert!(out.iter().all(|p| (p - 0.2).abs() < 1e-15));
        let net = Mlp::zeros(&[3, 4, 1], Head::Sigmoid).unwrap();
        assert_eq!(net.predict(&[1.0, -2.0, 3.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn single_layer_scalar_by_hand() {
        let mut net = Mlp::zeros(&[2, 1], Head::Scalar).unwrap();
        let l = &mut net.layers_mut()[0];
        l.weights = vec![1.0, 1.0];
        l.biases = vec![0.5];
        assert_eq!(net.predict(&[1.0, 2.0]).unwrap(), vec![3.5]);
    }

    #[test]
    fn dimension_mismatch() {
        let net = Mlp::zeros(&[3, 1], Head::Scalar).unwrap();
        assert_eq!(
            net.forward(&[1.0]).unwrap_err(),
            NnError::DimensionMismatch { expected: 3, got: 1 }
        );
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::init(&[2, 3, 1], Head::Scalar, 1.0, &mut rng).unwrap();
        let (_, cache) = net.forward(&[0.1, 0.2]).unwrap();
        net.layers_mut()[0].biases[0] += 1.0;
        assert_eq!(net.backward(&cache, &[1.0]).unwrap_err(), NnError::StaleCache);
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::init(&[4, 8, 5], Head::Softmax, 1.0, &mut rng).unwrap();
        let (_, cache) = net.forward(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!(net.backward(&cache, &[0.0; 5]).unwrap().is_zero());
    }

    #[test]
    fn single_parameter_quadratic_loss() {
        // y = w * 1, L = (y - target)^2 => dL/dw = 2 (w - target)
        let mut net = Mlp::zeros(&[1, 1], Head::Scalar).unwrap();
        net.layers_mut()[0].weights = vec![0.7];
        let target = 0.2;
        let (y, cache) = net.forward(&[1.0]).unwrap();
        let g = net.backward(&cache, &[2.0 * (y[0] - target)]).unwrap();
        assert!((g.layers[0].weights[0] - 2.0 * (0.7 - target)).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = orthogonal(4, 9, 1.0, &mut rng);
        for i in 0..4 {
            for j in 0..4 {
                let d: f64 = (0..9).map(|k| w[i * 9 + k] * w[j * 9 + k]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((d - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let a = softmax(&[1.0, 2.0, 3.0, -1.0, 0.5]);
        let b = softmax(&[101.0, 102.0, 103.0, 99.0, 100.5]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_and_sequential_accumulation_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::init(&[3, 16, 1], Head::Scalar, 1.0, &mut rng).unwrap();
        let inputs: Vec<[f64; 3]> = (0..100).map(|i| [i as f64 * 0.01, 0.5, -0.2]).collect();
        let run = |exec| {
            Gradients::accumulate(&net, exec, inputs.len(), |i, g| {
                let (y, cache) = net.forward(&inputs[i]).unwrap();
                net.accumulate_raw(&cache, &[y[0]], g).unwrap();
                0.5 * y[0] * y[0]
            })
        };
        let (ga, la) = run(Execution::Sequential);
        let (gb, lb) = run(Execution::Parallel);
        assert_eq!(ga, gb);
        assert_eq!(la.to_bits(), lb.to_bits());
    }
}
