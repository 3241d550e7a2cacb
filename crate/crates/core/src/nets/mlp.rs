use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{Graph, Matrix, SpectralState, Var};
use crate::ndcore::matrix::gemm;
use crate::rng::{derive_seed, SplitMix64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    pub fn apply_graph(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
        }
    }
}

/// Architecture of a dropout MLP: `widths = [input, hidden.., output]`.
///
/// Dropout acts on the input of every weight layer that is fed by hidden
/// units; raw state/action inputs are never masked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub dropout: f64,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation, dropout: f64) -> Result<Self> {
        let spec = Self {
            widths,
            activation,
            dropout,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 3 {
            return Err(Error::Config(format!(
                "an MLP needs input, at least one hidden and an output width, got {:?}",
                self.widths
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::Config(format!("zero layer width in {:?}", self.widths)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }
}

/// One weight layer: `weight` is `out × in`, `bias` is `1 × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Matrix,
    pub spectral: Option<SpectralParam>,
}

/// Spectral reparameterization of a layer: `raw` is the trained matrix and
/// the layer's `weight` is `raw / max(1, sigma)`, with `sigma` the latest
/// power-iteration estimate of `raw`'s top singular value.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralParam {
    pub raw: Matrix,
    pub state: SpectralState,
    pub sigma: f64,
}

impl Layer {
    /// LeCun-uniform weights (variance 1/fan-in), zero bias.
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (3.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
        Self {
            weight: Matrix::from_vec(fan_out, fan_in, data).expect("layer shape"),
            bias: Matrix::zeros(1, fan_out),
            spectral: None,
        }
    }

    pub fn from_parts(weight: Matrix, bias: Matrix) -> Result<Self> {
        if bias.shape() != (1, weight.rows()) {
            return Err(Error::Dimension {
                op: "layer",
                left: weight.shape(),
                right: bias.shape(),
            });
        }
        Ok(Self {
            weight,
            bias,
            spectral: None,
        })
    }

    pub(crate) fn forward(&self, x: &Matrix) -> Matrix {
        let mut z = x.matmul_t(&self.weight).expect("validated layer input");
        z.add_row_broadcast(&self.bias).expect("validated bias");
        z
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropoutMode {
    Off,
    Sampled(u64),
}

/// Weights of a dropout MLP.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

impl MlpParams {
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec.widths.windows(2).map(|w| Layer::init(w[0], w[1], rng)).collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    /// Assembles parameters from raw layers, checking them against `spec`.
    pub fn from_layers(spec: &MlpSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.num_layers() {
            return Err(Error::Config(format!(
                "expected {} layers, found {}",
                spec.num_layers(),
                layers.len()
            )));
        }
        for (l, (layer, w)) in layers.iter().zip(spec.widths.windows(2)).enumerate() {
            if layer.weight.shape() != (w[1], w[0]) {
                return Err(Error::Config(format!(
                    "layer {l}: weight shape {:?} does not match widths {:?}",
                    layer.weight.shape(),
                    spec.widths
                )));
            }
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    /// Makes the current weights the raw parameters of a spectral
    /// reparameterization. Call [`MlpParams::spectral_project`] to derive the
    /// normalized weights.
    pub fn enable_spectral<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for layer in &mut self.layers {
            layer.spectral = Some(SpectralParam {
                raw: layer.weight.clone(),
                state: SpectralState::new(layer.weight.rows(), rng),
                sigma: 1.0,
            });
        }
    }

    /// Drops any spectral reparameterization, keeping the current weights.
    pub fn without_spectral(mut self) -> Self {
        for layer in &mut self.layers {
            layer.spectral = None;
        }
        self
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Advances each layer's power iteration on its raw matrix and sets
    /// `weight = raw / max(1, sigma)`. Returns the estimates. Layers without
    /// a spectral state are skipped.
    pub fn spectral_project(&mut self, iterations: usize) -> Result<Vec<f64>> {
        let mut sigmas = Vec::new();
        for layer in &mut self.layers {
            if let Some(sp) = layer.spectral.as_mut() {
                sp.sigma = sp.state.estimate(&sp.raw, iterations)?;
                layer.weight = sp.raw.scaled(1.0 / sp.sigma.max(1.0));
                sigmas.push(sp.sigma);
            }
        }
        Ok(sigmas)
    }

    /// Tensors the optimizer updates: like [`MlpParams::tensors_mut`] but
    /// with each spectral layer's raw matrix in place of its weight.
    pub fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let w = match l.spectral.as_mut() {
                    Some(sp) => &mut sp.raw,
                    None => &mut l.weight,
                };
                [w, &mut l.bias]
            })
            .collect()
    }

    /// Maps gradients with respect to the weights onto [`MlpParams::trainable_mut`],
    /// holding each layer's `sigma` constant.
    pub fn trainable_grads(&self, mut grads: Vec<Matrix>) -> Vec<Matrix> {
        for (l, layer) in self.layers.iter().enumerate() {
            if let Some(sp) = &layer.spectral {
                if sp.sigma > 1.0 {
                    grads[2 * l].scale(1.0 / sp.sigma);
                }
            }
        }
        grads
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Parameter tensors in `[w0, b0, w1, b1, ..]` order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().iter().map(|m| m.shape()).collect()
    }

    pub fn labels(&self, prefix: &str) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|l| [format!("{prefix}.layer{l}.weight"), format!("{prefix}.layer{l}.bias")])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.is_finite())
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.spec.input_dim() {
            return Err(Error::Dimension {
                op: "mlp_forward",
                left: (0, cols),
                right: (0, self.spec.input_dim()),
            });
        }
        Ok(())
    }

    /// Forward pass without gradient tracking; one output row per input row.
    pub fn predict(&self, input: &Matrix, mode: DropoutMode) -> Result<Matrix> {
        self.check_input(input.cols())?;
        let masks = match mode {
            DropoutMode::Sampled(seed) if self.spec.dropout > 0.0 => Some(dropout_masks(&self.spec, input.rows(), seed)),
            _ => None,
        };
        Ok(self.run(input, masks.as_deref()))
    }

    /// `seeds.len()` stochastic passes over the same input, stacked
    /// pass-major: rows `[t·n, (t+1)·n)` hold pass `t`. Block `t` is
    /// bit-identical to `predict(input, Sampled(seeds[t]))`.
    pub fn predict_passes(&self, input: &Matrix, seeds: &[u64]) -> Result<Matrix> {
        self.check_input(input.cols())?;
        let n = input.rows();
        let stacked = input.tile_rows(seeds.len());
        if self.spec.dropout == 0.0 {
            return Ok(self.run(&stacked, None));
        }
        let per_pass: Vec<Vec<Matrix>> = seeds.iter().map(|&s| dropout_masks(&self.spec, n, s)).collect();
        let masks: Vec<Matrix> = (0..self.layers.len() - 1)
            .map(|l| {
                let cols = per_pass[0][l].cols();
                let mut data = Vec::with_capacity(n * seeds.len() * cols);
                for pass in &per_pass {
                    data.extend_from_slice(pass[l].data());
                }
                Matrix::from_vec(n * seeds.len(), cols, data).expect("mask shape")
            })
            .collect();
        Ok(self.run(&stacked, Some(&masks)))
    }

    fn run(&self, input: &Matrix, masks: Option<&[Matrix]>) -> Matrix {
        let last = self.layers.len() - 1;
        let act = self.spec.activation;
        let mut cur: Option<Matrix> = None;
        for (l, layer) in self.layers.iter().enumerate() {
            let x = cur.as_ref().unwrap_or(input);
            let mut z = Matrix::zeros(x.rows(), layer.weight.rows());
            gemm(x, false, &layer.weight, true, &mut z, 1.0, 0.0);
            let bias = layer.bias.data();
            let width = bias.len();
            let mask = masks.filter(|_| l < last).map(|ms| ms[l].data());
            for (r, row) in z.data_mut().chunks_exact_mut(width).enumerate() {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v += b;
                }
                if l < last {
                    match act {
                        Activation::Relu => row.iter_mut().for_each(|v| *v = v.max(0.0)),
                        Activation::Tanh => row.iter_mut().for_each(|v| *v = v.tanh()),
                    }
                    if let Some(m) = mask {
                        for (v, k) in row.iter_mut().zip(&m[r * width..(r + 1) * width]) {
                            *v *= k;
                        }
                    }
                }
            }
            cur = Some(z);
        }
        cur.expect("at least one layer")
    }

    /// Registers the weights as graph leaves.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundMlp {
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            if trainable {
                weights.push(g.param(layer.weight.clone()));
                biases.push(g.param(layer.bias.clone()));
            } else {
                weights.push(g.constant(layer.weight.clone()));
                biases.push(g.constant(layer.bias.clone()));
            }
        }
        BoundMlp {
            spec: self.spec.clone(),
            weights,
            biases,
        }
    }
}

/// An [`MlpParams`] registered in a graph.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    spec: MlpSpec,
    weights: Vec<Var>,
    biases: Vec<Var>,
}

impl BoundMlp {
    /// Wraps existing graph leaves laid out as `[w0, b0, w1, b1, ..]`.
    pub fn from_vars(spec: &MlpSpec, vars: &[Var]) -> Result<Self> {
        if vars.len() != 2 * spec.num_layers() {
            return Err(Error::contract(format!(
                "expected {} parameter vars, got {}",
                2 * spec.num_layers(),
                vars.len()
            )));
        }
        Ok(Self {
            spec: spec.clone(),
            weights: vars.iter().step_by(2).copied().collect(),
            biases: vars.iter().skip(1).step_by(2).copied().collect(),
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var, mode: DropoutMode) -> Result<Var> {
        let (rows, cols) = g.value(x).shape();
        if cols != self.spec.input_dim() {
            return Err(Error::Dimension {
                op: "mlp_forward",
                left: (rows, cols),
                right: (rows, self.spec.input_dim()),
            });
        }
        let mut masks = match mode {
            DropoutMode::Sampled(seed) if self.spec.dropout > 0.0 => Some(dropout_masks(&self.spec, rows, seed).into_iter()),
            _ => None,
        };
        let last = self.weights.len() - 1;
        let mut h = x;
        for l in 0..self.weights.len() {
            if l > 0 {
                if let Some(m) = masks.as_mut().and_then(|it| it.next()) {
                    h = g.mul_const(h, m)?;
                }
            }
            h = g.affine(h, self.weights[l], self.biases[l])?;
            if l < last {
                h = self.spec.activation.apply_graph(g, h);
            }
        }
        Ok(h)
    }

    /// Gradients in the same order as [`MlpParams::tensors`].
    pub fn grads(&self, g: &Graph) -> Vec<Matrix> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(&w, &b)| [g.grad(w), g.grad(b)])
            .collect()
    }

    pub fn vars(&self) -> Vec<Var> {
        self.weights.iter().zip(&self.biases).flat_map(|(&w, &b)| [w, b]).collect()
    }
}

/// Inverted-dropout masks for one pass over `rows` inputs: one matrix per
/// weight layer after the first, entries `0` or `1/keep`.
pub fn dropout_masks(spec: &MlpSpec, rows: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = SplitMix64::new(derive_seed(seed, 0));
    let keep = 1.0 - spec.dropout;
    let scale = 1.0 / keep;
    // Two 32-bit lanes per draw; a unit is dropped when its lane falls below
    // rate·2³².
    let cut = (spec.dropout * 4_294_967_296.0).round() as u64;
    spec.widths[1..spec.widths.len() - 1]
        .iter()
        .map(|&width| {
            let mut data = vec![scale; rows * width];
            for chunk in data.chunks_mut(2) {
                let bits = rng.next_u64();
                for (lane, v) in chunk.iter_mut().enumerate() {
                    if (bits >> (32 * lane)) & 0xffff_ffff < cut {
                        *v = 0.0;
                    }
                }
            }
            Matrix::from_vec(rows, width, data).expect("mask shape")
        })
        .collect()
}

/// `target ← τ·online + (1−τ)·target`, elementwise over every tensor.
pub fn soft_update(target: &mut MlpParams, online: &MlpParams, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::contract(format!("soft update rate {tau} outside (0, 1]")));
    }
    let shapes_t = target.shapes();
    if shapes_t != online.shapes() {
        return Err(Error::contract(format!(
            "soft update between mismatched networks {:?} and {:?}",
            shapes_t,
            online.shapes()
        )));
    }
    for (t, o) in target.tensors_mut().into_iter().zip(online.tensors()) {
        soft_update_tensor(t, o, tau);
    }
    Ok(())
}

pub(crate) fn soft_update_tensor(target: &mut Matrix, online: &Matrix, tau: f64) {
    for (t, &o) in target.data_mut().iter_mut().zip(online.data()) {
        *t = tau * o + (1.0 - tau) * *t;
    }
}
