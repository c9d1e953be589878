//! Small fully connected networks with hand-written backpropagation.

use rand::Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::None => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::None => 1.0,
        }
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    layers: Vec<LayerSpec>,
}

impl MlpSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Argument("MLP needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.input_dim == 0 || l.output_dim == 0 {
                return Err(Error::Argument(format!("layer {i} has a zero dimension")));
            }
            if i > 0 && layers[i - 1].output_dim != l.input_dim {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} but layer {i} expects {}",
                    i - 1,
                    layers[i - 1].output_dim,
                    l.input_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Chain of layers through `dims`, all with the same activation except
    /// the last, which uses `last`.
    pub fn chain(dims: &[usize], hidden: Activation, last: Activation) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Argument("MLP chain needs at least two dims".into()));
        }
        let n = dims.len() - 1;
        Self::new(
            (0..n)
                .map(|i| LayerSpec {
                    input_dim: dims[i],
                    output_dim: dims[i + 1],
                    activation: if i + 1 == n { last } else { hidden },
                })
                .collect(),
        )
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `output_dim x input_dim`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Learnable weights of one MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// Per-layer inputs, pre-activations and outputs recorded by [`mlp_forward`].
#[derive(Debug, Clone, Default)]
pub struct Tape {
    inputs: Vec<Vec<f64>>,
    preacts: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn layer_input(&self, layer: usize) -> &[f64] {
        &self.inputs[layer]
    }

    pub fn preactivation(&self, layer: usize) -> &[f64] {
        &self.preacts[layer]
    }
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            layers: spec
                .layers()
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.output_dim, l.input_dim),
                    bias: vec![0.0; l.output_dim],
                    activation: l.activation,
                })
                .collect(),
        }
    }

    /// Fan-in scaled uniform init `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    ///
    /// Draw order: layers in order, each weight matrix row-major.
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Self {
        let mut params = Self::zeros(spec);
        for layer in &mut params.layers {
            let bound = (6.0 / layer.weight.cols() as f64).sqrt();
            for w in layer.weight.as_mut_slice() {
                *w = rng.gen_range(-bound..bound);
            }
        }
        params
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                    activation: l.activation,
                })
                .collect(),
        }
    }

    pub fn spec(&self) -> MlpSpec {
        MlpSpec {
            layers: self
                .layers
                .iter()
                .map(|l| LayerSpec {
                    input_dim: l.weight.cols(),
                    output_dim: l.weight.rows(),
                    activation: l.activation,
                })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.rows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.as_slice().len() + l.bias.len()).sum()
    }

    /// Checks the stored shapes against `spec`.
    pub fn check_spec(&self, spec: &MlpSpec) -> Result<()> {
        if self.spec() != *spec {
            return Err(Error::Shape(format!(
                "parameters do not match spec: expected {:?}, got {:?}",
                spec.layers(),
                self.spec().layers()
            )));
        }
        Ok(())
    }

    /// Flat views over every parameter, weights before biases per layer.
    pub fn tensors(&self) -> impl Iterator<Item = (String, &[f64])> {
        self.layers.iter().enumerate().flat_map(|(i, l)| {
            [
                (format!("{i}.weight"), l.weight.as_slice()),
                (format!("{i}.bias"), l.bias.as_slice()),
            ]
        })
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = (String, &mut [f64])> {
        self.layers.iter_mut().enumerate().flat_map(|(i, l)| {
            [
                (format!("{i}.weight"), l.weight.as_mut_slice()),
                (format!("{i}.bias"), l.bias.as_mut_slice()),
            ]
        })
    }

    /// `self += other`; shapes must match.
    pub fn add_assign(&mut self, other: &MlpParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.as_mut_slice().iter_mut().zip(b.weight.as_slice()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight.as_mut_slice().iter_mut().for_each(|x| *x *= factor);
            l.bias.iter_mut().for_each(|x| *x *= factor);
        }
    }
}

/// Applies one affine layer plus activation, returning `(preactivation, output)`.
pub(crate) fn layer_forward(layer: &Layer, input: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut z = layer.bias.clone();
    layer.weight.matvec_block_acc(0, input, &mut z);
    let a = z.iter().map(|&v| layer.activation.apply(v)).collect();
    (z, a)
}

/// Runs the network on `input`, recording everything backprop needs.
pub fn mlp_forward(params: &MlpParams, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
    if input.len() != params.input_dim() {
        return Err(Error::Shape(format!(
            "MLP expects input of length {}, got {}",
            params.input_dim(),
            input.len()
        )));
    }
    let n = params.layers.len();
    let mut tape = Tape {
        inputs: Vec::with_capacity(n),
        preacts: Vec::with_capacity(n),
        outputs: Vec::with_capacity(n),
    };
    let mut x = input.to_vec();
    for layer in &params.layers {
        let (z, a) = layer_forward(layer, &x);
        tape.inputs.push(x);
        tape.preacts.push(z);
        x = a.clone();
        tape.outputs.push(a);
    }
    Ok((x, tape))
}

/// Output only, no tape.
pub fn mlp_eval(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != params.input_dim() {
        return Err(Error::Shape(format!(
            "MLP expects input of length {}, got {}",
            params.input_dim(),
            input.len()
        )));
    }
    let mut x = input.to_vec();
    for layer in &params.layers {
        x = layer_forward(layer, &x).1;
    }
    Ok(x)
}

/// Gradient of `output · output_grad` w.r.t. every parameter and the input.
pub fn mlp_backward(params: &MlpParams, tape: &Tape, output_grad: &[f64]) -> Result<(MlpParams, Vec<f64>)> {
    let mut grads = params.zeros_like();
    let input_grad = mlp_backward_acc(params, tape, output_grad, &mut grads)?;
    Ok((grads, input_grad))
}

/// Like [`mlp_backward`] but accumulates parameter gradients into `grads`.
pub fn mlp_backward_acc(
    params: &MlpParams,
    tape: &Tape,
    output_grad: &[f64],
    grads: &mut MlpParams,
) -> Result<Vec<f64>> {
    backward(params, tape, output_grad, false, grads)
}

/// Like [`mlp_backward_acc`] but starts from the gradient w.r.t. the last
/// layer's pre-activation, bypassing its activation derivative.
pub fn mlp_backward_from_preact_acc(
    params: &MlpParams,
    tape: &Tape,
    preact_grad: &[f64],
    grads: &mut MlpParams,
) -> Result<Vec<f64>> {
    backward(params, tape, preact_grad, true, grads)
}

fn backward(params: &MlpParams, tape: &Tape, output_grad: &[f64], skip_last_activation: bool, grads: &mut MlpParams) -> Result<Vec<f64>> {
    if tape.preacts.len() != params.layers.len() {
        return Err(Error::Shape(format!(
            "tape has {} layers, network has {}",
            tape.preacts.len(),
            params.layers.len()
        )));
    }
    if output_grad.len() != params.output_dim() {
        return Err(Error::Shape(format!(
            "output gradient has length {}, network outputs {}",
            output_grad.len(),
            params.output_dim()
        )));
    }
    let mut g = output_grad.to_vec();
    for (i, layer) in params.layers.iter().enumerate().rev() {
        let z = &tape.preacts[i];
        let a = &tape.outputs[i];
        let x = &tape.inputs[i];
        if z.len() != layer.weight.rows() || x.len() != layer.weight.cols() {
            return Err(Error::Shape(format!("tape layer {i} does not match the network")));
        }
        let dz: Vec<f64> = g
            .iter()
            .zip(z.iter().zip(a))
            .map(|(gi, (&zi, &ai))| {
                if skip_last_activation && i + 1 == params.layers.len() {
                    *gi
                } else {
                    gi * layer.activation.derivative(zi, ai)
                }
            })
            .collect();
        let gl = &mut grads.layers[i];
        gl.weight.add_outer_block(0, &dz, x);
        for (b, d) in gl.bias.iter_mut().zip(&dz) {
            *b += d;
        }
        let mut dx = vec![0.0; x.len()];
        layer.weight.matvec_t_block_acc(0, &dz, &mut dx);
        g = dx;
    }
    Ok(g)
}
