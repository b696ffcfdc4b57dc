//! Sequential dense networks with tape-recorded forward passes.
//!
//! A [`Network`] is an ordered list of affine and ReLU layers. [`Network::forward`]
//! returns the logits together with a [`Tape`] of intermediate activations;
//! the tape is what the backward passes consume to produce parameter
//! gradients and, when needed, gradients with respect to the input batch.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Architecture element; affine layers carry their dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Affine { input: usize, output: usize },
    Relu,
}

/// Weight matrix is `output x input`, row-major; bias has length `output`.
#[derive(Debug, Clone)]
pub struct AffineLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
enum Layer {
    Affine(AffineLayer),
    Relu,
}

#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    spec: Vec<LayerSpec>,
    input_dim: usize,
    output_dim: usize,
}

/// Activations recorded by a forward pass: the input batch plus every
/// layer's output, in layer order.
#[derive(Debug)]
pub struct Tape {
    input: Tensor,
    outputs: Vec<Tensor>,
}

impl Tape {
    pub fn logits(&self) -> &Tensor {
        self.outputs
            .last()
            .expect("tape always has one layer output")
    }
}

fn validate_spec(spec: &[LayerSpec]) -> Result<(usize, usize)> {
    let mut dim: Option<usize> = None;
    let mut input_dim = None;
    for (idx, layer) in spec.iter().enumerate() {
        match *layer {
            LayerSpec::Affine { input, output } => {
                if input == 0 || output == 0 {
                    return Err(Error::shape(format!("layer {idx}: zero dimension")));
                }
                if let Some(d) = dim {
                    if d != input {
                        return Err(Error::shape(format!(
                            "layer {idx}: expects input {input} but previous layer outputs {d}"
                        )));
                    }
                }
                input_dim.get_or_insert(input);
                dim = Some(output);
            }
            LayerSpec::Relu => {
                if dim.is_none() {
                    return Err(Error::shape(format!(
                        "layer {idx}: relu before any affine layer"
                    )));
                }
            }
        }
    }
    match (input_dim, dim) {
        (Some(i), Some(o)) => Ok((i, o)),
        _ => Err(Error::shape("network must contain an affine layer")),
    }
}

/// The standard task architecture: one hidden ReLU layer.
pub fn mlp_arch(d_x: usize, hidden: usize, c: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Affine {
            input: d_x,
            output: hidden,
        },
        LayerSpec::Relu,
        LayerSpec::Affine {
            input: hidden,
            output: c,
        },
    ]
}

impl Network {
    /// Build with all parameters zero.
    pub fn zeros(spec: &[LayerSpec]) -> Result<Self> {
        let (input_dim, output_dim) = validate_spec(spec)?;
        let layers = spec
            .iter()
            .map(|l| match *l {
                LayerSpec::Affine { input, output } => Layer::Affine(AffineLayer {
                    weight: Tensor::zeros(&[output, input]),
                    bias: Tensor::zeros(&[output]),
                }),
                LayerSpec::Relu => Layer::Relu,
            })
            .collect();
        Ok(Network {
            layers,
            spec: spec.to_vec(),
            input_dim,
            output_dim,
        })
    }

    /// Seeded init: weights and biases uniform in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`.
    pub fn seeded_init(spec: &[LayerSpec], rng: &mut impl rand::Rng) -> Result<Self> {
        let mut net = Network::zeros(spec)?;
        for layer in &mut net.layers {
            if let Layer::Affine(aff) = layer {
                let fan_in = aff.weight.shape()[1];
                let bound = 1.0 / (fan_in as f64).sqrt();
                for v in aff.weight.data_mut() {
                    *v = rng.gen_range(-bound..=bound);
                }
                for v in aff.bias.data_mut() {
                    *v = rng.gen_range(-bound..=bound);
                }
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &[LayerSpec] {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Affine parameter tensors in layer order, weight before bias.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::Affine(aff) = layer {
                out.push(&aff.weight);
                out.push(&aff.bias);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Layer::Affine(aff) = layer {
                out.push(&mut aff.weight);
                out.push(&mut aff.bias);
            }
        }
        out
    }

    /// Parameter tensors keyed as `layer<idx>.weight` / `layer<idx>.bias`,
    /// where `idx` is the layer's position in the architecture list.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            if let Layer::Affine(aff) = layer {
                out.push((format!("layer{idx}.weight"), &aff.weight));
                out.push((format!("layer{idx}.bias"), &aff.bias));
            }
        }
        out
    }

    /// Mutable access to the affine layers in order (loader and test hook).
    pub fn affine_layers_mut(&mut self) -> Vec<&mut AffineLayer> {
        self.layers
            .iter_mut()
            .filter_map(|l| match l {
                Layer::Affine(aff) => Some(aff),
                Layer::Relu => None,
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.ensure_grad();
            p.zero_grad();
        }
    }

    pub fn all_params_finite(&self) -> bool {
        self.params().iter().all(|t| t.all_finite())
    }

    /// Forward pass over a batch, recording the tape for backward.
    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, Tape)> {
        if batch.shape().len() != 2 || batch.cols() != self.input_dim {
            return Err(Error::shape(format!(
                "batch shape {:?} incompatible with network input width {}",
                batch.shape(),
                self.input_dim
            )));
        }
        let n = batch.rows();
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut cur = batch.clone();
        for layer in &self.layers {
            let next = match layer {
                Layer::Affine(aff) => affine_forward(&cur, aff, n),
                Layer::Relu => {
                    let mut t = cur.clone();
                    for v in t.data_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                    t
                }
            };
            outputs.push(next.clone());
            cur = next;
        }
        let tape = Tape {
            input: batch.clone(),
            outputs,
        };
        Ok((cur, tape))
    }

    /// Forward pass without recording a tape.
    pub fn logits(&self, batch: &Tensor) -> Result<Tensor> {
        self.forward(batch).map(|(logits, _)| logits)
    }

    /// Backward pass: accumulates parameter gradients into the parameter
    /// tensors' grad buffers and returns the gradient with respect to the
    /// input batch.
    pub fn backward(&mut self, tape: &Tape, d_logits: &Tensor) -> Result<Tensor> {
        self.check_upstream(tape, d_logits)?;
        let n = tape.input.rows();
        let mut d_cur = d_logits.data().to_vec();
        for idx in (0..self.layers.len()).rev() {
            let x_in: &[f64] = if idx == 0 {
                tape.input.data()
            } else {
                tape.outputs[idx - 1].data()
            };
            match &mut self.layers[idx] {
                Layer::Affine(aff) => {
                    let out_dim = aff.weight.shape()[0];
                    let in_dim = aff.weight.shape()[1];
                    {
                        let bg = aff.bias.grad_mut();
                        for r in 0..n {
                            let d_row = &d_cur[r * out_dim..(r + 1) * out_dim];
                            for (g, d) in bg.iter_mut().zip(d_row) {
                                *g += *d;
                            }
                        }
                    }
                    {
                        let wg = aff.weight.grad_mut();
                        for r in 0..n {
                            let d_row = &d_cur[r * out_dim..(r + 1) * out_dim];
                            let x_row = &x_in[r * in_dim..(r + 1) * in_dim];
                            for (j, d) in d_row.iter().enumerate() {
                                let wg_row = &mut wg[j * in_dim..(j + 1) * in_dim];
                                for (g, x) in wg_row.iter_mut().zip(x_row) {
                                    *g += d * x;
                                }
                            }
                        }
                    }
                    d_cur = affine_input_grad(&d_cur, aff.weight.data(), n, out_dim, in_dim);
                }
                Layer::Relu => relu_input_grad(&mut d_cur, tape.outputs[idx].data()),
            }
        }
        Tensor::from_vec(&[n, self.input_dim], d_cur)
    }

    /// Like [`Network::backward`] but touches no parameter gradients; used
    /// when only the input gradient is wanted (query tuning).
    pub fn input_gradient(&self, tape: &Tape, d_logits: &Tensor) -> Result<Tensor> {
        self.check_upstream(tape, d_logits)?;
        let n = tape.input.rows();
        let mut d_cur = d_logits.data().to_vec();
        for idx in (0..self.layers.len()).rev() {
            match &self.layers[idx] {
                Layer::Affine(aff) => {
                    let out_dim = aff.weight.shape()[0];
                    let in_dim = aff.weight.shape()[1];
                    d_cur = affine_input_grad(&d_cur, aff.weight.data(), n, out_dim, in_dim);
                }
                Layer::Relu => relu_input_grad(&mut d_cur, tape.outputs[idx].data()),
            }
        }
        Tensor::from_vec(&[n, self.input_dim], d_cur)
    }

    fn check_upstream(&self, tape: &Tape, d_logits: &Tensor) -> Result<()> {
        let logits = tape.logits();
        if d_logits.shape() != logits.shape() {
            return Err(Error::shape(format!(
                "upstream gradient shape {:?} does not match logits shape {:?}",
                d_logits.shape(),
                logits.shape()
            )));
        }
        Ok(())
    }
}

fn affine_forward(x: &Tensor, aff: &AffineLayer, n: usize) -> Tensor {
    let out_dim = aff.weight.shape()[0];
    let in_dim = aff.weight.shape()[1];
    let w = aff.weight.data();
    let b = aff.bias.data();
    let xd = x.data();
    let mut out = vec![0.0; n * out_dim];
    for r in 0..n {
        let x_row = &xd[r * in_dim..(r + 1) * in_dim];
        let o_row = &mut out[r * out_dim..(r + 1) * out_dim];
        for j in 0..out_dim {
            let w_row = &w[j * in_dim..(j + 1) * in_dim];
            let mut acc = b[j];
            for (wv, xv) in w_row.iter().zip(x_row) {
                acc += wv * xv;
            }
            o_row[j] = acc;
        }
    }
    Tensor::from_vec(&[n, out_dim], out).expect("affine output dims consistent")
}

fn affine_input_grad(
    d_out: &[f64],
    w: &[f64],
    n: usize,
    out_dim: usize,
    in_dim: usize,
) -> Vec<f64> {
    let mut d_in = vec![0.0; n * in_dim];
    for r in 0..n {
        let d_row = &d_out[r * out_dim..(r + 1) * out_dim];
        let di_row = &mut d_in[r * in_dim..(r + 1) * in_dim];
        for (j, d) in d_row.iter().enumerate() {
            let w_row = &w[j * in_dim..(j + 1) * in_dim];
            for (g, wv) in di_row.iter_mut().zip(w_row) {
                *g += d * wv;
            }
        }
    }
    d_in
}

fn relu_input_grad(d_cur: &mut [f64], out: &[f64]) {
    for (d, o) in d_cur.iter_mut().zip(out) {
        if *o <= 0.0 {
            *d = 0.0;
        }
    }
}
