use rand::Rng;

use super::init_uniform;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    /// tanh approximation.
    Gelu,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::Gelu => {
                let c = (2.0 / std::f64::consts::PI).sqrt();
                0.5 * v * (1.0 + (c * (v + 0.044715 * v * v * v)).tanh())
            }
        }
    }
}

/// Affine map `y = W x + b` with `W` of shape `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.ndim() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::invalid(format!(
                "dense layer needs weight [out, in] and bias [out], got {:?} and {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weight: Tensor::zeros(&[outputs, inputs]), bias: Tensor::zeros(&[outputs]) }
    }

    pub fn seeded<R: Rng + ?Sized>(rng: &mut R, inputs: usize, outputs: usize) -> Self {
        Self {
            weight: init_uniform(rng, &[outputs, inputs], inputs),
            bias: init_uniform(rng, &[outputs], inputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Applies the layer to one input row, accumulating in `f64`.
    pub fn apply_f64(&self, x: &[f64], out: &mut [f64]) {
        let n_in = self.inputs();
        let w = self.weight.data();
        let b = self.bias.data();
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &w[o * n_in..(o + 1) * n_in];
            let mut acc = b[o] as f64;
            for (wi, xi) in row.iter().zip(x) {
                acc += *wi as f64 * xi;
            }
            *slot = acc;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<(Dense, Activation)>,
}

impl MlpParams {
    pub fn new(layers: Vec<(Dense, Activation)>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("an MLP needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].0.outputs() != pair[1].0.inputs() {
                return Err(Error::invalid(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].0.outputs(),
                    pair[1].0.inputs()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Layers of the given widths; `hidden` activation everywhere but the
    /// last layer, which is linear.
    pub fn seeded<R: Rng + ?Sized>(rng: &mut R, widths: &[usize], hidden: Activation) -> Self {
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { Activation::Identity } else { hidden };
                (Dense::seeded(rng, widths[i], widths[i + 1]), act)
            })
            .collect();
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].0.inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().unwrap().0.outputs()
    }

    pub fn forward_row(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for (dense, act) in &self.layers {
            let mut next = vec![0.0; dense.outputs()];
            dense.apply_f64(&cur, &mut next);
            for v in &mut next {
                *v = act.apply(*v);
            }
            cur = next;
        }
        cur
    }
}

/// Applies an MLP to each row of a `[N, C]` tensor.
pub fn mlp_forward(x: &Tensor, mlp: &MlpParams) -> Result<Tensor> {
    if x.ndim() != 2 || x.shape()[1] != mlp.inputs() {
        return Err(Error::invalid(format!("MLP expects [N, {}], got {:?}", mlp.inputs(), x.shape())));
    }
    let (n, c) = (x.shape()[0], x.shape()[1]);
    let mut out = Vec::with_capacity(n * mlp.outputs());
    for row in x.data().chunks(c) {
        let row: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        out.extend(mlp.forward_row(&row).into_iter().map(|v| v as f32));
    }
    let t = Tensor::from_vec(vec![n, mlp.outputs()], out);
    t.map_err(|_| Error::Numeric("MLP produced a non-finite value".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

impl LayerNormParams {
    pub fn identity(channels: usize) -> Self {
        Self { gamma: Tensor::filled(&[channels], 1.0), beta: Tensor::zeros(&[channels]), eps: 1e-5 }
    }
}

/// Per-token normalisation of a `[tokens, C]` tensor. A constant row maps
/// to zero before the affine step.
pub fn layer_norm(x: &Tensor, params: &LayerNormParams) -> Result<Tensor> {
    if x.ndim() != 2 {
        return Err(Error::invalid(format!("layer norm expects [tokens, C], got {:?}", x.shape())));
    }
    let c = x.shape()[1];
    if params.gamma.shape() != [c] || params.beta.shape() != [c] {
        return Err(Error::invalid("layer norm affine parameters do not match channels"));
    }
    if !(params.eps > 0.0) {
        return Err(Error::invalid("layer norm eps must be positive"));
    }
    let (g, b) = (params.gamma.data(), params.beta.data());
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks(c) {
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / c as f64;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / c as f64;
        let inv = if var == 0.0 { 0.0 } else { 1.0 / (var + params.eps).sqrt() };
        for (i, &v) in row.iter().enumerate() {
            let n = (v as f64 - mean) * inv;
            out.push((n * g[i] as f64 + b[i] as f64) as f32);
        }
    }
    Tensor::from_vec(x.shape().to_vec(), out)
}
