//! Fully connected layers over a flat parameter buffer.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Silu,
    Tanh,
    Softplus,
    Relu,
}

impl Activation {
    pub fn code(self) -> u32 {
        match self {
            Activation::Silu => 0,
            Activation::Tanh => 1,
            Activation::Softplus => 2,
            Activation::Relu => 3,
        }
    }

    pub fn from_code(c: u32) -> Option<Self> {
        Some(match c {
            0 => Activation::Silu,
            1 => Activation::Tanh,
            2 => Activation::Softplus,
            3 => Activation::Relu,
            _ => return None,
        })
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x * sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Softplus => softplus(x),
            Activation::Relu => x.max(0.0),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Softplus => sigmoid(x),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Layer widths of one network and where its weights live in the buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayout {
    pub dims: Vec<usize>,
    /// Activate the output layer as well as the hidden ones.
    pub activate_output: bool,
    pub offset: usize,
}

impl MlpLayout {
    pub fn new(dims: Vec<usize>, activate_output: bool, offset: usize) -> Self {
        Self {
            dims,
            activate_output,
            offset,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Offsets of weight matrix and bias of layer `l`, relative to the buffer start.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut off = self.offset;
        for w in self.dims.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        (off, off + self.dims[l] * self.dims[l + 1])
    }

    fn activated(&self, l: usize) -> bool {
        l + 1 < self.n_layers() || self.activate_output
    }

    pub fn weights<'a>(&self, p: &'a [f64], l: usize) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let (wo, bo) = self.layer_offsets(l);
        let (i, o) = (self.dims[l], self.dims[l + 1]);
        (
            ArrayView2::from_shape((i, o), &p[wo..wo + i * o]).expect("layer shape"),
            ArrayView1::from(&p[bo..bo + o]),
        )
    }

    fn weights_mut<'a>(
        &self,
        p: &'a mut [f64],
        l: usize,
    ) -> (ArrayViewMut2<'a, f64>, ArrayViewMut1<'a, f64>) {
        let (wo, bo) = self.layer_offsets(l);
        let (i, o) = (self.dims[l], self.dims[l + 1]);
        let (head, tail) = p.split_at_mut(bo);
        (
            ArrayViewMut2::from_shape((i, o), &mut head[wo..wo + i * o]).expect("layer shape"),
            ArrayViewMut1::from(&mut tail[..o]),
        )
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// Input of every layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of every layer.
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

pub fn forward(layout: &MlpLayout, act: Activation, p: &[f64], x: Array2<f64>) -> MlpTrace {
    let mut inputs = Vec::with_capacity(layout.n_layers());
    let mut pre = Vec::with_capacity(layout.n_layers());
    let mut h = x;
    for l in 0..layout.n_layers() {
        let (w, b) = layout.weights(p, l);
        let z = h.dot(&w) + &b;
        let next = if layout.activated(l) {
            z.mapv(|v| act.apply(v))
        } else {
            z.clone()
        };
        inputs.push(h);
        pre.push(z);
        h = next;
    }
    MlpTrace {
        inputs,
        pre,
        output: h,
    }
}

/// Forward pass of a single row without keeping intermediates.
pub fn forward_row(layout: &MlpLayout, act: Activation, p: &[f64], x: &[f64]) -> Array1<f64> {
    let mut h = Array1::from(x.to_vec());
    for l in 0..layout.n_layers() {
        let (w, b) = layout.weights(p, l);
        let z = h.dot(&w) + &b;
        h = if layout.activated(l) {
            z.mapv(|v| act.apply(v))
        } else {
            z
        };
    }
    h
}

/// Accumulates parameter gradients into `grad` and returns the gradient
/// with respect to the network input.
pub fn backward(
    layout: &MlpLayout,
    act: Activation,
    p: &[f64],
    trace: &MlpTrace,
    d_out: Array2<f64>,
    grad: &mut [f64],
) -> Array2<f64> {
    let mut dh = d_out;
    for l in (0..layout.n_layers()).rev() {
        let dz = if layout.activated(l) {
            let mut d = dh;
            d.zip_mut_with(&trace.pre[l], |g, z| *g *= act.derivative(*z));
            d
        } else {
            dh
        };
        let (mut gw, mut gb) = layout.weights_mut(grad, l);
        gw += &trace.inputs[l].t().dot(&dz);
        gb += &dz.sum_axis(Axis(0));
        let (w, _) = layout.weights(p, l);
        dh = dz.dot(&w.t());
    }
    dh
}
