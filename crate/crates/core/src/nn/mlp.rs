use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::NnError;

/// Fully connected layer computing `x . w + b`; `w` is `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    /// PyTorch-style default init: both tensors uniform in `+-1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            w: Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound)),
            b: Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..bound)),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }
}

/// Multilayer perceptron: rectifier on hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations kept from a forward pass for the backward pass.
///
/// `activations[0]` is the input, `activations[i]` the (rectified) output of
/// layer `i - 1`; the last entry is the linear network output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds at least the input")
    }
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        Self {
            layers: widths.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    /// Layer widths, input first.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].fan_in()];
        w.extend(self.layers.iter().map(Dense::fan_out));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Dense::fan_out).unwrap_or(0)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameter tensors in a fixed order: `w0, b0, w1, b1, ...`.
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| {
            [
                l.w.as_slice().expect("standard layout"),
                l.b.as_slice().expect("standard layout"),
            ]
        })
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(|l| {
            [
                l.w.as_slice_mut().expect("standard layout"),
                l.b.as_slice_mut().expect("standard layout"),
            ]
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.num_params() {
            return Err(NnError::ShapeMismatch {
                expected: self.num_params(),
                found: flat.len(),
            });
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.w.dim() == b.w.dim() && a.b.dim() == b.b.dim())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> ForwardCache {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&layer.w);
            z += &layer.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            activations.push(z);
        }
        ForwardCache { activations }
    }

    /// Output only, no cache retained.
    pub fn predict(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.w);
            z += &layer.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        a
    }

    /// Reverse pass for upstream gradient `d_out` (batch x output).
    ///
    /// Parameter gradients are accumulated into `grads` when given. Returns the
    /// gradient with respect to the network input.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<f64>, mut grads: Option<&mut Mlp>) -> Array2<f64> {
        let mut d = d_out.to_owned();
        for i in (0..self.layers.len()).rev() {
            let input = &cache.activations[i];
            if let Some(g) = grads.as_deref_mut() {
                let gl = &mut g.layers[i];
                general_mat_mul(1.0, &input.t(), &d, 1.0, &mut gl.w);
                gl.b += &d.sum_axis(Axis(0));
            }
            let mut d_in = d.dot(&self.layers[i].w.t());
            if i > 0 {
                ndarray::Zip::from(&mut d_in).and(input).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            d = d_in;
        }
        d
    }
}

/// Elementwise `target <- tau * online + (1 - tau) * target`.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<(), NnError> {
    if !target.same_shape(online) {
        return Err(NnError::ShapeMismatch {
            expected: online.num_params(),
            found: target.num_params(),
        });
    }
    for (t, o) in target.tensors_mut().zip(online.tensors()) {
        for (tv, ov) in t.iter_mut().zip(o) {
            *tv = tau * ov + (1.0 - tau) * *tv;
        }
    }
    Ok(())
}
