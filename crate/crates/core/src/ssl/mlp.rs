//! Dense ReLU network with an explicit backward pass.
//!
//! Generic over the float type so the same code path can be checked against
//! finite differences in `f64` and trained in `f32`.

use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar};
use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};

use crate::rng::Rng;

pub trait Scalar: LinalgScalar + Float + std::fmt::Debug + Send + Sync {}
impl<T: LinalgScalar + Float + std::fmt::Debug + Send + Sync> Scalar for T {}

/// `y = x·W + b` with `W` of shape `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Dense<F> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    /// He-normal weights, zero bias.
    pub fn he(input: usize, output: usize, rng: &mut Rng) -> Self {
        let std = (2.0 / input as f64).sqrt();
        let weight = Array2::from_shape_fn((input, output), |_| {
            let v: f64 = StandardNormal.sample(rng);
            F::from(v * std).expect("representable")
        });
        Self {
            weight,
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    fn forward(&self, x: &ArrayView2<F>) -> Array2<F> {
        x.dot(&self.weight) + &self.bias
    }
}

/// ReLU between layers, identity after the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    pub layers: Vec<Dense<F>>,
}

/// Activations kept from a forward pass for [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct MlpCache<F> {
    /// Input to each layer.
    inputs: Vec<Array2<F>>,
}

fn relu<F: Scalar>(v: F) -> F {
    if v > F::zero() {
        v
    } else {
        F::zero()
    }
}

impl<F: Scalar> Mlp<F> {
    /// Layer widths `dims[0] → dims[1] → … → dims[last]`.
    pub fn new(dims: &[usize], rng: &mut Rng) -> Self {
        assert!(dims.len() >= 2 && dims.iter().all(|&d| d >= 1), "invalid widths {dims:?}");
        Self {
            layers: dims.windows(2).map(|w| Dense::he(w[0], w[1], rng)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].input_dim()];
        d.extend(self.layers.iter().map(Dense::output_dim));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        let mut h = self.layers[0].forward(&x);
        for layer in &self.layers[1..] {
            h.mapv_inplace(relu);
            h = layer.forward(&h.view());
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<F>) -> (Array2<F>, MlpCache<F>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let out = layer.forward(&h.view());
            inputs.push(h);
            h = if i + 1 < self.layers.len() { out.mapv(relu) } else { out };
        }
        (h, MlpCache { inputs })
    }

    /// Returns parameter gradients and, if requested, the input gradient.
    pub fn backward(&self, cache: &MlpCache<F>, grad_out: Array2<F>, want_input_grad: bool) -> (Mlp<F>, Option<Array2<F>>) {
        let mut grads: Vec<Dense<F>> = Vec::with_capacity(self.layers.len());
        let mut g = grad_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            grads.push(Dense {
                weight: input.t().dot(&g),
                bias: g.sum_axis(Axis(0)),
            });
            if i == 0 && !want_input_grad {
                grads.reverse();
                return (Mlp { layers: grads }, None);
            }
            let mut gi = g.dot(&layer.weight.t());
            if i > 0 {
                // `input` is a ReLU output: its gradient vanishes where it is zero.
                gi.zip_mut_with(input, |gv, &iv| {
                    if iv <= F::zero() {
                        *gv = F::zero();
                    }
                });
            }
            g = gi;
        }
        grads.reverse();
        (Mlp { layers: grads }, Some(g))
    }

    /// Weight and bias buffers of every layer, in order.
    pub fn param_slices(&self) -> Vec<&[F]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn map<G: Scalar>(&self, f: impl Fn(F) -> G) -> Mlp<G> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: l.weight.mapv(&f),
                    bias: l.bias.mapv(&f),
                })
                .collect(),
        }
    }
}
