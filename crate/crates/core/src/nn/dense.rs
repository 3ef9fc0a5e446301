use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis};

use super::{Init, Module, Parameter, Scalar};
use crate::error::{Error, Result};

/// Affine map `x·W + b` with `W: [in × out]`.
#[derive(Clone, Debug)]
pub struct Dense<F> {
    pub weight: Parameter<F>,
    pub bias: Parameter<F>,
}

impl<F: Scalar> Dense<F> {
    /// Weights and bias uniform in ±1/√in.
    pub fn new(name: &str, input: usize, output: usize, init: &mut Init) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Dense {
            weight: Parameter::new(format!("{name}.weight"), init.uniform(input, output, bound)),
            bias: Parameter::new(format!("{name}.bias"), init.uniform(1, output, bound)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
                context: self.weight.name.clone(),
            });
        }
        let mut y = x.dot(&self.weight.value);
        y += &self.bias.value;
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: ArrayView2<F>, dy: ArrayView2<F>) -> Array2<F> {
        general_mat_mul(F::one(), &x.t(), &dy, F::one(), &mut self.weight.grad);
        self.bias.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&self.weight.value.t())
    }
}

impl<F: Scalar> Module<F> for Dense<F> {
    fn params(&self) -> Vec<&Parameter<F>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub fn relu<F: Scalar>(x: ArrayView2<F>) -> Array2<F> {
    x.mapv(|v| if v > F::zero() { v } else { F::zero() })
}

/// Gradient through ReLU given its output.
pub fn relu_backward<F: Scalar>(y: ArrayView2<F>, dy: ArrayView2<F>) -> Array2<F> {
    let mut dx = dy.to_owned();
    dx.zip_mut_with(&y, |d, &out| {
        if out <= F::zero() {
            *d = F::zero();
        }
    });
    dx
}

pub fn tanh<F: Scalar>(x: ArrayView2<F>) -> Array2<F> {
    x.mapv(F::tanh)
}

/// Gradient through tanh given its output.
pub fn tanh_backward<F: Scalar>(y: ArrayView2<F>, dy: ArrayView2<F>) -> Array2<F> {
    let mut dx = dy.to_owned();
    dx.zip_mut_with(&y, |d, &out| *d *= F::one() - out * out);
    dx
}
