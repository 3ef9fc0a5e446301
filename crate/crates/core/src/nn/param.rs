use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Scalar;

/// A trainable tensor with its gradient and Adam moment estimates.
#[derive(Clone, Debug)]
pub struct Parameter<F> {
    pub name: String,
    pub value: Array2<F>,
    pub grad: Array2<F>,
    pub adam_m: Array2<F>,
    pub adam_v: Array2<F>,
}

impl<F: Scalar> Parameter<F> {
    pub fn new(name: impl Into<String>, value: Array2<F>) -> Self {
        let dim = value.raw_dim();
        Parameter {
            name: name.into(),
            value,
            grad: Array2::zeros(dim.clone()),
            adam_m: Array2::zeros(dim.clone()),
            adam_v: Array2::zeros(dim),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.value.nrows(), self.value.ncols()]
    }
}

/// Non-trainable state that must survive checkpointing (batchnorm running
/// statistics).
#[derive(Clone, Debug)]
pub struct Buffer<F> {
    pub name: String,
    pub value: Array2<F>,
}

impl<F: Scalar> Buffer<F> {
    pub fn new(name: impl Into<String>, value: Array2<F>) -> Self {
        Buffer {
            name: name.into(),
            value,
        }
    }
}

/// Anything that owns parameters. Iteration order is fixed and defines the
/// checkpoint tensor order.
pub trait Module<F: Scalar> {
    fn params(&self) -> Vec<&Parameter<F>>;
    fn params_mut(&mut self) -> Vec<&mut Parameter<F>>;

    fn buffers(&self) -> Vec<&Buffer<F>> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<F>> {
        Vec::new()
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_weights(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

/// Seeded source of initial parameter values. Values are drawn in `f64` and
/// cast, so `f32` and `f64` networks built from one seed agree up to
/// rounding.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform<F: Scalar>(&mut self, rows: usize, cols: usize, bound: f64) -> Array2<F> {
        Array2::from_shape_simple_fn((rows, cols), || F::of(self.rng.random_range(-bound..bound)))
    }

    pub fn normal<F: Scalar>(&mut self, rows: usize, cols: usize, std: f64) -> Array2<F> {
        let dist = Normal::new(0.0, std).expect("valid std");
        Array2::from_shape_simple_fn((rows, cols), || F::of(dist.sample(&mut self.rng)))
    }
}
