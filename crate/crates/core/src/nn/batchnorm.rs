use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{Buffer, Mode, Module, Parameter, Scalar};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-feature batch normalization over the batch axis.
#[derive(Clone, Debug)]
pub struct BatchNorm<F> {
    pub gamma: Parameter<F>,
    pub beta: Parameter<F>,
    pub running: RunningStats<F>,
}

/// Exponential moving averages of batch mean and variance.
#[derive(Clone, Debug)]
pub struct RunningStats<F> {
    pub mean: Buffer<F>,
    pub var: Buffer<F>,
}

impl<F: Scalar> RunningStats<F> {
    pub fn new(name: &str, dim: usize) -> Self {
        RunningStats {
            mean: Buffer::new(format!("{name}.running_mean"), Array2::zeros((1, dim))),
            var: Buffer::new(format!("{name}.running_var"), Array2::ones((1, dim))),
        }
    }

    /// Folds a train-mode batch's statistics in (momentum 0.1, unbiased
    /// variance).
    pub fn update(&mut self, cache: &BatchNormCache<F>) {
        let n = cache.rows as f64;
        let m = BN_MOMENTUM;
        for j in 0..self.mean.value.ncols() {
            let rm = &mut self.mean.value[[0, j]];
            *rm = F::of((1.0 - m) * rm.to64() + m * cache.mean[j]);
            let rv = &mut self.var.value[[0, j]];
            *rv = F::of((1.0 - m) * rv.to64() + m * cache.var[j] * n / (n - 1.0));
        }
    }

    pub fn buffers(&self) -> Vec<&Buffer<F>> {
        vec![&self.mean, &self.var]
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer<F>> {
        vec![&mut self.mean, &mut self.var]
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormCache<F> {
    xhat: Array2<F>,
    inv_std: Array1<F>,
    mean: Vec<f64>,
    var: Vec<f64>,
    rows: usize,
}

impl<F: Scalar> BatchNorm<F> {
    pub fn new(name: &str, dim: usize) -> Self {
        BatchNorm {
            gamma: Parameter::new(format!("{name}.gamma"), Array2::ones((1, dim))),
            beta: Parameter::new(format!("{name}.beta"), Array2::zeros((1, dim))),
            running: RunningStats::new(name, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.value.ncols()
    }

    /// Train mode normalizes with batch statistics; infer mode reads the
    /// running averages. Running averages change only through
    /// [`BatchNorm::update_running`].
    pub fn forward(&self, x: ArrayView2<F>, mode: Mode) -> Result<(Array2<F>, Option<BatchNormCache<F>>)> {
        match mode {
            Mode::Infer => Ok((self.infer(x), None)),
            Mode::Train => {
                let (y, cache) = self.train_forward(x)?;
                Ok((y, Some(cache)))
            }
        }
    }

    pub fn update_running(&mut self, cache: &BatchNormCache<F>) {
        self.running.update(cache);
    }

    fn train_forward(&self, x: ArrayView2<F>) -> Result<(Array2<F>, BatchNormCache<F>)> {
        let b = x.nrows();
        if b < 2 {
            return Err(Error::BatchTooSmall(b));
        }
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.ncols(),
                context: self.gamma.name.clone(),
            });
        }
        let d = self.dim();
        let mut mean = vec![0.0f64; d];
        let mut var = vec![0.0f64; d];
        for row in x.rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v.to64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= b as f64);
        for row in x.rows() {
            for j in 0..d {
                let c = row[j].to64() - mean[j];
                var[j] += c * c;
            }
        }
        var.iter_mut().for_each(|v| *v /= b as f64);

        let inv_std: Array1<F> = var.iter().map(|&v| F::of(1.0 / (v + BN_EPS).sqrt())).collect();
        let mean_f: Array1<F> = mean.iter().map(|&m| F::of(m)).collect();
        let xhat = (&x - &mean_f) * &inv_std;
        let y = &xhat * &self.gamma.value + &self.beta.value;
        Ok((
            y,
            BatchNormCache {
                xhat,
                inv_std,
                mean,
                var,
                rows: b,
            },
        ))
    }

    pub fn infer(&self, x: ArrayView2<F>) -> Array2<F> {
        self.infer_with(x, &self.running)
    }

    /// Inference with statistics kept outside the layer.
    pub fn infer_with(&self, x: ArrayView2<F>, stats: &RunningStats<F>) -> Array2<F> {
        let eps = F::of(BN_EPS);
        let scale = stats.var.value.mapv(|v| F::one() / (v + eps).sqrt()) * &self.gamma.value;
        (&x - &stats.mean.value) * &scale + &self.beta.value
    }

    pub fn backward(&mut self, cache: &BatchNormCache<F>, dy: ArrayView2<F>) -> Array2<F> {
        let b = F::of(dy.nrows() as f64);
        self.beta.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dy_xhat = &dy * &cache.xhat;
        self.gamma.grad += &dy_xhat.sum_axis(Axis(0)).insert_axis(Axis(0));

        let dxhat = &dy * &self.gamma.value;
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
        let scale = &cache.inv_std / b;
        (dxhat * b - &sum_dxhat - &cache.xhat * &sum_dxhat_xhat) * &scale
    }
}

impl<F: Scalar> Module<F> for BatchNorm<F> {
    fn params(&self) -> Vec<&Parameter<F>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<&Buffer<F>> {
        self.running.buffers()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<F>> {
        self.running.buffers_mut()
    }
}
