use ndarray::{Array2, ArrayView2};

use crate::error::Result;
use crate::nn::batchnorm::BatchNormCache;
use crate::nn::dense::{relu, relu_backward};
use crate::nn::{BatchNorm, Buffer, Dense, Init, Mode, Module, Parameter, RunningStats, Scalar};

/// Which side of the pair a head pass belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Code,
    Text,
}

/// Dense → ReLU → BatchNorm.
///
/// The batch-norm scale and shift are shared; the running statistics are
/// kept per branch (`bn.running` for code, `text_running` for text), since
/// in training each branch is normalized with its own batch statistics.
#[derive(Clone, Debug)]
pub struct HeadBlock<F> {
    pub dense: Dense<F>,
    pub bn: BatchNorm<F>,
    pub text_running: RunningStats<F>,
}

impl<F: Scalar> HeadBlock<F> {
    pub fn running(&self, branch: Branch) -> &RunningStats<F> {
        match branch {
            Branch::Code => &self.bn.running,
            Branch::Text => &self.text_running,
        }
    }

    fn running_mut(&mut self, branch: Branch) -> &mut RunningStats<F> {
        match branch {
            Branch::Code => &mut self.bn.running,
            Branch::Text => &mut self.text_running,
        }
    }
}

/// The weight-shared Siamese stack. A model owns exactly one and runs both
/// branches through it.
#[derive(Clone, Debug)]
pub struct SiameseHead<F> {
    pub blocks: Vec<HeadBlock<F>>,
    pub output: Dense<F>,
}

#[derive(Clone, Debug)]
pub struct HeadCache<F> {
    inputs: Vec<Array2<F>>,
    activations: Vec<Array2<F>>,
    bn: Vec<Option<BatchNormCache<F>>>,
    output_input: Array2<F>,
}

impl<F: Scalar> SiameseHead<F> {
    pub fn new(sizes: &[(usize, usize)], init: &mut Init) -> Self {
        let (&(out_in, out_dim), hidden) = sizes.split_last().expect("head has an output layer");
        let blocks = hidden
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| HeadBlock {
                dense: Dense::new(&format!("head.{i}.dense"), a, b, init),
                bn: BatchNorm::new(&format!("head.{i}.bn"), b),
                text_running: RunningStats::new(&format!("head.{i}.bn.text"), b),
            })
            .collect();
        SiameseHead {
            blocks,
            output: Dense::new("head.out", out_in, out_dim, init),
        }
    }

    pub fn layer_sizes(&self) -> Vec<(usize, usize)> {
        self.blocks
            .iter()
            .map(|b| &b.dense)
            .chain(std::iter::once(&self.output))
            .map(|d| (d.input_dim(), d.output_dim()))
            .collect()
    }

    /// Train mode uses batch statistics; infer mode the running statistics
    /// of `branch`.
    pub fn forward(&self, x: ArrayView2<F>, mode: Mode, branch: Branch) -> Result<(Array2<F>, HeadCache<F>)> {
        let mut cache = HeadCache {
            inputs: Vec::with_capacity(self.blocks.len()),
            activations: Vec::with_capacity(self.blocks.len()),
            bn: Vec::with_capacity(self.blocks.len()),
            output_input: Array2::zeros((0, 0)),
        };
        let mut h = x.to_owned();
        for block in &self.blocks {
            let z = block.dense.forward(h.view())?;
            let a = relu(z.view());
            let (y, bn_cache) = match mode {
                Mode::Train => block.bn.forward(a.view(), mode)?,
                Mode::Infer => (block.bn.infer_with(a.view(), block.running(branch)), None),
            };
            cache.inputs.push(h);
            cache.activations.push(a);
            cache.bn.push(bn_cache);
            h = y;
        }
        let out = self.output.forward(h.view())?;
        cache.output_input = h;
        Ok((out, cache))
    }

    pub fn update_running(&mut self, cache: &HeadCache<F>, branch: Branch) {
        for (block, bn) in self.blocks.iter_mut().zip(&cache.bn) {
            if let Some(c) = bn {
                block.running_mut(branch).update(c);
            }
        }
    }

    /// Requires a train-mode cache.
    pub fn backward(&mut self, cache: &HeadCache<F>, dy: ArrayView2<F>) -> Array2<F> {
        let mut d = self.output.backward(cache.output_input.view(), dy);
        for (i, block) in self.blocks.iter_mut().enumerate().rev() {
            let bn_cache = cache.bn[i].as_ref().expect("backward needs a train-mode forward");
            let da = block.bn.backward(bn_cache, d.view());
            let dz = relu_backward(cache.activations[i].view(), da.view());
            d = block.dense.backward(cache.inputs[i].view(), dz.view());
        }
        d
    }
}

impl<F: Scalar> Module<F> for SiameseHead<F> {
    fn params(&self) -> Vec<&Parameter<F>> {
        let mut v = Vec::new();
        for b in &self.blocks {
            v.extend(b.dense.params());
            v.extend(b.bn.params());
        }
        v.extend(self.output.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        let mut v = Vec::new();
        for b in &mut self.blocks {
            v.extend(b.dense.params_mut());
            v.extend(b.bn.params_mut());
        }
        v.extend(self.output.params_mut());
        v
    }

    fn buffers(&self) -> Vec<&Buffer<F>> {
        self.blocks
            .iter()
            .flat_map(|b| b.bn.buffers().into_iter().chain(b.text_running.buffers()))
            .collect()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<F>> {
        self.blocks
            .iter_mut()
            .flat_map(|b| {
                let HeadBlock { bn, text_running, .. } = b;
                bn.buffers_mut().into_iter().chain(text_running.buffers_mut())
            })
            .collect()
    }
}
