use ndarray::{concatenate, s, Array2, Axis};

use super::config::{Arch, Fusion, ModelConfig};
use crate::corpus::{Channel, EncodedExample, PAD_ID};
use crate::error::{Error, Result};
use crate::nn::dense::{relu, relu_backward, tanh, tanh_backward};
use crate::nn::lstm::BiLstmCache;
use crate::nn::pool::{maxpool_elem, maxpool_elem_backward, maxpool_time, maxpool_time_backward, ArgMax};
use crate::nn::{BiLstm, Dense, Embedding, Init, Module, Parameter, Scalar};

/// Time-major id matrix for a batch of channels. An empty channel counts as
/// one pad step so every row has a state.
#[derive(Clone, Debug)]
pub struct SeqBatch {
    /// `ids[t * rows + r]`.
    pub ids: Vec<u32>,
    pub lens: Vec<usize>,
    pub steps: usize,
}

impl SeqBatch {
    pub fn new(channels: &[&Channel]) -> Self {
        let lens: Vec<usize> = channels.iter().map(|c| c.len.max(1)).collect();
        let steps = lens.iter().copied().max().unwrap_or(1);
        let rows = channels.len();
        let mut ids = vec![PAD_ID; steps * rows];
        for (r, c) in channels.iter().enumerate() {
            for (t, &id) in c.valid().iter().enumerate() {
                ids[t * rows + r] = id;
            }
        }
        SeqBatch { ids, lens, steps }
    }

    pub fn rows(&self) -> usize {
        self.lens.len()
    }
}

fn split_steps<F: Scalar>(all: &Array2<F>, steps: usize, rows: usize) -> Vec<Array2<F>> {
    (0..steps)
        .map(|t| all.slice(s![t * rows..(t + 1) * rows, ..]).to_owned())
        .collect()
}

fn stack_steps<F: Scalar>(parts: &[Array2<F>]) -> Array2<F> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(0), &views).expect("equal widths")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Readout {
    /// Forward state at the last real step and backward state at step 0.
    Last,
    /// Element-wise max over the real steps.
    MaxPool,
}

/// Embedding followed by a BiLSTM.
#[derive(Clone, Debug)]
pub struct SeqEncoder<F> {
    pub embed: Embedding<F>,
    pub lstm: BiLstm<F>,
    pub readout: Readout,
}

#[derive(Clone, Debug)]
pub struct SeqCache<F> {
    batch: SeqBatch,
    lstm: BiLstmCache<F>,
    pool: Option<ArgMax>,
}

impl<F: Scalar> SeqEncoder<F> {
    pub fn new(name: &str, vocab: usize, embed_dim: usize, hidden: usize, readout: Readout, init: &mut Init) -> Self {
        SeqEncoder {
            embed: Embedding::new(&format!("{name}.embed"), vocab, embed_dim, init),
            lstm: BiLstm::new(&format!("{name}.lstm"), embed_dim, hidden, init),
            readout,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.lstm.output_dim()
    }

    pub fn forward(&self, channels: &[&Channel]) -> Result<(Array2<F>, SeqCache<F>)> {
        let batch = SeqBatch::new(channels);
        let emb = self.embed.forward(&batch.ids)?;
        let xs = split_steps(&emb, batch.steps, batch.rows());
        let (out, lstm) = self.lstm.forward(&xs, &batch.lens)?;
        let (y, pool) = match self.readout {
            Readout::Last => (out.last, None),
            Readout::MaxPool => {
                let (y, arg) = maxpool_time(&out.states, &batch.lens)?;
                (y, Some(arg))
            }
        };
        Ok((y, SeqCache { batch, lstm, pool }))
    }

    pub fn backward(&mut self, cache: &SeqCache<F>, dy: &Array2<F>) {
        let dxs = match &cache.pool {
            None => self.lstm.backward(&cache.lstm, None, Some(dy.view())),
            Some(arg) => {
                let d_states = maxpool_time_backward(arg, dy);
                self.lstm.backward(&cache.lstm, Some(&d_states), None)
            }
        };
        let d_emb = stack_steps(&dxs);
        self.embed.backward(&cache.batch.ids, d_emb.view());
    }
}

impl<F: Scalar> Module<F> for SeqEncoder<F> {
    fn params(&self) -> Vec<&Parameter<F>> {
        let mut v = self.embed.params();
        v.extend(self.lstm.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        let mut v = self.embed.params_mut();
        v.extend(self.lstm.params_mut());
        v
    }
}

/// Per-token embedding, dense layer and ReLU, max-pooled over the tokens.
#[derive(Clone, Debug)]
pub struct BagEncoder<F> {
    pub embed: Embedding<F>,
    pub dense: Dense<F>,
}

#[derive(Clone, Debug)]
pub struct BagCache<F> {
    batch: SeqBatch,
    emb: Array2<F>,
    act: Array2<F>,
    pool: ArgMax,
}

impl<F: Scalar> BagEncoder<F> {
    pub fn new(name: &str, vocab: usize, embed_dim: usize, out: usize, init: &mut Init) -> Self {
        BagEncoder {
            embed: Embedding::new(&format!("{name}.embed"), vocab, embed_dim, init),
            dense: Dense::new(&format!("{name}.dense"), embed_dim, out, init),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.dense.output_dim()
    }

    pub fn forward(&self, channels: &[&Channel]) -> Result<(Array2<F>, BagCache<F>)> {
        let batch = SeqBatch::new(channels);
        let emb = self.embed.forward(&batch.ids)?;
        let act = relu(self.dense.forward(emb.view())?.view());
        let steps = split_steps(&act, batch.steps, batch.rows());
        let (y, pool) = maxpool_time(&steps, &batch.lens)?;
        Ok((y, BagCache { batch, emb, act, pool }))
    }

    pub fn backward(&mut self, cache: &BagCache<F>, dy: &Array2<F>) {
        let d_act = stack_steps(&maxpool_time_backward(&cache.pool, dy));
        let dz = relu_backward(cache.act.view(), d_act.view());
        let d_emb = self.dense.backward(cache.emb.view(), dz.view());
        self.embed.backward(&cache.batch.ids, d_emb.view());
    }
}

impl<F: Scalar> Module<F> for BagEncoder<F> {
    fn params(&self) -> Vec<&Parameter<F>> {
        let mut v = self.embed.params();
        v.extend(self.dense.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        let mut v = self.embed.params_mut();
        v.extend(self.dense.params_mut());
        v
    }
}

/// Which channel of an example a single-sequence extractor reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodeField {
    Name,
    Api,
    Code,
}

impl CodeField {
    fn channel(self, ex: &EncodedExample) -> &Channel {
        match self {
            CodeField::Name => &ex.name,
            CodeField::Api => &ex.api,
            CodeField::Code => &ex.code,
        }
    }
}

#[derive(Clone, Debug)]
pub enum CodeExtractor<F> {
    Seq {
        field: CodeField,
        enc: SeqEncoder<F>,
    },
    Dcs {
        name: SeqEncoder<F>,
        api: SeqEncoder<F>,
        bag: BagEncoder<F>,
        /// Present only for concatenation fusion.
        fuse: Option<Dense<F>>,
    },
}

#[derive(Clone, Debug)]
pub enum CodeCache<F> {
    Seq(SeqCache<F>),
    Dcs {
        name: SeqCache<F>,
        api: SeqCache<F>,
        bag: BagCache<F>,
        fuse: FuseCache<F>,
    },
}

#[derive(Clone, Debug)]
pub enum FuseCache<F> {
    Max(ArgMax),
    Concat { input: Array2<F>, output: Array2<F> },
}

impl<F: Scalar> CodeExtractor<F> {
    pub fn new(cfg: &ModelConfig, init: &mut Init) -> Self {
        let v = &cfg.vocab_sizes;
        let (e, h) = (cfg.embed_dim, cfg.lstm_hidden);
        let seq = |field, vocab, init: &mut Init| CodeExtractor::Seq {
            field,
            enc: SeqEncoder::new("code", vocab, e, h, Readout::Last, init),
        };
        match cfg.arch {
            Arch::BilM => seq(CodeField::Name, v.name, init),
            Arch::BilA => seq(CodeField::Api, v.api, init),
            Arch::BilCs => seq(CodeField::Code, v.tokens, init),
            Arch::Dcs => {
                let name = SeqEncoder::new("code.name", v.name, e, h, Readout::MaxPool, init);
                let api = SeqEncoder::new("code.api", v.api, e, h, Readout::MaxPool, init);
                let bag = BagEncoder::new("code.bag", v.tokens, e, 2 * h, init);
                let fuse = match cfg.fusion {
                    Fusion::MaxPool => None,
                    Fusion::ConcatDense => Some(Dense::new("code.fuse", 6 * h, 2 * h, init)),
                };
                CodeExtractor::Dcs { name, api, bag, fuse }
            }
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            CodeExtractor::Seq { enc, .. } => enc.output_dim(),
            CodeExtractor::Dcs { bag, .. } => bag.output_dim(),
        }
    }

    pub fn forward(&self, batch: &[&EncodedExample]) -> Result<(Array2<F>, CodeCache<F>)> {
        match self {
            CodeExtractor::Seq { field, enc } => {
                let channels: Vec<&Channel> = batch.iter().map(|ex| field.channel(ex)).collect();
                let (y, c) = enc.forward(&channels)?;
                Ok((y, CodeCache::Seq(c)))
            }
            CodeExtractor::Dcs { name, api, bag, fuse } => {
                let names: Vec<&Channel> = batch.iter().map(|ex| &ex.name).collect();
                let apis: Vec<&Channel> = batch.iter().map(|ex| &ex.api).collect();
                let bags: Vec<&Channel> = batch.iter().map(|ex| &ex.bag).collect();
                let (yn, cn) = name.forward(&names)?;
                let (ya, ca) = api.forward(&apis)?;
                let (yb, cb) = bag.forward(&bags)?;
                let (y, fc) = match fuse {
                    None => {
                        let (y, arg) = maxpool_elem(&[&yn, &ya, &yb])?;
                        (y, FuseCache::Max(arg))
                    }
                    Some(dense) => {
                        let input = concatenate![Axis(1), yn, ya, yb];
                        let output = tanh(dense.forward(input.view())?.view());
                        (output.clone(), FuseCache::Concat { input, output })
                    }
                };
                Ok((
                    y,
                    CodeCache::Dcs {
                        name: cn,
                        api: ca,
                        bag: cb,
                        fuse: fc,
                    },
                ))
            }
        }
    }

    pub fn backward(&mut self, cache: &CodeCache<F>, dy: &Array2<F>) -> Result<()> {
        match (self, cache) {
            (CodeExtractor::Seq { enc, .. }, CodeCache::Seq(c)) => enc.backward(c, dy),
            (
                CodeExtractor::Dcs { name, api, bag, fuse },
                CodeCache::Dcs {
                    name: cn,
                    api: ca,
                    bag: cb,
                    fuse: fc,
                },
            ) => {
                let parts = match (fuse, fc) {
                    (None, FuseCache::Max(arg)) => maxpool_elem_backward(arg, dy),
                    (Some(dense), FuseCache::Concat { input, output }) => {
                        let dz = tanh_backward(output.view(), dy.view());
                        let dx = dense.backward(input.view(), dz.view());
                        let d = dy.ncols();
                        (0..3).map(|k| dx.slice(s![.., k * d..(k + 1) * d]).to_owned()).collect()
                    }
                    _ => return Err(Error::InvalidArgument("fusion cache does not match the model".into())),
                };
                name.backward(cn, &parts[0]);
                api.backward(ca, &parts[1]);
                bag.backward(cb, &parts[2]);
            }
            _ => return Err(Error::InvalidArgument("extractor cache does not match the model".into())),
        }
        Ok(())
    }
}

impl<F: Scalar> Module<F> for CodeExtractor<F> {
    fn params(&self) -> Vec<&Parameter<F>> {
        match self {
            CodeExtractor::Seq { enc, .. } => enc.params(),
            CodeExtractor::Dcs { name, api, bag, fuse } => {
                let mut v = name.params();
                v.extend(api.params());
                v.extend(bag.params());
                if let Some(d) = fuse {
                    v.extend(d.params());
                }
                v
            }
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        match self {
            CodeExtractor::Seq { enc, .. } => enc.params_mut(),
            CodeExtractor::Dcs { name, api, bag, fuse } => {
                let mut v = name.params_mut();
                v.extend(api.params_mut());
                v.extend(bag.params_mut());
                if let Some(d) = fuse {
                    v.extend(d.params_mut());
                }
                v
            }
        }
    }
}

pub fn text_encoder<F: Scalar>(cfg: &ModelConfig, init: &mut Init) -> SeqEncoder<F> {
    let readout = match cfg.arch {
        Arch::Dcs => Readout::MaxPool,
        _ => Readout::Last,
    };
    SeqEncoder::new("text", cfg.vocab_sizes.text, cfg.embed_dim, cfg.lstm_hidden, readout, init)
}
