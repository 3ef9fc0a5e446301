//! Code and text extraction networks joined by a weight-shared Siamese
//! head.

mod config;
mod extractor;
mod head;

pub use config::{head_layer_sizes, Arch, EvalLayer, Fusion, ModelConfig, STANDARD_S_EMB};
pub use extractor::{BagEncoder, CodeCache, CodeExtractor, CodeField, Readout, SeqBatch, SeqCache, SeqEncoder};
pub use head::{Branch, HeadBlock, HeadCache, SiameseHead};

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::codefeat::Language;
use crate::corpus::{Channel, EncodedExample, RawRecord};
use crate::error::{Error, Result};
use crate::losses::{batch_loss, LossPlan};
use crate::nn::{Buffer, Init, Mode, Module, Parameter, Scalar};

/// Rows per inference chunk. Fixed so results do not depend on the thread
/// count.
pub const ENCODE_CHUNK: usize = 128;

/// Rejects architectures the corpus cannot feed.
pub fn ensure_supported(arch: Arch, language: Option<Language>, records: &[RawRecord]) -> Result<()> {
    if arch != Arch::BilM {
        return Ok(());
    }
    if language == Some(Language::Sql) {
        return Err(Error::Unsupported(
            "bil_m needs method names, which SQL snippets do not have".into(),
        ));
    }
    if !records.is_empty() && records.iter().all(|r| r.method_name.trim().is_empty()) {
        return Err(Error::Unsupported(
            "bil_m needs method names, but no record in the corpus has one".into(),
        ));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct CodeSearchModel<F> {
    pub config: ModelConfig,
    pub code: CodeExtractor<F>,
    pub text: SeqEncoder<F>,
    head: SiameseHead<F>,
}

/// Everything a training step keeps between forward and backward.
#[derive(Clone, Debug)]
pub struct StepCache<F> {
    code: CodeCache<F>,
    text: SeqCache<F>,
    code_head: HeadCache<F>,
    text_head: HeadCache<F>,
}

/// Outputs of both branches for one batch, at both layers.
#[derive(Clone, Debug)]
pub struct BranchOutputs<F> {
    pub code_extraction: Array2<F>,
    pub text_extraction: Array2<F>,
    pub code: Array2<F>,
    pub text: Array2<F>,
}

impl<F: Scalar> CodeSearchModel<F> {
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut init = Init::new(config.seed);
        let code = CodeExtractor::new(&config, &mut init);
        let text = extractor::text_encoder(&config, &mut init);
        let head = SiameseHead::new(&config.head_layer_sizes(), &mut init);
        Ok(CodeSearchModel { config, code, text, head })
    }

    pub fn code_branch_head(&self) -> &SiameseHead<F> {
        &self.head
    }

    pub fn text_branch_head(&self) -> &SiameseHead<F> {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut SiameseHead<F> {
        &mut self.head
    }

    pub fn extraction_dim(&self) -> usize {
        self.code.output_dim()
    }

    /// Train-mode forward through both branches. Batch statistics are taken
    /// per branch; running averages are left untouched.
    pub fn forward_train(&self, batch: &[&EncodedExample]) -> Result<(BranchOutputs<F>, StepCache<F>)> {
        let (xc, code) = self.code.forward(batch)?;
        let texts: Vec<&Channel> = batch.iter().map(|ex| &ex.text).collect();
        let (xt, text) = self.text.forward(&texts)?;
        let (uc, code_head) = self.head.forward(xc.view(), Mode::Train, Branch::Code)?;
        let (ut, text_head) = self.head.forward(xt.view(), Mode::Train, Branch::Text)?;
        Ok((
            BranchOutputs {
                code_extraction: xc,
                text_extraction: xt,
                code: uc,
                text: ut,
            },
            StepCache {
                code,
                text,
                code_head,
                text_head,
            },
        ))
    }

    /// Backward from gradients w.r.t. the two head outputs. Accumulates into
    /// the parameter gradients.
    pub fn backward(&mut self, cache: &StepCache<F>, d_code: &Array2<F>, d_text: &Array2<F>) -> Result<()> {
        let dxc = self.head.backward(&cache.code_head, d_code.view());
        let dxt = self.head.backward(&cache.text_head, d_text.view());
        self.code.backward(&cache.code, &dxc)?;
        self.text.backward(&cache.text, &dxt);
        Ok(())
    }

    /// Folds each branch's batch statistics into that branch's running
    /// averages.
    pub fn commit_batch_stats(&mut self, cache: &StepCache<F>) {
        self.head.update_running(&cache.code_head, Branch::Code);
        self.head.update_running(&cache.text_head, Branch::Text);
    }

    /// Mean loss over `plan` without touching gradients or statistics.
    pub fn loss_only(&self, batch: &[&EncodedExample], plan: &LossPlan) -> Result<f64> {
        let (out, _) = self.forward_train(batch)?;
        let (loss, _, _) = batch_loss(&self.config.loss, out.code.view(), out.text.view(), plan)?;
        Ok(loss)
    }

    /// Zeroes gradients, runs forward and backward, and commits batch
    /// statistics. Returns the mean loss; a non-finite loss is returned
    /// without running backward.
    pub fn loss_and_backward(&mut self, batch: &[&EncodedExample], plan: &LossPlan) -> Result<f64> {
        self.zero_grad();
        let (out, cache) = self.forward_train(batch)?;
        let (loss, du, dv) = batch_loss(&self.config.loss, out.code.view(), out.text.view(), plan)?;
        if !loss.is_finite() {
            return Ok(loss);
        }
        self.backward(&cache, &du, &dv)?;
        self.commit_batch_stats(&cache);
        Ok(loss)
    }

    /// Same as [`loss_and_backward`](Self::loss_and_backward) but leaves the
    /// running statistics alone, so repeated calls see the same model.
    pub fn loss_and_grad_frozen(&mut self, batch: &[&EncodedExample], plan: &LossPlan) -> Result<f64> {
        self.zero_grad();
        let (out, cache) = self.forward_train(batch)?;
        let (loss, du, dv) = batch_loss(&self.config.loss, out.code.view(), out.text.view(), plan)?;
        self.backward(&cache, &du, &dv)?;
        Ok(loss)
    }

    fn infer_head(&self, x: Array2<F>, layer: EvalLayer, branch: Branch) -> Result<Array2<F>> {
        match layer {
            EvalLayer::Extraction => Ok(x),
            EvalLayer::Siamese => Ok(self.head.forward(x.view(), Mode::Infer, branch)?.0),
        }
    }

    fn encode_chunks<T: Sync>(
        &self,
        items: &[T],
        dim: usize,
        f: impl Fn(&[T]) -> Result<Array2<F>> + Sync,
    ) -> Result<Array2<F>> {
        if items.is_empty() {
            return Ok(Array2::zeros((0, dim)));
        }
        let parts = items
            .par_chunks(ENCODE_CHUNK)
            .map(&f)
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        Ok(concatenate(Axis(0), &views).expect("equal widths"))
    }

    /// Inference-mode code embeddings, one row per example.
    pub fn encode_code(&self, examples: &[&EncodedExample], layer: EvalLayer) -> Result<Array2<F>> {
        self.encode_chunks(examples, self.config.output_dim(layer), |chunk| {
            let (x, _) = self.code.forward(chunk)?;
            self.infer_head(x, layer, Branch::Code)
        })
    }

    /// Inference-mode text embeddings, one row per channel.
    pub fn encode_text(&self, texts: &[&Channel], layer: EvalLayer) -> Result<Array2<F>> {
        self.encode_chunks(texts, self.config.output_dim(layer), |chunk| {
            let (x, _) = self.text.forward(chunk)?;
            self.infer_head(x, layer, Branch::Text)
        })
    }

    /// Copy with every tensor converted to another scalar type.
    pub fn cast<G: Scalar>(&self) -> CodeSearchModel<G> {
        let mut out = CodeSearchModel::<G>::build(self.config.clone()).expect("config already validated");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            dst.value = src.value.mapv(|v| G::of(v.to64()));
            dst.grad = src.grad.mapv(|v| G::of(v.to64()));
            dst.adam_m = src.adam_m.mapv(|v| G::of(v.to64()));
            dst.adam_v = src.adam_v.mapv(|v| G::of(v.to64()));
        }
        for (dst, src) in out.buffers_mut().into_iter().zip(self.buffers()) {
            dst.value = src.value.mapv(|v| G::of(v.to64()));
        }
        out
    }

    /// SHA-256 over the configuration and the `f32` bytes of every
    /// parameter value and buffer.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.config).expect("config serializes"));
        let values = self.params().into_iter().map(|p| &p.value);
        let buffers = self.buffers().into_iter().map(|b| &b.value);
        for t in values.chain(buffers) {
            for v in t.iter() {
                h.update((v.to64() as f32).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

impl<F: Scalar> Module<F> for CodeSearchModel<F> {
    fn params(&self) -> Vec<&Parameter<F>> {
        let mut v = self.code.params();
        v.extend(self.text.params());
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        let mut v = self.code.params_mut();
        v.extend(self.text.params_mut());
        v.extend(self.head.params_mut());
        v
    }

    fn buffers(&self) -> Vec<&Buffer<F>> {
        self.head.buffers()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<F>> {
        self.head.buffers_mut()
    }
}
