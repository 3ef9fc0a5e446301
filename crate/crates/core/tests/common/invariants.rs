//! Structural model invariants, measured on small random models.

use codesearch::corpus::{sample_pair_indices, EncodedExample};
use codesearch::losses::LossPlan;
use codesearch::models::{Arch, CodeSearchModel, EvalLayer};
use codesearch::nn::{adam_step, AdamConfig, Module};

use super::{examples, rng, small_config, small_lens, small_sizes, with_extra_padding};

/// Trains for `steps` Adam steps on random batches, then checks that the
/// code branch and the text branch read the same head storage and that the
/// head has actually moved.
pub fn weight_sharing(steps: usize) -> Result<(), String> {
    let mut cfg = small_config(Arch::Dcs, 2, 11);
    cfg.embed_dim = 8;
    cfg.lstm_hidden = 8;
    let mut model = CodeSearchModel::<f32>::build(cfg).map_err(|e| e.to_string())?;
    let initial: Vec<_> = model.code_branch_head().params().iter().map(|p| p.value.clone()).collect();
    let data = examples(12, 64, &small_sizes(), &small_lens());
    let mut r = rng(13);
    for step in 0..steps {
        let start = (step * 8) % data.len();
        let batch: Vec<&EncodedExample> = data[start..start + 8].iter().collect();
        let plan = LossPlan::Pairs(sample_pair_indices(batch.len(), &mut r).map_err(|e| e.to_string())?);
        model.loss_and_backward(&batch, &plan).map_err(|e| e.to_string())?;
        adam_step(&mut model.params_mut(), 1e-3, step as u64 + 1, &AdamConfig::default());
    }
    let code = model.code_branch_head();
    let text = model.text_branch_head();
    if !std::ptr::eq(code, text) {
        return Err("branches hold different head objects".into());
    }
    for (a, b) in code.params().iter().zip(text.params()) {
        if !std::ptr::eq(a.value.as_ptr(), b.value.as_ptr()) {
            return Err(format!("{} is stored twice", a.name));
        }
        if a.value.iter().zip(b.value.iter()).any(|(x, y)| x.to_bits() != y.to_bits()) {
            return Err(format!("{} differs between branches", a.name));
        }
    }
    let moved = code.params().iter().zip(&initial).any(|(p, v0)| p.value != *v0);
    if !moved {
        return Err("head parameters never changed".into());
    }
    Ok(())
}

/// Largest absolute difference, over `n` random examples and both layers,
/// between embeddings with and without `extra` trailing pad positions.
pub fn padding_max_diff(arch: Arch, n: usize, extra: usize, seed: u64) -> f64 {
    let mut cfg = small_config(arch, 100, seed);
    cfg.embed_dim = 8;
    cfg.lstm_hidden = 7;
    let mut model = CodeSearchModel::<f32>::build(cfg).unwrap();
    // A few training steps so the running statistics are not trivial.
    let warm = examples(seed + 1, 32, &small_sizes(), &small_lens());
    let mut r = rng(seed + 2);
    for (step, chunk) in warm.chunks(8).enumerate() {
        let batch: Vec<&EncodedExample> = chunk.iter().collect();
        let plan = LossPlan::Pairs(sample_pair_indices(batch.len(), &mut r).unwrap());
        model.loss_and_backward(&batch, &plan).unwrap();
        adam_step(&mut model.params_mut(), 1e-2, step as u64 + 1, &AdamConfig::default());
    }

    let plain = examples(seed + 3, n, &small_sizes(), &small_lens());
    let padded: Vec<EncodedExample> = plain.iter().map(|e| with_extra_padding(e, extra)).collect();
    let a: Vec<&EncodedExample> = plain.iter().collect();
    let b: Vec<&EncodedExample> = padded.iter().collect();
    let mut worst = 0.0f64;
    for layer in [EvalLayer::Extraction, EvalLayer::Siamese] {
        let pairs = [
            (model.encode_code(&a, layer).unwrap(), model.encode_code(&b, layer).unwrap()),
            (
                model.encode_text(&a.iter().map(|e| &e.text).collect::<Vec<_>>(), layer).unwrap(),
                model.encode_text(&b.iter().map(|e| &e.text).collect::<Vec<_>>(), layer).unwrap(),
            ),
        ];
        for (x, y) in &pairs {
            for (p, q) in x.iter().zip(y.iter()) {
                worst = worst.max((f64::from(*p) - f64::from(*q)).abs());
            }
        }
    }
    worst
}
