//! Training experiments on synthetic corpora: the overfit check and the
//! architecture comparison.

use std::time::{Duration, Instant};

use codesearch::corpus::{encode_all, split, EncodedExample, VocabSet};
use codesearch::evalret::{evaluate, EvalConfig};
use codesearch::models::{Arch, CodeSearchModel, EvalLayer, ModelConfig};
use codesearch::synthcorpus::{generate, SynthSpec};
use codesearch::trainer::{fit, train_epoch, TrainConfig, TrainState};

pub struct Overfit {
    /// First epoch at which the train-pool MRR reached the target.
    pub reached_at: Option<usize>,
    pub final_mrr: f64,
    pub elapsed: Duration,
}

/// Trains DCS (S_emb 100, cosine-contrastive, batch 16, default sizes) on a
/// noise-free 64-record corpus and evaluates the train pool at `layer` after
/// every epoch, stopping as soon as MRR reaches `target`.
pub fn overfit(seed: u64, layer: EvalLayer, target: f64, max_epochs: usize) -> Overfit {
    let start = Instant::now();
    let recs = generate(&SynthSpec::new(64, 64, 0.0, seed)).unwrap();
    let vocab = VocabSet::build(&recs, 1, 10_000);
    let mut cfg = ModelConfig::new(Arch::Dcs, 100, vocab.sizes());
    cfg.seed = seed;
    let data = encode_all(&recs, &vocab, &cfg.max_lens);
    let mut model = CodeSearchModel::<f32>::build(cfg).unwrap();
    let tc = TrainConfig {
        batch_size: 16,
        seed,
        ..TrainConfig::default()
    };
    let mut st = TrainState::new(&tc);
    let ec = EvalConfig::new(50, layer, seed);
    let mut mrr = 0.0;
    for epoch in 1..=max_epochs {
        train_epoch(&mut model, &data, &tc, &mut st).unwrap();
        st.epoch += 1;
        mrr = evaluate(&model, &data, &ec).unwrap().mrr;
        if mrr >= target {
            return Overfit {
                reached_at: Some(epoch),
                final_mrr: mrr,
                elapsed: start.elapsed(),
            };
        }
    }
    Overfit {
        reached_at: None,
        final_mrr: mrr,
        elapsed: start.elapsed(),
    }
}

pub struct Splits {
    pub train: Vec<EncodedExample>,
    pub valid: Vec<EncodedExample>,
    pub test: Vec<EncodedExample>,
    pub vocab: VocabSet,
}

/// 2000 records over 100 concepts at noise 0.2, split 80/10/10.
pub fn comparison_corpus(seed: u64) -> Splits {
    let recs = generate(&SynthSpec::new(2000, 100, 0.2, seed)).unwrap();
    let (tr, va, te) = split(&recs, (0.8, 0.1, 0.1), seed).unwrap();
    let vocab = VocabSet::build(&tr, 1, 10_000);
    let lens = ModelConfig::new(Arch::Dcs, 2, vocab.sizes()).max_lens;
    Splits {
        train: encode_all(&tr, &vocab, &lens),
        valid: encode_all(&va, &vocab, &lens),
        test: encode_all(&te, &vocab, &lens),
        vocab,
    }
}

/// Test MRR at each layer, each taken at the epoch whose validation MRR at
/// that same layer was highest.
#[derive(Clone, Copy, Debug)]
pub struct LayerScores {
    pub extraction: f64,
    pub siamese: f64,
}

/// Reduced sizes for the comparison runs: embedding 32 everywhere, LSTM
/// hidden 64 for DCS and 32 for the BiLSTM models.
pub fn comparison_config(arch: Arch, s_emb: usize, splits: &Splits, seed: u64) -> ModelConfig {
    let mut cfg = ModelConfig::new(arch, s_emb, splits.vocab.sizes());
    cfg.seed = seed;
    cfg.embed_dim = 32;
    cfg.lstm_hidden = if arch == Arch::Dcs { 64 } else { 32 };
    cfg
}

pub fn compare_run(arch: Arch, s_emb: usize, splits: &Splits, seed: u64, max_epochs: usize) -> LayerScores {
    let cfg = comparison_config(arch, s_emb, splits, seed);
    let mut model = CodeSearchModel::<f32>::build(cfg).unwrap();
    let primary = if arch == Arch::Dcs {
        EvalLayer::Extraction
    } else {
        EvalLayer::Siamese
    };
    let tc = TrainConfig {
        batch_size: 32,
        seed,
        max_epochs,
        validation_layer: primary,
        ..TrainConfig::default()
    };
    let mut st = TrainState::new(&tc);
    let layers = [EvalLayer::Extraction, EvalLayer::Siamese];
    // (best validation, test at that epoch) per layer
    let mut best = [(f64::NEG_INFINITY, 0.0); 2];
    let val_cfg = EvalConfig::new(50, primary, seed);
    fit(
        &mut model,
        &splits.train,
        &tc,
        &mut st,
        |m| Ok(evaluate(m, &splits.valid, &val_cfg)?.mrr),
        |_, m, _, _| {
            for (slot, layer) in best.iter_mut().zip(layers) {
                let v = evaluate(m, &splits.valid, &EvalConfig::new(50, layer, seed))?.mrr;
                if v > slot.0 {
                    let t = evaluate(m, &splits.test, &EvalConfig::new(50, layer, seed))?.mrr;
                    *slot = (v, t);
                }
            }
            Ok(())
        },
    )
    .unwrap();
    LayerScores {
        extraction: best[0].1,
        siamese: best[1].1,
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
