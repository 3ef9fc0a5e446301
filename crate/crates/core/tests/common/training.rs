//! Schedule and checkpoint oracles on small synthetic data.

use codesearch::corpus::{encode_all, EncodedExample, VocabSet};
use codesearch::evalret::{evaluate, EvalConfig};
use codesearch::models::{Arch, CodeSearchModel, EvalLayer, ModelConfig};
use codesearch::synthcorpus::{generate, SynthSpec};
use codesearch::trainer::{
    fit, load_checkpoint, save_checkpoint, train_epoch, ScheduleEvent, TrainConfig, TrainState,
};

pub struct Setup {
    pub model: CodeSearchModel<f32>,
    pub vocab: VocabSet,
    pub data: Vec<EncodedExample>,
}

pub fn setup(arch: Arch, n: usize, seed: u64) -> Setup {
    let recs = generate(&SynthSpec::new(n, (n / 8).max(1), 0.1, seed)).unwrap();
    let vocab = VocabSet::build(&recs, 1, 1000);
    let mut cfg = ModelConfig::new(arch, 100, vocab.sizes());
    cfg.embed_dim = 8;
    cfg.lstm_hidden = 6;
    cfg.seed = seed;
    let data = encode_all(&recs, &vocab, &cfg.max_lens);
    Setup {
        model: CodeSearchModel::build(cfg).unwrap(),
        vocab,
        data,
    }
}

/// Runs `fit` with a validator that never improves and checks the schedule:
/// a halving at every 40 stagnant epochs, learning rate `0.001 / 2^h`
/// bit-exact during each phase, exactly four halvings, stop at epoch 200.
pub fn never_improving_schedule() -> Result<(), String> {
    let mut s = setup(Arch::BilA, 6, 3);
    let cfg = TrainConfig {
        batch_size: 3,
        max_epochs: 1000,
        ..TrainConfig::default()
    };
    let mut state = TrainState::new(&cfg);
    let out = fit(&mut s.model, &s.data, &cfg, &mut state, |_| Ok(0.0), |_, _, _, _| Ok(())).map_err(|e| e.to_string())?;
    let h = &out.history;
    if h.len() != 200 {
        return Err(format!("stopped after {} epochs, expected 200", h.len()));
    }
    let halved: Vec<usize> = h.iter().filter(|r| r.event == ScheduleEvent::Halved).map(|r| r.epoch).collect();
    if halved != [40, 80, 120, 160] {
        return Err(format!("halvings at {halved:?}"));
    }
    if h.last().unwrap().event != ScheduleEvent::Stopped || !state.stopped {
        return Err("run did not stop at epoch 200".into());
    }
    for r in h {
        let phase = (r.epoch - 1) / 40;
        let want = 0.001 / 2f64.powi(phase as i32);
        if r.lr.to_bits() != want.to_bits() {
            return Err(format!("epoch {}: lr {} expected {want}", r.epoch, r.lr));
        }
        if r.event == ScheduleEvent::Improved {
            return Err(format!("epoch {} reported an improvement", r.epoch));
        }
    }
    if state.halvings_used != 4 {
        return Err(format!("{} halvings", state.halvings_used));
    }
    Ok(())
}

/// Trains briefly, then checks that a saved and reloaded checkpoint gives
/// the same evaluation report and re-saves to identical bytes.
pub fn checkpoint_round_trip(dir: &std::path::Path) -> Result<(), String> {
    let e = |e: codesearch::Error| e.to_string();
    let mut s = setup(Arch::Dcs, 48, 6);
    let cfg = TrainConfig {
        batch_size: 8,
        ..TrainConfig::default()
    };
    let mut state = TrainState::new(&cfg);
    for _ in 0..3 {
        train_epoch(&mut s.model, &s.data, &cfg, &mut state).map_err(e)?;
        state.epoch += 1;
    }
    let a = dir.join("a.ckpt");
    let b = dir.join("b.ckpt");
    save_checkpoint(&a, &s.model, &state, &s.vocab, Some(&cfg)).map_err(e)?;
    let loaded = load_checkpoint(&a).map_err(e)?;
    for layer in [EvalLayer::Extraction, EvalLayer::Siamese] {
        let ec = EvalConfig::new(50, layer, 2);
        let before = evaluate(&s.model, &s.data, &ec).map_err(e)?;
        let after = evaluate(&loaded.model, &s.data, &ec).map_err(e)?;
        if before != after {
            return Err(format!("{layer}: {before} became {after}"));
        }
    }
    if loaded.state != state || loaded.vocab != s.vocab || loaded.train.as_ref() != Some(&cfg) {
        return Err("state, vocabulary or configuration changed".into());
    }
    save_checkpoint(&b, &loaded.model, &loaded.state, &loaded.vocab, loaded.train.as_ref()).map_err(e)?;
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    if x != y {
        return Err("re-saved checkpoint differs".into());
    }
    Ok(())
}
