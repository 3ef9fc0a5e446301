#![allow(dead_code)]
pub mod experiments;
pub mod golden;
pub mod gradcases;
pub mod invariants;
pub mod retrieval;
pub mod training;

use codesearch::corpus::{Channel, EncodedExample, MaxLens, VocabSizes, PAD_ID};
use codesearch::models::{Arch, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn channel(rng: &mut impl Rng, vocab: usize, max_len: usize, min_len: usize) -> Channel {
    let len = rng.random_range(min_len..=max_len);
    let mut ids: Vec<u32> = (0..len).map(|_| rng.random_range(2..vocab as u32)).collect();
    ids.resize(max_len, PAD_ID);
    Channel { ids, len }
}

pub fn example(rng: &mut impl Rng, id: usize, sizes: &VocabSizes, lens: &MaxLens) -> EncodedExample {
    let code = channel(rng, sizes.tokens, lens.tokens, 1);
    let mut seen = std::collections::HashSet::new();
    let mut bag: Vec<u32> = code.valid().iter().copied().filter(|t| seen.insert(*t)).collect();
    let bag_len = bag.len();
    bag.resize(lens.tokens, PAD_ID);
    EncodedExample {
        id: format!("r{id}"),
        name: channel(rng, sizes.name, lens.name, 1),
        api: channel(rng, sizes.api, lens.api, 0),
        bag: Channel { ids: bag, len: bag_len },
        code,
        text: channel(rng, sizes.text, lens.text, 1),
    }
}

pub fn examples(seed: u64, n: usize, sizes: &VocabSizes, lens: &MaxLens) -> Vec<EncodedExample> {
    let mut r = rng(seed);
    (0..n).map(|i| example(&mut r, i, sizes, lens)).collect()
}

pub fn small_sizes() -> VocabSizes {
    VocabSizes {
        name: 12,
        api: 15,
        tokens: 20,
        text: 18,
    }
}

pub fn small_lens() -> MaxLens {
    MaxLens {
        name: 3,
        api: 5,
        tokens: 6,
        text: 5,
    }
}

/// A model configuration small enough for finite-difference checks.
pub fn small_config(arch: Arch, s_emb: usize, seed: u64) -> ModelConfig {
    let mut cfg = ModelConfig::new(arch, s_emb, small_sizes());
    cfg.embed_dim = 6;
    cfg.lstm_hidden = 5;
    cfg.max_lens = small_lens();
    cfg.seed = seed;
    cfg
}

/// Pads every channel of `ex` with `extra` more pad ids.
pub fn with_extra_padding(ex: &EncodedExample, extra: usize) -> EncodedExample {
    let pad = |c: &Channel| {
        let mut ids = c.ids.clone();
        ids.extend(std::iter::repeat_n(PAD_ID, extra));
        Channel { ids, len: c.len }
    };
    EncodedExample {
        id: ex.id.clone(),
        name: pad(&ex.name),
        api: pad(&ex.api),
        bag: pad(&ex.bag),
        code: pad(&ex.code),
        text: pad(&ex.text),
    }
}
