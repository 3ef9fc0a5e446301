//! Retrieval evaluation: mean reciprocal rank over sampled candidate pools,
//! the embedding index with top-k query, and embedding export.

mod export;
mod index;

pub use export::{export_embeddings, pca_2d, Pca2, Side};
pub use index::{build_index, EmbeddingIndex, Hit, INDEX_MAGIC};

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Channel, EncodedExample};
use crate::error::{Error, Result};
use crate::models::{CodeSearchModel, EvalLayer};
use crate::nn::{cosine, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub pool_size: usize,
    pub layer: EvalLayer,
    pub seed: u64,
    pub success_at: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            pool_size: 50,
            layer: EvalLayer::Extraction,
            seed: 0,
            success_at: vec![1, 5, 10],
        }
    }
}

impl EvalConfig {
    /// Default cutoffs that fit in the pool.
    pub fn new(pool_size: usize, layer: EvalLayer, seed: u64) -> Self {
        EvalConfig {
            pool_size,
            layer,
            seed,
            success_at: [1, 5, 10].into_iter().filter(|&k| k <= pool_size).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_size < 2 {
            return Err(Error::InvalidArgument("pool size must be at least 2".into()));
        }
        if let Some(k) = self.success_at.iter().find(|&&k| k == 0 || k > self.pool_size) {
            return Err(Error::InvalidArgument(format!(
                "success@{k} outside 1..={}",
                self.pool_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mrr: f64,
    pub success_at_k: BTreeMap<usize, f64>,
    pub n_queries: usize,
    pub layer: EvalLayer,
    /// Pool size actually used; smaller than requested when the test set is.
    pub pool_size: usize,
    pub seed: u64,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "layer={} mrr={:.6} n_queries={} pool_size={} seed={}",
            self.layer, self.mrr, self.n_queries, self.pool_size, self.seed
        )?;
        for (k, v) in &self.success_at_k {
            write!(f, " success@{k}={v:.6}")?;
        }
        Ok(())
    }
}

/// `1 +` the number of distractors whose cosine with the query is at least
/// the positive's: ties count against the positive.
pub fn rank_of_positive<F: Scalar>(
    query: ArrayView1<F>,
    positive: ArrayView1<F>,
    distractors: &[ArrayView1<F>],
) -> Result<usize> {
    let target = cosine(query, positive)?;
    let mut rank = 1;
    for d in distractors {
        if cosine(query, *d)? >= target {
            rank += 1;
        }
    }
    Ok(rank)
}

/// Mean of `1/rank`, and the fraction of ranks within each cutoff.
pub fn summarize(ranks: &[usize], success_at: &[usize]) -> (f64, BTreeMap<usize, f64>) {
    let n = ranks.len() as f64;
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    let success = success_at
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect();
    (mrr, success)
}

/// Generator for query `i`'s distractor sample.
fn query_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// Distractor indices for query `i` among `n` items: `k` distinct indices
/// other than `i`, uniformly at random.
pub fn distractors_for(i: usize, n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = query_rng(seed, i);
    sample(&mut rng, n - 1, k)
        .into_iter()
        .map(|j| if j >= i { j + 1 } else { j })
        .collect()
}

/// Evaluates precomputed embeddings: row `i` of `texts` is the query whose
/// positive is row `i` of `codes`.
pub fn evaluate_embeddings<F: Scalar>(
    codes: ArrayView2<F>,
    texts: ArrayView2<F>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let n = codes.nrows();
    if texts.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: texts.nrows(),
            context: "query rows vs code rows".into(),
        });
    }
    if n < 2 {
        return Err(Error::InvalidArgument("evaluation needs at least 2 pairs".into()));
    }
    let pool = cfg.pool_size.min(n);
    if pool < cfg.pool_size {
        log::warn!("test set has {n} pairs; pool size reduced from {} to {pool}", cfg.pool_size);
    }
    let ranks = (0..n)
        .into_par_iter()
        .map(|i| {
            let others = distractors_for(i, n, pool - 1, cfg.seed);
            let views: Vec<_> = others.iter().map(|&j| codes.row(j)).collect();
            rank_of_positive(texts.row(i), codes.row(i), &views)
        })
        .collect::<Result<Vec<usize>>>()?;
    let cutoffs: Vec<usize> = cfg.success_at.iter().copied().filter(|&k| k <= pool).collect();
    let (mrr, success_at_k) = summarize(&ranks, &cutoffs);
    Ok(EvalReport {
        mrr,
        success_at_k,
        n_queries: n,
        layer: cfg.layer,
        pool_size: pool,
        seed: cfg.seed,
    })
}

/// Embeds every test pair at the configured layer in inference mode and
/// ranks each query's positive within its pool.
pub fn evaluate<F: Scalar>(model: &CodeSearchModel<F>, test: &[EncodedExample], cfg: &EvalConfig) -> Result<EvalReport> {
    let refs: Vec<&EncodedExample> = test.iter().collect();
    let texts: Vec<&Channel> = test.iter().map(|e| &e.text).collect();
    let codes = model.encode_code(&refs, cfg.layer)?;
    let queries = model.encode_text(&texts, cfg.layer)?;
    evaluate_embeddings(codes.view(), queries.view(), cfg)
}
