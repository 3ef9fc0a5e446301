//! Ranking oracles.

use codesearch::evalret::{evaluate_embeddings, rank_of_positive, EvalConfig};
use codesearch::models::EvalLayer;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::rng;

fn cos(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.dot(b) / (a.dot(a).sqrt() * b.dot(b).sqrt())
}

/// Rank by sorting every candidate by score, with the positive placed after
/// all candidates it ties with.
pub fn full_sort_rank(q: &Array1<f64>, pos: &Array1<f64>, ds: &[Array1<f64>]) -> usize {
    let mut scored: Vec<(f64, bool)> = ds.iter().map(|d| (cos(q, d), false)).collect();
    scored.push((cos(q, pos), true));
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.iter().position(|s| s.1).unwrap() + 1
}

/// Compares `rank_of_positive` with the sort oracle on `n` random pools.
/// Half the pools use coarse integer vectors so that ties occur.
pub fn rank_matches_oracle(n: usize, seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    for case in 0..n {
        let dim = r.random_range(2..8);
        let k = r.random_range(1..60);
        let coarse = case % 2 == 0;
        let mut draw = || -> Array1<f64> {
            Array1::from_shape_fn(dim, |_| {
                if coarse {
                    r.random_range(-2i32..=2) as f64
                } else {
                    StandardNormal.sample(&mut r)
                }
            })
        };
        let mut q = draw();
        while q.iter().all(|x| *x == 0.0) {
            q = draw();
        }
        let mut nonzero = || loop {
            let v = draw();
            if v.iter().any(|x| *x != 0.0) {
                return v;
            }
        };
        let pos = nonzero();
        let ds: Vec<Array1<f64>> = (0..k).map(|_| nonzero()).collect();
        let views: Vec<_> = ds.iter().map(|d| d.view()).collect();
        let got = rank_of_positive(q.view(), pos.view(), &views).map_err(|e| e.to_string())?;
        let want = full_sort_rank(&q, &pos, &ds);
        if got != want {
            return Err(format!("case {case}: rank {got}, oracle {want}"));
        }
    }
    Ok(())
}

/// MRR when every query equals its positive and all items are distinct
/// directions.
pub fn perfect_ranker_mrr(n: usize) -> f64 {
    let codes = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 } else { 0.0 });
    evaluate_embeddings(codes.view(), codes.view(), &EvalConfig::new(50, EvalLayer::Extraction, 3))
        .unwrap()
        .mrr
}

/// MRR of independent Gaussian code and query embeddings.
pub fn random_mrr(n: usize, pool: usize, dim: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut g = || Array2::from_shape_fn((n, dim), |_| StandardNormal.sample(&mut r));
    let codes: Array2<f64> = g();
    let texts: Array2<f64> = g();
    evaluate_embeddings(codes.view(), texts.view(), &EvalConfig::new(pool, EvalLayer::Extraction, seed))
        .unwrap()
        .mrr
}

/// `H_k / k`: the expected MRR of a uniformly random ranking of `k` items.
pub fn harmonic_baseline(k: usize) -> f64 {
    (1..=k).map(|i| 1.0 / i as f64).sum::<f64>() / k as f64
}
