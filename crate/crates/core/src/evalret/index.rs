use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::{encode_text, EncodedExample, VocabSet};
use crate::error::{Error, Result};
use crate::framing;
use crate::models::{CodeSearchModel, EvalLayer};
use crate::nn::ops::{dot, norm_sq};

pub const INDEX_MAGIC: &[u8; 8] = b"CSINDX01";

/// Code embeddings of a repository, one row per snippet.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingIndex {
    pub ids: Vec<String>,
    pub matrix: Array2<f32>,
    pub layer: EvalLayer,
    pub model_digest: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    ids: Vec<String>,
    layer: EvalLayer,
    dim: usize,
    model_digest: String,
    data_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Hit {
    pub rank: usize,
    pub id: String,
    pub score: f64,
    /// Row in the index.
    pub row: usize,
}

/// Embeds every example at `layer`. Zero-norm rows are rejected since
/// they have no cosine with anything.
pub fn build_index(model: &CodeSearchModel<f32>, examples: &[EncodedExample], layer: EvalLayer) -> Result<EmbeddingIndex> {
    let refs: Vec<&EncodedExample> = examples.iter().collect();
    let matrix = model.encode_code(&refs, layer)?;
    for (r, row) in matrix.rows().into_iter().enumerate() {
        if norm_sq(row) == 0.0 {
            return Err(Error::DegenerateVector(format!("index row for {}", examples[r].id)));
        }
    }
    Ok(EmbeddingIndex {
        ids: examples.iter().map(|e| e.id.clone()).collect(),
        matrix,
        layer,
        model_digest: model.digest(),
    })
}

impl EmbeddingIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Top-`k` rows by cosine with the embedded query, score descending and
    /// id ascending among equal scores.
    pub fn query(&self, model: &CodeSearchModel<f32>, vocab: &VocabSet, text: &str, k: usize) -> Result<Vec<Hit>> {
        let digest = model.digest();
        if digest != self.model_digest {
            return Err(Error::DigestMismatch {
                expected: self.model_digest.clone(),
                actual: digest,
            });
        }
        let channel = encode_text(text, &vocab.text, model.config.max_lens.text);
        if channel.len == 0 {
            return Err(Error::EmptyQuery);
        }
        let q = model.encode_text(&[&channel], self.layer)?;
        self.search(q.row(0), k)
    }

    /// Top-`k` rows for an already embedded query.
    pub fn search(&self, q: ndarray::ArrayView1<f32>, k: usize) -> Result<Vec<Hit>> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: q.len(),
                context: "query embedding".into(),
            });
        }
        let qn = norm_sq(q).sqrt();
        if qn == 0.0 {
            return Err(Error::DegenerateVector("query embedding".into()));
        }
        let mut scored: Vec<(f64, usize)> = self
            .matrix
            .rows()
            .into_iter()
            .enumerate()
            .map(|(r, row)| ((dot(q, row) / (qn * norm_sq(row).sqrt())).clamp(-1.0, 1.0), r))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| self.ids[a.1].cmp(&self.ids[b.1])));
        Ok(scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, (score, row))| Hit {
                rank: i + 1,
                id: self.ids[row].clone(),
                score,
                row,
            })
            .collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut data = Vec::with_capacity(self.matrix.len() * 4);
        framing::push_f32(&mut data, &self.matrix);
        let header = Header {
            ids: self.ids.clone(),
            layer: self.layer,
            dim: self.dim(),
            model_digest: self.model_digest.clone(),
            data_sha256: framing::sha256_hex(&data),
        };
        framing::write(path.as_ref(), INDEX_MAGIC, &serde_json::to_vec(&header)?, &data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (header, data) = framing::read(path, INDEX_MAGIC)?;
        let header: Header =
            serde_json::from_slice(&header).map_err(|e| Error::corrupt(path, format!("bad header: {e}")))?;
        let actual = framing::sha256_hex(&data);
        if actual != header.data_sha256 {
            return Err(Error::DigestMismatch {
                expected: header.data_sha256,
                actual,
            });
        }
        let n = header.ids.len();
        if data.len() != n * header.dim * 4 {
            return Err(Error::corrupt(path, "data size does not match ids × dim"));
        }
        let matrix = framing::take_f32(&data, 0, [n, header.dim], path)?;
        Ok(EmbeddingIndex {
            ids: header.ids,
            matrix,
            layer: header.layer,
            model_digest: header.model_digest,
        })
    }
}
