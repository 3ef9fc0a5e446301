use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{MaxLens, VocabSizes};
use crate::error::{Error, Result};
use crate::losses::LossConfig;

/// Extraction-network architecture on the code side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    /// BiLSTM over method-name subtokens.
    BilM,
    /// BiLSTM over the API call sequence.
    BilA,
    /// BiLSTM over the whole tokenized snippet.
    BilCs,
    /// Method name, API sequence and bag-of-words sub-networks fused by
    /// element-wise max pooling.
    Dcs,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::BilM, Arch::BilA, Arch::BilCs, Arch::Dcs];

    pub fn default_hidden(self) -> usize {
        match self {
            Arch::Dcs => 400,
            _ => 200,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::BilM => "bil_m",
            Arch::BilA => "bil_a",
            Arch::BilCs => "bil_cs",
            Arch::Dcs => "dcs",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "bil_m" => Ok(Arch::BilM),
            "bil_a" => Ok(Arch::BilA),
            "bil_cs" => Ok(Arch::BilCs),
            "dcs" => Ok(Arch::Dcs),
            _ => Err(Error::InvalidArgument(format!("unknown architecture {s:?}"))),
        }
    }
}

/// Which layer's output is used as the retrieval embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalLayer {
    Extraction,
    Siamese,
}

impl fmt::Display for EvalLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalLayer::Extraction => "extraction",
            EvalLayer::Siamese => "siamese",
        })
    }
}

impl FromStr for EvalLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extraction" => Ok(EvalLayer::Extraction),
            "siamese" => Ok(EvalLayer::Siamese),
            _ => Err(Error::InvalidArgument(format!("unknown layer {s:?}"))),
        }
    }
}

/// How the three DCS code sub-network outputs are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    #[default]
    MaxPool,
    /// Concatenation followed by a dense layer and tanh.
    ConcatDense,
}

pub const STANDARD_S_EMB: [usize; 3] = [2, 100, 200];

/// Everything needed to rebuild a network bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub embed_dim: usize,
    /// Per direction.
    pub lstm_hidden: usize,
    pub s_emb: usize,
    pub loss: LossConfig,
    pub max_lens: MaxLens,
    pub vocab_sizes: VocabSizes,
    #[serde(default)]
    pub fusion: Fusion,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(arch: Arch, s_emb: usize, vocab_sizes: VocabSizes) -> Self {
        ModelConfig {
            arch,
            embed_dim: 100,
            lstm_hidden: arch.default_hidden(),
            s_emb,
            loss: LossConfig::default(),
            max_lens: MaxLens::default(),
            vocab_sizes,
            fusion: Fusion::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("lstm_hidden", self.lstm_hidden),
            ("s_emb", self.s_emb),
            ("max_lens.name", self.max_lens.name),
            ("max_lens.api", self.max_lens.api),
            ("max_lens.tokens", self.max_lens.tokens),
            ("max_lens.text", self.max_lens.text),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        let v = &self.vocab_sizes;
        if [v.name, v.api, v.tokens, v.text].iter().any(|&n| n < 2) {
            return Err(Error::InvalidArgument(
                "vocabulary sizes must include the two reserved ids".into(),
            ));
        }
        self.loss.validate()
    }

    pub fn is_standard_s_emb(&self) -> bool {
        STANDARD_S_EMB.contains(&self.s_emb)
    }

    pub fn extraction_dim(&self) -> usize {
        2 * self.lstm_hidden
    }

    pub fn head_layer_sizes(&self) -> Vec<(usize, usize)> {
        head_layer_sizes(self.arch, self.extraction_dim(), self.s_emb)
    }

    pub fn output_dim(&self, layer: EvalLayer) -> usize {
        match layer {
            EvalLayer::Extraction => self.extraction_dim(),
            EvalLayer::Siamese => self.s_emb,
        }
    }
}

/// `(input, output)` sizes of the head's dense layers, last one linear.
///
/// Hidden sizes are `[extraction_dim if dcs] + [400, 300] + [200 if
/// s_emb ≤ 100] + [50 if s_emb < 50]`, followed by the `s_emb` output.
pub fn head_layer_sizes(arch: Arch, extraction_dim: usize, s_emb: usize) -> Vec<(usize, usize)> {
    let mut hidden = Vec::new();
    if arch == Arch::Dcs {
        hidden.push(extraction_dim);
    }
    hidden.extend([400, 300]);
    if s_emb <= 100 {
        hidden.push(200);
    }
    if s_emb < 50 {
        hidden.push(50);
    }
    let mut sizes = Vec::with_capacity(hidden.len() + 1);
    let mut input = extraction_dim;
    for h in hidden {
        sizes.push((input, h));
        input = h;
    }
    sizes.push((input, s_emb));
    sizes
}
