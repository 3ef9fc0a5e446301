//! Corpus ingestion, per-field vocabularies, encoding into padded id
//! sequences, deterministic splitting and in-batch negative sampling.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codefeat::{
    extract_api_sequence, extract_method_name, split_identifier, tokenize_code, tokenize_text, LanguageProfile,
};
use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// One code/description pair as stored in a corpus file.
///
/// After preprocessing, `method_name` holds space-separated lowercase
/// subtokens and `api_seq`/`tokens` hold subtoken lists.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub code: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub method_name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub api_seq: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<String>,
    pub text: String,
    /// Optional grouping label, carried into embedding exports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl RawRecord {
    pub fn has_code_features(&self) -> bool {
        !(self.code.is_empty()
            && self.method_name.is_empty()
            && self.api_seq.is_empty()
            && self.tokens.is_empty())
    }

    pub fn field_tokens(&self, field: Field) -> Vec<String> {
        match field {
            Field::Name => self
                .method_name
                .split_whitespace()
                .flat_map(split_identifier)
                .collect(),
            Field::Api => self.api_seq.iter().flat_map(|s| split_identifier(s)).collect(),
            Field::Tokens => self.tokens.iter().flat_map(|s| split_identifier(s)).collect(),
            Field::Text => tokenize_text(&self.text),
        }
    }
}

/// Fills the code feature fields from `code`. Fields are left as they are
/// when there is no code. Returns whether a method name was found.
pub fn enrich(record: &mut RawRecord, profile: &LanguageProfile) -> bool {
    if record.code.is_empty() {
        return !record.method_name.is_empty();
    }
    record.method_name = extract_method_name(&record.code, profile)
        .map(|parts| parts.join(" "))
        .unwrap_or_default();
    record.api_seq = extract_api_sequence(&record.code, profile);
    record.tokens = tokenize_code(&record.code, profile);
    !record.method_name.is_empty()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Name,
    Api,
    Tokens,
    Text,
}

impl Field {
    pub const ALL: [Field; 4] = [Field::Name, Field::Api, Field::Tokens, Field::Text];
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::Name => "name",
            Field::Api => "api",
            Field::Tokens => "tokens",
            Field::Text => "text",
        })
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "name" => Ok(Field::Name),
            "api" => Ok(Field::Api),
            "tokens" => Ok(Field::Tokens),
            "text" => Ok(Field::Text),
            other => Err(Error::InvalidArgument(format!("unknown field {other:?}"))),
        }
    }
}

/// Reads a line-delimited corpus. Blank lines and lines starting with `#`
/// are skipped; line numbers in errors are 1-based physical lines.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<RawRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let record: RawRecord = serde_json::from_str(trimmed).map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if record.id.is_empty() {
            return Err(Error::Malformed {
                line: line_no,
                message: "empty id".into(),
            });
        }
        if record.text.trim().is_empty() {
            return Err(Error::Malformed {
                line: line_no,
                message: "empty text".into(),
            });
        }
        if !record.has_code_features() {
            return Err(Error::Malformed {
                line: line_no,
                message: "record has none of code, method_name, api_seq, tokens".into(),
            });
        }
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId {
                id: record.id,
                line: line_no,
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Writes records one per line, optionally preceded by a `#` header line.
pub fn write_jsonl(path: impl AsRef<Path>, header: Option<&str>, records: &[RawRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    if let Some(h) = header {
        for line in h.lines() {
            writeln!(out, "# {line}").expect("write to vec");
        }
    }
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Token to id mapping for one field. Ids 0 and 1 are reserved for padding
/// and unknown tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    pub min_freq: usize,
    pub max_size: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    min_freq: usize,
    max_size: usize,
    tokens: BTreeMap<String, u32>,
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile {
            min_freq: v.min_freq,
            max_size: v.max_size,
            tokens: v.token_to_id.into_iter().collect(),
        }
    }
}

impl TryFrom<VocabFile> for Vocabulary {
    type Error = String;

    fn try_from(f: VocabFile) -> std::result::Result<Self, String> {
        let n = f.tokens.len();
        let mut id_to_token = vec![String::new(); n + 2];
        id_to_token[PAD_ID as usize] = PAD_TOKEN.into();
        id_to_token[UNK_ID as usize] = UNK_TOKEN.into();
        for (tok, &id) in &f.tokens {
            let idx = id as usize;
            if idx < 2 || idx >= n + 2 || !id_to_token[idx].is_empty() {
                return Err(format!("vocabulary id {id} for {tok:?} is reserved, out of range or repeated"));
            }
            id_to_token[idx] = tok.clone();
        }
        Ok(Vocabulary {
            token_to_id: f.tokens.into_iter().collect(),
            id_to_token,
            min_freq: f.min_freq,
            max_size: f.max_size,
        })
    }
}

impl Vocabulary {
    /// Builds a vocabulary from token counts: tokens with count at least
    /// `min_freq`, ordered by count descending then token ascending, capped
    /// at `max_size` entries.
    pub fn from_counts(counts: &HashMap<String, usize>, min_freq: usize, max_size: usize) -> Self {
        let mut kept: Vec<(&String, usize)> = counts
            .iter()
            .filter(|(_, &c)| c >= min_freq)
            .map(|(t, &c)| (t, c))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        kept.truncate(max_size);

        let mut id_to_token = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut token_to_id = HashMap::with_capacity(kept.len());
        for (tok, _) in kept {
            token_to_id.insert(tok.clone(), id_to_token.len() as u32);
            id_to_token.push(tok.clone());
        }
        Vocabulary {
            token_to_id,
            id_to_token,
            min_freq,
            max_size,
        }
    }

    /// Number of ids including the two reserved ones.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.len() <= 2
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }
}

pub fn build_vocab(records: &[RawRecord], field: Field, min_freq: usize, max_size: usize) -> Vocabulary {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for r in records {
        for t in r.field_tokens(field) {
            *counts.entry(t).or_default() += 1;
        }
    }
    Vocabulary::from_counts(&counts, min_freq, max_size)
}

/// The four per-field vocabularies, stored together in one file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSet {
    pub name: Vocabulary,
    pub api: Vocabulary,
    pub tokens: Vocabulary,
    pub text: Vocabulary,
}

impl VocabSet {
    pub fn build(records: &[RawRecord], min_freq: usize, max_size: usize) -> Self {
        VocabSet {
            name: build_vocab(records, Field::Name, min_freq, max_size),
            api: build_vocab(records, Field::Api, min_freq, max_size),
            tokens: build_vocab(records, Field::Tokens, min_freq, max_size),
            text: build_vocab(records, Field::Text, min_freq, max_size),
        }
    }

    pub fn field(&self, field: Field) -> &Vocabulary {
        match field {
            Field::Name => &self.name,
            Field::Api => &self.api,
            Field::Tokens => &self.tokens,
            Field::Text => &self.text,
        }
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("vocabulary serializes")
    }

    /// SHA-256 of the canonical serialized form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json_bytes()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn sizes(&self) -> VocabSizes {
        VocabSizes {
            name: self.name.len(),
            api: self.api.len(),
            tokens: self.tokens.len(),
            text: self.text.len(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSizes {
    pub name: usize,
    pub api: usize,
    pub tokens: usize,
    pub text: usize,
}

/// Padded sequence lengths per field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxLens {
    pub name: usize,
    pub api: usize,
    pub tokens: usize,
    pub text: usize,
}

impl Default for MaxLens {
    fn default() -> Self {
        MaxLens {
            name: 6,
            api: 30,
            tokens: 50,
            text: 30,
        }
    }
}

/// A padded id sequence with its true length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Channel {
    pub ids: Vec<u32>,
    pub len: usize,
}

impl Channel {
    fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a String>, vocab: &Vocabulary, max_len: usize) -> Self {
        let mut ids: Vec<u32> = tokens.into_iter().take(max_len).map(|t| vocab.id(t)).collect();
        let len = ids.len();
        ids.resize(max_len, PAD_ID);
        Channel { ids, len }
    }

    pub fn valid(&self) -> &[u32] {
        &self.ids[..self.len]
    }
}

/// A record encoded against a [`VocabSet`].
///
/// `bag` is the deduplicated token set used by the bag-of-words network;
/// `code` keeps the full token sequence for the whole-snippet network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedExample {
    pub id: String,
    pub name: Channel,
    pub api: Channel,
    pub bag: Channel,
    pub code: Channel,
    pub text: Channel,
}

pub fn encode(record: &RawRecord, vocabs: &VocabSet, max_lens: &MaxLens) -> EncodedExample {
    let name = record.field_tokens(Field::Name);
    let api = record.field_tokens(Field::Api);
    let tokens = record.field_tokens(Field::Tokens);
    let text = record.field_tokens(Field::Text);

    let mut seen = HashSet::new();
    let bag: Vec<&String> = tokens.iter().filter(|t| seen.insert(t.as_str())).collect();

    EncodedExample {
        id: record.id.clone(),
        name: Channel::from_tokens(&name, &vocabs.name, max_lens.name),
        api: Channel::from_tokens(&api, &vocabs.api, max_lens.api),
        bag: Channel::from_tokens(bag, &vocabs.tokens, max_lens.tokens),
        code: Channel::from_tokens(&tokens, &vocabs.tokens, max_lens.tokens),
        text: Channel::from_tokens(&text, &vocabs.text, max_lens.text),
    }
}

/// Encodes only a free-text query.
pub fn encode_text(text: &str, vocab: &Vocabulary, max_len: usize) -> Channel {
    Channel::from_tokens(&tokenize_text(text), vocab, max_len)
}

pub fn encode_all(records: &[RawRecord], vocabs: &VocabSet, max_lens: &MaxLens) -> Vec<EncodedExample> {
    records.iter().map(|r| encode(r, vocabs, max_lens)).collect()
}

/// Seeded shuffle followed by a floor-sized partition; the rounding
/// remainder goes to the training part.
pub fn split<T: Clone>(records: &[T], ratios: (f64, f64, f64), seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let (rt, rv, rs) = ratios;
    if [rt, rv, rs].iter().any(|r| !(0.0..=1.0).contains(r)) || ((rt + rv + rs) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be in [0,1] and sum to 1, got {ratios:?}"
        )));
    }
    let n = records.len();
    if rt > 0.0 && rv > 0.0 && rs > 0.0 && n < 3 {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} records into three non-empty parts"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n_valid = (n as f64 * rv).floor() as usize;
    let n_test = (n as f64 * rs).floor() as usize;
    let n_train = n - n_valid - n_test;

    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_valid]),
        pick(&order[n_train + n_valid..]),
    ))
}

/// A code/text pairing within a batch, by batch position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairIndex {
    pub code: usize,
    pub text: usize,
    /// 1 for a matching pair, 0 for a mismatched one.
    pub label: u8,
}

/// An (anchor code, positive text, negative text) triple by batch position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TripletIndex {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

fn other_index(i: usize, n: usize, rng: &mut impl Rng) -> usize {
    let j = rng.random_range(0..n - 1);
    if j >= i { j + 1 } else { j }
}

/// B positives followed by one in-batch negative per code.
pub fn sample_pair_indices(batch_len: usize, rng: &mut impl Rng) -> Result<Vec<PairIndex>> {
    if batch_len < 2 {
        return Err(Error::BatchTooSmall(batch_len));
    }
    let mut out: Vec<PairIndex> = (0..batch_len)
        .map(|i| PairIndex {
            code: i,
            text: i,
            label: 1,
        })
        .collect();
    for i in 0..batch_len {
        out.push(PairIndex {
            code: i,
            text: other_index(i, batch_len, rng),
            label: 0,
        });
    }
    Ok(out)
}

pub fn sample_triplet_indices(batch_len: usize, rng: &mut impl Rng) -> Result<Vec<TripletIndex>> {
    if batch_len < 2 {
        return Err(Error::BatchTooSmall(batch_len));
    }
    Ok((0..batch_len)
        .map(|i| TripletIndex {
            anchor: i,
            positive: i,
            negative: other_index(i, batch_len, rng),
        })
        .collect())
}

#[derive(Clone, Copy, Debug)]
pub struct LabeledPair<'a> {
    pub code: &'a EncodedExample,
    pub text: &'a EncodedExample,
    pub label: u8,
}

#[derive(Clone, Copy, Debug)]
pub struct Triplet<'a> {
    pub anchor: &'a EncodedExample,
    pub positive: &'a EncodedExample,
    pub negative: &'a EncodedExample,
}

pub fn sample_pairs<'a>(batch: &[&'a EncodedExample], rng: &mut impl Rng) -> Result<Vec<LabeledPair<'a>>> {
    Ok(sample_pair_indices(batch.len(), rng)?
        .into_iter()
        .map(|p| LabeledPair {
            code: batch[p.code],
            text: batch[p.text],
            label: p.label,
        })
        .collect())
}

pub fn sample_triplets<'a>(batch: &[&'a EncodedExample], rng: &mut impl Rng) -> Result<Vec<Triplet<'a>>> {
    Ok(sample_triplet_indices(batch.len(), rng)?
        .into_iter()
        .map(|t| Triplet {
            anchor: batch[t.anchor],
            positive: batch[t.positive],
            negative: batch[t.negative],
        })
        .collect())
}
