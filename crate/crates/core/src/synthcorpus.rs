//! Deterministic synthetic code/description corpora.
//!
//! Each record draws a latent concept `c`, written as a digit pair
//! `(a, b) = (c mod m, c div m)` with `m = ⌈√n_concepts⌉`. The description
//! carries a verb word for `a` and a noun word for `b`; on the code side the
//! method name carries `a`, the API calls carry `b` and a body identifier
//! carries `(a + b) mod m`. Everything else is filler. Code words are built
//! from the consonants `b d f g k l` and text words from `m n p r s t v z`,
//! so at zero noise paired text and code share no token.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codefeat::LanguageProfile;
use crate::corpus::{enrich, write_jsonl, RawRecord};
use crate::error::{Error, Result};

const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];
const CODE_CONSONANTS: [char; 6] = ['b', 'd', 'f', 'g', 'k', 'l'];
const TEXT_CONSONANTS: [char; 8] = ['m', 'n', 'p', 'r', 's', 't', 'v', 'z'];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_records: usize,
    pub n_concepts: usize,
    /// Distinct code words, concept and filler together.
    pub code_vocab: usize,
    /// Distinct text words, concept and filler together.
    pub text_vocab: usize,
    /// Probability that any generated word is swapped for a random word of
    /// the same side.
    pub noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(n_records: usize, n_concepts: usize, noise: f64, seed: u64) -> Self {
        SynthSpec {
            n_records,
            n_concepts,
            code_vocab: 800,
            text_vocab: 300,
            noise,
            seed,
        }
    }

    /// Digit base `m`.
    pub fn base(&self) -> usize {
        (self.n_concepts as f64).sqrt().ceil().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.base();
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_concepts == 0 || self.n_concepts > self.n_records {
            return fail(format!(
                "need 1 ≤ n_concepts ≤ n_records, got {} concepts for {} records",
                self.n_concepts, self.n_records
            ));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return fail(format!("noise {} outside [0, 1)", self.noise));
        }
        let code_words = word_list(&CODE_CONSONANTS).len();
        if self.code_vocab < 3 * m + 16 || self.code_vocab > code_words {
            return fail(format!(
                "code_vocab must be in {}..={code_words} for {} concepts",
                3 * m + 16,
                self.n_concepts
            ));
        }
        let text_words = word_list(&TEXT_CONSONANTS).len();
        if self.text_vocab < 2 * m + 16 || self.text_vocab > text_words {
            return fail(format!(
                "text_vocab must be in {}..={text_words} for {} concepts",
                2 * m + 16,
                self.n_concepts
            ));
        }
        Ok(())
    }
}

/// Every consonant-vowel-consonant-vowel word over the given consonants.
fn word_list(consonants: &[char]) -> Vec<String> {
    let syllables: Vec<String> = consonants
        .iter()
        .flat_map(|c| VOWELS.iter().map(move |v| format!("{c}{v}")))
        .collect();
    let java = LanguageProfile::java();
    syllables
        .iter()
        .flat_map(|a| syllables.iter().map(move |b| format!("{a}{b}")))
        .filter(|w| !java.is_keyword(w))
        .collect()
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}

struct Lexicon {
    code_verbs: Vec<String>,
    code_apis: Vec<String>,
    code_mix: Vec<String>,
    code_filler: Vec<String>,
    code_all: Vec<String>,
    text_verbs: Vec<String>,
    text_nouns: Vec<String>,
    text_filler: Vec<String>,
    text_all: Vec<String>,
}

impl Lexicon {
    fn new(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Self {
        let m = spec.base();
        let mut code = word_list(&CODE_CONSONANTS);
        code.shuffle(rng);
        code.truncate(spec.code_vocab);
        let mut text = word_list(&TEXT_CONSONANTS);
        text.shuffle(rng);
        text.truncate(spec.text_vocab);
        Lexicon {
            code_verbs: code[..m].to_vec(),
            code_apis: code[m..2 * m].to_vec(),
            code_mix: code[2 * m..3 * m].to_vec(),
            code_filler: code[3 * m..].to_vec(),
            code_all: code,
            text_verbs: text[..m].to_vec(),
            text_nouns: text[m..2 * m].to_vec(),
            text_filler: text[2 * m..].to_vec(),
            text_all: text,
        }
    }
}

struct Gen<'a> {
    rng: ChaCha8Rng,
    lex: &'a Lexicon,
    noise: f64,
}

impl Gen<'_> {
    fn pick<'w>(&mut self, words: &'w [String]) -> &'w str {
        &words[self.rng.random_range(0..words.len())]
    }

    /// `word`, or with probability `noise` a random word from `pool`.
    fn noisy(&mut self, word: &str, pool: &[String]) -> String {
        if self.noise > 0.0 && self.rng.random_bool(self.noise) {
            self.pick(pool).to_string()
        } else {
            word.to_string()
        }
    }

    fn code_word(&mut self, word: &str) -> String {
        let pool = &self.lex.code_all;
        self.noisy(word, pool)
    }

    fn code_filler(&mut self) -> String {
        let w = self.pick(&self.lex.code_filler).to_string();
        self.code_word(&w)
    }

    fn text_word(&mut self, word: &str) -> String {
        let pool = &self.lex.text_all;
        self.noisy(word, pool)
    }

    fn code(&mut self, a: usize, b: usize, m: usize) -> String {
        let verb = self.lex.code_verbs[a].clone();
        let api = self.lex.code_apis[b].clone();
        let mix = self.lex.code_mix[(a + b) % m].clone();

        let name = format!("{}{}", self.code_word(&verb), capitalize(&self.code_filler()));
        let ret = capitalize(&self.code_filler());
        let param_type = capitalize(&self.code_filler());
        let param = self.code_filler();

        let mut stmts = Vec::new();
        for _ in 0..2 {
            let recv = self.code_filler();
            let arg = self.code_filler();
            let call = self.code_word(&api);
            stmts.push(format!("{recv}.{call}({arg});"));
        }
        let mix_type = capitalize(&self.code_word(&mix));
        let mix_var = self.code_word(&mix);
        let init = self.code_filler();
        stmts.push(format!("{mix_type} {mix_var} = {init};"));
        for _ in 0..self.rng.random_range(1..=2) {
            let recv = self.code_filler();
            let call = self.code_filler();
            stmts.push(format!("{recv}.{call}();"));
        }
        for _ in 0..self.rng.random_range(2..=4) {
            let ty = capitalize(&self.code_filler());
            let var = self.code_filler();
            let val = self.code_filler();
            stmts.push(format!("{ty} {var} = {val};"));
        }
        stmts.shuffle(&mut self.rng);
        let ret_var = self.code_filler();

        let mut out = format!("public {ret} {name}({param_type} {param}) {{\n");
        for s in stmts {
            out.push_str("    ");
            out.push_str(&s);
            out.push('\n');
        }
        out.push_str(&format!("    return {ret_var};\n}}\n"));
        out
    }

    fn text(&mut self, a: usize, b: usize) -> String {
        let verb = self.lex.text_verbs[a].clone();
        let noun = self.lex.text_nouns[b].clone();
        let mut words = vec![self.text_word(&verb), self.text_word(&noun)];
        for _ in 0..self.rng.random_range(2..=5) {
            let w = self.pick(&self.lex.text_filler).to_string();
            words.push(self.text_word(&w));
        }
        // The verb leads; the rest is shuffled.
        words[1..].shuffle(&mut self.rng);
        words.join(" ")
    }
}

/// Concept of record `i`: every concept appears at least once when there
/// are enough records, the rest are drawn uniformly.
fn concepts(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut cs: Vec<usize> = (0..spec.n_records)
        .map(|i| {
            if i < spec.n_concepts {
                i
            } else {
                rng.random_range(0..spec.n_concepts)
            }
        })
        .collect();
    cs.shuffle(rng);
    cs
}

/// Generates the corpus, with code features already extracted.
pub fn generate(spec: &SynthSpec) -> Result<Vec<RawRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lex = Lexicon::new(spec, &mut rng);
    let cs = concepts(spec, &mut rng);
    let m = spec.base();
    let profile = LanguageProfile::java();
    let mut gen = Gen {
        rng,
        lex: &lex,
        noise: spec.noise,
    };
    let width = spec.n_records.to_string().len();
    Ok(cs
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let (a, b) = (c % m, c / m);
            let mut r = RawRecord {
                id: format!("syn-{i:0width$}"),
                code: gen.code(a, b, m),
                text: gen.text(a, b),
                label: Some(format!("concept-{c}")),
                ..RawRecord::default()
            };
            enrich(&mut r, &profile);
            r
        })
        .collect())
}

/// Writes the corpus with the spec echoed in a header comment.
pub fn write(spec: &SynthSpec, path: impl AsRef<Path>) -> Result<Vec<RawRecord>> {
    let records = generate(spec)?;
    let header = format!("synthcorpus {}", serde_json::to_string(spec)?);
    write_jsonl(path, Some(&header), &records)?;
    Ok(records)
}
