//! Tokenization and bag-of-words encoding of instructions.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const UNK: &str = "<unk>";

#[derive(Debug, Error, PartialEq)]
pub enum LangError {
    #[error("instruction {0} has no following instruction to pair with")]
    NoFollowingInstruction(usize),
    #[error("instruction {0} is empty")]
    EmptyInstruction(usize),
    #[error("vocabulary file is malformed: {0}")]
    BadVocabulary(String),
}

/// Lowercases, drops punctuation and collapses whitespace.
pub fn normalize(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .map(|c| if c.is_ascii_punctuation() { ' ' } else { c.to_ascii_lowercase() })
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Frozen token table. Index 0 is reserved for unknown tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    bigrams: Vec<(usize, usize)>,
    bigram_index: HashMap<(usize, usize), usize>,
}

impl Vocabulary {
    pub fn from_words<I: IntoIterator<Item = String>>(words: I) -> Self {
        let mut sorted: Vec<String> = words.into_iter().filter(|w| w != UNK).collect();
        sorted.sort();
        sorted.dedup();
        let mut tokens = vec![UNK.to_string()];
        tokens.extend(sorted);
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index, bigrams: Vec::new(), bigram_index: HashMap::new() }
    }

    /// Vocabulary over every word the instruction templates can produce.
    pub fn from_templates() -> Self {
        Self::from_words(crate::expert::template_words())
    }

    /// Adds bigram features for adjacent token pairs seen in `corpus`.
    pub fn with_bigrams<'a, I: IntoIterator<Item = &'a str>>(mut self, corpus: I) -> Self {
        let mut seen = std::collections::BTreeSet::new();
        for text in corpus {
            let toks = self.tokenize(text);
            for w in toks.windows(2) {
                seen.insert((w[0], w[1]));
            }
        }
        self.bigrams = seen.into_iter().collect();
        self.bigram_index = self.bigrams.iter().enumerate().map(|(i, b)| (*b, i)).collect();
        self
    }

    /// Number of distinct tokens including `<unk>`.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    /// Encoding dimension (unigrams plus bigrams).
    pub fn dim(&self) -> usize {
        self.tokens.len() + self.bigrams.len()
    }

    pub fn token(&self, i: usize) -> Option<&str> {
        self.tokens.get(i).map(String::as_str)
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        normalize(text).split_whitespace().map(|w| self.index_of(w)).collect()
    }

    pub fn encode_tokens(&self, tokens: &[usize]) -> EncodedInstruction {
        let mut counts = vec![0.0; self.dim()];
        for &t in tokens {
            counts[t] += 1.0;
        }
        for w in tokens.windows(2) {
            if let Some(&b) = self.bigram_index.get(&(w[0], w[1])) {
                counts[self.tokens.len() + b] += 1.0;
            }
        }
        EncodedInstruction { counts, text: String::new() }
    }

    pub fn encode(&self, text: &str) -> EncodedInstruction {
        EncodedInstruction { text: text.to_string(), ..self.encode_tokens(&self.tokenize(text)) }
    }

    /// Encoding of instruction `t` followed by instruction `t + 1`.
    pub fn pair_subtask(&self, instructions: &[String], t: usize) -> Result<EncodedInstruction, LangError> {
        let next = instructions.get(t + 1).ok_or(LangError::NoFollowingInstruction(t))?;
        let cur = instructions.get(t).ok_or(LangError::NoFollowingInstruction(t))?;
        if normalize(next).is_empty() {
            return Err(LangError::EmptyInstruction(t + 1));
        }
        let mut enc = self.encode(cur);
        enc.add(&self.encode(next));
        enc.text = format!("{cur} {next}");
        Ok(enc)
    }

    /// Encoding of several instructions summed (used for whole-episode language).
    pub fn encode_all<'a, I: IntoIterator<Item = &'a str>>(&self, texts: I) -> EncodedInstruction {
        let mut enc = EncodedInstruction { counts: vec![0.0; self.dim()], text: String::new() };
        for t in texts {
            enc.add(&self.encode(t));
            if !enc.text.is_empty() {
                enc.text.push(' ');
            }
            enc.text.push_str(t);
        }
        enc
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<String, usize> = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        serde_json::to_string_pretty(&VocabFile { tokens: map, bigrams: self.bigrams.clone() })
            .expect("vocabulary serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, LangError> {
        let file: VocabFile = serde_json::from_str(text).map_err(|e| LangError::BadVocabulary(e.to_string()))?;
        let mut tokens = vec![String::new(); file.tokens.len()];
        for (t, i) in file.tokens {
            let slot = tokens.get_mut(i).ok_or_else(|| LangError::BadVocabulary(format!("index {i} out of range")))?;
            *slot = t;
        }
        if tokens.first().map(String::as_str) != Some(UNK) {
            return Err(LangError::BadVocabulary("index 0 must be <unk>".into()));
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let bigram_index = file.bigrams.iter().enumerate().map(|(i, b)| (*b, i)).collect();
        Ok(Vocabulary { tokens, index, bigrams: file.bigrams, bigram_index })
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: BTreeMap<String, usize>,
    #[serde(default)]
    bigrams: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedInstruction {
    pub counts: Vec<f64>,
    pub text: String,
}

impl EncodedInstruction {
    pub fn zeros(dim: usize) -> Self {
        EncodedInstruction { counts: vec![0.0; dim], text: String::new() }
    }

    pub fn add(&mut self, other: &EncodedInstruction) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0.0)
    }

    pub fn dot(&self, other: &EncodedInstruction) -> f64 {
        self.counts.iter().zip(&other.counts).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        Vocabulary::from_templates()
    }

    #[test]
    fn tokenize_examples() {
        let v = vocab();
        let toks = v.tokenize("Pick up the mug.");
        let words: Vec<_> = toks.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(words, ["pick", "up", "the", "mug"]);
        assert!(v.tokenize("").is_empty());
        assert_eq!(v.tokenize("zxqv mug"), vec![0, v.index_of("mug")]);
    }

    #[test]
    fn counts_and_orthogonality() {
        let v = vocab();
        let mug = v.index_of("mug");
        let e = v.encode_tokens(&[mug, mug]);
        assert_eq!(e.counts[mug], 2.0);
        assert_eq!(e.counts.iter().sum::<f64>(), 2.0);
        assert_eq!(v.encode("mug").dot(&v.encode("apple bowl")), 0.0);
        assert!(v.encode("").is_zero());
    }

    #[test]
    fn pairing_includes_the_interaction_object() {
        let v = vocab();
        let ins = vec!["walk to the tv stand".to_string(), "pick up the credit card".to_string()];
        let enc = v.pair_subtask(&ins, 0).unwrap();
        assert_eq!(enc.counts[v.index_of("credit")], 1.0);
        assert_eq!(v.pair_subtask(&ins, 1), Err(LangError::NoFollowingInstruction(1)));
        let with_empty = vec!["walk to the tv stand".to_string(), String::new()];
        assert_eq!(v.pair_subtask(&with_empty, 0), Err(LangError::EmptyInstruction(1)));
        let swapped = vec![ins[1].clone(), ins[0].clone()];
        assert_eq!(enc.counts, v.pair_subtask(&swapped, 0).unwrap().counts);
    }

    #[test]
    fn json_round_trip() {
        let v = vocab().with_bigrams(["pick up the mug", "put the mug on the table"]);
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.index_of(UNK), 0);
    }

    proptest! {
        #[test]
        fn encoding_is_linear(a in proptest::collection::vec(0usize..40, 0..20),
                              b in proptest::collection::vec(0usize..40, 0..20)) {
            let v = vocab();
            let mut joined = a.clone();
            joined.extend(&b);
            let mut sum = v.encode_tokens(&a);
            sum.add(&v.encode_tokens(&b));
            prop_assert_eq!(v.encode_tokens(&joined).counts, sum.counts);
        }

        #[test]
        fn encoding_ignores_order(mut a in proptest::collection::vec(0usize..40, 0..20), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let v = vocab();
            let before = v.encode_tokens(&a);
            a.shuffle(&mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed));
            prop_assert!(before.counts.iter().all(|&c| c >= 0.0));
            prop_assert_eq!(before.counts, v.encode_tokens(&a).counts);
        }
    }
}
