//! Tokenization, vocabularies and fixed-length question encoding.
//!
//! Questions are right-padded with the out-of-band id `-1`, which is never a
//! vocabulary entry; the model embeds it as the zero vector and masks it out
//! of the word-guided attention.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD_ID: i64 = -1;

/// Lowercases, splits on whitespace and strips leading/trailing ASCII
/// punctuation. Tokens that end up empty are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    answers: Vec<String>,
    min_freq: usize,
    top_k_answers: usize,
    /// Default encoding length: the longest training question after
    /// out-of-vocabulary tokens are dropped.
    max_len: usize,
    #[serde(skip)]
    token_index: HashMap<String, usize>,
    #[serde(skip)]
    answer_index: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedQuestion {
    pub ids: Vec<i64>,
    pub mask: Vec<bool>,
    pub text: String,
    /// Set when the question had more than `T` in-vocabulary tokens.
    pub truncated: bool,
}

impl EncodedQuestion {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Ids with padding as `None`.
    pub fn lookup_ids(&self) -> Vec<Option<usize>> {
        self.ids
            .iter()
            .map(|&id| if id >= 0 { Some(id as usize) } else { None })
            .collect()
    }
}

/// Builds a vocabulary from `(question, answer)` pairs.
///
/// Question tokens seen at least `min_freq` times get ids in order of first
/// appearance. Answers are ranked by frequency (ties lexicographic) and cut
/// to `top_k_answers`.
pub fn build_vocab<I, Q, A>(corpus: I, min_freq: usize, top_k_answers: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = (Q, A)>,
    Q: AsRef<str>,
    A: AsRef<str>,
{
    let mut order: Vec<String> = Vec::new();
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut answer_counts: HashMap<String, usize> = HashMap::new();
    let mut questions: Vec<Vec<String>> = Vec::new();
    for (q, a) in corpus {
        let toks = tokenize(q.as_ref());
        for t in &toks {
            let c = counts.entry(t.clone()).or_insert(0);
            if *c == 0 {
                order.push(t.clone());
            }
            *c += 1;
        }
        questions.push(toks);
        *answer_counts.entry(normalize_answer(a.as_ref())).or_insert(0) += 1;
    }
    if questions.is_empty() {
        return Err(Error::Usage("cannot build a vocabulary from an empty corpus".into()));
    }
    let tokens: Vec<String> = order.into_iter().filter(|t| counts[t] >= min_freq.max(1)).collect();
    let mut answers: Vec<(String, usize)> = answer_counts.into_iter().collect();
    answers.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    answers.truncate(top_k_answers);
    let mut vocab = Vocabulary {
        tokens,
        answers: answers.into_iter().map(|(a, _)| a).collect(),
        min_freq,
        top_k_answers,
        max_len: 0,
        token_index: HashMap::new(),
        answer_index: HashMap::new(),
    };
    vocab.reindex();
    vocab.max_len = questions
        .iter()
        .map(|toks| toks.iter().filter(|t| vocab.token_index.contains_key(*t)).count())
        .max()
        .unwrap_or(0)
        .max(1);
    Ok(vocab)
}

pub fn normalize_answer(a: &str) -> String {
    tokenize(a).join(" ")
}

impl Vocabulary {
    fn reindex(&mut self) {
        self.token_index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        self.answer_index = self.answers.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_answers(&self) -> usize {
        self.answers.len()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn set_max_len(&mut self, t: usize) {
        self.max_len = t.max(1);
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn answers(&self) -> &[String] {
        &self.answers
    }

    pub fn token_id(&self, token: &str) -> Option<usize> {
        self.token_index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Class index of an answer; `None` means the sample is outside the
    /// top-k answers and is excluded from training.
    pub fn answer_id(&self, answer: &str) -> Option<usize> {
        self.answer_index.get(&normalize_answer(answer)).copied()
    }

    pub fn answer(&self, class: usize) -> Option<&str> {
        self.answers.get(class).map(String::as_str)
    }

    /// Encodes to exactly `t` slots: known ids, then `-1` padding.
    /// Out-of-vocabulary tokens are dropped.
    pub fn encode_question(&self, question: &str, t: usize) -> Result<EncodedQuestion> {
        if t == 0 {
            return Err(Error::Usage("encoding length must be positive".into()));
        }
        let mut ids: Vec<i64> = tokenize(question)
            .iter()
            .filter_map(|tok| self.token_id(tok))
            .map(|id| id as i64)
            .collect();
        if ids.is_empty() {
            return Err(Error::EmptyQuestion);
        }
        let truncated = ids.len() > t;
        ids.truncate(t);
        let real = ids.len();
        ids.resize(t, PAD_ID);
        let mask = (0..t).map(|j| j < real).collect();
        Ok(EncodedQuestion {
            ids,
            mask,
            text: question.to_string(),
            truncated,
        })
    }

    /// In-vocabulary tokens of an encoding, padding skipped.
    pub fn decode(&self, q: &EncodedQuestion) -> Vec<String> {
        q.ids
            .iter()
            .filter(|&&id| id >= 0)
            .filter_map(|&id| self.token(id as usize).map(str::to_string))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("vocabulary", e))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut v: Vocabulary = serde_json::from_str(s).map_err(|e| Error::json("vocabulary", e))?;
        v.reindex();
        if v.token_index.len() != v.tokens.len() || v.answer_index.len() != v.answers.len() {
            return Err(Error::Data("vocabulary has duplicate entries".into()));
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// First eight bytes (little-endian) of the SHA-256 of the compact JSON
    /// form. Checkpoints record it to catch vocabulary mismatches.
    pub fn hash(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("vocabulary serializes");
        let digest = Sha256::digest(&bytes);
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}
