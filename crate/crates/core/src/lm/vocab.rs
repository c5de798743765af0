use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Reserved id 0.
pub const UNK: &str = "<unk>";

/// Word-level vocabulary. Every lexicon entry and punctuation mark is a
/// single token; id 0 is reserved for `<unk>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        let mut v = Vocab {
            words: vec![UNK.to_string()],
            index: HashMap::from([(UNK.to_string(), 0)]),
        };
        for w in words {
            v.insert(&w);
        }
        v
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

impl Vocab {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Vocab::from(words.into_iter().map(|s| s.as_ref().to_string()).collect::<Vec<_>>())
    }

    /// Adds `word` if absent and returns its id.
    pub fn insert(&mut self, word: &str) -> usize {
        if let Some(&i) = self.index.get(word) {
            return i;
        }
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), self.words.len() - 1);
        self.words.len() - 1
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Splits on whitespace; unknown words are an input error.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.split_whitespace()
            .map(|w| {
                self.id(w)
                    .ok_or_else(|| LabError::Input(format!("word {w:?} not in vocabulary")))
            })
            .collect()
    }

    pub fn encode_words<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<usize>> {
        words
            .iter()
            .map(|w| {
                let w = w.as_ref();
                self.id(w)
                    .ok_or_else(|| LabError::Input(format!("word {w:?} not in vocabulary")))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| self.word(i).unwrap_or(UNK))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
