use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lm::{Vocab, UNK};

/// Stimulus length in tokens.
pub const CHUNK_LEN: usize = 8;

/// One corpus segment with its projections. `projections` holds one raw
/// `a·h` per seed; `score` is the sign-corrected, z-scored seed average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub id: usize,
    pub tokens: Vec<usize>,
    pub text: String,
    pub focal: usize,
    #[serde(default)]
    pub projections: Vec<f64>,
    #[serde(default)]
    pub score: f64,
}

impl ChunkRecord {
    /// Surface form of the focal token.
    pub fn focal_word(&self) -> &str {
        self.text.split_whitespace().nth(self.focal).unwrap_or("")
    }
}

/// Lowercases, splits on whitespace and detaches leading and trailing
/// punctuation into tokens of their own. Unknown words map to `<unk>`.
pub fn tokenize_corpus(text: &str, vocab: &Vocab) -> Vec<usize> {
    let unk = vocab.id(UNK).unwrap_or(0);
    let mut out = Vec::new();
    let mut push = |w: &str| out.push(vocab.id(w).unwrap_or(unk));
    for raw in text.split_whitespace() {
        let word = raw.to_lowercase();
        let start = word.find(|c: char| c.is_alphanumeric()).unwrap_or(word.len());
        let end = word.rfind(|c: char| c.is_alphanumeric()).map_or(start, |i| i + word[i..].chars().next().map_or(1, char::len_utf8));
        for c in word[..start].chars() {
            push(&c.to_string());
        }
        if start < end {
            push(&word[start..end]);
        }
        for c in word[end.max(start)..].chars() {
            push(&c.to_string());
        }
    }
    out
}

/// Partitions `stream` into consecutive non-overlapping `chunk_len`
/// segments (a short tail is dropped) and samples `n` of them without
/// replacement, returned in stream order. Fewer than `n` segments yields
/// all of them with a warning.
pub fn chunk_corpus(stream: &[usize], vocab: &Vocab, chunk_len: usize, n: usize, seed: u64) -> Result<Vec<ChunkRecord>> {
    if stream.is_empty() {
        return Err(LabError::Input("empty token stream".into()));
    }
    if chunk_len == 0 || stream.len() < chunk_len {
        return Err(LabError::Input(format!("stream of {} tokens is shorter than one {chunk_len}-token chunk", stream.len())));
    }
    let total = stream.len() / chunk_len;
    let mut ids: Vec<usize> = if n >= total {
        if n > total {
            log::warn!("requested {n} chunks but the stream only holds {total}; using all of them");
        }
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample(&mut rng, total, n).into_vec()
    };
    ids.sort_unstable();
    Ok(ids
        .into_iter()
        .map(|id| {
            let tokens = stream[id * chunk_len..(id + 1) * chunk_len].to_vec();
            ChunkRecord { id, text: vocab.decode(&tokens), tokens, focal: 0, projections: Vec::new(), score: 0.0 }
        })
        .collect())
}
