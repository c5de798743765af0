//! Projection of corpus chunks onto learned directions and extraction of
//! the most and least aligned chunks.

mod chunks;
mod score;

pub use chunks::{chunk_corpus, tokenize_corpus, ChunkRecord, CHUNK_LEN};
pub use score::{
    attach_scores, chunks_from_json, chunks_to_json, is_whitespace_token, normalize_scores, project_chunks, seed_sign,
    top_chunks, z_scores, Polarity,
};

#[cfg(test)]
mod tests;
