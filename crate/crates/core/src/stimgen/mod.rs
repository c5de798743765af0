//! Synthetic filler-gap grammar: lexicon, conjunct inventory, minimal
//! pairs, training corpora, ratings ingestion and question conversion.

mod conjunct;
mod convert;
mod corpus;
mod lexicon;
mod pairs;
mod ratings;

pub use conjunct::{default_conjuncts, ConjunctClass, ConjunctSpec, ACCEPTABLE_MIN_P_GAP};
pub use convert::convert_matrix_to_embedded;
pub use corpus::{
    generate_context_stimuli, generate_training_corpus, CorpusSentence, CorpusSpec, MixtureWeights, Schema,
};
pub use lexicon::Lexicon;
pub use pairs::{
    conjunct_roles, role_position, sample_classic_pairs, sample_cross_pairs, sample_minimal_pairs, CrossPair,
    EncodedPair, MinimalPair, Role,
};
pub use ratings::{ingest_ratings, rating_to_p_gap, reference_ratings, write_ratings, RATINGS_HEADER};

/// Mixes a label into a seed (FNV-1a over the label, xor with the seed) so
/// different conjuncts draw different frames under one run seed.
pub fn seed_for(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed
}

#[cfg(test)]
mod tests;
