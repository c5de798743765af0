//! A desk-scale laboratory for causal interventions on filler-gap
//! dependencies.
//!
//! The crate trains a small decoder-only transformer on a synthetic grammar
//! whose conjunct constructions allow gap extraction with a designed
//! probability, then measures how the model licenses gaps and where that
//! behaviour lives:
//!
//! * [`numerics`]: tensors, reverse-mode differentiation, Adam.
//! * [`lm`]: the transformer, hook sites, training, checkpoints.
//! * [`stimgen`]: lexicon, corpus generation, minimal pairs, ratings data.
//! * [`behavior`]: surprisal-based licensing metrics and probes.
//! * [`das`]: distributed alignment search and the ODDS metric.
//! * [`subspace`]: projecting corpus chunks onto learned directions.
//! * [`harness`]: experiment orchestration, result files, HTML reports.

pub mod behavior;
pub mod das;
pub mod error;
pub mod harness;
pub mod lm;
pub mod numerics;
pub mod stimgen;
pub mod subspace;

pub use error::{LabError, Result};
