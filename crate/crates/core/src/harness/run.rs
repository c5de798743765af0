use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{LabError, Result};
use crate::harness::exps::{self, Ctx};
use crate::harness::record::{output_root, run_id, RunRecord, RunWriter};
use crate::harness::{ExperimentId, ExperimentSpec};
use crate::lm::{checkpoint, train_lm, ModelParams, Vocab};
use crate::numerics::Real;
use crate::stimgen::{generate_training_corpus, CorpusSentence, CorpusSpec};

/// Run directory: `<root>/<experiment>-<first 12 hex of the run id>`.
pub fn run_dir(spec: &ExperimentSpec) -> Result<PathBuf> {
    Ok(output_root(spec).join(format!("{}-{}", spec.experiment, &run_id(spec)?[..12])))
}

/// Runs one experiment against the spec's checkpoint and writes its result
/// files, summary and manifest.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunRecord> {
    spec.validate()?;
    let path = spec.checkpoint_path()?;
    if spec.float32 {
        let ck = checkpoint::load::<f32>(path)?;
        run_with(spec, &ck.params, ck.vocab.as_ref())
    } else {
        let ck = checkpoint::load::<f64>(path)?;
        run_with(spec, &ck.params, ck.vocab.as_ref())
    }
}

/// As [`run_experiment`] with weights already in memory.
pub fn run_with<T: Real>(spec: &ExperimentSpec, params: &ModelParams<T>, vocab: Option<&Vocab>) -> Result<RunRecord> {
    spec.validate()?;
    let vocab = vocab.ok_or_else(|| LabError::Config("checkpoint carries no vocabulary".into()))?;
    let start = Instant::now();
    let mut w = RunWriter::create(run_dir(spec)?, spec.hash()?)?;
    w.json("spec.json", spec)?;
    let ctx = Ctx { spec, params, vocab, lex: spec.lexicon()?, conjuncts: spec.conjuncts()? };
    let summary = match spec.experiment {
        ExperimentId::Exp1 => exps::exp1(&ctx, &mut w)?,
        ExperimentId::Exp2 => exps::exp2(&ctx, &mut w)?,
        ExperimentId::Exp3 => exps::exp3(&ctx, &mut w)?,
        ExperimentId::Exp4 => exps::exp4(&ctx, &mut w)?,
    };
    w.finish(spec, summary, start.elapsed().as_secs_f64())
}

/// Training corpus from the spec's lexicon, conjuncts and LM settings.
pub fn training_corpus(spec: &ExperimentSpec) -> Result<Vec<CorpusSentence>> {
    let corpus = CorpusSpec {
        conjuncts: spec.conjuncts()?,
        weights: spec.lm.weights,
        size: spec.lm.corpus_size,
        seed: spec.lm.corpus_seed,
    };
    generate_training_corpus(&spec.lexicon()?, &corpus)
}

/// Writes the training corpus one sentence per line.
pub fn write_corpus(spec: &ExperimentSpec, path: &Path) -> Result<usize> {
    let sentences = training_corpus(spec)?;
    let mut text = String::new();
    for s in &sentences {
        text.push_str(&s.text());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| LabError::io(path, e))?;
    Ok(sentences.len())
}

/// Trains the toy LM on the spec's corpus and saves it with its
/// vocabulary. Returns the per-step losses.
pub fn train_and_save(spec: &ExperimentSpec, path: &Path) -> Result<Vec<f64>> {
    let lex = spec.lexicon()?;
    let conjuncts = spec.conjuncts()?;
    let vocab = lex.vocab(&conjuncts);
    let ids: Vec<Vec<usize>> = training_corpus(spec)?.iter().map(|s| vocab.encode_words(&s.words)).collect::<Result<_>>()?;
    let config = spec.lm.model_config(vocab.len());
    if spec.float32 {
        let out = train_lm::<f32>(config, &ids, &spec.lm.hyper)?;
        checkpoint::save(path, &out.params, Some(&vocab))?;
        Ok(out.losses)
    } else {
        let out = train_lm::<f64>(config, &ids, &spec.lm.hyper)?;
        checkpoint::save(path, &out.params, Some(&vocab))?;
        Ok(out.losses)
    }
}
