use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::stimgen::{ConjunctSpec, Lexicon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schema {
    /// `SUBJ VERB the OBJ .`
    Declarative,
    /// `P1 P2 that SUBJ VERB the OBJ .`
    EmbeddedThat,
    /// `P1 P2 what SUBJ VERB .`
    ClassicWh,
    /// `P1 P2 what|that SUBJ v1 compl and v2` followed by `.` or `the OBJ .`
    Conjunct,
}

impl Schema {
    pub const ALL: [Schema; 4] = [
        Schema::Declarative,
        Schema::EmbeddedThat,
        Schema::ClassicWh,
        Schema::Conjunct,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixtureWeights {
    pub declarative: f64,
    pub embedded_that: f64,
    pub classic_wh: f64,
    pub conjunct: f64,
}

impl MixtureWeights {
    pub fn as_array(&self) -> [f64; 4] {
        [self.declarative, self.embedded_that, self.classic_wh, self.conjunct]
    }

    pub fn weight(&self, s: Schema) -> f64 {
        self.as_array()[s as usize]
    }
}

impl Default for MixtureWeights {
    fn default() -> Self {
        MixtureWeights {
            declarative: 0.15,
            embedded_that: 0.15,
            classic_wh: 0.2,
            conjunct: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub conjuncts: Vec<ConjunctSpec>,
    pub weights: MixtureWeights,
    pub size: usize,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let w = self.weights.as_array();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(LabError::Spec("mixture weights must be non-negative".into()));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(LabError::Spec("mixture weights must sum to 1".into()));
        }
        if self.size == 0 {
            return Err(LabError::Spec("corpus size must be at least 1".into()));
        }
        if self.weights.conjunct > 0.0 && self.conjuncts.is_empty() {
            return Err(LabError::Spec("conjunct sentences requested but no conjuncts given".into()));
        }
        for c in &self.conjuncts {
            if !(0.0..=1.0).contains(&c.p_gap) {
                return Err(LabError::Spec(format!("{}: p_gap {} outside [0, 1]", c.id, c.p_gap)));
            }
        }
        Ok(())
    }
}

/// One generated sentence with the choices that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSentence {
    pub schema: Schema,
    /// Index into the spec's conjunct list.
    pub conjunct: Option<usize>,
    pub wh: bool,
    pub gap: bool,
    pub words: Vec<String>,
}

impl CorpusSentence {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &'a [String]) -> &'a str {
    &xs[rng.gen_range(0..xs.len())]
}

/// Samples `spec.size` sentences. The schema is drawn from the mixture
/// weights, conjuncts uniformly, and a conjunct wh-sentence ends in a gap
/// with its `p_gap`; `that` sentences never do.
pub fn generate_training_corpus(lex: &Lexicon, spec: &CorpusSpec) -> Result<Vec<CorpusSentence>> {
    lex.validate()?;
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let schema_dist = WeightedIndex::new(spec.weights.as_array())
        .map_err(|e| LabError::Spec(format!("mixture weights: {e}")))?;
    let verbs = lex.transitive_past();
    let mut out = Vec::with_capacity(spec.size);
    for _ in 0..spec.size {
        let schema = Schema::ALL[schema_dist.sample(&mut rng)];
        let mut words: Vec<String> = Vec::with_capacity(12);
        let prefix = |rng: &mut ChaCha8Rng, words: &mut Vec<String>| {
            words.push(pick(rng, &lex.prefix_subjects).to_string());
            words.push(pick(rng, &lex.prefix_verbs).to_string());
        };
        let (mut conjunct, mut wh, mut gap) = (None, false, false);
        match schema {
            Schema::Declarative => {
                words.push(pick(&mut rng, &lex.subjects).into());
                words.push(verbs[rng.gen_range(0..verbs.len())].into());
            }
            Schema::EmbeddedThat => {
                prefix(&mut rng, &mut words);
                words.push(lex.th_licensor.clone());
                words.push(pick(&mut rng, &lex.subjects).into());
                words.push(verbs[rng.gen_range(0..verbs.len())].into());
            }
            Schema::ClassicWh => {
                prefix(&mut rng, &mut words);
                words.push(lex.wh_licensor.clone());
                words.push(pick(&mut rng, &lex.subjects).into());
                words.push(verbs[rng.gen_range(0..verbs.len())].into());
                wh = true;
                gap = true;
            }
            Schema::Conjunct => {
                let ci = rng.gen_range(0..spec.conjuncts.len());
                let c = &spec.conjuncts[ci];
                conjunct = Some(ci);
                wh = rng.gen_bool(0.5);
                prefix(&mut rng, &mut words);
                words.push(if wh { lex.wh_licensor.clone() } else { lex.th_licensor.clone() });
                words.push(pick(&mut rng, &lex.subjects).into());
                words.extend(c.words().into_iter().map(String::from));
                // Drawn for every sentence so the stream does not depend on the licensor.
                let u: f64 = rng.gen();
                gap = wh && u < c.p_gap;
            }
        }
        if !gap {
            words.push(lex.nogap_label.clone());
            words.push(pick(&mut rng, &lex.objects).into());
        }
        words.push(lex.gap_label.clone());
        out.push(CorpusSentence {
            schema,
            conjunct,
            wh,
            gap,
            words,
        });
    }
    Ok(out)
}

/// Unlabelled wh-stimuli (`P1 P2 what SUBJ v1 compl and v2`) drawn uniformly
/// from `conjuncts`, each tagged with its conjunct index.
pub fn generate_context_stimuli(
    lex: &Lexicon,
    conjuncts: &[ConjunctSpec],
    n: usize,
    seed: u64,
) -> Result<Vec<(usize, Vec<String>)>> {
    if conjuncts.is_empty() {
        return Err(LabError::Spec("no conjuncts to draw contexts from".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let ci = rng.gen_range(0..conjuncts.len());
            let mut words = vec![
                pick(&mut rng, &lex.prefix_subjects).to_string(),
                pick(&mut rng, &lex.prefix_verbs).to_string(),
                lex.wh_licensor.clone(),
                pick(&mut rng, &lex.subjects).to_string(),
            ];
            words.extend(conjuncts[ci].words().into_iter().map(String::from));
            (ci, words)
        })
        .collect())
}
