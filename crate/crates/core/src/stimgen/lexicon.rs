use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lm::Vocab;
use crate::stimgen::ConjunctSpec;

/// Word classes and inflections of the synthetic grammar. Verbs are listed
/// in base form; sentences use their past tense from `inflection`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    /// First token of a two-token prefix phrase.
    pub prefix_subjects: Vec<String>,
    /// Second token of a prefix phrase, already inflected.
    pub prefix_verbs: Vec<String>,
    pub subjects: Vec<String>,
    pub transitive_verbs: Vec<String>,
    pub particle_verbs: Vec<String>,
    pub particles: Vec<String>,
    pub objects: Vec<String>,
    /// Base form to past tense.
    pub inflection: BTreeMap<String, String>,
    pub gap_label: String,
    pub nogap_label: String,
    pub wh_licensor: String,
    pub th_licensor: String,
    pub conjunction: String,
}

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.json");

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::from_json(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

impl Lexicon {
    pub fn from_json(text: &str) -> Result<Self> {
        let lex: Lexicon = serde_json::from_str(text)?;
        lex.validate()?;
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Lexicon::from_json(&text)
    }

    fn classes(&self) -> [(&'static str, &Vec<String>); 7] {
        [
            ("prefix_subjects", &self.prefix_subjects),
            ("prefix_verbs", &self.prefix_verbs),
            ("subjects", &self.subjects),
            ("transitive_verbs", &self.transitive_verbs),
            ("particle_verbs", &self.particle_verbs),
            ("particles", &self.particles),
            ("objects", &self.objects),
        ]
    }

    /// Non-empty, pairwise disjoint classes; every verb inflects; labels
    /// are distinct single tokens.
    pub fn validate(&self) -> Result<()> {
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        for (name, words) in self.classes() {
            if words.is_empty() {
                return Err(LabError::Spec(format!("lexicon class {name} is empty")));
            }
            for w in words {
                if w.split_whitespace().count() != 1 {
                    return Err(LabError::Spec(format!("{name} entry {w:?} is not a single token")));
                }
                if let Some(other) = seen.insert(w, name) {
                    if other != name {
                        return Err(LabError::Spec(format!("{w:?} is in both {other} and {name}")));
                    }
                    return Err(LabError::Spec(format!("{w:?} is listed twice in {name}")));
                }
            }
        }
        for v in self.transitive_verbs.iter().chain(&self.particle_verbs) {
            if !self.inflection.contains_key(v) {
                return Err(LabError::Lexicon(format!("verb {v:?} has no past-tense entry")));
            }
        }
        let labels = [
            &self.gap_label,
            &self.nogap_label,
            &self.wh_licensor,
            &self.th_licensor,
            &self.conjunction,
        ];
        let distinct: HashSet<&String> = labels.iter().copied().collect();
        if distinct.len() != labels.len() || labels.iter().any(|l| l.split_whitespace().count() != 1) {
            return Err(LabError::Spec("labels, licensors and conjunction must be distinct single tokens".into()));
        }
        Ok(())
    }

    pub fn past(&self, base: &str) -> Result<&str> {
        self.inflection
            .get(base)
            .map(String::as_str)
            .ok_or_else(|| LabError::Lexicon(format!("verb {base:?} missing from inflection map")))
    }

    /// Past forms of the transitive verbs, in lexicon order.
    pub fn transitive_past(&self) -> Vec<&str> {
        self.transitive_verbs
            .iter()
            .map(|v| self.inflection[v].as_str())
            .collect()
    }

    /// Number of distinct (prefix phrase, subject) frames.
    pub fn frame_count(&self) -> usize {
        self.prefix_subjects.len() * self.prefix_verbs.len() * self.subjects.len()
    }

    /// Vocabulary covering every sentence the grammar and the given
    /// conjuncts can produce, in a fixed order.
    pub fn vocab(&self, conjuncts: &[ConjunctSpec]) -> Vocab {
        let mut v = Vocab::new(Vec::<String>::new());
        for w in [&self.gap_label, &self.nogap_label, &self.wh_licensor, &self.th_licensor, &self.conjunction] {
            v.insert(w);
        }
        for w in self.prefix_subjects.iter().chain(&self.prefix_verbs).chain(&self.subjects) {
            v.insert(w);
        }
        for w in self.transitive_past() {
            v.insert(w);
        }
        for w in &self.objects {
            v.insert(w);
        }
        for verb in &self.particle_verbs {
            v.insert(&self.inflection[verb]);
        }
        for w in &self.particles {
            v.insert(w);
        }
        for c in conjuncts {
            for w in c.words() {
                v.insert(w);
            }
        }
        v
    }
}
