use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lm::Vocab;
use crate::stimgen::{seed_for, ConjunctSpec, Lexicon};

/// Grammatical role of a stimulus token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Prefix,
    Licensor,
    Subject,
    V1,
    Complement,
    Conjunction,
    V2,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::Prefix,
        Role::Licensor,
        Role::Subject,
        Role::V1,
        Role::Complement,
        Role::Conjunction,
        Role::V2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Prefix => "prefix",
            Role::Licensor => "licensor",
            Role::Subject => "subject",
            Role::V1 => "v1",
            Role::Complement => "complement",
            Role::Conjunction => "conjunction",
            Role::V2 => "v2",
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Two sentences identical except for the licensor, with their expected
/// continuations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalPair {
    /// Conjunct id, or `"classic"` for pairs without coordination.
    pub conjunct_id: String,
    pub wh: Vec<String>,
    pub th: Vec<String>,
    pub l_wh: String,
    pub l_th: String,
    pub roles: Vec<Role>,
}

/// A [`MinimalPair`] mapped to token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub wh: Vec<usize>,
    pub th: Vec<usize>,
    pub l_wh: usize,
    pub l_th: usize,
    pub roles: Vec<Role>,
}

/// Index of the last token carrying `role`.
pub fn role_position(roles: &[Role], role: Role) -> Option<usize> {
    roles.iter().rposition(|&r| r == role)
}

impl MinimalPair {
    pub fn position_of(&self, role: Role) -> Option<usize> {
        role_position(&self.roles, role)
    }

    pub fn len(&self) -> usize {
        self.wh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wh.is_empty()
    }

    /// Equal lengths, aligned roles, and a single difference at the licensor.
    pub fn validate(&self) -> Result<()> {
        if self.wh.len() != self.th.len() || self.roles.len() != self.wh.len() {
            return Err(LabError::Alignment(format!(
                "{}: lengths wh={} th={} roles={}",
                self.conjunct_id,
                self.wh.len(),
                self.th.len(),
                self.roles.len()
            )));
        }
        let diffs: Vec<usize> = (0..self.wh.len()).filter(|&i| self.wh[i] != self.th[i]).collect();
        let lic = self.position_of(Role::Licensor);
        if diffs.len() != 1 || Some(diffs[0]) != lic {
            return Err(LabError::Alignment(format!(
                "{}: sentences differ at {diffs:?}, licensor at {lic:?}",
                self.conjunct_id
            )));
        }
        Ok(())
    }

    pub fn encode(&self, vocab: &Vocab) -> Result<EncodedPair> {
        let label = |w: &str| {
            vocab
                .id(w)
                .ok_or_else(|| LabError::Input(format!("label {w:?} not in vocabulary")))
        };
        Ok(EncodedPair {
            wh: vocab.encode_words(&self.wh)?,
            th: vocab.encode_words(&self.th)?,
            l_wh: label(&self.l_wh)?,
            l_th: label(&self.l_th)?,
            roles: self.roles.clone(),
        })
    }
}

/// Prefix phrase and subject shared by both members of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Frame {
    prefix_subject: usize,
    prefix_verb: usize,
    subject: usize,
}

fn frame(lex: &Lexicon, mut i: usize) -> Frame {
    let ns = lex.subjects.len();
    let nv = lex.prefix_verbs.len();
    let subject = i % ns;
    i /= ns;
    let prefix_verb = i % nv;
    i /= nv;
    Frame {
        prefix_subject: i,
        prefix_verb,
        subject,
    }
}

fn build(lex: &Lexicon, f: Frame, body: &[(&str, Role)], conjunct_id: &str) -> MinimalPair {
    let mut wh = vec![
        lex.prefix_subjects[f.prefix_subject].clone(),
        lex.prefix_verbs[f.prefix_verb].clone(),
        lex.wh_licensor.clone(),
        lex.subjects[f.subject].clone(),
    ];
    let mut roles = vec![Role::Prefix, Role::Prefix, Role::Licensor, Role::Subject];
    for &(w, r) in body {
        wh.push(w.to_string());
        roles.push(r);
    }
    let mut th = wh.clone();
    th[2] = lex.th_licensor.clone();
    MinimalPair {
        conjunct_id: conjunct_id.to_string(),
        wh,
        th,
        l_wh: lex.gap_label.clone(),
        l_th: lex.nogap_label.clone(),
        roles,
    }
}

fn conjunct_body(c: &ConjunctSpec) -> Vec<(&str, Role)> {
    let mut body = Vec::new();
    for (s, role) in [
        (&c.v1, Role::V1),
        (&c.complement, Role::Complement),
        (&c.conj, Role::Conjunction),
        (&c.v2, Role::V2),
    ] {
        body.extend(s.split_whitespace().map(|w| (w, role)));
    }
    body
}

/// Token layout of a conjunct stimulus: `P1 P2 LIC SUBJ v1 compl conj v2`.
pub fn conjunct_roles(c: &ConjunctSpec) -> Vec<Role> {
    let mut roles = vec![Role::Prefix, Role::Prefix, Role::Licensor, Role::Subject];
    roles.extend(conjunct_body(c).into_iter().map(|(_, r)| r));
    roles
}

fn draw(capacity: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(LabError::Input("at least one pair must be requested".into()));
    }
    if n > capacity {
        return Err(LabError::Capacity {
            requested: n,
            available: capacity,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, capacity, n).into_vec())
}

/// `n` distinct pairs for one conjunct, varying prefix phrase and subject.
pub fn sample_minimal_pairs(lex: &Lexicon, conjunct: &ConjunctSpec, n: usize, seed: u64) -> Result<Vec<MinimalPair>> {
    let body = conjunct_body(conjunct);
    draw(lex.frame_count(), n, seed_for(seed, &conjunct.id))?
        .into_iter()
        .map(|i| Ok(build(lex, frame(lex, i), &body, &conjunct.id)))
        .collect()
}

/// `n` distinct classic embedded-question pairs `P1 P2 what|that SUBJ VERB`,
/// varying prefix, subject and verb. The verb is tagged as `V2`.
pub fn sample_classic_pairs(lex: &Lexicon, n: usize, seed: u64) -> Result<Vec<MinimalPair>> {
    let verbs = lex.transitive_past();
    let frames = lex.frame_count();
    draw(frames * verbs.len(), n, seed_for(seed, "classic"))?
        .into_iter()
        .map(|i| Ok(build(lex, frame(lex, i % frames), &[(verbs[i / frames], Role::V2)], "classic")))
        .collect()
}

/// Base and source stimuli sharing a prefix phrase and subject but drawn
/// from different conjuncts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossPair {
    pub base: MinimalPair,
    pub source: MinimalPair,
}

/// `n` distinct (base conjunct, source conjunct, frame) combinations.
pub fn sample_cross_pairs(
    lex: &Lexicon,
    bases: &[ConjunctSpec],
    sources: &[ConjunctSpec],
    n: usize,
    seed: u64,
) -> Result<Vec<CrossPair>> {
    let frames = lex.frame_count();
    let capacity = bases.len() * sources.len() * frames;
    let base_bodies: Vec<_> = bases.iter().map(conjunct_body).collect();
    let source_bodies: Vec<_> = sources.iter().map(conjunct_body).collect();
    draw(capacity, n, seed_for(seed, "cross"))?
        .into_iter()
        .map(|i| {
            let f = frame(lex, i % frames);
            let rest = i / frames;
            let (b, s) = (rest % bases.len(), rest / bases.len());
            Ok(CrossPair {
                base: build(lex, f, &base_bodies[b], &bases[b].id),
                source: build(lex, f, &source_bodies[s], &sources[s].id),
            })
        })
        .collect()
}
