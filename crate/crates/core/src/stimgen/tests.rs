use std::collections::HashSet;

use proptest::prelude::*;

use super::*;
use crate::error::LabError;

fn lex() -> Lexicon {
    Lexicon::default()
}

#[test]
fn default_lexicon_and_inventory_are_valid() {
    let l = lex();
    l.validate().unwrap();
    assert!(l.frame_count() >= 400);
    let cs = default_conjuncts();
    assert!(cs.len() >= 10);
    for c in &cs {
        c.validate().unwrap();
    }
    let levels: HashSet<u64> = cs.iter().map(|c| c.p_gap.to_bits()).collect();
    assert!(levels.len() >= 6);
    let vocab = l.vocab(&cs);
    assert!(vocab.len() < 256);
    for c in &cs {
        for w in c.words() {
            assert!(vocab.id(w).is_some(), "{w}");
        }
    }
}

#[test]
fn lexicon_errors() {
    let mut l = lex();
    l.objects.clear();
    assert!(matches!(l.validate(), Err(LabError::Spec(_))));
    let mut l = lex();
    l.objects.push("she".into());
    assert!(matches!(l.validate(), Err(LabError::Spec(_))));
    let mut l = lex();
    l.inflection.remove("see");
    assert!(matches!(l.validate(), Err(LabError::Lexicon(_))));
}

#[test]
fn conjunct_spec_invariants() {
    let mut c = default_conjuncts()[8].clone();
    c.p_gap = 0.2;
    assert!(matches!(c.validate(), Err(LabError::Spec(_))));
    let mut c = default_conjuncts()[0].clone();
    c.p_gap = 1.5;
    assert!(matches!(c.validate(), Err(LabError::Spec(_))));
}

#[test]
fn four_hundred_distinct_reproducible_pairs() {
    let l = lex();
    let c = &default_conjuncts()[0];
    let a = sample_minimal_pairs(&l, c, 400, 7).unwrap();
    let b = sample_minimal_pairs(&l, c, 400, 7).unwrap();
    assert_eq!(a.len(), 400);
    assert_eq!(a, b);
    let distinct: HashSet<&Vec<String>> = a.iter().map(|p| &p.wh).collect();
    assert_eq!(distinct.len(), 400);
    for p in &a {
        p.validate().unwrap();
        assert_eq!(p.l_wh, ".");
        assert_eq!(p.l_th, "the");
        assert_eq!(p.wh[2], "what");
        assert_eq!(p.th[2], "that");
        assert_eq!(p.len(), 8);
        assert_eq!(p.position_of(Role::V2), Some(7));
    }
}

#[test]
fn capacity_and_empty_requests() {
    let l = lex();
    let c = &default_conjuncts()[0];
    let cap = l.frame_count();
    assert!(matches!(
        sample_minimal_pairs(&l, c, cap + 1, 0),
        Err(LabError::Capacity { requested, available }) if requested == cap + 1 && available == cap
    ));
    assert!(matches!(sample_minimal_pairs(&l, c, 0, 0), Err(LabError::Input(_))));
    assert_eq!(sample_minimal_pairs(&l, c, cap, 0).unwrap().len(), cap);
}

#[test]
fn classic_and_cross_pairs() {
    let l = lex();
    let classic = sample_classic_pairs(&l, 500, 3).unwrap();
    for p in &classic {
        p.validate().unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p.position_of(Role::V2), Some(4));
        assert_eq!(p.position_of(Role::V1), None);
    }
    let cs = default_conjuncts();
    let cross = sample_cross_pairs(&l, &cs[8..14], &cs[0..6], 400, 1).unwrap();
    assert_eq!(cross.len(), 400);
    for cp in &cross {
        assert_eq!(cp.base.wh[..4], cp.source.wh[..4]);
        assert!(cs[8..14].iter().any(|c| c.id == cp.base.conjunct_id));
        assert!(cs[0..6].iter().any(|c| c.id == cp.source.conjunct_id));
    }
}

#[test]
fn multi_token_slots_align_on_last_token() {
    let l = lex();
    let c = ConjunctSpec::new("m", "drove", "to the market", "bought", ConjunctClass::Acceptable, 0.9, None);
    let p = &sample_minimal_pairs(&l, &c, 1, 0).unwrap()[0];
    assert_eq!(p.len(), 10);
    assert_eq!(p.position_of(Role::Complement), Some(7));
    assert_eq!(p.position_of(Role::Conjunction), Some(8));
    assert_eq!(conjunct_roles(&c), p.roles);
}

fn spec(size: usize, seed: u64) -> CorpusSpec {
    CorpusSpec {
        conjuncts: default_conjuncts(),
        weights: MixtureWeights::default(),
        size,
        seed,
    }
}

#[test]
fn corpus_gap_rates_follow_design() {
    let l = lex();
    let s = spec(20_000, 5);
    let corpus = generate_training_corpus(&l, &s).unwrap();
    for (ci, c) in s.conjuncts.iter().enumerate() {
        let wh: Vec<&CorpusSentence> = corpus.iter().filter(|x| x.conjunct == Some(ci) && x.wh).collect();
        let gaps = wh.iter().filter(|x| x.gap).count();
        if c.p_gap == 0.0 {
            assert_eq!(gaps, 0, "{}", c.id);
        }
        if c.p_gap == 1.0 {
            assert_eq!(gaps, wh.len(), "{}", c.id);
        }
    }
    assert!(corpus.iter().filter(|x| !x.wh).all(|x| !x.gap));
    for x in &corpus {
        assert_eq!(x.words.last().map(String::as_str), Some("."));
        let before_stop = &x.words[x.words.len() - 2];
        assert_eq!(x.gap, !l.objects.contains(before_stop));
    }
}

#[test]
fn corpus_mixture_frequencies_within_two_percent() {
    let corpus = generate_training_corpus(&lex(), &spec(100_000, 11)).unwrap();
    let w = MixtureWeights::default();
    for s in Schema::ALL {
        let freq = corpus.iter().filter(|x| x.schema == s).count() as f64 / corpus.len() as f64;
        assert!((freq - w.weight(s)).abs() < 0.02, "{s:?}: {freq}");
    }
}

#[test]
fn corpus_is_deterministic_and_validated() {
    let l = lex();
    assert_eq!(generate_training_corpus(&l, &spec(500, 2)).unwrap(), generate_training_corpus(&l, &spec(500, 2)).unwrap());
    assert_ne!(generate_training_corpus(&l, &spec(500, 2)).unwrap(), generate_training_corpus(&l, &spec(500, 3)).unwrap());
    let mut bad = spec(10, 0);
    bad.weights.conjunct = 0.7;
    assert!(matches!(generate_training_corpus(&l, &bad), Err(LabError::Spec(_))));
    let mut empty = lex();
    empty.subjects.clear();
    assert!(matches!(generate_training_corpus(&empty, &spec(10, 0)), Err(LabError::Spec(_))));
    let vocab = l.vocab(&default_conjuncts());
    for x in generate_training_corpus(&l, &spec(2000, 4)).unwrap() {
        vocab.encode_words(&x.words).unwrap();
    }
}

#[test]
fn reference_ratings_ingest() {
    let specs = reference_ratings();
    assert_eq!(specs.len(), 16);
    let first = &specs[0];
    assert_eq!((first.v1.as_str(), first.complement.as_str(), first.v2.as_str()), ("looked", "down", "saw"));
    assert_eq!(first.rating, Some(6.29));
    assert_eq!(first.class, ConjunctClass::Acceptable);
    let acc = specs.iter().filter(|s| s.class == ConjunctClass::Acceptable).count();
    let unacc = specs.iter().filter(|s| s.class == ConjunctClass::Unacceptable).count();
    assert_eq!((acc, unacc), (8, 8));
    assert_eq!(specs[6].complement, "to the market");
}

#[test]
fn ratings_round_trip_and_errors() {
    let specs = reference_ratings();
    let text = write_ratings(&specs).unwrap();
    let back = ingest_ratings(text.as_bytes()).unwrap();
    assert_eq!(back, specs);
    assert_eq!(write_ratings(&back).unwrap(), text);

    let bad = "conjunct_id,v1,complement,conj,v2,rating,class\nx,a,b,and,c,9.5,Acceptable\n";
    assert!(matches!(ingest_ratings(bad.as_bytes()), Err(LabError::Parse { row: 2, .. })));
    let bad = "conjunct_id,v1,complement,conj,v2,rating,class\nx,a,b,and,c,5,Acceptable\ny,a,b,and\n";
    assert!(matches!(ingest_ratings(bad.as_bytes()), Err(LabError::Parse { row: 3, .. })));
    let bad = "id,v1\nx,a\n";
    assert!(matches!(ingest_ratings(bad.as_bytes()), Err(LabError::Parse { row: 1, .. })));
    let bad = "conjunct_id,v1,complement,conj,v2,rating,class\nx,a,b,and,c,four,Acceptable\n";
    assert!(matches!(ingest_ratings(bad.as_bytes()), Err(LabError::Parse { row: 2, .. })));
}

#[test]
fn matrix_question_conversion() {
    let l = lex();
    let q = "What did she bake cookies and win ?";
    let words: Vec<&str> = q.split_whitespace().collect();
    assert_eq!(convert_matrix_to_embedded(&words, &l).unwrap().join(" "), "I know what she baked cookies and won");
    let q: Vec<&str> = "What did he drive to the market and buy ?".split_whitespace().collect();
    assert_eq!(convert_matrix_to_embedded(&q, &l).unwrap().join(" "), "I know what he drove to the market and bought");
    let q: Vec<&str> = "What did she zorp cookies and win ?".split_whitespace().collect();
    assert!(matches!(convert_matrix_to_embedded(&q, &l), Err(LabError::Lexicon(_))));
    let q: Vec<&str> = "I know what she baked cookies and won".split_whitespace().collect();
    assert!(matches!(convert_matrix_to_embedded(&q, &l), Err(LabError::Schema(_))));
}

proptest! {
    #[test]
    fn sampled_pairs_differ_only_at_licensor(seed in any::<u64>(), ci in 0usize..24, n in 1usize..60) {
        let l = lex();
        let c = &default_conjuncts()[ci];
        for p in sample_minimal_pairs(&l, c, n, seed).unwrap() {
            prop_assert!(p.validate().is_ok());
            prop_assert_eq!(p.wh.len(), p.th.len());
        }
    }

    #[test]
    fn corpus_is_a_pure_function_of_its_spec(seed in any::<u64>()) {
        let l = lex();
        prop_assert_eq!(generate_training_corpus(&l, &spec(50, seed)).unwrap(), generate_training_corpus(&l, &spec(50, seed)).unwrap());
    }
}
