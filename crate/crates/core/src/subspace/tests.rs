use proptest::prelude::*;

use super::*;
use crate::das::Direction;
use crate::error::LabError;
use crate::lm::{forward_with_hooks, init_model, HookSite, ModelConfig, Vocab};

fn vocab() -> Vocab {
    Vocab::new(["the", "dog", "ran", "home", ".", ",", "and", "what", "she", "saw"])
}

fn dir(site: HookSite, seed: u64, a: Vec<f64>) -> Direction {
    Direction { site, role: None, seed, control: false, fingerprint: String::new(), loss: 0.0, a }
}

fn unit(n: usize, seed: u64) -> Vec<f64> {
    crate::das::initial_direction(n, seed)
}

#[test]
fn tokenizer_splits_punctuation_and_maps_unknowns() {
    let v = vocab();
    let ids = tokenize_corpus("The dog ran home, \"and\" zebra.", &v);
    let words: Vec<&str> = ids.iter().map(|&i| v.word(i).unwrap()).collect();
    assert_eq!(words, ["the", "dog", "ran", "home", ",", "<unk>", "and", "<unk>", "<unk>", "."]);
    assert!(tokenize_corpus("  ", &v).is_empty());
}

#[test]
fn chunking_partitions_and_samples() {
    let v = vocab();
    let stream: Vec<usize> = (0..80).map(|i| i % v.len()).collect();
    let all = chunk_corpus(&stream, &v, CHUNK_LEN, 100, 0).unwrap();
    assert_eq!(all.len(), 10);
    for (i, c) in all.iter().enumerate() {
        assert_eq!(c.id, i);
        assert_eq!(c.tokens, stream[i * 8..i * 8 + 8]);
        assert_eq!(c.text.split_whitespace().count(), 8);
    }
    let a = chunk_corpus(&stream, &v, CHUNK_LEN, 4, 7).unwrap();
    let b = chunk_corpus(&stream, &v, CHUNK_LEN, 4, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 4);
    assert!(a.windows(2).all(|w| w[0].id < w[1].id));
    let tail = chunk_corpus(&stream[..13], &v, CHUNK_LEN, 5, 0).unwrap();
    assert_eq!(tail.len(), 1);
    assert!(matches!(chunk_corpus(&[], &v, CHUNK_LEN, 5, 0), Err(LabError::Input(_))));
    assert!(matches!(chunk_corpus(&stream[..7], &v, CHUNK_LEN, 5, 0), Err(LabError::Input(_))));
}

#[test]
fn projections_match_capture_and_dot() {
    let p = init_model(ModelConfig::new(2, 2, 8, 16, 10, 10), 3).unwrap();
    let v = vocab();
    let stream: Vec<usize> = (0..40).map(|i| (i * 7 + 1) % 10).collect();
    let mut chunks = chunk_corpus(&stream, &v, CHUNK_LEN, 5, 0).unwrap();
    chunks.iter_mut().for_each(|c| c.focal = 6);
    let site = HookSite::mlp_activation(1, 6);
    let ds: Vec<Direction> = (0..3).map(|s| dir(site, s, unit(16, s))).collect();
    let raw = project_chunks(&p, &chunks, &ds).unwrap();
    assert_eq!(raw.len(), 3);
    for (d, row) in ds.iter().zip(&raw) {
        for (c, got) in chunks.iter().zip(row) {
            let out = forward_with_hooks(&p, &c.tokens, &[site], &[]).unwrap();
            let want: f64 = out.captured[0].1.iter().zip(&d.a).map(|(h, a)| h * a).sum();
            assert!((want - got).abs() < 1e-12);
        }
    }
    let wrong = vec![ds[0].clone(), dir(HookSite::mlp_activation(0, 6), 0, unit(16, 0))];
    assert!(matches!(project_chunks(&p, &chunks, &wrong), Err(LabError::Projection(_))));
    chunks[0].focal = 8;
    assert!(matches!(project_chunks(&p, &chunks, &ds), Err(LabError::Alignment(_))));
}

#[test]
fn unit_and_orthogonal_projections() {
    let a = unit(5, 2);
    let d = dir(HookSite::block_output(0, 0), 0, a.clone());
    assert!((d.project(&a).unwrap() - 1.0).abs() < 1e-15);
    let mut h = vec![a[1], -a[0], 0.0, 0.0, 0.0];
    assert!(d.project(&h).unwrap().abs() < 1e-15);
    h.pop();
    assert!(matches!(d.project(&h), Err(LabError::Projection(_))));
}

#[test]
fn single_seed_is_signed_z_score() {
    let raw = vec![vec![1.0, 2.0, 3.0, 6.0]];
    let out = normalize_scores(&raw, &[-1.0]).unwrap();
    // mean 3, population sd sqrt(3.5)
    let sd = 3.5f64.sqrt();
    let want = [2.0 / sd, 1.0 / sd, 0.0, -3.0 / sd];
    for (o, w) in out.iter().zip(want) {
        assert!((o - w).abs() < 1e-15);
    }
    assert!(matches!(normalize_scores(&[vec![2.0; 4]], &[1.0]), Err(LabError::Degenerate(_))));
    assert!(matches!(normalize_scores(&[], &[]), Err(LabError::Input(_))));
    assert!(matches!(normalize_scores(&raw, &[1.0, 1.0]), Err(LabError::Dimension(_))));
}

fn seeds() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..4).prop_flat_map(|k| prop::collection::vec(prop::collection::vec(-100.0..100.0f64, 12), k))
}

proptest! {
    #[test]
    fn z_scores_are_standard(xs in prop::collection::vec(-1e3..1e3f64, 3..50)) {
        prop_assume!(crate::behavior::mean_sd(&xs).1 > 1e-6);
        let z = z_scores(&xs).unwrap();
        let (m, s) = crate::behavior::mean_sd(&z);
        prop_assert!(m.abs() < 1e-10 && (s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn seed_negation_is_invisible(raw in seeds(), signs in prop::collection::vec(prop::bool::ANY, 3), which in 0usize..3) {
        let signs: Vec<f64> = signs.iter().take(raw.len()).map(|&b| if b { 1.0 } else { -1.0 }).collect();
        let which = which % raw.len();
        let mut flipped = raw.clone();
        flipped[which].iter_mut().for_each(|x| *x = -*x);
        let mut flipped_signs = signs.clone();
        flipped_signs[which] = -flipped_signs[which];
        prop_assert_eq!(normalize_scores(&raw, &signs).unwrap(), normalize_scores(&flipped, &flipped_signs).unwrap());
    }

    #[test]
    fn positive_affine_maps_leave_scores(raw in seeds(), scale in 0.1..10.0f64, shift in -50.0..50.0f64) {
        let signs = vec![1.0; raw.len()];
        let mut moved = raw.clone();
        moved[0].iter_mut().for_each(|x| *x = scale * *x + shift);
        for (a, b) in normalize_scores(&raw, &signs).unwrap().iter().zip(normalize_scores(&moved, &signs).unwrap()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}

fn scored(scores: &[f64], focal_words: &[&str]) -> Vec<ChunkRecord> {
    scores
        .iter()
        .zip(focal_words)
        .enumerate()
        .map(|(id, (&score, w))| ChunkRecord {
            id,
            tokens: vec![0; 2],
            text: format!("x {w}"),
            focal: 1,
            projections: vec![score],
            score,
        })
        .collect()
}

#[test]
fn top_chunks_rank_filter_and_ties() {
    let cs = scored(&[0.5, 2.0, -1.0, 2.0, 3.0, -2.0], &["a", "b", "c", "d", ".", "f"]);
    let high: Vec<usize> = top_chunks(&cs, 3, Polarity::High, &is_whitespace_token).iter().map(|c| c.id).collect();
    assert_eq!(high, [1, 3, 0]);
    let low: Vec<usize> = top_chunks(&cs, 2, Polarity::Low, &is_whitespace_token).iter().map(|c| c.id).collect();
    assert_eq!(low, [5, 2]);
    assert!(top_chunks(&cs, 0, Polarity::High, &is_whitespace_token).is_empty());
    let all: Vec<usize> = top_chunks(&cs, 10, Polarity::High, &|_| false).iter().map(|c| c.id).collect();
    assert_eq!(all, [4, 1, 3, 0, 2, 5]);
    assert!(is_whitespace_token("") && is_whitespace_token(",.") && !is_whitespace_token("a."));
}

proptest! {
    #[test]
    fn top_lists_are_monotone_and_disjoint(scores in prop::collection::vec(-5.0..5.0f64, 0..40), k in 0usize..20) {
        let words = vec!["w"; scores.len()];
        let cs = scored(&scores, &words);
        let high = top_chunks(&cs, k, Polarity::High, &is_whitespace_token);
        let low = top_chunks(&cs, k, Polarity::Low, &is_whitespace_token);
        prop_assert!(high.windows(2).all(|w| w[0].score >= w[1].score));
        prop_assert!(low.windows(2).all(|w| w[0].score <= w[1].score));
        if 2 * k <= cs.len() {
            prop_assert!(high.iter().all(|h| low.iter().all(|l| l.id != h.id)));
        }
    }
}

#[test]
fn report_round_trip_and_attach() {
    let mut cs = scored(&[0.0, 0.0], &["a", "b"]);
    attach_scores(&mut cs, &[vec![1.0, 2.0], vec![3.0, 4.0]], &[0.5, -0.5]).unwrap();
    assert_eq!(cs[1].projections, [2.0, 4.0]);
    assert_eq!(cs[1].score, -0.5);
    assert_eq!(chunks_from_json(&chunks_to_json(&cs).unwrap()).unwrap(), cs);
    assert!(matches!(attach_scores(&mut cs, &[vec![1.0]], &[0.5, 0.5]), Err(LabError::Dimension(_))));
}

#[test]
fn seed_sign_follows_correlation() {
    assert_eq!(seed_sign(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.5]).unwrap(), -1.0);
    assert_eq!(seed_sign(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.5]).unwrap(), 1.0);
}
