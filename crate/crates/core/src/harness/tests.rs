use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use super::exps::finite_mean;
use super::*;
use crate::behavior::pearson_r;
use crate::error::LabError;
use crate::lm::SiteKind;
use crate::stimgen::Role;
use crate::subspace::{chunks_from_json, is_whitespace_token, top_chunks, Polarity};

fn tiny_lm() -> LmSpec {
    let mut lm = LmSpec { n_layers: 2, n_heads: 2, d_model: 16, d_mlp: 32, max_seq_len: 16, corpus_size: 400, ..LmSpec::default() };
    lm.hyper.steps = 60;
    lm
}

/// A barely trained checkpoint shared by every test here.
fn checkpoint() -> &'static Path {
    static CK: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    let (_, p) = CK.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lm.ilab");
        let spec = ExperimentSpec { lm: tiny_lm(), ..ExperimentSpec::new(ExperimentId::Exp1) };
        train_and_save(&spec, &path).unwrap();
        (dir, path)
    });
    p
}

fn spec(exp: ExperimentId, out: &Path) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(exp);
    s.checkpoint = Some(checkpoint().to_path_buf());
    s.out = Some(out.to_path_buf());
    s.seeds = vec![0, 1];
    s.eval_pairs = 6;
    s.das.train_pairs = 16;
    s.das.warmup_steps = 2;
    s.sweep.roles = Some(vec![Role::Licensor, Role::V2]);
    s.chunks.count = 50;
    s.chunks.top_k = 5;
    s.chunks.synthetic_sentences = 40;
    s.lm = tiny_lm();
    s
}

#[test]
fn config_defaults_and_errors() {
    let s = ExperimentSpec::from_json(r#"{"experiment": "exp2"}"#).unwrap();
    assert_eq!(s.seeds.len(), 5);
    assert_eq!((s.das.train_pairs, s.eval_pairs, s.split.train, s.split.holdout), (400, 100, 6, 2));
    assert_eq!((s.das.lr, s.das.warmup_steps, s.das.batch, s.das.accumulation, s.das.epochs), (5e-3, 100, 4, 4, 1));
    let partial = ExperimentSpec::from_json(r#"{"experiment": "exp2", "das": {"epochs": 3}}"#).unwrap();
    assert_eq!((partial.das.epochs, partial.das.lr), (3, 5e-3));
    let err = |text: &str| match ExperimentSpec::from_json(text) {
        Err(LabError::Config(m)) => m,
        other => panic!("expected a config error, got {other:?}"),
    };
    assert!(err("{}").contains("experiment"));
    assert!(err(r#"{"experiment": "exp2", "eval_pairs": 0}"#).contains("eval_pairs"));
    assert!(err(r#"{"experiment": "exp2", "colour": 1}"#).contains("colour"));
    assert!(err(r#"{"experiment": "exp3", "split": {"train": 5, "holdout": 2}}"#).contains("split"));
    assert!(err(r#"{"experiment": "exp1", "seeds": [1, 1]}"#).contains("seeds"));
    let no_ck = ExperimentSpec::new(ExperimentId::Exp1);
    assert!(matches!(run_experiment(&no_ck), Err(LabError::Config(m)) if m.contains("checkpoint")));
}

#[test]
fn spec_hash_ignores_output_root() {
    let a = spec(ExperimentId::Exp1, Path::new("/a"));
    let b = spec(ExperimentId::Exp1, Path::new("/b"));
    assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    let c = ExperimentSpec { stimulus_seed: 1, ..a.clone() };
    assert_ne!(run_id(&a).unwrap(), run_id(&c).unwrap());
}

#[test]
fn exp1_correlation_is_recomputable_from_csv() {
    let out = tempfile::tempdir().unwrap();
    let s = spec(ExperimentId::Exp1, out.path());
    let rec = run_experiment(&s).unwrap();
    let dir = run_dir(&s).unwrap();
    let text = std::fs::read_to_string(dir.join("behavior.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), format!("# spec_hash={}", s.hash().unwrap()));
    let (h, rows) = read_csv(&dir.join("behavior.csv")).unwrap();
    assert_eq!(h, ["conjunct_id", "p_gap", "rating", "mean_licensing", "preference_rate"]);
    assert_eq!(rows.len(), 24);
    let g: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    let l: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    // Two-pass textbook formula, independent of the library routine.
    let n = g.len() as f64;
    let (mg, ml) = (g.iter().sum::<f64>() / n, l.iter().sum::<f64>() / n);
    let cov: f64 = g.iter().zip(&l).map(|(a, b)| (a - mg) * (b - ml)).sum();
    let vg: f64 = g.iter().map(|a| (a - mg).powi(2)).sum();
    let vl: f64 = l.iter().map(|b| (b - ml).powi(2)).sum();
    let r = cov / (vg * vl).sqrt();
    assert!((rec.summary["r_p_gap"].as_f64().unwrap() - r).abs() < 1e-12);
    assert_eq!(RunRecord::load(&dir).unwrap(), rec);
    assert!(rec.files.iter().any(|f| f.name == "behavior.csv"));
}

#[test]
fn exp2_reruns_are_byte_identical_and_report_grid_matches_sweep() {
    let (o1, o2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut s = spec(ExperimentId::Exp2, o1.path());
    s.conjunct_cells = ConjunctCells::Best;
    run_experiment(&s).unwrap();
    let s2 = ExperimentSpec { out: Some(o2.path().to_path_buf()), ..s.clone() };
    let rec = run_experiment(&s2).unwrap();
    let (d1, d2) = (run_dir(&s).unwrap(), run_dir(&s2).unwrap());
    for f in &rec.files {
        if f.name.ends_with(".csv") {
            assert_eq!(std::fs::read(d1.join(&f.name)).unwrap(), std::fs::read(d2.join(&f.name)).unwrap(), "{}", f.name);
        }
    }
    let (h, rows) = read_csv(&d1.join("grid.csv")).unwrap();
    assert_eq!(h, ["site", "layer", "position", "seed", "odds", "control_odds", "delta"]);
    assert_eq!(rows.len(), 2 * 2 * 2);
    let (_, corr) = read_csv(&d1.join("correlations.csv")).unwrap();
    assert_eq!(corr.len(), 2);
    let html = std::fs::read_to_string(emit_report(&d1).unwrap()).unwrap();
    assert_eq!(html.matches(r#"class="cell""#).count(), 2 * 2);
    assert!(html.contains("<svg"));
    let before = std::fs::read(d1.join(REPORT)).unwrap();
    emit_report(&d1).unwrap();
    assert_eq!(std::fs::read(d1.join(REPORT)).unwrap(), before);
}

#[test]
fn exp3_subspace_correlations_recompute_from_positions() {
    let out = tempfile::tempdir().unwrap();
    let mut s = spec(ExperimentId::Exp3, out.path());
    s.sweep.layers = Some(vec![1]);
    s.sweep.roles = Some(vec![Role::V2]);
    let rec = run_experiment(&s).unwrap();
    let dir = run_dir(&s).unwrap();
    let (_, sub) = read_csv(&dir.join("subspace.csv")).unwrap();
    let (_, pos) = read_csv(&dir.join("positions.csv")).unwrap();
    assert_eq!(sub.len(), 2);
    let mut rs = Vec::new();
    for row in &sub {
        let mine: Vec<&Vec<String>> = pos.iter().filter(|p| p[..4] == row[..4]).collect();
        assert_eq!(mine.len(), 12);
        let x: Vec<f64> = mine.iter().map(|p| p[6].parse().unwrap()).collect();
        let y: Vec<f64> = mine.iter().map(|p| p[5].parse().unwrap()).collect();
        let r = pearson_r(&x, &y).unwrap().abs();
        assert!((r - row[4].parse::<f64>().unwrap()).abs() < 1e-12);
        rs.push(r);
    }
    let best = rec.summary["best_subspace"]["mean_abs_r"].as_f64().unwrap();
    assert!((best - finite_mean(&rs)).abs() < 1e-12);
}

#[test]
fn exp4_tables_follow_top_chunks() {
    let out = tempfile::tempdir().unwrap();
    let mut s = spec(ExperimentId::Exp4, out.path());
    s.chunks.layer = 1;
    let rec = run_experiment(&s).unwrap();
    assert!(rec.summary["auc"].as_f64().is_some());
    let dir = run_dir(&s).unwrap();
    let chunks = chunks_from_json(&std::fs::read_to_string(dir.join("chunks.json")).unwrap()).unwrap();
    assert_eq!(chunks.len(), 40);
    assert!(chunks.iter().all(|c| c.tokens.len() == 8 && c.focal == 7 && c.projections.len() == 2));
    let (_, rows) = read_csv(&dir.join("top_chunks.csv")).unwrap();
    let html = std::fs::read_to_string(emit_report(&dir).unwrap()).unwrap();
    for (polarity, name) in [(Polarity::High, "high"), (Polarity::Low, "low")] {
        let want: Vec<String> = top_chunks(&chunks, 5, polarity, &is_whitespace_token).iter().map(|c| c.id.to_string()).collect();
        let got: Vec<String> = rows.iter().filter(|r| r[0] == name).map(|r| r[2].clone()).collect();
        assert_eq!(got, want);
    }
    assert_eq!(html.matches("<mark>").count(), 10);
}

#[test]
fn report_needs_a_manifest() {
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(emit_report(empty.path()), Err(LabError::Report(_))));
    std::fs::write(empty.path().join(MANIFEST), "").unwrap();
    assert!(matches!(emit_report(empty.path()), Err(LabError::Report(_))));
}

#[test]
fn sweep_enumerates_heads() {
    let out = tempfile::tempdir().unwrap();
    let mut s = spec(ExperimentId::Exp2, out.path());
    s.sweep = Sweep { kinds: vec![SiteKind::AttnHeadOv, SiteKind::MlpActivation], layers: Some(vec![0]), heads: None, roles: Some(vec![Role::V2]) };
    let ck = crate::lm::checkpoint::load::<f64>(checkpoint()).unwrap();
    let vocab = ck.vocab.unwrap();
    let ctx = exps::Ctx { spec: &s, params: &ck.params, vocab: &vocab, lex: s.lexicon().unwrap(), conjuncts: s.conjuncts().unwrap() };
    let roles = [Role::Prefix, Role::Prefix, Role::Licensor, Role::Subject, Role::V2];
    let sites = ctx.sites(&s.sweep, &roles).unwrap();
    assert_eq!(sites.len(), 3);
    assert!(sites.iter().all(|(site, r)| site.position == 4 && *r == Role::V2));
    let bad = Sweep { roles: Some(vec![Role::Conjunction]), ..s.sweep.clone() };
    assert!(matches!(ctx.sites(&bad, &roles), Err(LabError::Config(_))));
}
