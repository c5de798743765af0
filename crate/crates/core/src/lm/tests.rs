use super::*;
use crate::error::LabError;
use crate::numerics::{cross_entropy, Graph, Tensor};

fn tiny() -> ModelConfig {
    ModelConfig::new(2, 2, 8, 16, 11, 6)
}

fn tiny_params(seed: u64) -> ModelParams {
    init_model(tiny(), seed).unwrap()
}

/// Perturbs every weight so layer norms and biases are non-trivial.
fn jittered(seed: u64) -> ModelParams {
    let mut p = tiny_params(seed);
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
    for buf in p.buffers_mut() {
        for v in buf.iter_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v += ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.2;
        }
    }
    p
}

#[test]
fn desk_config_parameter_count() {
    // 256·128 + 24·128 + 4·(4·128² + 4·128 + 2·128·512 + 512 + 128 + 4·128)
    //   + 2·128 + 128·256, each term counted independently below.
    let (v, d, m, l, t) = (256usize, 128usize, 512usize, 4usize, 24usize);
    let embeddings = v * d + t * d;
    let attn = 4 * (d * d + d);
    let mlp = d * m + m + m * d + d;
    let norms = 2 * 2 * d;
    let head = 2 * d + d * v;
    let by_hand = embeddings + l * (attn + mlp + norms) + head;
    assert_eq!(by_hand, 861_952);
    let c = ModelConfig::new(4, 4, 128, 512, 256, 24);
    assert_eq!(c.param_count(), 861_952);
    assert_eq!(init_model(c, 0).unwrap().num_params(), 861_952);
}

#[test]
fn config_errors() {
    let c = ModelConfig::new(1, 4, 130, 8, 10, 4);
    assert!(matches!(init_model(c, 0), Err(LabError::Config(_))));
    let c = ModelConfig::new(0, 1, 4, 8, 10, 4);
    assert!(matches!(c.validate(), Err(LabError::Config(_))));
}

#[test]
fn init_is_deterministic_and_seed_sensitive() {
    let a = tiny_params(3);
    let b = tiny_params(3);
    let c = tiny_params(4);
    for ((x, y), z) in a.tensors().iter().zip(b.tensors()).zip(c.tensors()) {
        assert_eq!(x.data(), y.data());
        if x.len() > 16 {
            assert_ne!(x.data(), z.data());
        }
    }
}

#[test]
fn identity_patch_is_exact_at_every_site() {
    let p = jittered(1);
    let c = p.config;
    let tokens = [3usize, 1, 4, 1, 5];
    let base = forward_with_hooks(&p, &tokens, &[], &[]).unwrap();
    for layer in 0..c.n_layers {
        for pos in 0..tokens.len() {
            let mut sites = vec![
                HookSite::block_output(layer, pos),
                HookSite::mlp_activation(layer, pos),
            ];
            sites.extend((0..c.n_heads).map(|h| HookSite::attn_head_ov(layer, h, pos)));
            let cap = forward_with_hooks(&p, &tokens, &sites, &[]).unwrap();
            for (site, v) in &cap.captured {
                assert_eq!(v.len(), site.dim(&c));
                let patched = forward_with_hooks(&p, &tokens, &[], &[(*site, v.clone())]).unwrap();
                let diff = patched
                    .logits
                    .data()
                    .iter()
                    .zip(base.logits.data())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(diff <= 1e-12, "{site}: {diff}");
            }
        }
    }
}

#[test]
fn patch_changes_downstream_only() {
    let p = jittered(2);
    let tokens = [1usize, 2, 3, 4];
    let base = forward_with_hooks(&p, &tokens, &[], &[]).unwrap();
    let site = HookSite::block_output(0, 2);
    let patched = forward_with_hooks(&p, &tokens, &[], &[(site, vec![0.5; 8])]).unwrap();
    let v = p.config.vocab_size;
    assert_eq!(&patched.logits.data()[..2 * v], &base.logits.data()[..2 * v]);
    assert_ne!(&patched.logits.data()[2 * v..3 * v], &base.logits.data()[2 * v..3 * v]);
}

#[test]
fn site_errors() {
    let p = tiny_params(0);
    let tokens = [1usize, 2, 3];
    let far = HookSite::block_output(0, 3);
    assert!(matches!(forward_with_hooks(&p, &tokens, &[far], &[]), Err(LabError::Index(_))));
    let bad = (HookSite::attn_head_ov(1, 0, 1), vec![0.0; 8]);
    assert!(matches!(forward_with_hooks(&p, &tokens, &[], &[bad]), Err(LabError::Patch(_))));
    let head = HookSite::attn_head_ov(0, 2, 0);
    assert!(matches!(forward_with_hooks(&p, &tokens, &[head], &[]), Err(LabError::Index(_))));
    let layer = HookSite::mlp_activation(2, 0);
    assert!(matches!(forward_with_hooks(&p, &tokens, &[layer], &[]), Err(LabError::Index(_))));
}

#[test]
fn site_shapes() {
    let p = tiny_params(0);
    let sites = [
        HookSite::block_output(1, 0),
        HookSite::attn_head_ov(1, 1, 0),
        HookSite::mlp_activation(0, 0),
    ];
    let out = forward_with_hooks(&p, &[1, 2], &sites, &[]).unwrap();
    let dims: Vec<usize> = out.captured.iter().map(|(_, v)| v.len()).collect();
    assert_eq!(dims, vec![8, 4, 16]);
    assert_eq!(out.logits.shape(), &[2, 11]);
}

#[test]
fn heads_through_output_projection_reproduce_attention_output() {
    let p = jittered(5);
    let c = p.config;
    let tokens = [2usize, 7, 1, 9];
    for layer in 0..c.n_layers {
        let mut g = Graph::new();
        let vars = p.bind(&mut g, false);
        let mut rec = Recorder::default();
        forward::forward_graph(&mut g, &vars, &c, &[&tokens], &mut rec).unwrap();
        let resid_in = if layer == 0 {
            None
        } else {
            Some(rec.matrices[&(SiteKind::BlockOutput, layer - 1)].clone())
        };
        // Independent attention: recompute the block's attention sublayer by hand.
        let lv = &vars.layers[layer];
        let x = match resid_in {
            Some(t) => t,
            None => {
                let te = g.value(vars.tok_emb);
                let pe = g.value(vars.pos_emb);
                let mut data = Vec::new();
                for (i, &t) in tokens.iter().enumerate() {
                    data.extend(te.row(t).iter().zip(pe.row(i)).map(|(a, b)| a + b));
                }
                Tensor::from_vec(vec![tokens.len(), c.d_model], data).unwrap()
            }
        };
        let attn_out = naive_attention_output(&g, lv, &c, &x);
        let z = &rec.matrices[&(SiteKind::AttnHeadOv, layer)];
        let sites: Vec<HookSite> = (0..tokens.len())
            .flat_map(|pos| (0..c.n_heads).map(move |h| HookSite::attn_head_ov(layer, h, pos)))
            .collect();
        let cap = forward_with_hooks(&p, &tokens, &sites, &[]).unwrap();
        for pos in 0..tokens.len() {
            let concat: Vec<f64> = cap.captured[pos * c.n_heads..(pos + 1) * c.n_heads]
                .iter()
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            assert_eq!(concat.as_slice(), z.row(pos));
            let wo = g.value(lv.w_o);
            let bo = g.value(lv.b_o).data();
            for j in 0..c.d_model {
                let mut s = bo[j];
                for (i, &zi) in concat.iter().enumerate() {
                    s += zi * wo.data()[i * c.d_model + j];
                }
                let want = attn_out[pos * c.d_model + j];
                assert!((s - want).abs() <= 1e-10, "layer {layer} pos {pos}");
            }
        }
    }
}

/// Textbook per-head softmax attention followed by the output projection.
fn naive_attention_output(g: &Graph, lv: &LayerVars, c: &ModelConfig, x: &Tensor) -> Vec<f64> {
    let (n, d) = x.dims2().unwrap();
    let dh = c.d_head();
    let gamma = g.value(lv.ln1_gamma).data();
    let beta = g.value(lv.ln1_beta).data();
    let mut h = vec![0.0; n * d];
    for r in 0..n {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        for j in 0..d {
            h[r * d + j] = (row[j] - mean) / (var + c.eps()).sqrt() * gamma[j] + beta[j];
        }
    }
    let proj = |w: crate::numerics::Var, b: crate::numerics::Var| {
        let (w, b) = (g.value(w).data(), g.value(b).data());
        let mut out = vec![0.0; n * d];
        for r in 0..n {
            for j in 0..d {
                out[r * d + j] = b[j] + (0..d).map(|i| h[r * d + i] * w[i * d + j]).sum::<f64>();
            }
        }
        out
    };
    let (q, k, v) = (proj(lv.w_q, lv.b_q), proj(lv.w_k, lv.b_k), proj(lv.w_v, lv.b_v));
    let mut z = vec![0.0; n * d];
    for head in 0..c.n_heads {
        let o = head * dh;
        for i in 0..n {
            let scores: Vec<f64> = (0..=i)
                .map(|j| (0..dh).map(|t| q[i * d + o + t] * k[j * d + o + t]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let mx = scores.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let tot: f64 = e.iter().sum();
            for (j, ej) in e.iter().enumerate() {
                for t in 0..dh {
                    z[i * d + o + t] += ej / tot * v[j * d + o + t];
                }
            }
        }
    }
    let (wo, bo) = (g.value(lv.w_o).data(), g.value(lv.b_o).data());
    let mut out = vec![0.0; n * d];
    for r in 0..n {
        for j in 0..d {
            out[r * d + j] = bo[j] + (0..d).map(|i| z[r * d + i] * wo[i * d + j]).sum::<f64>();
        }
    }
    out
}

#[test]
fn surprisal_uniform_and_composition() {
    let mut p = tiny_params(0);
    let names = p.names();
    let ui = names.iter().position(|n| n == "unembed").unwrap();
    p.buffers_mut()[ui].iter_mut().for_each(|v| *v = 0.0);
    let s = surprisal(&p, &[1, 2], 5).unwrap();
    assert!((s - (11f64).ln()).abs() < 1e-12);

    let p = jittered(9);
    let prefix = [4usize, 2, 8];
    let out = forward_with_hooks(&p, &prefix, &[], &[]).unwrap();
    for label in 0..11 {
        let s = surprisal(&p, &prefix, label).unwrap();
        let ce = cross_entropy(out.logits.row(2), label).unwrap();
        assert!(s >= 0.0);
        assert!((s - ce).abs() < 1e-12);
    }
    assert!(matches!(surprisal(&p, &prefix, 11), Err(LabError::Index(_))));
    assert!(matches!(surprisal(&p, &[], 1), Err(LabError::Input(_))));
}

#[test]
fn batched_scoring_matches_single() {
    let p = jittered(4);
    let a: &[usize] = &[1, 2, 3];
    let b: &[usize] = &[5, 6];
    let both = surprisals(&p, &[(a, 4), (b, 7)]).unwrap();
    assert_eq!(both[0], surprisal(&p, a, 4).unwrap());
    assert_eq!(both[1], surprisal(&p, b, 7).unwrap());
}

#[test]
fn future_tokens_do_not_change_past_logits() {
    let p = jittered(6);
    let v = p.config.vocab_size;
    let mut state = 17u64;
    for _ in 0..20 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let t = (state >> 33) as usize % 5;
        let a: Vec<usize> = (0..6).map(|i| (i * 7 + 3) % v).collect();
        let mut b = a.clone();
        for (i, x) in b.iter_mut().enumerate().skip(t + 1) {
            *x = (*x + i + (state as usize % 5) + 1) % v;
        }
        let la = forward_with_hooks(&p, &a, &[], &[]).unwrap().logits;
        let lb = forward_with_hooks(&p, &b, &[], &[]).unwrap().logits;
        assert_eq!(&la.data()[..(t + 1) * v], &lb.data()[..(t + 1) * v]);
    }
}

#[test]
fn checkpoint_round_trip_and_errors() {
    let p = jittered(7);
    let vocab = Vocab::new(["a", "b"]);
    let bytes = checkpoint::to_bytes(&p, Some(&vocab)).unwrap();
    let back: Checkpoint = checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.vocab.as_ref(), Some(&vocab));
    for (x, y) in p.tensors().iter().zip(back.params.tensors()) {
        let xb: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
        let yb: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(xb, yb);
    }
    assert_eq!(checkpoint::to_bytes(&back.params, Some(&vocab)).unwrap(), bytes);

    let truncated = &bytes[..bytes.len() - 3];
    assert!(matches!(checkpoint::from_bytes::<f64>(truncated), Err(LabError::Format(_))));
    let mut foreign = bytes.clone();
    foreign[..4].copy_from_slice(b"GGUF");
    assert!(matches!(checkpoint::from_bytes::<f64>(&foreign), Err(LabError::Format(_))));
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(checkpoint::from_bytes::<f64>(&long), Err(LabError::Format(_))));
    assert!(matches!(checkpoint::from_bytes::<f64>(b"IL"), Err(LabError::Format(_))));
}

#[test]
fn checkpoint_f32_round_trip() {
    let p: ModelParams<f32> = jittered(8).cast();
    let bytes = checkpoint::to_bytes(&p, None).unwrap();
    let back: Checkpoint<f32> = checkpoint::from_bytes(&bytes).unwrap();
    for (x, y) in p.tensors().iter().zip(back.params.tensors()) {
        assert_eq!(x.data(), y.data());
    }
    let widened: Checkpoint<f64> = checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(widened.params.tensors()[0].data()[0], p.tensors()[0].data()[0] as f64);
}

fn toy_corpus() -> Vec<Vec<usize>> {
    (0..10)
        .map(|i| vec![1 + i % 10, 1 + (i * 3 + 1) % 10, 1 + (i * 7 + 2) % 10, 1 + (i + 5) % 10])
        .collect()
}

#[test]
fn training_memorizes_small_corpus() {
    let corpus = toy_corpus();
    let config = ModelConfig::new(2, 2, 32, 64, 11, 8);
    let hyper = TrainHyper {
        lr: 1e-2,
        batch: 10,
        steps: 400,
        seed: 1,
        warmup_steps: 20,
        grad_clip: Some(1.0),
    };
    let out = train_lm::<f64>(config, &corpus, &hyper).unwrap();
    assert_eq!(out.losses.len(), 400);
    for s in &corpus {
        for t in 1..s.len() {
            let sp = surprisal(&out.params, &s[..t], s[t]).unwrap();
            assert!(sp < 0.1, "{sp}");
        }
    }
}

#[test]
fn training_is_deterministic_and_rejects_bad_corpora() {
    let corpus = toy_corpus();
    let config = ModelConfig::new(1, 2, 8, 16, 11, 8);
    let hyper = TrainHyper {
        steps: 5,
        batch: 3,
        ..TrainHyper::default()
    };
    let a = train_lm::<f64>(config, &corpus, &hyper).unwrap();
    let b = train_lm::<f64>(config, &corpus, &hyper).unwrap();
    assert_eq!(a.losses, b.losses);
    for (x, y) in a.params.tensors().iter().zip(b.params.tensors()) {
        assert_eq!(x.data(), y.data());
    }
    assert!(matches!(train_lm::<f64>(config, &[], &hyper), Err(LabError::Input(_))));
    assert!(matches!(train_lm::<f64>(config, &[vec![1, 40]], &hyper), Err(LabError::Input(_))));
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    let p = jittered(11);
    let c = p.config;
    let seqs: [&[usize]; 2] = [&[1, 4, 2, 7], &[3, 9, 5]];
    let targets: Vec<Option<usize>> = [4, 2, 7, 8, 9, 5, 6].into_iter().map(Some).collect();
    let loss_of = |params: &ModelParams| -> f64 {
        let mut g = Graph::new();
        let vars = params.bind(&mut g, false);
        let (logits, _) = forward::forward_graph(&mut g, &vars, &c, &seqs, &mut NoHook).unwrap();
        let l = g.cross_entropy(logits, targets.clone()).unwrap();
        g.value(l).item().unwrap()
    };
    let mut g = Graph::new();
    let vars = p.bind(&mut g, true);
    let (logits, _) = forward::forward_graph(&mut g, &vars, &c, &seqs, &mut NoHook).unwrap();
    let l = g.cross_entropy(logits, targets.clone()).unwrap();
    let grads = g.backward(l).unwrap();
    let h = 1e-5;
    for (ti, &var) in vars.all().iter().enumerate() {
        let analytic = grads.get(var);
        let n = analytic.len();
        for j in [0, n / 3, n / 2, n - 1] {
            let mut plus = p.clone();
            plus.buffers_mut()[ti][j] += h;
            let mut minus = p.clone();
            minus.buffers_mut()[ti][j] -= h;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let an = analytic.data()[j];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            assert!(rel <= 1e-4, "{} [{j}]: analytic {an} fd {fd}", p.names()[ti]);
        }
    }
}
