//! Encoder, decoders and losses against straight-line scalar re-implementations.

use graphpae::corruption::{sample_plan, PathMode};
use graphpae::encoder::{rbf_features, AttentionKind, Encoder, EncoderConfig, GraphContext};
use graphpae::model::{GraphPae, StepInputs};
use graphpae::objectives::LossWeights;
use graphpae::spectral::{graph_basis, relative_distances};
use graphpae::synth::make_random_graph;
use graphpae::trainer::init_rng;
use graphpae::Graph;
use graphpae_tensor::{ParamStore, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Mat = Vec<Vec<f64>>;

fn mat(store: &ParamStore, name: &str) -> Mat {
    let t = store.get(store.id(name).unwrap());
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn vecp(store: &ParamStore, name: &str) -> Vec<f64> {
    store.get(store.id(name).unwrap()).data().to_vec()
}

fn affine(x: &[f64], w: &Mat, b: &[f64]) -> Vec<f64> {
    (0..b.len())
        .map(|c| b[c] + x.iter().zip(w).map(|(xi, row)| xi * row[c]).sum::<f64>())
        .collect()
}

fn mlp(store: &ParamStore, name: &str, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = affine(x, &mat(store, &format!("{name}.0.w")), &vecp(store, &format!("{name}.0.b")))
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    affine(&h, &mat(store, &format!("{name}.1.w")), &vecp(store, &format!("{name}.1.b")))
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Scalar reference forward pass; returns (X^(L), P^(L)).
fn oracle_forward(cfg: &EncoderConfig, store: &ParamStore, g: &Graph, x: &Mat, p: &[f64]) -> (Mat, Mat) {
    let n = g.num_nodes();
    let src = g.sources();
    let dst = g.targets();
    let e_count = src.len();
    let h = cfg.hidden;
    let pd = cfg.pos_dim();
    let lift_w = mat(store, "enc.lift.w");
    let lift_b = vecp(store, "enc.lift.b");
    let mut xl: Mat = x.iter().map(|r| affine(r, &lift_w, &lift_b)).collect();
    let centers = cfg.rbf_centers();
    let s = cfg.sigma();
    let mut pl: Mat = p
        .iter()
        .map(|&v| {
            let gauss: Vec<f64> = centers
                .iter()
                .map(|m| (-(v - m) * (v - m) / (2.0 * s * s)).exp())
                .collect();
            mlp(store, "enc.rbf", &gauss)
        })
        .collect();
    let deg: Vec<f64> = (0..n).map(|i| src.iter().filter(|&&s| s == i).count() as f64).collect();
    for l in 0..cfg.layers {
        let name = format!("enc.l{l}");
        let mut alpha = vec![vec![0.0; pd]; e_count];
        match cfg.attention {
            AttentionKind::GatedGcn => {
                let w1 = mat(store, &format!("{name}.att.w1"));
                let w2 = mat(store, &format!("{name}.att.w2"));
                let b = vecp(store, &format!("{name}.att.b"));
                for e in 0..e_count {
                    for c in 0..h {
                        let mut v = b[c];
                        for k in 0..h {
                            v += xl[src[e]][k] * w1[k][c] + xl[dst[e]][k] * w2[k][c];
                        }
                        alpha[e][c] = sigmoid(v);
                    }
                }
            }
            AttentionKind::Gat => {
                let w = mat(store, &format!("{name}.att.w"));
                let ad = mat(store, &format!("{name}.att.a_dst"));
                let as_ = mat(store, &format!("{name}.att.a_src"));
                let z: Mat = xl.iter().map(|r| affine(r, &w, &vec![0.0; h])).collect();
                for e in 0..e_count {
                    for hd in 0..pd {
                        let mut v = 0.0;
                        for c in 0..h {
                            v += z[src[e]][c] * ad[c][hd] + z[dst[e]][c] * as_[c][hd];
                        }
                        alpha[e][hd] = if v > 0.0 { v } else { 0.2 * v };
                    }
                }
            }
        }
        if cfg.edge_vocab.is_some() {
            let emb = mat(store, &format!("{name}.edge_emb"));
            let types = g.edge_types().unwrap();
            for e in 0..e_count {
                for c in 0..pd {
                    alpha[e][c] += emb[types[e]][c];
                }
            }
        }
        let mut coef = vec![vec![0.0; pd]; e_count];
        for e in 0..e_count {
            for c in 0..pd {
                coef[e][c] = alpha[e][c] + pl[e][c];
            }
        }
        match cfg.attention {
            AttentionKind::GatedGcn => {
                for e in 0..e_count {
                    for c in 0..pd {
                        coef[e][c] /= deg[src[e]];
                    }
                }
            }
            AttentionKind::Gat => {
                for i in 0..n {
                    let edges: Vec<usize> = (0..e_count).filter(|&e| src[e] == i).collect();
                    for c in 0..pd {
                        let m = edges.iter().map(|&e| coef[e][c]).fold(f64::NEG_INFINITY, f64::max);
                        let z: f64 = edges.iter().map(|&e| (coef[e][c] - m).exp()).sum();
                        for &e in &edges {
                            coef[e][c] = (coef[e][c] - m).exp() / z;
                        }
                    }
                }
            }
        }
        let msg: Mat = xl.iter().map(|r| mlp(store, &format!("{name}.msg"), r)).collect();
        let per_head = h / pd;
        let mut next = vec![vec![0.0; h]; n];
        for e in 0..e_count {
            for c in 0..h {
                let k = match cfg.attention {
                    AttentionKind::Gat => c / per_head,
                    AttentionKind::GatedGcn => c,
                };
                next[src[e]][c] += coef[e][k] * msg[dst[e]][c];
            }
        }
        if cfg.activation {
            for r in &mut next {
                for v in r {
                    *v = v.max(0.0);
                }
            }
        }
        for e in 0..e_count {
            for c in 0..pd {
                pl[e][c] += alpha[e][c];
            }
        }
        xl = next;
    }
    (xl, pl)
}

fn random_setup(kind: AttentionKind, edges: bool, seed: u64) -> (EncoderConfig, ParamStore, Encoder, Graph, Vec<f64>) {
    let g = make_random_graph(8, 0.45, 3, seed).unwrap();
    let g = if edges {
        let types = g
            .sources()
            .iter()
            .zip(g.targets())
            .map(|(&i, &j)| (i + j) % 2)
            .collect();
        g.with_edge_types(types).unwrap()
    } else {
        g
    };
    let mut cfg = EncoderConfig::new(3);
    cfg.attention = kind;
    cfg.hidden = 6;
    cfg.heads = 3;
    cfg.rbf_count = 7;
    cfg.edge_vocab = edges.then_some(2);
    let mut store = ParamStore::new();
    let enc = Encoder::new(cfg.clone(), &mut store, &mut init_rng(seed)).unwrap();
    // Nonzero biases so every term of the formula is exercised.
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.get_mut(id).data_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    let b = graph_basis(&g, 4, seed).unwrap();
    let p = relative_distances(&b, &g).unwrap().values().to_vec();
    (cfg, store, enc, g, p)
}

fn rows(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn max_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn forward_matches_scalar_reference() {
    for kind in [AttentionKind::Gat, AttentionKind::GatedGcn] {
        for edges in [false, true] {
            for seed in 0..3 {
                let (cfg, store, enc, g, p) = random_setup(kind, edges, seed);
                let ctx = GraphContext::new(&g);
                let mut tape = Tape::new();
                let x = tape.constant(g.features().clone());
                let out = enc.forward(&mut tape, &store, &ctx, x, &p, None).unwrap();
                let (ox, op) = oracle_forward(&cfg, &store, &g, &rows(g.features()), &p);
                let dx = max_diff(&rows(tape.value(out.x)), &ox);
                let dp = max_diff(&rows(tape.value(out.p)), &op);
                assert!(dx <= 1e-10 && dp <= 1e-10, "{kind} edges={edges} seed={seed}: {dx:e} {dp:e}");
            }
        }
    }
}

#[test]
fn rbf_matches_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..2.0)).collect();
    let centers: Vec<f64> = (0..9).map(|k| k as f64 * 0.25).collect();
    let g = rbf_features(&p, &centers, 0.3);
    for (e, &v) in p.iter().enumerate() {
        for (k, &m) in centers.iter().enumerate() {
            let want = (-(v - m).powi(2) / (2.0 * 0.09)).exp();
            assert!((g.get(e, k) - want).abs() <= 1e-12);
        }
    }
}

fn zero_store(store: &mut ParamStore) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        store.get_mut(id).data_mut().fill(0.0);
    }
}

#[test]
fn zero_weights_gatedgcn_closed_form() {
    let (g, _) = Graph::from_edges(3, &[(0, 1), (1, 2)], Tensor::full(3, 2, 1.0)).unwrap();
    let mut cfg = EncoderConfig::new(2);
    cfg.layers = 1;
    cfg.hidden = 4;
    cfg.rbf_count = 3;
    cfg.activation = false;
    let mut store = ParamStore::new();
    let enc = Encoder::new(cfg, &mut store, &mut init_rng(0)).unwrap();
    zero_store(&mut store);
    let msg_bias = [0.5, -1.0, 2.0, 0.25];
    let rbf_bias = [0.1, 0.2, 0.3, 0.4];
    store.get_mut(store.id("enc.l0.msg.1.b").unwrap()).data_mut().copy_from_slice(&msg_bias);
    store.get_mut(store.id("enc.rbf.1.b").unwrap()).data_mut().copy_from_slice(&rbf_bias);
    let ctx = GraphContext::new(&g);
    let mut tape = Tape::new();
    let x = tape.constant(g.features().clone());
    let out = enc.forward(&mut tape, &store, &ctx, x, &[0.3; 4], None).unwrap();
    let deg = [1.0, 2.0, 1.0];
    for i in 0..3 {
        for c in 0..4 {
            // Σ_j (0.5 + P⁰) / deg(i) · bias over deg(i) neighbours.
            let want = deg[i] * (0.5 + rbf_bias[c]) / deg[i] * msg_bias[c];
            assert!((tape.value(out.x).get(i, c) - want).abs() < 1e-15);
        }
    }
    for e in 0..4 {
        for c in 0..4 {
            assert_eq!(tape.value(out.p).get(e, c), 0.5 + rbf_bias[c]);
        }
    }
}

#[test]
fn zero_gat_scores_are_uniform() {
    let (g, _) = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)], Tensor::full(4, 2, 1.0)).unwrap();
    let mut cfg = EncoderConfig::new(2);
    cfg.attention = AttentionKind::Gat;
    cfg.layers = 1;
    cfg.hidden = 4;
    cfg.heads = 2;
    cfg.rbf_count = 3;
    cfg.activation = false;
    let mut store = ParamStore::new();
    let enc = Encoder::new(cfg, &mut store, &mut init_rng(0)).unwrap();
    zero_store(&mut store);
    store.get_mut(store.id("enc.l0.msg.1.b").unwrap()).data_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
    let ctx = GraphContext::new(&g);
    let mut tape = Tape::new();
    let x = tape.constant(g.features().clone());
    let out = enc.forward(&mut tape, &store, &ctx, x, &[0.7; 6], None).unwrap();
    // Hub: three neighbours with weight 1/3 each, summing to the bias.
    assert_eq!(tape.value(out.x).row(0).iter().map(|v| (v * 1e12).round() / 1e12).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0, 4.0]);
    // Zero attention leaves the position path at its lifted value.
    assert!(tape.value(out.p).data().iter().all(|&v| v == 0.0));
}

#[test]
fn gates_bounded() {
    let (_, store, enc, g, p) = random_setup(AttentionKind::GatedGcn, false, 9);
    let ctx = GraphContext::new(&g);
    let mut tape = Tape::new();
    let x = tape.constant(g.features().map(|v| v * 50.0));
    let x = enc.feature_lift.forward(&mut tape, &store, x).unwrap();
    let a = enc.attention(&mut tape, &store, &ctx, &enc.layers[0], x).unwrap();
    assert!(tape.value(a).data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    let _ = p;
}

#[test]
fn every_parameter_gets_finite_gradient() {
    for kind in [AttentionKind::Gat, AttentionKind::GatedGcn] {
        let g = make_random_graph(10, 0.4, 3, 2).unwrap();
        let types = g.sources().iter().zip(g.targets()).map(|(&i, &j)| (i + j) % 2).collect();
        let g = g.with_edge_types(types).unwrap();
        let mut cfg = EncoderConfig::new(3);
        cfg.attention = kind;
        cfg.hidden = 8;
        cfg.heads = 2;
        cfg.rbf_count = 8;
        cfg.edge_vocab = Some(2);
        let mut store = ParamStore::new();
        let model = GraphPae::new(cfg, LossWeights::default(), &mut store, &mut init_rng(4)).unwrap();
        let b = graph_basis(&g, 5, 0).unwrap();
        let p = relative_distances(&b, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let plan = sample_plan(10, 0.3, PathMode::Feature, 0.01, &mut rng).unwrap();
        let ctx = GraphContext::new(&g);
        let inp = StepInputs {
            ctx: &ctx,
            features: g.features(),
            clean_distances: p.values(),
            corrupt_distances: p.values(),
            plan: &plan,
        };
        let mut tape = Tape::new();
        let l = model.losses(&mut tape, &store, &inp, None).unwrap();
        let grads = tape.gradients(l.total, &store).unwrap();
        assert!(grads.all_finite());
        let token = grads.get(model.token);
        assert!(token.data().iter().any(|&v| v != 0.0), "{kind}: mask token gets no gradient");
    }
}

#[test]
fn position_decoder_gradient_scales_with_alpha() {
    let g = make_random_graph(10, 0.4, 3, 2).unwrap();
    let b = graph_basis(&g, 5, 0).unwrap();
    let p = relative_distances(&b, &g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let plan = sample_plan(10, 0.3, PathMode::Feature, 0.01, &mut rng).unwrap();
    let ctx = GraphContext::new(&g);
    let inp = StepInputs {
        ctx: &ctx,
        features: g.features(),
        clean_distances: p.values(),
        corrupt_distances: p.values(),
        plan: &plan,
    };
    let grad_for = |alpha: f64| {
        let mut store = ParamStore::new();
        let mut cfg = EncoderConfig::new(3);
        cfg.hidden = 8;
        cfg.rbf_count = 8;
        let w = LossWeights { alpha, gamma: 2.0 };
        let model = GraphPae::new(cfg, w, &mut store, &mut init_rng(4)).unwrap();
        let mut tape = Tape::new();
        let l = model.losses(&mut tape, &store, &inp, None).unwrap();
        let grads = tape.gradients(l.total, &store).unwrap();
        model
            .position_decoder_params()
            .iter()
            .flat_map(|&id| grads.get(id).data().to_vec())
            .collect::<Vec<f64>>()
    };
    let (g1, g2) = (grad_for(0.1), grad_for(0.2));
    for (a, b) in g1.iter().zip(&g2) {
        assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-12));
    }
}
