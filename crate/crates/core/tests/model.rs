mod common;

use graformer::graph::{build_incidence_graph, build_token_graph, KnowledgeGraph};
use graformer::model::{AttentionKind, EmbeddingRoutes, ForwardCtx, Graformer, GraphInput, ModelConfig};
use graformer::relpos::{build_r_matrix, PositionVocabulary, RelPos, RelPosConfig};
use graformer::tensor::{Element, Tape, Var, MASK_LOGIT};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: usize = 12;

fn three_node_graph() -> graformer::graph::IncidenceGraph {
    let kg = KnowledgeGraph::from_triples(["a", "b"], &[(0, "r", 1)]).unwrap();
    build_incidence_graph(&build_token_graph(&kg, &common::whitespace).unwrap())
}

fn fig1_input(config: &ModelConfig) -> GraphInput {
    let g = common::fig1_incidence();
    let r = build_r_matrix(&g, config.relpos).unwrap();
    // u1 and u2 share the label id of "used-for"
    GraphInput::new(vec![6, 7, 8, 9, 10, 11, 6 + 5, 9, 9], &r, config).unwrap()
}

fn eval_loss<T: Element>(model: &Graformer<T>, graph: &GraphInput, target: &[usize]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ctx = ForwardCtx::new(false, &mut rng);
    let mut tape = Tape::new(model.params());
    let l = model.loss(&mut tape, graph, target, 0.1, 5.0, &mut ctx).unwrap();
    tape.scalar(l).as_f64()
}

#[test]
fn full_model_gradient_check() {
    let config = ModelConfig::tiny(VOCAB);
    let mut model = common::scrambled_model::<f64>(config.clone(), 3, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let graph = common::random_graph_input(&mut rng, &three_node_graph(), &config);
    assert_eq!(graph.len(), 3);
    let target = [7, 9, 8, 10];

    let mut ctx_rng = ChaCha8Rng::seed_from_u64(0);
    let mut ctx = ForwardCtx::new(false, &mut ctx_rng);
    let grads = {
        let mut tape = Tape::new(model.params());
        let l = model.loss(&mut tape, &graph, &target, 0.1, 5.0, &mut ctx).unwrap();
        tape.backward(l).unwrap()
    };

    let h = 1e-5;
    let ids: Vec<_> = model.params().ids().collect();
    let mut checked = Vec::new();
    for id in ids {
        let analytic = grads.param(id).map(<[f64]>::to_vec);
        let name = model.params().get(id).name.clone();
        let mut worst = 0.0f64;
        for i in 0..model.params().get(id).values.len() {
            let orig = model.params().get(id).values[i];
            model.params_mut().get_mut(id).values[i] = orig + h;
            let up = eval_loss(&model, &graph, &target);
            model.params_mut().get_mut(id).values[i] = orig - h;
            let down = eval_loss(&model, &graph, &target);
            model.params_mut().get_mut(id).values[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.as_ref().map_or(0.0, |g| g[i]);
            worst = worst.max(common::rel_err(a, numeric));
        }
        assert!(worst < 1e-4, "{name}: max rel err {worst}");
        checked.push(name);
    }
    for name in ["embedding", "graph_position_bias", "text_position_bias"] {
        assert!(checked.iter().any(|n| n == name));
        let g = grads.param(model.params().id_of(name).unwrap()).unwrap();
        assert!(g.iter().any(|v| v.abs() > 1e-6), "{name} gradient is zero");
    }
}

/// Loss where each embedding use reads its own copy of `E`, with `delta`
/// added to entry `(row, 0)` of the copy selected by `route`. A uniform
/// shift of a whole row would be invisible behind layer normalization.
fn routed_loss(model: &Graformer<f64>, graph: &GraphInput, target: &[usize], route: usize, row: usize, delta: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ctx = ForwardCtx::new(false, &mut rng);
    let mut tape = Tape::new(model.params());
    let e = model.params().get(model.embedding_id());
    let d = e.cols;
    let copy = |tape: &mut Tape<'_, f64>, k: usize| -> Var {
        let mut v = e.values.clone();
        if k == route {
            v[row * d] += delta;
        }
        tape.constant(e.rows, d, v).unwrap()
    };
    let routes = EmbeddingRoutes {
        encoder_input: copy(&mut tape, 0),
        decoder_input: copy(&mut tape, 1),
        output: copy(&mut tape, 2),
    };
    let l = model.loss_with(&mut tape, routes, graph, target, 0.0, 1.0, &mut ctx).unwrap();
    tape.scalar(l)
}

#[test]
fn tied_embedding_feeds_all_three_paths() {
    let config = ModelConfig::tiny(VOCAB);
    let model = common::scrambled_model::<f64>(config.clone(), 11, 0.5);
    let g = three_node_graph();
    let r = build_r_matrix(&g, config.relpos).unwrap();
    let tok = 7;
    // token 7 is a node label, a decoder input and a gold output
    let graph = GraphInput::new(vec![tok, 8, 9], &r, &config).unwrap();
    let target = [tok, 10];
    let h = 1e-5;
    let mut path_sum = 0.0;
    for route in 0..3 {
        let s = (routed_loss(&model, &graph, &target, route, tok, h) - routed_loss(&model, &graph, &target, route, tok, -h)) / (2.0 * h);
        assert!(s.abs() > 1e-6, "route {route} insensitive: {s}");
        path_sum += s;
    }
    // Perturbing the shared parameter moves all three uses at once.
    let mut m = model.clone();
    let id = m.embedding_id();
    let d = config.d_model;
    let shift = |m: &mut Graformer<f64>, delta: f64| {
        m.params_mut().get_mut(id).values[tok * d] += delta;
    };
    let loss0 = |m: &Graformer<f64>| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ctx = ForwardCtx::new(false, &mut rng);
        let mut tape = Tape::new(m.params());
        let l = m.loss(&mut tape, &graph, &target, 0.0, 1.0, &mut ctx).unwrap();
        tape.scalar(l)
    };
    shift(&mut m, h);
    let up = loss0(&m);
    shift(&mut m, -2.0 * h);
    let down = loss0(&m);
    let total = (up - down) / (2.0 * h);
    assert!((total - path_sum).abs() < 1e-6 * total.abs().max(1.0), "{total} vs {path_sum}");
}

fn recorded(model: &Graformer<f32>, graph: &GraphInput, inputs: &[usize]) -> Vec<(AttentionKind, usize, Vec<f32>, [usize; 2])> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ctx = ForwardCtx::new(false, &mut rng).recording();
    let mut tape = Tape::new(model.params());
    let h = model.encode(&mut tape, graph, &mut ctx).unwrap();
    model.decode(&mut tape, inputs, h, &mut ctx).unwrap();
    ctx.attention
        .iter()
        .map(|a| (a.kind, a.head, tape.value(a.weights).to_vec(), tape.shape(a.weights)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn attention_rows_sum_to_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut config = ModelConfig::tiny(VOCAB);
        config.encoder_layers = 2;
        config.decoder_layers = 2;
        let model = common::scrambled_model::<f32>(config.clone(), seed, 1.0);
        let kg = common::random_kg(&mut rng, 5, 3, 6);
        let g = build_incidence_graph(&build_token_graph(&kg, &common::whitespace).unwrap());
        let graph = common::random_graph_input(&mut rng, &g, &config);
        let m = rng.gen_range(1..8);
        let inputs: Vec<usize> = (0..m).map(|_| rng.gen_range(0..VOCAB)).collect();
        let records = recorded(&model, &graph, &inputs);
        prop_assert_eq!(records.len(), 2 * 2 * 3);
        for (kind, _, w, [rows, cols]) in records {
            for (i, row) in w.chunks(cols).enumerate() {
                let s: f64 = row.iter().map(|&v| v as f64).sum();
                prop_assert!((s - 1.0).abs() < 1e-6, "{:?} row sums to {}", kind, s);
                if kind == AttentionKind::Text {
                    prop_assert!(row[i + 1..].iter().all(|&v| v == 0.0), "causal mask leaked");
                }
            }
            prop_assert!(rows >= 1);
        }
    }

    #[test]
    fn output_distributions_are_normalized(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = ModelConfig::tiny(VOCAB);
        let model = common::scrambled_model::<f32>(config.clone(), seed, 1.0);
        let graph = common::random_graph_input(&mut rng, &common::fig1_incidence(), &config);
        let memory = model.encode_values(&graph).unwrap();
        let lp = model.next_log_probs(&memory, &[7, 8]).unwrap();
        prop_assert_eq!(lp.len(), VOCAB);
        let s: f64 = lp.iter().map(|v| v.exp()).sum();
        prop_assert!((s - 1.0).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn encoder_is_permutation_equivariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = ModelConfig::tiny(VOCAB);
        let model = common::scrambled_model::<f32>(config.clone(), seed, 0.5);
        let kg = common::random_kg(&mut rng, 5, 3, 6);
        let g = build_incidence_graph(&build_token_graph(&kg, &common::whitespace).unwrap());
        let graph = common::random_graph_input(&mut rng, &g, &config);
        let mut perm: Vec<usize> = (0..g.len()).collect();
        perm.shuffle(&mut rng);
        let r = build_r_matrix(&g.permuted(&perm).unwrap(), config.relpos).unwrap();
        let mut labels = vec![0; g.len()];
        for (i, &p) in perm.iter().enumerate() {
            labels[p] = graph.labels[i];
        }
        let permuted = GraphInput::new(labels, &r, &config).unwrap();
        let (n, h) = model.encode_values(&graph).unwrap();
        let (_, hp) = model.encode_values(&permuted).unwrap();
        let d = config.d_model;
        for i in 0..n {
            for k in 0..d {
                let diff = (h[i * d + k] - hp[perm[i] * d + k]).abs();
                prop_assert!(diff < 1e-5, "node {} dim {}: {}", i, k, diff);
            }
        }
    }
}

#[test]
fn fig1_encoder_output_shape() {
    let config = ModelConfig::tiny(VOCAB);
    let model = Graformer::<f32>::new(config.clone(), 0).unwrap();
    let (n, h) = model.encode_values(&fig1_input(&config)).unwrap();
    assert_eq!((n, h.len()), (9, 9 * 8));
    assert!(h.iter().all(|v| v.is_finite()));
}

#[test]
fn single_node_attends_to_itself_only() {
    let config = ModelConfig::tiny(VOCAB);
    let kg = KnowledgeGraph::from_triples(["solo"], &[]).unwrap();
    let g = build_incidence_graph(&build_token_graph(&kg, &common::whitespace).unwrap());
    let r = build_r_matrix(&g, config.relpos).unwrap();
    let graph = GraphInput::new(vec![7], &r, &config).unwrap();
    let model = common::scrambled_model::<f32>(config.clone(), 5, 1.0);
    for (kind, _, w, _) in recorded(&model, &graph, &[1]) {
        assert_eq!(w, vec![1.0], "{kind:?}");
    }
    // Query, key and position bias cannot influence a one-node encoder.
    let mut other = model.clone();
    for name in ["encoder.0.self_attn.query", "encoder.0.self_attn.key", "graph_position_bias"] {
        let id = other.params().id_of(name).unwrap();
        for v in other.params_mut().get_mut(id).values.iter_mut() {
            *v = -*v * 3.0 + 0.25;
        }
    }
    assert_eq!(model.encode_values(&graph).unwrap(), other.encode_values(&graph).unwrap());
}

fn set_param(model: &mut Graformer<f64>, name: &str, f: impl Fn(usize) -> f64) {
    let id = model.params().id_of(name).unwrap();
    for (i, v) in model.params_mut().get_mut(id).values.iter_mut().enumerate() {
        *v = f(i);
    }
}

fn first_layer_weights(model: &Graformer<f64>, graph: &GraphInput, inputs: &[usize], kind: AttentionKind) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ctx = ForwardCtx::new(false, &mut rng).recording();
    let mut tape = Tape::new(model.params());
    let h = model.encode(&mut tape, graph, &mut ctx).unwrap();
    model.decode(&mut tape, inputs, h, &mut ctx).unwrap();
    ctx.attention
        .iter()
        .filter(|a| a.kind == kind && a.layer == 0)
        .map(|a| tape.value(a.weights).to_vec())
        .collect()
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn layer_norm(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter().map(|v| (v - mean) / (var + 1e-5).sqrt()).collect()
}

#[test]
fn graph_attention_matches_manual_computation() {
    let config = ModelConfig::tiny(VOCAB);
    let mut model = common::scrambled_model::<f64>(config.clone(), 21, 0.7);
    let (d, heads, dh) = (config.d_model, config.heads, config.head_dim());
    // unit gain, zero bias, so the first norm is plain standardization
    set_param(&mut model, "encoder.0.attn_norm.gain", |_| 1.0);
    set_param(&mut model, "encoder.0.attn_norm.bias", |_| 0.0);
    let graph = fig1_input(&config);
    let got = first_layer_weights(&model, &graph, &[1], AttentionKind::Graph);

    let p = model.params();
    let e = &p.by_name("embedding").unwrap().values;
    let wq = &p.by_name("encoder.0.self_attn.query").unwrap().values;
    let wk = &p.by_name("encoder.0.self_attn.key").unwrap().values;
    let gamma = &p.by_name("graph_position_bias").unwrap().values;
    let width = PositionVocabulary::new(config.relpos).unwrap().size();
    let x: Vec<Vec<f64>> = graph.labels.iter().map(|&l| layer_norm(&e[l * d..(l + 1) * d])).collect();
    let project = |w: &[f64], row: &[f64]| -> Vec<f64> { (0..d).map(|c| (0..d).map(|k| row[k] * w[k * d + c]).sum()).collect() };
    let q: Vec<Vec<f64>> = x.iter().map(|r| project(wq, r)).collect();
    let k: Vec<Vec<f64>> = x.iter().map(|r| project(wk, r)).collect();
    let n = graph.len();
    for h in 0..heads {
        for i in 0..n {
            let logits: Vec<f64> = (0..n)
                .map(|j| {
                    let dot: f64 = (h * dh..(h + 1) * dh).map(|c| q[i][c] * k[j][c]).sum();
                    dot / (dh as f64).sqrt() + gamma[h * width + graph.positions[i * n + j]]
                })
                .collect();
            for (j, want) in softmax(&logits).into_iter().enumerate() {
                assert!((got[h][i * n + j] - want).abs() < 1e-12, "head {h} ({i},{j})");
            }
        }
    }
}

#[test]
fn zero_queries_leave_only_the_position_bias() {
    let config = ModelConfig::tiny(VOCAB);
    let mut model = common::scrambled_model::<f64>(config.clone(), 8, 0.7);
    set_param(&mut model, "encoder.0.self_attn.query", |_| 0.0);
    set_param(&mut model, "decoder.0.self_attn.query", |_| 0.0);
    let graph = fig1_input(&config);
    let n = graph.len();
    let width = PositionVocabulary::new(config.relpos).unwrap().size();
    let gamma = model.params().by_name("graph_position_bias").unwrap().values.clone();
    for (h, w) in first_layer_weights(&model, &graph, &[1], AttentionKind::Graph).iter().enumerate() {
        for i in 0..n {
            let row: Vec<f64> = (0..n).map(|j| gamma[h * width + graph.positions[i * n + j]]).collect();
            for (j, want) in softmax(&row).into_iter().enumerate() {
                assert!((w[i * n + j] - want).abs() < 1e-12);
            }
        }
    }

    let s = model.params().by_name("text_position_bias").unwrap().values.clone();
    let nt = config.text_range as i64;
    let span = 2 * config.text_range + 1;
    let inputs = [1, 7, 8];
    for (h, w) in first_layer_weights(&model, &graph, &inputs, AttentionKind::Text).iter().enumerate() {
        for i in 0..3 {
            let row: Vec<f64> = (0..=i)
                .map(|j| s[h * span + ((j as i64 - i as i64).clamp(-nt, nt) + nt) as usize])
                .collect();
            let want = softmax(&row);
            for j in 0..3 {
                let expect = if j <= i { want[j] } else { 0.0 };
                assert!((w[i * 3 + j] - expect).abs() < 1e-12, "head {h} ({i},{j})");
            }
        }
    }
    for w in first_layer_weights(&model, &graph, &[1], AttentionKind::Text) {
        assert_eq!(w, vec![1.0]);
    }
}

#[test]
fn masking_the_unreachable_bucket() {
    let config = ModelConfig::tiny(VOCAB);
    let mut model = common::scrambled_model::<f64>(config.clone(), 13, 0.5);
    let vocab = PositionVocabulary::new(config.relpos).unwrap();
    let inf = vocab.index_of(RelPos::Unreachable).unwrap();
    let width = vocab.size();
    set_param(&mut model, "graph_position_bias", |i| if i % width == inf { MASK_LOGIT } else { 0.0 });
    let graph = fig1_input(&config);
    let n = graph.len();
    let (w, u1) = (3, 7);
    assert_eq!(graph.positions[u1 * n + w], inf);
    for weights in first_layer_weights(&model, &graph, &[1], AttentionKind::Graph) {
        for (idx, &p) in graph.positions.iter().enumerate() {
            if p == inf {
                assert!(weights[idx] < 1e-300, "entry {idx} = {}", weights[idx]);
            } else {
                assert!(weights[idx] > 0.0);
            }
        }
    }
}

#[test]
fn gamma_buckets_separate_identical_content() {
    let config = ModelConfig::tiny(VOCAB);
    let mut model = common::scrambled_model::<f64>(config.clone(), 17, 0.5);
    let graph = fig1_input(&config);
    let n = graph.len();
    let (s, u1, u2) = (0, 7, 8);
    let (b1, b2) = (graph.positions[s * n + u1], graph.positions[s * n + u2]);
    assert_ne!(b1, b2);
    assert_eq!(graph.labels[u1], graph.labels[u2]);
    let width = PositionVocabulary::new(config.relpos).unwrap().size();

    set_param(&mut model, "graph_position_bias", |_| 0.0);
    for w in first_layer_weights(&model, &graph, &[1], AttentionKind::Graph) {
        assert!((w[s * n + u1] - w[s * n + u2]).abs() < 1e-15);
    }
    set_param(&mut model, "graph_position_bias", |i| if i % width == b2 { 1.0 } else { 0.0 });
    for w in first_layer_weights(&model, &graph, &[1], AttentionKind::Graph) {
        let ratio = w[s * n + u2] / w[s * n + u1];
        assert!((ratio - 1f64.exp()).abs() < 1e-12, "ratio {ratio}");
    }
}

#[test]
fn gamma_and_s_are_shared_across_layers() {
    let mut config = ModelConfig::tiny(VOCAB);
    config.encoder_layers = 3;
    config.decoder_layers = 2;
    let model = Graformer::<f32>::new(config.clone(), 0).unwrap();
    let width = PositionVocabulary::new(config.relpos).unwrap().size();
    assert_eq!(model.params().get(model.graph_bias_id()).shape(), [2, width]);
    assert_eq!(model.params().get(model.text_bias_id()).shape(), [2, 2 * config.text_range + 1]);
    let names: Vec<&str> = model.params().iter().map(|(_, p)| p.name.as_str()).collect();
    assert_eq!(names.iter().filter(|n| n.contains("position_bias")).count(), 2);
    for (_, p) in model.params().iter() {
        let zero_init = p.name.contains("position_bias") || p.name.ends_with(".bias") || p.name.contains(".b_");
        if zero_init {
            assert!(p.values.iter().all(|&v| v == 0.0), "{}", p.name);
        }
    }
}

#[test]
fn empty_decoder_input_is_rejected() {
    let config = ModelConfig::tiny(VOCAB);
    let model = Graformer::<f64>::new(config.clone(), 0).unwrap();
    let graph = fig1_input(&config);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ctx = ForwardCtx::new(false, &mut rng);
    let mut tape = Tape::new(model.params());
    let h = model.encode(&mut tape, &graph, &mut ctx).unwrap();
    let err = model.decode(&mut tape, &[], h, &mut ctx).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    let r = build_r_matrix(&common::fig1_incidence(), config.relpos).unwrap();
    assert!(GraphInput::new(vec![6; 4], &r, &config).is_err());
    let other = RelPosConfig::new(5, 4, 4).unwrap();
    let r = build_r_matrix(&common::fig1_incidence(), other).unwrap();
    assert!(GraphInput::new(vec![6; 9], &r, &config).is_err());
}

const GOLDEN: &str = "tests/data/golden_logits.json";
const GOLDEN_INPUTS: [usize; 5] = [1, 7, 9, 8, 10];

fn golden_logits<T: Element>() -> Vec<f64> {
    let config = ModelConfig::tiny(VOCAB);
    let model = common::scrambled_model::<f64>(config.clone(), 2024, 0.3).cast::<T>();
    let graph = fig1_input(&config);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ctx = ForwardCtx::new(false, &mut rng);
    let mut tape = Tape::new(model.params());
    let h = model.encode(&mut tape, &graph, &mut ctx).unwrap();
    let logits = model.decode(&mut tape, &GOLDEN_INPUTS, h, &mut ctx).unwrap();
    tape.value(logits).iter().map(|v| v.as_f64()).collect()
}

#[test]
fn teacher_forced_logits_match_golden_file() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(GOLDEN);
    let golden: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(golden.len(), GOLDEN_INPUTS.len() * VOCAB);
    for (a, b) in golden_logits::<f64>().iter().zip(&golden) {
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }
    for (a, b) in golden_logits::<f32>().iter().zip(&golden) {
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }
}

/// Rewrites the golden file; run with `--ignored` after an intended change.
#[test]
#[ignore]
fn regenerate_golden_logits() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(GOLDEN);
    std::fs::write(path, serde_json::to_string_pretty(&golden_logits::<f64>()).unwrap()).unwrap();
}
