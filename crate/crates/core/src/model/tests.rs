use super::*;
use crate::autodiff::grad_check;
use crate::corpus::{EventKind, Label, PropagationEvent, TweetRecord};
use crate::graph::{assemble_hetero_graph, GraphConfig, MetaPath};

fn tiny_dataset() -> Dataset {
    let tweets = [
        ("a", "storm hits city now", Some(Label::NonRumor)),
        ("b", "city storm fake", Some(Label::FalseRumor)),
        ("c", "fake now", Some(Label::TrueRumor)),
    ]
    .into_iter()
    .map(|(id, text, label)| TweetRecord { id: id.into(), text: text.into(), label })
    .collect();
    let events = [("a", "u1", 0.0), ("a", "u2", 3.0), ("b", "u2", 1.0), ("c", "u3", 2.0)]
        .into_iter()
        .map(|(t, u, e)| PropagationEvent {
            source_tweet_id: t.into(),
            user_id: u.into(),
            elapsed: e,
            kind: EventKind::Retweet,
        })
        .collect();
    Dataset::new(tweets, events, vec![], "minutes").unwrap()
}

fn small_config() -> ModelConfig {
    ModelConfig {
        word_dim: 3,
        user_dim: 2,
        proj_dim: 3,
        head_dim: 2,
        heads: 2,
        sub_att_dim: 2,
        ..ModelConfig::default()
    }
}

fn model(cfg: ModelConfig, seed: u64) -> HgatModel {
    let d = tiny_dataset();
    let g = assemble_hetero_graph(&d, &GraphConfig::default()).unwrap();
    HgatModel::new(&d, &g, cfg, seed, None).unwrap()
}

fn tensor(e: ModelError) -> TensorError {
    match e {
        ModelError::Tensor(t) => t,
        other => panic!("unexpected error {other}"),
    }
}

fn lcg(state: &mut u64) -> f64 {
    *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    ((*state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
}

fn random_view(n: usize, state: &mut u64) -> SubgraphView {
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        adj[i][i] = true;
        for j in i + 1..n {
            if lcg(state) > 0.2 {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        }
    }
    let lists: Vec<Vec<usize>> = adj.iter().map(|r| (0..n).filter(|&j| r[j]).collect()).collect();
    let nnz: usize = lists.iter().map(Vec::len).sum();
    let weights = (0..nnz).map(|_| 0.05 + lcg(state).abs()).collect();
    SubgraphView {
        meta_path: MetaPath::Tw,
        nodes: (0..n).collect(),
        n_tweets: n / 2,
        neighbors: Arc::new(Csr::from_lists(lists)),
        weights,
    }
}

fn random_matrix(r: usize, c: usize, state: &mut u64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| lcg(state))
}

fn dense_attention(view: &SubgraphView, x: &Matrix, w: &Matrix, a: &Matrix, log_weight: bool) -> (Matrix, Vec<f64>) {
    let n = x.rows();
    let d_out = w.rows();
    let h = Matrix::from_fn(n, d_out, |i, o| (0..x.cols()).map(|k| x.get(i, k) * w.get(o, k)).sum());
    let leaky = |v: f64| if v > 0.0 { v } else { 0.2 * v };
    let mut out = Matrix::zeros(n, d_out);
    let mut coef = Vec::new();
    let mut slot = 0;
    for i in 0..n {
        let nb = view.neighbors_of(i);
        let scores: Vec<f64> = nb
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                let s: f64 = (0..d_out).map(|o| a.get(o, 0) * h.get(i, o) + a.get(d_out + o, 0) * h.get(j, o)).sum();
                leaky(s) + if log_weight { view.weights[slot + k].ln() } else { 0.0 }
            })
            .collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
        for (k, &j) in nb.iter().enumerate() {
            let alpha = (scores[k] - m).exp() / z;
            coef.push(alpha);
            for o in 0..d_out {
                out.set(i, o, out.get(i, o) + alpha * h.get(j, o));
            }
        }
        slot += nb.len();
    }
    let out = out.map(|v| if v > 0.0 { v } else { v.exp() - 1.0 });
    (out, coef)
}

#[test]
fn attention_matches_dense_reference() {
    let mut state = 42;
    for (trial, log_weight) in [(0, false), (1, true), (2, false), (3, true)] {
        let n = 5 + trial;
        let view = random_view(n, &mut state);
        let x = random_matrix(n, 4, &mut state);
        let ws = [random_matrix(3, 4, &mut state), random_matrix(3, 4, &mut state)];
        let as_ = [random_matrix(6, 1, &mut state), random_matrix(6, 1, &mut state)];
        let mut t = Tape::new();
        let xv = t.constant(x.clone()).unwrap();
        let heads: Vec<HeadVars> = ws
            .iter()
            .zip(&as_)
            .map(|(w, a)| HeadVars {
                w: t.constant(w.clone()).unwrap(),
                a: t.constant(a.clone()).unwrap(),
            })
            .collect();
        let opts = AttentionOptions {
            leaky_slope: 0.2,
            aggregation: Activation::Elu,
            edge_weight_mode: if log_weight { EdgeWeightMode::LogWeight } else { EdgeWeightMode::Mask },
        };
        let out = layers::attention_layer(&mut t, &view, xv, &heads, &opts).unwrap();
        let got = t.value(out.output);
        assert_eq!(got.shape(), (n, 6));
        for k in 0..2 {
            let (expect, coef) = dense_attention(&view, &x, &ws[k], &as_[k], log_weight);
            for i in 0..n {
                for o in 0..3 {
                    let (g, e) = (got.get(i, 3 * k + o), expect.get(i, o));
                    assert!((g - e).abs() <= 1e-12 * e.abs().max(1.0), "head {k} ({i},{o}): {g} vs {e}");
                }
            }
            for (g, e) in t.value(out.coefficients[k]).as_slice().iter().zip(&coef) {
                assert!((g - e).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn attention_is_permutation_equivariant() {
    let mut state = 7;
    let n = 7;
    let view = random_view(n, &mut state);
    let x = random_matrix(n, 3, &mut state);
    let w = random_matrix(2, 3, &mut state);
    let a = random_matrix(4, 1, &mut state);
    let perm: Vec<usize> = vec![3, 6, 0, 5, 1, 4, 2];
    let mut inv = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let lists: Vec<Vec<usize>> = perm
        .iter()
        .map(|&old| {
            let mut l: Vec<usize> = view.neighbors_of(old).iter().map(|&j| inv[j]).collect();
            l.sort_unstable();
            l
        })
        .collect();
    let nnz = view.neighbors.nnz();
    let permuted = SubgraphView {
        neighbors: Arc::new(Csr::from_lists(lists)),
        weights: vec![1.0; nnz],
        ..view.clone()
    };
    let px = Matrix::from_fn(n, 3, |i, c| x.get(perm[i], c));
    let opts = AttentionOptions {
        leaky_slope: 0.2,
        aggregation: Activation::Elu,
        edge_weight_mode: EdgeWeightMode::Mask,
    };
    let run = |v: &SubgraphView, x: &Matrix| {
        let mut t = Tape::new();
        let xv = t.constant(x.clone()).unwrap();
        let head = HeadVars {
            w: t.constant(w.clone()).unwrap(),
            a: t.constant(a.clone()).unwrap(),
        };
        let out = layers::attention_layer(&mut t, v, xv, &[head], &opts).unwrap();
        t.value(out.output).clone()
    };
    let base = run(&view, &x);
    let moved = run(&permuted, &px);
    for i in 0..n {
        for c in 0..2 {
            assert!((moved.get(i, c) - base.get(perm[i], c)).abs() < 1e-13);
        }
    }
}

#[test]
fn probabilities_and_beta_are_normalized() {
    let m = model(ModelConfig::default(), 3);
    let mut t = Tape::new();
    let b = t.bind_all(m.params()).unwrap();
    let out = m.forward(&mut t, &b).unwrap();
    let p = t.value(out.probs);
    assert_eq!(p.shape(), (3, NUM_CLASSES));
    for r in 0..3 {
        assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let beta = t.value(out.beta.unwrap());
    assert!((beta.sum() - 1.0).abs() <= 1e-15);
    assert_eq!(out.tw_attention.len(), 4);
    assert_eq!(out.tu_attention.len(), 4);
}

#[test]
fn full_model_gradients_match_finite_differences() {
    for seed in 0..3 {
        let m = model(small_config(), seed);
        assert!(m.tw_view().n_nodes() + m.tu_view().n_nodes() - m.n_tweets() <= 12);
        let targets = [(0, 0), (1, 1), (2, 2)];
        let report = grad_check(m.params(), 1e-6, |t, b| m.loss(t, b, &targets, 1e-3).map(|(l, _)| l).map_err(tensor)).unwrap();
        assert!(report.max_rel_error < 1e-4, "seed {seed}: {:?}", report.per_param);
        assert!(report.checked > 50);
    }
}

#[test]
fn log_weight_and_tweet_scope_gradients_match() {
    let cfg = ModelConfig {
        edge_weight_mode: EdgeWeightMode::LogWeight,
        importance_scope: ImportanceScope::TweetsOnly,
        aggregation: Activation::Tanh,
        tweet_offsets: OffsetMode::Learned,
        ..small_config()
    };
    let m = model(cfg, 11);
    let report = grad_check(m.params(), 1e-6, |t, b| m.loss(t, b, &[(0, 3), (2, 1)], 0.0).map(|(l, _)| l).map_err(tensor)).unwrap();
    assert!(report.max_rel_error < 1e-4, "{:?}", report.per_param);
}

#[test]
fn ablated_parameters_get_exactly_zero_gradient() {
    for ablation in [Ablation::Full, Ablation::TwOnly, Ablation::TuOnly] {
        let mut m = model(small_config(), 5);
        m.set_ablation(ablation);
        let active = m.active_param_names();
        let mut t = Tape::new();
        let b = t.bind_all(m.params()).unwrap();
        let (l, out) = m.loss(&mut t, &b, &[(0, 0), (1, 3)], 1e-2).unwrap();
        assert_eq!(out.beta.is_some(), ablation == Ablation::Full);
        let g = t.backward(l).unwrap();
        for (name, grad) in g.iter() {
            let is_active = active.iter().any(|a| a == name);
            let offset = name.ends_with(".offset");
            if is_active && !offset {
                assert!(grad.sum_squares() > 0.0, "{ablation:?}: {name} has no gradient");
            }
            if !is_active {
                assert!(grad.as_slice().iter().all(|&v| v == 0.0), "{ablation:?}: {name} leaks gradient");
            }
        }
        match ablation {
            Ablation::TwOnly => assert!(!active.iter().any(|n| n.starts_with("tu.") || n.starts_with("proj."))),
            Ablation::TuOnly => assert!(!active.iter().any(|n| n == EMBED_WORD || n.starts_with("sub."))),
            Ablation::Full => {
                assert_eq!(active.len(), m.params().len() - 1);
                assert!(!active.iter().any(|n| n == PROJ_TWEET_OFFSET));
            }
        }
    }
}

#[test]
fn learned_tweet_offsets_train() {
    let cfg = ModelConfig {
        tweet_offsets: OffsetMode::Learned,
        ..small_config()
    };
    let m = model(cfg, 2);
    assert!(m.active_param_names().iter().any(|n| n == PROJ_TWEET_OFFSET));
    let mut t = Tape::new();
    let b = t.bind_all(m.params()).unwrap();
    let (l, _) = m.loss(&mut t, &b, &[(0, 1), (1, 0)], 0.0).unwrap();
    let g = t.backward(l).unwrap();
    assert!(g.get(PROJ_TWEET_OFFSET).unwrap().sum_squares() > 0.0);
}

#[test]
fn ablation_parses() {
    assert_eq!("tw_only".parse::<Ablation>().unwrap(), Ablation::TwOnly);
    assert_eq!("tu".parse::<Ablation>().unwrap(), Ablation::TuOnly);
    assert!("both".parse::<Ablation>().is_err());
}

#[test]
fn parameter_shapes() {
    let m = model(ModelConfig::default(), 1);
    let p = m.params();
    let n_words = m.tw_view().n_nodes() - 3;
    assert_eq!(p.get(EMBED_WORD).unwrap().shape(), (n_words, 16));
    assert_eq!(p.get("tw.head0.W").unwrap().shape(), (8, 16));
    assert_eq!(p.get("tu.head3.a").unwrap().shape(), (16, 1));
    assert_eq!(p.get(SUB_W).unwrap().shape(), (16, 32));
    assert_eq!(p.get(CLS_W).unwrap().shape(), (32, 4));
    assert_eq!(p.get(PROJ_USER_M).unwrap().shape(), (16, 16));
    assert_eq!(p.get(PROJ_TWEET_OFFSET).unwrap().shape(), (3, 16));
    assert!(p.get(CLS_B).unwrap().as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn same_seed_same_model() {
    let a = model(ModelConfig::default(), 9);
    let b = model(ModelConfig::default(), 9);
    let c = model(ModelConfig::default(), 10);
    assert_eq!(a.params(), b.params());
    assert_eq!(a.user_features(), b.user_features());
    assert_ne!(a.params(), c.params());
    assert_eq!(a.predict().unwrap(), b.predict().unwrap());
}

#[test]
fn incompatible_parameters_rejected() {
    let mut a = model(ModelConfig::default(), 1);
    let b = model(small_config(), 1);
    assert!(matches!(a.load_params(b.params().clone()), Err(ModelError::Incompatible(_))));
    let same = a.params().clone();
    a.load_params(same).unwrap();
}

#[test]
fn glorot_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let m = glorot_uniform(10, 14, &mut rng);
    let limit = 0.5;
    assert!(m.as_slice().iter().all(|v| v.abs() < limit));
    assert!(m.as_slice().iter().any(|v| v.abs() > 0.3));
}
