#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spansrl::autodiff::{Bound, Graph, NodeId, ParamStore};
use spansrl::corpus::LabeledSpan;
use spansrl::encoder::{lstm_cell, EncoderStack};
use spansrl::ensemble::EnsembleModel;
use spansrl::model::{Dropout, ModelDims, SrlModel};
use spansrl::optim::l2_penalty;
use spansrl::spanscore::{build_targets, loss_graph, sample_loss, ScoreMatrix};
use spansrl::{CoreLabelSet, Tensor};

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, 1e-4)`. The floor keeps rounding noise on
/// vanishing gradients from reading as a large relative error.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Replaces every parameter with random entries away from zero. Freshly
/// initialized models have zero biases and states, which put ReLUs fed by
/// dead units exactly on their kink.
pub fn randomize(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for id in store.ids().collect::<Vec<_>>() {
        let shape = store.get(id).shape().to_vec();
        *store.get_mut(id) = rand_tensor(rng, &shape);
    }
}

/// Largest relative error between backprop and central differences over
/// every entry of every parameter in `store`.
pub fn check_store<F>(store: &ParamStore, build: F) -> f64
where
    F: for<'a> Fn(&mut Graph<'a>, &Bound) -> NodeId,
{
    let mut g = Graph::new();
    let bound = g.bind(store, true);
    let loss = build(&mut g, &bound);
    let grads = g.backward(loss).expect("backward");
    let eval = |s: &ParamStore| {
        let mut g = Graph::new();
        let bound = g.bind(s, false);
        let loss = build(&mut g, &bound);
        g.value(loss).item()
    };
    let mut worst = 0.0f64;
    let mut probe = store.clone();
    for id in store.ids() {
        let n = store.get(id).numel();
        let zeros = Tensor::zeros(store.get(id).shape());
        let analytic = grads.get(id).unwrap_or(&zeros).clone();
        for k in 0..n {
            let orig = store.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + H;
            let up = eval(&probe);
            probe.get_mut(id).data_mut()[k] = orig - H;
            let down = eval(&probe);
            probe.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * H);
            worst = worst.max(rel_error(analytic.data()[k], numeric));
        }
    }
    worst
}

/// Graph inputs borrowed by every graph `check_store` builds.
fn pinned<T>(value: T) -> &'static T {
    Box::leak(Box::new(value))
}

/// Uniform entries in [-1, 1], kept away from zero so ReLU kinks stay
/// outside the finite-difference stencil.
pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        let mut x: f64 = rng.random_range(-1.0..1.0);
        while x.abs() < 0.05 {
            x = rng.random_range(-1.0..1.0);
        }
        *v = x;
    }
    t
}

/// Reduces `out` to a scalar through a fixed random projection so every
/// output entry contributes a distinct weight.
fn project(g: &mut Graph<'_>, out: NodeId, weights: &Tensor) -> NodeId {
    let w = g.constant(weights.clone());
    let prod = g.mul(out, w);
    g.sum(prod)
}

fn proj_for(rng: &mut ChaCha8Rng, g_shape: &[usize]) -> Tensor {
    rand_tensor(rng, g_shape)
}

/// Checks one operation with random inputs of dimension at most `d`.
/// Returns the worst relative error.
pub fn check_op(name: &str, rng: &mut ChaCha8Rng, d: usize, t: usize) -> f64 {
    let mut store = ParamStore::new();
    let a_vec = store.add("a_vec", rand_tensor(rng, &[d]));
    let b_vec = store.add("b_vec", rand_tensor(rng, &[d]));
    let a_mat = store.add("a_mat", rand_tensor(rng, &[t, d]));
    let b_mat = store.add("b_mat", rand_tensor(rng, &[d, t]));
    let c_mat = store.add("c_mat", rand_tensor(rng, &[t, d]));
    let pv = proj_for(rng, &[d]);
    let pm = proj_for(rng, &[t, t]);
    let ptd = proj_for(rng, &[t, d]);
    let p2d = proj_for(rng, &[t * (t + 1) / 2, 2 * d]);
    let pcat = proj_for(rng, &[2 * d]);
    let pt = proj_for(rng, &[t]);
    let mask: Vec<f64> = (0..d).map(|k| if k % 3 == 1 { 0.0 } else { 2.0 }).collect();
    let start = rng.random_range(0..d);
    let len = rng.random_range(1..=d - start);
    let pslice = proj_for(rng, &[len]);
    let row = rng.random_range(0..t);
    let indices: Vec<usize> = (0..4).map(|_| rng.random_range(0..t * d)).collect();
    let pidx = proj_for(rng, &[indices.len()]);
    let factor: f64 = rng.random_range(-2.0..2.0);

    check_store(&store, |g, b| {
        let av = b.get(a_vec);
        let bv = b.get(b_vec);
        let am = b.get(a_mat);
        let bm = b.get(b_mat);
        let cm = b.get(c_mat);
        match name {
            "add" => {
                let o = g.add(av, bv);
                project(g, o, &pv)
            }
            "sub" => {
                let o = g.sub(av, bv);
                project(g, o, &pv)
            }
            "mul" => {
                let o = g.mul(av, bv);
                project(g, o, &pv)
            }
            "scale" => {
                let o = g.scale(av, factor);
                project(g, o, &pv)
            }
            "matmul" => {
                let o = g.matmul(am, bm);
                project(g, o, &pm)
            }
            "matmul_vec" => {
                let o = g.matmul(am, av);
                project(g, o, &pt)
            }
            "matmul_t" => {
                let o = g.matmul_t(am, cm);
                project(g, o, &pm)
            }
            "concat" => {
                let o = g.concat(&[av, bv]);
                project(g, o, &pcat)
            }
            "slice" => {
                let o = g.slice(av, start, len);
                project(g, o, &pslice)
            }
            "stack" => {
                let rows: Vec<NodeId> = (0..t).map(|k| if k % 2 == 0 { av } else { bv }).collect();
                let o = g.stack(&rows);
                project(g, o, &ptd)
            }
            "row_select" => {
                let o = g.row_select(am, row);
                project(g, o, &pv)
            }
            "sigmoid" => {
                let o = g.sigmoid(av);
                project(g, o, &pv)
            }
            "tanh" => {
                let o = g.tanh(av);
                project(g, o, &pv)
            }
            "relu" => {
                let o = g.relu(av);
                project(g, o, &pv)
            }
            "dropout" => {
                let o = g.dropout_with_mask(av, mask.clone());
                project(g, o, &pv)
            }
            "log_sum_exp" => g.log_sum_exp(am),
            "row_log_sum_exp" => {
                let o = g.row_log_sum_exp(am);
                project(g, o, &pt)
            }
            "softmax" => {
                let o = g.softmax(av);
                project(g, o, &pv)
            }
            "gather" => {
                let o = g.gather(am, indices.clone());
                project(g, o, &pidx)
            }
            "sum" => g.sum(am),
            "sum_squares" => g.sum_squares(am),
            "span_features" => {
                let o = g.span_features(am);
                project(g, o, &p2d)
            }
            "weighted_sum" => {
                let w = g.slice(bv, 0, 2.min(d));
                let xs = if d >= 2 { vec![am, cm] } else { vec![am] };
                let o = g.weighted_sum(&xs, w);
                project(g, o, &ptd)
            }
            other => panic!("unknown op {other}"),
        }
    })
}

pub const OPS: [&str; 22] = [
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "matmul_vec",
    "matmul_t",
    "concat",
    "slice",
    "stack",
    "row_select",
    "sigmoid",
    "tanh",
    "relu",
    "dropout",
    "log_sum_exp",
    "row_log_sum_exp",
    "softmax",
    "gather",
    "sum",
    "sum_squares",
    "span_features",
];

pub const EXTRA: [&str; 5] = ["weighted_sum", "lstm_cell", "sample_loss", "l2_penalty", "ensemble_loss"];

/// One LSTM step with random weights, input and state.
pub fn check_lstm_cell(rng: &mut ChaCha8Rng, d: usize) -> f64 {
    let mut store = ParamStore::new();
    let stack = EncoderStack::init(&mut store, d, d, 1, rng).expect("encoder");
    randomize(&mut store, rng);
    let x = store.add("x", rand_tensor(rng, &[d]));
    let h0 = store.add("h0", rand_tensor(rng, &[d]));
    let c0 = store.add("c0", rand_tensor(rng, &[d]));
    let ph = rand_tensor(rng, &[d]);
    let pc = rand_tensor(rng, &[d]);
    let layer = stack.layers[0].clone();
    check_store(&store, |g, b| {
        let (h, c) = lstm_cell(g, b, &layer, b.get(x), b.get(h0), b.get(c0));
        let a = project(g, h, &ph);
        let e = project(g, c, &pc);
        g.add(a, e)
    })
}

fn labels() -> Vec<String> {
    ["A0", "A1", "LOC", "TMP"].iter().map(|s| s.to_string()).collect()
}

/// A small random model plus a sentence and gold spans consistent with it.
pub fn random_case(rng: &mut ChaCha8Rng, t: usize, d: usize) -> (SrlModel, Tensor, usize, Vec<LabeledSpan>) {
    let dims = ModelDims {
        word_dim: rng.random_range(2..=4),
        mark_dim: 2,
        hidden: d,
        layers: rng.random_range(1..=2),
    };
    let mut model = SrlModel::new(&labels(), CoreLabelSet::default(), dims, rng.random()).expect("model");
    randomize(model.params_mut(), rng);
    let words = rand_tensor(rng, &[t, dims.word_dim]);
    let p = rng.random_range(1..=t);
    let mut gold = Vec::new();
    if p > 1 {
        gold.push(LabeledSpan::new(1, p - 1, "A0"));
    }
    if p < t {
        gold.push(LabeledSpan::new(p + 1, t, "TMP"));
    }
    (model, words, p, gold)
}

/// End-to-end loss through the encoder and span scorer, against the model
/// parameters.
pub fn check_sample_loss(rng: &mut ChaCha8Rng, t: usize, d: usize) -> f64 {
    let (model, words, p, gold) = random_case(rng, t, d);
    let words = pinned(words);
    let store = model.params().clone();
    check_store(&store, |g, b| {
        model
            .loss(g, b, words, p, &gold, None::<Dropout<'_, ChaCha8Rng>>)
            .expect("loss")
    })
}

/// Graph loss equals the direct `sample_loss` formula.
pub fn sample_loss_agrees(rng: &mut ChaCha8Rng, t: usize, d: usize) -> f64 {
    let (model, words, p, gold) = random_case(rng, t, d);
    let mut g = Graph::new();
    let bound = g.bind(model.params(), false);
    let loss = model
        .loss(&mut g, &bound, &words, p, &gold, None::<Dropout<'_, ChaCha8Rng>>)
        .expect("loss");
    let graph_loss = g.value(loss).item();
    let (_, m): (Tensor, ScoreMatrix) = model.infer(&words, p).expect("infer");
    let targets = build_targets(&gold, p, t, m.labels()).expect("targets");
    let direct = sample_loss(&m, &targets).expect("loss");
    (graph_loss - direct).abs() / direct.abs().max(1.0)
}

pub fn check_l2(rng: &mut ChaCha8Rng, d: usize) -> f64 {
    let mut store = ParamStore::new();
    let a = store.add("a", rand_tensor(rng, &[d, d]));
    let b = store.add("b", rand_tensor(rng, &[d]));
    let lambda: f64 = rng.random_range(0.0..1.0);
    check_store(&store, |g, bound| l2_penalty(g, &[bound.get(a), bound.get(b)], lambda))
}

/// Loss of the ensemble head over frozen base span representations.
pub fn check_ensemble(rng: &mut ChaCha8Rng, t: usize, d: usize) -> f64 {
    let (m1, words, p, gold) = random_case(rng, t, d);
    let mut m2 = SrlModel::new(&labels(), CoreLabelSet::default(), m1.dims(), rng.random()).expect("model");
    randomize(m2.params_mut(), rng);
    let mut ens = EnsembleModel::new(vec![m1, m2]).expect("ensemble");
    let reps = pinned(ens.base_reps(&words, p).expect("reps"));
    let mut store = ens.params().clone();
    randomize(&mut store, rng);
    ens = EnsembleModel::from_parts(ens.bases().to_vec(), store.clone()).expect("ensemble");
    let targets = build_targets(&gold, p, t, spansrl::model::SpanScorer::labels(&ens)).expect("targets");
    check_store(&store, |g, b| {
        let scores = ens.scores_graph(g, b, reps);
        loss_graph(g, scores, &targets)
    })
}

/// Worst error per check over `cases` random instances.
pub fn gradient_suite(cases: usize, seed: u64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Vec<(String, f64)> = OPS.iter().chain(EXTRA.iter()).map(|n| (n.to_string(), 0.0)).collect();
    for _ in 0..cases {
        let t = rng.random_range(1..=6);
        let d = rng.random_range(1..=8);
        for (name, w) in worst.iter_mut() {
            let err = match name.as_str() {
                "lstm_cell" => check_lstm_cell(&mut rng, d),
                "sample_loss" => check_sample_loss(&mut rng, t, d),
                "l2_penalty" => check_l2(&mut rng, d),
                "ensemble_loss" => check_ensemble(&mut rng, t, d),
                op => check_op(op, &mut rng, d, t),
            };
            *w = w.max(err);
        }
    }
    worst
}
