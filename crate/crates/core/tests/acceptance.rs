//! Acceptance suite: nine numbered criteria, each printed as one PASS/FAIL
//! line (run with `cargo test --test acceptance -- --nocapture` to see them
//! all). Expensive model trainings are shared across criteria through a
//! lazily built fixture.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hdcnn::ingest::{self, NUM_FEATURES};
use hdcnn::metrics;
use hdcnn::model_file::{self, ModelMeta};
use hdcnn::nn::{
    conv1d_forward, conv_out_len, Layer, LayerCache, Mode, NetInput, Network, ParamGrads,
};
use hdcnn::tensor::{IndexMatrix, Tensor};
use hdcnn::trainer::{self, AdamState, Features, TrainConfig};

fn data_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/processed.cleveland.data")
}

fn cleveland_text() -> &'static str {
    static TEXT: OnceLock<String> = OnceLock::new();
    TEXT.get_or_init(|| std::fs::read_to_string(data_path()).expect("dataset present"))
}

fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion}: {verdict} — {detail}");
}

// ---------------------------------------------------------------------------
// shared trained-model fixture (criteria 6, 7, 8)
// ---------------------------------------------------------------------------

struct SeedRun {
    seed: u64,
    dropout_p: f64,
    train_acc: f64,
    test_acc: f64,
    net: Network,
    meta: ModelMeta,
}

fn train_once(seed: u64, dropout_p: f64) -> SeedRun {
    let prepared = ingest::prepare(cleveland_text(), 10, 0.8, seed).expect("prepare");
    let cfg = TrainConfig {
        seed,
        dropout_p,
        ..TrainConfig::default()
    };
    let train_ix = prepared
        .dataset
        .int_features
        .select_rows(&prepared.split.train_idx);
    let test_ix = prepared
        .dataset
        .int_features
        .select_rows(&prepared.split.test_idx);
    let train_y = prepared.train_labels();
    let test_y = prepared.test_labels();
    let mut net = Network::embedding_conv_net(prepared.encoding.vocab_size, dropout_p);
    net.init_params(seed);
    let logs = trainer::train(
        &mut net,
        Features::Indices(&train_ix),
        &train_y,
        Features::Indices(&test_ix),
        &test_y,
        &cfg,
    )
    .expect("training");
    let last = logs.last().expect("150 epochs").clone();
    SeedRun {
        seed,
        dropout_p,
        train_acc: last.train_acc,
        test_acc: last.test_acc,
        net,
        meta: ModelMeta {
            encoding: prepared.encoding,
            impute_values: prepared.impute_values,
        },
    }
}

fn seed_runs() -> &'static Vec<SeedRun> {
    static RUNS: OnceLock<Vec<SeedRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut runs = Vec::new();
        for seed in 0..5 {
            runs.push(train_once(seed, 0.3));
            runs.push(train_once(seed, 0.0));
        }
        runs
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

// ---------------------------------------------------------------------------
// criterion 1: architecture parity
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_architecture_parity() {
    let start = Instant::now();
    let net = Network::embedding_conv_net(152, 0.3);
    let counts: Vec<usize> = net.layers.iter().map(|l| l.param_count()).collect();
    // layers: embed, drop, conv1, relu, drop, conv2, relu, drop, pool,
    //         dense1, relu, drop, dense2, sigmoid
    let conv1 = counts[2];
    let conv2 = counts[5];
    let dense1 = counts[9];
    let dense2 = counts[12];
    let total = net.total_params();

    // per-layer output dimensions for one sample, read back from the caches
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let input = IndexMatrix::new(1, 13, (0..13).collect());
    let (out, cache) = net
        .forward(NetInput::Indices(&input), Mode::Eval, &mut rng)
        .expect("forward");
    let dim_of = |i: usize| -> Vec<usize> {
        match &cache.layers[i] {
            LayerCache::Conv1d { input }
            | LayerCache::Dense { input }
            | LayerCache::Relu { input } => input.shape().to_vec(),
            LayerCache::Sigmoid { output } => output.shape().to_vec(),
            _ => vec![],
        }
    };
    let shapes_ok = dim_of(2) == [1, 13, 300]   // embedding output
        && dim_of(3) == [1, 13, 64]             // conv-1 output
        && dim_of(6) == [1, 13, 64]             // conv-2 output
        && dim_of(9) == [1, 64]                 // pooled
        && dim_of(10) == [1, 256]               // dense-1 output
        && out.shape() == [1, 1];

    let pass = conv1 == 57_664
        && conv2 == 12_352
        && dense1 == 16_640
        && dense2 == 257
        && total == 132_513
        && shapes_ok;
    report(
        1,
        pass,
        &format!(
            "conv1 {conv1}, conv2 {conv2}, dense1 {dense1}, dense2 {dense2}, total {total} \
             (vocab 152), shapes ok: {shapes_ok}, {:.2?}",
            start.elapsed()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// criterion 2: output-length formula property
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_conv_length_formula() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut checked = 0;
    while checked < 1000 {
        let w = rng.gen_range(1..=48);
        let p = rng.gen_range(0..=4);
        let f = rng.gen_range(1..=(w + 2 * p).min(9));
        let s = rng.gen_range(1..=4);
        if (w + 2 * p - f) % s != 0 {
            assert!(conv_out_len(w, f, p, s).is_err());
            continue;
        }
        let expected = (w + 2 * p - f) / s + 1;
        assert_eq!(conv_out_len(w, f, p, s).unwrap(), expected);

        // direct convolution of a random input must produce that many positions
        let x = Tensor::new(vec![1, w, 1], (0..w).map(|i| (i as f64).sin()).collect());
        let kernels = Tensor::new(vec![f, 1, 1], (0..f).map(|i| 1.0 + i as f64).collect());
        let bias = Tensor::zeros(vec![1]);
        let y = conv1d_forward(&x, &kernels, &bias, p, s).expect("valid geometry");
        assert_eq!(y.shape()[1], expected, "w={w} f={f} p={p} s={s}");
        checked += 1;
    }
    report(
        2,
        true,
        &format!("1000 random valid geometries, {:.2?}", start.elapsed()),
    );
}

// ---------------------------------------------------------------------------
// criterion 3: gradient checks against central finite differences
// ---------------------------------------------------------------------------

/// Tiny fixture stack: vocabulary 6, embedding dim 4, sequence length 5,
/// 3 conv channels, mirroring the full architecture.
fn tiny_net() -> Network {
    let mut net = Network {
        layers: vec![
            Layer::Embedding {
                table: Tensor::zeros(vec![6, 4]),
            },
            Layer::Dropout { p: 0.0 },
            Layer::Conv1d {
                kernels: Tensor::zeros(vec![3, 4, 3]),
                bias: Tensor::zeros(vec![3]),
                padding: 1,
                stride: 1,
            },
            Layer::Relu,
            Layer::Dropout { p: 0.0 },
            Layer::Conv1d {
                kernels: Tensor::zeros(vec![3, 3, 3]),
                bias: Tensor::zeros(vec![3]),
                padding: 1,
                stride: 1,
            },
            Layer::Relu,
            Layer::Dropout { p: 0.0 },
            Layer::GlobalMaxPool,
            Layer::Dense {
                weights: Tensor::zeros(vec![3, 5]),
                bias: Tensor::zeros(vec![5]),
            },
            Layer::Relu,
            Layer::Dropout { p: 0.0 },
            Layer::Dense {
                weights: Tensor::zeros(vec![5, 1]),
                bias: Tensor::zeros(vec![1]),
            },
            Layer::Sigmoid,
        ],
    };
    net.init_params(12);
    net
}

fn tiny_batch() -> (IndexMatrix, Vec<f64>) {
    let indices = IndexMatrix::new(
        4,
        5,
        vec![0, 1, 2, 3, 4, 5, 4, 3, 2, 1, 0, 2, 4, 1, 3, 5, 5, 0, 0, 2],
    );
    let labels = vec![1.0, 0.0, 1.0, 0.0];
    (indices, labels)
}

fn net_loss(net: &Network, indices: &IndexMatrix, labels: &[f64]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (out, _) = net
        .forward(NetInput::Indices(indices), Mode::Train, &mut rng)
        .expect("forward");
    trainer::bce_loss(out.data(), labels).expect("loss").0
}

fn max_relative_error(
    analytic: &ParamGrads,
    net: &mut Network,
    indices: &IndexMatrix,
    labels: &[f64],
) -> f64 {
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for li in 0..net.layers.len() {
        let n_params = net.layers[li].params().len();
        for pi in 0..n_params {
            for e in 0..analytic.per_layer[li][pi].len() {
                let original = net.layers[li].params()[pi].data()[e];
                net.layers[li].params_mut()[pi].data_mut()[e] = original + step;
                let up = net_loss(net, indices, labels);
                net.layers[li].params_mut()[pi].data_mut()[e] = original - step;
                let down = net_loss(net, indices, labels);
                net.layers[li].params_mut()[pi].data_mut()[e] = original;
                let fd = (up - down) / (2.0 * step);
                let bp = analytic.per_layer[li][pi].data()[e];
                let denom = fd.abs().max(bp.abs());
                if denom > 1e-8 {
                    worst = worst.max((fd - bp).abs() / denom);
                }
            }
        }
    }
    worst
}

#[test]
fn criterion_3_gradient_checks() {
    let start = Instant::now();

    // composed network
    let mut net = tiny_net();
    let (indices, labels) = tiny_batch();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (out, cache) = net
        .forward(NetInput::Indices(&indices), Mode::Train, &mut rng)
        .expect("forward");
    let (_, grad) = trainer::bce_loss(out.data(), &labels).expect("loss");
    let (grads, _) = net
        .backward(&cache, &Tensor::new(out.shape().to_vec(), grad))
        .expect("backward");
    let composed_err = max_relative_error(&grads, &mut net, &indices, &labels);

    // isolated layers, each checked against the same finite differences
    let iso_err = isolated_layer_errors();

    let pass = composed_err < 1e-4 && iso_err < 1e-4;
    report(
        3,
        pass,
        &format!(
            "composed max rel err {composed_err:.2e}, isolated max rel err {iso_err:.2e}, {:.2?}",
            start.elapsed()
        ),
    );
    assert!(pass, "composed {composed_err:e}, isolated {iso_err:e}");
}

/// Finite-difference checks for each parameterized or shape-changing layer
/// in isolation, with loss = fixed random linear functional of the output.
fn isolated_layer_errors() -> f64 {
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(77);

    // helper: loss over a single-layer net with real input
    fn single_loss(layer: &Layer, x: &Tensor, w: &[f64]) -> f64 {
        let net = Network {
            layers: vec![layer.clone()],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (out, _) = net
            .forward(NetInput::Real(x), Mode::Train, &mut rng)
            .expect("forward");
        out.data().iter().zip(w).map(|(&o, &wi)| o * wi).sum()
    }

    let layer_cases: Vec<(Layer, Vec<usize>)> = vec![
        (
            Layer::Conv1d {
                kernels: Tensor::new(
                    vec![3, 2, 3],
                    (0..18).map(|i| 0.3 * ((i as f64) * 0.7).sin()).collect(),
                ),
                bias: Tensor::new(vec![3], vec![0.1, -0.2, 0.05]),
                padding: 1,
                stride: 1,
            },
            vec![2, 5, 2],
        ),
        (
            Layer::Dense {
                weights: Tensor::new(
                    vec![4, 3],
                    (0..12).map(|i| 0.2 * ((i as f64) - 5.0)).collect(),
                ),
                bias: Tensor::new(vec![3], vec![0.3, 0.0, -0.1]),
            },
            vec![2, 4],
        ),
        (Layer::Relu, vec![2, 6]),
        (Layer::Sigmoid, vec![2, 3]),
        (Layer::GlobalMaxPool, vec![2, 4, 3]),
    ];

    for (layer, in_shape) in layer_cases {
        let count: usize = in_shape.iter().product();
        // inputs spread away from ReLU kinks and pooling ties
        let x = Tensor::new(
            in_shape.clone(),
            (0..count)
                .map(|i| ((i as f64) * 1.37).sin() * 2.0 + 0.11)
                .collect(),
        );
        let net = Network {
            layers: vec![layer.clone()],
        };
        let mut fwd_rng = ChaCha8Rng::seed_from_u64(0);
        let (out, cache) = net
            .forward(NetInput::Real(&x), Mode::Train, &mut fwd_rng)
            .expect("forward");
        let w: Vec<f64> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (grads, dx) = net
            .backward(&cache, &Tensor::new(out.shape().to_vec(), w.clone()))
            .expect("backward");
        let dx = dx.expect("real-input layers propagate an input gradient");

        // parameter gradients
        let mut layer_mut = layer.clone();
        let n_params = layer_mut.params().len();
        for pi in 0..n_params {
            for e in 0..layer_mut.params()[pi].len() {
                let original = layer_mut.params()[pi].data()[e];
                layer_mut.params_mut()[pi].data_mut()[e] = original + step;
                let up = single_loss(&layer_mut, &x, &w);
                layer_mut.params_mut()[pi].data_mut()[e] = original - step;
                let down = single_loss(&layer_mut, &x, &w);
                layer_mut.params_mut()[pi].data_mut()[e] = original;
                let fd = (up - down) / (2.0 * step);
                let bp = grads.per_layer[0][pi].data()[e];
                let denom = fd.abs().max(bp.abs());
                if denom > 1e-8 {
                    worst = worst.max((fd - bp).abs() / denom);
                }
            }
        }

        // input gradients
        let mut x_pert = x.clone();
        for e in 0..x_pert.len() {
            let original = x_pert.data()[e];
            x_pert.data_mut()[e] = original + step;
            let up = single_loss(&layer, &x_pert, &w);
            x_pert.data_mut()[e] = original - step;
            let down = single_loss(&layer, &x_pert, &w);
            x_pert.data_mut()[e] = original;
            let fd = (up - down) / (2.0 * step);
            let bp = dx.data()[e];
            let denom = fd.abs().max(bp.abs());
            if denom > 1e-8 {
                worst = worst.max((fd - bp).abs() / denom);
            }
        }
    }

    // embedding layer, checked through a two-layer net (embedding + dense)
    let mut emb_net = Network {
        layers: vec![
            Layer::Embedding {
                table: Tensor::new(
                    vec![5, 3],
                    (0..15).map(|i| ((i as f64) * 0.9).cos() * 0.5).collect(),
                ),
            },
            Layer::GlobalMaxPool,
        ],
    };
    let indices = IndexMatrix::new(2, 4, vec![0, 2, 4, 2, 1, 1, 3, 0]);
    let mut rng3 = ChaCha8Rng::seed_from_u64(0);
    let (out, cache) = emb_net
        .forward(NetInput::Indices(&indices), Mode::Train, &mut rng3)
        .expect("forward");
    let w: Vec<f64> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (grads, dx) = emb_net
        .backward(&cache, &Tensor::new(out.shape().to_vec(), w.clone()))
        .expect("backward");
    assert!(dx.is_none(), "embedding-first stack has no input gradient");
    let emb_loss = |net: &Network| -> f64 {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let (o, _) = net
            .forward(NetInput::Indices(&indices), Mode::Train, &mut r)
            .expect("forward");
        o.data().iter().zip(&w).map(|(&ov, &wv)| ov * wv).sum()
    };
    for e in 0..emb_net.layers[0].params()[0].len() {
        let original = emb_net.layers[0].params()[0].data()[e];
        emb_net.layers[0].params_mut()[0].data_mut()[e] = original + step;
        let up = emb_loss(&emb_net);
        emb_net.layers[0].params_mut()[0].data_mut()[e] = original - step;
        let down = emb_loss(&emb_net);
        emb_net.layers[0].params_mut()[0].data_mut()[e] = original;
        let fd = (up - down) / (2.0 * step);
        let bp = grads.per_layer[0][0].data()[e];
        let denom = fd.abs().max(bp.abs());
        if denom > 1e-8 {
            worst = worst.max((fd - bp).abs() / denom);
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// criterion 4: Adam oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_adam_oracle() {
    let start = Instant::now();
    // hand-computed outside the implementation: g = 1, -2, 0.5 with lr = 0.1,
    // a1 = 0.9, a2 = 0.99, eps = 1e-8 inside the square root, w0 = 0.5
    let table = [
        // (g, m, v, m_hat, v_hat, w)
        (
            1.0,
            0.09999999999999998,
            0.010000000000000009,
            1.0,
            1.0,
            0.4000000005,
        ),
        (
            -2.0,
            -0.10999999999999997,
            0.04990000000000004,
            -0.5789473684210527,
            2.5075376884422096,
            0.4365607717605865,
        ),
        (
            0.5,
            -0.04899999999999999,
            0.051901000000000044,
            -0.1808118081180812,
            1.7474495808221973,
            0.4502388303902975,
        ),
    ];
    let mut net = Network {
        layers: vec![Layer::Dense {
            weights: Tensor::new(vec![1, 1], vec![0.5]),
            bias: Tensor::zeros(vec![1]),
        }],
    };
    let mut state = AdamState::new(&net);
    let cfg = TrainConfig {
        learning_rate: 0.1,
        ..TrainConfig::default()
    };
    let mut worst: f64 = 0.0;
    for &(g, _m, _v, _mh, _vh, w_expected) in &table {
        let grads = ParamGrads {
            per_layer: vec![vec![
                Tensor::new(vec![1, 1], vec![g]),
                Tensor::zeros(vec![1]),
            ]],
        };
        trainer::adam_step(&mut net, &grads, &mut state, &cfg);
        let w = net.layers[0].params()[0].data()[0];
        worst = worst.max((w - w_expected).abs());
    }
    let pass = worst < 1e-12;
    report(
        4,
        pass,
        &format!(
            "3-step trace max deviation {worst:.2e}, {:.2?}",
            start.elapsed()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// criterion 5: metrics oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_metrics_oracle() {
    let start = Instant::now();
    // reference confusion matrix (tn 24, fp 2, fn 0, tp 36)
    let cm = metrics::ConfusionMatrix {
        tn: 24,
        fp: 2,
        fn_: 0,
        tp: 36,
    };
    let acc = metrics::accuracy(&cm).unwrap() * 100.0;
    let (p, r, f1) = metrics::prf1(&cm);
    let (p, r, f1) = (p * 100.0, r * 100.0, f1 * 100.0);
    let matrix_ok = (acc - 96.77).abs() <= 0.01
        && (p - 94.73).abs() <= 0.01
        && (r - 100.0).abs() <= 0.01
        && (f1 - 97.29).abs() <= 0.01;

    // AUC equals the brute-force pairwise oracle on random instances
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut auc_ok = true;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=200);
        let mut labels = vec![0.0, 1.0];
        let mut scores = vec![rng.gen::<f64>(), rng.gen::<f64>()];
        for _ in 0..n {
            labels.push(if rng.gen::<f64>() < 0.35 { 1.0 } else { 0.0 });
            scores.push((rng.gen::<f64>() * 12.0).round() / 12.0);
        }
        let auc = metrics::roc(&labels, &scores).unwrap().auc;
        let pos: Vec<f64> = labels
            .iter()
            .zip(&scores)
            .filter(|(&y, _)| y != 0.0)
            .map(|(_, &s)| s)
            .collect();
        let neg: Vec<f64> = labels
            .iter()
            .zip(&scores)
            .filter(|(&y, _)| y == 0.0)
            .map(|(_, &s)| s)
            .collect();
        let mut total = 0.0;
        for &a in &pos {
            for &b in &neg {
                total += if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
        }
        let oracle = total / (pos.len() * neg.len()) as f64;
        worst = worst.max((auc - oracle).abs());
        auc_ok &= (auc - oracle).abs() < 1e-9;
    }

    let pass = matrix_ok && auc_ok;
    report(
        5,
        pass,
        &format!(
            "acc {acc:.4} prec {p:.4} rec {r:.4} f1 {f1:.4}; pairwise AUC max dev {worst:.2e}, {:.2?}",
            start.elapsed()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// criterion 6: end-to-end reproduction
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_end_to_end_reproduction() {
    let start = Instant::now();
    let runs = seed_runs();
    let mut train_dropout: Vec<f64> = runs
        .iter()
        .filter(|r| r.dropout_p > 0.0)
        .map(|r| r.train_acc)
        .collect();
    let mut test_dropout: Vec<f64> = runs
        .iter()
        .filter(|r| r.dropout_p > 0.0)
        .map(|r| r.test_acc)
        .collect();
    let mut gap_dropout: Vec<f64> = runs
        .iter()
        .filter(|r| r.dropout_p > 0.0)
        .map(|r| r.train_acc - r.test_acc)
        .collect();
    let mut gap_plain: Vec<f64> = runs
        .iter()
        .filter(|r| r.dropout_p == 0.0)
        .map(|r| r.train_acc - r.test_acc)
        .collect();

    let med_train = median(&mut train_dropout);
    let med_test = median(&mut test_dropout);
    let med_gap_dropout = median(&mut gap_dropout);
    let med_gap_plain = median(&mut gap_plain);

    let pass = med_train >= 0.90 && med_test >= 0.80 && med_gap_dropout < med_gap_plain;
    report(
        6,
        pass,
        &format!(
            "median train {med_train:.4}, median test {med_test:.4}, gap with dropout \
             {med_gap_dropout:.4} vs without {med_gap_plain:.4}, {:.2?}",
            start.elapsed()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// criterion 7: baseline sanity
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_baseline_sanity() {
    let start = Instant::now();
    let prepared = ingest::prepare(cleveland_text(), 10, 0.8, 0).expect("prepare");
    let train_x =
        hdcnn::tensor::select_rows(&prepared.dataset.std_features, &prepared.split.train_idx);
    let test_x =
        hdcnn::tensor::select_rows(&prepared.dataset.std_features, &prepared.split.test_idx);
    let train_y = prepared.train_labels();
    let test_y = prepared.test_labels();

    let (logreg, _) = hdcnn::baselines::logreg_train(
        &train_x,
        &train_y,
        hdcnn::baselines::LogRegConfig::default(),
    )
    .expect("logreg");
    let logreg_acc =
        threshold_accuracy(&hdcnn::baselines::logreg_predict(&logreg, &test_x), &test_y) * 100.0;

    let gnb = hdcnn::baselines::gnb_train(&train_x, &train_y).expect("gnb");
    let gnb_acc =
        threshold_accuracy(&hdcnn::baselines::gnb_predict(&gnb, &test_x), &test_y) * 100.0;

    let mut cnn_test: Vec<f64> = seed_runs()
        .iter()
        .filter(|r| r.dropout_p > 0.0)
        .map(|r| r.test_acc)
        .collect();
    let cnn_median = median(&mut cnn_test) * 100.0;

    let logreg_ok = (logreg_acc - 80.32).abs() <= 10.0;
    let gnb_ok = (gnb_acc - 78.68).abs() <= 10.0;
    let cnn_beats = cnn_median > logreg_acc && cnn_median > gnb_acc;
    let pass = logreg_ok && gnb_ok && cnn_beats;
    report(
        7,
        pass,
        &format!(
            "logreg {logreg_acc:.2}% (target 80.32 +/- 10), gnb {gnb_acc:.2}% (target 78.68 +/- 10), \
             cnn median {cnn_median:.2}%, {:.2?}",
            start.elapsed()
        ),
    );
    assert!(pass);
}

fn threshold_accuracy(p: &[f64], y: &[f64]) -> f64 {
    p.iter()
        .zip(y)
        .filter(|(&pi, &yi)| (if pi >= 0.5 { 1.0 } else { 0.0 }) == yi)
        .count() as f64
        / y.len() as f64
}

// ---------------------------------------------------------------------------
// criterion 8: determinism and persistence
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_determinism_and_persistence() {
    let start = Instant::now();
    // the fixture contains the seed-0 default run; retrain independently
    let fixture = seed_runs()
        .iter()
        .find(|r| r.seed == 0 && r.dropout_p > 0.0)
        .expect("seed 0 run");
    let retrained = train_once(0, 0.3);

    let bytes_a = model_file::to_bytes(&fixture.net, &fixture.meta).expect("serialize");
    let bytes_b = model_file::to_bytes(&retrained.net, &retrained.meta).expect("serialize");
    let deterministic = bytes_a == bytes_b;

    // save/load round trip: predictions on all 303 samples are bit-identical
    let tmp = std::env::temp_dir().join("hdcnn_acceptance_model.bin");
    model_file::save_model(&tmp, &fixture.net, &fixture.meta).expect("save");
    let (loaded, _) = model_file::load_model(&tmp).expect("load");
    let prepared = ingest::prepare(cleveland_text(), 10, 0.8, 0).expect("prepare");
    let all = prepared.dataset.int_features.clone();
    let p_mem = trainer::predict(&fixture.net, Features::Indices(&all)).expect("predict");
    let p_loaded = trainer::predict(&loaded, Features::Indices(&all)).expect("predict");
    let bit_identical = p_mem
        .iter()
        .zip(&p_loaded)
        .all(|(a, b)| a.to_bits() == b.to_bits());
    let _ = std::fs::remove_file(&tmp);

    let pass = deterministic && bit_identical && p_mem.len() == 303;
    report(
        8,
        pass,
        &format!(
            "same-seed model bytes identical: {deterministic}; save/load predictions \
             bit-identical on {} samples: {bit_identical}, {:.2?}",
            p_mem.len(),
            start.elapsed()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// criterion 9: ingestion parity
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_ingestion_parity() {
    let start = Instant::now();
    let records = ingest::parse_records(cleveland_text()).expect("parse");
    let n = records.len();
    let (mut records, _) = ingest::impute_missing(&records).expect("impute");
    ingest::binarize_labels(&mut records).expect("binarize");
    let negatives = records.iter().filter(|r| r.label() == Some(0.0)).count();
    let positives = n - negatives;

    // standardized training columns: mean ~ 0, population std ~ 1
    let prepared = ingest::prepare(cleveland_text(), 10, 0.8, 0).expect("prepare");
    let z = &prepared.dataset.std_features;
    let mut stats_ok = true;
    for f in 0..NUM_FEATURES {
        if prepared.dataset.stds[f] == 0.0 {
            continue;
        }
        let col: Vec<f64> = prepared
            .split
            .train_idx
            .iter()
            .map(|&r| z.data()[r * NUM_FEATURES + f])
            .collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let std =
            (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64).sqrt();
        stats_ok &= mean.abs() < 1e-9 && (std - 1.0).abs() < 1e-9;
    }

    // the official UCI distribution of this dataset is 164 negatives to
    // 139 positives; the expected 163/140 cannot be derived from the
    // pristine file, so the label clause below fails honestly.
    let labels_ok = negatives == 163 && positives == 140;
    let pass = n == 303 && labels_ok && stats_ok;
    report(
        9,
        pass,
        &format!(
            "samples {n} (expect 303), labels {negatives}/{positives} (expect 163/140; \
             official UCI distribution is 164/139), train-column stats ok: {stats_ok}, {:.2?}",
            start.elapsed()
        ),
    );
    assert!(
        pass,
        "labels {negatives}/{positives} vs the quoted 163/140 (pristine UCI data is 164/139)"
    );
}
