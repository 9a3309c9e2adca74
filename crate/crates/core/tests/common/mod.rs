//! Helpers shared by the integration test targets: finite-difference
//! gradient checks and the ingestion fixture.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use seqtrans::layers::{
    bce_loss, dropout, dropout_backward, relu, relu_backward, sigmoid, sigmoid_backward, Conv1d, Dense, MaxPool1d,
};
use seqtrans::transformer::{
    magnitude_transform, magnitude_transform_backward, make_grid, temporal_resample, temporal_resample_backward,
    ConvBlockConfig,
};
use seqtrans::{
    ClassifierConfig, LayerParams, LeakyClamp, Model64, ModelConfig, ModelVariant, Tensor64, TransformNetConfig,
    TransformParams,
};

pub const EPS: f64 = 1e-5;

/// Gradients smaller than this are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = x[k];
            x[k] = orig + EPS;
            let up = f(&x);
            x[k] = orig - EPS;
            let down = f(&x);
            x[k] = orig;
            (up - down) / (2.0 * EPS)
        })
        .collect()
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn tensor(shape: &[usize], data: &[f64]) -> Tensor64 {
    Tensor64::new(shape.to_vec(), data.to_vec()).unwrap()
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub err: f64,
    pub tol: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, analytic: &[f64], numeric: &[f64], tol: f64) -> Self {
        Self {
            name: name.into(),
            err: max_rel_err(analytic, numeric),
            tol,
        }
    }

    pub fn ok(&self) -> bool {
        self.err <= self.tol
    }
}

// ---------------------------------------------------------------------------
// single layers; each loss is a fixed random projection of the output
// ---------------------------------------------------------------------------

pub fn conv_checks(seed: u64, stride: usize, pad: usize, tol: f64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, c_in, t, c_out, k) = (2, 3, 8, 4, 3);
    let x = normal_vec(&mut rng, n * c_in * t, 1.0);
    let w = normal_vec(&mut rng, c_out * c_in * k, 0.5);
    let b = normal_vec(&mut rng, c_out, 0.5);
    let build = |w: &[f64], b: &[f64]| {
        Conv1d::new(LayerParams::new(tensor(&[c_out, c_in, k], w), tensor(&[c_out], b)), stride, pad).unwrap()
    };
    let xt = |x: &[f64]| tensor(&[n, c_in, t], x);
    let mut layer = build(&w, &b);
    let (y, cache) = layer.forward(&xt(&x)).unwrap();
    let r = normal_vec(&mut rng, y.len(), 1.0);
    let gx = layer.backward(cache, &tensor(y.shape(), &r), true).unwrap();
    let loss = |x: &[f64], w: &[f64], b: &[f64]| dot(build(w, b).forward(&xt(x)).unwrap().0.data(), &r);
    let tag = format!("conv1d(stride {stride}, pad {pad})");
    vec![
        Check::new(
            format!("{tag} input"),
            gx.data(),
            &numeric_grad(&x, |x| loss(x, &w, &b)),
            tol,
        ),
        Check::new(
            format!("{tag} weights"),
            layer.params.grad_weights.data(),
            &numeric_grad(&w, |w| loss(&x, w, &b)),
            tol,
        ),
        Check::new(
            format!("{tag} bias"),
            layer.params.grad_bias.data(),
            &numeric_grad(&b, |b| loss(&x, &w, b)),
            tol,
        ),
    ]
}

pub fn maxpool_check(seed: u64, tol: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [2, 2, 6];
    let x = normal_vec(&mut rng, 24, 1.0);
    let pool = MaxPool1d::new(2, 2).unwrap();
    let (y, cache) = pool.forward(&tensor(&shape, &x)).unwrap();
    let r = normal_vec(&mut rng, y.len(), 1.0);
    let gx = pool.backward(cache, &tensor(y.shape(), &r));
    let num = numeric_grad(&x, |x| dot(pool.forward(&tensor(&shape, x)).unwrap().0.data(), &r));
    Check::new("maxpool1d input", gx.data(), &num, tol)
}

pub fn dense_checks(seed: u64, tol: f64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, f, h) = (3, 5, 4);
    let x = normal_vec(&mut rng, n * f, 1.0);
    let w = normal_vec(&mut rng, f * h, 0.5);
    let b = normal_vec(&mut rng, h, 0.5);
    let build = |w: &[f64], b: &[f64]| Dense::new(LayerParams::new(tensor(&[f, h], w), tensor(&[h], b))).unwrap();
    let mut layer = build(&w, &b);
    let (y, cache) = layer.forward(&tensor(&[n, f], &x)).unwrap();
    let r = normal_vec(&mut rng, y.len(), 1.0);
    let gx = layer.backward(cache, &tensor(y.shape(), &r), true).unwrap();
    let loss = |x: &[f64], w: &[f64], b: &[f64]| dot(build(w, b).forward(&tensor(&[n, f], x)).unwrap().0.data(), &r);
    vec![
        Check::new("dense input", gx.data(), &numeric_grad(&x, |x| loss(x, &w, &b)), tol),
        Check::new(
            "dense weights",
            layer.params.grad_weights.data(),
            &numeric_grad(&w, |w| loss(&x, w, &b)),
            tol,
        ),
        Check::new(
            "dense bias",
            layer.params.grad_bias.data(),
            &numeric_grad(&b, |b| loss(&x, &w, b)),
            tol,
        ),
    ]
}

pub fn relu_check(seed: u64, tol: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // keep every input at least 0.05 away from the kink
    let x: Vec<f64> = normal_vec(&mut rng, 20, 1.0)
        .into_iter()
        .map(|v| v.signum() * (0.05 + v.abs()))
        .collect();
    let r = normal_vec(&mut rng, 20, 1.0);
    let (_, cache) = relu(&tensor(&[4, 5], &x));
    let g = relu_backward(cache, &tensor(&[4, 5], &r));
    let num = numeric_grad(&x, |x| dot(relu(&tensor(&[4, 5], x)).0.data(), &r));
    Check::new("relu", g.data(), &num, tol)
}

pub fn dropout_check(seed: u64, tol: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_vec(&mut rng, 30, 1.0);
    let r = normal_vec(&mut rng, 30, 1.0);
    let run = |x: &[f64]| {
        let mut mask_rng = ChaCha8Rng::seed_from_u64(seed + 1);
        dropout(&tensor(&[3, 10], x), 0.4, true, &mut mask_rng).unwrap()
    };
    let g = dropout_backward(run(&x).1, &tensor(&[3, 10], &r));
    let num = numeric_grad(&x, |x| dot(run(x).0.data(), &r));
    Check::new("dropout (fixed mask)", g.data(), &num, tol)
}

pub fn sigmoid_check(seed: u64, tol: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_vec(&mut rng, 12, 2.0);
    let r = normal_vec(&mut rng, 12, 1.0);
    let (_, cache) = sigmoid(&tensor(&[12], &x));
    let g = sigmoid_backward(cache, &tensor(&[12], &r));
    let num = numeric_grad(&x, |x| dot(sigmoid(&tensor(&[12], x)).0.data(), &r));
    Check::new("sigmoid", g.data(), &num, tol)
}

pub fn bce_check(seed: u64, tol: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<f64> = (0..10).map(|_| rng.random_range(0.05..0.95)).collect();
    let y: Vec<u8> = (0..10).map(|i| (i % 3 == 0) as u8).collect();
    let (_, g) = bce_loss(&p, &y).unwrap();
    let num = numeric_grad(&p, |p| bce_loss(p, &y).unwrap().0);
    Check::new("binary cross-entropy", &g, &num, tol)
}

pub fn clamp_check(tol: f64) -> Check {
    let c = LeakyClamp::default();
    let v = [-3.1, -2.4, -1.2, 0.0, 0.4, 1.9, 2.1, 2.7, 6.0];
    let analytic: Vec<f64> = v.iter().map(|&x| c.derivative(x)).collect();
    let numeric: Vec<f64> = v
        .iter()
        .map(|&x| (c.apply(x + EPS) - c.apply(x - EPS)) / (2.0 * EPS))
        .collect();
    Check::new("leaky clamp", &analytic, &numeric, tol)
}

/// Resampler gradients w.r.t. the input values and each example's theta.
/// The thetas keep every grid point well away from integer indices, where
/// linear interpolation has a kink.
pub fn resample_checks(seed: u64, tol: f64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [2, 3, 12];
    let x = normal_vec(&mut rng, 72, 1.0);
    let theta = [0.83, 0.11, 1.27, -0.19];
    let params = |th: &[f64]| {
        vec![
            TransformParams::new(th[0], th[1], 1.0, 0.0),
            TransformParams::new(th[2], th[3], 1.0, 0.0),
        ]
    };
    let grid = make_grid(&params(&theta), 12).unwrap();
    let xt = tensor(&shape, &x);
    let r = normal_vec(&mut rng, 72, 1.0);
    let (gx, gtheta) = temporal_resample_backward(&xt, &grid, &tensor(&shape, &r)).unwrap();
    let gtheta: Vec<f64> = gtheta.iter().flat_map(|&(a, b)| [a, b]).collect();
    let loss = |x: &[f64], th: &[f64]| {
        let grid = make_grid(&params(th), 12).unwrap();
        dot(temporal_resample(&tensor(&shape, x), &grid).unwrap().data(), &r)
    };
    vec![
        Check::new(
            "temporal resample input",
            gx.data(),
            &numeric_grad(&x, |x| loss(x, &theta)),
            tol,
        ),
        Check::new(
            "temporal resample theta",
            &gtheta,
            &numeric_grad(&theta, |th| loss(&x, th)),
            tol,
        ),
    ]
}

pub fn magnitude_checks(seed: u64, tol: f64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [2, 3, 5];
    let x = normal_vec(&mut rng, 30, 1.0);
    let phi = [0.8, 0.1, 1.3, -0.4];
    let params = |p: &[f64]| {
        vec![
            TransformParams::new(1.0, 0.0, p[0], p[1]),
            TransformParams::new(1.0, 0.0, p[2], p[3]),
        ]
    };
    let r = normal_vec(&mut rng, 30, 1.0);
    let (gx, gphi) = magnitude_transform_backward(&tensor(&shape, &x), &params(&phi), &tensor(&shape, &r)).unwrap();
    let gphi: Vec<f64> = gphi.iter().flat_map(|&(a, b)| [a, b]).collect();
    let loss = |x: &[f64], p: &[f64]| dot(magnitude_transform(&tensor(&shape, x), &params(p)).unwrap().data(), &r);
    vec![
        Check::new(
            "magnitude transform input",
            gx.data(),
            &numeric_grad(&x, |x| loss(x, &phi)),
            tol,
        ),
        Check::new(
            "magnitude transform phi",
            &gphi,
            &numeric_grad(&phi, |p| loss(&x, p)),
            tol,
        ),
    ]
}

/// Every single-layer check at the given tolerance.
pub fn all_layer_checks(seed: u64, tol: f64) -> Vec<Check> {
    let mut v = Vec::new();
    v.extend(conv_checks(seed, 1, 1, tol));
    v.extend(conv_checks(seed + 1, 2, 0, tol));
    v.push(maxpool_check(seed + 2, tol));
    v.extend(dense_checks(seed + 3, tol));
    v.push(relu_check(seed + 4, tol));
    v.push(dropout_check(seed + 5, tol));
    v.push(sigmoid_check(seed + 6, tol));
    v.push(bce_check(seed + 7, tol));
    v.push(clamp_check(tol));
    v.extend(resample_checks(seed + 8, tol));
    v.extend(magnitude_checks(seed + 9, tol));
    v
}

// ---------------------------------------------------------------------------
// end-to-end models
// ---------------------------------------------------------------------------

pub const GRAD_N: usize = 3;
pub const GRAD_D: usize = 4;
pub const GRAD_T: usize = 16;

pub fn small_model_config(clamp: Option<LeakyClamp>) -> ModelConfig {
    ModelConfig {
        classifier: ClassifierConfig {
            depth: 1,
            channels: 3,
            kernel: 3,
            stride: 1,
            pad: 1,
            pool_window: 2,
            pool_stride: 2,
            hidden: 5,
            dropout: Some(0.25),
        },
        transformer: TransformNetConfig {
            blocks: vec![ConvBlockConfig {
                channels: 3,
                kernel: 3,
                stride: 1,
                pad: 1,
                pool_window: 2,
                pool_stride: 2,
            }],
            hidden: 4,
            clamp,
        },
    }
}

/// A small model whose transformation head has random weights and the given
/// bias, so the emitted parameters vary per example and sit off the identity.
pub fn perturbed_model(variant: ModelVariant, config: &ModelConfig, seed: u64, head_bias: [f64; 4]) -> Model64 {
    let mut model = Model64::new(variant, config, GRAD_D, GRAD_T, seed).unwrap();
    if let Some(st) = model.transformer_mut() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let mut layers = st.net.layers_mut();
        let head = layers.last_mut().unwrap();
        let w = normal_vec(&mut rng, head.weights.len(), 0.05);
        head.weights.data_mut().copy_from_slice(&w);
        head.bias.data_mut().copy_from_slice(&head_bias);
    }
    model
}

const DROPOUT_SEED: u64 = 77;

fn model_loss(model: &Model64, x: &Tensor64, labels: &[u8]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(DROPOUT_SEED);
    let (p, _) = model.forward(x, true, &mut rng).unwrap();
    bce_loss(&p, labels).unwrap().0
}

/// Checks the gradient of the training loss (dropout on, with a fixed mask)
/// w.r.t. every weight and bias of every layer.
pub fn model_checks(label: &str, model: &mut Model64, x: &Tensor64, labels: &[u8], tol: f64) -> Vec<Check> {
    model.zero_grad();
    let mut rng = ChaCha8Rng::seed_from_u64(DROPOUT_SEED);
    let (p, cache) = model.forward(x, true, &mut rng).unwrap();
    let (_, g) = bce_loss(&p, labels).unwrap();
    model.backward(cache, &g).unwrap();
    let analytic: Vec<(String, Vec<f64>, Vec<f64>)> = model
        .named_layers()
        .into_iter()
        .map(|(name, p)| (name, p.grad_weights.data().to_vec(), p.grad_bias.data().to_vec()))
        .collect();

    let mut checks = Vec::new();
    for (li, (name, gw, gb)) in analytic.iter().enumerate() {
        for (part, analytic) in [("weights", gw), ("bias", gb)] {
            let numeric: Vec<f64> = (0..analytic.len())
                .map(|k| {
                    let mut eval = |delta: f64| {
                        let orig = {
                            let mut layers = model.layers_mut();
                            let t = if part == "weights" {
                                &mut layers[li].weights
                            } else {
                                &mut layers[li].bias
                            };
                            let orig = t.data()[k];
                            t.data_mut()[k] = orig + delta;
                            orig
                        };
                        let l = model_loss(model, x, labels);
                        let mut layers = model.layers_mut();
                        let t = if part == "weights" {
                            &mut layers[li].weights
                        } else {
                            &mut layers[li].bias
                        };
                        t.data_mut()[k] = orig;
                        l
                    };
                    (eval(EPS) - eval(-EPS)) / (2.0 * EPS)
                })
                .collect();
            checks.push(Check::new(format!("{label}: {name} {part}"), analytic, &numeric, tol));
        }
    }
    checks
}

pub fn grad_batch(seed: u64) -> (Tensor64, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_vec(&mut rng, GRAD_N * GRAD_D * GRAD_T, 1.0);
    (tensor(&[GRAD_N, GRAD_D, GRAD_T], &x), vec![0, 1, 1])
}

/// Head biases for the end-to-end checks: inside the clamp window, and past
/// it so the clamp's outer slope is exercised.
pub const INTERIOR_BIAS: [f64; 4] = [1.13, 0.071, 0.87, 0.043];
pub const SATURATED_BIAS: [f64; 4] = [2.31, -0.063, -2.27, 0.052];

/// All four variants, with the clamp enabled (interior and saturated) and
/// disabled.
pub fn all_model_checks(seed: u64, tol: f64) -> Vec<Check> {
    let (x, labels) = grad_batch(seed);
    let mut checks = Vec::new();
    let cases: [(&str, Option<LeakyClamp>, [f64; 4]); 3] = [
        ("clamped", Some(LeakyClamp::default()), INTERIOR_BIAS),
        ("saturated", Some(LeakyClamp::default()), SATURATED_BIAS),
        ("unclamped", None, INTERIOR_BIAS),
    ];
    for variant in ModelVariant::ALL {
        for (case, clamp, bias) in cases {
            if variant == ModelVariant::Baseline && case != "clamped" {
                continue;
            }
            let cfg = small_model_config(clamp);
            let mut model = perturbed_model(variant, &cfg, seed, bias);
            let label = if variant == ModelVariant::Baseline {
                variant.to_string()
            } else {
                format!("{variant} {case}")
            };
            checks.extend(model_checks(&label, &mut model, &x, &labels, tol));
        }
    }
    checks
}

// ---------------------------------------------------------------------------
// ingestion fixture
// ---------------------------------------------------------------------------

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ingest")
}

pub const FIXTURE_HORIZON: usize = 4;

/// Expected tensor of the three-admission fixture, hand-computed, one row per
/// (admission, channel).
pub const FIXTURE_EXPECTED: [(&str, &str, [f64; 4]); 24] = [
    ("adm1", "hr", [2.0, 2.0, -0.5, -0.5]),
    ("adm1", "verbal=none", [0.0, 0.0, 0.0, 0.0]),
    ("adm1", "verbal=confused", [0.0, 1.0, 1.0, 0.0]),
    ("adm1", "verbal=oriented", [0.0, 0.0, 0.0, 1.0]),
    ("adm1", "age", [0.5, 0.5, 0.5, 0.5]),
    ("adm1", "mask:hr", [1.0, 0.0, 1.0, 0.0]),
    ("adm1", "mask:verbal", [0.0, 1.0, 0.0, 1.0]),
    ("adm1", "mask:age", [1.0, 0.0, 0.0, 0.0]),
    ("adm2", "hr", [0.0, 0.5, 0.5, 0.5]),
    ("adm2", "verbal=none", [0.0, 0.0, 1.0, 1.0]),
    ("adm2", "verbal=confused", [0.0, 0.0, 0.0, 0.0]),
    ("adm2", "verbal=oriented", [0.0, 0.0, 0.0, 0.0]),
    ("adm2", "age", [-1.0, -1.0, -1.0, -1.0]),
    ("adm2", "mask:hr", [0.0, 1.0, 0.0, 0.0]),
    ("adm2", "mask:verbal", [0.0, 0.0, 1.0, 0.0]),
    ("adm2", "mask:age", [1.0, 0.0, 0.0, 1.0]),
    ("adm3", "hr", [0.0, 0.0, 0.0, -2.0]),
    ("adm3", "verbal=none", [0.0, 0.0, 0.0, 0.0]),
    ("adm3", "verbal=confused", [0.0, 0.0, 0.0, 0.0]),
    ("adm3", "verbal=oriented", [0.0, 0.0, 0.0, 0.0]),
    ("adm3", "age", [0.0, 0.0, 0.0, 0.0]),
    ("adm3", "mask:hr", [0.0, 0.0, 0.0, 1.0]),
    ("adm3", "mask:verbal", [0.0, 0.0, 0.0, 0.0]),
    ("adm3", "mask:age", [0.0, 0.0, 0.0, 0.0]),
];

/// One line per (admission, channel): `id channel v0 v1 ...`, using Rust's
/// shortest round-trip float formatting so the text is platform independent.
pub fn render_batch(batch: &seqtrans::SequenceBatch64) -> String {
    let t = batch.steps();
    let mut out = String::new();
    for (i, id) in batch.ids().iter().enumerate() {
        for (c, name) in batch.channel_names().iter().enumerate() {
            let row = &batch.values().example(i)[c * t..(c + 1) * t];
            let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&format!("{id} {name} {}\n", vals.join(" ")));
        }
    }
    out
}
