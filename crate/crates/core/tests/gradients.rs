//! Finite-difference gradient checks, layer by layer and end to end.

mod common;

use common::*;
use seqtrans::{LeakyClamp, ModelVariant};

fn assert_all(checks: &[Check]) {
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.ok())
        .map(|c| format!("{}: {:.3e} > {:.0e}", c.name, c.err, c.tol))
        .collect();
    assert!(failed.is_empty(), "gradient mismatches:\n{}", failed.join("\n"));
}

#[test]
fn conv1d_gradients() {
    for seed in 0..3 {
        assert_all(&conv_checks(seed, 1, 1, 1e-5));
        assert_all(&conv_checks(seed, 1, 0, 1e-5));
        assert_all(&conv_checks(seed, 2, 1, 1e-5));
    }
}

#[test]
fn maxpool_gradients() {
    for seed in 0..3 {
        assert_all(&[maxpool_check(seed, 1e-5)]);
    }
}

#[test]
fn dense_gradients() {
    assert_all(&dense_checks(4, 1e-6));
}

#[test]
fn elementwise_gradients() {
    assert_all(&[
        relu_check(5, 1e-6),
        dropout_check(6, 1e-6),
        sigmoid_check(7, 1e-6),
        bce_check(8, 1e-6),
        clamp_check(1e-6),
    ]);
}

#[test]
fn resampler_gradients_wrt_input_and_theta() {
    for seed in 0..3 {
        assert_all(&resample_checks(seed, 1e-5));
    }
}

#[test]
fn magnitude_gradients_wrt_input_and_phi() {
    assert_all(&magnitude_checks(9, 1e-6));
}

#[test]
fn end_to_end_gradients_all_variants() {
    for seed in [11, 12] {
        assert_all(&all_model_checks(seed, 1e-4));
    }
}

#[test]
fn frozen_pairs_get_zero_head_gradient() {
    let (x, labels) = grad_batch(3);
    let cfg = small_model_config(Some(LeakyClamp::default()));
    for (variant, frozen) in [(ModelVariant::TemporalOnly, [2, 3]), (ModelVariant::MagnitudeOnly, [0, 1])] {
        let mut model = perturbed_model(variant, &cfg, 3, INTERIOR_BIAS);
        model_checks("", &mut model, &x, &labels, 1e-4);
        let layers = model.named_layers();
        let head = layers.iter().find(|(n, _)| n == "transformer.head").unwrap().1;
        for k in frozen {
            assert_eq!(head.grad_bias.data()[k], 0.0, "{variant} output {k}");
        }
        let live = [0, 1, 2, 3].iter().filter(|k| !frozen.contains(k)).any(|&k| head.grad_bias.data()[k] != 0.0);
        assert!(live, "{variant}: used pair has no gradient");
    }
}

#[test]
fn baseline_has_no_transformer_gradients() {
    let (x, labels) = grad_batch(4);
    let cfg = small_model_config(Some(LeakyClamp::default()));
    let mut model = perturbed_model(ModelVariant::Baseline, &cfg, 4, INTERIOR_BIAS);
    model_checks("", &mut model, &x, &labels, 1e-4);
    assert!(model.named_layers().iter().all(|(n, _)| !n.starts_with("transformer")));
    assert_eq!(model.transformer_num_params(), 0);
}
