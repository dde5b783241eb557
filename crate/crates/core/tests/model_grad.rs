use nolor_core::acoustic::{self, AcousticModel, Freeze, ModelConfig, ParamGroup};
use nolor_core::ctc::Vocab;
use nolor_core::features::{FeatureSpec, Features};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(seed: u64, vocab_size: usize) -> AcousticModel {
    let config = ModelConfig {
        channels: 8,
        encoder_width: 3,
        context_width: 3,
        features: FeatureSpec {
            mel_bins: 6,
            ..FeatureSpec::default()
        },
    };
    let symbols = (1..vocab_size).map(|i| format!("s{i}")).collect();
    AcousticModel::init(&config, Vocab::with_blank(symbols).unwrap(), seed).unwrap()
}

fn random_features(rng: &mut impl Rng, frames: usize, bins: usize) -> Features {
    Features {
        frames,
        bins,
        values: (0..frames * bins)
            .map(|_| rng.random_range(-1.5..1.5))
            .collect(),
    }
}

fn param(model: &mut AcousticModel, group: ParamGroup, idx: usize) -> &mut f32 {
    let layer = model.layer_mut(group);
    let n_w = layer.weight.len();
    if idx < n_w {
        &mut layer.weight[idx]
    } else {
        &mut layer.bias[idx - n_w]
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn every_group_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for case in 0..24 {
        let v = rng.random_range(3..=5);
        let mut model = tiny(case, v);
        let frames = rng.random_range(6..=12);
        let feats = random_features(&mut rng, frames, 6);
        let len = rng.random_range(1..=3);
        let target: Vec<usize> = (0..len).map(|_| rng.random_range(1..v)).collect();
        let out =
            acoustic::model_grad_features(&model, &feats, &target, Freeze::default()).unwrap();
        assert!(!out.skipped);
        // Small enough that a step rarely straddles a ReLU kink; the loss is
        // computed in f64 and the applied delta is measured exactly.
        let h = 2f32.powi(-16);
        for group in ParamGroup::ALL {
            let analytic = out.grads.group(group);
            let mut fd = Vec::new();
            let mut an = Vec::new();
            let n_w = model.layer(group).weight.len();
            let n_b = model.layer(group).bias.len();
            for idx in 0..n_w + n_b {
                let orig = *param(&mut model, group, idx);
                *param(&mut model, group, idx) = orig + h;
                let up_val = *param(&mut model, group, idx) as f64;
                let up = model.loss_features(&feats, &target).unwrap();
                *param(&mut model, group, idx) = orig - h;
                let down_val = *param(&mut model, group, idx) as f64;
                let down = model.loss_features(&feats, &target).unwrap();
                *param(&mut model, group, idx) = orig;
                fd.push((up - down) / (up_val - down_val));
                an.push(if idx < n_w {
                    analytic.weight[idx]
                } else {
                    analytic.bias[idx - n_w]
                });
            }
            let diff: Vec<f64> = fd.iter().zip(&an).map(|(a, b)| a - b).collect();
            let rel = norm(&diff) / norm(&fd).max(norm(&an)).max(1e-8);
            assert!(rel < 1e-3, "case {case} {group:?}: relative error {rel}");
        }
    }
}

#[test]
fn head_gradient_rows_sum_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = tiny(1, 4);
    let feats = random_features(&mut rng, 10, 6);
    let out = acoustic::model_grad_features(&model, &feats, &[1, 2], Freeze::default()).unwrap();
    let bias = &out.grads.group(ParamGroup::Head).bias;
    assert!(bias.iter().sum::<f64>().abs() < 1e-9);
}

#[test]
fn forward_is_pure_and_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let model = tiny(2, 4);
    let feats = random_features(&mut rng, 9, 6);
    let a = model.forward_features(&feats).unwrap();
    let b = model.forward_features(&feats).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.frames(), 9);
    for t in 0..a.frames() {
        let s = nolor_core::ctc::log_sum_exp(a.row(t));
        assert!(s.abs() < 1e-6);
    }
}
