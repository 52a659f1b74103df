//! Parameter gradients of the full networks against central differences.
//!
//! Small coordinates of a deep parameter gradient sit near the roundoff floor
//! of the loss, while biases shift whole channels across activation kinks.
//! Each coordinate is tried at three steps and must agree at one of them,
//! within a relative bound plus the roundoff floor for that step.

use haze_core::blocks::ParamTree;
use haze_core::data::synth::{generate, GenerateConfig};
use haze_core::gaze::{GazeConfig, GazeNet};
use haze_core::sr::{SrConfig, SrNet};
use haze_core::train::l1;
use haze_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEPS: [f64; 3] = [1e-4, 1e-5, 1e-6];

fn replace<N: ParamTree + Clone>(net: &N, name: &str, value: &Tensor) -> N {
    let mut n = net.clone();
    n.visit_mut("", &mut |nm, p| {
        if nm == name {
            *p = value.clone();
        }
    });
    n
}

fn check_params<N: ParamTree + Clone>(net: &N, loss: impl Fn(&N) -> Tensor) {
    let mut net = net.clone();
    net.set_trainable(true);
    let l = loss(&net);
    l.backward().unwrap();
    let noise = 4e-15 * l.item().abs();
    for (name, value) in net.named_params() {
        let grad = value.grad().unwrap_or_else(|| vec![0.0; value.numel()]);
        let frozen = value.detach();
        for i in (0..3).map(|k| (k * 53 + 3) % value.numel()) {
            let at = |d: f64| {
                let mut data = frozen.data().to_vec();
                data[i] += d;
                loss(&replace(
                    &net,
                    &name,
                    &Tensor::new(frozen.shape(), data).unwrap(),
                ))
                .item()
            };
            let a = grad[i];
            let central: Vec<f64> = STEPS
                .iter()
                .map(|&e| (at(e) - at(-e)) / (2.0 * e))
                .collect();
            let agrees = STEPS
                .iter()
                .zip(&central)
                .any(|(e, cd)| (a - cd).abs() <= 1e-4 * a.abs().max(cd.abs()) + noise / e);
            assert!(agrees, "{name}[{i}]: analytic {a:e}, central {central:?}");
        }
    }
}

#[test]
fn sr_parameter_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = SrNet::new(SrConfig::default(), 0).unwrap();
    let lr = Tensor::new(
        &[3, 8, 8],
        (0..192).map(|_| rng.random_range(0.0..1.0)).collect(),
    )
    .unwrap();
    let hr = Tensor::new(
        &[3, 32, 32],
        (0..3072).map(|_| rng.random_range(0.0..1.0)).collect(),
    )
    .unwrap();
    check_params(&net, |n| l1(&n.forward(&lr).unwrap(), &hr).unwrap());
}

#[test]
fn gaze_parameter_gradients() {
    let face = generate(&GenerateConfig {
        count: 1,
        ..GenerateConfig::default()
    })
    .unwrap()
    .remove(0);
    let goal = Tensor::new(&[2], vec![0.2, -0.1]).unwrap();
    for seed in 0..2 {
        let net = GazeNet::new(GazeConfig::default(), seed).unwrap();
        check_params(&net, |n| {
            n.forward(&face.hr, &face.landmarks)
                .unwrap()
                .sub(&goal)
                .unwrap()
                .square()
                .sum()
        });
    }
}
