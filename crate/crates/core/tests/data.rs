mod common;

use adl::data::{gen_linreg, gen_two_spirals, BatchSampler};
use adl::net::{forward, loss_value, unflatten_params, LayerSpec, LossKind, Target};
use adl::optimizer::{LrSchedule, SgdConfig};
use adl::oracle::sync_ga_sgd;
use adl::partition::partition_even;
use adl::scheduler::TrainConfig;
use common::tanh_net;

#[test]
fn sampler_is_uniform() {
    // chi-square over 10^6 draws from 50 bins
    let n = 50;
    let sampler = BatchSampler::new(17, 100).unwrap();
    let mut counts = vec![0u64; n];
    for t in 0..10_000 {
        for i in sampler.indices(n, t) {
            counts[i] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    assert_eq!(total, 1_000_000);
    let expected = total as f64 / n as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 49 degrees of freedom: mean 49, sd ~ 9.9; allow 3 sd
    assert!(chi2 < 49.0 + 3.0 * (2.0f64 * 49.0).sqrt(), "chi2 = {chi2}");
}

#[test]
fn tanh_net_separates_spirals_under_sync_sgd() {
    let data = gen_two_spirals::<f64>(1024, 0.0, 0).unwrap();
    let layers = tanh_net(4, 32);
    let mut config = TrainConfig::new(
        layers.clone(),
        partition_even(layers.len(), 1).unwrap(),
        LossKind::SoftmaxCrossEntropy,
        LrSchedule::Constant { lr: 0.05 },
    );
    config.batch_size = 32;
    config.updates = 4000;
    config.sampler_seed = 50;
    config.sgd = SgdConfig { momentum: 0.9, weight_decay: 0.0 };
    let trace = sync_ga_sgd(&config, &data).unwrap();
    let states = unflatten_params::<f64>(&layers, &trace.final_params).unwrap();
    let (x, t) = data.full_batch();
    let (out, _) = forward(&layers, &states, &x).unwrap();
    let Target::Labels(labels) = t else { unreachable!() };
    let correct = out
        .data()
        .chunks_exact(2)
        .zip(&labels)
        .filter(|(row, &label)| usize::from(row[1] > row[0]) == label)
        .count();
    let accuracy = correct as f64 / labels.len() as f64;
    assert!(accuracy > 0.95, "accuracy {accuracy}");
}

#[test]
fn noisy_regression_cannot_beat_the_noise_floor() {
    let noise = 0.5;
    let data = gen_linreg::<f64>(4000, 5, noise, 3).unwrap();
    let layers = vec![LayerSpec::affine(5, 1)];
    let mut config = TrainConfig::new(
        layers.clone(),
        partition_even(1, 1).unwrap(),
        LossKind::MeanSquaredError,
        LrSchedule::Constant { lr: 0.05 },
    );
    config.batch_size = 64;
    config.updates = 3000;
    let trace = sync_ga_sgd(&config, &data).unwrap();
    let states = unflatten_params::<f64>(&layers, &trace.final_params).unwrap();
    let (x, t) = data.full_batch();
    let (out, _) = forward(&layers, &states, &x).unwrap();
    let mse = loss_value(LossKind::MeanSquaredError, &out, &t).unwrap();
    // fitted close to the floor, and not meaningfully below it
    assert!(mse > noise * noise * 0.9, "mse {mse}");
    assert!(mse < noise * noise * 1.1, "mse {mse}");
}
