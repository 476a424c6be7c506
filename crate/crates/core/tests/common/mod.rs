#![allow(dead_code)]

use adl::data::{gen_linreg, gen_two_spirals, Dataset};
use adl::net::{LayerSpec, LossKind};
use adl::optimizer::LrSchedule;
use adl::partition::partition_even;
use adl::scheduler::TrainConfig;

/// `depth` affine layers of width `width` with tanh in between; 2 inputs, 2 classes.
pub fn tanh_net(depth: usize, width: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut dim = 2;
    for i in 0..depth {
        let out = if i + 1 == depth { 2 } else { width };
        layers.push(LayerSpec::affine(dim, out));
        if i + 1 < depth {
            layers.push(LayerSpec::tanh(out));
        }
        dim = out;
    }
    layers
}

pub fn spirals(n: usize, seed: u64) -> Dataset<f64> {
    gen_two_spirals(n, 0.0, seed).unwrap()
}

pub fn linreg(n: usize, dim: usize, seed: u64) -> Dataset<f64> {
    gen_linreg(n, dim, 0.0, seed).unwrap()
}

pub fn spiral_config(splits: usize, accumulation: usize, seed: u64, updates: usize) -> TrainConfig<f64> {
    let layers = tanh_net(6, 16);
    let partition = partition_even(layers.len(), splits).unwrap();
    let mut config = TrainConfig::new(
        layers,
        partition,
        LossKind::SoftmaxCrossEntropy,
        LrSchedule::Constant { lr: 0.05 },
    );
    config.accumulation = accumulation;
    config.batch_size = 16;
    config.updates = updates;
    config.init_seed = seed;
    config.sampler_seed = seed.wrapping_mul(7919).wrapping_add(1);
    config
}

use adl::net::{LayerState, Target};
use adl::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random stack of affine/tanh/relu layers with a random input batch and target.
pub struct RandomNet {
    pub layers: Vec<LayerSpec>,
    pub states: Vec<LayerState<f64>>,
    pub input: Tensor<f64>,
    pub loss: LossKind,
    pub target: Target<f64>,
}

pub fn random_net(seed: u64) -> RandomNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(2..=4);
    let mut dim = rng.random_range(1..=5);
    let in_dim = dim;
    let mut layers = Vec::new();
    for i in 0..depth {
        let out = rng.random_range(1..=5);
        layers.push(LayerSpec::affine(dim, out));
        dim = out;
        if i + 1 < depth {
            layers.push(if rng.random_bool(0.5) {
                LayerSpec::tanh(dim)
            } else {
                LayerSpec::relu(dim)
            });
        }
    }
    let rows = rng.random_range(1..=6);
    let input = Tensor::matrix(rows, in_dim, (0..rows * in_dim).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    let (loss, target) = if rng.random_bool(0.5) {
        let t = Tensor::matrix(rows, dim, (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        (LossKind::MeanSquaredError, Target::Values(t))
    } else {
        if dim < 2 {
            layers.push(LayerSpec::affine(dim, 3));
            dim = 3;
        }
        (LossKind::SoftmaxCrossEntropy, Target::Labels((0..rows).map(|_| rng.random_range(0..dim)).collect()))
    };
    // random biases too, so no ReLU input sits exactly on its kink
    let states = layers
        .iter()
        .map(|spec| {
            let values = (0..spec.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            LayerState::new(spec, values).unwrap()
        })
        .collect();
    RandomNet {
        layers,
        states,
        input,
        loss,
        target,
    }
}
