//! Synthetic datasets and a counter-based mini-batch sampler.
//!
//! Batch `t` is a pure function of `(sampler seed, t)`: the generator is a
//! ChaCha stream keyed by the seed and positioned on stream `t`, so any batch
//! can be materialized out of order and every execution mode sees the same
//! batch sequence. Indices are drawn uniformly with replacement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::net::Target;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DatasetKind {
    LinearRegression { dim: usize, noise_std: f64 },
    TwoSpirals { noise_std: f64 },
}

#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub inputs: Tensor<T>,
    pub targets: Target<T>,
    pub kind: DatasetKind,
    pub seed: u64,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.last_dim()
    }

    /// Rows `indices` as a batch.
    pub fn gather(&self, indices: &[usize]) -> (Tensor<T>, Target<T>) {
        let dim = self.input_dim();
        let src = self.inputs.data();
        let mut x = Vec::with_capacity(indices.len() * dim);
        for &i in indices {
            x.extend_from_slice(&src[i * dim..(i + 1) * dim]);
        }
        let x = Tensor::new(vec![indices.len(), dim], x).expect("gather shape");
        let target = match &self.targets {
            Target::Values(t) => {
                let od = t.last_dim();
                let mut y = Vec::with_capacity(indices.len() * od);
                for &i in indices {
                    y.extend_from_slice(&t.data()[i * od..(i + 1) * od]);
                }
                Target::Values(Tensor::new(vec![indices.len(), od], y).expect("gather shape"))
            }
            Target::Labels(l) => Target::Labels(indices.iter().map(|&i| l[i]).collect()),
        };
        (x, target)
    }

    /// Whole dataset as one batch.
    pub fn full_batch(&self) -> (Tensor<T>, Target<T>) {
        let all: Vec<usize> = (0..self.len()).collect();
        self.gather(&all)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `y = W* x + ε` with `x ~ N(0, I)`, `W* ~ N(0, I)` drawn from `seed`, and
/// `ε ~ N(0, noise_std²)`; one output.
pub fn gen_linreg<T: Scalar>(n: usize, dim: usize, noise_std: f64, seed: u64) -> Result<Dataset<T>> {
    if n == 0 || dim == 0 {
        return Err(Error::Config(format!("linreg needs n, dim >= 1, got {n}, {dim}")));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::Config(format!("noise std {noise_std} is negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
    let mut xs = Vec::with_capacity(n * dim);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
        let clean = x.iter().zip(&w).fold(0.0, |acc, (a, b)| acc + a * b);
        let y = clean + noise_std * normal(&mut rng);
        xs.extend(x.into_iter().map(T::of));
        ys.push(T::of(y));
    }
    Ok(Dataset {
        inputs: Tensor::new(vec![n, dim], xs)?,
        targets: Target::Values(Tensor::new(vec![n, 1], ys)?),
        kind: DatasetKind::LinearRegression { dim, noise_std },
        seed,
    })
}

/// Two interleaved spirals of 1.5 turns reaching radius 3, labels alternating `0, 1, 0, ...`.
pub fn gen_two_spirals<T: Scalar>(n: usize, noise_std: f64, seed: u64) -> Result<Dataset<T>> {
    if n < 2 {
        return Err(Error::Config(format!("two spirals needs n >= 2, got {n}")));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::Config(format!("noise std {noise_std} is negative")));
    }
    const TURNS: f64 = 1.5;
    // outer radius; unit-scale spirals leave tanh nets on a long plateau
    const OUTER: f64 = 3.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_class = [n.div_ceil(2), n / 2];
    let mut xs = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let pos = (i / 2) as f64 + 0.5;
        let frac = pos / per_class[class] as f64;
        let angle = frac * TURNS * std::f64::consts::TAU + class as f64 * std::f64::consts::PI;
        let radius = OUTER * (0.1 + 0.9 * frac);
        let x = radius * angle.cos() + noise_std * normal(&mut rng);
        let y = radius * angle.sin() + noise_std * normal(&mut rng);
        xs.push(T::of(x));
        xs.push(T::of(y));
        labels.push(class);
    }
    Ok(Dataset {
        inputs: Tensor::new(vec![n, 2], xs)?,
        targets: Target::Labels(labels),
        kind: DatasetKind::TwoSpirals { noise_std },
        seed,
    })
}

/// Deterministic i.i.d. uniform sampler with replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSampler {
    pub seed: u64,
    pub batch_size: usize,
}

impl BatchSampler {
    pub fn new(seed: u64, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(Self { seed, batch_size })
    }

    /// Row indices of batch `t` from a dataset of `n` rows.
    pub fn indices(&self, n: usize, t: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(t);
        (0..self.batch_size).map(|_| rng.random_range(0..n)).collect()
    }

    pub fn batch<T: Scalar>(&self, data: &Dataset<T>, t: u64) -> (Tensor<T>, Target<T>) {
        data.gather(&self.indices(data.len(), t))
    }

    /// `⌈n / b⌉`, the number of batches booked as one epoch.
    pub fn batches_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }
}

/// Gradient Lipschitz constant of the mean-squared error of a single affine
/// map on `data`: `2 λ_max(E[x̃ x̃ᵀ])` with `x̃ = (x, 1)`.
pub fn affine_mse_lipschitz<T: Scalar>(data: &Dataset<T>) -> f64 {
    let n = data.len();
    let d = data.input_dim() + 1;
    let x = data.inputs.data();
    let mut second = vec![0.0f64; d * d];
    for row in x.chunks_exact(d - 1) {
        let aug: Vec<f64> = row.iter().map(|v| v.to_f64_lossy()).chain([1.0]).collect();
        for a in 0..d {
            for b in 0..d {
                second[a * d + b] += aug[a] * aug[b];
            }
        }
    }
    second.iter_mut().for_each(|v| *v /= n as f64);
    // power iteration on a symmetric PSD matrix
    let mut v = vec![1.0f64; d];
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w: Vec<f64> = (0..d)
            .map(|a| (0..d).map(|b| second[a * d + b] * v[b]).sum())
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let next = norm;
        v = w.into_iter().map(|x| x / norm).collect();
        if (next - lambda).abs() <= 1e-14 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    2.0 * lambda
}
