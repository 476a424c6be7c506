//! Depth-wise contiguous splits of a layer stack into `K` modules.
//!
//! Module indices are 1-based (`k ∈ 1..=K`) throughout the crate. Layer
//! ranges returned by [`Partition::range`] are 0-based and half-open; the
//! 1-based layer sets are available through [`Partition::layers_of`].

use std::ops::Range;

use crate::error::{Error, Result};
use crate::net::LayerSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    /// `K + 1` strictly increasing 0-based cut points, `0` first and `L` last.
    boundaries: Vec<usize>,
}

impl Partition {
    pub fn from_boundaries(boundaries: Vec<usize>) -> Result<Self> {
        if boundaries.len() < 2 || boundaries[0] != 0 {
            return Err(Error::Config(format!(
                "partition boundaries must start at 0 and hold at least two cut points, got {boundaries:?}"
            )));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "partition boundaries must be strictly increasing, got {boundaries:?}"
            )));
        }
        Ok(Self { boundaries })
    }

    /// Module sizes, first to last.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let mut boundaries = vec![0];
        for &s in sizes {
            boundaries.push(boundaries.last().unwrap() + s);
        }
        Self::from_boundaries(boundaries)
    }

    pub fn num_modules(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn num_layers(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// 0-based layer range of module `k` (1-based).
    pub fn range(&self, k: usize) -> Range<usize> {
        assert!(k >= 1 && k <= self.num_modules(), "module {k} out of range");
        self.boundaries[k - 1]..self.boundaries[k]
    }

    /// 1-based layer indices of module `k`.
    pub fn layers_of(&self, k: usize) -> Vec<usize> {
        self.range(k).map(|l| l + 1).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Largest per-module cost sum.
    pub fn bottleneck(&self, costs: &[f64]) -> f64 {
        (1..=self.num_modules())
            .map(|k| range_cost(costs, self.range(k)))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_split(num_layers: usize, k: usize) -> Result<()> {
    if k == 0 || k > num_layers {
        return Err(Error::Config(format!(
            "split size {k} must lie in 1..={num_layers}"
        )));
    }
    Ok(())
}

/// Even split; earlier modules take the remainder.
pub fn partition_even(num_layers: usize, k: usize) -> Result<Partition> {
    check_split(num_layers, k)?;
    let (base, extra) = (num_layers / k, num_layers % k);
    let sizes: Vec<usize> = (0..k).map(|i| base + usize::from(i < extra)).collect();
    Partition::from_sizes(&sizes)
}

/// Summed left to right so every caller sees the same rounding.
fn range_cost(costs: &[f64], range: Range<usize>) -> f64 {
    costs[range].iter().fold(0.0, |acc, &c| acc + c)
}

/// Contiguous `k`-split minimizing the largest module cost.
///
/// Among optimal splits the lexicographically smallest boundary list wins,
/// i.e. earlier modules are as short as the optimum allows.
#[allow(clippy::needless_range_loop)]
pub fn partition_by_cost(costs: &[f64], k: usize) -> Result<Partition> {
    let n = costs.len();
    check_split(n, k)?;
    if let Some(bad) = costs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        return Err(Error::Config(format!("layer costs must be finite and nonnegative, got {bad}")));
    }

    // best[parts][start]: optimal bottleneck splitting costs[start..] into `parts` modules
    let mut best = vec![vec![f64::INFINITY; n + 1]; k + 1];
    for start in 0..n {
        best[1][start] = range_cost(costs, start..n);
    }
    for parts in 2..=k {
        for start in 0..n {
            if n - start < parts {
                continue;
            }
            let mut b = f64::INFINITY;
            for end in start + 1..=n - (parts - 1) {
                let cand = range_cost(costs, start..end).max(best[parts - 1][end]);
                if cand < b {
                    b = cand;
                }
            }
            best[parts][start] = b;
        }
    }
    let optimum = best[k][0];

    let mut boundaries = vec![0];
    let mut start = 0;
    for parts in (2..=k).rev() {
        let end = (start + 1..=n - (parts - 1))
            .find(|&end| {
                range_cost(costs, start..end) <= optimum && best[parts - 1][end] <= optimum
            })
            .expect("an optimal continuation exists");
        boundaries.push(end);
        start = end;
    }
    boundaries.push(n);
    Partition::from_boundaries(boundaries)
}

/// Default balancing cost: parameter count per layer.
pub fn parameter_costs(layers: &[LayerSpec]) -> Vec<f64> {
    layers.iter().map(|l| l.param_count() as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_splits() {
        let p = partition_even(6, 3).unwrap();
        assert_eq!(p.layers_of(1), vec![1, 2]);
        assert_eq!(p.layers_of(2), vec![3, 4]);
        assert_eq!(p.layers_of(3), vec![5, 6]);
        assert_eq!(partition_even(5, 1).unwrap().sizes(), vec![5]);
        assert_eq!(partition_even(5, 3).unwrap().sizes(), vec![2, 2, 1]);
    }

    #[test]
    fn split_size_out_of_range() {
        assert!(partition_even(3, 0).is_err());
        assert!(partition_even(3, 4).is_err());
        assert!(partition_by_cost(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn cost_balanced_examples() {
        let p = partition_by_cost(&[1.0, 1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(p.boundaries(), &[0, 2, 4]);
        assert_eq!(p.bottleneck(&[1.0; 4]), 2.0);

        let costs = [5.0, 1.0, 1.0, 1.0];
        let p = partition_by_cost(&costs, 2).unwrap();
        assert_eq!(p.layers_of(1), vec![1]);
        assert_eq!(p.layers_of(2), vec![2, 3, 4]);
        assert_eq!(p.bottleneck(&costs), 5.0);

        assert_eq!(partition_by_cost(&[1.0, 2.0, 3.0], 3).unwrap().sizes(), vec![1, 1, 1]);
    }

    #[test]
    fn ties_prefer_leftmost() {
        // [1,0,0,1] K=2: cuts after 1, 2 or 3 all give bottleneck 1
        let p = partition_by_cost(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(p.boundaries(), &[0, 1, 4]);
    }

    #[test]
    fn malformed_boundaries() {
        assert!(Partition::from_boundaries(vec![1, 3]).is_err());
        assert!(Partition::from_boundaries(vec![0, 2, 2]).is_err());
        assert!(Partition::from_boundaries(vec![0]).is_err());
    }
}
