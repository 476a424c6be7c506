//! Mini-batch losses. Both losses are means over the batch rows.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Per-row squared Euclidean error, averaged over rows.
    MeanSquaredError,
    /// Softmax followed by negative log-likelihood of an integer label.
    SoftmaxCrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target<T> {
    Values(Tensor<T>),
    Labels(Vec<usize>),
}

impl<T: Scalar> Target<T> {
    pub fn rows(&self) -> usize {
        match self {
            Target::Values(t) => t.rows(),
            Target::Labels(l) => l.len(),
        }
    }
}

fn check<T: Scalar>(kind: LossKind, output: &Tensor<T>, target: &Target<T>) -> Result<()> {
    let rows = output.rows();
    match (kind, target) {
        (LossKind::MeanSquaredError, Target::Values(t)) => {
            if t.len() != output.len() || t.last_dim() != output.last_dim() {
                return Err(Error::Dimension(format!(
                    "mse target shape {:?} does not match output {:?}",
                    t.shape(),
                    output.shape()
                )));
            }
        }
        (LossKind::SoftmaxCrossEntropy, Target::Labels(labels)) => {
            if labels.len() != rows {
                return Err(Error::Dimension(format!(
                    "{} labels for {} output rows",
                    labels.len(),
                    rows
                )));
            }
            let classes = output.last_dim();
            if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
                return Err(Error::Dimension(format!(
                    "label {bad} out of range for {classes} classes"
                )));
            }
        }
        _ => {
            return Err(Error::Config(format!(
                "{kind:?} loss cannot use this target kind"
            )))
        }
    }
    if rows == 0 {
        return Err(Error::Dimension("empty batch".into()));
    }
    Ok(())
}

fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let sum = row.iter().fold(T::zero(), |acc, &z| acc + (z - max).exp());
    max + sum.ln()
}

pub fn loss_value<T: Scalar>(kind: LossKind, output: &Tensor<T>, target: &Target<T>) -> Result<T> {
    check(kind, output, target)?;
    let rows = T::of(output.rows() as f64);
    let total = match (kind, target) {
        (LossKind::MeanSquaredError, Target::Values(t)) => output
            .data()
            .iter()
            .zip(t.data())
            .fold(T::zero(), |acc, (&y, &y_star)| {
                let diff = y - y_star;
                acc + diff * diff
            }),
        (LossKind::SoftmaxCrossEntropy, Target::Labels(labels)) => output
            .data()
            .chunks_exact(output.last_dim())
            .zip(labels)
            .fold(T::zero(), |acc, (row, &label)| acc + (log_sum_exp(row) - row[label])),
        _ => unreachable!("checked above"),
    };
    Ok(total / rows)
}

/// Gradient of [`loss_value`] with respect to the network output.
pub fn loss_grad<T: Scalar>(
    kind: LossKind,
    output: &Tensor<T>,
    target: &Target<T>,
) -> Result<Tensor<T>> {
    check(kind, output, target)?;
    let rows = T::of(output.rows() as f64);
    let two = T::of(2.0);
    let grad = match (kind, target) {
        (LossKind::MeanSquaredError, Target::Values(t)) => output
            .data()
            .iter()
            .zip(t.data())
            .map(|(&y, &y_star)| two * (y - y_star) / rows)
            .collect(),
        (LossKind::SoftmaxCrossEntropy, Target::Labels(labels)) => {
            let classes = output.last_dim();
            let mut grad = Vec::with_capacity(output.len());
            for (row, &label) in output.data().chunks_exact(classes).zip(labels) {
                let lse = log_sum_exp(row);
                for (c, &z) in row.iter().enumerate() {
                    let p = (z - lse).exp();
                    let onehot = if c == label { T::one() } else { T::zero() };
                    grad.push((p - onehot) / rows);
                }
            }
            grad
        }
        _ => unreachable!("checked above"),
    };
    Tensor::new(output.shape().to_vec(), grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_classes() {
        for classes in [2usize, 3, 10] {
            let out = Tensor::matrix(2, classes, vec![0.7f64; 2 * classes]).unwrap();
            let target = Target::Labels(vec![0, classes - 1]);
            let loss = loss_value(LossKind::SoftmaxCrossEntropy, &out, &target).unwrap();
            assert!((loss - (classes as f64).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn mse_scalar() {
        let out = Tensor::vector(vec![1.0f64]);
        let target = Target::Values(Tensor::vector(vec![3.0]));
        assert_eq!(loss_value(LossKind::MeanSquaredError, &out, &target).unwrap(), 4.0);
        assert_eq!(
            loss_grad(LossKind::MeanSquaredError, &out, &target).unwrap().data(),
            &[-4.0]
        );
    }

    #[test]
    fn label_out_of_range() {
        let out = Tensor::matrix(1, 2, vec![0.0f64, 0.0]).unwrap();
        let target = Target::Labels(vec![2]);
        assert!(loss_value(LossKind::SoftmaxCrossEntropy, &out, &target).is_err());
    }

    #[test]
    fn softmax_grad_rows_sum_to_zero() {
        let out = Tensor::matrix(2, 3, vec![0.1f64, -2.0, 3.0, 1.0, 1.0, 0.0]).unwrap();
        let g = loss_grad(LossKind::SoftmaxCrossEntropy, &out, &Target::Labels(vec![2, 0])).unwrap();
        for row in g.data().chunks(3) {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn wrong_target_kind() {
        let out = Tensor::vector(vec![1.0f64]);
        assert!(loss_value(LossKind::MeanSquaredError, &out, &Target::Labels(vec![0])).is_err());
    }
}
