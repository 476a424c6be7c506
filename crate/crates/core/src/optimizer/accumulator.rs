use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Provenance of one accumulation slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotRecord {
    /// Batch whose gradient filled the slot; negative for pipeline-fill slots.
    pub batch_index: i64,
    /// Parameter version the gradient was computed on.
    pub version: u64,
    pub skipped: bool,
}

/// Running sum of up to `M` per-batch gradients over a module's flat parameters.
#[derive(Debug, Clone)]
pub struct Accumulator<T> {
    grad_sum: Vec<T>,
    capacity: usize,
    provenance: Vec<SlotRecord>,
}

impl<T: Scalar> Accumulator<T> {
    pub fn new(param_len: usize, capacity: usize) -> Self {
        assert!(capacity >= 1, "accumulator capacity must be at least 1");
        Self {
            grad_sum: vec![T::zero(); param_len],
            capacity,
            provenance: Vec::with_capacity(capacity),
        }
    }

    fn check_room(&self) -> Result<()> {
        if self.is_full() {
            return Err(Error::Protocol(format!(
                "accumulator already holds {} slots",
                self.capacity
            )));
        }
        Ok(())
    }

    /// Adds one gradient given as per-layer tensors laid out like the params.
    pub fn accumulate(&mut self, grads: &[Tensor<T>], batch_index: i64, version: u64) -> Result<()> {
        self.check_room()?;
        let len: usize = grads.iter().map(Tensor::len).sum();
        if len != self.grad_sum.len() {
            return Err(Error::Dimension(format!(
                "gradient has {len} entries, accumulator {}",
                self.grad_sum.len()
            )));
        }
        let flat = grads.iter().flat_map(|g| g.data().iter());
        for (acc, &g) in self.grad_sum.iter_mut().zip(flat) {
            *acc = *acc + g;
        }
        self.provenance.push(SlotRecord {
            batch_index,
            version,
            skipped: false,
        });
        Ok(())
    }

    /// Records a slot with no gradient; the sum is left unchanged.
    pub fn skip(&mut self, batch_index: i64, version: u64) -> Result<()> {
        self.check_room()?;
        self.provenance.push(SlotRecord {
            batch_index,
            version,
            skipped: true,
        });
        Ok(())
    }

    pub fn is_full(&self) -> bool {
        self.provenance.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn slots(&self) -> usize {
        self.provenance.len()
    }

    pub fn count_real(&self) -> usize {
        self.provenance.iter().filter(|p| !p.skipped).count()
    }

    pub fn grad_sum(&self) -> &[T] {
        &self.grad_sum
    }

    pub fn provenance(&self) -> &[SlotRecord] {
        &self.provenance
    }

    /// `grad_sum / M`; skipped slots still count toward `M`.
    pub fn averaged(&self) -> Vec<T> {
        let m = T::of(self.capacity as f64);
        self.grad_sum.iter().map(|&g| g / m).collect()
    }

    /// Clears the sum and returns the provenance of the closed group.
    pub fn reset(&mut self) -> Vec<SlotRecord> {
        self.grad_sum.iter_mut().for_each(|g| *g = T::zero());
        std::mem::take(&mut self.provenance)
    }
}
