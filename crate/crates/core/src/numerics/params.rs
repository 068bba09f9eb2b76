use alloc::vec::Vec;

use super::Matrix;

/// A fixed, ordered collection of parameter (or gradient) matrices.
///
/// Gradients use the same container type as the parameters they belong to,
/// so optimizers and checkpoints can walk both in lockstep.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&Matrix>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Copy with every entry set to zero.
    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}
