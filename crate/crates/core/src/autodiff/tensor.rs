//! Dense row-major tensors.

use std::fmt;
use std::sync::Arc;

/// Element type of tensors: `f64` for gradient checking and oracles,
/// `f32` for inference and toy training.
pub trait Scalar:
    num_traits::Float
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::iter::Sum
    + Send
    + Sync
    + fmt::Debug
    + fmt::Display
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn into_f64(self) -> f64;
    fn from_f32(v: f32) -> Self;
    fn into_f32(self) -> f32;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn into_f64(self) -> f64 {
        self as f64
    }
    fn from_f32(v: f32) -> Self {
        v
    }
    fn into_f32(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn into_f64(self) -> f64 {
        self
    }
    fn from_f32(v: f32) -> Self {
        v as f64
    }
    fn into_f32(self) -> f32 {
        self as f32
    }
}

/// An N-dimensional array with row-major storage.
///
/// Data is held behind an [`Arc`] so clones are cheap; the backward tape
/// captures values by cloning handles, never by copying buffers.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    /// Build a tensor from a shape and row-major data. Panics if lengths disagree.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            shape,
            data: Arc::new(data),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::new(shape.to_vec(), vec![T::zero(); shape.iter().product()])
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor::new(shape.to_vec(), vec![value; shape.iter().product()])
    }

    pub fn scalar_tensor(value: T) -> Self {
        Tensor::new(vec![], vec![value])
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Tensor::new(vec![data.len()], data)
    }

    pub fn from_f64s(shape: &[usize], data: &[f64]) -> Self {
        Tensor::new(shape.to_vec(), data.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable view of the data, copy-on-write if the buffer is shared.
    pub fn data_mut(&mut self) -> &mut [T] {
        let v: &mut Vec<T> = Arc::make_mut(&mut self.data);
        v.as_mut_slice()
    }

    /// The single element of a rank-0 or one-element tensor.
    pub fn scalar(&self) -> T {
        assert_eq!(self.numel(), 1, "scalar() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1 && self.shape.is_empty()
    }

    pub fn reshaped(&self, shape: Vec<usize>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.numel(),
            "reshape {:?} -> {:?} changes element count",
            self.shape,
            shape
        );
        Tensor {
            shape,
            data: Arc::clone(&self.data),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor::new(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row-major strides for this shape.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.into_f64()).collect()
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.data.iter().map(|v| v.into_f32()).collect()
    }

    /// Cast elementwise into another scalar type via f64.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor::new(
            self.shape.clone(),
            self.data.iter().map(|v| U::from_f64(v.into_f64())).collect(),
        )
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.numel() <= 8 {
            write!(f, " {:?}", &self.data[..])
        } else {
            write!(f, " [{:?}, {:?}, ...]", self.data[0], self.data[1])
        }
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strides_are_row_major() {
        let t = Tensor::<f64>::zeros(&[2, 3, 4]);
        assert_eq!(t.strides(), vec![12, 4, 1]);
    }

    #[test]
    #[should_panic(expected = "does not match shape")]
    fn shape_data_mismatch_panics() {
        let _ = Tensor::<f64>::new(vec![2, 2], vec![1.0; 3]);
    }

    #[test]
    fn copy_on_write_preserves_clones() {
        let a = Tensor::<f64>::from_vec(vec![1.0, 2.0]);
        let mut b = a.clone();
        b.data_mut()[0] = 5.0;
        assert_eq!(a.data()[0], 1.0);
        assert_eq!(b.data()[0], 5.0);
    }
}
