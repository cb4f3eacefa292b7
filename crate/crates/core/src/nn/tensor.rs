use alloc::vec::Vec;

use crate::error::{shape_err, Result};

/// Dense row-major tensor of rank 0 to 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: [usize; 3],
    rank: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.len() > 3 {
            return Err(shape_err!("rank {} exceeds 3", shape.len()));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(shape_err!("shape {shape:?} needs {expected} values, got {}", data.len()));
        }
        let mut dims = [0; 3];
        dims[..shape.len()].copy_from_slice(shape);
        Ok(Self { dims, rank: shape.len(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self::new(shape, alloc::vec![0.0; len]).expect("rank <= 3")
    }

    pub fn scalar(value: f64) -> Self {
        Self { dims: [0; 3], rank: 0, data: alloc::vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self { dims: [data.len(), 0, 0], rank: 1, data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(&[rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.dims[..self.rank]
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the last axis (1 for scalars).
    pub fn cols(&self) -> usize {
        if self.rank == 0 {
            1
        } else {
            self.dims[self.rank - 1]
        }
    }

    /// Product of all axes but the last.
    pub fn rows(&self) -> usize {
        match self.cols() {
            0 => self.shape()[..self.rank - 1].iter().product(),
            c => self.data.len() / c,
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        let data = core::mem::take(&mut self.data);
        Self::new(shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn shapes() {
        let t = Tensor::new(&[2, 3, 4], vec![0.0; 24]).unwrap();
        assert_eq!(t.shape(), &[2, 3, 4]);
        assert_eq!((t.rows(), t.cols()), (6, 4));
        assert_eq!(Tensor::scalar(2.0).shape(), &[] as &[usize]);
        assert_eq!(Tensor::scalar(2.0).cols(), 1);
        assert!(Tensor::new(&[2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(&[1, 1, 1, 1], vec![0.0]).is_err());
        let r = Tensor::zeros(&[2, 6]).reshaped(&[3, 4]).unwrap();
        assert_eq!(r.shape(), &[3, 4]);
    }
}
