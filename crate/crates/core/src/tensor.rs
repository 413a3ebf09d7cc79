//! Dense, shape-checked tensors in row-major order.
//!
//! All signals in the network (inputs, membrane potentials, activations,
//! reconstructions, kernels) are carried by [`Tensor`]. Storage and
//! accumulation are `f64` throughout, and every elementwise operation
//! traverses elements in index order, so results are bit-reproducible
//! across runs and thread counts.

use crate::error::{DscError, DscResult};

/// An n-dimensional real array with explicit shape and row-major data.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// A tensor of the given shape filled with zeros.
    ///
    /// Panics if any extent is zero; shapes are validated wherever they
    /// come from user input, so a zero extent here is a programming error.
    pub fn zeros(shape: &[usize]) -> Tensor {
        assert!(
            !shape.is_empty() && shape.iter().all(|&e| e > 0),
            "tensor extents must be positive, got {:?}",
            shape
        );
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// Builds a tensor from raw row-major data, validating shape and finiteness.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> DscResult<Tensor> {
        if shape.is_empty() || shape.iter().any(|&e| e == 0) {
            return Err(DscError::Geometry(format!(
                "tensor extents must be positive, got {:?}",
                shape
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(DscError::Geometry(format!(
                "shape {:?} implies {} elements but {} were provided",
                shape,
                expected,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(DscError::Geometry(format!(
                "tensor of shape {:?} contains non-finite values",
                shape
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same_shape(&self, other: &Tensor, op: &str) -> DscResult<()> {
        if self.shape != other.shape {
            return Err(DscError::Geometry(format!(
                "{}: operand shapes differ: {:?} vs {:?}",
                op, self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> DscResult<Tensor> {
        self.check_same_shape(other, "add")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn sub(&self, other: &Tensor) -> DscResult<Tensor> {
        self.check_same_shape(other, "sub")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// self += factor * other, in place.
    pub fn add_scaled(&mut self, other: &Tensor, factor: f64) -> DscResult<()> {
        self.check_same_shape(other, "add_scaled")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Tensor) -> DscResult<f64> {
        self.check_same_shape(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc + a * b))
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc + v.abs())
    }

    pub fn l2_norm(&self) -> f64 {
        self.data
            .iter()
            .fold(0.0, |acc, v| acc + v * v)
            .sqrt()
    }

    /// Largest absolute entry (sup norm).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Fraction of entries with |v| > 0, in [0, 1].
    pub fn nonzero_fraction(&self) -> f64 {
        let nonzero = self.data.iter().filter(|v| v.abs() > 0.0).count();
        nonzero as f64 / self.data.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_validates_shape_product() {
        let err = Tensor::from_vec(&[2, 3], vec![1.0; 5]).unwrap_err();
        match err {
            DscError::Geometry(msg) => {
                assert!(msg.contains("[2, 3]"), "message names the shape: {}", msg)
            }
            other => panic!("expected geometry error, got {:?}", other),
        }
    }

    #[test]
    fn from_vec_rejects_non_finite() {
        assert!(Tensor::from_vec(&[2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::from_vec(&[2], vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn from_vec_rejects_zero_extent() {
        assert!(Tensor::from_vec(&[2, 0], vec![]).is_err());
    }

    #[test]
    fn dot_of_three_four() {
        let x = Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(x.dot(&x).unwrap(), 25.0);
    }

    #[test]
    fn l1_norm_of_zero_tensor_is_zero() {
        assert_eq!(Tensor::zeros(&[4, 4]).l1_norm(), 0.0);
    }

    #[test]
    fn scale_by_zero_gives_zero_tensor() {
        let x = Tensor::from_vec(&[3], vec![1.0, -2.0, 3.0]).unwrap();
        let zero = x.scale(0.0);
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn binary_ops_reject_shape_mismatch() {
        let a = Tensor::zeros(&[2, 2]);
        let b = Tensor::zeros(&[4]);
        assert!(a.add(&b).is_err());
        assert!(a.sub(&b).is_err());
        assert!(a.dot(&b).is_err());
    }
}
