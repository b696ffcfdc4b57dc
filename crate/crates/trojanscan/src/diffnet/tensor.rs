//! Dense f64 tensors with an optional gradient buffer.

use crate::error::{Error, Result};

/// A dense real array in row-major order.
///
/// The gradient buffer, when allocated, always has the same length as the
/// data; optimizers read it and backward passes accumulate into it.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if shape.contains(&0) {
            return Err(Error::shape(format!("zero dimension in shape {shape:?}")));
        }
        if data.len() != len {
            return Err(Error::shape(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                len,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    /// 2-D constructor: `rows` vectors of length `cols`, row-major.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::from_vec(&[rows, cols], data)
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

    /// Number of rows when viewed as 2-D (leading dimension).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Row length when viewed as 2-D; 1-D tensors are a single row.
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1]
        } else {
            self.shape[0]
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    /// Allocate the gradient buffer (zeroed) if not present.
    pub fn ensure_grad(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.data.len()]);
        }
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocating on first use.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        self.ensure_grad();
        self.grad.as_deref_mut().unwrap()
    }

    /// Simultaneous read of data and write of grad; needed when a backward
    /// pass reads weights while accumulating their gradient.
    pub fn data_and_grad_mut(&mut self) -> (&[f64], &mut [f64]) {
        self.ensure_grad();
        (&self.data, self.grad.as_deref_mut().unwrap())
    }

    /// Simultaneous write of data and read of grad; what an optimizer step
    /// needs.
    pub fn data_mut_and_grad(&mut self) -> (&mut [f64], &[f64]) {
        self.ensure_grad();
        (&mut self.data, self.grad.as_deref().unwrap())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_deref_mut() {
            g.fill(0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }
}
