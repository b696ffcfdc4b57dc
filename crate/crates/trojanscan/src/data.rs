//! Labeled datasets for the synthetic classification task.

use crate::diffnet::Tensor;
use crate::error::{Error, Result};

/// An input matrix (`n x d_x`, values in `[0,1]`) with integer class labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    inputs: Vec<f64>,
    labels: Vec<usize>,
    d_x: usize,
    c: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, labels: Vec<usize>, d_x: usize, c: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("dataset must contain at least one record"));
        }
        if d_x == 0 || c < 2 {
            return Err(Error::invalid(format!(
                "degenerate dataset dimensions d_x={d_x}, c={c}"
            )));
        }
        if inputs.len() != labels.len() * d_x {
            return Err(Error::shape(format!(
                "inputs length {} does not match {} records of width {}",
                inputs.len(),
                labels.len(),
                d_x
            )));
        }
        if let Some(v) = inputs.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("input value {v} outside [0,1]")));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::invalid(format!("label {l} outside 0..{c}")));
        }
        Ok(Dataset {
            inputs,
            labels,
            d_x,
            c,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.d_x..(i + 1) * self.d_x]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Copy the records at `indices` into a batch tensor plus label vector.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.d_x);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.input(i));
            labels.push(self.labels[i]);
        }
        let t = Tensor::from_vec(&[indices.len(), self.d_x], data)
            .expect("batch dimensions are consistent by construction");
        (t, labels)
    }

    /// The whole dataset as one batch tensor.
    pub fn full_batch(&self) -> Tensor {
        Tensor::from_vec(&[self.n(), self.d_x], self.inputs.clone())
            .expect("dataset dimensions are consistent by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_out_of_range() {
        assert!(Dataset::new(vec![], vec![], 4, 2).is_err());
        assert!(Dataset::new(vec![0.5, 1.5], vec![0], 2, 2).is_err());
        assert!(Dataset::new(vec![0.5, 0.5], vec![2], 2, 2).is_err());
        assert!(Dataset::new(vec![0.5, 0.5], vec![1], 2, 2).is_ok());
    }

    #[test]
    fn batch_gathers_rows_in_order() {
        let d = Dataset::new(vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5], vec![0, 1, 0], 2, 2).unwrap();
        let (t, labels) = d.batch(&[2, 0]);
        assert_eq!(t.data(), &[0.4, 0.5, 0.0, 0.1]);
        assert_eq!(labels, vec![0, 0]);
    }
}
