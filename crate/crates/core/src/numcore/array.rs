//! Dense row-major f64 arrays, the storage type for every parameter and
//! activation in the model.

use crate::error::{Error, Result};
use rand::Rng;

/// A dense array of 64-bit floats with an optional gradient buffer.
///
/// Everything in this crate is at most rank 2; rank-1 arrays are treated as
/// single-row matrices by the tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    values: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Array {
    /// Build from explicit shape and row-major values.
    pub fn from_vec(shape: Vec<usize>, values: Vec<f64>) -> Result<Array> {
        let n: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) || shape.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                lhs: shape,
                rhs: vec![],
            });
        }
        if n != values.len() {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                lhs: shape,
                rhs: vec![values.len()],
            });
        }
        Ok(Array {
            shape,
            values,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Array {
        let n: usize = shape.iter().product();
        Array {
            shape,
            values: vec![0.0; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Array {
        Array {
            shape: vec![1],
            values: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    /// Uniform init in `[lo, hi)`, seed-controlled by the caller's RNG.
    pub fn uniform<R: Rng>(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut R) -> Array {
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
        Array {
            shape,
            values,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) -> &mut Self {
        self.requires_grad = on;
        if on && self.grad.is_none() {
            self.grad = Some(vec![0.0; self.values.len()]);
        }
        self
    }

    pub fn with_requires_grad(mut self) -> Self {
        self.set_requires_grad(true);
        self
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.values.len() {
            return Err(Error::ShapeMismatch {
                op: "set_grad",
                lhs: self.shape.clone(),
                rhs: vec![grad.len()],
            });
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        } else {
            self.grad = Some(vec![0.0; self.values.len()]);
        }
    }

    /// Interpreted as (rows, cols); rank-1 arrays are single rows.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.len() {
            1 => (1, self.shape[0]),
            2 => (self.shape[0], self.shape[1]),
            _ => panic!("rank > 2 arrays are not supported: {:?}", self.shape),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// An ordered collection of named parameter arrays.
///
/// Order is the registration order and drives optimizer state layout and
/// checkpoint payload layout, so it must stay stable across runs.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    arrays: Vec<Array>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    pub fn add(&mut self, name: &str, mut array: Array) {
        assert!(
            !self.names.iter().any(|n| n == name),
            "duplicate parameter name {name}"
        );
        array.set_requires_grad(true);
        self.names.push(name.to_string());
        self.arrays.push(array);
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.index_of(name).map(|i| &self.arrays[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array> {
        self.index_of(name).map(move |i| &mut self.arrays[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn at(&self, index: usize) -> (&str, &Array) {
        (&self.names[index], &self.arrays[index])
    }

    pub fn at_mut(&mut self, index: usize) -> (&str, &mut Array) {
        (&self.names[index], &mut self.arrays[index])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.names.iter().map(|n| n.as_str()).zip(self.arrays.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array)> {
        self.names
            .iter()
            .map(|n| n.as_str())
            .zip(self.arrays.iter_mut())
    }

    pub fn total_params(&self) -> usize {
        self.arrays.iter().map(|a| a.numel()).sum()
    }
}
