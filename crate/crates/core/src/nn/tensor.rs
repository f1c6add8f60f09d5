use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{all_finite, Real};

/// Shape-tagged array with an optional accumulated-gradient buffer.
///
/// Layer inputs and outputs are two-dimensional `[channels, time]`;
/// parameters carry a gradient of identical length.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    values: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, values: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::shape(format!("shape {shape:?} needs {n} values, got {}", values.len())));
        }
        Ok(Self {
            shape,
            values,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![T::zero(); n],
            grad: None,
        }
    }

    /// A trainable tensor: values plus a zeroed gradient.
    pub fn param(shape: Vec<usize>, values: Vec<T>) -> Result<Self> {
        let mut t = Self::new(shape, values)?;
        t.grad = Some(vec![T::zero(); t.values.len()]);
        Ok(t)
    }

    pub fn from_matrix(m: &Matrix<T>) -> Self {
        Self {
            shape: vec![m.rows(), m.cols()],
            values: m.as_slice().to_vec(),
            grad: None,
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix<T>> {
        let (r, c) = self.dims2()?;
        Matrix::from_vec(r, c, self.values.clone())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated on first use.
    pub fn grad_mut(&mut self) -> &mut [T] {
        let n = self.values.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); n])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    /// `(rows, cols)` of a two-dimensional tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::shape(format!("expected a 2-D tensor, got shape {:?}", self.shape))),
        }
    }

    pub fn row(&self, r: usize) -> &[T] {
        let c = self.shape[1];
        &self.values[r * c..(r + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.values) && self.grad.as_deref().is_none_or(all_finite)
    }
}
