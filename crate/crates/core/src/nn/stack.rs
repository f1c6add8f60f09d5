use rand::Rng;

use super::blstm::Blstm;
use super::layers::{Conv1d, Dense, Tdnn};
use super::spec::LayerSpec;
use super::tensor::Tensor;
use super::Differentiable;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv1d(Conv1d<T>),
    Dense(Dense<T>),
    Tdnn(Tdnn<T>),
    Blstm(Blstm<T>),
}

impl<T: Real> Layer<T> {
    /// Forward pass without recording anything for backward.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv1d(l) => l.run(x).map(|r| r.0),
            Layer::Dense(l) => l.run(x).map(|r| r.0),
            Layer::Tdnn(l) => l.run(x).map(|r| r.0),
            Layer::Blstm(l) => l.run(x).map(|r| r.0),
        }
    }
}

impl<T: Real> Differentiable<T> for Layer<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv1d(l) => l.forward(x),
            Layer::Dense(l) => l.forward(x),
            Layer::Tdnn(l) => l.forward(x),
            Layer::Blstm(l) => l.forward(x),
        }
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv1d(l) => l.backward(dy),
            Layer::Dense(l) => l.backward(dy),
            Layer::Tdnn(l) => l.backward(dy),
            Layer::Blstm(l) => l.backward(dy),
        }
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv1d(l) => l.params(),
            Layer::Dense(l) => l.params(),
            Layer::Tdnn(l) => l.params(),
            Layer::Blstm(l) => l.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv1d(l) => l.params_mut(),
            Layer::Dense(l) => l.params_mut(),
            Layer::Tdnn(l) => l.params_mut(),
            Layer::Blstm(l) => l.params_mut(),
        }
    }
}

macro_rules! differentiable_layer {
    ($($ty:ident),*) => {$(
        impl<T: Real> Differentiable<T> for $ty<T> {
            fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
                $ty::forward(self, x)
            }

            fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
                $ty::backward(self, dy)
            }

            fn params(&self) -> Vec<&Tensor<T>> {
                $ty::params(self)
            }

            fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
                $ty::params_mut(self)
            }
        }
    )*};
}

differentiable_layer!(Conv1d, Dense, Tdnn, Blstm);

/// A chain of layers built from descriptors.
#[derive(Debug, Clone)]
pub struct Stack<T> {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer<T>>,
    in_dim: usize,
}

impl<T: Real> Stack<T> {
    /// Builds the chain for `in_dim` input channels. When `output_stack` is
    /// set the last layer defaults to a linear activation.
    pub fn build<R: Rng + ?Sized>(specs: &[LayerSpec], in_dim: usize, output_stack: bool, rng: &mut R) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::spec("empty layer stack"));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut dim = in_dim;
        for (i, s) in specs.iter().enumerate() {
            let last = i + 1 == specs.len();
            let act = s.resolved_activation(output_stack && last);
            layers.push(s.build(dim, act, rng).map_err(|e| e.context(&format!("layer {} ({s})", i + 1)))?);
            dim = s.out_dim();
        }
        Ok(Self {
            specs: specs.to_vec(),
            layers,
            in_dim,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.specs.last().map_or(self.in_dim, LayerSpec::out_dim)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = self.layers[0].infer(x)?;
        for l in &self.layers[1..] {
            h = l.infer(&h)?;
        }
        Ok(h)
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

impl<T: Real> Differentiable<T> for Stack<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = self.layers[0].forward(x)?;
        for l in &mut self.layers[1..] {
            h = l.forward(&h)?;
        }
        Ok(h)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = dy.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}
