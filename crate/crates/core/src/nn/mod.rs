//! Minimal training engine: the fixed layer set, losses, Adam and a
//! finite-difference gradient checker.

mod activation;
mod adam;
mod blstm;
mod kernels;
mod layers;
mod loss;
mod spec;
mod stack;
mod tensor;

pub use activation::Activation;
pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use blstm::Blstm;
pub use layers::{splice, Conv1d, Dense, Tdnn};
pub use loss::Loss;
pub use spec::{parse_stack, render_stack, LayerKind, LayerSpec, DEFAULT_TDNN_CONTEXT};
pub use stack::{Layer, Stack};
pub use tensor::Tensor;

use crate::error::Result;
use crate::scalar::Real;

/// Anything with a cached forward pass and a matching backward pass.
/// `backward` accumulates parameter gradients and returns the input gradient.
pub trait Differentiable<T: Real> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>>;
    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>>;
    fn params(&self) -> Vec<&Tensor<T>>;
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

fn probe(k: usize) -> f64 {
    // Fixed, irregular output weights so errors cannot cancel by symmetry.
    ((k as f64) * 0.618_034 + 0.25).sin() + 0.1
}

fn probe_loss<M: Differentiable<f64>>(m: &mut M, x: &Tensor<f64>) -> Result<f64> {
    let y = m.forward(x)?;
    Ok(y.values().iter().enumerate().map(|(k, v)| v * probe(k)).sum())
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares analytic gradients of a fixed linear probe of the output with
/// central differences of step `h`, over every parameter and every input
/// element. Returns the worst relative error.
pub fn grad_check<M: Differentiable<f64>>(module: &mut M, input: &Tensor<f64>, h: f64) -> Result<f64> {
    module.zero_grad();
    let y = module.forward(input)?;
    let dy = Tensor::new(y.shape().to_vec(), (0..y.len()).map(probe).collect())?;
    let dx = module.backward(&dy)?;
    let analytic: Vec<Vec<f64>> = module
        .params()
        .iter()
        .map(|p| p.grad().map_or_else(|| vec![0.0; p.len()], <[f64]>::to_vec))
        .collect();

    let mut worst = 0.0f64;
    for (pi, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let orig = module.params()[pi].values()[i];
            module.params_mut()[pi].values_mut()[i] = orig + h;
            let up = probe_loss(module, input)?;
            module.params_mut()[pi].values_mut()[i] = orig - h;
            let down = probe_loss(module, input)?;
            module.params_mut()[pi].values_mut()[i] = orig;
            worst = worst.max(rel_err(a, (up - down) / (2.0 * h)));
        }
    }
    let mut x = input.clone();
    for i in 0..x.len() {
        let orig = x.values()[i];
        x.values_mut()[i] = orig + h;
        let up = probe_loss(module, &x)?;
        x.values_mut()[i] = orig - h;
        let down = probe_loss(module, &x)?;
        x.values_mut()[i] = orig;
        worst = worst.max(rel_err(dx.values()[i], (up - down) / (2.0 * h)));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_input(rng: &mut ChaCha8Rng, d: usize, f: usize) -> Tensor<f64> {
        Tensor::new(vec![d, f], (0..d * f).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn dense_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut l = Dense::new(8, 5, Activation::LeakyRelu, &mut rng).unwrap();
        let x = random_input(&mut rng, 8, 3);
        assert!(grad_check(&mut l, &x, 1e-5).unwrap() < 1e-4);
    }

    #[test]
    fn wide_kernel_conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut l = Conv1d::new(2, 4, 55, Activation::LeakyRelu, &mut rng).unwrap();
        let x = random_input(&mut rng, 2, 16);
        assert!(grad_check(&mut l, &x, 1e-5).unwrap() < 1e-4);
    }

    #[test]
    fn tdnn_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut l = Tdnn::new(3, 4, &DEFAULT_TDNN_CONTEXT, Activation::LeakyRelu, &mut rng).unwrap();
        let x = random_input(&mut rng, 3, 5);
        assert!(grad_check(&mut l, &x, 1e-5).unwrap() < 1e-4);
    }

    #[test]
    fn blstm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut l = Blstm::new(2, 8, &mut rng).unwrap();
        let x = random_input(&mut rng, 2, 6);
        assert!(grad_check(&mut l, &x, 1e-5).unwrap() < 1e-4);
    }

    #[test]
    fn stack_gradients_through_mixed_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let specs = parse_stack("tdnn:4@-1|0|1,blstm:5,dense:3").unwrap();
        let mut s = Stack::build(&specs, 3, true, &mut rng).unwrap();
        let x = random_input(&mut rng, 3, 6);
        assert!(grad_check(&mut s, &x, 1e-5).unwrap() < 1e-4);
        assert_eq!(s.out_dim(), 3);
    }

    #[test]
    fn infer_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let specs = parse_stack("conv:3x5,conv:1x4").unwrap();
        let mut s = Stack::build(&specs, 2, true, &mut rng).unwrap();
        let x = random_input(&mut rng, 2, 9);
        assert_eq!(s.infer(&x).unwrap(), s.forward(&x).unwrap());
    }

    #[test]
    fn build_errors_name_the_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let specs = vec![LayerSpec::dense(3), LayerSpec::blstm(1)];
        let err = Stack::<f64>::build(&specs, 2, true, &mut rng).unwrap_err().to_string();
        assert!(err.contains("layer 2"), "{err}");
    }
}
