use rand::Rng;

use super::kernels::{dot, matmul_acc, matmul_t_acc, outer_acc, transpose};
use super::layers::uniform_init;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[inline]
fn step_index(reverse: bool, s: usize, len: usize) -> usize {
    if reverse {
        len - 1 - s
    } else {
        s
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// One recurrent direction. Gate blocks are stacked in the order
/// input, forget, cell, output along the `4H` axis.
#[derive(Debug, Clone)]
pub(crate) struct LstmDir<T> {
    pub(crate) w: Tensor<T>,
    pub(crate) u: Tensor<T>,
    pub(crate) b: Tensor<T>,
    hidden: usize,
    reverse: bool,
}

/// Per-step activations, time-major `[F, 4H]` gates and `[F, H]` states.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache<T> {
    input: Vec<T>,
    gates: Vec<T>,
    cells: Vec<T>,
    hiddens: Vec<T>,
    len: usize,
}

impl<T: Real> LstmDir<T> {
    fn new<R: Rng + ?Sized>(inp: usize, hidden: usize, reverse: bool, rng: &mut R) -> Self {
        let g = 4 * hidden;
        let mut b = vec![T::zero(); g];
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = T::one());
        Self {
            w: Tensor::param(vec![g, inp], uniform_init(rng, g * inp, inp)).expect("shape"),
            u: Tensor::param(vec![g, hidden], uniform_init(rng, g * hidden, hidden)).expect("shape"),
            b: Tensor::param(vec![g], b).expect("shape"),
            hidden,
            reverse,
        }
    }

    fn inp(&self) -> usize {
        self.w.shape()[1]
    }

    #[inline]
    fn step_index(&self, s: usize, len: usize) -> usize {
        step_index(self.reverse, s, len)
    }

    /// Runs over channel-major `x` `[D, F]`; returns time-major hidden states `[F, H]`.
    fn forward(&self, x: &[T], len: usize) -> LstmCache<T> {
        let (h, d) = (self.hidden, self.inp());
        let g = 4 * h;
        let mut zc = vec![T::zero(); g * len];
        for (r, row) in zc.chunks_mut(len).enumerate() {
            row.iter_mut().for_each(|v| *v = self.b.values()[r]);
        }
        matmul_acc(self.w.values(), x, &mut zc, g, d, len);
        let mut gates = transpose(&zc, g, len);
        let mut cells = vec![T::zero(); len * h];
        let mut hiddens = vec![T::zero(); len * h];
        let u = self.u.values();
        let mut h_prev = vec![T::zero(); h];
        let mut c_prev = vec![T::zero(); h];
        for s in 0..len {
            let t = self.step_index(s, len);
            let z = &mut gates[t * g..(t + 1) * g];
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += dot(&u[r * h..(r + 1) * h], &h_prev);
            }
            for j in 0..h {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[h + j]);
                let gg = z[2 * h + j].tanh();
                let o = sigmoid(z[3 * h + j]);
                z[j] = i;
                z[h + j] = f;
                z[2 * h + j] = gg;
                z[3 * h + j] = o;
                let c = f * c_prev[j] + i * gg;
                cells[t * h + j] = c;
                hiddens[t * h + j] = o * c.tanh();
            }
            h_prev.copy_from_slice(&hiddens[t * h..(t + 1) * h]);
            c_prev.copy_from_slice(&cells[t * h..(t + 1) * h]);
        }
        LstmCache {
            input: x.to_vec(),
            gates,
            cells,
            hiddens,
            len,
        }
    }

    /// Backpropagates time-major `dh` `[F, H]`; returns channel-major `dx` `[D, F]`.
    fn backward(&mut self, cache: &LstmCache<T>, dh_out: &[T]) -> Vec<T> {
        let (h, d, len) = (self.hidden, self.inp(), cache.len);
        let g = 4 * h;
        let mut dz = vec![T::zero(); len * g];
        let mut dh_next = vec![T::zero(); h];
        let mut dc_next = vec![T::zero(); h];
        let zero_state = vec![T::zero(); h];
        let u = self.u.values().to_vec();
        let reverse = self.reverse;
        let gu = self.u.grad_mut();
        for s in (0..len).rev() {
            let t = step_index(reverse, s, len);
            let (h_prev, c_prev) = if s == 0 {
                (&zero_state[..], &zero_state[..])
            } else {
                let tp = step_index(reverse, s - 1, len);
                (&cache.hiddens[tp * h..(tp + 1) * h], &cache.cells[tp * h..(tp + 1) * h])
            };
            let gates = &cache.gates[t * g..(t + 1) * g];
            let dzt = &mut dz[t * g..(t + 1) * g];
            for j in 0..h {
                let (i, f, gg, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = cache.cells[t * h + j].tanh();
                let dh = dh_out[t * h + j] + dh_next[j];
                let dc = dh * o * (T::one() - tc * tc) + dc_next[j];
                dzt[j] = dc * gg * i * (T::one() - i);
                dzt[h + j] = dc * c_prev[j] * f * (T::one() - f);
                dzt[2 * h + j] = dc * i * (T::one() - gg * gg);
                dzt[3 * h + j] = dh * tc * o * (T::one() - o);
                dc_next[j] = dc * f;
            }
            dh_next.iter_mut().for_each(|v| *v = T::zero());
            for r in 0..g {
                let a = dzt[r];
                let urow = &u[r * h..(r + 1) * h];
                let grow = &mut gu[r * h..(r + 1) * h];
                for j in 0..h {
                    grow[j] += a * h_prev[j];
                    dh_next[j] += a * urow[j];
                }
            }
        }
        let dzc = transpose(&dz, len, g);
        let gb = self.b.grad_mut();
        for r in 0..g {
            gb[r] += dzc[r * len..(r + 1) * len].iter().copied().sum();
        }
        outer_acc(&dzc, &cache.input, self.w.grad_mut(), g, d, len);
        let mut dx = vec![T::zero(); d * len];
        matmul_t_acc(self.w.values(), &dzc, &mut dx, g, d, len);
        dx
    }
}

/// Bidirectional LSTM over `[D, F]` inputs. The `out` units are split
/// between the directions, forward first, with the extra unit of an odd
/// width going to the forward direction.
#[derive(Debug, Clone)]
pub struct Blstm<T> {
    pub(crate) fwd: LstmDir<T>,
    pub(crate) bwd: LstmDir<T>,
    cache: Option<(LstmCache<T>, LstmCache<T>)>,
}

impl<T: Real> Blstm<T> {
    pub fn new<R: Rng + ?Sized>(inp: usize, out: usize, rng: &mut R) -> Result<Self> {
        if inp == 0 || out < 2 {
            return Err(Error::invalid("blstm needs a positive input and at least two output units"));
        }
        let hf = out.div_ceil(2);
        Ok(Self {
            fwd: LstmDir::new(inp, hf, false, rng),
            bwd: LstmDir::new(inp, out - hf, true, rng),
            cache: None,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }

    pub fn in_dim(&self) -> usize {
        self.fwd.inp()
    }

    fn stitch(&self, a: &LstmCache<T>, b: &LstmCache<T>) -> Result<Tensor<T>> {
        let len = a.len;
        let (hf, hb) = (self.fwd.hidden, self.bwd.hidden);
        let mut y = transpose(&a.hiddens, len, hf);
        y.extend(transpose(&b.hiddens, len, hb));
        Tensor::new(vec![hf + hb, len], y)
    }

    pub(crate) fn run(&self, x: &Tensor<T>) -> Result<(Tensor<T>, (LstmCache<T>, LstmCache<T>))> {
        let (d, len) = x.dims2()?;
        if d != self.in_dim() {
            return Err(Error::shape(format!("blstm expects {} input channels, got {d}", self.in_dim())));
        }
        if len == 0 {
            return Err(Error::shape("blstm needs at least one frame"));
        }
        let a = self.fwd.forward(x.values(), len);
        let b = self.bwd.forward(x.values(), len);
        let y = self.stitch(&a, &b)?;
        Ok((y, (a, b)))
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, cache) = self.run(x)?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (a, b) = self.cache.take().ok_or_else(|| Error::shape("blstm backward before forward"))?;
        let len = a.len;
        let (hf, hb) = (self.fwd.hidden, self.bwd.hidden);
        let dyv = dy.values();
        let dfa = transpose(&dyv[..hf * len], hf, len);
        let dfb = transpose(&dyv[hf * len..], hb, len);
        let mut dx = self.fwd.backward(&a, &dfa);
        let dx2 = self.bwd.backward(&b, &dfb);
        dx.iter_mut().zip(dx2).for_each(|(p, q)| *p += q);
        self.cache = Some((a, b));
        Tensor::new(vec![self.in_dim(), len], dx)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.fwd.w, &self.fwd.u, &self.fwd.b, &self.bwd.w, &self.bwd.u, &self.bwd.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.fwd.w,
            &mut self.fwd.u,
            &mut self.fwd.b,
            &mut self.bwd.w,
            &mut self.bwd.u,
            &mut self.bwd.b,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut l = Blstm::<f64>::new(3, 4, &mut rng).unwrap();
        for p in l.params_mut() {
            p.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Tensor::new(vec![3, 5], (0..15).map(|i| i as f64 * 0.3 - 2.0).collect()).unwrap();
        let y = l.forward(&x).unwrap();
        assert_eq!(y.shape(), &[4, 5]);
        assert!(y.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_frame_directions_agree_with_shared_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut l = Blstm::<f64>::new(3, 6, &mut rng).unwrap();
        l.bwd.w = l.fwd.w.clone();
        l.bwd.u = l.fwd.u.clone();
        l.bwd.b = l.fwd.b.clone();
        let x = Tensor::new(vec![3, 1], vec![0.4, -0.2, 0.9]).unwrap();
        let y = l.forward(&x).unwrap();
        assert_eq!(&y.values()[..3], &y.values()[3..]);
    }

    #[test]
    fn odd_width_splits_forward_heavy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = Blstm::<f64>::new(2, 257, &mut rng).unwrap();
        assert_eq!((l.fwd.hidden, l.bwd.hidden), (129, 128));
        assert_eq!(l.out_dim(), 257);
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = Blstm::<f64>::new(2, 4, &mut rng).unwrap();
        assert_eq!(l.fwd.b.values(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_unit_hand_oracle() {
        // One forward unit, scalar input, U = 0: h = o * tanh(i * g) at t = 0.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut l = Blstm::<f64>::new(1, 2, &mut rng).unwrap();
        l.fwd.w.values_mut().copy_from_slice(&[0.5, -0.3, 0.8, 0.2]);
        l.fwd.u.values_mut().iter_mut().for_each(|v| *v = 0.0);
        l.fwd.b.values_mut().copy_from_slice(&[0.0, 1.0, 0.0, 0.0]);
        let x = Tensor::new(vec![1, 2], vec![1.0, -1.0]).unwrap();
        let y = l.forward(&x).unwrap();
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let c0 = s(0.5) * 0.8f64.tanh();
        let h0 = s(0.2) * c0.tanh();
        let c1 = s(1.0 + 0.3) * c0 + s(-0.5) * (-0.8f64).tanh();
        let h1 = s(-0.2) * c1.tanh();
        assert!((y.values()[0] - h0).abs() < 1e-14);
        assert!((y.values()[1] - h1).abs() < 1e-14);
    }
}
