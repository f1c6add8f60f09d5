use rand::Rng;
use rayon::prelude::*;

use super::activation::Activation;
use super::kernels::{axpy, dot, matmul_acc, matmul_t_acc, outer_acc};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub(crate) fn uniform_init<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize, fan_in: usize) -> Vec<T> {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| T::lit(rng.random_range(-bound..=bound))).collect()
}

/// Framewise affine map plus activation over `[inp, len]` inputs.
#[derive(Debug, Clone)]
pub(crate) struct Affine<T> {
    pub(crate) weight: Tensor<T>,
    pub(crate) bias: Tensor<T>,
    pub(crate) act: Activation,
}

/// Forward products kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct AffineCache<T> {
    input: Vec<T>,
    pre: Vec<T>,
    len: usize,
}

impl<T: Real> Affine<T> {
    pub(crate) fn new<R: Rng + ?Sized>(inp: usize, out: usize, act: Activation, rng: &mut R) -> Self {
        Self {
            weight: Tensor::param(vec![out, inp], uniform_init(rng, out * inp, inp)).expect("shape"),
            bias: Tensor::param(vec![out], vec![T::zero(); out]).expect("shape"),
            act,
        }
    }

    pub(crate) fn inp(&self) -> usize {
        self.weight.shape()[1]
    }

    pub(crate) fn out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub(crate) fn forward(&self, x: &[T], len: usize) -> (Vec<T>, AffineCache<T>) {
        let (out, inp) = (self.out(), self.inp());
        let mut pre = vec![T::zero(); out * len];
        for (o, row) in pre.chunks_mut(len.max(1)).enumerate().take(out) {
            row.iter_mut().for_each(|v| *v = self.bias.values()[o]);
        }
        matmul_acc(self.weight.values(), x, &mut pre, out, inp, len);
        let y = pre.iter().map(|&z| self.act.apply(z)).collect();
        (
            y,
            AffineCache {
                input: x.to_vec(),
                pre,
                len,
            },
        )
    }

    pub(crate) fn backward(&mut self, cache: &AffineCache<T>, dy: &[T]) -> Vec<T> {
        let (out, inp, len) = (self.out(), self.inp(), cache.len);
        let dz: Vec<T> = dy
            .iter()
            .zip(&cache.pre)
            .map(|(&g, &z)| g * self.act.derivative(z))
            .collect();
        outer_acc(&dz, &cache.input, self.weight.grad_mut(), out, inp, len);
        let gb = self.bias.grad_mut();
        for o in 0..out {
            gb[o] += dz[o * len..(o + 1) * len].iter().copied().sum();
        }
        let mut dx = vec![T::zero(); inp * len];
        matmul_t_acc(self.weight.values(), &dz, &mut dx, out, inp, len);
        dx
    }
}

fn check_rows<T: Real>(x: &Tensor<T>, want: usize, layer: &str) -> Result<(usize, usize)> {
    let (r, c) = x.dims2()?;
    if r != want {
        return Err(Error::shape(format!("{layer} expects {want} input channels, got {r}")));
    }
    Ok((r, c))
}

/// Fully connected layer applied independently to every frame.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub(crate) affine: Affine<T>,
    cache: Option<AffineCache<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new<R: Rng + ?Sized>(inp: usize, out: usize, act: Activation, rng: &mut R) -> Result<Self> {
        if inp == 0 || out == 0 {
            return Err(Error::invalid("dense layer sizes must be positive"));
        }
        Ok(Self {
            affine: Affine::new(inp, out, act, rng),
            cache: None,
        })
    }

    /// Dense layer with explicit weights `[out, inp]` and bias `[out]`.
    pub fn from_parts(weight: Vec<Vec<T>>, bias: Vec<T>, act: Activation) -> Result<Self> {
        let out = weight.len();
        let inp = weight.first().map_or(0, Vec::len);
        if out == 0 || inp == 0 || bias.len() != out || weight.iter().any(|r| r.len() != inp) {
            return Err(Error::shape("inconsistent dense parameters"));
        }
        Ok(Self {
            affine: Affine {
                weight: Tensor::param(vec![out, inp], weight.concat())?,
                bias: Tensor::param(vec![out], bias)?,
                act,
            },
            cache: None,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.affine.out()
    }

    pub(crate) fn run(&self, x: &Tensor<T>) -> Result<(Tensor<T>, AffineCache<T>)> {
        let (_, len) = check_rows(x, self.affine.inp(), "dense")?;
        let (y, cache) = self.affine.forward(x.values(), len);
        Ok((Tensor::new(vec![self.affine.out(), len], y)?, cache))
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, cache) = self.run(x)?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| Error::shape("dense backward before forward"))?;
        let dx = self.affine.backward(&cache, dy.values());
        let len = cache.len;
        self.cache = Some(cache);
        Tensor::new(vec![self.affine.inp(), len], dx)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.affine.weight, &self.affine.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.affine.weight, &mut self.affine.bias]
    }
}

/// Time-delay layer: splices frames at fixed offsets (clamped at the edges)
/// and applies one shared affine map per frame.
#[derive(Debug, Clone)]
pub struct Tdnn<T> {
    offsets: Vec<isize>,
    in_dim: usize,
    pub(crate) affine: Affine<T>,
    cache: Option<AffineCache<T>>,
}

/// Splices `x[d, clamp(t + off)]` into row `k * D + d` of the output.
pub fn splice<T: Real>(x: &[T], dim: usize, len: usize, offsets: &[isize]) -> Vec<T> {
    let mut out = vec![T::zero(); offsets.len() * dim * len];
    for (k, &off) in offsets.iter().enumerate() {
        for d in 0..dim {
            let src = &x[d * len..(d + 1) * len];
            let dst = &mut out[(k * dim + d) * len..(k * dim + d + 1) * len];
            for (t, v) in dst.iter_mut().enumerate() {
                let s = (t as isize + off).clamp(0, len as isize - 1) as usize;
                *v = src[s];
            }
        }
    }
    out
}

impl<T: Real> Tdnn<T> {
    pub fn new<R: Rng + ?Sized>(inp: usize, out: usize, offsets: &[isize], act: Activation, rng: &mut R) -> Result<Self> {
        validate_offsets(offsets)?;
        if inp == 0 || out == 0 {
            return Err(Error::invalid("tdnn sizes must be positive"));
        }
        Ok(Self {
            offsets: offsets.to_vec(),
            in_dim: inp,
            affine: Affine::new(inp * offsets.len(), out, act, rng),
            cache: None,
        })
    }

    /// Builds a TDNN layer around existing dense parameters.
    pub fn from_dense(dense: &Dense<T>, in_dim: usize, offsets: &[isize]) -> Result<Self> {
        validate_offsets(offsets)?;
        if dense.affine.inp() != in_dim * offsets.len() {
            return Err(Error::shape("dense width does not match the spliced width"));
        }
        Ok(Self {
            offsets: offsets.to_vec(),
            in_dim,
            affine: dense.affine.clone(),
            cache: None,
        })
    }

    pub fn offsets(&self) -> &[isize] {
        &self.offsets
    }

    pub fn out_dim(&self) -> usize {
        self.affine.out()
    }

    pub(crate) fn run(&self, x: &Tensor<T>) -> Result<(Tensor<T>, AffineCache<T>)> {
        let (_, len) = check_rows(x, self.in_dim, "tdnn")?;
        if len == 0 {
            return Err(Error::shape("tdnn needs at least one frame"));
        }
        let spliced = splice(x.values(), self.in_dim, len, &self.offsets);
        let (y, cache) = self.affine.forward(&spliced, len);
        Ok((Tensor::new(vec![self.affine.out(), len], y)?, cache))
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, cache) = self.run(x)?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| Error::shape("tdnn backward before forward"))?;
        let dspliced = self.affine.backward(&cache, dy.values());
        let (dim, len) = (self.in_dim, cache.len);
        self.cache = Some(cache);
        let mut dx = vec![T::zero(); dim * len];
        for (k, &off) in self.offsets.iter().enumerate() {
            for d in 0..dim {
                let src = &dspliced[(k * dim + d) * len..(k * dim + d + 1) * len];
                let dst = &mut dx[d * len..(d + 1) * len];
                for (t, &g) in src.iter().enumerate() {
                    let s = (t as isize + off).clamp(0, len as isize - 1) as usize;
                    dst[s] += g;
                }
            }
        }
        Tensor::new(vec![dim, len], dx)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.affine.weight, &self.affine.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.affine.weight, &mut self.affine.bias]
    }
}

pub(crate) fn validate_offsets(offsets: &[isize]) -> Result<()> {
    if offsets.is_empty() {
        return Err(Error::invalid("context offsets must not be empty"));
    }
    if !offsets.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid("context offsets must be strictly increasing"));
    }
    if !offsets.contains(&0) {
        return Err(Error::invalid("context offsets must include 0"));
    }
    Ok(())
}

/// Same-length 1-D convolution (cross-correlation) over `[channels, time]`.
///
/// Weights are `[filters, channels, kernel]`. Zero padding puts
/// `(kernel - 1) / 2` samples before and `kernel / 2` after, so even kernels
/// are also length-preserving.
#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    pub(crate) weight: Tensor<T>,
    pub(crate) bias: Tensor<T>,
    act: Activation,
    cache: Option<AffineCache<T>>,
}

impl<T: Real> Conv1d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        filters: usize,
        kernel: usize,
        act: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if in_channels == 0 || filters == 0 || kernel == 0 {
            return Err(Error::invalid("conv1d sizes must be positive"));
        }
        let fan_in = in_channels * kernel;
        Ok(Self {
            weight: Tensor::param(
                vec![filters, in_channels, kernel],
                uniform_init(rng, filters * fan_in, fan_in),
            )?,
            bias: Tensor::param(vec![filters], vec![T::zero(); filters])?,
            act,
            cache: None,
        })
    }

    /// Convolution with explicit `[filters][channels][kernel]` weights.
    pub fn from_parts(weight: Vec<Vec<Vec<T>>>, bias: Vec<T>, act: Activation) -> Result<Self> {
        let f = weight.len();
        let c = weight.first().map_or(0, Vec::len);
        let k = weight.first().and_then(|w| w.first()).map_or(0, Vec::len);
        if f == 0 || c == 0 || k == 0 || bias.len() != f || weight.iter().flatten().any(|r| r.len() != k) {
            return Err(Error::shape("inconsistent conv1d parameters"));
        }
        if weight.iter().any(|w| w.len() != c) {
            return Err(Error::shape("inconsistent conv1d parameters"));
        }
        let flat: Vec<T> = weight.into_iter().flatten().flatten().collect();
        Ok(Self {
            weight: Tensor::param(vec![f, c, k], flat)?,
            bias: Tensor::param(vec![f], bias)?,
            act,
            cache: None,
        })
    }

    pub fn filters(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    fn lead(&self) -> isize {
        ((self.kernel() - 1) / 2) as isize
    }

    /// Valid output range `[lo, hi)` for tap `j` so that `t + j - lead` stays inside `[0, len)`.
    #[inline]
    fn tap_range(shift: isize, len: usize) -> (usize, usize) {
        let lo = (-shift).max(0) as usize;
        let hi = (len as isize - shift).clamp(0, len as isize) as usize;
        (lo.min(hi), hi)
    }

    pub(crate) fn run(&self, x: &Tensor<T>) -> Result<(Tensor<T>, AffineCache<T>)> {
        let (cin, len) = check_rows(x, self.in_channels(), "conv1d")?;
        let (f, k, lead) = (self.filters(), self.kernel(), self.lead());
        let w = self.weight.values();
        let b = self.bias.values();
        let xv = x.values();
        let mut pre = vec![T::zero(); f * len];
        pre.par_chunks_mut(len.max(1)).enumerate().for_each(|(o, yrow)| {
            yrow.iter_mut().for_each(|v| *v = b[o]);
            for c in 0..cin {
                let xrow = &xv[c * len..(c + 1) * len];
                for j in 0..k {
                    let a = w[(o * cin + c) * k + j];
                    let shift = j as isize - lead;
                    let (lo, hi) = Self::tap_range(shift, len);
                    if lo < hi {
                        let s = (lo as isize + shift) as usize;
                        axpy(a, &xrow[s..s + (hi - lo)], &mut yrow[lo..hi]);
                    }
                }
            }
        });
        let y = pre.iter().map(|&z| self.act.apply(z)).collect();
        Ok((
            Tensor::new(vec![f, len], y)?,
            AffineCache {
                input: xv.to_vec(),
                pre,
                len,
            },
        ))
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, cache) = self.run(x)?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| Error::shape("conv1d backward before forward"))?;
        let (f, cin, k, lead, len) = (self.filters(), self.in_channels(), self.kernel(), self.lead(), cache.len);
        let act = self.act;
        let dz: Vec<T> = dy
            .values()
            .iter()
            .zip(&cache.pre)
            .map(|(&g, &z)| g * act.derivative(z))
            .collect();
        let xv = &cache.input;

        let gw = self.weight.grad_mut();
        gw.par_chunks_mut(cin * k).enumerate().for_each(|(o, gwo)| {
            let drow = &dz[o * len..(o + 1) * len];
            for c in 0..cin {
                let xrow = &xv[c * len..(c + 1) * len];
                for j in 0..k {
                    let shift = j as isize - lead;
                    let (lo, hi) = Self::tap_range(shift, len);
                    if lo < hi {
                        let s = (lo as isize + shift) as usize;
                        gwo[c * k + j] += dot(&drow[lo..hi], &xrow[s..s + (hi - lo)]);
                    }
                }
            }
        });
        let gb = self.bias.grad_mut();
        for o in 0..f {
            gb[o] += dz[o * len..(o + 1) * len].iter().copied().sum();
        }

        let w = self.weight.values();
        let mut dx = vec![T::zero(); cin * len];
        dx.par_chunks_mut(len.max(1)).enumerate().for_each(|(c, dxrow)| {
            for o in 0..f {
                let drow = &dz[o * len..(o + 1) * len];
                for j in 0..k {
                    let a = w[(o * cin + c) * k + j];
                    let shift = j as isize - lead;
                    let (lo, hi) = Self::tap_range(shift, len);
                    if lo < hi {
                        let s = (lo as isize + shift) as usize;
                        axpy(a, &drow[lo..hi], &mut dxrow[s..s + (hi - lo)]);
                    }
                }
            }
        });
        self.cache = Some(cache);
        Tensor::new(vec![cin, len], dx)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
