//! Row-major dense kernels shared by the layers. Matrices are passed as
//! `(slice, rows, cols)` triples.

use crate::scalar::Real;

#[inline]
pub(crate) fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

/// `y[out, len] += w[out, inp] * x[inp, len]`.
pub(crate) fn matmul_acc<T: Real>(w: &[T], x: &[T], y: &mut [T], out: usize, inp: usize, len: usize) {
    for o in 0..out {
        let yrow = &mut y[o * len..(o + 1) * len];
        for i in 0..inp {
            let a = w[o * inp + i];
            if a != T::zero() {
                axpy(a, &x[i * len..(i + 1) * len], yrow);
            }
        }
    }
}

/// `gw[out, inp] += dy[out, len] * x[inp, len]^T`.
pub(crate) fn outer_acc<T: Real>(dy: &[T], x: &[T], gw: &mut [T], out: usize, inp: usize, len: usize) {
    for o in 0..out {
        let drow = &dy[o * len..(o + 1) * len];
        for i in 0..inp {
            gw[o * inp + i] += dot(drow, &x[i * len..(i + 1) * len]);
        }
    }
}

/// `dx[inp, len] += w[out, inp]^T * dy[out, len]`.
pub(crate) fn matmul_t_acc<T: Real>(w: &[T], dy: &[T], dx: &mut [T], out: usize, inp: usize, len: usize) {
    for o in 0..out {
        let drow = &dy[o * len..(o + 1) * len];
        for i in 0..inp {
            let a = w[o * inp + i];
            if a != T::zero() {
                axpy(a, drow, &mut dx[i * len..(i + 1) * len]);
            }
        }
    }
}

pub(crate) fn transpose<T: Real>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}
