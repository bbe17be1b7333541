//! Dense kernels shared by the graph ops and by forward-only inference code.
//!
//! Every output element is accumulated in a fixed order that depends only on
//! the reduction length, never on how many rows are computed at once. A
//! single-row call therefore returns bit-identical values to the matching row
//! of a larger call, which is what lets cached decoding reproduce full
//! recomputation exactly.

use crate::real::Real;

/// Fixed-order dot product (eight interleaved partial sums, then a fixed fold).
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] = acc[l] + xa[l] * xb[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    let s01 = acc[0] + acc[1];
    let s23 = acc[2] + acc[3];
    let s45 = acc[4] + acc[5];
    let s67 = acc[6] + acc[7];
    ((s01 + s23) + (s45 + s67)) + tail
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// `C[m×n] += op(A) · op(B)` with row-major storage.
///
/// `op(A)` is `m×k`: stored `m×k`, or `k×m` when `trans_a`.
/// `op(B)` is `k×n`: stored `k×n`, or `n×k` when `trans_b`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Real>(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    match (trans_a, trans_b) {
        (false, false) => {
            for (i, crow) in c.chunks_exact_mut(n).enumerate() {
                let arow = &a[i * k..(i + 1) * k];
                for (p, &aip) in arow.iter().enumerate() {
                    axpy(aip, &b[p * n..(p + 1) * n], crow);
                }
            }
        }
        (true, false) => {
            for (i, crow) in c.chunks_exact_mut(n).enumerate() {
                for p in 0..k {
                    axpy(a[p * m + i], &b[p * n..(p + 1) * n], crow);
                }
            }
        }
        (false, true) => {
            for (i, crow) in c.chunks_exact_mut(n).enumerate() {
                let arow = &a[i * k..(i + 1) * k];
                for (j, cij) in crow.iter_mut().enumerate() {
                    *cij = *cij + dot(arow, &b[j * k..(j + 1) * k]);
                }
            }
        }
        (true, true) => {
            let mut bt = vec![T::zero(); k * n];
            for j in 0..n {
                for p in 0..k {
                    bt[p * n + j] = b[j * k + p];
                }
            }
            gemm(true, false, m, n, k, a, &bt, c);
        }
    }
}

/// Sliding-window geometry shared by convolution and its transpose.
///
/// Maps `(channel, tap, position)` on the short axis to `position * stride +
/// tap * dilation - padding` on the long axis.
#[derive(Clone, Copy, Debug)]
pub struct Window {
    pub channels: usize,
    pub taps: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
    pub long_len: usize,
    pub short_len: usize,
}

impl Window {
    #[inline]
    fn source(&self, tap: usize, pos: usize) -> Option<usize> {
        let idx = (pos * self.stride + tap * self.dilation) as isize - self.padding as isize;
        (idx >= 0 && (idx as usize) < self.long_len).then_some(idx as usize)
    }

    /// `cols[(c*taps + tap) * short_len + pos] = long[c * long_len + source]`.
    pub fn gather<T: Real>(&self, long: &[T], cols: &mut [T]) {
        for c in 0..self.channels {
            let src = &long[c * self.long_len..(c + 1) * self.long_len];
            for tap in 0..self.taps {
                let row = (c * self.taps + tap) * self.short_len;
                let dst = &mut cols[row..row + self.short_len];
                for (pos, d) in dst.iter_mut().enumerate() {
                    *d = match self.source(tap, pos) {
                        Some(s) => src[s],
                        None => T::zero(),
                    };
                }
            }
        }
    }

    /// Adjoint of [`Window::gather`]: scatters columns back onto the long axis.
    pub fn scatter_add<T: Real>(&self, cols: &[T], long: &mut [T]) {
        for c in 0..self.channels {
            let dst = &mut long[c * self.long_len..(c + 1) * self.long_len];
            for tap in 0..self.taps {
                let row = (c * self.taps + tap) * self.short_len;
                for (pos, &v) in cols[row..row + self.short_len].iter().enumerate() {
                    if let Some(s) = self.source(tap, pos) {
                        dst[s] = dst[s] + v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, n: usize, k: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; x.len()];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = x[r * cols + c];
            }
        }
        t
    }

    #[test]
    fn gemm_variants_match_naive() {
        let (m, n, k) = (5, 7, 11);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let want = naive(m, n, k, &a, &b);
        let at = transpose(m, k, &a);
        let bt = transpose(k, n, &b);
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let mut c = vec![0.0; m * n];
            let aa = if ta { &at } else { &a };
            let bb = if tb { &bt } else { &b };
            gemm(ta, tb, m, n, k, aa, bb, &mut c);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12, "{ta} {tb}");
            }
        }
    }

    #[test]
    fn single_row_is_bit_identical_to_batched_rows() {
        let (m, n, k) = (9, 13, 37);
        let a: Vec<f32> = (0..m * k).map(|i| ((i * 7919) % 101) as f32 / 37.0 - 1.3).collect();
        let b: Vec<f32> = (0..k * n).map(|i| ((i * 104729) % 89) as f32 / 23.0 - 1.9).collect();
        let bt: Vec<f32> = {
            let mut t = vec![0.0; k * n];
            for p in 0..k {
                for j in 0..n {
                    t[j * k + p] = b[p * n + j];
                }
            }
            t
        };
        let mut full = vec![0.0; m * n];
        gemm(false, false, m, n, k, &a, &b, &mut full);
        let mut full_t = vec![0.0; m * n];
        gemm(false, true, m, n, k, &a, &bt, &mut full_t);
        for i in 0..m {
            let mut row = vec![0.0; n];
            gemm(false, false, 1, n, k, &a[i * k..(i + 1) * k], &b, &mut row);
            assert_eq!(&row[..], &full[i * n..(i + 1) * n]);
            let mut row_t = vec![0.0; n];
            gemm(false, true, 1, n, k, &a[i * k..(i + 1) * k], &bt, &mut row_t);
            assert_eq!(&row_t[..], &full_t[i * n..(i + 1) * n]);
        }
    }
}
