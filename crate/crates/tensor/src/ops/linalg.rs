use crate::error::{shape_err, Result};
use crate::graph::{GradSink, Graph, Op, Var};
use crate::kernels::gemm;
use crate::real::Real;

impl<T: Real> Graph<T> {
    /// `[m, k] × [k, n] → [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return shape_err("matmul", format!("cannot multiply {sa:?} by {sb:?}"));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(false, false, m, n, k, self.value(a), self.value(b), &mut out);
        Ok(self.push(vec![m, n], out, Op::MatMul { a, b, m, k, n }, &[a, b]))
    }

    /// `[B, m, k] × [B, k, n] → [B, m, n]`; with `transpose_b` the right
    /// operand is stored `[B, n, k]`.
    pub fn batch_matmul(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return shape_err("batch_matmul", format!("cannot multiply {sa:?} by {sb:?}"));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if transpose_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if kb != k {
            return shape_err(
                "batch_matmul",
                format!("inner dims differ: {sa:?} by {sb:?} (transpose_b={transpose_b})"),
            );
        }
        let mut out = vec![T::zero(); batch * m * n];
        let (va, vb) = (self.value(a), self.value(b));
        for i in 0..batch {
            gemm(
                false,
                transpose_b,
                m,
                n,
                k,
                &va[i * m * k..(i + 1) * m * k],
                &vb[i * k * n..(i + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let op = Op::BatchMatMul {
            a,
            b,
            batch,
            m,
            k,
            n,
            transpose_b,
        };
        Ok(self.push(vec![batch, m, n], out, op, &[a, b]))
    }
}

pub(crate) fn backward<T: Real>(op: &Op<T>, g: &[T], sink: &mut GradSink<'_, T>) {
    match *op {
        Op::MatMul { a, b, m, k, n } => {
            let (va, vb) = (sink.value(a), sink.value(b));
            if let Some(da) = sink.slot(a) {
                gemm(false, true, m, k, n, g, vb, da);
            }
            if let Some(db) = sink.slot(b) {
                gemm(true, false, k, n, m, va, g, db);
            }
        }
        Op::BatchMatMul {
            a,
            b,
            batch,
            m,
            k,
            n,
            transpose_b,
        } => {
            let (va, vb) = (sink.value(a), sink.value(b));
            if let Some(da) = sink.slot(a) {
                for i in 0..batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let bi = &vb[i * k * n..(i + 1) * k * n];
                    let dai = &mut da[i * m * k..(i + 1) * m * k];
                    // dA = dC · op(B)ᵀ
                    gemm(false, !transpose_b, m, k, n, gi, bi, dai);
                }
            }
            if let Some(db) = sink.slot(b) {
                for i in 0..batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let ai = &va[i * m * k..(i + 1) * m * k];
                    let dbi = &mut db[i * k * n..(i + 1) * k * n];
                    if transpose_b {
                        // dBᵀ[n×k] = dCᵀ · A
                        gemm(true, false, n, k, m, gi, ai, dbi);
                    } else {
                        gemm(true, false, k, n, m, ai, gi, dbi);
                    }
                }
            }
        }
        _ => unreachable!("not a linalg op"),
    }
}
