use crate::error::{shape_err, Result, TensorError};
use crate::graph::{GradSink, Graph, Op, Var};
use crate::kernels::{gemm, Window};
use crate::real::Real;

/// Stride, symmetric zero padding and dilation of a 1-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv1dAttrs {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Default for Conv1dAttrs {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
            dilation: 1,
        }
    }
}

impl Conv1dAttrs {
    pub fn new(stride: usize, padding: usize) -> Self {
        Self {
            stride,
            padding,
            dilation: 1,
        }
    }

    pub fn dilated(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        if self.stride == 0 || self.dilation == 0 {
            return Err(TensorError::Attrs {
                op,
                detail: format!("stride and dilation must be positive, got {self:?}"),
            });
        }
        Ok(())
    }

    /// `floor((T + 2·pad − dilation·(kernel − 1) − 1) / stride) + 1`, or `None`
    /// when the kernel does not fit.
    pub fn output_len(&self, input_len: usize, kernel: usize) -> Option<usize> {
        let span = self.dilation * (kernel - 1) + 1;
        let padded = input_len + 2 * self.padding;
        (padded >= span).then(|| (padded - span) / self.stride + 1)
    }

    pub fn transposed_output_len(&self, input_len: usize, kernel: usize) -> Option<usize> {
        let full = (input_len - 1) * self.stride + self.dilation * (kernel - 1) + 1;
        (full > 2 * self.padding).then(|| full - 2 * self.padding)
    }
}

fn check_bias<T: Real>(g: &Graph<T>, op: &'static str, bias: Option<Var>, channels: usize) -> Result<()> {
    if let Some(b) = bias {
        if g.shape(b) != [channels] {
            return shape_err(op, format!("bias shape {:?} must be [{channels}]", g.shape(b)));
        }
    }
    Ok(())
}

impl<T: Real> Graph<T> {
    /// `x: [B, Cin, T]`, `w: [Cout, Cin, K]`, `bias: [Cout]` → `[B, Cout, T_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Option<Var>, attrs: Conv1dAttrs) -> Result<Var> {
        attrs.validate("conv1d")?;
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 3 || sx[1] != sw[1] {
            return shape_err(
                "conv1d",
                format!("input {sx:?} and weight {sw:?} must be [B, Cin, T] and [Cout, Cin, K]"),
            );
        }
        let (batch, cin, t_in) = (sx[0], sx[1], sx[2]);
        let (cout, k) = (sw[0], sw[2]);
        check_bias(self, "conv1d", bias, cout)?;
        let Some(t_out) = attrs.output_len(t_in, k) else {
            return shape_err(
                "conv1d",
                format!("kernel {k} (dilation {}) longer than padded input {t_in}+2·{}", attrs.dilation, attrs.padding),
            );
        };
        let win = Window {
            channels: cin,
            taps: k,
            stride: attrs.stride,
            dilation: attrs.dilation,
            padding: attrs.padding,
            long_len: t_in,
            short_len: t_out,
        };
        let mut out = vec![T::zero(); batch * cout * t_out];
        let mut cols = vec![T::zero(); cin * k * t_out];
        let (vx, vw) = (self.value(x), self.value(w));
        let vb = bias.map(|b| self.value(b));
        for bi in 0..batch {
            win.gather(&vx[bi * cin * t_in..(bi + 1) * cin * t_in], &mut cols);
            let ob = &mut out[bi * cout * t_out..(bi + 1) * cout * t_out];
            if let Some(vb) = vb {
                for (row, &b) in ob.chunks_exact_mut(t_out).zip(vb) {
                    row.iter_mut().for_each(|v| *v = b);
                }
            }
            gemm(false, false, cout, t_out, cin * k, vw, &cols, ob);
        }
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        let op = Op::Conv1d {
            x,
            w,
            bias,
            batch,
            win,
            cout,
        };
        Ok(self.push(vec![batch, cout, t_out], out, op, &inputs))
    }

    /// `x: [B, Cin, T]`, `w: [Cin, Cout, K]`, `bias: [Cout]` →
    /// `[B, Cout, (T − 1)·stride − 2·pad + dilation·(K − 1) + 1]`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, bias: Option<Var>, attrs: Conv1dAttrs) -> Result<Var> {
        attrs.validate("conv_transpose1d")?;
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 3 || sx[1] != sw[0] {
            return shape_err(
                "conv_transpose1d",
                format!("input {sx:?} and weight {sw:?} must be [B, Cin, T] and [Cin, Cout, K]"),
            );
        }
        let (batch, cin, t_in) = (sx[0], sx[1], sx[2]);
        let (cout, k) = (sw[1], sw[2]);
        check_bias(self, "conv_transpose1d", bias, cout)?;
        let Some(t_out) = attrs.transposed_output_len(t_in, k) else {
            return shape_err("conv_transpose1d", format!("padding {} consumes the whole output", attrs.padding));
        };
        let win = Window {
            channels: cout,
            taps: k,
            stride: attrs.stride,
            dilation: attrs.dilation,
            padding: attrs.padding,
            long_len: t_out,
            short_len: t_in,
        };
        let mut out = vec![T::zero(); batch * cout * t_out];
        let mut cols = vec![T::zero(); cout * k * t_in];
        let (vx, vw) = (self.value(x), self.value(w));
        let vb = bias.map(|b| self.value(b));
        for bi in 0..batch {
            cols.iter_mut().for_each(|c| *c = T::zero());
            gemm(true, false, cout * k, t_in, cin, vw, &vx[bi * cin * t_in..(bi + 1) * cin * t_in], &mut cols);
            let ob = &mut out[bi * cout * t_out..(bi + 1) * cout * t_out];
            if let Some(vb) = vb {
                for (row, &b) in ob.chunks_exact_mut(t_out).zip(vb) {
                    row.iter_mut().for_each(|v| *v = b);
                }
            }
            win.scatter_add(&cols, ob);
        }
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        let op = Op::ConvTranspose1d {
            x,
            w,
            bias,
            batch,
            win,
            cin,
        };
        Ok(self.push(vec![batch, cout, t_out], out, op, &inputs))
    }
}

fn bias_grad<T: Real>(sink: &mut GradSink<'_, T>, bias: Option<Var>, g: &[T], row_len: usize) {
    if let Some(b) = bias {
        if let Some(db) = sink.slot(b) {
            let c = db.len();
            for (r, row) in g.chunks_exact(row_len).enumerate() {
                db[r % c] = db[r % c] + row.iter().copied().sum::<T>();
            }
        }
    }
}

pub(crate) fn backward<T: Real>(op: &Op<T>, g: &[T], sink: &mut GradSink<'_, T>) {
    match *op {
        Op::Conv1d {
            x,
            w,
            bias,
            batch,
            win,
            cout,
        } => {
            let (cin, k, t_in, t_out) = (win.channels, win.taps, win.long_len, win.short_len);
            let (vx, vw) = (sink.value(x), sink.value(w));
            bias_grad(sink, bias, g, t_out);
            let mut cols = vec![T::zero(); cin * k * t_out];
            if sink.needs(w) {
                for bi in 0..batch {
                    win.gather(&vx[bi * cin * t_in..(bi + 1) * cin * t_in], &mut cols);
                    let gb = &g[bi * cout * t_out..(bi + 1) * cout * t_out];
                    let dw = sink.slot(w).unwrap();
                    gemm(false, true, cout, cin * k, t_out, gb, &cols, dw);
                }
            }
            if let Some(dx) = sink.slot(x) {
                for bi in 0..batch {
                    cols.iter_mut().for_each(|c| *c = T::zero());
                    let gb = &g[bi * cout * t_out..(bi + 1) * cout * t_out];
                    gemm(true, false, cin * k, t_out, cout, vw, gb, &mut cols);
                    win.scatter_add(&cols, &mut dx[bi * cin * t_in..(bi + 1) * cin * t_in]);
                }
            }
        }
        Op::ConvTranspose1d {
            x,
            w,
            bias,
            batch,
            win,
            cin,
        } => {
            let (cout, k, t_out, t_in) = (win.channels, win.taps, win.long_len, win.short_len);
            let (vx, vw) = (sink.value(x), sink.value(w));
            bias_grad(sink, bias, g, t_out);
            let mut dcols = vec![T::zero(); cout * k * t_in];
            for bi in 0..batch {
                win.gather(&g[bi * cout * t_out..(bi + 1) * cout * t_out], &mut dcols);
                let xb = &vx[bi * cin * t_in..(bi + 1) * cin * t_in];
                if let Some(dw) = sink.slot(w) {
                    gemm(false, true, cin, cout * k, t_in, xb, &dcols, dw);
                }
                if let Some(dx) = sink.slot(x) {
                    gemm(false, false, cin, t_in, cout * k, vw, &dcols, &mut dx[bi * cin * t_in..(bi + 1) * cin * t_in]);
                }
            }
        }
        _ => unreachable!("not a conv op"),
    }
}
