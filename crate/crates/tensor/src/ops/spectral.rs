use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{shape_err, Result, TensorError};
use crate::graph::{GradSink, Graph, Op, Var};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WindowKind {
    #[default]
    Hann,
    Rectangular,
}

impl WindowKind {
    /// Periodic window of length `n`.
    pub fn coefficients<T: Real>(self, n: usize) -> Vec<T> {
        match self {
            WindowKind::Rectangular => vec![T::one(); n],
            WindowKind::Hann => (0..n)
                .map(|i| {
                    let phase = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    T::of(0.5 - 0.5 * phase.cos())
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StftAttrs {
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowKind,
    /// Added under the square root so the magnitude stays differentiable at 0.
    pub eps: f64,
}

impl StftAttrs {
    pub fn new(fft_size: usize, hop: usize) -> Self {
        Self {
            fft_size,
            hop,
            window: WindowKind::Hann,
            eps: 1e-12,
        }
    }

    pub fn validate(&self, len: usize) -> Result<usize> {
        if !self.fft_size.is_power_of_two() || self.fft_size < 2 {
            return Err(TensorError::Attrs {
                op: "stft_magnitude",
                detail: format!("fft_size {} must be a power of two", self.fft_size),
            });
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(TensorError::Attrs {
                op: "stft_magnitude",
                detail: format!("hop {} must lie in 1..={}", self.hop, self.fft_size),
            });
        }
        if len < self.fft_size {
            return shape_err(
                "stft_magnitude",
                format!("signal of {len} samples is shorter than fft_size {}", self.fft_size),
            );
        }
        Ok((len - self.fft_size) / self.hop + 1)
    }
}

impl<T: Real> Graph<T> {
    /// Framed STFT magnitude without centering: `x: [B, T]` (or `[T]`) →
    /// `[B, frames, fft_size/2 + 1]` with `frames = floor((T − fft)/hop) + 1`.
    pub fn stft_magnitude(&mut self, x: Var, attrs: StftAttrs) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let (batch, len) = match s.as_slice() {
            [t] => (1, *t),
            [b, t] => (*b, *t),
            _ => return shape_err("stft_magnitude", format!("expected [B, T] or [T], got {s:?}")),
        };
        let frames = attrs.validate(len)?;
        let n = attrs.fft_size;
        let bins = n / 2 + 1;
        let window: Vec<T> = attrs.window.coefficients(n);
        let fft = FftPlanner::<T>::new().plan_fft_forward(n);
        let eps = T::of(attrs.eps);
        let vx = self.value(x);
        let mut spectra = Vec::with_capacity(batch * frames * bins);
        let mut out = Vec::with_capacity(batch * frames * bins);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        for b in 0..batch {
            let sig = &vx[b * len..(b + 1) * len];
            for f in 0..frames {
                let frame = &sig[f * attrs.hop..f * attrs.hop + n];
                for i in 0..n {
                    buf[i] = Complex::new(frame[i] * window[i], T::zero());
                }
                fft.process(&mut buf);
                for c in &buf[..bins] {
                    out.push((c.norm_sqr() + eps).sqrt());
                    spectra.push(*c);
                }
            }
        }
        let op = Op::StftMag {
            x,
            batch,
            len,
            frames,
            fft: n,
            hop: attrs.hop,
            window,
            spectra,
        };
        Ok(self.push(vec![batch, frames, bins], out, op, &[x]))
    }
}

pub(crate) fn backward<T: Real>(op: &Op<T>, out: &[T], g: &[T], sink: &mut GradSink<'_, T>) {
    let Op::StftMag {
        x,
        batch,
        len,
        frames,
        fft: n,
        hop,
        window,
        spectra,
    } = op
    else {
        unreachable!("not a spectral op")
    };
    let Some(dx) = sink.slot(*x) else { return };
    let bins = n / 2 + 1;
    let ifft = FftPlanner::<T>::new().plan_fft_inverse(*n);
    let zero = Complex::new(T::zero(), T::zero());
    let mut buf = vec![zero; *n];
    for b in 0..*batch {
        for f in 0..*frames {
            let base = (b * frames + f) * bins;
            buf.iter_mut().for_each(|c| *c = zero);
            for k in 0..bins {
                buf[k] = spectra[base + k] * (g[base + k] / out[base + k]);
            }
            // Re(Σ_k c_k e^{+i2πkn/N}) is the adjoint of the one-sided forward DFT.
            ifft.process(&mut buf);
            let off = b * len + f * hop;
            for i in 0..*n {
                dx[off + i] = dx[off + i] + buf[i].re * window[i];
            }
        }
    }
}
