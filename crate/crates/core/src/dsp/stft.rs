use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use soundlm_tensor::{StftAttrs, WindowKind};

use super::Waveform;
use crate::error::Result;

/// Framed STFT magnitudes, `frames × (fft_size/2 + 1)` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFrameSet {
    pub frames: Vec<f32>,
    pub num_frames: usize,
    pub num_bins: usize,
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl SpectralFrameSet {
    pub fn frame(&self, i: usize) -> &[f32] {
        &self.frames[i * self.num_bins..(i + 1) * self.num_bins]
    }
}

/// Magnitude of the windowed DFT of every frame, without centering.
pub fn stft_magnitude(w: &Waveform, fft_size: usize, hop: usize, window: WindowKind) -> Result<SpectralFrameSet> {
    let attrs = StftAttrs {
        window,
        ..StftAttrs::new(fft_size, hop)
    };
    let num_frames = attrs.validate(w.len())?;
    let num_bins = fft_size / 2 + 1;
    let win: Vec<f64> = window.coefficients(fft_size);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut frames = Vec::with_capacity(num_frames * num_bins);
    let x = w.samples();
    for f in 0..num_frames {
        let seg = &x[f * hop..f * hop + fft_size];
        for ((b, &s), &c) in buf.iter_mut().zip(seg).zip(&win) {
            *b = Complex::new(s as f64 * c, 0.0);
        }
        fft.process(&mut buf);
        frames.extend(buf[..num_bins].iter().map(|c| c.norm() as f32));
    }
    Ok(SpectralFrameSet {
        frames,
        num_frames,
        num_bins,
        fft_size,
        hop,
        window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn frame_count_follows_formula() {
        let w = Waveform::new(vec![0.0; 16000], 16000).unwrap();
        let s = stft_magnitude(&w, 512, 128, WindowKind::Hann).unwrap();
        assert_eq!(s.num_frames, 122);
        assert!(s.frames.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn bin_centred_sine_concentrates_energy() {
        let (n, k) = (256usize, 10usize);
        let x: Vec<f32> = (0..4 * n)
            .map(|i| (2.0 * PI * k as f64 * i as f64 / n as f64).sin() as f32 * 0.5)
            .collect();
        let w = Waveform::new(x.clone(), 16000).unwrap();
        let s = stft_magnitude(&w, n, 64, WindowKind::Rectangular).unwrap();
        for f in 0..s.num_frames {
            let row = s.frame(f);
            let total: f64 = row.iter().map(|&m| (m as f64).powi(2)).sum();
            assert!((row[k] as f64).powi(2) >= 0.99 * total);
            // Direct DFT sum at bin k.
            let seg = &x[f * 64..f * 64 + n];
            let (re, im) = seg.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &v)| {
                let a = -2.0 * PI * (k * t) as f64 / n as f64;
                (re + v as f64 * a.cos(), im + v as f64 * a.sin())
            });
            assert!(((re * re + im * im).sqrt() - row[k] as f64).abs() < 1e-3);
        }
    }

    #[test]
    fn magnitudes_scale_linearly() {
        let x: Vec<f32> = (0..2048).map(|i| ((i * 37 % 101) as f32 / 101.0 - 0.5) * 0.4).collect();
        let a = stft_magnitude(&Waveform::new(x.clone(), 16000).unwrap(), 256, 64, WindowKind::Hann).unwrap();
        let x2: Vec<f32> = x.iter().map(|v| v * 2.0).collect();
        let b = stft_magnitude(&Waveform::new(x2, 16000).unwrap(), 256, 64, WindowKind::Hann).unwrap();
        for (p, q) in a.frames.iter().zip(&b.frames) {
            assert!((2.0 * p - q).abs() <= 1e-5 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn short_signal_is_rejected() {
        let w = Waveform::new(vec![0.0; 100], 16000).unwrap();
        assert!(stft_magnitude(&w, 128, 32, WindowKind::Hann).is_err());
        assert!(stft_magnitude(&Waveform::new(vec![0.0; 512], 16000).unwrap(), 100, 10, WindowKind::Hann).is_err());
    }
}
