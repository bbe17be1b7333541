//! Objective metrics, the resolution × codebook ablation, and listening-clip
//! assembly.

mod ablation;

use std::f64::consts::PI;

pub use ablation::{run_ablation, trend_violations, AblationCell, AblationConfig, AblationReport};
pub use crate::lm::bits_per_token;

use crate::codec::Codec;
use crate::dsp::Waveform;
use crate::error::{invalid, Error, Result};

/// Reported in place of +∞ when the residual vanishes.
pub const SNR_CAP_DB: f64 = 99.0;

/// `10·log10(Σx² / Σ(x − x̂)²)` over the common prefix, capped at [`SNR_CAP_DB`].
pub fn reconstruction_snr(x: &Waveform, x_hat: &Waveform) -> Result<f64> {
    let n = x.len().min(x_hat.len());
    let (a, b) = (&x.samples()[..n], &x_hat.samples()[..n]);
    let signal: f64 = a.iter().map(|&v| (v as f64) * (v as f64)).sum();
    if signal == 0.0 {
        return Err(Error::SilentReference);
    }
    let noise: f64 = a.iter().zip(b).map(|(&u, &v)| (u as f64 - v as f64).powi(2)).sum();
    if noise == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (signal / noise).log10()).min(SNR_CAP_DB))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnrStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub per_clip: Vec<f64>,
}

impl SnrStats {
    pub fn from_values(per_clip: Vec<f64>) -> Result<Self> {
        if per_clip.is_empty() {
            return invalid("snr: no clips");
        }
        let n = per_clip.len() as f64;
        let mean = per_clip.iter().sum::<f64>() / n;
        let std = (per_clip.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Ok(Self { mean, std, per_clip })
    }
}

/// Reconstruction SNR of `codec` on every clip.
pub fn codec_snr(codec: &Codec, clips: &[Waveform]) -> Result<SnrStats> {
    let per_clip = clips
        .iter()
        .map(|w| reconstruction_snr(w, &codec.reconstruct(w)?))
        .collect::<Result<Vec<_>>>()?;
    SnrStats::from_values(per_clip)
}

pub const BEEP_HZ: f64 = 1000.0;
pub const BEEP_SECONDS: f64 = 0.3;
pub const BEEP_AMPLITUDE: f64 = 0.5;
pub const BEEP_FADE_SECONDS: f64 = 0.01;

/// The separator tone: a sine with linear fade-in and fade-out.
pub fn beep(sample_rate: u32) -> Result<Waveform> {
    let sr = sample_rate as f64;
    let n = (BEEP_SECONDS * sr).round() as usize;
    let fade = (BEEP_FADE_SECONDS * sr).round() as usize;
    let samples = (0..n)
        .map(|i| {
            let ramp = if fade == 0 {
                1.0
            } else {
                (i.min(n - 1 - i) as f64 / fade as f64).min(1.0)
            };
            (BEEP_AMPLITUDE * ramp * (2.0 * PI * BEEP_HZ * i as f64 / sr).sin()) as f32
        })
        .collect();
    Waveform::new(samples, sample_rate)
}

/// `prompt ++ beep ++ continuation`, the clip a listener rates.
pub fn assemble_cmos_clip(prompt: &Waveform, continuation: &Waveform) -> Result<Waveform> {
    if prompt.sample_rate() != continuation.sample_rate() {
        return invalid(format!(
            "cmos clip: prompt is {} Hz but continuation is {} Hz",
            prompt.sample_rate(),
            continuation.sample_rate()
        ));
    }
    Waveform::concat(&[prompt, &beep(prompt.sample_rate())?, continuation])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(v: Vec<f32>) -> Waveform {
        Waveform::new(v, 16000).unwrap()
    }

    #[test]
    fn snr_fixed_points() {
        let x = wave((0..64).map(|i| ((i as f32) * 0.3).sin() * 0.5).collect());
        assert_eq!(reconstruction_snr(&x, &x).unwrap(), SNR_CAP_DB);
        let zero = wave(vec![0.0; 64]);
        assert_eq!(reconstruction_snr(&x, &zero).unwrap(), 0.0);
        assert!(matches!(reconstruction_snr(&zero, &x), Err(Error::SilentReference)));
        let longer = wave([x.samples(), &[0.9; 10]].concat());
        assert_eq!(reconstruction_snr(&x, &longer).unwrap(), SNR_CAP_DB);
    }

    #[test]
    fn beep_has_fades_and_length() {
        let b = beep(16000).unwrap();
        assert_eq!(b.len(), 4800);
        assert_eq!(b.samples()[0], 0.0);
        assert!(b.samples()[4799].abs() < 1e-6);
        assert!((b.peak() - 0.5).abs() < 1e-3);
        let p = wave(vec![0.1; 80000]);
        let c = wave(vec![0.2; 80000]);
        assert_eq!(assemble_cmos_clip(&p, &c).unwrap().len(), 164800);
        let other = Waveform::new(vec![0.1; 10], 8000).unwrap();
        assert!(assemble_cmos_clip(&p, &other).is_err());
    }
}
