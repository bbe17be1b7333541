//! Waveforms, WAV I/O, spectral features, and the synthetic corpus.

pub mod manifest;
pub mod mel;
pub mod stft;
pub mod synth;
pub mod wav;

pub use manifest::{DatasetManifest, ManifestEntry, Split};
pub use mel::{log_mel, mel_filterbank, LOG_MEL_EPS};
pub use stft::{stft_magnitude, SpectralFrameSet};
pub use synth::{synth_dataset, synth_waveforms, Recipe, SynthConfig, SynthClip};
pub use wav::{read_wav, read_wav_bytes, write_wav, wav_bytes};

pub use soundlm_tensor::WindowKind;

use crate::error::{invalid, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// Mono time-domain signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    /// Rejects empty or non-finite signals.
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return invalid("waveform must contain at least one sample");
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return invalid(format!("waveform sample {i} is not finite"));
        }
        if sample_rate == 0 {
            return invalid("sample rate must be positive");
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    /// Copy with every sample clamped to `[-1, 1]`.
    pub fn clipped(&self) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s.clamp(-1.0, 1.0)).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Right-pads with zeros to the next multiple of `block`.
    pub fn padded_to_multiple(&self, block: usize) -> Vec<f32> {
        let mut s = self.samples.clone();
        let rem = s.len() % block;
        if rem != 0 {
            s.resize(s.len() + block - rem, 0.0);
        }
        s
    }

    pub fn concat(parts: &[&Waveform]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return invalid("nothing to concatenate");
        };
        if parts.iter().any(|p| p.sample_rate != first.sample_rate) {
            return invalid("sample-rate mismatch");
        }
        let samples = parts.iter().flat_map(|p| p.samples.iter().copied()).collect();
        Self::new(samples, first.sample_rate)
    }
}
