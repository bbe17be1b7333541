use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const PAPER_GRID_R_MS: [usize; 3] = [2, 4, 8];
pub const PAPER_GRID_K: [usize; 3] = [512, 1024, 2048];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftResolution {
    pub fft_size: usize,
    pub hop: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecConfig {
    /// Per-block downsampling factors; their product is the hop in samples.
    pub stride_factors: Vec<usize>,
    pub base_channels: usize,
    /// Dilated residual units in each encoder and decoder block.
    pub residual_units: usize,
    pub latent_dim: usize,
    pub codebook_size: usize,
    pub sample_rate: u32,
    /// Commitment weight β.
    pub commitment: f64,
    /// EMA decay γ.
    pub ema_decay: f64,
    pub ema_eps: f64,
    /// Codes unused for this many consecutive steps are reseeded.
    pub dead_code_steps: u32,
    pub lambda_time: f64,
    pub lambda_freq: f64,
    pub stft_resolutions: Vec<StftResolution>,
    pub log_eps: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            stride_factors: vec![4, 4, 4, 2],
            base_channels: 32,
            residual_units: 2,
            latent_dim: 64,
            codebook_size: 512,
            sample_rate: crate::dsp::SAMPLE_RATE,
            commitment: 0.25,
            ema_decay: 0.99,
            ema_eps: 1e-5,
            dead_code_steps: 200,
            lambda_time: 1.0,
            lambda_freq: 1.0,
            stft_resolutions: vec![
                StftResolution { fft_size: 256, hop: 64 },
                StftResolution { fft_size: 512, hop: 128 },
                StftResolution { fft_size: 1024, hop: 256 },
            ],
            log_eps: 1e-5,
        }
    }
}

impl CodecConfig {
    /// Stride plan for a grid resolution of 2, 4 or 8 ms at 16 kHz.
    pub fn strides_for_ms(r_ms: usize) -> Result<Vec<usize>> {
        match r_ms {
            2 => Ok(vec![2, 2, 2, 4]),
            4 => Ok(vec![2, 2, 4, 4]),
            8 => Ok(vec![4, 4, 4, 2]),
            _ => invalid(format!("no stride plan for R = {r_ms} ms (grid is 2, 4, 8)")),
        }
    }

    pub fn for_grid(r_ms: usize, k: usize) -> Result<Self> {
        Ok(Self {
            stride_factors: Self::strides_for_ms(r_ms)?,
            codebook_size: k,
            ..Self::default()
        })
    }

    pub fn hop(&self) -> usize {
        self.stride_factors.iter().product()
    }

    pub fn r_ms(&self) -> f64 {
        self.hop() as f64 * 1000.0 / self.sample_rate as f64
    }

    pub fn on_paper_grid(&self) -> bool {
        let r = self.r_ms();
        PAPER_GRID_R_MS.iter().any(|&g| g as f64 == r) && PAPER_GRID_K.contains(&self.codebook_size)
    }

    /// Channel count entering encoder block `b`.
    pub fn channels(&self, b: usize) -> usize {
        self.base_channels << b
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.stride_factors.is_empty() {
            errs.push("stride_factors must be nonempty".to_string());
        }
        if self.stride_factors.iter().any(|&s| s == 0 || s % 2 != 0) {
            errs.push(format!("stride_factors {:?} must all be positive and even", self.stride_factors));
        }
        if self.base_channels < 2 || self.base_channels % 2 != 0 {
            errs.push("base_channels must be an even number ≥ 2".to_string());
        }
        if self.latent_dim == 0 {
            errs.push("latent_dim must be positive".to_string());
        }
        if self.codebook_size == 0 {
            errs.push("codebook_size must be positive".to_string());
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            errs.push("ema_decay must lie in [0, 1)".to_string());
        }
        if self.ema_eps <= 0.0 || self.log_eps <= 0.0 {
            errs.push("ema_eps and log_eps must be positive".to_string());
        }
        if self.commitment < 0.0 || self.lambda_time < 0.0 || self.lambda_freq < 0.0 {
            errs.push("loss weights must be nonnegative".to_string());
        }
        for r in &self.stft_resolutions {
            if !r.fft_size.is_power_of_two() || r.hop == 0 || r.hop > r.fft_size {
                errs.push(format!("invalid STFT resolution {r:?}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            invalid(format!("codec config: {}", errs.join("; ")))
        }
    }

    /// Narrow single-unit network used for each cell of the resolution ×
    /// codebook grid, where nine codecs must train on one core. The STFT
    /// terms are off: within 500 steps they pull the output toward silence
    /// on tonal clips, and waveform SNR is what the grid measures.
    pub fn ablation() -> Self {
        Self {
            base_channels: 8,
            residual_units: 1,
            lambda_freq: 0.0,
            ..Self::default()
        }
    }

    /// Shortest training crop the loss accepts.
    pub fn min_crop(&self) -> usize {
        let fft = self.stft_resolutions.iter().map(|r| r.fft_size).max().unwrap_or(1);
        fft.div_ceil(self.hop()) * self.hop()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Random crop length in samples; rounded down to a multiple of the hop.
    pub crop_samples: usize,
    pub lr: f64,
    /// Window of the moving average used for "smoothed" losses.
    pub smoothing_window: usize,
}

impl Default for CodecTrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch_size: 4,
            crop_samples: 4096,
            lr: 3e-4,
            smoothing_window: 25,
        }
    }
}

impl CodecTrainConfig {
    /// Budget for each grid cell.
    pub fn ablation() -> Self {
        Self {
            lr: 1e-3,
            ..Self::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_hops() {
        for (ms, hop) in [(2, 32), (4, 64), (8, 128)] {
            for k in PAPER_GRID_K {
                let c = CodecConfig::for_grid(ms, k).unwrap();
                assert_eq!(c.hop(), hop);
                assert_eq!(c.r_ms(), ms as f64);
                assert!(c.on_paper_grid());
                c.validate().unwrap();
            }
        }
        let desk = CodecConfig::default();
        assert_eq!((desk.hop(), desk.r_ms()), (128, 8.0));
        assert!(CodecConfig::for_grid(3, 512).is_err());
        assert!(!CodecConfig { codebook_size: 3000, ..desk }.on_paper_grid());
    }
}
