use super::{stft_magnitude, Waveform, WindowKind};
use crate::error::{invalid, Result};

pub const LOG_MEL_EPS: f64 = 1e-5;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// HTK-style triangular filterbank over `0..sample_rate/2`, `n_mels × (fft/2+1)`.
pub fn mel_filterbank(n_mels: usize, fft_size: usize, sample_rate: u32) -> Result<Vec<Vec<f64>>> {
    if n_mels == 0 {
        return invalid("n_mels must be at least 1");
    }
    let bins = fft_size / 2 + 1;
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut bank = Vec::with_capacity(n_mels);
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row: Vec<f64> = (0..bins)
            .map(|k| {
                let f = k as f64 * sample_rate as f64 / fft_size as f64;
                if f <= lo || f >= hi {
                    0.0
                } else if f <= mid {
                    (f - lo) / (mid - lo)
                } else {
                    (hi - f) / (hi - mid)
                }
            })
            .collect();
        if row.iter().all(|&v| v == 0.0) {
            return invalid(format!(
                "mel filter {m} covers no FFT bin; use fewer mels or a larger fft_size than {fft_size}"
            ));
        }
        bank.push(row);
    }
    Ok(bank)
}

/// `log(ε + mel-filtered power)` per STFT frame (Hann window), `frames × n_mels`.
pub fn log_mel(w: &Waveform, n_mels: usize, fft_size: usize, hop: usize) -> Result<(Vec<f64>, usize)> {
    let spec = stft_magnitude(w, fft_size, hop, WindowKind::Hann)?;
    let bank = mel_filterbank(n_mels, fft_size, w.sample_rate())?;
    let mut out = Vec::with_capacity(spec.num_frames * n_mels);
    for f in 0..spec.num_frames {
        let row = spec.frame(f);
        for filt in &bank {
            let e: f64 = filt.iter().zip(row).map(|(&c, &m)| c * (m as f64) * (m as f64)).sum();
            out.push((LOG_MEL_EPS + e).ln());
        }
    }
    Ok((out, spec.num_frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_signal_gives_log_eps() {
        let w = Waveform::new(vec![0.0; 4000], 16000).unwrap();
        let (m, frames) = log_mel(&w, 40, 512, 160).unwrap();
        assert_eq!(frames, (4000 - 512) / 160 + 1);
        assert!(m.iter().all(|&v| v == LOG_MEL_EPS.ln()));
    }

    #[test]
    fn ten_ms_hop_on_ten_seconds_is_about_a_thousand_frames() {
        let w = Waveform::new(vec![0.01; 160_000], 16000).unwrap();
        let (_, frames) = log_mel(&w, 40, 512, 160).unwrap();
        assert_eq!(frames, 997);
    }

    #[test]
    fn filters_are_positive_and_contiguous() {
        for (mels, fft) in [(40, 512), (20, 128), (80, 1024)] {
            for row in mel_filterbank(mels, fft, 16000).unwrap() {
                assert!(row.iter().sum::<f64>() > 0.0);
                let nz: Vec<usize> = (0..row.len()).filter(|&k| row[k] > 0.0).collect();
                assert_eq!(nz.last().unwrap() - nz[0] + 1, nz.len());
            }
        }
        assert!(mel_filterbank(0, 512, 16000).is_err());
        assert!(mel_filterbank(200, 64, 16000).is_err());
    }

    #[test]
    fn short_trailing_zeros_do_not_change_features() {
        let x: Vec<f32> = (0..512 + 160 * 9).map(|i| ((i as f32) * 0.05).sin() * 0.5).collect();
        let (a, fa) = log_mel(&Waveform::new(x.clone(), 16000).unwrap(), 40, 512, 160).unwrap();
        let mut y = x;
        y.extend(std::iter::repeat_n(0.0, 159));
        let (b, fb) = log_mel(&Waveform::new(y, 16000).unwrap(), 40, 512, 160).unwrap();
        assert_eq!(fa, fb);
        assert_eq!(a, b);
    }
}
