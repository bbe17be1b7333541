//! Synthetic corpus with known structure.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{write_wav, DatasetManifest, ManifestEntry, Split, Waveform};
use crate::error::{invalid, Error, Result};
use crate::seed::stage_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    SineMix,
    Chirp,
    AmNoise,
    DecayingHarmonic,
}

impl Recipe {
    pub const ALL: [Recipe; 4] = [Recipe::SineMix, Recipe::Chirp, Recipe::AmNoise, Recipe::DecayingHarmonic];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::SineMix => "sine_mix",
            Recipe::Chirp => "chirp",
            Recipe::AmNoise => "am_noise",
            Recipe::DecayingHarmonic => "decaying_harmonic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Fraction of clips held out for evaluation.
    pub eval_fraction: f64,
    /// Recipes are assigned round-robin over clip indices.
    pub recipes: Vec<Recipe>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 100,
            seed: 0,
            duration_s: 1.0,
            sample_rate: super::SAMPLE_RATE,
            eval_fraction: 0.2,
            recipes: Recipe::ALL.to_vec(),
        }
    }
}

/// Peak amplitudes are drawn from this range before normalization.
pub const PEAK_RANGE: (f32, f32) = (0.31, 0.94);

#[derive(Clone, Debug)]
pub struct SynthClip {
    pub id: String,
    pub recipe: Recipe,
    pub split: Split,
    pub waveform: Waveform,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<usize> {
        if self.n == 0 {
            return invalid("synth: n must be positive");
        }
        if self.recipes.is_empty() {
            return invalid("synth: at least one recipe is required");
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return invalid("synth: eval_fraction must lie in [0, 1)");
        }
        let len = (self.duration_s * self.sample_rate as f64).round();
        if !(len >= 1.0) {
            return invalid("synth: duration_s must cover at least one sample");
        }
        Ok(len as usize)
    }

    pub fn num_eval(&self) -> usize {
        ((self.n as f64) * self.eval_fraction).round() as usize
    }
}

fn render(recipe: Recipe, len: usize, sr: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let t = |i: usize| i as f64 / sr;
    match recipe {
        Recipe::SineMix => {
            let count = rng.random_range(2..=4);
            let parts: Vec<(f64, f64, f64)> = (0..count)
                .map(|_| {
                    (
                        rng.random_range(100.0..4000.0),
                        rng.random_range(0.2..1.0),
                        rng.random_range(0.0..2.0 * PI),
                    )
                })
                .collect();
            (0..len)
                .map(|i| parts.iter().map(|&(f, a, p)| a * (2.0 * PI * f * t(i) + p).sin()).sum())
                .collect()
        }
        Recipe::Chirp => {
            let f0: f64 = rng.random_range(100.0..3000.0);
            let f1: f64 = rng.random_range(100.0..6000.0);
            let dur = len as f64 / sr;
            let rate = (f1 - f0) / dur;
            let p: f64 = rng.random_range(0.0..2.0 * PI);
            (0..len)
                .map(|i| (2.0 * PI * (f0 * t(i) + 0.5 * rate * t(i) * t(i)) + p).sin())
                .collect()
        }
        Recipe::AmNoise => {
            let bursts = rng.random_range(1..=4);
            let mod_hz: f64 = rng.random_range(2.0..20.0);
            let spans: Vec<(usize, usize)> = (0..bursts)
                .map(|_| {
                    let w = ((rng.random_range(0.05..0.3) * sr) as usize).clamp(1, len);
                    (rng.random_range(0..=len - w), w)
                })
                .collect();
            (0..len)
                .map(|i| {
                    let env: f64 = spans
                        .iter()
                        .filter(|&&(s, w)| i >= s && i < s + w)
                        .map(|&(s, w)| (PI * (i - s) as f64 / w as f64).sin())
                        .sum();
                    let n: f64 = rng.sample(StandardNormal);
                    n * env * (0.6 + 0.4 * (2.0 * PI * mod_hz * t(i)).sin())
                })
                .collect()
        }
        Recipe::DecayingHarmonic => {
            let f0: f64 = rng.random_range(80.0..800.0);
            let harmonics = rng.random_range(3..=8);
            let tau: f64 = rng.random_range(0.2..1.5);
            (0..len)
                .map(|i| {
                    let s: f64 = (1..=harmonics)
                        .filter(|&h| (h as f64) * f0 < sr / 2.0)
                        .map(|h| (2.0 * PI * h as f64 * f0 * t(i)).sin() / h as f64)
                        .sum();
                    s * (-t(i) / tau).exp()
                })
                .collect()
        }
    }
}

/// Generates every clip in memory; clip `i` depends only on `(seed, i)`.
pub fn synth_waveforms(cfg: &SynthConfig) -> Result<Vec<SynthClip>> {
    let len = cfg.validate()?;
    let mut order: Vec<usize> = (0..cfg.n).collect();
    let mut split_rng = stage_rng(cfg.seed, "synth/split");
    for i in (1..order.len()).rev() {
        order.swap(i, split_rng.random_range(0..=i));
    }
    let mut is_eval = vec![false; cfg.n];
    for &i in &order[..cfg.num_eval()] {
        is_eval[i] = true;
    }
    (0..cfg.n)
        .map(|i| {
            let recipe = cfg.recipes[i % cfg.recipes.len()];
            let mut rng = stage_rng(cfg.seed, &format!("synth/clip/{i}"));
            let peak_target = rng.random_range(PEAK_RANGE.0..=PEAK_RANGE.1) as f64;
            let raw = render(recipe, len, cfg.sample_rate as f64, &mut rng);
            let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let gain = if peak > 0.0 { peak_target / peak } else { 0.0 };
            let samples = raw.iter().map(|v| (v * gain) as f32).collect();
            Ok(SynthClip {
                id: format!("clip{i:05}"),
                recipe,
                split: if is_eval[i] { Split::Eval } else { Split::Train },
                waveform: Waveform::new(samples, cfg.sample_rate)?,
            })
        })
        .collect()
}

/// Writes `clips/<id>.wav` under `out_dir` and a `manifest.jsonl` beside them.
pub fn synth_dataset(cfg: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest> {
    let clips = synth_waveforms(cfg)?;
    let clip_dir = out_dir.join("clips");
    std::fs::create_dir_all(&clip_dir).map_err(|e| Error::io(&clip_dir, e))?;
    let mut entries = Vec::with_capacity(clips.len());
    for c in &clips {
        let rel = format!("clips/{}.wav", c.id);
        write_wav(out_dir.join(&rel), &c.waveform)?;
        entries.push(ManifestEntry {
            id: c.id.clone(),
            path: rel.into(),
            duration_s: c.waveform.duration_s(),
            recipe: c.recipe.name().to_string(),
            split: c.split,
        });
    }
    let manifest = DatasetManifest::new(out_dir.to_path_buf(), entries)?;
    manifest.write(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peaks_lengths_and_splits() {
        let cfg = SynthConfig {
            n: 40,
            seed: 7,
            duration_s: 2.0,
            ..Default::default()
        };
        let clips = synth_waveforms(&cfg).unwrap();
        assert_eq!(clips.len(), 40);
        for c in &clips {
            assert_eq!(c.waveform.len(), 32000);
            let p = c.waveform.peak();
            assert!((0.3..=0.95).contains(&p), "{} peak {p}", c.id);
        }
        assert_eq!(clips.iter().filter(|c| c.split == Split::Eval).count(), 8);
        for r in Recipe::ALL {
            assert!(clips.iter().any(|c| c.recipe == r));
        }
    }

    #[test]
    fn clips_are_seed_deterministic() {
        let cfg = SynthConfig {
            n: 8,
            seed: 3,
            ..Default::default()
        };
        let a = synth_waveforms(&cfg).unwrap();
        let b = synth_waveforms(&cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.waveform, y.waveform);
            assert_eq!(x.split, y.split);
        }
        let c = synth_waveforms(&SynthConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a[0].waveform, c[0].waveform);
    }

    #[test]
    fn invalid_configs() {
        assert!(synth_waveforms(&SynthConfig { n: 0, ..Default::default() }).is_err());
        assert!(synth_waveforms(&SynthConfig {
            recipes: vec![],
            ..Default::default()
        })
        .is_err());
    }
}
