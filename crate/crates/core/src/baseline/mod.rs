//! Log-mel + k-means tokenizer, producing token sequences interchangeable
//! with the codec's at the language-model level.

mod kmeans;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans_fit, nearest_f64, KMeansModel, SHIFT_TOL};

use crate::container::Container;
use crate::digest::Digest;
use crate::dsp::mel::log_mel;
use crate::dsp::Waveform;
use crate::error::{invalid, Error, Result};
use crate::tokens::TokenSequence;

pub const BASELINE_MAGIC: [u8; 4] = *b"SLMK";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub n_mels: usize,
    pub fft_size: usize,
    /// Frame hop in samples, which is also the token resolution.
    pub hop: usize,
}

impl FeatureConfig {
    pub fn at_hop(hop: usize) -> Self {
        Self {
            n_mels: 40,
            fft_size: 512,
            hop,
        }
    }

    /// 160-sample hop at 16 kHz.
    pub fn ten_ms() -> Self {
        Self::at_hop(160)
    }

    /// 32-sample hop at 16 kHz.
    pub fn two_ms() -> Self {
        Self::at_hop(32)
    }

    /// Raw log-mel rows, one per `hop` of input (the signal is
    /// zero-padded so a clip of T samples yields exactly ceil(T/hop) frames).
    pub fn features(&self, w: &Waveform) -> Result<(Vec<f64>, usize)> {
        if self.hop == 0 || self.n_mels == 0 || self.fft_size < self.hop {
            return invalid(format!(
                "feature config needs hop ≥ 1, n_mels ≥ 1 and fft_size ≥ hop, got {:?}",
                self
            ));
        }
        let frames = w.len().div_ceil(self.hop);
        let mut padded = w.samples().to_vec();
        padded.resize(frames * self.hop + self.fft_size - self.hop, 0.0);
        let padded = Waveform::new(padded, w.sample_rate())?;
        let (f, n) = log_mel(&padded, self.n_mels, self.fft_size, self.hop)?;
        debug_assert_eq!(n, frames);
        Ok((f, n))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    features: FeatureConfig,
    k: usize,
    inertia_history: Vec<f64>,
}

/// Feature extraction, per-dimension standardization and a k-means codebook.
/// Every stored value is f32-representable, so a saved tokenizer reproduces
/// the tokens of the one that wrote it.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineTokenizer {
    pub features: FeatureConfig,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub kmeans: KMeansModel,
}

fn to_f32_grid(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x as f32 as f64).collect()
}

impl BaselineTokenizer {
    /// Fits standardization and k-means on every frame of `clips`.
    pub fn fit(clips: &[Waveform], features: FeatureConfig, k: usize, max_iters: usize, seed: u64) -> Result<Self> {
        if clips.is_empty() {
            return invalid("baseline: no training clips");
        }
        let d = features.n_mels;
        let mut all = Vec::new();
        for w in clips {
            all.extend(features.features(w)?.0);
        }
        let n = (all.len() / d) as f64;
        let mut mean = vec![0.0; d];
        for row in all.chunks_exact(d) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for row in all.chunks_exact(d) {
            var.iter_mut().zip(row).zip(&mean).for_each(|((s, v), m)| *s += (v - m) * (v - m) / n);
        }
        // Constant dimensions are centred but not scaled.
        let std: Vec<f64> = var.iter().map(|&v| if v > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        let (mean, std) = (to_f32_grid(&mean), to_f32_grid(&std));
        standardize(&mut all, &mean, &std);
        let mut km = kmeans_fit(&all, d, k, max_iters, seed)?;
        km.centroids = to_f32_grid(&km.centroids);
        Ok(Self {
            features,
            mean,
            std,
            kmeans: km,
        })
    }

    pub fn k(&self) -> usize {
        self.kmeans.k
    }

    pub fn hop(&self) -> usize {
        self.features.hop
    }

    /// Standardized feature rows of `w`.
    pub fn standardized(&self, w: &Waveform) -> Result<Vec<f64>> {
        let (mut f, _) = self.features.features(w)?;
        standardize(&mut f, &self.mean, &self.std);
        Ok(f)
    }

    /// One token per hop; `source` identifies this tokenizer.
    pub fn tokenize(&self, w: &Waveform, source: Digest) -> Result<TokenSequence> {
        let tokens = self.kmeans.assign(&self.standardized(w)?)?;
        TokenSequence::new(tokens, self.k(), self.hop(), w.len(), source)
    }

    pub fn to_container(&self) -> Container {
        let header = Header {
            features: self.features.clone(),
            k: self.k(),
            inertia_history: self.kmeans.inertia_history.clone(),
        };
        let mut c = Container::new(BASELINE_MAGIC, serde_json::to_string(&header).expect("config serializes"));
        let f = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
        let d = self.features.n_mels;
        c.push("mean", &[d], &f(&self.mean));
        c.push("std", &[d], &f(&self.std));
        c.push("centroids", &[self.k(), d], &f(&self.kmeans.centroids));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let h: Header =
            serde_json::from_str(&c.config_json).map_err(|e| Error::Format(format!("baseline header: {e}")))?;
        let f = |name: &str| -> Result<Vec<f64>> { Ok(c.blob(name)?.data.iter().map(|&x| x as f64).collect()) };
        let d = h.features.n_mels;
        let (mean, std, centroids) = (f("mean")?, f("std")?, f("centroids")?);
        if mean.len() != d || std.len() != d || centroids.len() != h.k * d {
            return Err(Error::Format("baseline blobs do not match the header".into()));
        }
        Ok(Self {
            features: h.features,
            mean,
            std,
            kmeans: KMeansModel::from_centroids(centroids, d, h.inertia_history)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<Digest> {
        let c = self.to_container();
        c.write(path)?;
        Ok(Digest::of(&c.to_bytes()))
    }

    pub fn load(path: &Path) -> Result<(Self, Digest)> {
        let (c, digest) = Container::read(path, BASELINE_MAGIC)?;
        Ok((Self::from_container(&c)?, digest))
    }

    pub fn identity(&self) -> Digest {
        Digest::of(&self.to_container().to_bytes())
    }
}

fn standardize(rows: &mut [f64], mean: &[f64], std: &[f64]) {
    for row in rows.chunks_exact_mut(mean.len()) {
        for ((v, m), s) in row.iter_mut().zip(mean).zip(std) {
            *v = (*v - m) / s;
        }
    }
}
