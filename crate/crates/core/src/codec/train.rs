use std::collections::HashSet;

use rand::Rng;
use soundlm_tensor::{adam_step, AdamConfig, AdamState, Graph};

use super::loss::loss_graph;
use super::{Codebook, Codec, CodecConfig, CodecTrainConfig, LossReport};
use crate::dsp::Waveform;
use crate::error::{invalid, Result};
use crate::seed::stage_rng;

#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub loss: LossReport,
    pub codes_used: usize,
    pub codes_reset: usize,
}

#[derive(Clone, Debug)]
pub struct CodecTrainResult {
    pub codec: Codec,
    pub log: Vec<StepLog>,
    /// Fraction of codes assigned at least once during the final epoch.
    pub utilization: f64,
    pub smoothed_initial: f64,
    pub smoothed_final: f64,
    /// Set when training stopped early on a non-finite loss.
    pub aborted: Option<String>,
}

impl CodecTrainResult {
    pub fn final_loss(&self) -> f64 {
        self.smoothed_final
    }
}

/// Mean of the first and last `window` values.
pub(crate) fn smoothed_ends(v: &[f64], window: usize) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let w = window.clamp(1, v.len());
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (mean(&v[..w]), mean(&v[v.len() - w..]))
}

/// Random crop of `len` samples, zero-padded when the clip is shorter.
fn crop(w: &Waveform, len: usize, rng: &mut impl Rng) -> Vec<f32> {
    let s = w.samples();
    if s.len() <= len {
        let mut out = s.to_vec();
        out.resize(len, 0.0);
        return out;
    }
    let off = rng.random_range(0..=s.len() - len);
    s[off..off + len].to_vec()
}

/// Trains on random crops drawn epoch by epoch from `clips`.
pub fn train_codec(clips: &[Waveform], cfg: &CodecConfig, tc: &CodecTrainConfig, seed: u64) -> Result<CodecTrainResult> {
    if clips.is_empty() {
        return invalid("train_codec: no training clips");
    }
    if tc.steps == 0 || tc.batch_size == 0 {
        return invalid("train_codec: steps and batch_size must be positive");
    }
    let hop = cfg.hop();
    let len = (tc.crop_samples / hop) * hop;
    if len < cfg.min_crop() {
        return invalid(format!(
            "train_codec: crop of {} samples is shorter than the minimum {}",
            tc.crop_samples,
            cfg.min_crop()
        ));
    }
    let mut codec = Codec::init(cfg.clone(), &mut stage_rng(seed, "codec/init"))?;
    let mut adam = AdamState::new(
        &codec.params,
        AdamConfig {
            lr: tc.lr,
            ..AdamConfig::default()
        },
    );
    let mut batch_rng = stage_rng(seed, "codec/batches");
    let mut code_rng = stage_rng(seed, "codec/codebook");
    let n = clips.len();
    let epoch_steps = n.div_ceil(tc.batch_size);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut log = Vec::with_capacity(tc.steps);
    let mut last_epoch_codes = HashSet::new();
    let mut seeded = false;
    let mut aborted = None;
    let d = cfg.latent_dim;

    for step in 0..tc.steps {
        let mut batch = Vec::with_capacity(tc.batch_size * len);
        for _ in 0..tc.batch_size {
            if cursor == order.len() {
                order = (0..n).collect();
                for i in (1..n).rev() {
                    order.swap(i, batch_rng.random_range(0..=i));
                }
                cursor = 0;
            }
            batch.extend(crop(&clips[order[cursor]], len, &mut batch_rng));
            cursor += 1;
        }

        let backup = (codec.params.clone(), codec.codebook.clone());
        let mut g = Graph::new();
        let p = codec.params.bind(&mut g);
        let x = g.constant([tc.batch_size, 1, len], batch.clone())?;
        let z = codec.encoder_graph(&mut g, &p, x)?;
        let zt = g.transpose_last(z)?;
        let rows = g.value(zt).to_vec();
        if rows.iter().any(|v| !v.is_finite()) {
            aborted = Some(format!("step {step}: encoder produced non-finite latents"));
            break;
        }
        if !seeded {
            codec.codebook = Codebook::from_latents(&rows, d, cfg.codebook_size, cfg.ema_decay, cfg.ema_eps, &mut code_rng)?;
            seeded = true;
        }
        let q = codec.codebook.quantize(&rows)?;
        let e = g.constant(g.shape(zt).to_vec(), q.values.clone())?;
        let diff = g.sub(zt, e)?;
        let sq = g.sqr(diff);
        let commit = g.mean(sq);
        let commit = g.scale(commit, cfg.commitment as f32);
        let st = g.straight_through(zt, q.values.clone())?;
        let qz = g.transpose_last(st)?;
        let y = codec.decoder_graph(&mut g, &p, qz)?;
        let (loss, report) = loss_graph(&mut g, cfg, y, &batch, Some(commit))?;
        if !report.total.is_finite() {
            aborted = Some(format!("step {step}: loss is not finite"));
            break;
        }
        g.backward(loss)?;
        codec.params.collect_grads(&g, &p)?;
        drop(g);
        adam_step(&mut codec.params, &mut adam)?;
        if codec.params.iter().any(|(_, t)| t.data().iter().any(|v| !v.is_finite())) {
            (codec.params, codec.codebook) = backup;
            aborted = Some(format!("step {step}: parameters diverged"));
            break;
        }
        codec.codebook.ema_update(&rows, &q.tokens);
        let reset = codec.codebook.reinit_dead(&rows, cfg.dead_code_steps, &mut code_rng);
        codec.step += 1;

        let used: HashSet<u32> = q.tokens.iter().copied().collect();
        if step + epoch_steps >= tc.steps {
            last_epoch_codes.extend(used.iter().copied());
        }
        log.push(StepLog {
            step,
            loss: report,
            codes_used: used.len(),
            codes_reset: reset,
        });
    }
    let totals: Vec<f64> = log.iter().map(|s| s.loss.total).collect();
    let (smoothed_initial, smoothed_final) = smoothed_ends(&totals, tc.smoothing_window);
    Ok(CodecTrainResult {
        codec,
        utilization: last_epoch_codes.len() as f64 / cfg.codebook_size as f64,
        log,
        smoothed_initial,
        smoothed_final,
        aborted,
    })
}
