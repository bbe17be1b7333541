use serde::{Deserialize, Serialize};

use super::codec_snr;
use crate::codec::{train_codec, Codec, CodecConfig, CodecTrainConfig};
use crate::dsp::synth::{synth_waveforms, SynthConfig};
use crate::dsp::{Split, Waveform};
use crate::error::{invalid, Result};
use crate::lm::{train_lm, LmConfig, LmTrainConfig, TokenCorpus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub r_ms: Vec<usize>,
    pub k: Vec<usize>,
    /// Every cell copies this and replaces its strides and codebook size.
    pub codec: CodecConfig,
    pub codec_train: CodecTrainConfig,
    pub data: SynthConfig,
    /// Train an LM per cell when set; its codebook size is replaced too.
    pub lm: Option<(LmConfig, LmTrainConfig)>,
    pub seed: u64,
}

impl AblationConfig {
    /// The 3 × 3 grid with a codec small enough to train nine times on one core.
    pub fn desk() -> Self {
        Self {
            r_ms: vec![2, 4, 8],
            k: vec![512, 1024, 2048],
            codec: CodecConfig::ablation(),
            codec_train: CodecTrainConfig::ablation(),
            data: SynthConfig {
                n: 250,
                ..SynthConfig::default()
            },
            lm: None,
            seed: 0,
        }
    }

    pub fn cell_codec(&self, r_ms: usize, k: usize) -> Result<CodecConfig> {
        let cfg = CodecConfig {
            stride_factors: CodecConfig::strides_for_ms(r_ms)?,
            codebook_size: k,
            ..self.codec.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub r_ms: usize,
    pub k: usize,
    pub snr_db_mean: Option<f64>,
    pub snr_db_std: Option<f64>,
    pub codec_final_loss: Option<f64>,
    pub codebook_utilization: Option<f64>,
    pub lm_eval_loss: Option<f64>,
    /// Tokens the codec emits per second of audio.
    pub tokens_per_second: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub codec_steps: usize,
    pub lm_steps: Option<usize>,
    pub train_clips: usize,
    pub eval_clips: usize,
    pub cells: Vec<AblationCell>,
}

struct Outcome {
    snr: (f64, f64),
    loss: f64,
    utilization: f64,
    lm: Option<f64>,
}

fn run_cell(cfg: &AblationConfig, codec_cfg: &CodecConfig, train: &[Waveform], eval: &[Waveform]) -> Result<Outcome> {
    let r = train_codec(train, codec_cfg, &cfg.codec_train, cfg.seed)?;
    if let Some(why) = &r.aborted {
        return invalid(format!("codec training aborted: {why}"));
    }
    let snr = codec_snr(&r.codec, eval)?;
    let lm = match &cfg.lm {
        Some((lm_cfg, tc)) => Some(lm_eval_loss(&r.codec, lm_cfg, tc, train, eval, cfg.seed)?),
        None => None,
    };
    Ok(Outcome {
        snr: (snr.mean, snr.std),
        loss: r.smoothed_final,
        utilization: r.utilization,
        lm,
    })
}

fn lm_eval_loss(
    codec: &Codec,
    lm_cfg: &LmConfig,
    tc: &LmTrainConfig,
    train: &[Waveform],
    eval: &[Waveform],
    seed: u64,
) -> Result<f64> {
    let digest = codec.identity();
    let corpus = |clips: &[Waveform]| -> Result<TokenCorpus> {
        TokenCorpus::new(clips.iter().map(|w| codec.tokenize(w, digest)).collect::<Result<_>>()?)
    };
    let cfg = LmConfig {
        codebook_size: codec.config.codebook_size,
        ..lm_cfg.clone()
    };
    let r = train_lm(&corpus(train)?, Some(&corpus(eval)?), cfg, tc, seed)?;
    Ok(r.final_eval().expect("eval corpus given"))
}

/// Trains one codec per `(R, K)` cell on shared data and seeds. A failing
/// cell records its error and the grid continues. `progress` sees each
/// cell as it finishes.
pub fn run_ablation(cfg: &AblationConfig, mut progress: impl FnMut(&AblationCell)) -> Result<AblationReport> {
    if cfg.r_ms.is_empty() || cfg.k.is_empty() {
        return invalid("ablation: grid is empty");
    }
    let clips = synth_waveforms(&cfg.data)?;
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for c in clips {
        match c.split {
            Split::Train => train.push(c.waveform),
            Split::Eval => eval.push(c.waveform),
        }
    }
    if train.is_empty() || eval.is_empty() {
        return invalid("ablation: data config leaves an empty train or eval split");
    }
    let mut cells = Vec::new();
    for &r_ms in &cfg.r_ms {
        for &k in &cfg.k {
            let codec_cfg = cfg.cell_codec(r_ms, k);
            let tokens_per_second = match &codec_cfg {
                Ok(c) => c.sample_rate as f64 / c.hop() as f64,
                Err(_) => 1000.0 / r_ms as f64,
            };
            let outcome = codec_cfg.and_then(|c| run_cell(cfg, &c, &train, &eval));
            let cell = match outcome {
                Ok(o) => AblationCell {
                    r_ms,
                    k,
                    snr_db_mean: Some(o.snr.0),
                    snr_db_std: Some(o.snr.1),
                    codec_final_loss: Some(o.loss),
                    codebook_utilization: Some(o.utilization),
                    lm_eval_loss: o.lm,
                    tokens_per_second,
                    error: None,
                },
                Err(e) => AblationCell {
                    r_ms,
                    k,
                    snr_db_mean: None,
                    snr_db_std: None,
                    codec_final_loss: None,
                    codebook_utilization: None,
                    lm_eval_loss: None,
                    tokens_per_second,
                    error: Some(e.to_string()),
                },
            };
            progress(&cell);
            cells.push(cell);
        }
    }
    Ok(AblationReport {
        seed: cfg.seed,
        codec_steps: cfg.codec_train.steps,
        lm_steps: cfg.lm.as_ref().map(|(_, t)| t.steps),
        train_clips: train.len(),
        eval_clips: eval.len(),
        cells,
    })
}

impl AblationReport {
    pub fn cell(&self, r_ms: usize, k: usize) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.r_ms == r_ms && c.k == k)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per resolution; the SNR, codec-loss and LM-loss panels side by side.
    pub fn render_table(&self) -> String {
        let mut rs: Vec<usize> = self.cells.iter().map(|c| c.r_ms).collect();
        let mut ks: Vec<usize> = self.cells.iter().map(|c| c.k).collect();
        rs.dedup();
        ks.sort_unstable();
        ks.dedup();
        let fmt = |v: Option<f64>, p: usize| v.map_or_else(|| "-".to_string(), |v| format!("{v:.p$}"));
        let panels: [(&str, fn(&AblationCell) -> Option<f64>, usize); 3] = [
            ("SNR dB", |c| c.snr_db_mean, 2),
            ("codec loss", |c| c.codec_final_loss, 3),
            ("LM eval loss", |c| c.lm_eval_loss, 3),
        ];
        let width = 9;
        let panel_width = ks.len() * width;
        let mut out = format!("{:>6} {:>9}", "", "tok/s");
        for (name, _, _) in &panels {
            out += &format!(" | {name:^panel_width$}");
        }
        out += &format!("\n{:>6} {:>9}", "R ms", "");
        for _ in &panels {
            out += " | ";
            for k in &ks {
                out += &format!("{:>width$}", format!("K={k}"));
            }
        }
        out.push('\n');
        for r in &rs {
            let tps = self.cells.iter().find(|c| c.r_ms == *r).map(|c| c.tokens_per_second);
            out += &format!("{r:>6} {:>9}", fmt(tps, 0));
            for (_, get, p) in &panels {
                out += " | ";
                for k in &ks {
                    let v = self.cell(*r, *k).and_then(|c| get(c));
                    out += &format!("{:>width$}", fmt(v, *p));
                }
            }
            out.push('\n');
        }
        for c in self.cells.iter().filter(|c| c.error.is_some()) {
            out += &format!("R={} K={}: {}\n", c.r_ms, c.k, c.error.as_deref().unwrap_or_default());
        }
        out
    }
}

/// Every ordering the rate-distortion trend predicts that the report breaks
/// by more than `slack_db`: SNR should not fall as K grows at fixed R, nor
/// as R grows at fixed K. Missing cells count as violations.
pub fn trend_violations(report: &AblationReport, slack_db: f64) -> Vec<String> {
    let mut rs: Vec<usize> = report.cells.iter().map(|c| c.r_ms).collect();
    let mut ks: Vec<usize> = report.cells.iter().map(|c| c.k).collect();
    rs.sort_unstable();
    rs.dedup();
    ks.sort_unstable();
    ks.dedup();
    let snr = |r: usize, k: usize| report.cell(r, k).and_then(|c| c.snr_db_mean);
    let mut out = Vec::new();
    let mut check = |lo: (usize, usize), hi: (usize, usize)| match (snr(lo.0, lo.1), snr(hi.0, hi.1)) {
        (Some(a), Some(b)) if b + slack_db >= a => {}
        (Some(a), Some(b)) => out.push(format!(
            "SNR(R={}ms, K={}) = {b:.2} dB is below SNR(R={}ms, K={}) = {a:.2} dB",
            hi.0, hi.1, lo.0, lo.1
        )),
        _ => out.push(format!("cell R={}ms K={} or R={}ms K={} has no SNR", lo.0, lo.1, hi.0, hi.1)),
    };
    for &r in &rs {
        for w in ks.windows(2) {
            check((r, w[0]), (r, w[1]));
        }
    }
    // Finer resolution (smaller R) should not lose SNR.
    for &k in &ks {
        for w in rs.windows(2) {
            check((w[1], k), (w[0], k));
        }
    }
    out
}
