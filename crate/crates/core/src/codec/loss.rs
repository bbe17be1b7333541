use soundlm_tensor::{Graph, StftAttrs, Var};

use super::CodecConfig;
use crate::dsp::Waveform;
use crate::error::{invalid, Result};

/// Every term of the codec objective, already weighted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub l1: f64,
    /// Spectral convergence per STFT resolution.
    pub spectral_convergence: Vec<f64>,
    /// Log-magnitude L1 per STFT resolution.
    pub log_magnitude: Vec<f64>,
    pub commit: f64,
}

impl LossReport {
    pub fn spectral(&self) -> f64 {
        self.spectral_convergence.iter().sum::<f64>() + self.log_magnitude.iter().sum::<f64>()
    }
}

/// Builds `λ_t·L1 + λ_f·Σ_r (SC_r + logmag_r) + commit` on the graph.
/// `y: [B, 1, T]` is the reconstruction, `target` the `B·T` reference samples.
pub fn loss_graph(
    g: &mut Graph,
    cfg: &CodecConfig,
    y: Var,
    target: &[f32],
    commit: Option<Var>,
) -> Result<(Var, LossReport)> {
    let shape = g.shape(y).to_vec();
    if shape.len() != 3 || shape[1] != 1 || shape[0] * shape[2] != target.len() {
        return invalid(format!(
            "codec loss: reconstruction {shape:?} does not match {} reference samples",
            target.len()
        ));
    }
    let (b, t) = (shape[0], shape[2]);
    let mut rep = LossReport::default();
    let x = g.constant([b, 1, t], target.to_vec())?;
    let l1 = g.l1(y, x)?;
    rep.l1 = cfg.lambda_time * g.item(l1) as f64;
    let mut total = g.scale(l1, cfg.lambda_time as f32);
    let flat = g.reshape(y, &[b, t])?;
    let xf = g.reshape(x, &[b, t])?;
    for r in &cfg.stft_resolutions {
        let attrs = StftAttrs::new(r.fft_size, r.hop);
        let s = g.stft_magnitude(flat, attrs)?;
        let m = g.stft_magnitude(xf, attrs)?;
        let ref_norm = g.value(m).iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt().max(1e-8);
        let diff = g.sub(s, m)?;
        let sq = g.sqr(diff);
        let ss = g.sum(sq);
        let num = g.sqrt(ss);
        let sc = g.scale(num, (cfg.lambda_freq / ref_norm) as f32);
        let ls = g.log(s, cfg.log_eps as f32);
        let lm = g.log(m, cfg.log_eps as f32);
        let lmag = g.l1(ls, lm)?;
        let lmag = g.scale(lmag, cfg.lambda_freq as f32);
        rep.spectral_convergence.push(g.item(sc) as f64);
        rep.log_magnitude.push(g.item(lmag) as f64);
        total = g.add(total, sc)?;
        total = g.add(total, lmag)?;
    }
    if let Some(c) = commit {
        rep.commit = g.item(c) as f64;
        total = g.add(total, c)?;
    }
    rep.total = g.item(total) as f64;
    Ok((total, rep))
}

/// Loss between a reference and a reconstruction of equal length.
pub fn codec_loss(x: &Waveform, x_hat: &Waveform, commit: f64, cfg: &CodecConfig) -> Result<LossReport> {
    if x.len() != x_hat.len() {
        return invalid(format!("codec loss: lengths differ ({} vs {})", x.len(), x_hat.len()));
    }
    let mut g = Graph::new();
    let y = g.constant([1, 1, x_hat.len()], x_hat.samples().to_vec())?;
    let c = g.constant([1], vec![commit as f32])?;
    let (_, rep) = loss_graph(&mut g, cfg, y, x.samples(), Some(c))?;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(f: impl Fn(usize) -> f32) -> Waveform {
        Waveform::new((0..2048).map(f).collect(), 16000).unwrap()
    }

    #[test]
    fn identical_signals_cost_nothing() {
        let x = wave(|i| (i as f32 * 0.07).sin() * 0.5);
        let r = codec_loss(&x, &x, 0.0, &CodecConfig::default()).unwrap();
        assert_eq!(r.total, 0.0);
        assert!(r.spectral_convergence.iter().chain(&r.log_magnitude).all(|&v| v == 0.0));
    }

    #[test]
    fn l1_of_constant_offset() {
        let x = wave(|_| 0.5);
        let z = wave(|_| 0.0);
        let r = codec_loss(&x, &z, 0.0, &CodecConfig::default()).unwrap();
        assert!((r.l1 - 0.5).abs() < 1e-7);
        assert!(r.total >= r.l1);
    }

    #[test]
    fn nonnegative_and_length_checked() {
        let cfg = CodecConfig::default();
        for s in 0..5 {
            let x = wave(|i| ((i * (s + 3)) % 17) as f32 / 17.0 - 0.5);
            let y = wave(|i| ((i * (s + 5)) % 13) as f32 / 26.0);
            let r = codec_loss(&x, &y, 0.1, &cfg).unwrap();
            assert!(r.total >= 0.0 && r.l1 >= 0.0 && r.commit >= 0.0);
            let sum = r.l1 + r.spectral() + r.commit;
            assert!((r.total - sum).abs() < 1e-4 * sum.max(1.0));
        }
        let short = Waveform::new(vec![0.0; 2000], 16000).unwrap();
        assert!(codec_loss(&wave(|_| 0.1), &short, 0.0, &cfg).is_err());
    }
}
