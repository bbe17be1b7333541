use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use soundlm::codec::{CodecConfig, CodecTrainConfig};
use soundlm::dsp::synth::SynthConfig;
use soundlm::dsp::Waveform;
use soundlm::eval::{
    assemble_cmos_clip, beep, reconstruction_snr, run_ablation, trend_violations, AblationConfig, AblationReport,
    BEEP_SECONDS,
};

fn wave(v: Vec<f32>) -> Waveform {
    Waveform::new(v, 16000).unwrap()
}

fn noise(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

#[test]
fn constructed_noise_gives_twenty_db() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let x: Vec<f32> = noise(16000, 0.2, &mut rng).iter().map(|&v| v.clamp(-1.0, 1.0) as f32).collect();
        let px: f64 = x.iter().map(|&v| (v as f64).powi(2)).sum();
        let n = noise(16000, 1.0, &mut rng);
        let pn: f64 = n.iter().map(|v| v * v).sum();
        let g = (px / 100.0 / pn).sqrt();
        let y: Vec<f32> = x.iter().zip(&n).map(|(&a, &b)| (a as f64 + g * b) as f32).collect();
        let snr = reconstruction_snr(&wave(x), &wave(y)).unwrap();
        assert!((snr - 20.0).abs() < 1e-6, "{snr}");
    }
}

#[test]
fn snr_ignores_power_of_two_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f32> = noise(4000, 0.1, &mut rng).iter().map(|&v| v as f32).collect();
    let y: Vec<f32> = x.iter().map(|&v| v + 0.01 * rng.random::<f32>()).collect();
    let base = reconstruction_snr(&wave(x.clone()), &wave(y.clone())).unwrap();
    for a in [2.0f32, 0.5, -1.0, -4.0, 0.125] {
        let s = |v: &[f32]| wave(v.iter().map(|&u| u * a).collect());
        assert_eq!(reconstruction_snr(&s(&x), &s(&y)).unwrap(), base, "a = {a}");
    }
}

#[test]
fn beep_peaks_at_one_kilohertz() {
    let b = beep(16000).unwrap();
    let n = b.len();
    assert_eq!(n as f64, BEEP_SECONDS * 16000.0);
    let s = b.samples();
    let power = |k: usize| {
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for (t, &v) in s.iter().enumerate() {
            let ph = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
            re += v as f64 * ph.cos();
            im += v as f64 * ph.sin();
        }
        re * re + im * im
    };
    let peak = (0..=n / 2).max_by(|&a, &b| power(a).total_cmp(&power(b))).unwrap();
    assert_eq!(peak as f64 * 16000.0 / n as f64, 1000.0);
}

#[test]
fn control_and_generated_clips_share_layout() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mk = |rng: &mut ChaCha8Rng| wave(noise(80000, 0.1, rng).iter().map(|&v| v as f32).collect());
    let (prompt, truth, generated) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
    let control = assemble_cmos_clip(&prompt, &truth).unwrap();
    let test = assemble_cmos_clip(&prompt, &generated).unwrap();
    assert_eq!(control.len(), 164800);
    assert_eq!(test.len(), 164800);
    assert_eq!(control.samples()[..84800], test.samples()[..84800]);
    assert_eq!(&control.samples()[84800..], truth.samples());
    assert_eq!(&test.samples()[80000..84800], beep(16000).unwrap().samples());
}

fn tiny_grid() -> AblationConfig {
    AblationConfig {
        r_ms: vec![2, 3, 8],
        k: vec![8, 16],
        codec: CodecConfig {
            base_channels: 2,
            residual_units: 1,
            latent_dim: 4,
            ..CodecConfig::default()
        },
        codec_train: CodecTrainConfig {
            steps: 3,
            batch_size: 2,
            crop_samples: 2048,
            ..CodecTrainConfig::default()
        },
        data: SynthConfig {
            n: 6,
            duration_s: 0.2,
            eval_fraction: 0.34,
            ..SynthConfig::default()
        },
        lm: None,
        seed: 4,
    }
}

#[test]
fn ablation_runs_every_cell_and_reports_failures() {
    let cfg = tiny_grid();
    let mut seen = 0;
    let report = run_ablation(&cfg, |_| seen += 1).unwrap();
    assert_eq!(seen, 6);
    assert_eq!(report.cells.len(), 6);
    assert_eq!((report.train_clips, report.eval_clips), (4, 2));
    for c in &report.cells {
        if c.r_ms == 3 {
            assert!(c.error.is_some() && c.snr_db_mean.is_none());
        } else {
            assert!(c.error.is_none(), "{:?}", c.error);
            assert!(c.snr_db_mean.unwrap().is_finite());
            assert_eq!(c.tokens_per_second, 1000.0 / c.r_ms as f64);
        }
    }
    let again = run_ablation(&cfg, |_| {}).unwrap();
    assert_eq!(report, again);
    let parsed: AblationReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(parsed, report);
    let table = report.render_table();
    assert!(table.contains("SNR dB") && table.contains("K=16") && table.contains("R=3 K=8"));
    assert!(trend_violations(&report, 0.5).iter().any(|v| v.contains("R=3ms")));
}

#[test]
fn ablation_with_language_model() {
    let mut cfg = tiny_grid();
    cfg.r_ms = vec![8];
    cfg.k = vec![8];
    let lm = soundlm::lm::LmConfig {
        num_layers: 1,
        num_heads: 1,
        embed_dim: 8,
        ffn_dim: 16,
        max_seq_len: 32,
        ..soundlm::lm::LmConfig::desk(8)
    };
    let tc = soundlm::lm::LmTrainConfig {
        steps: 3,
        batch_size: 2,
        seq_len: 16,
        ..Default::default()
    };
    cfg.lm = Some((lm, tc));
    let report = run_ablation(&cfg, |_| {}).unwrap();
    let cell = &report.cells[0];
    assert!(cell.lm_eval_loss.unwrap().is_finite(), "{:?}", cell.error);
    assert_eq!(report.lm_steps, Some(3));
}

#[test]
fn trend_checker_applies_slack() {
    let cell = |r_ms, k, snr| soundlm::eval::AblationCell {
        r_ms,
        k,
        snr_db_mean: Some(snr),
        snr_db_std: Some(0.0),
        codec_final_loss: None,
        codebook_utilization: None,
        lm_eval_loss: None,
        tokens_per_second: 1000.0 / r_ms as f64,
        error: None,
    };
    let report = AblationReport {
        seed: 0,
        codec_steps: 0,
        lm_steps: None,
        train_clips: 0,
        eval_clips: 0,
        cells: vec![cell(2, 512, 5.0), cell(2, 1024, 4.6), cell(8, 512, 3.0), cell(8, 1024, 5.0)],
    };
    assert!(trend_violations(&report, 0.5).is_empty());
    let v = trend_violations(&report, 0.3);
    assert_eq!(v.len(), 2, "{v:?}");
}
