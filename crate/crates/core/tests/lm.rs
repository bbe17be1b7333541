use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soundlm::codec::{train_codec, CodecConfig, CodecTrainConfig};
use soundlm::dsp::synth::{synth_waveforms, SynthConfig};
use soundlm::dsp::Waveform;
use soundlm::lm::{
    bits_per_token, continue_audio, corpus_loss, train_lm, KvCache, LanguageModel, LmConfig, LmTrainConfig,
    SamplingParams, TokenCorpus,
};
use soundlm::{Digest, Error, TokenSequence};

fn tiny(k: usize) -> LmConfig {
    LmConfig {
        num_layers: 2,
        num_heads: 2,
        embed_dim: 16,
        ffn_dim: 32,
        max_seq_len: 40,
        ..LmConfig::desk(k)
    }
}

fn model(cfg: LmConfig, seed: u64) -> LanguageModel {
    LanguageModel::init(cfg, Digest::of(b"codec"), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn corpus(seqs: Vec<Vec<u32>>, k: usize) -> TokenCorpus {
    let seqs = seqs
        .into_iter()
        .map(|t| {
            let n = t.len();
            TokenSequence::new(t, k, 32, n * 32, Digest::of(b"codec")).unwrap()
        })
        .collect();
    TokenCorpus::new(seqs).unwrap()
}

#[test]
fn perturbing_a_token_never_reaches_earlier_positions() {
    let m = model(tiny(8), 1);
    let v = m.config.vocab_size();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let l = 24;
    let base: Vec<usize> = (0..l).map(|_| rng.random_range(0..v)).collect();
    let before = m.forward(&base).unwrap();
    for j in 0..l {
        for _ in 0..3 {
            let mut x = base.clone();
            x[j] = (x[j] + rng.random_range(1..v)) % v;
            let after = m.forward(&x).unwrap();
            let prefix = j * v;
            assert!(before[..prefix].iter().zip(&after[..prefix]).all(|(a, b)| a.to_bits() == b.to_bits()));
            assert_ne!(before[prefix..], after[prefix..], "position {j} itself must respond");
        }
    }
}

#[test]
fn kv_cache_is_bit_identical_to_full_forward() {
    for seed in 0..3 {
        let m = model(tiny(8), seed);
        let v = m.config.vocab_size();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 10);
        let x: Vec<usize> = (0..m.config.max_seq_len).map(|_| rng.random_range(0..v)).collect();
        let full = m.forward(&x).unwrap();
        let mut cache = KvCache::new(&m);
        for (j, &t) in x.iter().enumerate() {
            let row = cache.step(&m, t).unwrap();
            let want = &full[j * v..(j + 1) * v];
            assert!(row.iter().zip(want).all(|(a, b)| a.to_bits() == b.to_bits()), "seed {seed} position {j}");
        }
        assert!(cache.step(&m, 0).is_err());
    }
}

#[test]
fn bos_only_input_gives_one_row() {
    let m = model(tiny(8), 0);
    assert_eq!(m.forward(&[m.config.bos()]).unwrap().len(), 9);
    assert!(m.forward(&[9]).is_err());
}

#[test]
fn zero_head_loss_is_ln_k() {
    for k in [512usize, 1024, 2048] {
        let cfg = LmConfig {
            zero_init_head: true,
            ..tiny(k)
        };
        let m = model(cfg, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let batch: Vec<Vec<u32>> = (0..4)
            .map(|_| (0..30).map(|_| rng.random_range(0..k as u32)).collect())
            .collect();
        let loss = m.lm_loss(&batch).unwrap();
        assert!((loss - (k as f64).ln()).abs() < 0.05, "K={k}: {loss}");
        let c = corpus(batch, k);
        let bits = bits_per_token(&m, &c).unwrap();
        assert!((bits - (k as f64).log2()).abs() < 1e-4, "K={k}: {bits}");
    }
}

#[test]
fn ragged_batches_ignore_padding() {
    let m = model(tiny(8), 4);
    let a = vec![1u32, 2, 3, 4, 5, 6];
    let b = vec![7u32, 0];
    let joint = m.lm_loss(&[a.clone(), b.clone()]).unwrap();
    let la = m.lm_loss(&[a]).unwrap();
    let lb = m.lm_loss(&[b]).unwrap();
    assert!((joint - (6.0 * la + 2.0 * lb) / 8.0).abs() < 1e-5);
    assert!(m.lm_loss(&[vec![]]).is_err());
    assert!(m.lm_loss(&[vec![8]]).is_err(), "BOS is not a target");
}

#[test]
fn memorizes_one_sequence() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let k = 64;
    let tokens: Vec<u32> = (0..64).map(|_| rng.random_range(0..k as u32)).collect();
    let cfg = LmConfig {
        num_layers: 2,
        num_heads: 2,
        embed_dim: 32,
        ffn_dim: 64,
        max_seq_len: 64,
        ..LmConfig::desk(k)
    };
    let tc = LmTrainConfig {
        steps: 2000,
        batch_size: 1,
        seq_len: 64,
        lr: 1e-3,
        ..LmTrainConfig::default()
    };
    let c = corpus(vec![tokens], k);
    let r = train_lm(&c, Some(&c), cfg, &tc, 11).unwrap();
    let last = r.final_eval().unwrap();
    assert!(last < 0.05, "memorization loss {last}");
    let bits = bits_per_token(&r.model, &c).unwrap();
    assert!((bits - corpus_loss(&r.model, &c).unwrap() / std::f64::consts::LN_2).abs() < 1e-9);
}

#[test]
fn training_is_deterministic_and_beats_uniform() {
    let k = 16;
    let periodic = |phase: u32| -> Vec<u32> { (0..60).map(|i| (i * 3 + phase) % k as u32).collect() };
    let train = corpus((0..4).map(periodic).collect(), k);
    let eval = corpus(vec![periodic(5)], k);
    let tc = LmTrainConfig {
        steps: 60,
        batch_size: 4,
        seq_len: 32,
        lr: 3e-3,
        ..LmTrainConfig::default()
    };
    let a = train_lm(&train, Some(&eval), tiny(k), &tc, 3).unwrap();
    let b = train_lm(&train, Some(&eval), tiny(k), &tc, 3).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.model, b.model);
    assert!(a.final_eval().unwrap() < (k as f64).ln());
    let c = train_lm(&train, Some(&eval), tiny(k), &tc, 4).unwrap();
    assert_ne!(a.losses, c.losses);
}

#[test]
fn corpus_from_another_codec_is_rejected() {
    let k = 8;
    let other = TokenCorpus::new(vec![TokenSequence::new(vec![1, 2, 3], k, 32, 96, Digest::of(b"x")).unwrap()]).unwrap();
    let m = model(tiny(k), 0);
    assert!(matches!(bits_per_token(&m, &other), Err(Error::DigestMismatch { .. })));
    let wrong_k = corpus(vec![vec![1, 2, 3]], 9);
    assert!(bits_per_token(&m, &wrong_k).is_err());
}

fn tiny_codec() -> (soundlm::codec::Codec, Vec<Waveform>) {
    let clips: Vec<Waveform> = synth_waveforms(&SynthConfig {
        n: 4,
        duration_s: 0.25,
        ..SynthConfig::default()
    })
    .unwrap()
    .into_iter()
    .map(|c| c.waveform)
    .collect();
    let cfg = CodecConfig {
        base_channels: 4,
        residual_units: 1,
        latent_dim: 8,
        codebook_size: 16,
        ..CodecConfig::for_grid(2, 16).unwrap()
    };
    let tc = CodecTrainConfig {
        steps: 3,
        batch_size: 2,
        crop_samples: 2048,
        ..CodecTrainConfig::default()
    };
    (train_codec(&clips, &cfg, &tc, 1).unwrap().codec, clips)
}

#[test]
fn continuation_has_exact_length_and_is_reproducible() {
    let (codec, clips) = tiny_codec();
    let digest = codec.identity();
    let cfg = LmConfig {
        max_seq_len: 200,
        ..tiny(16)
    };
    let lm = LanguageModel::init(cfg, digest, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let prompt = Waveform::new(clips[0].samples()[..1600].to_vec(), 16000).unwrap();
    let params = SamplingParams {
        horizon: 40,
        ..SamplingParams::default()
    };
    let a = continue_audio(&prompt, &codec, digest, &lm, &params, 7).unwrap();
    assert_eq!(a.prompt_tokens.len(), 50);
    assert_eq!(a.waveform.len(), 40 * 32);
    assert_eq!(a.tokens.len(), 40);
    assert!(a.tokens.tokens().iter().all(|&t| t < 16));
    let b = continue_audio(&prompt, &codec, digest, &lm, &params, 7).unwrap();
    assert_eq!(a.waveform.samples(), b.waveform.samples());
    let again = codec.decode_tokens(a.tokens.tokens()).unwrap();
    assert_eq!(again.samples(), a.waveform.samples());
    let c = continue_audio(&prompt, &codec, digest, &lm, &params, 8).unwrap();
    assert_ne!(a.tokens.tokens(), c.tokens.tokens());

    let long = SamplingParams {
        horizon: 151,
        ..params.clone()
    };
    match continue_audio(&prompt, &codec, digest, &lm, &long, 7) {
        Err(Error::ContextOverflow { prompt, budget, .. }) => assert_eq!((prompt, budget), (50, 49)),
        other => panic!("expected overflow, got {other:?}"),
    }
    let fits = SamplingParams {
        horizon: 150,
        ..params.clone()
    };
    assert_eq!(continue_audio(&prompt, &codec, digest, &lm, &fits, 7).unwrap().tokens.len(), 150);
    assert!(matches!(
        continue_audio(&prompt, &codec, Digest::of(b"other"), &lm, &params, 7),
        Err(Error::DigestMismatch { .. })
    ));
}
