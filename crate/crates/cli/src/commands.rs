use std::path::{Path, PathBuf};

use serde_json::json;
use soundlm::baseline::{BaselineTokenizer, FeatureConfig, BASELINE_MAGIC};
use soundlm::codec::{train_codec, Codec, CODEC_MAGIC, PAPER_GRID_K, PAPER_GRID_R_MS};
use soundlm::container::token_file;
use soundlm::dsp::manifest::{DatasetManifest, ManifestEntry, Split};
use soundlm::dsp::synth::synth_dataset;
use soundlm::dsp::{read_wav, write_wav, Waveform};
use soundlm::eval::{assemble_cmos_clip, reconstruction_snr, run_ablation, trend_violations, SnrStats};
use soundlm::lm::{bits_per_token, continue_audio, train_lm, LanguageModel, LmConfig, TokenCorpus};
use soundlm::{Digest, TokenSequence};

use crate::config::{validate_file, RunConfig};
use crate::output::{resolve_out, Session};
use crate::{Command, Common, Failure, GridArg, SplitArg};

type Res<T> = std::result::Result<T, Failure>;

fn load_config(path: &Path) -> Res<RunConfig> {
    let v = validate_file(path).map_err(Failure::Config)?;
    for w in &v.warnings {
        eprintln!("warning: {w}");
    }
    match v.config {
        Some(c) => Ok(c),
        None => Err(Failure::Config(v.errors.join("; "))),
    }
}

fn session(name: &'static str, common: &Common, config: Option<&RunConfig>, argv: &[String]) -> Res<Session> {
    let dir = resolve_out(common.out.as_deref(), config.and_then(|c| c.output_dir.as_deref()));
    let mut s = Session::new(name, dir, common.force, argv)?;
    if let Some(c) = config {
        s.config_digest = Some(c.digest());
        s.seed = Some(c.seed);
    }
    Ok(s)
}

fn stage<T>(name: &'static str, r: soundlm::Result<T>) -> Res<T> {
    r.map_err(|e| Failure::runtime(name, e))
}

fn load_manifest(s: &mut Session, path: &Path) -> Res<DatasetManifest> {
    s.input(path)?;
    stage("manifest", DatasetManifest::load(path))
}

fn split_entries(m: &DatasetManifest, split: SplitArg) -> Vec<&ManifestEntry> {
    match split {
        SplitArg::Train => m.split(Split::Train).collect(),
        SplitArg::Eval => m.split(Split::Eval).collect(),
        SplitArg::All => m.entries().iter().collect(),
    }
}

fn split_name(split: SplitArg) -> &'static str {
    match split {
        SplitArg::Train => "train",
        SplitArg::Eval => "eval",
        SplitArg::All => "all",
    }
}

fn read_wave(s: &mut Session, path: &Path) -> Res<Waveform> {
    s.input(path)?;
    stage("audio", read_wav(path))
}

fn write_wave(s: &mut Session, path: &Path, w: &Waveform) -> Res<()> {
    stage("io", write_wav(path, w))?;
    s.output(path)
}

fn write_tokens(s: &mut Session, path: &Path, seq: &TokenSequence) -> Res<()> {
    stage("io", token_file::write(path, seq))?;
    s.output(path)
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

enum Tokenizer {
    Codec(Box<Codec>),
    Baseline(Box<BaselineTokenizer>),
}

impl Tokenizer {
    fn load(path: &Path) -> Res<(Self, Digest)> {
        let bytes = std::fs::read(path).map_err(|e| Failure::runtime("io", format!("{}: {e}", path.display())))?;
        let magic = bytes.get(..4).unwrap_or_default();
        if magic == CODEC_MAGIC {
            let (c, d) = stage("codec", Codec::load(path))?;
            Ok((Tokenizer::Codec(Box::new(c)), d))
        } else if magic == BASELINE_MAGIC {
            let (b, d) = stage("baseline", BaselineTokenizer::load(path))?;
            Ok((Tokenizer::Baseline(Box::new(b)), d))
        } else {
            Err(Failure::Config(format!(
                "{}: not a codec or baseline checkpoint",
                path.display()
            )))
        }
    }

    fn tokenize(&self, w: &Waveform, source: Digest) -> Res<TokenSequence> {
        match self {
            Tokenizer::Codec(c) => stage("tokenize", c.tokenize(w, source)),
            Tokenizer::Baseline(b) => stage("tokenize", b.tokenize(w, source)),
        }
    }
}

fn read_token_dir(dir: &Path) -> Res<TokenCorpus> {
    let rd = std::fs::read_dir(dir).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tok"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Config(format!("{}: no .tok files", dir.display())));
    }
    let seqs = paths
        .iter()
        .map(|p| token_file::read(p).map_err(|e| Failure::runtime("tokens", format!("{}: {e}", p.display()))))
        .collect::<Res<Vec<_>>>()?;
    stage("tokens", TokenCorpus::new(seqs))
}

pub fn run(cmd: Command, common: &Common, argv: &[String]) -> Res<()> {
    match cmd {
        Command::SynthData { config, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let mut s = session("synth-data", common, Some(&cfg), argv)?;
            s.input(&config)?;
            s.claim(&["manifest.jsonl", "clips"])?;
            let m = stage("synth", synth_dataset(&cfg.synth(), &s.dir))?;
            for e in m.entries() {
                s.output(&m.resolve(e))?;
            }
            s.output(&s.dir.join("manifest.jsonl"))?;
            let eval = m.split(Split::Eval).count();
            println!("wrote {} clips ({} train, {eval} eval) to {}", m.len(), m.len() - eval, s.dir.display());
            s.finish()
        }

        Command::TrainCodec { config, manifest, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let manifest = manifest.or(cfg.dataset.manifest.clone()).ok_or_else(|| {
                Failure::Config("train-codec: pass --manifest or set dataset.manifest".to_string())
            })?;
            let mut s = session("train-codec", common, Some(&cfg), argv)?;
            s.input(&config)?;
            let paths = s.claim(&["codec.slmc", "codec_log.jsonl"])?;
            let m = load_manifest(&mut s, &manifest)?;
            let clips = stage("manifest", m.load_split(Split::Train))?;
            let r = stage("train-codec", train_codec(&clips, &cfg.codec, &cfg.codec_train, cfg.seed))?;
            let log: String = r
                .log
                .iter()
                .map(|l| {
                    json!({
                        "step": l.step,
                        "total": l.loss.total,
                        "l1": l.loss.l1,
                        "spectral_convergence": l.loss.spectral_convergence,
                        "log_magnitude": l.loss.log_magnitude,
                        "commit": l.loss.commit,
                        "codes_used": l.codes_used,
                        "codes_reset": l.codes_reset,
                    })
                    .to_string()
                        + "\n"
                })
                .collect();
            s.write_text(&paths[1], &log)?;
            if let Some(why) = r.aborted {
                s.finish()?;
                return Err(Failure::runtime("train-codec", format!("training aborted: {why}")));
            }
            let digest = stage("io", r.codec.save(&paths[0]))?;
            s.output(&paths[0])?;
            println!(
                "codec {} loss {:.4} -> {:.4} utilization {:.3}",
                digest.short(),
                r.smoothed_initial,
                r.smoothed_final,
                r.utilization
            );
            s.finish()
        }

        Command::FitBaseline {
            manifest,
            hop,
            k,
            iters,
            seed,
        } => {
            let mut s = session("fit-baseline", common, None, argv)?;
            s.seed = Some(seed);
            let paths = s.claim(&["baseline.slmk"])?;
            let m = load_manifest(&mut s, &manifest)?;
            let clips = stage("manifest", m.load_split(Split::Train))?;
            let t = stage("fit-baseline", BaselineTokenizer::fit(&clips, FeatureConfig::at_hop(hop), k, iters, seed))?;
            let digest = stage("io", t.save(&paths[0]))?;
            s.output(&paths[0])?;
            let inertia = t.kmeans.inertia_history.last().copied().unwrap_or(f64::NAN);
            println!("baseline {} K={k} hop={hop} inertia {inertia:.4}", digest.short());
            s.finish()
        }

        Command::Tokenize {
            tokenizer,
            input,
            manifest,
            split,
        } => {
            let mut s = session("tokenize", common, None, argv)?;
            s.input(&tokenizer)?;
            let (tok, digest) = Tokenizer::load(&tokenizer)?;
            let jobs: Vec<(PathBuf, PathBuf)> = match (input, manifest) {
                (Some(inp), _) => {
                    let stem = inp.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or("clip".into());
                    s.set_record_name(format!("tokenize-{stem}"));
                    let p = s.claim(&[&format!("{stem}.tok")])?;
                    vec![(inp, p[0].clone())]
                }
                (None, Some(mp)) => {
                    let m = load_manifest(&mut s, &mp)?;
                    let sub = format!("tokens-{}", split_name(split));
                    s.set_record_name(format!("tokenize-{}", split_name(split)));
                    let entries = split_entries(&m, split);
                    if entries.is_empty() {
                        return Err(Failure::Config(format!("{}: split is empty", mp.display())));
                    }
                    let names: Vec<String> = entries.iter().map(|e| format!("{sub}/{}.tok", e.id)).collect();
                    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                    let outs = s.claim(&refs)?;
                    let dir = s.dir.join(&sub);
                    std::fs::create_dir_all(&dir).map_err(|e| Failure::runtime("io", e))?;
                    entries.iter().map(|e| m.resolve(e)).zip(outs).collect()
                }
                (None, None) => unreachable!("clap requires --in or --manifest"),
            };
            let mut total = 0;
            for (wav, out) in &jobs {
                let w = read_wave(&mut s, wav)?;
                let seq = tok.tokenize(&w, digest)?;
                total += seq.len();
                write_tokens(&mut s, out, &seq)?;
            }
            println!("wrote {} token files ({total} tokens) with tokenizer {}", jobs.len(), digest.short());
            s.finish()
        }

        Command::TrainLm {
            config,
            tokens,
            eval_tokens,
            seed,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let mut s = session("train-lm", common, Some(&cfg), argv)?;
            s.input(&config)?;
            let paths = s.claim(&["lm.slml", "lm_log.json"])?;
            let train = read_token_dir(&tokens)?;
            let eval = eval_tokens.as_deref().map(read_token_dir).transpose()?;
            if train.vocab() != cfg.lm.codebook_size {
                eprintln!(
                    "warning: lm.codebook_size {} replaced by the token vocabulary {}",
                    cfg.lm.codebook_size,
                    train.vocab()
                );
            }
            let lm_cfg = LmConfig {
                codebook_size: train.vocab(),
                ..cfg.lm.clone()
            };
            let r = stage("train-lm", train_lm(&train, eval.as_ref(), lm_cfg, &cfg.lm_train, cfg.seed))?;
            let log = json!({
                "losses": r.losses,
                "eval_losses": r.eval_losses,
                "train_bits_per_token": stage("eval", bits_per_token(&r.model, &train))?,
            });
            s.write_text(&paths[1], &pretty(&log))?;
            let digest = stage("io", r.model.save(&paths[0]))?;
            s.output(&paths[0])?;
            let last = r.losses.last().copied().unwrap_or(f64::NAN);
            match r.final_eval() {
                Some(e) => println!(
                    "lm {} train loss {last:.4} eval loss {e:.4} ({:.4} bits/token)",
                    digest.short(),
                    e / std::f64::consts::LN_2
                ),
                None => println!("lm {} train loss {last:.4}", digest.short()),
            }
            s.finish()
        }

        Command::Continue {
            codec,
            lm,
            prompt,
            horizon_tokens,
            seed,
            temperature,
            top_k,
            config,
        } => {
            let cfg = config.as_deref().map(load_config).transpose()?;
            let mut params = cfg.as_ref().map(|c| c.sampling.clone()).unwrap_or_default();
            if let Some(h) = horizon_tokens {
                params.horizon = h;
            }
            if let Some(t) = temperature {
                params.temperature = t;
            }
            if let Some(k) = top_k {
                params.top_k = k;
            }
            if params.horizon == 0 || params.top_k == 0 || !(params.temperature >= 0.0) {
                return Err(Failure::Config(
                    "continue: horizon and top-k must be ≥ 1 and temperature ≥ 0".to_string(),
                ));
            }
            let mut s = session("continue", common, cfg.as_ref(), argv)?;
            s.seed = Some(seed);
            let paths = s.claim(&["continuation.wav", "continuation.tok", "cmos.wav"])?;
            s.input(&codec)?;
            s.input(&lm)?;
            let (codec_m, codec_d) = stage("codec", Codec::load(&codec))?;
            let (lm_m, _) = stage("lm", LanguageModel::load(&lm))?;
            let w = read_wave(&mut s, &prompt)?;
            let c = stage("continue", continue_audio(&w, &codec_m, codec_d, &lm_m, &params, seed))?;
            write_wave(&mut s, &paths[0], &c.waveform)?;
            write_tokens(&mut s, &paths[1], &c.tokens)?;
            let cmos = stage("cmos", assemble_cmos_clip(&w, &c.waveform))?;
            write_wave(&mut s, &paths[2], &cmos)?;
            println!(
                "prompt {} tokens, generated {} tokens ({:.2} s)",
                c.prompt_tokens.len(),
                c.tokens.len(),
                c.waveform.duration_s()
            );
            s.finish()
        }

        Command::EvalSnr { codec, manifest, split } => {
            let mut s = session("eval-snr", common, None, argv)?;
            let name = format!("snr-{}.json", split_name(split));
            s.set_record_name(format!("eval-snr-{}", split_name(split)));
            let paths = s.claim(&[&name])?;
            s.input(&codec)?;
            let (c, digest) = stage("codec", Codec::load(&codec))?;
            let m = load_manifest(&mut s, &manifest)?;
            let entries = split_entries(&m, split);
            let mut rows = Vec::new();
            let mut values = Vec::new();
            for e in entries {
                let w = stage("audio", read_wav(m.resolve(e)))?;
                let snr = stage("eval-snr", c.reconstruct(&w).and_then(|r| reconstruction_snr(&w, &r)))?;
                rows.push(json!({"id": e.id, "snr_db": snr}));
                values.push(snr);
            }
            let stats = stage("eval-snr", SnrStats::from_values(values))?;
            let report = json!({
                "codec": digest.hex(),
                "split": split_name(split),
                "clips": rows,
                "mean_db": stats.mean,
                "std_db": stats.std,
            });
            s.write_text(&paths[0], &pretty(&report))?;
            println!("SNR {:.2} ± {:.2} dB over {} clips", stats.mean, stats.std, stats.per_clip.len());
            s.finish()
        }

        Command::Ablate { config, grid, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let mut s = session("ablate", common, Some(&cfg), argv)?;
            s.input(&config)?;
            let paths = s.claim(&["ablation.json", "ablation.txt"])?;
            let mut ab = cfg.ablation();
            if let GridArg::Full = grid {
                ab.r_ms = PAPER_GRID_R_MS.to_vec();
                ab.k = PAPER_GRID_K.to_vec();
            }
            let report = stage(
                "ablate",
                run_ablation(&ab, |c| match (&c.error, c.snr_db_mean) {
                    (Some(e), _) => eprintln!("R={}ms K={}: failed: {e}", c.r_ms, c.k),
                    (None, Some(snr)) => eprintln!("R={}ms K={}: SNR {snr:.2} dB", c.r_ms, c.k),
                    (None, None) => {}
                }),
            )?;
            let table = report.render_table();
            s.write_text(&paths[0], &(report.to_json() + "\n"))?;
            s.write_text(&paths[1], &table)?;
            print!("{table}");
            for v in trend_violations(&report, 0.5) {
                eprintln!("warning: trend: {v}");
            }
            s.finish()
        }

        Command::PackCmos { prompt, continuation } => {
            let mut s = session("pack-cmos", common, None, argv)?;
            let paths = s.claim(&["cmos.wav"])?;
            let p = read_wave(&mut s, &prompt)?;
            let c = read_wave(&mut s, &continuation)?;
            let clip = stage("cmos", assemble_cmos_clip(&p, &c))?;
            write_wave(&mut s, &paths[0], &clip)?;
            println!("wrote {} ({:.2} s)", paths[0].display(), clip.duration_s());
            s.finish()
        }

        Command::ValidateConfig { config } => {
            let v = validate_file(&config).map_err(Failure::Config)?;
            for w in &v.warnings {
                eprintln!("warning: {w}");
            }
            match v.config {
                Some(c) => {
                    print!("{}", c.to_toml());
                    Ok(())
                }
                None => {
                    for e in &v.errors {
                        eprintln!("{e}");
                    }
                    Err(Failure::Config(format!("{} violation(s) in {}", v.errors.len(), config.display())))
                }
            }
        }
    }
}
