use std::path::Path;
use std::process::{Command, Output};

fn soundlm(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_soundlm"));
    c.args(args).env_remove("SOUNDLM_OUT");
    if let Some(d) = env_out {
        c.env("SOUNDLM_OUT", d);
    }
    c.output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = "seed = 1\n[dataset]\nn = 4\nduration_s = 0.25\neval_fraction = 0.25\n";

#[test]
fn bad_config_exits_two_with_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[lm]\nnum_heads = 3\nbogus = 1\n[codec]\nr_ms = 5\n").unwrap();
    let o = soundlm(&["validate-config", "--config", p(&cfg)], None);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for needle in ["seed: required", "lm.bogus", "r_ms"] {
        assert!(err.contains(needle), "missing {needle:?} in {err}");
    }
    let o = soundlm(&["synth-data", "--config", p(&cfg), "--out", p(dir.path())], None);
    assert_eq!(o.status.code(), Some(2));
    let last = stderr(&o);
    assert!(last.starts_with("error: config:") && last.trim_end().lines().count() == 1, "{last}");
}

#[test]
fn validate_config_echoes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ok.toml");
    std::fs::write(&cfg, "seed = 4\n[codec]\ncodebook_size = 300\n").unwrap();
    let o = soundlm(&["validate-config", "--config", p(&cfg)], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let echoed = String::from_utf8(o.stdout.clone()).unwrap();
    assert!(echoed.contains("seed = 4") && echoed.contains("[lm_train]"));
    assert!(stderr(&o).contains("K outside paper grid"));
    let again = dir.path().join("echo.toml");
    std::fs::write(&again, &echoed).unwrap();
    let o2 = soundlm(&["validate-config", "--config", p(&again)], None);
    assert_eq!(String::from_utf8(o2.stdout).unwrap(), echoed);
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("data");
    let args = ["synth-data", "--config", p(&cfg), "--out", p(&out)];
    assert!(soundlm(&args, None).status.success());
    let first = std::fs::read(out.join("manifest.jsonl")).unwrap();
    let o = soundlm(&args, None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert!(soundlm(&forced, None).status.success());
    assert_eq!(std::fs::read(out.join("manifest.jsonl")).unwrap(), first);
    let repro: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("synth-data.repro.json")).unwrap()).unwrap();
    assert_eq!(repro["seed"], 1);
    assert!(repro["config_digest"].as_str().unwrap().len() == 64);
    assert!(repro["outputs"].as_object().unwrap().len() == 5);
}

#[test]
fn output_dir_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let env_dir = dir.path().join("from-env");
    assert!(soundlm(&["synth-data", "--config", p(&cfg)], Some(&env_dir)).status.success());
    assert!(env_dir.join("manifest.jsonl").is_file());
    let cfg2 = dir.path().join("run2.toml");
    std::fs::write(&cfg2, format!("output_dir = \"cfg-out\"\n{SMALL}")).unwrap();
    assert!(soundlm(&["synth-data", "--config", p(&cfg2)], Some(&env_dir.join("unused"))).status.success());
    assert!(dir.path().join("cfg-out/manifest.jsonl").is_file());
}

#[test]
fn pack_cmos_and_baseline_tokenize() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let data = dir.path().join("data");
    assert!(soundlm(&["synth-data", "--config", p(&cfg), "--out", p(&data)], None).status.success());
    let clip = data.join("clips");
    let wavs: Vec<_> = {
        let mut v: Vec<_> = std::fs::read_dir(&clip).unwrap().map(|e| e.unwrap().path()).collect();
        v.sort();
        v
    };
    let out = dir.path().join("cmos");
    let o = soundlm(&["pack-cmos", "--prompt", p(&wavs[0]), "--continuation", p(&wavs[1]), "--out", p(&out)], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let packed = soundlm::dsp::read_wav(out.join("cmos.wav")).unwrap();
    assert_eq!(packed.len(), 4000 + 4800 + 4000);

    let km = dir.path().join("km");
    let man = data.join("manifest.jsonl");
    let o = soundlm(
        &["fit-baseline", "--manifest", p(&man), "--hop", "160", "--k", "8", "--seed", "2", "--out", p(&km)],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = soundlm(&["tokenize", "--tokenizer", p(&km.join("baseline.slmk")), "--in", p(&wavs[0]), "--out", p(&km)], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let stem = wavs[0].file_stem().unwrap().to_str().unwrap();
    let seq = soundlm::container::token_file::read(&km.join(format!("{stem}.tok"))).unwrap();
    assert_eq!((seq.len(), seq.vocab(), seq.hop()), (25, 8, 160));

    let o = soundlm(&["tokenize", "--tokenizer", p(&man), "--in", p(&wavs[0]), "--out", p(&km)], None);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn missing_inputs_are_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = soundlm(
        &["eval-snr", "--codec", "/nonexistent.slmc", "--manifest", "/nonexistent.jsonl", "--out", p(dir.path())],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: "));
}
