//! TOML run configuration: every section is optional and filled from
//! defaults, unknown keys are rejected, and all violations are reported at once.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use soundlm::codec::{CodecConfig, CodecTrainConfig, PAPER_GRID_K, PAPER_GRID_R_MS};
use soundlm::dsp::synth::SynthConfig;
use soundlm::eval::AblationConfig;
use soundlm::lm::{LmConfig, LmTrainConfig, SamplingParams};
use soundlm::Digest;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub n: usize,
    pub duration_s: f64,
    pub eval_fraction: f64,
    /// Existing manifest to train from instead of the synthetic set.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            n: s.n,
            duration_s: s.duration_s,
            eval_fraction: s.eval_fraction,
            manifest: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub r_ms: Vec<usize>,
    pub k: Vec<usize>,
    /// Synthetic clips generated for the grid; a fifth are held out.
    pub clips: usize,
    pub train_lm: bool,
    pub codec: CodecConfig,
    pub codec_train: CodecTrainConfig,
}

impl Default for EvalSection {
    fn default() -> Self {
        let a = AblationConfig::desk();
        Self {
            r_ms: a.r_ms,
            k: a.k,
            clips: a.data.n,
            train_lm: false,
            codec: a.codec,
            codec_train: a.codec_train,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetSection,
    pub codec: CodecConfig,
    pub codec_train: CodecTrainConfig,
    pub lm: LmConfig,
    pub lm_train: LmTrainConfig,
    pub sampling: SamplingParams,
    pub eval: EvalSection,
}

#[derive(Debug, Default)]
pub struct Validated {
    pub config: Option<RunConfig>,
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "table",
    }
}

/// Overlays `given` on `default`, naming every unknown key and type clash.
fn overlay(default: &mut Value, given: Value, path: &str, errs: &mut Vec<String>) {
    let (Value::Object(d), Value::Object(g)) = (&mut *default, &given) else {
        *default = given;
        return;
    };
    for (key, v) in g {
        let at = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
        match d.get_mut(key) {
            None => errs.push(format!("{at}: unknown key")),
            Some(slot @ Value::Object(_)) if v.is_object() => overlay(slot, v.clone(), &at, errs),
            Some(slot) if slot.is_null() || kind(slot) == kind(v) => *slot = v.clone(),
            Some(slot) => errs.push(format!("{at}: expected {}, found {}", kind(slot), kind(v))),
        }
    }
}

fn section<T: Serialize + DeserializeOwned>(default: T, given: Option<Value>, path: &str, errs: &mut Vec<String>) -> T {
    let Some(given) = given else {
        return default;
    };
    if !given.is_object() {
        errs.push(format!("{path}: expected table, found {}", kind(&given)));
        return default;
    }
    let mut merged = serde_json::to_value(&default).expect("defaults serialize");
    let before = errs.len();
    overlay(&mut merged, given, path, errs);
    if errs.len() > before {
        return default;
    }
    match serde_json::from_value(merged) {
        Ok(v) => v,
        Err(e) => {
            errs.push(format!("{path}: {e}"));
            default
        }
    }
}

/// `r_ms = 2 | 4 | 8` is shorthand for the matching stride plan.
fn codec_section(given: Option<Value>, default: CodecConfig, path: &str, errs: &mut Vec<String>) -> CodecConfig {
    let mut given = given;
    let mut strides = None;
    if let Some(Value::Object(t)) = &mut given {
        if let Some(r) = t.remove("r_ms") {
            if t.contains_key("stride_factors") {
                errs.push(format!("{path}: give r_ms or stride_factors, not both"));
            }
            match r.as_u64().map(|r| CodecConfig::strides_for_ms(r as usize)) {
                Some(Ok(s)) => strides = Some(s),
                Some(Err(e)) => errs.push(format!("{path}.r_ms: {e}")),
                None => errs.push(format!("{path}.r_ms: expected integer milliseconds")),
            }
        }
    }
    let mut cfg = section(default, given, path, errs);
    if let Some(s) = strides {
        cfg.stride_factors = s;
    }
    if let Err(e) = cfg.validate() {
        errs.push(format!("{path}: {e}"));
    }
    cfg
}

fn grid_warning(path: &str, k: usize, warnings: &mut Vec<String>) {
    if !PAPER_GRID_K.contains(&k) {
        warnings.push(format!("{path}: K outside paper grid {{512,1024,2048}}"));
    }
}

pub fn validate_str(text: &str, base: &Path) -> Validated {
    let mut out = Validated::default();
    let errs = &mut out.errors;
    let root: Value = match toml::from_str::<toml::Table>(text) {
        Ok(t) => serde_json::to_value(t).expect("toml converts to json"),
        Err(e) => {
            errs.push(format!("config: {}", e.message()));
            return out;
        }
    };
    let Value::Object(mut root) = root else { unreachable!("a TOML document is a table") };
    let seed = match root.remove("seed") {
        None => {
            errs.push("seed: required".to_string());
            0
        }
        Some(v) => v.as_u64().unwrap_or_else(|| {
            errs.push("seed: expected a nonnegative integer".to_string());
            0
        }),
    };
    let output_dir = match root.remove("output_dir") {
        None => None,
        Some(Value::String(s)) => Some(base.join(s)),
        Some(v) => {
            errs.push(format!("output_dir: expected string, found {}", kind(&v)));
            None
        }
    };
    let mut take = |k: &str| root.remove(k);
    let mut dataset: DatasetSection = section(DatasetSection::default(), take("dataset"), "dataset", errs);
    let codec = codec_section(take("codec"), CodecConfig::default(), "codec", errs);
    let codec_train = section(CodecTrainConfig::default(), take("codec_train"), "codec_train", errs);
    let lm = section(LmConfig::desk(codec.codebook_size), take("lm"), "lm", errs);
    let lm_train = section(LmTrainConfig::default(), take("lm_train"), "lm_train", errs);
    let sampling = section(SamplingParams::default(), take("sampling"), "sampling", errs);
    let mut eval_given = take("eval");
    let eval_codec = match &mut eval_given {
        Some(Value::Object(t)) => t.remove("codec"),
        _ => None,
    };
    let mut eval: EvalSection = section(EvalSection::default(), eval_given, "eval", errs);
    eval.codec = codec_section(eval_codec, EvalSection::default().codec, "eval.codec", errs);
    for key in root.keys() {
        errs.push(format!("{key}: unknown key"));
    }

    if let Err(e) = lm.validate() {
        errs.push(format!("lm: {e}"));
    }
    if lm_train.seq_len > lm.max_seq_len {
        errs.push(format!(
            "lm_train.seq_len: {} exceeds lm.max_seq_len {}",
            lm_train.seq_len, lm.max_seq_len
        ));
    }
    if sampling.top_k == 0 {
        errs.push("sampling.top_k: must be at least 1".to_string());
    }
    if !(sampling.temperature >= 0.0) {
        errs.push("sampling.temperature: must be ≥ 0".to_string());
    }
    if sampling.horizon == 0 {
        errs.push("sampling.horizon: must be at least 1".to_string());
    }
    if let Some(m) = &mut dataset.manifest {
        *m = base.join(&*m);
        if !m.is_file() {
            errs.push(format!("dataset.manifest: {} does not exist", m.display()));
        }
    }
    for &r in &eval.r_ms {
        if !PAPER_GRID_R_MS.contains(&r) {
            errs.push(format!("eval.r_ms: no stride plan for {r} ms (grid is 2, 4, 8)"));
        }
    }
    if eval.r_ms.is_empty() || eval.k.is_empty() {
        errs.push("eval: r_ms and k must be nonempty".to_string());
    }
    grid_warning("codec.codebook_size", codec.codebook_size, &mut out.warnings);
    for &k in &eval.k {
        grid_warning("eval.k", k, &mut out.warnings);
    }
    if out.errors.is_empty() {
        out.config = Some(RunConfig {
            seed,
            output_dir,
            dataset,
            codec,
            codec_train,
            lm,
            lm_train,
            sampling,
            eval,
        });
    }
    out
}

pub fn validate_file(path: &Path) -> Result<Validated, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(validate_str(&text, path.parent().unwrap_or(Path::new("."))))
}

impl RunConfig {
    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            n: self.dataset.n,
            seed: self.seed,
            duration_s: self.dataset.duration_s,
            eval_fraction: self.dataset.eval_fraction,
            ..SynthConfig::default()
        }
    }

    pub fn ablation(&self) -> AblationConfig {
        AblationConfig {
            r_ms: self.eval.r_ms.clone(),
            k: self.eval.k.clone(),
            codec: self.eval.codec.clone(),
            codec_train: self.eval.codec_train.clone(),
            data: SynthConfig {
                n: self.eval.clips,
                seed: self.seed,
                ..SynthConfig::default()
            },
            lm: self.eval.train_lm.then(|| (self.lm.clone(), self.lm_train.clone())),
            seed: self.seed,
        }
    }

    /// Defaults filled in, as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn digest(&self) -> Digest {
        Digest::of(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
