use serde::{Deserialize, Serialize};

use super::{sample_next, KvCache, LanguageModel};
use crate::codec::Codec;
use crate::digest::Digest;
use crate::dsp::Waveform;
use crate::error::{invalid, Error, Result};
use crate::seed::stage_rng;
use crate::tokens::TokenSequence;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingParams {
    pub temperature: f64,
    /// Values above K keep every codec token.
    pub top_k: usize,
    /// Tokens to generate after the prompt.
    pub horizon: usize,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_k: 64,
            horizon: 250,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Continuation {
    /// Decoded continuation only, `horizon · hop` samples.
    pub waveform: Waveform,
    pub tokens: TokenSequence,
    pub prompt_tokens: TokenSequence,
}

/// Encodes `prompt`, samples `horizon` tokens after it and decodes them.
/// `codec_digest` identifies `codec`; it must be the one `lm` was trained on.
pub fn continue_audio(
    prompt: &Waveform,
    codec: &Codec,
    codec_digest: Digest,
    lm: &LanguageModel,
    params: &SamplingParams,
    seed: u64,
) -> Result<Continuation> {
    if lm.codec_digest != codec_digest {
        return Err(Error::DigestMismatch {
            expected: lm.codec_digest.hex(),
            found: codec_digest.hex(),
        });
    }
    if lm.config.codebook_size != codec.config.codebook_size {
        return invalid(format!(
            "lm codebook {} does not match codec codebook {}",
            lm.config.codebook_size, codec.config.codebook_size
        ));
    }
    if prompt.sample_rate() != codec.config.sample_rate {
        return invalid(format!(
            "prompt is {} Hz, codec expects {} Hz",
            prompt.sample_rate(),
            codec.config.sample_rate
        ));
    }
    if params.horizon == 0 {
        return invalid("horizon must be at least one token");
    }
    let prompt_tokens = codec.tokenize(prompt, codec_digest)?;
    let max = lm.config.max_seq_len;
    let p = prompt_tokens.len();
    if p + params.horizon > max {
        return Err(Error::ContextOverflow {
            prompt: p,
            horizon: params.horizon,
            max_seq_len: max,
            budget: max.saturating_sub(params.horizon),
        });
    }

    let mut rng = stage_rng(seed, "lm/sample");
    let bos = lm.config.bos();
    let mut cache = KvCache::new(lm);
    let mut logits = cache.step(lm, bos)?;
    for &t in prompt_tokens.tokens() {
        logits = cache.step(lm, t as usize)?;
    }
    let top_k = params.top_k.min(lm.config.codebook_size);
    let mut out = Vec::with_capacity(params.horizon);
    for i in 0..params.horizon {
        let next = sample_next(&logits, params.temperature, top_k, Some(bos), &mut rng)?;
        out.push(next as u32);
        if i + 1 < params.horizon {
            logits = cache.step(lm, next)?;
        }
    }
    let waveform = codec.decode_tokens(&out)?;
    let hop = codec.hop();
    let tokens = TokenSequence::new(out, codec.config.codebook_size, hop, params.horizon * hop, codec_digest)?;
    Ok(Continuation {
        waveform,
        tokens,
        prompt_tokens,
    })
}
