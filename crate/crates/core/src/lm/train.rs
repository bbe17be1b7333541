use rand::Rng;
use soundlm_tensor::{adam_step, AdamConfig, AdamState, Graph, LrSchedule};

use super::{LanguageModel, LmConfig, LmTrainConfig};
use crate::digest::Digest;
use crate::error::{invalid, Error, Result};
use crate::seed::stage_rng;
use crate::tokens::TokenSequence;

/// Token sequences produced by one tokenizer.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenCorpus {
    sequences: Vec<TokenSequence>,
}

impl TokenCorpus {
    /// Rejects an empty corpus and sequences from different tokenizers.
    pub fn new(sequences: Vec<TokenSequence>) -> Result<Self> {
        let Some(first) = sequences.first() else {
            return invalid("token corpus is empty");
        };
        for s in &sequences {
            if s.source() != first.source() {
                return Err(Error::DigestMismatch {
                    expected: first.source().hex(),
                    found: s.source().hex(),
                });
            }
            if s.vocab() != first.vocab() || s.hop() != first.hop() {
                return invalid(format!(
                    "token corpus mixes vocabularies or hops: ({}, {}) vs ({}, {})",
                    first.vocab(),
                    first.hop(),
                    s.vocab(),
                    s.hop()
                ));
            }
        }
        Ok(Self { sequences })
    }

    pub fn sequences(&self) -> &[TokenSequence] {
        &self.sequences
    }

    pub fn source(&self) -> Digest {
        self.sequences[0].source()
    }

    pub fn vocab(&self) -> usize {
        self.sequences[0].vocab()
    }

    pub fn hop(&self) -> usize {
        self.sequences[0].hop()
    }

    pub fn num_tokens(&self) -> usize {
        self.sequences.iter().map(TokenSequence::len).sum()
    }

    /// Errors unless the corpus was produced by the tokenizer `model` was trained on.
    pub fn check_model(&self, model: &LanguageModel) -> Result<()> {
        if self.source() != model.codec_digest {
            return Err(Error::DigestMismatch {
                expected: model.codec_digest.hex(),
                found: self.source().hex(),
            });
        }
        if self.vocab() != model.config.codebook_size {
            return invalid(format!(
                "corpus vocabulary {} does not match the model's codebook {}",
                self.vocab(),
                model.config.codebook_size
            ));
        }
        Ok(())
    }
}

/// Training windows of `window` tokens overlapping by half. The last window
/// of each sequence ends on its final token; shorter sequences are kept whole.
pub fn train_windows(corpus: &TokenCorpus, window: usize) -> Vec<Vec<u32>> {
    let window = window.max(1);
    let stride = window.div_ceil(2);
    let mut out = Vec::new();
    for s in corpus.sequences() {
        let t = s.tokens();
        if t.len() <= window {
            out.push(t.to_vec());
            continue;
        }
        let mut start = 0;
        loop {
            if start + window >= t.len() {
                out.push(t[t.len() - window..].to_vec());
                break;
            }
            out.push(t[start..start + window].to_vec());
            start += stride;
        }
    }
    out
}

/// Disjoint windows covering every token exactly once.
pub fn eval_windows(corpus: &TokenCorpus, window: usize) -> Vec<Vec<u32>> {
    corpus
        .sequences()
        .iter()
        .flat_map(|s| s.tokens().chunks(window.max(1)).map(<[u32]>::to_vec))
        .collect()
}

/// Summed NLL in nats and the number of scored tokens.
fn total_nll(model: &LanguageModel, windows: &[Vec<u32>]) -> Result<(f64, usize)> {
    let mut nll = 0.0;
    let mut n = 0;
    for w in windows.iter().filter(|w| !w.is_empty()) {
        nll += model.lm_loss(std::slice::from_ref(w))? * w.len() as f64;
        n += w.len();
    }
    Ok((nll, n))
}

/// Mean next-token NLL over every token in `corpus`, in nats.
pub fn corpus_loss(model: &LanguageModel, corpus: &TokenCorpus) -> Result<f64> {
    corpus.check_model(model)?;
    let (nll, n) = total_nll(model, &eval_windows(corpus, model.config.max_seq_len))?;
    Ok(nll / n as f64)
}

/// Cross-entropy in bits over the eval corpus.
pub fn bits_per_token(model: &LanguageModel, corpus: &TokenCorpus) -> Result<f64> {
    Ok(corpus_loss(model, corpus)? / std::f64::consts::LN_2)
}

#[derive(Clone, Debug)]
pub struct LmTrainResult {
    pub model: LanguageModel,
    /// Training loss per step.
    pub losses: Vec<f64>,
    /// `(step, eval loss)`; step 0 is the untrained model.
    pub eval_losses: Vec<(usize, f64)>,
}

impl LmTrainResult {
    pub fn final_eval(&self) -> Option<f64> {
        self.eval_losses.last().map(|&(_, l)| l)
    }
}

/// Trains a fresh model on `train` and scores it on `eval` when given.
pub fn train_lm(
    train: &TokenCorpus,
    eval: Option<&TokenCorpus>,
    config: LmConfig,
    tc: &LmTrainConfig,
    seed: u64,
) -> Result<LmTrainResult> {
    if tc.steps == 0 || tc.batch_size == 0 || tc.seq_len == 0 {
        return invalid("train_lm: steps, batch_size and seq_len must be positive");
    }
    if tc.seq_len > config.max_seq_len {
        return invalid(format!(
            "train_lm: seq_len {} exceeds max_seq_len {}",
            tc.seq_len, config.max_seq_len
        ));
    }
    let mut model = LanguageModel::init(config, train.source(), &mut stage_rng(seed, "lm/init"))?;
    train.check_model(&model)?;
    let evaluate = |m: &LanguageModel, windows: &[Vec<u32>]| -> Result<f64> {
        let (nll, n) = total_nll(m, windows)?;
        Ok(nll / n as f64)
    };
    let eval_set = match eval {
        Some(c) => {
            c.check_model(&model)?;
            Some(eval_windows(c, tc.seq_len))
        }
        None => None,
    };
    let windows = train_windows(train, tc.seq_len);
    let schedule = match tc.warmup {
        Some(w) => LrSchedule::InverseSqrt { warmup: w },
        None => LrSchedule::Constant,
    };
    let mut adam = AdamState::new(
        &model.params,
        AdamConfig {
            lr: tc.lr,
            ..AdamConfig::default()
        },
    );
    let mut batch_rng = stage_rng(seed, "lm/batches");
    let mut drop_rng = stage_rng(seed, "lm/dropout");
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut losses = Vec::with_capacity(tc.steps);
    let mut eval_losses = Vec::new();
    if let Some(w) = &eval_set {
        eval_losses.push((0, evaluate(&model, w)?));
    }

    for step in 1..=tc.steps {
        let mut batch = Vec::with_capacity(tc.batch_size);
        for _ in 0..tc.batch_size {
            if cursor == order.len() {
                order = (0..windows.len()).collect();
                for i in (1..order.len()).rev() {
                    order.swap(i, batch_rng.random_range(0..=i));
                }
                cursor = 0;
            }
            batch.push(windows[order[cursor]].clone());
            cursor += 1;
        }
        let (inputs, targets) = model.pack(&batch)?;
        let mut g = Graph::new();
        let p = model.params.bind(&mut g);
        let loss = model.loss_graph(&mut g, &p, &inputs, &targets, Some(&mut drop_rng))?;
        let value = g.item(loss) as f64;
        if !value.is_finite() {
            return Err(Error::Invalid(format!("train_lm: loss is not finite at step {step}")));
        }
        g.backward(loss)?;
        model.params.collect_grads(&g, &p)?;
        drop(g);
        adam.lr = schedule.lr_at(tc.lr, step as u64);
        adam_step(&mut model.params, &mut adam)?;
        model.step += 1;
        losses.push(value);
        if let Some(w) = &eval_set {
            if step == tc.steps || (tc.eval_every > 0 && step % tc.eval_every == 0) {
                eval_losses.push((step, evaluate(&model, w)?));
            }
        }
    }
    Ok(LmTrainResult {
        model,
        losses,
        eval_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tokens: Vec<u32>, src: &[u8]) -> TokenSequence {
        let n = tokens.len();
        TokenSequence::new(tokens, 16, 4, n * 4, Digest::of(src)).unwrap()
    }

    #[test]
    fn windows_cover_with_half_overlap() {
        let c = TokenCorpus::new(vec![seq((0..10).collect(), b"a"), seq(vec![1, 2], b"a")]).unwrap();
        let w = train_windows(&c, 4);
        let starts: Vec<u32> = w.iter().map(|w| w[0]).collect();
        assert_eq!(starts, vec![0, 2, 4, 6, 1]);
        assert_eq!(w[3], vec![6, 7, 8, 9]);
        let e = eval_windows(&c, 4);
        assert_eq!(e.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2, 2]);
        assert_eq!(e.concat().len(), c.num_tokens());
    }

    #[test]
    fn corpus_rejects_mixed_sources() {
        let r = TokenCorpus::new(vec![seq(vec![1], b"a"), seq(vec![1], b"b")]);
        assert!(matches!(r, Err(Error::DigestMismatch { .. })));
        assert!(TokenCorpus::new(vec![]).is_err());
    }
}
