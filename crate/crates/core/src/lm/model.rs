use rand::Rng;
use rand_distr::StandardNormal;
use soundlm_tensor::{Bound, Graph, ParamId, ParamSet, Tensor, Var};

use super::LmConfig;
use crate::digest::Digest;
use crate::error::{invalid, Result};

/// Target marker for padded positions.
pub const IGNORE: Option<usize> = None;

pub(crate) const LN_EPS: f32 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LayerIds {
    pub ln1: (ParamId, ParamId),
    pub wq: (ParamId, ParamId),
    pub wk: (ParamId, ParamId),
    pub wv: (ParamId, ParamId),
    pub wo: (ParamId, ParamId),
    pub ln2: (ParamId, ParamId),
    pub ff1: (ParamId, ParamId),
    pub ff2: (ParamId, ParamId),
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Ids {
    pub tok: ParamId,
    pub pos: ParamId,
    pub layers: Vec<LayerIds>,
    pub lnf: (ParamId, ParamId),
    pub head: (ParamId, ParamId),
}

/// Decoder-only transformer plus the identity of the codec whose tokens it models.
#[derive(Clone, Debug, PartialEq)]
pub struct LanguageModel {
    pub config: LmConfig,
    pub params: ParamSet,
    pub codec_digest: Digest,
    pub step: u64,
    pub(crate) ids: Ids,
}

fn lookup(params: &ParamSet, name: &str) -> ParamId {
    params.find(name).expect("parameter created from the same shape list")
}

impl LanguageModel {
    /// Normal(0, 0.02) weights, unit LayerNorm gains, zero biases.
    pub fn init(config: LmConfig, codec_digest: Digest, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        for (name, shape) in config.param_shapes() {
            let t = if name.ends_with(".g") {
                Tensor::from_fn(shape, |_| 1.0)
            } else if shape.len() == 1 || (config.zero_init_head && name == "head") {
                Tensor::zeros(shape)
            } else {
                Tensor::from_fn(shape, |_| 0.02 * rng.sample::<f32, _>(StandardNormal))
            };
            params.add(name, t);
        }
        Self::assemble(config, params, codec_digest, 0)
    }

    pub(crate) fn assemble(config: LmConfig, params: ParamSet, codec_digest: Digest, step: u64) -> Result<Self> {
        let shapes = config.param_shapes();
        if shapes.len() != params.len() {
            return invalid("lm parameter count does not match its config");
        }
        for (name, shape) in &shapes {
            let id = params
                .find(name)
                .ok_or_else(|| crate::Error::Format(format!("missing lm parameter {name:?}")))?;
            if params.get(id).shape() != shape.as_slice() {
                return invalid(format!("lm parameter {name:?} has shape {:?}", params.get(id).shape()));
            }
        }
        let pair = |a: &str, b: &str| (lookup(&params, a), lookup(&params, b));
        let layers = (0..config.num_layers)
            .map(|l| {
                let n = |s: &str| format!("layer{l}.{s}");
                LayerIds {
                    ln1: pair(&n("ln1.g"), &n("ln1.b")),
                    wq: pair(&n("wq"), &n("bq")),
                    wk: pair(&n("wk"), &n("bk")),
                    wv: pair(&n("wv"), &n("bv")),
                    wo: pair(&n("wo"), &n("bo")),
                    ln2: pair(&n("ln2.g"), &n("ln2.b")),
                    ff1: pair(&n("ff1"), &n("bf1")),
                    ff2: pair(&n("ff2"), &n("bf2")),
                }
            })
            .collect();
        let ids = Ids {
            tok: lookup(&params, "tok_emb"),
            pos: lookup(&params, "pos_emb"),
            layers,
            lnf: pair("lnf.g", "lnf.b"),
            head: pair("head", "head.b"),
        };
        Ok(Self {
            config,
            params,
            codec_digest,
            step,
            ids,
        })
    }

    fn check_inputs(&self, inputs: &[Vec<usize>]) -> Result<(usize, usize)> {
        let b = inputs.len();
        let Some(first) = inputs.first() else {
            return invalid("lm: empty batch");
        };
        let l = first.len();
        if l == 0 || inputs.iter().any(|s| s.len() != l) {
            return invalid("lm: batch rows must be nonempty and of equal length");
        }
        if l > self.config.max_seq_len {
            return invalid(format!("lm: sequence of {l} exceeds max_seq_len {}", self.config.max_seq_len));
        }
        let v = self.config.vocab_size();
        if let Some(bad) = inputs.iter().flatten().find(|&&t| t >= v) {
            return invalid(format!("lm: token {bad} is outside vocabulary {v}"));
        }
        Ok((b, l))
    }

    /// Logits `[B·L, vocab]` for equal-length BOS-prefixed rows.
    /// Dropout is active only when `rng` is given.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        p: &Bound,
        inputs: &[Vec<usize>],
        mut rng: Option<&mut dyn rand::RngCore>,
    ) -> Result<Var> {
        let (b, l) = self.check_inputs(inputs)?;
        let c = &self.config;
        let (d, h) = (c.embed_dim, c.num_heads);
        let dh = c.head_dim();
        let flat: Vec<usize> = inputs.iter().flatten().copied().collect();
        let positions: Vec<usize> = (0..b).flat_map(|_| 0..l).collect();
        let te = g.embedding(p[self.ids.tok], &flat)?;
        let pe = g.embedding(p[self.ids.pos], &positions)?;
        let mut x = g.add(te, pe)?;
        let scale = 1.0 / (dh as f32).sqrt();
        let mut drop = |g: &mut Graph, v: Var| -> Result<Var> {
            match rng.as_deref_mut() {
                Some(r) if c.dropout > 0.0 => Ok(g.dropout(v, c.dropout, &mut *r)?),
                _ => Ok(v),
            }
        };
        let linear = |g: &mut Graph, x: Var, (w, bias): (ParamId, ParamId)| -> Result<Var> {
            let y = g.matmul(x, p[w])?;
            Ok(g.add_bias(y, p[bias])?)
        };
        let heads = |g: &mut Graph, v: Var| -> Result<Var> {
            let v = g.reshape(v, &[b, l, h, dh])?;
            let v = g.permute(v, &[0, 2, 1, 3])?;
            Ok(g.reshape(v, &[b * h, l, dh])?)
        };
        for ly in &self.ids.layers {
            let a = g.layer_norm(x, p[ly.ln1.0], p[ly.ln1.1], LN_EPS)?;
            let q = linear(g, a, ly.wq)?;
            let k = linear(g, a, ly.wk)?;
            let v = linear(g, a, ly.wv)?;
            let (q, k, v) = (heads(g, q)?, heads(g, k)?, heads(g, v)?);
            let s = g.batch_matmul(q, k, true)?;
            let s = g.scale(s, scale);
            let s = g.causal_mask(s)?;
            let att = g.softmax(s);
            let att = drop(g, att)?;
            let ctx = g.batch_matmul(att, v, false)?;
            let ctx = g.reshape(ctx, &[b, h, l, dh])?;
            let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
            let ctx = g.reshape(ctx, &[b * l, d])?;
            let o = linear(g, ctx, ly.wo)?;
            let o = drop(g, o)?;
            x = g.add(x, o)?;
            let a = g.layer_norm(x, p[ly.ln2.0], p[ly.ln2.1], LN_EPS)?;
            let f = linear(g, a, ly.ff1)?;
            let f = g.gelu(f);
            let f = linear(g, f, ly.ff2)?;
            let f = drop(g, f)?;
            x = g.add(x, f)?;
        }
        let x = g.layer_norm(x, p[self.ids.lnf.0], p[self.ids.lnf.1], LN_EPS)?;
        linear(g, x, self.ids.head)
    }

    /// Eval-mode logits `[len × vocab]` for one BOS-prefixed sequence.
    pub fn forward(&self, input: &[usize]) -> Result<Vec<f32>> {
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let y = self.forward_graph(&mut g, &p, &[input.to_vec()], None)?;
        Ok(g.value(y).to_vec())
    }

    /// Mean next-token cross-entropy over non-ignored targets. Each input row
    /// is BOS-prefixed; `targets[i][j]` is the token following `inputs[i][..=j]`.
    pub fn loss_graph(
        &self,
        g: &mut Graph,
        p: &Bound,
        inputs: &[Vec<usize>],
        targets: &[Vec<Option<usize>>],
        rng: Option<&mut dyn rand::RngCore>,
    ) -> Result<Var> {
        if targets.len() != inputs.len() || targets.iter().zip(inputs).any(|(t, i)| t.len() != i.len()) {
            return invalid("lm loss: targets must mirror the input batch");
        }
        if targets.iter().flatten().all(Option::is_none) {
            return invalid("lm loss: every target position is ignored");
        }
        let logits = self.forward_graph(g, p, inputs, rng)?;
        let flat: Vec<Option<usize>> = targets.iter().flatten().copied().collect();
        Ok(g.cross_entropy(logits, &flat, self.config.codebook_size)?)
    }

    /// Batch loss for token rows of possibly different lengths: each row is
    /// BOS-prefixed, right-padded, and scored on every real token.
    pub fn lm_loss(&self, batch: &[Vec<u32>]) -> Result<f64> {
        let (inputs, targets) = self.pack(batch)?;
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let loss = self.loss_graph(&mut g, &p, &inputs, &targets, None)?;
        Ok(g.item(loss) as f64)
    }

    /// BOS-prefixed inputs and shifted targets, padded to the longest row.
    pub fn pack(&self, batch: &[Vec<u32>]) -> Result<(Vec<Vec<usize>>, Vec<Vec<Option<usize>>>)> {
        let len = batch.iter().map(Vec::len).max().unwrap_or(0);
        if len == 0 {
            return invalid("lm loss: batch has no tokens");
        }
        let bos = self.config.bos();
        let mut inputs = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for row in batch {
            let mut inp = vec![bos; len];
            let mut tgt = vec![IGNORE; len];
            for (j, &t) in row.iter().enumerate() {
                if t as usize >= self.config.codebook_size {
                    return invalid(format!("lm loss: token {t} is outside codebook {}", self.config.codebook_size));
                }
                tgt[j] = Some(t as usize);
                if j + 1 < len {
                    inp[j + 1] = t as usize;
                }
            }
            inputs.push(inp);
            targets.push(tgt);
        }
        Ok((inputs, targets))
    }
}
