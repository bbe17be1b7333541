//! Incremental decoding with cached keys and values. Every reduction goes
//! through the same kernels in the same order as the graph forward pass, so
//! the logits match it bit for bit.

use soundlm_tensor::activation::gelu;
use soundlm_tensor::kernels::{dot, gemm};
use soundlm_tensor::{softmax_in_place, ParamId};

use super::model::LN_EPS;
use super::LanguageModel;
use crate::error::{invalid, Result};

fn layer_norm(x: &[f32], g: &[f32], b: &[f32]) -> Vec<f32> {
    let d = x.len();
    let inv_d = 1.0 / d as f32;
    let mu = x.iter().copied().sum::<f32>() * inv_d;
    let var = x.iter().map(|&v| (v - mu) * (v - mu)).sum::<f32>() * inv_d;
    let r = 1.0 / (var + LN_EPS).sqrt();
    (0..d).map(|i| (x[i] - mu) * r * g[i] + b[i]).collect()
}

/// Per-layer keys and values of every position fed so far.
#[derive(Clone, Debug)]
pub struct KvCache {
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
    len: usize,
}

impl KvCache {
    pub fn new(model: &LanguageModel) -> Self {
        let n = model.config.num_layers;
        Self {
            keys: vec![Vec::new(); n],
            values: vec![Vec::new(); n],
            len: 0,
        }
    }

    /// Positions consumed so far.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Feeds one token and returns the logits for the next position.
    pub fn step(&mut self, model: &LanguageModel, token: usize) -> Result<Vec<f32>> {
        let c = &model.config;
        if self.len >= c.max_seq_len {
            return invalid(format!("lm: context of {} positions is full", c.max_seq_len));
        }
        if token >= c.vocab_size() {
            return invalid(format!("lm: token {token} is outside vocabulary {}", c.vocab_size()));
        }
        let p = &model.params;
        let data = |id: ParamId| p.get(id).data();
        let linear = |x: &[f32], (w, b): (ParamId, ParamId)| -> Vec<f32> {
            let bias = data(b);
            let n = bias.len();
            let mut out = vec![0.0f32; n];
            gemm(false, false, 1, n, x.len(), x, data(w), &mut out);
            out.iter().zip(bias).map(|(&v, &c)| v + c).collect()
        };
        let (d, dh, h) = (c.embed_dim, c.head_dim(), c.num_heads);
        let t = self.len;
        let te = &data(model.ids.tok)[token * d..(token + 1) * d];
        let pe = &data(model.ids.pos)[t * d..(t + 1) * d];
        let mut x: Vec<f32> = te.iter().zip(pe).map(|(&a, &b)| a + b).collect();
        let scale = 1.0 / (dh as f32).sqrt();
        for (li, ly) in model.ids.layers.iter().enumerate() {
            let a = layer_norm(&x, data(ly.ln1.0), data(ly.ln1.1));
            let q = linear(&a, ly.wq);
            self.keys[li].extend(linear(&a, ly.wk));
            self.values[li].extend(linear(&a, ly.wv));
            let (keys, values) = (&self.keys[li], &self.values[li]);
            let mut ctx = vec![0.0f32; d];
            let mut scores = vec![0.0f32; t + 1];
            for hd in 0..h {
                let qh = &q[hd * dh..(hd + 1) * dh];
                for (j, s) in scores.iter_mut().enumerate() {
                    let kh = &keys[j * d + hd * dh..j * d + (hd + 1) * dh];
                    *s = (0.0 + dot(qh, kh)) * scale;
                }
                softmax_in_place(&mut scores);
                let ch = &mut ctx[hd * dh..(hd + 1) * dh];
                for (j, &w) in scores.iter().enumerate() {
                    let vh = &values[j * d + hd * dh..j * d + (hd + 1) * dh];
                    for (cv, &vv) in ch.iter_mut().zip(vh) {
                        *cv = *cv + w * vv;
                    }
                }
            }
            let o = linear(&ctx, ly.wo);
            x = x.iter().zip(&o).map(|(&a, &b)| a + b).collect();
            let a = layer_norm(&x, data(ly.ln2.0), data(ly.ln2.1));
            let f: Vec<f32> = linear(&a, ly.ff1).into_iter().map(gelu).collect();
            let f = linear(&f, ly.ff2);
            x = x.iter().zip(&f).map(|(&a, &b)| a + b).collect();
        }
        let x = layer_norm(&x, data(model.ids.lnf.0), data(model.ids.lnf.1));
        self.len += 1;
        Ok(linear(&x, model.ids.head))
    }
}
