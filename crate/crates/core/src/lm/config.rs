use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub embed_dim: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    /// Codec vocabulary K; the model adds one BOS id, `K`.
    pub codebook_size: usize,
    pub dropout: f64,
    /// Start the output projection at zero, so every position predicts uniformly.
    pub zero_init_head: bool,
}

impl LmConfig {
    pub fn desk(codebook_size: usize) -> Self {
        Self {
            num_layers: 4,
            num_heads: 4,
            embed_dim: 128,
            ffn_dim: 512,
            max_seq_len: 1024,
            codebook_size,
            dropout: 0.0,
            zero_init_head: false,
        }
    }

    /// The 24-layer, 16-head, 1024/4096 shape. Constructible, too large to train here.
    pub fn paper(codebook_size: usize) -> Self {
        Self {
            num_layers: 24,
            num_heads: 16,
            embed_dim: 1024,
            ffn_dim: 4096,
            max_seq_len: 2048,
            codebook_size,
            dropout: 0.1,
            zero_init_head: false,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.codebook_size + 1
    }

    pub fn bos(&self) -> usize {
        self.codebook_size
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.num_layers == 0 || self.num_heads == 0 || self.embed_dim == 0 || self.ffn_dim == 0 {
            errs.push("layer, head, embedding and FFN sizes must be positive".to_string());
        } else if self.embed_dim % self.num_heads != 0 {
            errs.push(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            ));
        }
        if self.max_seq_len == 0 {
            errs.push("max_seq_len must be positive".to_string());
        }
        if self.codebook_size == 0 {
            errs.push("codebook_size must be positive".to_string());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            errs.push("dropout must lie in [0, 1)".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            invalid(format!("lm config: {}", errs.join("; ")))
        }
    }

    /// Every parameter as `(name, shape)`, in creation order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (d, f, v) = (self.embed_dim, self.ffn_dim, self.vocab_size());
        let mut out = vec![
            ("tok_emb".to_string(), vec![v, d]),
            ("pos_emb".to_string(), vec![self.max_seq_len, d]),
        ];
        for l in 0..self.num_layers {
            let p = |s: &str| format!("layer{l}.{s}");
            out.extend([
                (p("ln1.g"), vec![d]),
                (p("ln1.b"), vec![d]),
                (p("wq"), vec![d, d]),
                (p("bq"), vec![d]),
                (p("wk"), vec![d, d]),
                (p("bk"), vec![d]),
                (p("wv"), vec![d, d]),
                (p("bv"), vec![d]),
                (p("wo"), vec![d, d]),
                (p("bo"), vec![d]),
                (p("ln2.g"), vec![d]),
                (p("ln2.b"), vec![d]),
                (p("ff1"), vec![d, f]),
                (p("bf1"), vec![f]),
                (p("ff2"), vec![f, d]),
                (p("bf2"), vec![d]),
            ]);
        }
        out.extend([
            ("lnf.g".to_string(), vec![d]),
            ("lnf.b".to_string(), vec![d]),
            ("head".to_string(), vec![d, v]),
            ("head.b".to_string(), vec![v]),
        ]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Tokens per training window (the BOS-prefixed input has the same length).
    pub seq_len: usize,
    pub lr: f64,
    /// Inverse square-root decay after this many warm-up steps; constant rate when absent.
    pub warmup: Option<u64>,
    /// Evaluate on the held-out corpus every this many steps (0 = only at the end).
    pub eval_every: usize,
}

impl Default for LmTrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch_size: 8,
            seq_len: 128,
            lr: 3e-4,
            warmup: None,
            eval_every: 0,
        }
    }
}
