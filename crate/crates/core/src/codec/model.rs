use rand::Rng;
use soundlm_tensor::{Conv1dAttrs, Graph, ParamId, ParamSet, Tensor, Bound, Var};

use super::{CodecConfig, Codebook, Quantized};
use crate::digest::Digest;
use crate::dsp::Waveform;
use crate::error::{invalid, Result};
use crate::tokens::TokenSequence;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Conv {
    w: ParamId,
    b: ParamId,
    attrs: Conv1dAttrs,
    transposed: bool,
}

impl Conv {
    fn apply(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        Ok(if self.transposed {
            g.conv_transpose1d(x, p[self.w], Some(p[self.b]), self.attrs)?
        } else {
            g.conv1d(x, p[self.w], Some(p[self.b]), self.attrs)?
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Residual {
    dilated: Conv,
    pointwise: Conv,
}

impl Residual {
    fn apply(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let h = g.gelu(x);
        let h = self.dilated.apply(g, p, h)?;
        let h = g.gelu(h);
        let h = self.pointwise.apply(g, p, h)?;
        Ok(g.add(x, h)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Block {
    residuals: Vec<Residual>,
    resample: Conv,
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    enc_in: Conv,
    enc_blocks: Vec<Block>,
    enc_out: Conv,
    dec_in: Conv,
    dec_blocks: Vec<Block>,
    dec_out: Conv,
}

struct Builder<'a, R> {
    params: ParamSet,
    rng: &'a mut R,
}

impl<R: Rng> Builder<'_, R> {
    /// He-scaled uniform weights (±sqrt(6/fan_in)), zero bias.
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, attrs: Conv1dAttrs, transposed: bool) -> Conv {
        let fan_in = if transposed { cin * k / attrs.stride } else { cin * k } as f64;
        let bound = (6.0 / fan_in.max(1.0)).sqrt() as f32;
        let shape = if transposed { [cin, cout, k] } else { [cout, cin, k] };
        let rng = &mut *self.rng;
        let w = Tensor::from_fn(shape, |_| rng.random_range(-bound..=bound));
        Conv {
            w: self.params.add(format!("{name}.w"), w),
            b: self.params.add(format!("{name}.b"), Tensor::zeros([cout])),
            attrs,
            transposed,
        }
    }

    fn residuals(&mut self, name: &str, c: usize, units: usize) -> Vec<Residual> {
        (0..units)
            .map(|j| {
                let dil = 3usize.pow(j as u32);
                Residual {
                    dilated: self.conv(&format!("{name}.r{j}.dil"), c, c / 2, 3, Conv1dAttrs::new(1, dil).dilated(dil), false),
                    pointwise: self.conv(&format!("{name}.r{j}.pw"), c / 2, c, 1, Conv1dAttrs::new(1, 0), false),
                }
            })
            .collect()
    }
}

fn build(cfg: &CodecConfig, rng: &mut impl Rng) -> (ParamSet, Layout) {
    let mut b = Builder {
        params: ParamSet::new(),
        rng,
    };
    let same7 = Conv1dAttrs::new(1, 3);
    let blocks = cfg.stride_factors.len();
    let top = cfg.channels(blocks);
    let enc_in = b.conv("enc.in", 1, cfg.base_channels, 7, same7, false);
    let enc_blocks = cfg
        .stride_factors
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let c = cfg.channels(i);
            let residuals = b.residuals(&format!("enc.b{i}"), c, cfg.residual_units);
            let resample = b.conv(&format!("enc.b{i}.down"), c, 2 * c, 2 * s, Conv1dAttrs::new(s, s / 2), false);
            Block { residuals, resample }
        })
        .collect();
    let enc_out = b.conv("enc.out", top, cfg.latent_dim, 7, same7, false);
    let dec_in = b.conv("dec.in", cfg.latent_dim, top, 7, same7, false);
    let dec_blocks = cfg
        .stride_factors
        .iter()
        .enumerate()
        .rev()
        .map(|(i, &s)| {
            let c = cfg.channels(i);
            let resample = b.conv(&format!("dec.b{i}.up"), 2 * c, c, 2 * s, Conv1dAttrs::new(s, s / 2), true);
            let residuals = b.residuals(&format!("dec.b{i}"), c, cfg.residual_units);
            Block { residuals, resample }
        })
        .collect();
    let dec_out = b.conv("dec.out", cfg.base_channels, 1, 7, same7, false);
    let layout = Layout {
        enc_in,
        enc_blocks,
        enc_out,
        dec_in,
        dec_blocks,
        dec_out,
    };
    (b.params, layout)
}

/// Encoder, codebook and decoder with their parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Codec {
    pub config: CodecConfig,
    pub params: ParamSet,
    pub codebook: Codebook,
    /// Training steps taken so far.
    pub step: u64,
    layout: Layout,
}

impl Codec {
    /// Random weights; the codebook is a placeholder until seeded from latents.
    pub fn init(config: CodecConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (params, layout) = build(&config, rng);
        let codebook = Codebook::new(
            vec![0.0; config.codebook_size * config.latent_dim],
            config.latent_dim,
            config.ema_decay,
            config.ema_eps,
        )?;
        Ok(Self {
            config,
            params,
            codebook,
            step: 0,
            layout,
        })
    }

    pub fn hop(&self) -> usize {
        self.config.hop()
    }

    /// `x: [B, 1, T]` → latents `[B, d, T/hop]`.
    pub fn encoder_graph(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let l = &self.layout;
        let mut h = l.enc_in.apply(g, p, x)?;
        for blk in &l.enc_blocks {
            for r in &blk.residuals {
                h = r.apply(g, p, h)?;
            }
            let a = g.gelu(h);
            h = blk.resample.apply(g, p, a)?;
        }
        let a = g.gelu(h);
        l.enc_out.apply(g, p, a)
    }

    /// Latents `[B, d, T']` → waveform `[B, 1, T'·hop]`, unclipped.
    pub fn decoder_graph(&self, g: &mut Graph, p: &Bound, q: Var) -> Result<Var> {
        let l = &self.layout;
        let mut h = l.dec_in.apply(g, p, q)?;
        for blk in &l.dec_blocks {
            let a = g.gelu(h);
            h = blk.resample.apply(g, p, a)?;
            for r in &blk.residuals {
                h = r.apply(g, p, h)?;
            }
        }
        let a = g.gelu(h);
        l.dec_out.apply(g, p, a)
    }

    fn check_len(&self, w: &Waveform) -> Result<Vec<f32>> {
        if w.sample_rate() != self.config.sample_rate {
            return invalid(format!(
                "waveform at {} Hz, codec expects {} Hz",
                w.sample_rate(),
                self.config.sample_rate
            ));
        }
        Ok(w.padded_to_multiple(self.hop()))
    }

    /// Latent rows `[T' × d]` for a waveform right-padded to a multiple of the hop.
    pub fn encode(&self, w: &Waveform) -> Result<(Vec<f32>, usize)> {
        let x = self.check_len(w)?;
        let t = x.len();
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let xv = g.constant([1, 1, t], x)?;
        let z = self.encoder_graph(&mut g, &p, xv)?;
        let zt = g.transpose_last(z)?;
        let rows = t / self.hop();
        Ok((g.value(zt).to_vec(), rows))
    }

    pub fn quantize(&self, latents: &[f32]) -> Result<Quantized> {
        self.codebook.quantize(latents)
    }

    /// Token sequence tagged with `source`, the identity of this codec's checkpoint.
    pub fn tokenize(&self, w: &Waveform, source: Digest) -> Result<TokenSequence> {
        let (z, _) = self.encode(w)?;
        let q = self.quantize(&z)?;
        TokenSequence::new(q.tokens, self.config.codebook_size, self.hop(), w.len(), source)
    }

    /// Decodes latent rows `[T' × d]`; output is clipped to `[-1, 1]`.
    pub fn decode_latents(&self, rows: &[f32]) -> Result<Waveform> {
        let d = self.config.latent_dim;
        if rows.is_empty() || rows.len() % d != 0 {
            return invalid(format!("decode needs at least one latent row of width {d}"));
        }
        let n = rows.len() / d;
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let q = g.constant([1, n, d], rows.to_vec())?;
        let q = g.transpose_last(q)?;
        let y = self.decoder_graph(&mut g, &p, q)?;
        Waveform::new(g.value(y).iter().map(|v| v.clamp(-1.0, 1.0)).collect(), self.config.sample_rate)
    }

    pub fn decode_tokens(&self, tokens: &[u32]) -> Result<Waveform> {
        if tokens.is_empty() {
            return invalid("decode needs at least one token");
        }
        self.decode_latents(&self.codebook.lookup(tokens)?)
    }

    /// Encode, quantize, decode, truncated back to the input length.
    pub fn reconstruct(&self, w: &Waveform) -> Result<Waveform> {
        let (z, _) = self.encode(w)?;
        let q = self.quantize(&z)?;
        let y = self.decode_latents(&q.values)?;
        let mut s = y.into_samples();
        s.truncate(w.len());
        Waveform::new(s, w.sample_rate())
    }

    pub(crate) fn from_parts(config: CodecConfig, params: ParamSet, codebook: Codebook, step: u64) -> Result<Self> {
        let mut fresh = Self::init(config, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0))?;
        if params.len() != fresh.params.len() {
            return invalid("codec parameter count does not match its config");
        }
        for (name, t) in params.iter() {
            let id = fresh
                .params
                .find(name)
                .ok_or_else(|| crate::Error::Format(format!("unexpected codec parameter {name:?}")))?;
            if fresh.params.get(id).shape() != t.shape() {
                return invalid(format!("codec parameter {name:?} has shape {:?}", t.shape()));
            }
            *fresh.params.get_mut(id) = t.clone().with_grad(true);
        }
        if codebook.size != fresh.config.codebook_size || codebook.dim != fresh.config.latent_dim {
            return invalid("codebook shape does not match codec config");
        }
        fresh.codebook = codebook;
        fresh.step = step;
        Ok(fresh)
    }
}
