use std::path::Path;

use serde::{Deserialize, Serialize};
use soundlm_tensor::{ParamSet, Tensor};

use super::{Codebook, Codec, CodecConfig};
use crate::container::Container;
use crate::digest::Digest;
use crate::error::{Error, Result};

pub const CODEC_MAGIC: [u8; 4] = *b"SLMC";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    codec: CodecConfig,
    step: u64,
}

fn tensor(blob: &crate::container::Blob) -> Result<Tensor> {
    Ok(Tensor::new(blob.shape.clone(), blob.data.clone())?)
}

impl Codec {
    pub fn to_container(&self) -> Container {
        let header = Header {
            codec: self.config.clone(),
            step: self.step,
        };
        let mut c = Container::new(CODEC_MAGIC, serde_json::to_string(&header).expect("config serializes"));
        for (name, t) in self.params.iter() {
            c.push(name, t.shape(), t.data());
        }
        let (k, d) = (self.codebook.size, self.codebook.dim);
        c.push("codebook.embeddings", &[k, d], &self.codebook.embeddings);
        c.push("codebook.ema_cluster_size", &[k], &self.codebook.ema_cluster_size);
        c.push("codebook.ema_embed_sum", &[k, d], &self.codebook.ema_embed_sum);
        let unused: Vec<f32> = self.codebook.unused_steps.iter().map(|&u| u as f32).collect();
        c.push("codebook.unused_steps", &[k], &unused);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let header: Header =
            serde_json::from_str(&c.config_json).map_err(|e| Error::Format(format!("codec header: {e}")))?;
        let cfg = header.codec;
        let mut params = ParamSet::new();
        for b in c.blobs.iter().filter(|b| !b.name.starts_with("codebook.")) {
            params.add(b.name.clone(), tensor(b)?);
        }
        let emb = c.blob("codebook.embeddings")?;
        let mut book = Codebook::new(emb.data.clone(), cfg.latent_dim, cfg.ema_decay, cfg.ema_eps)?;
        book.ema_cluster_size = c.blob("codebook.ema_cluster_size")?.data.clone();
        book.ema_embed_sum = c.blob("codebook.ema_embed_sum")?.data.clone();
        book.unused_steps = c.blob("codebook.unused_steps")?.data.iter().map(|&u| u as u32).collect();
        if book.ema_cluster_size.len() != book.size || book.ema_embed_sum.len() != book.embeddings.len() || book.unused_steps.len() != book.size {
            return Err(Error::Format("codebook accumulators have inconsistent sizes".into()));
        }
        Codec::from_parts(cfg, params, book, header.step)
    }

    /// Writes atomically and returns the digest of the written bytes, which
    /// identifies this codec to token files and LM checkpoints.
    pub fn save(&self, path: &Path) -> Result<Digest> {
        let c = self.to_container();
        c.write(path)?;
        Ok(Digest::of(&c.to_bytes()))
    }

    pub fn load(path: &Path) -> Result<(Self, Digest)> {
        let (c, digest) = Container::read(path, CODEC_MAGIC)?;
        Ok((Self::from_container(&c)?, digest))
    }

    /// Digest the saved checkpoint would have.
    pub fn identity(&self) -> Digest {
        Digest::of(&self.to_container().to_bytes())
    }
}
