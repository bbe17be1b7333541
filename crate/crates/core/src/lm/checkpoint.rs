use std::path::Path;

use serde::{Deserialize, Serialize};
use soundlm_tensor::{ParamSet, Tensor};

use super::{LanguageModel, LmConfig};
use crate::container::Container;
use crate::digest::Digest;
use crate::error::{Error, Result};

pub const LM_MAGIC: [u8; 4] = *b"SLML";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    lm: LmConfig,
    step: u64,
    codec_digest: String,
}

impl LanguageModel {
    pub fn to_container(&self) -> Container {
        let header = Header {
            lm: self.config.clone(),
            step: self.step,
            codec_digest: self.codec_digest.hex(),
        };
        let mut c = Container::new(LM_MAGIC, serde_json::to_string(&header).expect("config serializes"));
        for (name, t) in self.params.iter() {
            c.push(name, t.shape(), t.data());
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let header: Header =
            serde_json::from_str(&c.config_json).map_err(|e| Error::Format(format!("lm header: {e}")))?;
        let mut raw = [0u8; 32];
        hex::decode_to_slice(&header.codec_digest, &mut raw)
            .map_err(|e| Error::Format(format!("lm header: codec digest: {e}")))?;
        header.lm.validate()?;
        let mut params = ParamSet::new();
        for b in &c.blobs {
            params.add(b.name.clone(), Tensor::new(b.shape.clone(), b.data.clone())?);
        }
        LanguageModel::assemble(header.lm, params, Digest(raw), header.step)
    }

    pub fn save(&self, path: &Path) -> Result<Digest> {
        let c = self.to_container();
        c.write(path)?;
        Ok(Digest::of(&c.to_bytes()))
    }

    pub fn load(path: &Path) -> Result<(Self, Digest)> {
        let (c, digest) = Container::read(path, LM_MAGIC)?;
        Ok((Self::from_container(&c)?, digest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stage_rng;

    #[test]
    fn roundtrip_preserves_everything() {
        let cfg = LmConfig {
            num_layers: 1,
            num_heads: 2,
            embed_dim: 8,
            ffn_dim: 16,
            max_seq_len: 12,
            ..LmConfig::desk(5)
        };
        let mut lm = LanguageModel::init(cfg, Digest::of(b"codec"), &mut stage_rng(1, "t")).unwrap();
        lm.step = 17;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lm.bin");
        let d = lm.save(&path).unwrap();
        let (back, d2) = LanguageModel::load(&path).unwrap();
        assert_eq!(d, d2);
        assert_eq!(back, lm);
        assert!(Container::read(&path, *b"SLMC").is_err());
    }
}
