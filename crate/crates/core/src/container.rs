//! Versioned little-endian container shared by every checkpoint kind:
//! `magic[4] | version u32 | sha256(config)[32] | config len u32 | config JSON |
//! blob count u32 | blobs`, where a blob is
//! `name len u32 | name | rank u32 | dims u32… | f32 data`.

use std::path::Path;

use crate::digest::Digest;
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Blob {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub magic: [u8; 4],
    pub config_json: String,
    pub blobs: Vec<Blob>,
}

fn fmt_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return fmt_err(format!("unexpected end of file at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Container {
    pub fn new(magic: [u8; 4], config_json: String) -> Self {
        Self {
            magic,
            config_json,
            blobs: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: &[f32]) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.blobs.push(Blob {
            name: name.into(),
            shape: shape.to_vec(),
            data: data.to_vec(),
        });
    }

    pub fn config_digest(&self) -> Digest {
        Digest::of(self.config_json.as_bytes())
    }

    pub fn blob(&self, name: &str) -> Result<&Blob> {
        self.blobs
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Format(format!("missing blob {name:?}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_digest().0);
        out.extend_from_slice(&(self.config_json.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_json.as_bytes());
        out.extend_from_slice(&(self.blobs.len() as u32).to_le_bytes());
        for b in &self.blobs {
            out.extend_from_slice(&(b.name.len() as u32).to_le_bytes());
            out.extend_from_slice(b.name.as_bytes());
            out.extend_from_slice(&(b.shape.len() as u32).to_le_bytes());
            for &d in &b.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &b.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses and verifies magic, version and config digest.
    pub fn from_bytes(bytes: &[u8], magic: [u8; 4]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let found = r.take(4)?;
        if found != magic {
            return fmt_err(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(found),
                String::from_utf8_lossy(&magic)
            ));
        }
        let version = r.u32()?;
        if version != VERSION {
            return fmt_err(format!("unsupported container version {version}"));
        }
        let digest = Digest(r.take(32)?.try_into().unwrap());
        let len = r.u32()? as usize;
        let config_json = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Format("config is not UTF-8".into()))?;
        if Digest::of(config_json.as_bytes()) != digest {
            return Err(Error::DigestMismatch {
                expected: digest.hex(),
                found: Digest::of(config_json.as_bytes()).hex(),
            });
        }
        let count = r.u32()? as usize;
        let mut blobs = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::Format("blob name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let raw = r.take(numel.checked_mul(4).ok_or_else(|| Error::Format("blob too large".into()))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            blobs.push(Blob { name, shape, data });
        }
        if r.pos != bytes.len() {
            return fmt_err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        Ok(Self { magic, config_json, blobs })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    /// Reads a container and also returns the digest of the raw file bytes.
    pub fn read(path: &Path, magic: [u8; 4]) -> Result<(Self, Digest)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let c = Self::from_bytes(&bytes, magic).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok((c, Digest::of(&bytes)))
    }
}

pub mod token_file {
    //! `SLMT | version u32 | K u32 | hop u32 | source T u64 | source digest[32] |
    //! count u32 | ids u32…`.

    use super::*;
    use crate::tokens::TokenSequence;

    pub const MAGIC: [u8; 4] = *b"SLMT";

    pub fn to_bytes(seq: &TokenSequence) -> Vec<u8> {
        let mut out = Vec::with_capacity(60 + 4 * seq.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(seq.vocab() as u32).to_le_bytes());
        out.extend_from_slice(&(seq.hop() as u32).to_le_bytes());
        out.extend_from_slice(&(seq.source_len() as u64).to_le_bytes());
        out.extend_from_slice(&seq.source().0);
        out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
        for &t in seq.tokens() {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TokenSequence> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return fmt_err("not a token file");
        }
        let version = r.u32()?;
        if version != VERSION {
            return fmt_err(format!("unsupported token file version {version}"));
        }
        let vocab = r.u32()? as usize;
        let hop = r.u32()? as usize;
        let source_len = r.u64()? as usize;
        let source = Digest(r.take(32)?.try_into().unwrap());
        let count = r.u32()? as usize;
        let ids = r.take(count.checked_mul(4).ok_or_else(|| Error::Format("token count too large".into()))?)?;
        let tokens = ids.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        if r.pos != bytes.len() {
            return fmt_err("trailing bytes after token ids");
        }
        TokenSequence::new(tokens, vocab, hop, source_len, source)
    }

    pub fn write(path: &Path, seq: &TokenSequence) -> Result<()> {
        write_atomic(path, &to_bytes(seq))
    }

    pub fn read(path: &Path) -> Result<TokenSequence> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokens::TokenSequence;

    #[test]
    fn container_round_trip_and_corruption() {
        let mut c = Container::new(*b"TEST", r#"{"a":1}"#.into());
        c.push("w", &[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, -6.5]);
        c.push("s", &[1], &[0.25]);
        let bytes = c.to_bytes();
        assert_eq!(Container::from_bytes(&bytes, *b"TEST").unwrap(), c);
        assert!(Container::from_bytes(&bytes, *b"ELSE").is_err());
        let mut bad = bytes.clone();
        bad[45] ^= 1; // inside the config JSON
        assert!(matches!(Container::from_bytes(&bad, *b"TEST"), Err(Error::DigestMismatch { .. })));
        assert!(Container::from_bytes(&bytes[..bytes.len() - 1], *b"TEST").is_err());
    }

    #[test]
    fn token_file_round_trip() {
        let seq = TokenSequence::new(vec![0, 5, 511, 3], 512, 128, 512, Digest::of(b"codec")).unwrap();
        let back = token_file::from_bytes(&token_file::to_bytes(&seq)).unwrap();
        assert_eq!(back, seq);
        let mut bad = token_file::to_bytes(&seq);
        let n = bad.len();
        bad[n - 4..].copy_from_slice(&600u32.to_le_bytes());
        assert!(token_file::from_bytes(&bad).is_err());
    }
}
