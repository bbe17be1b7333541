use crate::digest::Digest;
use crate::error::{invalid, Result};

/// Discrete units over a vocabulary of `vocab` ids, one per `hop` samples.
/// `source` identifies the tokenizer (the digest of its checkpoint file).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<u32>,
    vocab: usize,
    hop: usize,
    source_len: usize,
    source: Digest,
}

impl TokenSequence {
    pub fn new(tokens: Vec<u32>, vocab: usize, hop: usize, source_len: usize, source: Digest) -> Result<Self> {
        if vocab == 0 || hop == 0 {
            return invalid("token sequence needs a positive vocabulary and hop");
        }
        if let Some((i, &t)) = tokens.iter().enumerate().find(|(_, &t)| t as usize >= vocab) {
            return invalid(format!("token {t} at position {i} is outside vocabulary {vocab}"));
        }
        Ok(Self {
            tokens,
            vocab,
            hop,
            source_len,
            source,
        })
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn ids(&self) -> Vec<usize> {
        self.tokens.iter().map(|&t| t as usize).collect()
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn source(&self) -> Digest {
        self.source
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}
