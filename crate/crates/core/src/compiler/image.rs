//! Binary machine image and its on-disk form.
//!
//! File layout (big-endian): `"EMST"`, version byte `1`, 16-bit entry point,
//! 4096 16-bit words, then a JSON blob holding the source map and symbols.

use crate::isa::{ADDR_MASK, MEM_WORDS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

pub const IMAGE_MAGIC: &[u8; 4] = b"EMST";
pub const IMAGE_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceMapEntry {
    pub addr: u16,
    /// Index of the line in the assembly program.
    pub asm_line: u32,
    /// Rendered assembly text of the instruction.
    pub text: String,
    pub src: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineImage {
    pub words: Vec<u16>,
    pub entry_point: u16,
    /// Sorted by address.
    pub source_map: Vec<SourceMapEntry>,
    pub symbols: BTreeMap<String, u16>,
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("bad magic; not an image file")]
    BadMagic,
    #[error("unsupported image version {0}")]
    BadVersion(u8),
    #[error("image file truncated")]
    Truncated,
    #[error("entry point {0:#x} outside memory")]
    BadEntry(u16),
    #[error("corrupt metadata: {0}")]
    Metadata(#[from] serde_json::Error),
}

#[derive(Serialize, Deserialize)]
struct Meta {
    source_map: Vec<SourceMapEntry>,
    symbols: BTreeMap<String, u16>,
}

impl MachineImage {
    pub fn empty() -> Self {
        Self {
            words: vec![0; MEM_WORDS],
            entry_point: 0,
            source_map: Vec::new(),
            symbols: BTreeMap::new(),
        }
    }

    /// Image holding raw words at address 0, with no source map.
    pub fn from_words(words: &[u16]) -> Self {
        let mut img = Self::empty();
        img.words[..words.len()].copy_from_slice(words);
        img
    }

    pub fn source_at(&self, addr: u16) -> Option<&SourceMapEntry> {
        self.source_map
            .binary_search_by_key(&addr, |e| e.addr)
            .ok()
            .map(|i| &self.source_map[i])
    }

    pub fn symbol(&self, name: &str) -> Option<u16> {
        self.symbols.get(name).copied()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(7 + 2 * MEM_WORDS + 256);
        out.extend_from_slice(IMAGE_MAGIC);
        out.push(IMAGE_VERSION);
        out.extend_from_slice(&self.entry_point.to_be_bytes());
        for w in &self.words {
            out.extend_from_slice(&w.to_be_bytes());
        }
        let meta = Meta {
            source_map: self.source_map.clone(),
            symbols: self.symbols.clone(),
        };
        out.extend_from_slice(&serde_json::to_vec(&meta).expect("metadata serializes"));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ImageError> {
        if bytes.len() < 5 {
            return Err(ImageError::Truncated);
        }
        if &bytes[..4] != IMAGE_MAGIC {
            return Err(ImageError::BadMagic);
        }
        if bytes[4] != IMAGE_VERSION {
            return Err(ImageError::BadVersion(bytes[4]));
        }
        let body = &bytes[5..];
        if body.len() < 2 + 2 * MEM_WORDS {
            return Err(ImageError::Truncated);
        }
        let entry_point = u16::from_be_bytes([body[0], body[1]]);
        if entry_point > ADDR_MASK {
            return Err(ImageError::BadEntry(entry_point));
        }
        let words = body[2..2 + 2 * MEM_WORDS]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        let rest = &body[2 + 2 * MEM_WORDS..];
        let meta: Meta = if rest.is_empty() {
            Meta {
                source_map: Vec::new(),
                symbols: BTreeMap::new(),
            }
        } else {
            serde_json::from_slice(rest)?
        };
        Ok(Self {
            words,
            entry_point,
            source_map: meta.source_map,
            symbols: meta.symbols,
        })
    }

    /// SHA-256 of the file form, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip_and_header() {
        let mut img = MachineImage::from_words(&[0x1205, 0]);
        img.entry_point = 0x123;
        img.symbols.insert("x".into(), 7);
        let bytes = img.to_bytes();
        assert_eq!(&bytes[..7], b"EMST\x01\x01\x23");
        assert_eq!(&bytes[7..9], &[0x12, 0x05]);
        assert_eq!(MachineImage::from_bytes(&bytes).unwrap(), img);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(MachineImage::from_bytes(b"NOPE\x01"), Err(ImageError::BadMagic)));
        assert!(matches!(MachineImage::from_bytes(b"EMST\x02"), Err(ImageError::BadVersion(2))));
        assert!(matches!(MachineImage::from_bytes(b"EMST\x01\x00"), Err(ImageError::Truncated)));
    }
}
