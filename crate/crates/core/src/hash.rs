//! Keccak-256 digests.
//!
//! This is the Ethereum flavour of Keccak (multi-rate padding byte `0x01`),
//! not NIST SHA3-256 (`0x06`). The two disagree on every input.

use std::{fmt, str::FromStr};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha3::{Digest as _, Keccak256};

use crate::hex::{self, HexError};

pub const DIGEST_LEN: usize = 32;

/// A 32-byte Keccak-256 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<u8> {
        self.0.to_vec()
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Digest> {
        <[u8; DIGEST_LEN]>::try_from(bytes).ok().map(Digest)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl AsRef<[u8]> for Digest {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Digest {
    type Err = HexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s)?;
        Digest::from_slice(&bytes).ok_or_else(|| HexError {
            input: s.to_string(),
            reason: format!("expected {DIGEST_LEN} bytes, got {}", bytes.len()),
        })
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Hash function descriptor. Only Keccak-256 ships; `hash_bits` is the `m`
/// used throughout the security analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashSpec {
    pub algorithm: HashAlgorithm,
    pub hash_bits: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HashAlgorithm {
    Keccak256,
}

impl HashSpec {
    pub const KECCAK256: HashSpec = HashSpec {
        algorithm: HashAlgorithm::Keccak256,
        hash_bits: 256,
    };

    pub fn digest_len(&self) -> usize {
        (self.hash_bits / 8) as usize
    }
}

impl Default for HashSpec {
    fn default() -> Self {
        HashSpec::KECCAK256
    }
}

pub fn keccak256(data: impl AsRef<[u8]>) -> Digest {
    Digest(Keccak256::digest(data.as_ref()).into())
}

/// Hash of the concatenation of several parts, without materialising it.
pub fn keccak256_concat<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> Digest {
    let mut hasher = Keccak256::new();
    for part in parts {
        hasher.update(part);
    }
    Digest(hasher.finalize().into())
}
