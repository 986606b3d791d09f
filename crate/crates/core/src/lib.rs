//! Aggregated inclusion proofs for binary Merkle trees and Ethereum
//! Patricia tries, with the supporting security and gas-cost models.

pub mod aggregation;
pub mod backend;
pub mod bench;
pub mod cost;
pub mod hash;
pub mod hex;
pub mod ingest;
pub mod merkle;
pub mod mpt;
pub mod rlp;
pub mod security;

pub use hash::{keccak256, Digest, HashSpec};
pub use merkle::{AuthStep, MerklePath, MerkleTree, PaddingPolicy, Side};
pub use mpt::{Mpt, MptProof};
pub use rlp::RlpItem;
