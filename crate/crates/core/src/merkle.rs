//! Binary Merkle trees over Keccak-256, authentication paths, and the
//! fold-to-root used by native verification and by the statement chain.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{keccak256, keccak256_concat, Digest, DIGEST_LEN};
use crate::mpt;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MerkleError {
    #[error("cannot build a tree from zero leaves")]
    EmptyInput,
    #[error("level {level} has {len} nodes; odd rows are rejected by the strict padding policy")]
    Shape { level: usize, len: usize },
    #[error("leaf index {index} out of range for {leaf_count} leaves")]
    OutOfBounds { index: usize, leaf_count: usize },
    #[error("patricia node at step {step} does not reference the running hash")]
    UnlinkedNode { step: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaddingPolicy {
    /// Odd rows duplicate their last digest.
    #[default]
    DuplicateLast,
    RejectNonPowerOfTwo,
}

/// Which side of the running hash the sibling is concatenated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// One element `h_j` of an authentication path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AuthStep {
    Sibling { sibling: Digest, side: Side },
    /// A serialized Patricia node that must reference the running hash.
    Node {
        #[serde(with = "crate::hex::bytes")]
        node: Vec<u8>,
    },
}

impl AuthStep {
    /// Bytes this step contributes to a native proof.
    pub fn native_len(&self) -> usize {
        match self {
            AuthStep::Sibling { .. } => DIGEST_LEN,
            AuthStep::Node { node } => node.len(),
        }
    }

    /// The preimage hashed at this step given the running hash `acc`.
    pub fn preimage(&self, acc: &Digest) -> Vec<u8> {
        match self {
            AuthStep::Sibling { sibling, side: Side::Left } => [sibling.as_ref(), acc.as_ref()].concat(),
            AuthStep::Sibling { sibling, side: Side::Right } => [acc.as_ref(), sibling.as_ref()].concat(),
            AuthStep::Node { node } => node.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerklePath {
    pub leaf_hash: Digest,
    #[serde(rename = "root")]
    pub expected_root: Digest,
    pub steps: Vec<AuthStep>,
}

impl MerklePath {
    /// Path length `k`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn native_size(&self) -> usize {
        self.steps.iter().map(AuthStep::native_len).sum()
    }

    pub fn verify(&self) -> bool {
        matches!(fold(&self.leaf_hash, &self.steps), Ok(r) if r == self.expected_root)
    }

    /// Reinterprets a Patricia proof as a fold path: the leaf is the proven
    /// value, and each node from the bottom up is one re-hash step.
    pub fn from_mpt_proof(proof: &mpt::MptProof) -> MerklePath {
        MerklePath {
            leaf_hash: keccak256(&proof.value),
            expected_root: proof.root,
            steps: proof
                .nodes
                .iter()
                .rev()
                .map(|n| AuthStep::Node { node: n.clone() })
                .collect(),
        }
    }
}

/// Folds a leaf hash up an authentication path.
///
/// Sibling steps compute `H(sibling || acc)` or `H(acc || sibling)` by side.
/// Node steps require the node to reference `acc` and then set
/// `acc = H(node)`; an unreferencing node is an error rather than a digest.
pub fn fold(leaf_hash: &Digest, steps: &[AuthStep]) -> Result<Digest, MerkleError> {
    let mut acc = *leaf_hash;
    for (i, step) in steps.iter().enumerate() {
        acc = match step {
            AuthStep::Sibling { sibling, side: Side::Left } => {
                keccak256_concat([sibling.as_ref(), acc.as_ref()])
            }
            AuthStep::Sibling { sibling, side: Side::Right } => {
                keccak256_concat([acc.as_ref(), sibling.as_ref()])
            }
            AuthStep::Node { node } => {
                if !mpt::node_references(node, &acc) {
                    return Err(MerkleError::UnlinkedNode { step: i + 1 });
                }
                keccak256(node)
            }
        };
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProofLayout {
    Binary,
    /// Upper bound for Patricia paths: a full branch plus 4 bytes of overhead.
    MptBound,
}

pub fn native_proof_size(k: usize, layout: ProofLayout) -> usize {
    match layout {
        ProofLayout::Binary => DIGEST_LEN * k,
        ProofLayout::MptBound => k * (16 * DIGEST_LEN + 4),
    }
}

/// A fully materialised binary tree. `levels[0]` holds the leaf hashes and the
/// last level holds the single root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleTree {
    pub leaf_count: usize,
    pub levels: Vec<Vec<Digest>>,
}

pub fn build_tree<L: AsRef<[u8]>>(leaves: &[L], policy: PaddingPolicy) -> Result<MerkleTree, MerkleError> {
    let hashes: Vec<Digest> = leaves.iter().map(keccak256).collect();
    MerkleTree::from_leaf_hashes(hashes, policy)
}

fn hash_pair(l: &Digest, r: &Digest) -> Digest {
    keccak256_concat([l.as_ref(), r.as_ref()])
}

impl MerkleTree {
    pub fn from_leaf_hashes(hashes: Vec<Digest>, policy: PaddingPolicy) -> Result<MerkleTree, MerkleError> {
        if hashes.is_empty() {
            return Err(MerkleError::EmptyInput);
        }
        let leaf_count = hashes.len();
        let mut levels = vec![hashes];
        while levels.last().is_some_and(|l| l.len() > 1) {
            let row = levels.last().unwrap();
            if row.len() % 2 == 1 && policy == PaddingPolicy::RejectNonPowerOfTwo {
                return Err(MerkleError::Shape {
                    level: levels.len() - 1,
                    len: row.len(),
                });
            }
            let next = row
                .chunks(2)
                .map(|pair| match pair {
                    [l, r] => hash_pair(l, r),
                    [l] => hash_pair(l, l),
                    _ => unreachable!(),
                })
                .collect();
            levels.push(next);
        }
        Ok(MerkleTree { leaf_count, levels })
    }

    pub fn root(&self) -> Digest {
        self.levels.last().expect("tree has at least one level")[0]
    }

    pub fn height(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn leaf_hash(&self, index: usize) -> Option<Digest> {
        self.levels[0].get(index).copied()
    }

    pub fn gen_path(&self, index: usize) -> Result<MerklePath, MerkleError> {
        if index >= self.leaf_count {
            return Err(MerkleError::OutOfBounds {
                index,
                leaf_count: self.leaf_count,
            });
        }
        let mut steps = Vec::with_capacity(self.height());
        let mut pos = index;
        for row in &self.levels[..self.height()] {
            let (sibling_pos, side) = if pos % 2 == 0 {
                (pos + 1, Side::Right)
            } else {
                (pos - 1, Side::Left)
            };
            // A missing right sibling is the duplicated last digest.
            let sibling = row.get(sibling_pos).copied().unwrap_or(row[pos]);
            steps.push(AuthStep::Sibling { sibling, side });
            pos /= 2;
        }
        Ok(MerklePath {
            leaf_hash: self.levels[0][index],
            expected_root: self.root(),
            steps,
        })
    }

    /// Checks every internal digest against its children.
    pub fn is_consistent(&self) -> bool {
        self.levels.windows(2).all(|w| {
            let (row, parent) = (&w[0], &w[1]);
            parent.len() == row.len().div_ceil(2)
                && row.chunks(2).zip(parent).all(|(pair, p)| match pair {
                    [l, r] => hash_pair(l, r) == *p,
                    [l] => hash_pair(l, l) == *p,
                    _ => false,
                })
        }) && self.levels.last().is_some_and(|l| l.len() == 1)
            && self.levels[0].len() == self.leaf_count
    }
}
