//! Ethereum Merkle Patricia trie: hex-prefix paths, RLP-serialized nodes,
//! canonical roots and inclusion proofs.
//!
//! Tries are built in one pass from the full pair set and are immutable
//! afterwards. Every node caches its own encoding so proofs for all keys can
//! be extracted without re-hashing the trie.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{keccak256, Digest, DIGEST_LEN};
use crate::rlp::{self, RlpItem};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MptError {
    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("key {0} not found")]
    KeyNotFound(String),
}

/// Why a proof failed to replay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    EmptyProof,
    RootMismatch,
    BadNode { index: usize },
    HashMismatch { index: usize },
    PathMismatch { index: usize },
    ValueMismatch,
    MissingNodes,
    TrailingNodes { index: usize },
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::EmptyProof => write!(f, "proof has no nodes"),
            RejectReason::RootMismatch => write!(f, "first node does not hash to the root"),
            RejectReason::BadNode { index } => write!(f, "node {index} is not a valid trie node"),
            RejectReason::HashMismatch { index } => {
                write!(f, "node {index} is not the child referenced by its parent")
            }
            RejectReason::PathMismatch { index } => {
                write!(f, "key nibbles diverge from node {index}")
            }
            RejectReason::ValueMismatch => write!(f, "terminal value differs from the claimed value"),
            RejectReason::MissingNodes => write!(f, "proof ends before the key is consumed"),
            RejectReason::TrailingNodes { index } => write!(f, "unexpected node {index} after the terminal node"),
        }
    }
}

/// Hex-prefix encoding of a nibble path.
pub fn hex_prefix_encode(nibbles: &[u8], leaf: bool) -> Vec<u8> {
    let odd = nibbles.len() % 2 == 1;
    let flag = (if leaf { 2 } else { 0 }) + odd as u8;
    let mut out = Vec::with_capacity(nibbles.len() / 2 + 1);
    let rest = if odd {
        out.push((flag << 4) | nibbles[0]);
        &nibbles[1..]
    } else {
        out.push(flag << 4);
        nibbles
    };
    out.extend(rest.chunks(2).map(|p| (p[0] << 4) | p[1]));
    out
}

/// Inverse of [`hex_prefix_encode`]: returns (nibbles, is_leaf).
pub fn hex_prefix_decode(bytes: &[u8]) -> Option<(Vec<u8>, bool)> {
    let (&first, rest) = bytes.split_first()?;
    let flag = first >> 4;
    if flag > 3 {
        return None;
    }
    let mut nibbles = Vec::with_capacity(rest.len() * 2 + 1);
    if flag & 1 == 1 {
        nibbles.push(first & 0x0f);
    } else if first & 0x0f != 0 {
        return None;
    }
    for b in rest {
        nibbles.push(b >> 4);
        nibbles.push(b & 0x0f);
    }
    Some((nibbles, flag & 2 == 2))
}

pub fn to_nibbles(key: &[u8]) -> Vec<u8> {
    key.iter().flat_map(|b| [b >> 4, b & 0x0f]).collect()
}

#[derive(Clone, Debug)]
enum NodeKind {
    Leaf { path: Vec<u8>, value: Vec<u8> },
    Extension { path: Vec<u8>, child: Box<Node> },
    Branch { children: Vec<Option<Node>>, value: Option<Vec<u8>> },
}

#[derive(Clone, Debug)]
struct Node {
    kind: NodeKind,
    rlp: Vec<u8>,
}

impl Node {
    fn new(kind: NodeKind) -> Node {
        let rlp = match &kind {
            NodeKind::Leaf { path, value } => {
                RlpItem::List(vec![
                    RlpItem::bytes(hex_prefix_encode(path, true)),
                    RlpItem::bytes(value.clone()),
                ])
                .encode()
            }
            NodeKind::Extension { path, child } => {
                let hp = RlpItem::bytes(hex_prefix_encode(path, false)).encode();
                let child_ref = child.reference();
                rlp::encode_list_of_encoded(&[&hp, &child_ref])
            }
            NodeKind::Branch { children, value } => {
                let empty = RlpItem::bytes(Vec::new()).encode();
                let mut parts: Vec<Vec<u8>> = children
                    .iter()
                    .map(|c| c.as_ref().map_or_else(|| empty.clone(), Node::reference))
                    .collect();
                parts.push(RlpItem::bytes(value.clone().unwrap_or_default()).encode());
                let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
                rlp::encode_list_of_encoded(&refs)
            }
        };
        Node { kind, rlp }
    }

    /// Encoded form of this node as it appears inside its parent.
    fn reference(&self) -> Vec<u8> {
        if self.rlp.len() < DIGEST_LEN {
            self.rlp.clone()
        } else {
            RlpItem::bytes(keccak256(&self.rlp).to_vec()).encode()
        }
    }
}

/// An immutable Patricia trie.
#[derive(Clone, Debug)]
pub struct Mpt {
    root: Option<Node>,
    len: usize,
}

/// Canonical root of the empty trie, `keccak256(rlp(""))`.
pub fn empty_root() -> Digest {
    keccak256([0x80])
}

pub fn mpt_build<K: AsRef<[u8]>, V: AsRef<[u8]>>(pairs: &[(K, V)]) -> Result<(Mpt, Digest), MptError> {
    let trie = Mpt::build(pairs)?;
    let root = trie.root();
    Ok((trie, root))
}

impl Mpt {
    pub fn build<K: AsRef<[u8]>, V: AsRef<[u8]>>(pairs: &[(K, V)]) -> Result<Mpt, MptError> {
        let mut entries: Vec<(Vec<u8>, &[u8])> = pairs
            .iter()
            .map(|(k, v)| (to_nibbles(k.as_ref()), v.as_ref()))
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(MptError::DuplicateKey(crate::hex::encode(nibbles_to_bytes(&w[0].0))));
        }
        let root = (!entries.is_empty()).then(|| build_node(&entries, 0));
        Ok(Mpt {
            root,
            len: entries.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn root(&self) -> Digest {
        self.root.as_ref().map_or_else(empty_root, |n| keccak256(&n.rlp))
    }

    pub fn get(&self, key: &[u8]) -> Option<&[u8]> {
        self.walk(key).map(|(_, v)| v)
    }

    fn walk(&self, key: &[u8]) -> Option<(Vec<&[u8]>, &[u8])> {
        let nibbles = to_nibbles(key);
        let mut rest = nibbles.as_slice();
        let mut node = self.root.as_ref()?;
        let mut nodes = Vec::new();
        loop {
            nodes.push(node.rlp.as_slice());
            match &node.kind {
                NodeKind::Leaf { path, value } => {
                    return (path.as_slice() == rest).then_some((nodes, value.as_slice()));
                }
                NodeKind::Extension { path, child } => {
                    rest = rest.strip_prefix(path.as_slice())?;
                    node = child;
                }
                NodeKind::Branch { children, value } => match rest.split_first() {
                    None => return value.as_deref().map(|v| (nodes, v)),
                    Some((&n, tail)) => {
                        node = children[n as usize].as_ref()?;
                        rest = tail;
                    }
                },
            }
        }
    }

    pub fn get_proof(&self, key: &[u8]) -> Result<MptProof, MptError> {
        let (nodes, value) = self
            .walk(key)
            .ok_or_else(|| MptError::KeyNotFound(crate::hex::encode(key)))?;
        Ok(MptProof {
            key: key.to_vec(),
            value: value.to_vec(),
            root: self.root(),
            nodes: nodes.into_iter().map(<[u8]>::to_vec).collect(),
        })
    }
}

fn nibbles_to_bytes(n: &[u8]) -> Vec<u8> {
    n.chunks(2).map(|p| (p[0] << 4) | p.get(1).copied().unwrap_or(0)).collect()
}

/// Builds the subtrie for sorted, distinct `entries` that agree on their first
/// `depth` nibbles.
fn build_node(entries: &[(Vec<u8>, &[u8])], depth: usize) -> Node {
    if let [(key, value)] = entries {
        return Node::new(NodeKind::Leaf {
            path: key[depth..].to_vec(),
            value: value.to_vec(),
        });
    }
    let first = &entries[0].0[depth..];
    let last = &entries[entries.len() - 1].0[depth..];
    let shared = first.iter().zip(last).take_while(|(a, b)| a == b).count();
    if shared > 0 {
        let child = build_node(entries, depth + shared);
        return Node::new(NodeKind::Extension {
            path: first[..shared].to_vec(),
            child: Box::new(child),
        });
    }
    let mut value = None;
    let mut children: Vec<Option<Node>> = vec![None; 16];
    let mut rest = entries;
    if rest[0].0.len() == depth {
        value = Some(rest[0].1.to_vec());
        rest = &rest[1..];
    }
    while !rest.is_empty() {
        let nib = rest[0].0[depth];
        let end = rest.iter().position(|e| e.0[depth] != nib).unwrap_or(rest.len());
        children[nib as usize] = Some(build_node(&rest[..end], depth + 1));
        rest = &rest[end..];
    }
    Node::new(NodeKind::Branch { children, value })
}

/// Inclusion proof: nodes from the root down to the node holding the value.
/// Inline (< 32 byte) nodes are listed as their own entries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MptProof {
    #[serde(with = "crate::hex::bytes")]
    pub key: Vec<u8>,
    #[serde(with = "crate::hex::bytes")]
    pub value: Vec<u8>,
    pub root: Digest,
    #[serde(with = "crate::hex::bytes_vec")]
    pub nodes: Vec<Vec<u8>>,
}

impl MptProof {
    /// Path length `k`: the number of serialized nodes.
    pub fn path_len(&self) -> usize {
        self.nodes.len()
    }

    pub fn native_size(&self) -> usize {
        self.nodes.iter().map(Vec::len).sum()
    }

    pub fn verify(&self) -> Result<(), RejectReason> {
        mpt_verify_proof(self)
    }
}

enum Decoded {
    Branch(Vec<RlpItem>),
    Extension(Vec<u8>, RlpItem),
    Leaf(Vec<u8>, Vec<u8>),
}

fn decode_node(bytes: &[u8]) -> Option<Decoded> {
    let item = rlp::decode(bytes).ok()?;
    let items = item.as_list()?;
    match items.len() {
        17 => {
            let valid_refs = items[..16].iter().all(|c| match c {
                RlpItem::Bytes(b) => b.is_empty() || b.len() == DIGEST_LEN,
                RlpItem::List(_) => c.encoded_len() < DIGEST_LEN,
            });
            (valid_refs && items[16].as_bytes().is_some()).then(|| Decoded::Branch(items.to_vec()))
        }
        2 => {
            let (path, leaf) = hex_prefix_decode(items[0].as_bytes()?)?;
            if leaf {
                Some(Decoded::Leaf(path, items[1].as_bytes()?.to_vec()))
            } else {
                Some(Decoded::Extension(path, items[1].clone()))
            }
        }
        _ => None,
    }
}

/// True when `bytes` decodes as a branch, extension or leaf node.
pub fn is_well_formed_node(bytes: &[u8]) -> bool {
    decode_node(bytes).is_some()
}

fn ref_matches(child_ref: &RlpItem, target: &Digest) -> bool {
    match child_ref {
        RlpItem::Bytes(b) => b.as_slice() == target.as_ref(),
        RlpItem::List(_) => keccak256(child_ref.encode()) == *target,
    }
}

/// Does the serialized node reference `acc`, either as a child (hashed or
/// inline) or as the hash of the value it stores?
pub fn node_references(node: &[u8], acc: &Digest) -> bool {
    match decode_node(node) {
        Some(Decoded::Branch(items)) => {
            items[..16].iter().any(|c| ref_matches(c, acc))
                || items[16]
                    .as_bytes()
                    .is_some_and(|v| !v.is_empty() && keccak256(v) == *acc)
        }
        Some(Decoded::Extension(_, child)) => ref_matches(&child, acc),
        Some(Decoded::Leaf(_, value)) => keccak256(value) == *acc,
        None => false,
    }
}

/// Replays `proof` from its root along the key's nibbles.
pub fn mpt_verify_proof(proof: &MptProof) -> Result<(), RejectReason> {
    let first = proof.nodes.first().ok_or(RejectReason::EmptyProof)?;
    if keccak256(first) != proof.root {
        return Err(RejectReason::RootMismatch);
    }
    let nibbles = to_nibbles(&proof.key);
    let mut rest = nibbles.as_slice();
    let mut index = 0;
    loop {
        let node = &proof.nodes[index];
        let next_ref = match decode_node(node).ok_or(RejectReason::BadNode { index })? {
            Decoded::Leaf(path, value) => {
                if path.as_slice() != rest {
                    return Err(RejectReason::PathMismatch { index });
                }
                return finish(proof, index, &value);
            }
            Decoded::Extension(path, child) => {
                rest = rest
                    .strip_prefix(path.as_slice())
                    .ok_or(RejectReason::PathMismatch { index })?;
                child
            }
            Decoded::Branch(mut items) => match rest.split_first() {
                None => {
                    let value = items[16].as_bytes().unwrap_or_default().to_vec();
                    if value.is_empty() {
                        return Err(RejectReason::PathMismatch { index });
                    }
                    return finish(proof, index, &value);
                }
                Some((&n, tail)) => {
                    rest = tail;
                    std::mem::replace(&mut items[n as usize], RlpItem::Bytes(Vec::new()))
                }
            },
        };
        index += 1;
        let child = proof.nodes.get(index).ok_or(RejectReason::MissingNodes)?;
        let linked = match &next_ref {
            RlpItem::Bytes(b) if b.len() == DIGEST_LEN => keccak256(child).as_ref() == b.as_slice(),
            RlpItem::Bytes(_) => return Err(RejectReason::PathMismatch { index: index - 1 }),
            RlpItem::List(_) => next_ref.encode() == *child,
        };
        if !linked {
            return Err(RejectReason::HashMismatch { index });
        }
    }
}

fn finish(proof: &MptProof, index: usize, value: &[u8]) -> Result<(), RejectReason> {
    if index + 1 != proof.nodes.len() {
        return Err(RejectReason::TrailingNodes { index: index + 1 });
    }
    if value != proof.value.as_slice() {
        return Err(RejectReason::ValueMismatch);
    }
    Ok(())
}
