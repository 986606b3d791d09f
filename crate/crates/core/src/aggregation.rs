//! Recursive aggregation of per-hash-step proofs along an inclusion path.
//!
//! For a leaf `d` and path `h_1..h_k` the chain is
//!
//! ```text
//! x_0 = H(d)                 w_0 = d
//! x_j = H(x_{j-1} ∘ h_j)     w_j = x_{j-1} ∘ h_j      (j = 1..k, x_k = r)
//! ```
//!
//! Each statement gets a primary proof `π_j`. The recursion starts from
//! `πr_0 = π_0` and each `πr_j` proves knowledge of `(π_j, πr_{j-1})` plus the
//! step that links them, so `πr_k` attests the whole root computation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    self, mode_byte, BackendError, BackendId, CircuitId, CircuitSpec, PrimaryProof, ProofFile,
    ProverParams, Rejection, Statement, VerifierParams,
};
use crate::hash::{keccak256, Digest};
use crate::merkle::{AuthStep, MerklePath};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Every intermediate digest is public.
    Full,
    /// Only `H(d)` and `r` are public.
    #[default]
    Simplified,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::Simplified => "simplified",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Mode::Full),
            "simplified" => Ok(Mode::Simplified),
            _ => Err(format!("unknown mode {s:?} (expected full or simplified)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregationError {
    #[error("statement {index} of the chain has an invalid witness: {reason}")]
    ChainBreak { index: usize, reason: String },
    #[error("aggregation refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainEntry {
    pub circuit: CircuitId,
    pub statement: Statement,
}

impl ChainEntry {
    pub fn output(&self) -> Digest {
        Digest::from_slice(&self.statement.x[0]).expect("chain outputs are digests")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StatementChain {
    pub entries: Vec<ChainEntry>,
}

impl StatementChain {
    /// Path length `k`; the chain has `k + 1` entries.
    pub fn k(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn leaf_hash(&self) -> Digest {
        self.entries[0].output()
    }

    pub fn root(&self) -> Digest {
        self.entries[self.k()].output()
    }

    pub fn outputs(&self) -> Vec<Digest> {
        self.entries.iter().map(ChainEntry::output).collect()
    }
}

/// Builds the `k + 1` statements for `leaf` along `path`. The final output is
/// pinned to `path.expected_root`, so a path that does not fold to its root
/// surfaces as a chain break at index `k` when proving.
pub fn build_statement_chain(leaf: &[u8], path: &MerklePath) -> StatementChain {
    let mut acc = keccak256(leaf);
    let mut entries = Vec::with_capacity(path.len() + 1);
    entries.push(ChainEntry {
        circuit: CircuitId::LeafHash,
        statement: Statement {
            x: vec![acc.to_vec()],
            w: vec![leaf.to_vec()],
        },
    });
    for (j, step) in path.steps.iter().enumerate() {
        let w = step.preimage(&acc);
        acc = if j + 1 == path.len() {
            path.expected_root
        } else {
            keccak256(&w)
        };
        let circuit = match step {
            AuthStep::Sibling { .. } => CircuitId::HashStep,
            AuthStep::Node { .. } => CircuitId::MptStep,
        };
        entries.push(ChainEntry {
            circuit,
            statement: Statement {
                x: vec![acc.to_vec()],
                w: vec![w],
            },
        });
    }
    StatementChain { entries }
}

/// Prover-side parameters for every circuit the scheme uses.
#[derive(Clone, Debug)]
pub struct ProvingKeys {
    pub backend: BackendId,
    pub leaf: ProverParams,
    pub hash_step: ProverParams,
    pub mpt_step: ProverParams,
    pub link: ProverParams,
}

/// What an inclusion verifier holds: the base circuit (for `k = 0`) and the
/// recursion circuit, which carries the step verifiers internally.
#[derive(Clone, Debug)]
pub struct VerifyingKeys {
    pub backend: BackendId,
    pub leaf: VerifierParams,
    pub link: VerifierParams,
}

impl ProvingKeys {
    fn for_circuit(&self, c: CircuitId) -> &ProverParams {
        match c {
            CircuitId::LeafHash => &self.leaf,
            CircuitId::HashStep => &self.hash_step,
            CircuitId::MptStep => &self.mpt_step,
            CircuitId::RecursiveLink => &self.link,
        }
    }

    pub fn verifying_keys(&self) -> VerifyingKeys {
        VerifyingKeys {
            backend: self.backend,
            leaf: self.leaf.verifier(),
            link: self.link.verifier(),
        }
    }
}

pub fn setup_aggregation(backend: BackendId, seed: u64) -> Result<(ProvingKeys, VerifyingKeys), BackendError> {
    let (leaf, leaf_v) = backend::setup(backend, &CircuitSpec::new(CircuitId::LeafHash), seed)?;
    let (hash_step, hash_v) = backend::setup(backend, &CircuitSpec::new(CircuitId::HashStep), seed)?;
    let (mpt_step, mpt_v) = backend::setup(backend, &CircuitSpec::new(CircuitId::MptStep), seed)?;
    let link_spec = CircuitSpec::recursive_link(vec![leaf_v, hash_v, mpt_v]);
    let (link, _) = backend::setup(backend, &link_spec, seed)?;
    let keys = ProvingKeys {
        backend,
        leaf,
        hash_step,
        mpt_step,
        link,
    };
    let vk = keys.verifying_keys();
    Ok((keys, vk))
}

/// Proves every statement of the chain independently.
pub fn prove_chain(keys: &ProvingKeys, chain: &StatementChain) -> Result<Vec<PrimaryProof>, AggregationError> {
    chain
        .entries
        .iter()
        .enumerate()
        .map(|(index, e)| {
            backend::prove(keys.for_circuit(e.circuit), &e.statement).map_err(|err| match err {
                BackendError::InvalidWitness { reason, .. } => AggregationError::ChainBreak { index, reason },
                other => AggregationError::Backend(other),
            })
        })
        .collect()
}

/// The aggregated proof `πr_k` with its public inputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecursiveProof {
    pub mode: Mode,
    pub backend: BackendId,
    pub k: usize,
    pub leaf_hash: Digest,
    pub root: Digest,
    pub proof: ProofFile,
}

impl RecursiveProof {
    pub fn final_proof(&self) -> PrimaryProof {
        self.proof.proof()
    }

    pub fn size(&self) -> usize {
        self.proof.body.len()
    }
}

fn public_chain(outputs: &[Digest], j: usize, mode: Mode) -> Vec<Vec<u8>> {
    match mode {
        Mode::Full => outputs[..=j].iter().map(Digest::to_vec).collect(),
        Mode::Simplified => vec![outputs[0].to_vec(), outputs[j].to_vec()],
    }
}

/// Folds verified primary proofs into the recursive chain `πr_1..πr_k`.
pub fn aggregate(
    keys: &ProvingKeys,
    chain: &StatementChain,
    primaries: &[PrimaryProof],
    mode: Mode,
) -> Result<RecursiveProof, AggregationError> {
    if primaries.len() != chain.entries.len() {
        return Err(AggregationError::Refused(format!(
            "{} primary proofs for a chain of {} statements",
            primaries.len(),
            chain.entries.len()
        )));
    }
    for (j, (entry, proof)) in chain.entries.iter().zip(primaries).enumerate() {
        let vp = keys.for_circuit(entry.circuit).verifier();
        backend::verify(&vp, &entry.statement.x, proof)
            .map_err(|e| AggregationError::Refused(format!("primary proof {j} does not verify: {e}")))?;
    }
    let outputs = chain.outputs();
    let mut current = primaries[0].clone();
    let mut public = vec![outputs[0].to_vec()];
    for j in 1..=chain.k() {
        let x = public_chain(&outputs, j, mode);
        let w = vec![
            mode_byte(mode == Mode::Simplified),
            primaries[j].to_bytes(),
            current.to_bytes(),
            outputs[j - 1].to_vec(),
            chain.entries[j].statement.w[0].clone(),
        ];
        current = backend::prove(&keys.link, &Statement { x: x.clone(), w })
            .map_err(|e| AggregationError::Refused(format!("recursion step {j}: {e}")))?;
        public = x;
    }
    Ok(RecursiveProof {
        mode,
        backend: keys.backend,
        k: chain.k(),
        leaf_hash: outputs[0],
        root: outputs[chain.k()],
        proof: ProofFile::new(&current, public),
    })
}

/// Accepts iff `rp` attests that `leaf_hash` folds to `root`.
pub fn verify_inclusion(
    vk: &VerifyingKeys,
    leaf_hash: &Digest,
    root: &Digest,
    rp: &RecursiveProof,
) -> Result<(), Rejection> {
    let reject = |m: &str| Err(Rejection::Inclusion(m.to_string()));
    if rp.backend != vk.backend {
        return reject("proof was produced by a different backend");
    }
    if rp.leaf_hash != *leaf_hash {
        return reject("leaf hash does not match the proof's public input");
    }
    if rp.root != *root {
        return reject("root does not match the proof's public input");
    }
    let x = &rp.proof.x;
    let (vp, expected_len) = match rp.proof.circuit {
        CircuitId::LeafHash => {
            if leaf_hash != root {
                return reject("a base proof only proves single-leaf trees");
            }
            (&vk.leaf, 1)
        }
        CircuitId::RecursiveLink => match rp.mode {
            Mode::Simplified => (&vk.link, 2),
            Mode::Full => (&vk.link, rp.k + 1),
        },
        _ => return reject("final proof is not an aggregation proof"),
    };
    if x.len() != expected_len
        || x.first().map(Vec::as_slice) != Some(leaf_hash.as_ref())
        || x.last().map(Vec::as_slice) != Some(root.as_ref())
    {
        return reject("public inputs do not match (leaf hash, root)");
    }
    backend::verify(vp, x, &rp.final_proof())
}

/// `build_statement_chain → prove_chain → aggregate`.
pub fn prove_inclusion(
    keys: &ProvingKeys,
    leaf: &[u8],
    path: &MerklePath,
    mode: Mode,
) -> Result<RecursiveProof, AggregationError> {
    let chain = build_statement_chain(leaf, path);
    let primaries = prove_chain(keys, &chain)?;
    aggregate(keys, &chain, &primaries, mode)
}
