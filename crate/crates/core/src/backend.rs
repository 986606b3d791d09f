//! Prover/verifier contract with interchangeable backends.
//!
//! * `reexec` is sound but not zero-knowledge: the proof body is the
//!   canonical encoding of the witness and the verifier re-runs the relation.
//! * `sim-stark`, `sim-plonk` and `sim-groth16` are size-faithful testing
//!   doubles. The prover checks the relation and then emits a fixed-length
//!   keyed stream; the verifier recomputes the stream from its copy of the
//!   setup tag. Their soundness holds only while the tag stays with honest
//!   provers and verifiers.

use std::{fmt, str::FromStr};

use rand::RngCore;
use rand_chacha::{rand_core::SeedableRng, ChaCha20Rng};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::hash::{keccak256, keccak256_concat, Digest, DIGEST_LEN};
use crate::mpt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BackendId {
    Reexec,
    SimStark,
    SimPlonk,
    SimGroth16,
}

impl BackendId {
    pub const ALL: [BackendId; 4] = [
        BackendId::Reexec,
        BackendId::SimStark,
        BackendId::SimPlonk,
        BackendId::SimGroth16,
    ];
    pub const SIMULATED: [BackendId; 3] = [BackendId::SimStark, BackendId::SimPlonk, BackendId::SimGroth16];

    pub fn name(self) -> &'static str {
        match self {
            BackendId::Reexec => "reexec",
            BackendId::SimStark => "sim-stark",
            BackendId::SimPlonk => "sim-plonk",
            BackendId::SimGroth16 => "sim-groth16",
        }
    }

    /// Fixed proof size of the simulated backends; `None` for re-execution,
    /// whose proofs grow with the witness.
    pub fn proof_size(self) -> Option<usize> {
        match self {
            BackendId::Reexec => None,
            BackendId::SimStark => Some(152_996),
            BackendId::SimPlonk => Some(928),
            BackendId::SimGroth16 => Some(256),
        }
    }

    pub fn profile(self) -> Option<BackendProfile> {
        self.proof_size().map(|proof_size| BackendProfile {
            name: self.name().to_string(),
            proof_size,
        })
    }
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackendId {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BackendId::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| BackendError::UnknownBackend(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendProfile {
    pub name: String,
    pub proof_size: usize,
}

/// The fixed relation registry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CircuitId {
    /// `x = [H(d)]`, `w = [d]`.
    LeafHash,
    /// `x = [H(w)]`, `w = [acc || sibling]` or `[sibling || acc]`.
    HashStep,
    /// `x = [H(node)]`, `w = [node]` with `node` a well-formed trie node.
    MptStep,
    /// One recursion step; see [`CircuitSpec::recursive_link`].
    RecursiveLink,
}

impl CircuitId {
    pub fn name(self) -> &'static str {
        match self {
            CircuitId::LeafHash => "leaf-hash",
            CircuitId::HashStep => "hash-step",
            CircuitId::MptStep => "mpt-step",
            CircuitId::RecursiveLink => "recursive-link",
        }
    }
}

impl fmt::Display for CircuitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CircuitId {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            CircuitId::LeafHash,
            CircuitId::HashStep,
            CircuitId::MptStep,
            CircuitId::RecursiveLink,
        ]
        .into_iter()
        .find(|c| c.name() == s)
        .ok_or_else(|| BackendError::Configuration(format!("unknown circuit {s:?}")))
    }
}

macro_rules! serde_by_name {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.name())
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_by_name!(BackendId);
serde_by_name!(CircuitId);

/// A circuit instance. The recursive link circuit carries the verifier
/// parameters of the circuits it verifies internally.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CircuitSpec {
    pub circuit_id: CircuitId,
    pub inner: Vec<VerifierParams>,
}

impl CircuitSpec {
    pub fn new(circuit_id: CircuitId) -> Self {
        CircuitSpec {
            circuit_id,
            inner: Vec::new(),
        }
    }

    /// Public input: the digest chain `[x_0, …, x_j]` (full mode) or
    /// `[x_0, x_j]` (simplified mode).
    ///
    /// Witness: `[mode, π_j, πr_{j-1}, x_{j-1}, w_j]`. The relation holds when
    /// `π_j` verifies for `x_j`, `πr_{j-1}` verifies for the chain ending in
    /// `x_{j-1}`, `H(w_j) = x_j`, and `w_j` embeds `x_{j-1}`.
    pub fn recursive_link(inner: Vec<VerifierParams>) -> Self {
        CircuitSpec {
            circuit_id: CircuitId::RecursiveLink,
            inner,
        }
    }
}

/// `(x, w)` for one circuit instance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Statement {
    pub x: Vec<Vec<u8>>,
    pub w: Vec<Vec<u8>>,
}

/// Length-prefixed concatenation with 4-byte big-endian lengths.
pub fn canonical<T: AsRef<[u8]>>(parts: &[T]) -> Vec<u8> {
    let total: usize = parts.iter().map(|p| 4 + p.as_ref().len()).sum();
    let mut out = Vec::with_capacity(total);
    for p in parts {
        let p = p.as_ref();
        out.extend_from_slice(&(p.len() as u32).to_be_bytes());
        out.extend_from_slice(p);
    }
    out
}

pub fn decode_canonical(mut bytes: &[u8]) -> Option<Vec<Vec<u8>>> {
    let mut parts = Vec::new();
    while !bytes.is_empty() {
        let len = u32::from_be_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
        parts.push(bytes.get(4..4 + len)?.to_vec());
        bytes = &bytes[4 + len..];
    }
    Some(parts)
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Params {
    backend: BackendId,
    circuit: CircuitId,
    shared_tag: Vec<u8>,
    inner: Vec<VerifierParams>,
}

/// `S_p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProverParams(Params);

/// `S_v`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifierParams(Params);

macro_rules! params_accessors {
    ($t:ty) => {
        impl $t {
            pub fn backend(&self) -> BackendId {
                self.0.backend
            }

            pub fn circuit(&self) -> CircuitId {
                self.0.circuit
            }

            pub fn shared_tag(&self) -> &[u8] {
                &self.0.shared_tag
            }
        }
    };
}

params_accessors!(ProverParams);
params_accessors!(VerifierParams);

impl ProverParams {
    pub fn verifier(&self) -> VerifierParams {
        VerifierParams(self.0.clone())
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimaryProof {
    pub backend: BackendId,
    pub circuit: CircuitId,
    #[serde(with = "crate::hex::bytes")]
    pub body: Vec<u8>,
}

impl fmt::Debug for PrimaryProof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrimaryProof")
            .field("backend", &self.backend)
            .field("circuit", &self.circuit)
            .field("size", &self.body.len())
            .finish()
    }
}

impl PrimaryProof {
    pub fn declared_size(&self) -> usize {
        self.body.len()
    }

    /// Encoding used when a proof is carried inside another witness.
    pub fn to_bytes(&self) -> Vec<u8> {
        canonical(&[self.backend.name().as_bytes(), self.circuit.name().as_bytes(), &self.body])
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<PrimaryProof> {
        let parts = decode_canonical(bytes)?;
        let [backend, circuit, body]: [Vec<u8>; 3] = parts.try_into().ok()?;
        Some(PrimaryProof {
            backend: std::str::from_utf8(&backend).ok()?.parse().ok()?,
            circuit: std::str::from_utf8(&circuit).ok()?.parse().ok()?,
            body,
        })
    }
}

/// Proof file: the proof plus the public input it verifies against.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofFile {
    pub backend: BackendId,
    pub circuit: CircuitId,
    #[serde(with = "crate::hex::bytes_vec")]
    pub x: Vec<Vec<u8>>,
    #[serde(with = "crate::hex::bytes")]
    pub body: Vec<u8>,
}

impl ProofFile {
    pub fn new(proof: &PrimaryProof, x: Vec<Vec<u8>>) -> Self {
        ProofFile {
            backend: proof.backend,
            circuit: proof.circuit,
            x,
            body: proof.body.clone(),
        }
    }

    pub fn proof(&self) -> PrimaryProof {
        PrimaryProof {
            backend: self.backend,
            circuit: self.circuit,
            body: self.body.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("unknown backend {0:?}")]
    UnknownBackend(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("witness does not satisfy {circuit}: {reason}")]
    InvalidWitness { circuit: CircuitId, reason: String },
}

/// A verifier's reason for rejecting.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("proof is for {got} but the verifier expects {expected}")]
    WrongParams { expected: String, got: String },
    #[error("proof body has {got} bytes, backend requires {expected}")]
    WrongSize { expected: usize, got: usize },
    #[error("proof body does not authenticate the public input")]
    BadAuthenticator,
    #[error("embedded witness is not decodable")]
    UndecodableWitness,
    #[error("relation check failed: {0}")]
    RelationFailed(String),
    #[error("{0}")]
    Inclusion(String),
}

fn derive_tag(backend: BackendId, circuit: CircuitId, seed: u64) -> Vec<u8> {
    keccak256_concat([
        b"zkpath/setup/".as_slice(),
        backend.name().as_bytes(),
        b"/",
        circuit.name().as_bytes(),
        &seed.to_be_bytes(),
    ])
    .to_vec()
}

/// Deterministic setup for `(backend, circuit)` under `seed`.
pub fn setup(
    backend: BackendId,
    circuit: &CircuitSpec,
    seed: u64,
) -> Result<(ProverParams, VerifierParams), BackendError> {
    let tag = match backend {
        BackendId::Reexec => Vec::new(),
        _ => derive_tag(backend, circuit.circuit_id, seed),
    };
    make_params(backend, circuit, tag)
}

/// Setup with a fresh random tag.
pub fn setup_random(
    backend: BackendId,
    circuit: &CircuitSpec,
) -> Result<(ProverParams, VerifierParams), BackendError> {
    let tag = match backend {
        BackendId::Reexec => Vec::new(),
        _ => {
            let mut t = vec![0u8; 32];
            rand::thread_rng().fill_bytes(&mut t);
            t
        }
    };
    make_params(backend, circuit, tag)
}

fn make_params(
    backend: BackendId,
    circuit: &CircuitSpec,
    shared_tag: Vec<u8>,
) -> Result<(ProverParams, VerifierParams), BackendError> {
    let is_link = circuit.circuit_id == CircuitId::RecursiveLink;
    if is_link && circuit.inner.is_empty() {
        return Err(BackendError::Configuration(
            "recursive-link needs the verifier parameters of its inner circuits".into(),
        ));
    }
    if !is_link && !circuit.inner.is_empty() {
        return Err(BackendError::Configuration(format!(
            "{} takes no inner circuits",
            circuit.circuit_id
        )));
    }
    if let Some(vp) = circuit.inner.iter().find(|vp| vp.backend() != backend) {
        return Err(BackendError::Configuration(format!(
            "inner circuit {} uses backend {}, expected {backend}",
            vp.circuit(),
            vp.backend()
        )));
    }
    let params = Params {
        backend,
        circuit: circuit.circuit_id,
        shared_tag,
        inner: circuit.inner.clone(),
    };
    Ok((ProverParams(params.clone()), VerifierParams(params)))
}

fn sim_body(params: &Params, x: &[Vec<u8>], size: usize) -> Vec<u8> {
    let auth = keccak256_concat([
        params.shared_tag.as_slice(),
        params.circuit.name().as_bytes(),
        &canonical(x),
    ]);
    let mut body = vec![0u8; size];
    let head = size.min(DIGEST_LEN);
    body[..head].copy_from_slice(&auth.as_bytes()[..head]);
    if size > DIGEST_LEN {
        let seed = keccak256_concat([b"zkpath/stream".as_slice(), auth.as_ref()]);
        ChaCha20Rng::from_seed(seed.0).fill_bytes(&mut body[DIGEST_LEN..]);
    }
    body
}

/// `P(S_p, x, w) → π`. The relation is checked first for every backend.
pub fn prove(sp: &ProverParams, stmt: &Statement) -> Result<PrimaryProof, BackendError> {
    let params = &sp.0;
    check_relation(params, &stmt.x, &stmt.w).map_err(|reason| BackendError::InvalidWitness {
        circuit: params.circuit,
        reason,
    })?;
    let body = match params.backend.proof_size() {
        None => canonical(&stmt.w),
        Some(size) => sim_body(params, &stmt.x, size),
    };
    Ok(PrimaryProof {
        backend: params.backend,
        circuit: params.circuit,
        body,
    })
}

/// `V(S_v, x, π) → accept | reject`.
pub fn verify(sv: &VerifierParams, x: &[Vec<u8>], proof: &PrimaryProof) -> Result<(), Rejection> {
    let params = &sv.0;
    if proof.backend != params.backend || proof.circuit != params.circuit {
        return Err(Rejection::WrongParams {
            expected: format!("{}/{}", params.backend, params.circuit),
            got: format!("{}/{}", proof.backend, proof.circuit),
        });
    }
    match params.backend.proof_size() {
        None => {
            let w = decode_canonical(&proof.body).ok_or(Rejection::UndecodableWitness)?;
            check_relation(params, x, &w).map_err(Rejection::RelationFailed)
        }
        Some(size) => {
            if proof.body.len() != size {
                return Err(Rejection::WrongSize {
                    expected: size,
                    got: proof.body.len(),
                });
            }
            if sim_body(params, x, size) != proof.body {
                return Err(Rejection::BadAuthenticator);
            }
            Ok(())
        }
    }
}

fn single<'a>(v: &'a [Vec<u8>], what: &str) -> Result<&'a [u8], String> {
    match v {
        [one] => Ok(one),
        _ => Err(format!("{what} must have exactly one element, got {}", v.len())),
    }
}

fn digest_of(bytes: &[u8], what: &str) -> Result<Digest, String> {
    Digest::from_slice(bytes).ok_or_else(|| format!("{what} is not a 32-byte digest"))
}

fn check_hash(x: &[Vec<u8>], preimage: &[u8]) -> Result<Digest, String> {
    let out = digest_of(single(x, "public input")?, "public input")?;
    if keccak256(preimage) != out {
        return Err("public digest is not the hash of the witness".into());
    }
    Ok(out)
}

const MODE_FULL: u8 = 0;
const MODE_SIMPLIFIED: u8 = 1;

pub(crate) fn mode_byte(simplified: bool) -> Vec<u8> {
    vec![if simplified { MODE_SIMPLIFIED } else { MODE_FULL }]
}

fn check_relation(params: &Params, x: &[Vec<u8>], w: &[Vec<u8>]) -> Result<(), String> {
    match params.circuit {
        CircuitId::LeafHash => check_hash(x, single(w, "witness")?).map(drop),
        CircuitId::HashStep => {
            let w = single(w, "witness")?;
            if w.len() != 2 * DIGEST_LEN {
                return Err(format!("hash-step witness must be 64 bytes, got {}", w.len()));
            }
            check_hash(x, w).map(drop)
        }
        CircuitId::MptStep => {
            let w = single(w, "witness")?;
            if !mpt::is_well_formed_node(w) {
                return Err("witness is not a well-formed trie node".into());
            }
            check_hash(x, w).map(drop)
        }
        CircuitId::RecursiveLink => check_link(params, x, w),
    }
}

fn inner_verifier(params: &Params, circuit: CircuitId) -> Result<VerifierParams, String> {
    if circuit == params.circuit {
        return Ok(VerifierParams(params.clone()));
    }
    params
        .inner
        .iter()
        .find(|vp| vp.circuit() == circuit)
        .cloned()
        .ok_or_else(|| format!("no verifier for inner circuit {circuit}"))
}

fn check_link(params: &Params, x: &[Vec<u8>], w: &[Vec<u8>]) -> Result<(), String> {
    let [mode, step, prev, prev_acc, link] = w else {
        return Err(format!("recursive-link witness has {} parts, expected 5", w.len()));
    };
    let chain: Vec<Digest> = x
        .iter()
        .map(|d| digest_of(d, "public chain entry"))
        .collect::<Result<_, _>>()?;
    if chain.len() < 2 {
        return Err("public chain needs at least two digests".into());
    }
    let simplified = match mode.as_slice() {
        [MODE_FULL] => false,
        [MODE_SIMPLIFIED] => true,
        _ => return Err("unknown aggregation mode".into()),
    };
    if simplified && chain.len() != 2 {
        return Err("simplified mode exposes exactly two digests".into());
    }
    let leaf_hash = chain[0];
    let out = chain[chain.len() - 1];
    let prev_acc = digest_of(prev_acc, "previous accumulator")?;
    if !simplified && chain[chain.len() - 2] != prev_acc {
        return Err("previous accumulator does not match the public chain".into());
    }

    let step = PrimaryProof::from_bytes(step).ok_or("step proof is not decodable")?;
    if !matches!(step.circuit, CircuitId::HashStep | CircuitId::MptStep) {
        return Err(format!("step proof uses {}", step.circuit));
    }
    verify(&inner_verifier(params, step.circuit)?, &[out.to_vec()], &step)
        .map_err(|e| format!("step proof rejected: {e}"))?;

    let prev = PrimaryProof::from_bytes(prev).ok_or("previous proof is not decodable")?;
    let prev_x: Vec<Vec<u8>> = match prev.circuit {
        CircuitId::LeafHash => {
            if prev_acc != leaf_hash || chain.len() != 2 {
                return Err("base proof must attest the leaf hash directly".into());
            }
            vec![leaf_hash.to_vec()]
        }
        CircuitId::RecursiveLink if simplified => vec![leaf_hash.to_vec(), prev_acc.to_vec()],
        CircuitId::RecursiveLink => {
            if chain.len() < 3 {
                return Err("full-mode chain too short for a recursive predecessor".into());
            }
            x[..x.len() - 1].to_vec()
        }
        other => return Err(format!("previous proof uses {other}")),
    };
    verify(&inner_verifier(params, prev.circuit)?, &prev_x, &prev)
        .map_err(|e| format!("previous proof rejected: {e}"))?;

    if keccak256(link) != out {
        return Err("link witness does not hash to the step output".into());
    }
    let embedded = match step.circuit {
        CircuitId::HashStep => {
            link.len() == 2 * DIGEST_LEN
                && (link[..DIGEST_LEN] == prev_acc.0 || link[DIGEST_LEN..] == prev_acc.0)
        }
        _ => mpt::node_references(link, &prev_acc),
    };
    if !embedded {
        return Err("link witness does not contain the previous accumulator".into());
    }
    Ok(())
}
