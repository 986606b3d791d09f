//! Input data: synthetic state accounts, JSON-RPC block fixtures and the
//! on-disk fixture format.

use std::io::Write as _;
use std::path::Path;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::hash::{keccak256, Digest};
use crate::mpt::{Mpt, MptError, MptProof, RejectReason};
use crate::rlp::RlpItem;

pub const FIXTURE_FORMAT: u32 = 1;
/// Environment variable consulted for the JSON-RPC endpoint.
pub const RPC_URL_ENV: &str = "ZKPATH_RPC_URL";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("network error (retryable): {0}")]
    Network(String),
    #[error("rpc error: {0}")]
    Rpc(String),
    #[error("integrity error in entry {entry}: {reason}")]
    Integrity { entry: usize, reason: String },
    #[error("fixture format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Trie(#[from] MptError),
}

impl IngestError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, IngestError::Network(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticAccount {
    pub nonce: [u8; 32],
    pub balance: [u8; 32],
    pub storage_root: [u8; 32],
    pub code_hash: [u8; 32],
}

impl SyntheticAccount {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let mut a = SyntheticAccount {
            nonce: [0; 32],
            balance: [0; 32],
            storage_root: [0; 32],
            code_hash: [0; 32],
        };
        rng.fill(&mut a.nonce);
        rng.fill(&mut a.balance);
        rng.fill(&mut a.storage_root);
        rng.fill(&mut a.code_hash);
        a
    }

    pub fn rlp(&self) -> Vec<u8> {
        account_rlp(&self.nonce, &self.balance, &self.storage_root, &self.code_hash)
    }
}

/// `rlp([nonce, balance, storageRoot, codeHash])` with minimal integers.
pub fn account_rlp(nonce: &[u8], balance: &[u8], storage_root: &[u8], code_hash: &[u8]) -> Vec<u8> {
    RlpItem::List(vec![
        RlpItem::uint(nonce),
        RlpItem::uint(balance),
        RlpItem::bytes(storage_root),
        RlpItem::bytes(code_hash),
    ])
    .encode()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureSource {
    Rpc,
    Synthetic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureKind {
    Receipts,
    StateAccounts,
}

impl std::str::FromStr for FixtureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "receipts" | "receipt" => Ok(FixtureKind::Receipts),
            "state-accounts" | "state" => Ok(FixtureKind::StateAccounts),
            _ => Err(format!("unknown fixture kind {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    #[serde(with = "crate::hex::bytes")]
    pub key: Vec<u8>,
    #[serde(with = "crate::hex::bytes")]
    pub value: Vec<u8>,
    #[serde(with = "crate::hex::bytes_vec")]
    pub proof: Vec<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureSet {
    pub format: u32,
    pub source: FixtureSource,
    pub kind: FixtureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_number: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetched_at: Option<u64>,
    pub root: Digest,
    pub entries: Vec<FixtureEntry>,
}

impl FixtureSet {
    pub fn proof(&self, index: usize) -> Option<MptProof> {
        self.entries.get(index).map(|e| MptProof {
            key: e.key.clone(),
            value: e.value.clone(),
            root: self.root,
            nodes: e.proof.clone(),
        })
    }

    pub fn proofs(&self) -> impl Iterator<Item = MptProof> + '_ {
        (0..self.entries.len()).filter_map(|i| self.proof(i))
    }

    /// Checks every entry against `root`, reporting the first failure.
    pub fn verify(&self) -> Result<(), IngestError> {
        if self.format != FIXTURE_FORMAT {
            return Err(IngestError::Format(format!("unsupported format {}", self.format)));
        }
        for (i, p) in self.proofs().enumerate() {
            p.verify().map_err(|r| integrity(i, r))?;
        }
        Ok(())
    }
}

fn integrity(entry: usize, reason: RejectReason) -> IngestError {
    IngestError::Integrity {
        entry,
        reason: reason.to_string(),
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Builds the state trie for `n` random accounts and returns a fixture with
/// one proof per account. Output depends only on `(n, seed)`.
pub fn gen_synthetic_state(n: usize, seed: u64) -> Result<FixtureSet, IngestError> {
    let (trie, keys) = synthetic_state_trie(n, seed)?;
    let entries = keys
        .iter()
        .map(|k| {
            let p = trie.get_proof(k)?;
            Ok(FixtureEntry {
                key: p.key,
                value: p.value,
                proof: p.nodes,
            })
        })
        .collect::<Result<Vec<_>, MptError>>()?;
    Ok(FixtureSet {
        format: FIXTURE_FORMAT,
        source: FixtureSource::Synthetic,
        kind: FixtureKind::StateAccounts,
        block_number: None,
        chain_id: None,
        fetched_at: None,
        root: trie.root(),
        entries,
    })
}

/// The trie behind [`gen_synthetic_state`] and its keys in insertion order.
pub fn synthetic_state_trie(n: usize, seed: u64) -> Result<(Mpt, Vec<Vec<u8>>), IngestError> {
    if n == 0 {
        return Err(IngestError::Format("synthetic state needs at least one account".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut address = [0u8; 20];
        rng.fill(&mut address);
        let account = SyntheticAccount::random(&mut rng);
        pairs.push((keccak256(address).to_vec(), account.rlp()));
    }
    let keys = pairs.iter().map(|(k, _)| k.clone()).collect();
    Ok((Mpt::build(&pairs)?, keys))
}

pub fn save_fixtures(set: &FixtureSet, path: &Path) -> Result<(), IngestError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    serde_json::to_writer_pretty(&mut tmp, set).map_err(|e| IngestError::Format(e.to_string()))?;
    tmp.write_all(b"\n")?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| IngestError::Io(e.error))?;
    Ok(())
}

pub fn load_fixtures(path: &Path) -> Result<FixtureSet, IngestError> {
    let text = std::fs::read_to_string(path)?;
    let set: FixtureSet = serde_json::from_str(&text).map_err(|e| IngestError::Format(e.to_string()))?;
    set.verify()?;
    Ok(set)
}

pub struct RpcClient {
    url: String,
    agent: ureq::Agent,
}

impl RpcClient {
    pub fn new(url: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        RpcClient { url: url.into(), agent }
    }

    pub fn call(&self, method: &str, params: Value) -> Result<Value, IngestError> {
        let req = json!({"jsonrpc": "2.0", "id": 1, "method": method, "params": params});
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(&req)
            .map_err(|e| IngestError::Network(e.to_string()))?;
        let body: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| IngestError::Network(e.to_string()))?;
        if let Some(err) = body.get("error") {
            return Err(IngestError::Rpc(format!("{method}: {err}")));
        }
        match body.get("result") {
            Some(Value::Null) | None => Err(IngestError::Rpc(format!("{method}: empty result"))),
            Some(v) => Ok(v.clone()),
        }
    }
}

fn field<'a>(v: &'a Value, name: &str) -> Result<&'a Value, IngestError> {
    v.get(name)
        .ok_or_else(|| IngestError::Rpc(format!("missing field {name:?}")))
}

fn hex_field(v: &Value, name: &str) -> Result<Vec<u8>, IngestError> {
    let s = field(v, name)?
        .as_str()
        .ok_or_else(|| IngestError::Rpc(format!("field {name:?} is not a string")))?;
    crate::hex::decode(s).map_err(|e| IngestError::Rpc(e.to_string()))
}

/// Minimal big-endian form of a hex quantity.
fn quantity(v: &Value, name: &str) -> Result<Vec<u8>, IngestError> {
    let b = hex_field(v, name)?;
    let start = b.iter().position(|&x| x != 0).unwrap_or(b.len());
    Ok(b[start..].to_vec())
}

fn quantity_u64(v: &Value, name: &str) -> Result<u64, IngestError> {
    let b = quantity(v, name)?;
    if b.len() > 8 {
        return Err(IngestError::Rpc(format!("field {name:?} overflows u64")));
    }
    Ok(b.iter().fold(0u64, |acc, &x| (acc << 8) | x as u64))
}

fn digest_field(v: &Value, name: &str) -> Result<Digest, IngestError> {
    Digest::from_slice(&hex_field(v, name)?)
        .ok_or_else(|| IngestError::Rpc(format!("field {name:?} is not 32 bytes")))
}

/// Consensus encoding of a receipt as stored in the receipts trie.
pub fn encode_receipt(r: &Value) -> Result<Vec<u8>, IngestError> {
    let status = match r.get("status") {
        Some(Value::String(_)) => RlpItem::uint(&quantity(r, "status")?),
        _ => RlpItem::bytes(hex_field(r, "root")?),
    };
    let logs = field(r, "logs")?
        .as_array()
        .ok_or_else(|| IngestError::Rpc("logs is not an array".into()))?
        .iter()
        .map(|log| {
            let topics = field(log, "topics")?
                .as_array()
                .ok_or_else(|| IngestError::Rpc("topics is not an array".into()))?
                .iter()
                .map(|t| {
                    let s = t.as_str().ok_or_else(|| IngestError::Rpc("topic is not a string".into()))?;
                    crate::hex::decode(s)
                        .map(RlpItem::Bytes)
                        .map_err(|e| IngestError::Rpc(e.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(RlpItem::List(vec![
                RlpItem::bytes(hex_field(log, "address")?),
                RlpItem::List(topics),
                RlpItem::bytes(hex_field(log, "data")?),
            ]))
        })
        .collect::<Result<Vec<_>, IngestError>>()?;
    let body = RlpItem::List(vec![
        status,
        RlpItem::uint(&quantity(r, "cumulativeGasUsed")?),
        RlpItem::bytes(hex_field(r, "logsBloom")?),
        RlpItem::List(logs),
    ])
    .encode();
    let tx_type = match r.get("type") {
        Some(Value::String(_)) => quantity_u64(r, "type")?,
        _ => 0,
    };
    if tx_type == 0 {
        Ok(body)
    } else {
        let mut out = vec![tx_type as u8];
        out.extend(body);
        Ok(out)
    }
}

/// Fetches inclusion proofs from block `block_number`.
///
/// For receipts, `keys` are transaction indices as decimal strings (empty
/// means every transaction) and the receipts trie is rebuilt locally. For
/// state accounts, `keys` are addresses and proofs come from `eth_getProof`.
/// Every proof is checked against the block header root before returning.
pub fn fetch_block_fixtures(
    rpc_url: &str,
    block_number: u64,
    kind: FixtureKind,
    keys: &[String],
) -> Result<FixtureSet, IngestError> {
    let client = RpcClient::new(rpc_url);
    let tag = format!("0x{block_number:x}");
    let block = client.call("eth_getBlockByNumber", json!([tag, false]))?;
    let chain_id = client.call("eth_chainId", json!([])).ok().and_then(|v| {
        let s = v.as_str()?;
        u64::from_str_radix(s.trim_start_matches("0x"), 16).ok()
    });
    let (root, entries) = match kind {
        FixtureKind::Receipts => fetch_receipts(&client, &block, keys)?,
        FixtureKind::StateAccounts => fetch_accounts(&client, &block, &tag, keys)?,
    };
    let set = FixtureSet {
        format: FIXTURE_FORMAT,
        source: FixtureSource::Rpc,
        kind,
        block_number: Some(block_number),
        chain_id,
        fetched_at: Some(unix_now()),
        root,
        entries,
    };
    set.verify()?;
    Ok(set)
}

fn fetch_receipts(
    client: &RpcClient,
    block: &Value,
    keys: &[String],
) -> Result<(Digest, Vec<FixtureEntry>), IngestError> {
    let root = digest_field(block, "receiptsRoot")?;
    let txs = field(block, "transactions")?
        .as_array()
        .ok_or_else(|| IngestError::Rpc("transactions is not an array".into()))?;
    let mut pairs = Vec::with_capacity(txs.len());
    for (i, tx) in txs.iter().enumerate() {
        let hash = match tx {
            Value::String(s) => s.clone(),
            other => field(other, "hash")?.as_str().unwrap_or_default().to_string(),
        };
        let receipt = client.call("eth_getTransactionReceipt", json!([hash]))?;
        pairs.push((RlpItem::u64(i as u64).encode(), encode_receipt(&receipt)?));
    }
    let trie = Mpt::build(&pairs)?;
    if trie.root() != root {
        return Err(IngestError::Integrity {
            entry: 0,
            reason: format!("rebuilt receipts root {} does not match header {}", trie.root(), root),
        });
    }
    let indices: Vec<u64> = if keys.is_empty() {
        (0..txs.len() as u64).collect()
    } else {
        keys.iter()
            .map(|k| k.parse().map_err(|_| IngestError::Format(format!("bad transaction index {k:?}"))))
            .collect::<Result<_, _>>()?
    };
    let entries = indices
        .into_iter()
        .map(|i| {
            let p = trie.get_proof(&RlpItem::u64(i).encode())?;
            Ok(FixtureEntry {
                key: p.key,
                value: p.value,
                proof: p.nodes,
            })
        })
        .collect::<Result<_, IngestError>>()?;
    Ok((root, entries))
}

fn fetch_accounts(
    client: &RpcClient,
    block: &Value,
    tag: &str,
    keys: &[String],
) -> Result<(Digest, Vec<FixtureEntry>), IngestError> {
    let root = digest_field(block, "stateRoot")?;
    let mut entries = Vec::with_capacity(keys.len());
    for address in keys {
        let addr = crate::hex::decode(address).map_err(|e| IngestError::Format(e.to_string()))?;
        if addr.len() != 20 {
            return Err(IngestError::Format(format!("address {address} is not 20 bytes")));
        }
        let p = client.call("eth_getProof", json!([address, [], tag]))?;
        let proof = field(&p, "accountProof")?
            .as_array()
            .ok_or_else(|| IngestError::Rpc("accountProof is not an array".into()))?
            .iter()
            .map(|n| {
                let s = n.as_str().ok_or_else(|| IngestError::Rpc("proof node is not a string".into()))?;
                crate::hex::decode(s).map_err(|e| IngestError::Rpc(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let value = account_rlp(
            &quantity(&p, "nonce")?,
            &quantity(&p, "balance")?,
            &hex_field(&p, "storageHash")?,
            &hex_field(&p, "codeHash")?,
        );
        entries.push(FixtureEntry {
            key: keccak256(&addr).to_vec(),
            value,
            proof,
        });
    }
    Ok((root, entries))
}
