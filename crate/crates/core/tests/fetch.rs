use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::process::Command;
use std::sync::Arc;
use std::thread;

use serde_json::{json, Value};
use zkpath_core::ingest::{account_rlp, encode_receipt, fetch_block_fixtures, load_fixtures, FixtureKind, IngestError};
use zkpath_core::rlp::RlpItem;
use zkpath_core::{hex, keccak256, Mpt};

type Handler = Arc<dyn Fn(&str, &Value) -> Value + Send + Sync>;

/// Minimal HTTP/1.1 JSON-RPC server on an ephemeral port.
fn serve(handler: Handler) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let handler = handler.clone();
            thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).unwrap();
                let req: Value = serde_json::from_slice(&body).unwrap();
                let result = handler(req["method"].as_str().unwrap(), &req["params"]);
                let resp = json!({"jsonrpc": "2.0", "id": req["id"], "result": result}).to_string();
                let _ = write!(
                    stream,
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    resp.len(),
                    resp
                );
            });
        }
    });
    format!("http://{addr}")
}

fn receipt(i: usize) -> Value {
    let logs: Vec<Value> = (0..i % 3)
        .map(|j| {
            json!({
                "address": hex::encode([i as u8; 20]),
                "topics": [hex::encode([j as u8; 32])],
                "data": hex::encode(vec![0xab; 40 * j]),
            })
        })
        .collect();
    json!({
        "status": if i == 2 { "0x0" } else { "0x1" },
        "cumulativeGasUsed": format!("0x{:x}", 21000 * (i + 1)),
        "logsBloom": hex::encode([i as u8; 256]),
        "logs": logs,
        "type": format!("0x{:x}", i % 3),
    })
}

fn receipt_server(n: usize, corrupt_root: bool) -> String {
    let pairs: Vec<_> = (0..n)
        .map(|i| (RlpItem::u64(i as u64).encode(), encode_receipt(&receipt(i)).unwrap()))
        .collect();
    let mut root = Mpt::build(&pairs).unwrap().root();
    if corrupt_root {
        root.0[0] ^= 1;
    }
    serve(Arc::new(move |method, params| match method {
        "eth_getBlockByNumber" => json!({
            "number": params[0],
            "receiptsRoot": root,
            "stateRoot": root,
            "transactions": (0..n).map(|i| hex::encode(keccak256([i as u8]))).collect::<Vec<_>>(),
        }),
        "eth_chainId" => json!("0x1"),
        "eth_getTransactionReceipt" => {
            let h = params[0].as_str().unwrap();
            let i = (0..n).find(|&i| hex::encode(keccak256([i as u8])) == h).unwrap();
            receipt(i)
        }
        _ => Value::Null,
    }))
}

struct Account {
    address: [u8; 20],
    nonce: u64,
    balance: u64,
}

fn state_server() -> (String, Vec<String>) {
    let accounts: Vec<Account> = (0..50u64)
        .map(|i| Account {
            address: keccak256(i.to_be_bytes()).0[..20].try_into().unwrap(),
            nonce: i,
            balance: 1_000_000_007 * i,
        })
        .collect();
    let code_hash = keccak256([]);
    let storage = zkpath_core::mpt::empty_root();
    let be = |v: u64| -> Vec<u8> { v.to_be_bytes().iter().copied().skip_while(|&b| b == 0).collect() };
    let pairs: Vec<_> = accounts
        .iter()
        .map(|a| {
            (
                keccak256(a.address).to_vec(),
                account_rlp(&be(a.nonce), &be(a.balance), storage.as_ref(), code_hash.as_ref()),
            )
        })
        .collect();
    let trie = Mpt::build(&pairs).unwrap();
    let root = trie.root();
    let by_addr: HashMap<String, (Vec<String>, u64, u64)> = accounts
        .iter()
        .map(|a| {
            let p = trie.get_proof(keccak256(a.address).as_ref()).unwrap();
            (hex::encode(a.address), (p.nodes.iter().map(hex::encode).collect(), a.nonce, a.balance))
        })
        .collect();
    let keys = accounts.iter().take(5).map(|a| hex::encode(a.address)).collect();
    let url = serve(Arc::new(move |method, params| match method {
        "eth_getBlockByNumber" => json!({"stateRoot": root, "receiptsRoot": root, "transactions": []}),
        "eth_chainId" => json!("0x1"),
        "eth_getProof" => {
            let (nodes, nonce, balance) = &by_addr[params[0].as_str().unwrap()];
            json!({
                "accountProof": nodes,
                "nonce": format!("0x{nonce:x}"),
                "balance": format!("0x{balance:x}"),
                "storageHash": storage,
                "codeHash": code_hash,
            })
        }
        _ => Value::Null,
    }));
    (url, keys)
}

#[test]
fn receipts_rebuilt_and_verified() {
    let url = receipt_server(9, false);
    let set = fetch_block_fixtures(&url, 17, FixtureKind::Receipts, &[]).unwrap();
    assert_eq!(set.entries.len(), 9);
    assert_eq!(set.block_number, Some(17));
    assert_eq!(set.chain_id, Some(1));
    set.verify().unwrap();

    let picked = fetch_block_fixtures(&url, 17, FixtureKind::Receipts, &["3".into(), "8".into()]).unwrap();
    assert_eq!(picked.entries.len(), 2);
    assert_eq!(picked.entries[0].key, RlpItem::u64(3).encode());
}

#[test]
fn receipts_root_mismatch_is_integrity_error() {
    let url = receipt_server(4, true);
    match fetch_block_fixtures(&url, 1, FixtureKind::Receipts, &[]) {
        Err(IngestError::Integrity { .. }) => {}
        other => panic!("expected integrity error, got {other:?}"),
    }
}

#[test]
fn state_proofs_verified() {
    let (url, keys) = state_server();
    let set = fetch_block_fixtures(&url, 5, FixtureKind::StateAccounts, &keys).unwrap();
    assert_eq!(set.entries.len(), 5);
    for p in set.proofs() {
        p.verify().unwrap();
        assert_eq!(p.key.len(), 32);
    }
}

#[test]
fn cli_fetch_is_atomic() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_zkpath");

    let good = dir.path().join("good.json");
    let url = receipt_server(5, false);
    let st = Command::new(bin)
        .args(["fetch", "--kind", "receipts", "--block", "3", "--out"])
        .arg(&good)
        .env("ZKPATH_RPC_URL", &url)
        .status()
        .unwrap();
    assert!(st.success());
    assert_eq!(load_fixtures(&good).unwrap().entries.len(), 5);

    let bad = dir.path().join("bad.json");
    let url = receipt_server(5, true);
    let st = Command::new(bin)
        .args(["fetch", "--kind", "receipts", "--block", "3", "--rpc-url", &url, "--out"])
        .arg(&bad)
        .status()
        .unwrap();
    assert!(!st.success());
    assert!(!bad.exists());

    let st = Command::new(bin)
        .args(["fetch", "--kind", "receipts", "--block", "3", "--rpc-url", "http://127.0.0.1:1", "--out"])
        .arg(&bad)
        .status()
        .unwrap();
    assert!(!st.success());
    assert!(!bad.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}
