use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use zkpath_core::aggregation::{prove_inclusion, setup_aggregation, verify_inclusion, Mode, RecursiveProof};
use zkpath_core::backend::BackendId;
use zkpath_core::bench::{bench_csv, run_bench, BenchConfig, Scenario};
use zkpath_core::cost::{compare_costs, cost_csv_rows, CostModel, GasModel, COST_CSV_HEADER};
use zkpath_core::ingest::{fetch_block_fixtures, gen_synthetic_state, save_fixtures, FixtureKind, RPC_URL_ENV};
use zkpath_core::merkle::{build_tree, MerklePath, PaddingPolicy};
use zkpath_core::mpt::Mpt;
use zkpath_core::security::{birthday_bound, curve_csv, curve_dump, p_root_collision, Method};
use zkpath_core::{hex, Digest};

#[derive(Parser)]
#[command(name = "zkpath", version, about = "Aggregated Merkle and Patricia trie inclusion proofs")]
struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TreeKind {
    Binary,
    Mpt,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct TreeInput {
    #[arg(long, value_enum, default_value = "binary")]
    tree: TreeKind,
    /// Binary tree: one leaf per line. Patricia trie: JSON list of {"key","value"} hex pairs.
    #[arg(long)]
    input: PathBuf,
    /// Binary leaves are hex strings rather than raw lines.
    #[arg(long)]
    hex: bool,
    #[arg(long)]
    strict_padding: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build a tree and print its root.
    Build(TreeInput),
    /// Extract an inclusion path for one leaf.
    Path {
        #[command(flatten)]
        tree: TreeInput,
        /// Leaf index (binary tree).
        #[arg(long)]
        index: Option<usize>,
        /// Hex key (Patricia trie).
        #[arg(long)]
        key: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate an inclusion path into one proof.
    Prove {
        /// Path file written by `zkpath path`.
        #[arg(long)]
        path: PathBuf,
        #[arg(long, default_value = "reexec")]
        backend: BackendId,
        #[arg(long, default_value = "simplified")]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check an aggregated proof against a leaf hash and root.
    Verify {
        #[arg(long)]
        proof: PathBuf,
        /// Path file supplying the leaf hash and root.
        #[arg(long)]
        path: Option<PathBuf>,
        #[arg(long)]
        leaf_hash: Option<Digest>,
        #[arg(long)]
        root: Option<Digest>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Collision probabilities and birthday bounds.
    Analyze {
        #[arg(long, default_value_t = 256)]
        m: u32,
        #[arg(long, default_value_t = 0)]
        k: u64,
        #[arg(long)]
        adversarial: bool,
        #[arg(long, default_value = "exact")]
        method: Method,
        /// Samples needed to reach this collision probability.
        #[arg(long)]
        birthday: Option<f64>,
        /// Emit a curve for k = 0..=K (CSV).
        #[arg(long)]
        curve_k: Option<u64>,
    },
    /// Storage and metadata cost of proofs.
    Cost {
        #[arg(long)]
        bytes: u64,
        #[arg(long, default_value = "per-kb")]
        model: CostModel,
        /// Compare against every simulated backend.
        #[arg(long)]
        compare: bool,
        #[arg(long)]
        k: Option<usize>,
        /// TOML or JSON file overriding gas constants.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        gas_price: Option<f64>,
        #[arg(long)]
        eth_usd: Option<f64>,
    },
    /// Download and verify block fixtures over JSON-RPC.
    Fetch {
        #[arg(long)]
        kind: FixtureKind,
        #[arg(long)]
        block: u64,
        /// Transaction indices (receipts) or addresses (state), comma separated.
        #[arg(long, value_delimiter = ',')]
        keys: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = RPC_URL_ENV)]
        rpc_url: String,
    },
    /// Write a synthetic state fixture.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure proving and verification across path lengths.
    Bench {
        #[arg(long, default_value = "synthetic")]
        scenario: Scenario,
        /// Comma separated list or `start..=end:step`.
        #[arg(long, default_value = "4..=64:4")]
        k: String,
        #[arg(long, default_value = "sim-stark")]
        backend: BackendId,
        #[arg(long, default_value = "simplified")]
        mode: Mode,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

/// File produced by `zkpath path` and consumed by `prove` and `verify`.
#[derive(Serialize, Deserialize)]
struct PathFile {
    #[serde(with = "zkpath_core::hex::bytes")]
    leaf: Vec<u8>,
    path: MerklePath,
}

#[derive(Deserialize)]
struct Pair {
    key: String,
    value: String,
}

enum Failure {
    Reject(String),
    Usage(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<Value, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), Failure> {
    let s = serde_json::to_string_pretty(v)?;
    std::fs::write(path, s + "\n").map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn binary_leaves(t: &TreeInput) -> Result<Vec<Vec<u8>>, Failure> {
    read(&t.input)?
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| if t.hex { hex::decode(l.trim()).map_err(Failure::from) } else { Ok(l.as_bytes().to_vec()) })
        .collect()
}

fn mpt_pairs(t: &TreeInput) -> Result<Vec<(Vec<u8>, Vec<u8>)>, Failure> {
    let pairs: Vec<Pair> = serde_json::from_str(&read(&t.input)?)?;
    pairs
        .into_iter()
        .map(|p| Ok((hex::decode(&p.key)?, hex::decode(&p.value)?)))
        .collect()
}

fn policy(t: &TreeInput) -> PaddingPolicy {
    if t.strict_padding {
        PaddingPolicy::RejectNonPowerOfTwo
    } else {
        PaddingPolicy::DuplicateLast
    }
}

fn cmd_build(t: &TreeInput) -> CmdResult {
    match t.tree {
        TreeKind::Binary => {
            let tree = build_tree(&binary_leaves(t)?, policy(t))?;
            Ok(json!({"root": tree.root(), "leaf_count": tree.leaf_count, "height": tree.height()}))
        }
        TreeKind::Mpt => {
            let trie = Mpt::build(&mpt_pairs(t)?)?;
            Ok(json!({"root": trie.root(), "entries": trie.len()}))
        }
    }
}

fn cmd_path(t: &TreeInput, index: Option<usize>, key: Option<&str>, out: Option<&Path>) -> CmdResult {
    let file = match t.tree {
        TreeKind::Binary => {
            let index = index.ok_or_else(|| Failure::Usage("--index is required for binary trees".into()))?;
            let leaves = binary_leaves(t)?;
            let tree = build_tree(&leaves, policy(t))?;
            let path = tree.gen_path(index)?;
            PathFile {
                leaf: leaves[index].clone(),
                path,
            }
        }
        TreeKind::Mpt => {
            let key = hex::decode(key.ok_or_else(|| Failure::Usage("--key is required for tries".into()))?)?;
            let proof = Mpt::build(&mpt_pairs(t)?)?.get_proof(&key)?;
            PathFile {
                path: MerklePath::from_mpt_proof(&proof),
                leaf: proof.value,
            }
        }
    };
    if let Some(out) = out {
        write_json(out, &file)?;
    }
    Ok(json!({
        "k": file.path.len(),
        "native_size": file.path.native_size(),
        "leaf_hash": file.path.leaf_hash,
        "root": file.path.expected_root,
    }))
}

fn load_path_file(p: &Path) -> Result<PathFile, Failure> {
    Ok(serde_json::from_str(&read(p)?)?)
}

fn cmd_prove(path: &Path, backend: BackendId, mode: Mode, seed: u64, out: Option<&Path>) -> CmdResult {
    let pf = load_path_file(path)?;
    let (pk, _) = setup_aggregation(backend, seed)?;
    let rp = prove_inclusion(&pk, &pf.leaf, &pf.path, mode)?;
    if let Some(out) = out {
        write_json(out, &rp)?;
    }
    Ok(json!({
        "backend": rp.backend,
        "mode": rp.mode.to_string(),
        "k": rp.k,
        "proof_size": rp.size(),
        "root": rp.root,
    }))
}

fn cmd_verify(
    proof: &Path,
    path: Option<&Path>,
    leaf_hash: Option<Digest>,
    root: Option<Digest>,
    seed: u64,
) -> CmdResult {
    let rp: RecursiveProof = serde_json::from_str(&read(proof)?)?;
    let (leaf_hash, root) = match (path, leaf_hash, root) {
        (_, Some(l), Some(r)) => (l, r),
        (Some(p), _, _) => {
            let pf = load_path_file(p)?;
            (pf.path.leaf_hash, pf.path.expected_root)
        }
        _ => return Err(Failure::Usage("give --path or both --leaf-hash and --root".into())),
    };
    let (_, vk) = setup_aggregation(rp.backend, seed)?;
    verify_inclusion(&vk, &leaf_hash, &root, &rp).map_err(|e| Failure::Reject(e.to_string()))?;
    Ok(json!({"result": "accept"}))
}

fn cmd_analyze(
    m: u32,
    k: u64,
    adversarial: bool,
    method: Method,
    birthday: Option<f64>,
    curve_k: Option<u64>,
    as_json: bool,
) -> CmdResult {
    if m == 0 {
        return Err(Failure::Usage("--m must be positive".into()));
    }
    if let Some(kmax) = curve_k {
        let rows = curve_dump(m..=m, 0..=kmax, adversarial, method, true);
        if as_json {
            return Ok(serde_json::to_value(rows)?);
        }
        print!("{}", curve_csv(&rows));
        return Ok(Value::Null);
    }
    let p = p_root_collision(m, k, adversarial, method);
    let mut v = json!({
        "m": m,
        "k": k,
        "adversarial": adversarial,
        "method": method.to_string(),
        "probability": p.value,
        "log10_probability": p.log10_value,
        "display": p.to_string(),
    });
    if let Some(target) = birthday {
        v["birthday_samples"] = json!(birthday_bound(m, target)?);
    }
    Ok(v)
}

fn gas_model(config: Option<&Path>, gas_price: Option<f64>, eth_usd: Option<f64>) -> Result<GasModel, Failure> {
    let mut gm = match config {
        None => GasModel::default(),
        Some(p) => {
            let text = read(p)?;
            if p.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text)?
            } else {
                toml::from_str(&text)?
            }
        }
    };
    if let Some(g) = gas_price {
        gm.gas_price_eth = g;
    }
    if let Some(u) = eth_usd {
        gm.eth_usd = u;
    }
    gm.validate().map_err(Failure::Usage)?;
    Ok(gm)
}

fn cmd_cost(bytes: u64, model: CostModel, compare: bool, k: Option<usize>, gm: &GasModel, as_json: bool) -> CmdResult {
    let profiles: Vec<_> = if compare {
        BackendId::SIMULATED.iter().filter_map(|b| b.profile()).collect()
    } else {
        vec![]
    };
    let rows = compare_costs(bytes, &profiles, model, gm);
    if as_json {
        return Ok(json!({"k": k, "rows": rows}));
    }
    println!("{COST_CSV_HEADER}");
    for line in cost_csv_rows(k, bytes, &rows) {
        println!("{line}");
    }
    Ok(Value::Null)
}

fn parse_k_list(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || Failure::Usage(format!("bad k list {s:?}"));
    if let Some((range, step)) = s.split_once(':') {
        let (a, b) = range.split_once("..=").ok_or_else(bad)?;
        let (a, b, step): (usize, usize, usize) =
            (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?, step.parse().map_err(|_| bad())?);
        if step == 0 {
            return Err(bad());
        }
        return Ok((a..=b).step_by(step).collect());
    }
    s.split(',').filter(|p| !p.is_empty()).map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Build(t) => cmd_build(&t),
        Command::Path { tree, index, key, out } => cmd_path(&tree, index, key.as_deref(), out.as_deref()),
        Command::Prove {
            path,
            backend,
            mode,
            seed,
            out,
        } => cmd_prove(&path, backend, mode, seed, out.as_deref()),
        Command::Verify {
            proof,
            path,
            leaf_hash,
            root,
            seed,
        } => cmd_verify(&proof, path.as_deref(), leaf_hash, root, seed),
        Command::Analyze {
            m,
            k,
            adversarial,
            method,
            birthday,
            curve_k,
        } => cmd_analyze(m, k, adversarial, method, birthday, curve_k, cli.json),
        Command::Cost {
            bytes,
            model,
            compare,
            k,
            config,
            gas_price,
            eth_usd,
        } => {
            let gm = gas_model(config.as_deref(), gas_price, eth_usd)?;
            cmd_cost(bytes, model, compare, k, &gm, cli.json)
        }
        Command::Fetch {
            kind,
            block,
            keys,
            out,
            rpc_url,
        } => {
            let set = fetch_block_fixtures(&rpc_url, block, kind, &keys)?;
            save_fixtures(&set, &out)?;
            Ok(json!({"root": set.root, "entries": set.entries.len(), "out": out}))
        }
        Command::Synth { count, seed, out } => {
            let set = gen_synthetic_state(count, seed)?;
            save_fixtures(&set, &out)?;
            Ok(json!({"root": set.root, "entries": set.entries.len(), "out": out}))
        }
        Command::Bench {
            scenario,
            k,
            backend,
            mode,
            repetitions,
            seed,
            fixtures,
            format,
        } => {
            let cfg = BenchConfig {
                scenario,
                k_list: parse_k_list(&k)?,
                backend,
                mode,
                repetitions,
                seed,
                fixtures,
                ..BenchConfig::default()
            };
            let rows = run_bench(&cfg)?;
            match (format, cli.json) {
                (Format::Json, _) | (_, true) => Ok(serde_json::to_value(rows)?),
                (Format::Csv, false) => {
                    print!("{}", bench_csv(&rows));
                    Ok(Value::Null)
                }
            }
        }
    }
}

fn print_human(v: &Value) {
    match v {
        Value::Null => {}
        Value::Object(map) => {
            for (k, val) in map {
                match val {
                    Value::String(s) => println!("{k}: {s}"),
                    other => println!("{k}: {other}"),
                }
            }
        }
        other => println!("{other}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let as_json = cli.json;
    match run(cli) {
        Ok(v) => {
            if as_json && !v.is_null() {
                println!("{v}");
            } else {
                print_human(&v);
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Reject(reason)) => {
            if as_json {
                println!("{}", json!({"result": "reject", "reason": reason}));
            }
            eprintln!("rejected: {reason}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
