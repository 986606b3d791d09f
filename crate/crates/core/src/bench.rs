//! Benchmark harness producing per-k measurement rows.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::{prove_inclusion, setup_aggregation, verify_inclusion, AggregationError, Mode};
use crate::backend::{BackendError, BackendId};
use crate::hash::{keccak256, Digest};
use crate::ingest::{load_fixtures, FixtureKind, IngestError, SyntheticAccount};
use crate::merkle::{fold, AuthStep, MerklePath, Side};

/// Measurement columns first, then backend and scenario.
pub const BENCH_CSV_HEADER: &str = "k,leaf_size_bytes,native_proof_size_bytes,generation_time_s,\
verification_time_s,proof_size_bytes,native_verification_time_s,backend,scenario";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Synthetic,
    Receipt,
    State,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::Synthetic => "synthetic",
            Scenario::Receipt => "receipt",
            Scenario::State => "state",
        })
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "synthetic" => Ok(Scenario::Synthetic),
            "receipt" | "receipts" => Ok(Scenario::Receipt),
            "state" => Ok(Scenario::State),
            _ => Err(format!("unknown scenario {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub k: usize,
    pub leaf_size_bytes: usize,
    pub native_proof_size_bytes: usize,
    pub generation_time_s: f64,
    pub verification_time_s: f64,
    pub proof_size_bytes: usize,
    pub native_verification_time_s: f64,
    pub backend: BackendId,
    pub scenario: Scenario,
}

impl BenchRecord {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.6e},{:.6e},{},{:.6e},{},{}",
            self.k,
            self.leaf_size_bytes,
            self.native_proof_size_bytes,
            self.generation_time_s,
            self.verification_time_s,
            self.proof_size_bytes,
            self.native_verification_time_s,
            self.backend,
            self.scenario
        )
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub scenario: Scenario,
    /// Target path lengths. Empty means "whatever the fixtures contain".
    pub k_list: Vec<usize>,
    pub backend: BackendId,
    pub mode: Mode,
    pub repetitions: usize,
    pub seed: u64,
    /// Fixture file for the receipt and state scenarios.
    pub fixtures: Option<PathBuf>,
    /// Inner loop count for the native fold timer.
    pub native_iterations: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            scenario: Scenario::Synthetic,
            k_list: (4..=64).step_by(4).collect(),
            backend: BackendId::SimStark,
            mode: Mode::Simplified,
            repetitions: 3,
            seed: 0,
            fixtures: None,
            native_iterations: 1000,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("no fixtures for the {scenario} scenario at {path}; create them with `{command}`")]
    MissingFixtures {
        scenario: Scenario,
        path: String,
        command: String,
    },
    #[error("fixture kind does not match the {0} scenario")]
    WrongKind(Scenario),
    #[error("invalid bench configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error("benchmark proof was rejected: {0}")]
    Rejected(String),
}

/// One benchmark input: a leaf and a path that folds to its root.
#[derive(Clone, Debug)]
pub struct BenchCase {
    pub leaf: Vec<u8>,
    pub path: MerklePath,
}

/// A random binary path of exactly `k` steps. Only the nodes on the path are
/// materialised, which stands in for a full tree of `2^k` leaves.
pub fn synthetic_case<R: Rng>(k: usize, rng: &mut R) -> BenchCase {
    let leaf = SyntheticAccount::random(rng).rlp();
    let leaf_hash = keccak256(&leaf);
    let steps: Vec<AuthStep> = (0..k)
        .map(|_| {
            let mut sibling = [0u8; 32];
            rng.fill(&mut sibling);
            let side = if rng.gen() { Side::Left } else { Side::Right };
            AuthStep::Sibling {
                sibling: Digest(sibling),
                side,
            }
        })
        .collect();
    let expected_root = fold(&leaf_hash, &steps).expect("sibling steps always fold");
    BenchCase {
        leaf,
        path: MerklePath {
            leaf_hash,
            expected_root,
            steps,
        },
    }
}

fn fixture_cases(cfg: &BenchConfig) -> Result<Vec<BenchCase>, BenchError> {
    let kind = match cfg.scenario {
        Scenario::Receipt => FixtureKind::Receipts,
        _ => FixtureKind::StateAccounts,
    };
    let kind_flag = match kind {
        FixtureKind::Receipts => "receipts",
        FixtureKind::StateAccounts => "state",
    };
    let path = cfg
        .fixtures
        .clone()
        .unwrap_or_else(|| default_fixture_path(cfg.scenario));
    if !path.exists() {
        return Err(BenchError::MissingFixtures {
            scenario: cfg.scenario,
            path: path.display().to_string(),
            command: format!(
                "zkpath fetch --kind {kind_flag} --block <number> --out {} --rpc-url <url>",
                path.display()
            ),
        });
    }
    let set = load_fixtures(&path)?;
    if set.kind != kind {
        return Err(BenchError::WrongKind(cfg.scenario));
    }
    let mut by_k: Vec<BenchCase> = Vec::new();
    for proof in set.proofs() {
        let k = proof.path_len();
        let wanted = cfg.k_list.is_empty() || cfg.k_list.contains(&k);
        if wanted && !by_k.iter().any(|c| c.path.len() == k) {
            by_k.push(BenchCase {
                path: MerklePath::from_mpt_proof(&proof),
                leaf: proof.value,
            });
        }
    }
    by_k.sort_by_key(|c| c.path.len());
    Ok(by_k)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn time_native(case: &BenchCase, iterations: usize) -> f64 {
    let start = Instant::now();
    for _ in 0..iterations {
        let root = fold(std::hint::black_box(&case.path.leaf_hash), &case.path.steps);
        std::hint::black_box(root.ok());
    }
    start.elapsed().as_secs_f64() / iterations as f64
}

/// Runs the configured scenario and returns one row per k, each holding
/// medians over the repetitions.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRecord>, BenchError> {
    if cfg.repetitions == 0 || cfg.native_iterations == 0 {
        return Err(BenchError::Config("repetitions and native iterations must be positive".into()));
    }
    let cases = match cfg.scenario {
        Scenario::Synthetic => {
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
            cfg.k_list.iter().map(|&k| synthetic_case(k, &mut rng)).collect()
        }
        _ => fixture_cases(cfg)?,
    };
    let (pk, vk) = setup_aggregation(cfg.backend, cfg.seed)?;
    let mut out = Vec::with_capacity(cases.len());
    for case in &cases {
        let mut gen = Vec::with_capacity(cfg.repetitions);
        let mut ver = Vec::with_capacity(cfg.repetitions);
        let mut native = Vec::with_capacity(cfg.repetitions);
        let mut size = 0;
        for _ in 0..cfg.repetitions {
            let t = Instant::now();
            let rp = prove_inclusion(&pk, &case.leaf, &case.path, cfg.mode)?;
            gen.push(t.elapsed().as_secs_f64());
            let t = Instant::now();
            verify_inclusion(&vk, &case.path.leaf_hash, &case.path.expected_root, &rp)
                .map_err(|e| BenchError::Rejected(e.to_string()))?;
            ver.push(t.elapsed().as_secs_f64());
            native.push(time_native(case, cfg.native_iterations));
            size = rp.size();
        }
        out.push(BenchRecord {
            k: case.path.len(),
            leaf_size_bytes: case.leaf.len(),
            native_proof_size_bytes: case.path.native_size(),
            generation_time_s: median(gen),
            verification_time_s: median(ver),
            proof_size_bytes: size,
            native_verification_time_s: median(native),
            backend: cfg.backend,
            scenario: cfg.scenario,
        });
    }
    Ok(out)
}

pub fn bench_csv(records: &[BenchRecord]) -> String {
    let mut s = String::from(BENCH_CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            r[t] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut num, mut dx, mut dy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mean) * (b - mean);
        dx += (a - mean).powi(2);
        dy += (b - mean).powi(2);
    }
    if dx == 0.0 || dy == 0.0 {
        0.0
    } else {
        num / (dx * dy).sqrt()
    }
}

pub fn default_fixture_path(scenario: Scenario) -> PathBuf {
    Path::new("fixtures").join(format!("{scenario}.json"))
}
