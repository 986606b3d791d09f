//! Ethereum gas and USD cost of publishing proofs.
//!
//! Two storage models ship. `SlotExact` charges whole 32-byte slots plus
//! calldata and the base fee. `PerKb` scales the slot-exact price of one
//! kilobyte (677,384 gas at default constants) linearly by size and is the
//! default.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::BackendProfile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GasModel {
    pub gas_per_slot: u64,
    pub calldata_gas_per_byte: u64,
    pub base_tx_gas: u64,
    pub metadata_gas_per_byte: u64,
    pub slot_bytes: u64,
    pub gas_price_eth: f64,
    pub eth_usd: f64,
}

impl Default for GasModel {
    fn default() -> Self {
        GasModel {
            gas_per_slot: 20_000,
            calldata_gas_per_byte: 16,
            base_tx_gas: 21_000,
            metadata_gas_per_byte: 68,
            slot_bytes: 32,
            gas_price_eth: 5e-8,
            eth_usd: 2000.0,
        }
    }
}

impl GasModel {
    pub fn validate(&self) -> Result<(), String> {
        let ints = [
            ("gas_per_slot", self.gas_per_slot),
            ("calldata_gas_per_byte", self.calldata_gas_per_byte),
            ("base_tx_gas", self.base_tx_gas),
            ("metadata_gas_per_byte", self.metadata_gas_per_byte),
            ("slot_bytes", self.slot_bytes),
        ];
        if let Some((name, _)) = ints.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be positive"));
        }
        if !(self.gas_price_eth > 0.0 && self.eth_usd > 0.0) {
            return Err("gas_price_eth and eth_usd must be positive".into());
        }
        Ok(())
    }

    /// Slot-exact gas for one kilobyte; the per-kb calibration point.
    pub fn gas_per_kb(&self) -> u64 {
        self.slot_exact_gas(1024)
    }

    pub fn slot_exact_gas(&self, bytes: u64) -> u64 {
        bytes.div_ceil(self.slot_bytes) * self.gas_per_slot + bytes * self.calldata_gas_per_byte + self.base_tx_gas
    }

    fn quote(&self, payload_bytes: u64, gas_used: f64, model: CostModel) -> CostQuote {
        let cost_eth = gas_used * self.gas_price_eth;
        CostQuote {
            payload_bytes,
            gas_used,
            cost_eth,
            cost_usd: cost_eth * self.eth_usd,
            model,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostModel {
    #[default]
    PerKb,
    SlotExact,
    Metadata,
}

impl fmt::Display for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostModel::PerKb => "per-kb",
            CostModel::SlotExact => "slot-exact",
            CostModel::Metadata => "metadata",
        })
    }
}

impl FromStr for CostModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per-kb" => Ok(CostModel::PerKb),
            "slot-exact" => Ok(CostModel::SlotExact),
            "metadata" => Ok(CostModel::Metadata),
            _ => Err(format!("unknown cost model {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostQuote {
    pub payload_bytes: u64,
    pub gas_used: f64,
    pub cost_eth: f64,
    pub cost_usd: f64,
    pub model: CostModel,
}

/// Storage cost of `bytes`. `Metadata` is accepted and priced as calldata
/// metadata, same as [`metadata_cost`].
pub fn storage_cost(bytes: u64, model: CostModel, gm: &GasModel) -> CostQuote {
    let gas = match model {
        CostModel::SlotExact => gm.slot_exact_gas(bytes) as f64,
        CostModel::PerKb => bytes as f64 / 1024.0 * gm.gas_per_kb() as f64,
        CostModel::Metadata => return metadata_cost(bytes, gm),
    };
    gm.quote(bytes, gas, model)
}

pub fn metadata_cost(bytes: u64, gm: &GasModel) -> CostQuote {
    gm.quote(bytes, (bytes * gm.metadata_gas_per_byte) as f64, CostModel::Metadata)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    /// `native` for the plain Merkle proof, otherwise the backend name.
    pub label: String,
    pub proof_bytes: u64,
    pub storage: CostQuote,
    pub metadata: CostQuote,
}

/// One row for the native proof followed by one per backend profile.
pub fn compare_costs(
    native_bytes: u64,
    backends: &[BackendProfile],
    model: CostModel,
    gm: &GasModel,
) -> Vec<CostRow> {
    std::iter::once(("native".to_string(), native_bytes))
        .chain(backends.iter().map(|b| (b.name.clone(), b.proof_size as u64)))
        .map(|(label, bytes)| CostRow {
            label,
            proof_bytes: bytes,
            storage: storage_cost(bytes, model, gm),
            metadata: metadata_cost(bytes, gm),
        })
        .collect()
}

pub const COST_CSV_HEADER: &str = "k,native_bytes,backend,proof_bytes,storage_usd,metadata_usd";

pub fn cost_csv_rows(k: Option<usize>, native_bytes: u64, rows: &[CostRow]) -> Vec<String> {
    let k = k.map(|k| k.to_string()).unwrap_or_default();
    rows.iter()
        .map(|r| {
            format!(
                "{k},{native_bytes},{},{},{:.2},{:.2}",
                r.label, r.proof_bytes, r.storage.cost_usd, r.metadata.cost_usd
            )
        })
        .collect()
}
