//! Collision and preimage probabilities for an ideal `m`-bit hash and for
//! Merkle roots computed over `k` levels.
//!
//! Everything is evaluated with `expm1`/`log1p` so that probabilities around
//! `1e-76` keep full relative precision. Magnitudes below `1e-300` are carried
//! only in `log10_value`; `value` is then `0.0`.

use std::f64::consts::{LN_10, LN_2};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const LOG10_2: f64 = std::f64::consts::LOG10_2;
const LOG10_FLOOR: f64 = -300.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SecurityError {
    #[error("probability {0} is outside (0, 1)")]
    Domain(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityValue {
    pub value: f64,
    pub log10_value: f64,
}

impl ProbabilityValue {
    pub const ZERO: ProbabilityValue = ProbabilityValue {
        value: 0.0,
        log10_value: f64::NEG_INFINITY,
    };

    fn from_value(value: f64) -> Self {
        ProbabilityValue {
            value,
            log10_value: value.log10(),
        }
    }

    fn from_log10(log10_value: f64) -> Self {
        let value = if log10_value < LOG10_FLOOR {
            0.0
        } else {
            10f64.powf(log10_value)
        };
        ProbabilityValue { value, log10_value }
    }

    /// Value as `mantissa·10^exponent`, usable even when `value` underflows.
    pub fn scientific(&self) -> (f64, i32) {
        if self.log10_value == f64::NEG_INFINITY {
            return (0.0, 0);
        }
        let e = self.log10_value.floor();
        (10f64.powf(self.log10_value - e), e as i32)
    }
}

impl fmt::Display for ProbabilityValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (m, e) = self.scientific();
        write!(f, "{m:.4}e{e}")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// `2^-m + (1 - 2^-m)(1 - (1 - 2^-m)^k)`.
    #[default]
    Exact,
    /// `1 - e^(-k·2^-m)`.
    Approx,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::Approx => "approx",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Method::Exact),
            "approx" => Ok(Method::Approx),
            _ => Err(format!("unknown method {s:?} (expected exact or approx)")),
        }
    }
}

/// `1 - e^(-x)` given `ln x`, staying in log space when `x` is tiny.
fn one_minus_exp_neg(ln_x: f64) -> ProbabilityValue {
    if ln_x == f64::NEG_INFINITY {
        return ProbabilityValue::ZERO;
    }
    let log10_x = ln_x / LN_10;
    if log10_x < LOG10_FLOOR {
        // 1 - e^-x = x(1 - x/2 + …) and x is far below f64 resolution of 1.
        return ProbabilityValue::from_log10(log10_x);
    }
    ProbabilityValue::from_value(-(-ln_x.exp()).exp_m1())
}

/// Birthday-paradox collision probability among `s` samples of an `m`-bit
/// hash: `1 - e^(-s(s-1)·2^-(m+1))`.
pub fn p_collision(m: u32, s: f64) -> ProbabilityValue {
    if s < 2.0 {
        return ProbabilityValue::ZERO;
    }
    one_minus_exp_neg(s.ln() + (s - 1.0).ln() - (m as f64 + 1.0) * LN_2)
}

/// `2^-bits` for real `bits`.
fn pow2_neg(bits: f64) -> ProbabilityValue {
    ProbabilityValue::from_log10(-bits * LOG10_2)
}

pub fn p_preimage(m: u32) -> ProbabilityValue {
    pow2_neg(m as f64)
}

pub fn p_second_preimage(m: u32) -> ProbabilityValue {
    p_preimage(m)
}

/// Probability that a different leaf folds to the same root over `k` levels.
/// The adversarial variant substitutes `2^(-m/2)` for `2^-m`.
pub fn p_root_collision(m: u32, k: u64, adversarial: bool, method: Method) -> ProbabilityValue {
    let bits = if adversarial { m as f64 / 2.0 } else { m as f64 };
    root_collision_bits(bits, k, method)
}

fn root_collision_bits(bits: f64, k: u64, method: Method) -> ProbabilityValue {
    let kf = k as f64;
    let q_log10 = -bits * LOG10_2;
    if q_log10 < LOG10_FLOOR + 10.0 {
        // q = 2^-bits underflows: exact ≈ (k+1)·q, approx ≈ k·q to O(k²q²).
        return match method {
            Method::Exact => ProbabilityValue::from_log10(q_log10 + (kf + 1.0).log10()),
            Method::Approx if k == 0 => ProbabilityValue::ZERO,
            Method::Approx => ProbabilityValue::from_log10(q_log10 + kf.log10()),
        };
    }
    let q = (-bits * LN_2).exp();
    match method {
        Method::Exact => {
            let tail = -(kf * (-q).ln_1p()).exp_m1();
            ProbabilityValue::from_value(q + (1.0 - q) * tail)
        }
        Method::Approx => ProbabilityValue::from_value(-(-kf * q).exp_m1()),
    }
}

/// Samples needed to reach collision probability `p`:
/// `sqrt(-2^(m+1) ln(1-p))`.
pub fn birthday_bound(m: u32, p: f64) -> Result<f64, SecurityError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(SecurityError::Domain(p));
    }
    Ok(((m as f64 + 1.0) / 2.0).exp2() * (-(-p).ln_1p()).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub m: u32,
    pub k: u64,
    pub adversarial: bool,
    /// `exact`, `approx`, or `preimage` for the `2^-m` reference rows.
    pub method: String,
    pub probability: f64,
    pub log10_probability: f64,
}

pub const CURVE_CSV_HEADER: &str = "m,k,adversarial,method,probability,log10_probability";

impl CurveRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:e},{}",
            self.m, self.k, self.adversarial, self.method, self.probability, self.log10_probability
        )
    }
}

/// One row per `(m, k)`. With `reference`, each `m` also gets a
/// `preimage` row holding `2^-m` (`k = 0`).
pub fn curve_dump(
    m_range: impl IntoIterator<Item = u32> + Clone,
    k_range: impl IntoIterator<Item = u64> + Clone,
    adversarial: bool,
    method: Method,
    reference: bool,
) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for m in m_range {
        if reference {
            let p = p_preimage(m);
            rows.push(CurveRow {
                m,
                k: 0,
                adversarial: false,
                method: "preimage".into(),
                probability: p.value,
                log10_probability: p.log10_value,
            });
        }
        for k in k_range.clone() {
            let p = p_root_collision(m, k, adversarial, method);
            rows.push(CurveRow {
                m,
                k,
                adversarial,
                method: method.to_string(),
                probability: p.value,
                log10_probability: p.log10_value,
            });
        }
    }
    rows
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}
