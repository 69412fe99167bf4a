//! Gas-and-fee accounting overlay.
//!
//! The ledger burns nothing; costs are pure arithmetic over a gas schedule.
//! The bundled default schedule carries the measured gas figures for each
//! protocol operation, the simple-deposit baseline, and the open-bid
//! baseline. USD figures derive from gas price (gwei) and an ETH/USD rate,
//! rounded half-up to cents.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Operations with a gas cost attached.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpTag {
    SendFunds,
    CommitBid,
    ProveBid,
    RevealBid,
    StartAuction,
    FinalizeAuction,
    DepositCommitBid,
    DepositRevealBid,
    OpenBidding,
}

impl OpTag {
    pub const ALL: [OpTag; 9] = [
        OpTag::SendFunds,
        OpTag::CommitBid,
        OpTag::ProveBid,
        OpTag::RevealBid,
        OpTag::StartAuction,
        OpTag::FinalizeAuction,
        OpTag::DepositCommitBid,
        OpTag::DepositRevealBid,
        OpTag::OpenBidding,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            OpTag::SendFunds => "Sending funds",
            OpTag::CommitBid => "Committing bid",
            OpTag::ProveBid => "Proving bid",
            OpTag::RevealBid => "Revealing bid",
            OpTag::StartAuction => "Starting auction",
            OpTag::FinalizeAuction => "Finalizing auction",
            OpTag::DepositCommitBid => "Committing bid (deposit)",
            OpTag::DepositRevealBid => "Revealing bid (deposit)",
            OpTag::OpenBidding => "Bidding (open)",
        }
    }
}

/// Protocol variant under comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Proposed,
    SimpleDeposit,
    OpenBid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Bidder,
    Seller,
}

/// Gas units per operation tag.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeeSchedule {
    gas: BTreeMap<OpTag, u64>,
}

impl Default for FeeSchedule {
    fn default() -> Self {
        Self::default_table()
    }
}

impl FeeSchedule {
    /// The measured gas figures bundled as data. The simulator has no EVM;
    /// these constants are the quantitative basis of every cost figure.
    pub fn default_table() -> Self {
        let gas = BTreeMap::from([
            (OpTag::SendFunds, 21_000),
            (OpTag::CommitBid, 68_903),
            (OpTag::ProveBid, 52_755),
            (OpTag::RevealBid, 122_546),
            (OpTag::StartAuction, 166_510),
            (OpTag::FinalizeAuction, 40_312),
            (OpTag::DepositCommitBid, 110_928),
            (OpTag::DepositRevealBid, 83_119),
            (OpTag::OpenBidding, 71_137),
        ]);
        FeeSchedule { gas }
    }

    pub fn from_json(json: &str) -> Result<Self, FeeError> {
        let schedule: FeeSchedule = serde_json::from_str(json)?;
        for tag in OpTag::ALL {
            match schedule.gas.get(&tag) {
                None => return Err(FeeError::MissingTag(tag)),
                Some(0) => return Err(FeeError::ZeroGas(tag)),
                Some(_) => {}
            }
        }
        Ok(schedule)
    }

    pub fn gas(&self, tag: OpTag) -> u64 {
        self.gas.get(&tag).copied().unwrap_or(0)
    }
}

#[derive(Debug, Error)]
pub enum FeeError {
    #[error("schedule json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schedule misses operation tag {0:?}")]
    MissingTag(OpTag),
    #[error("gas for {0:?} must be a positive integer")]
    ZeroGas(OpTag),
}

/// Market conditions the conversion runs under.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub gas_price_gwei: f64,
    pub eth_usd: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams {
            gas_price_gwei: 45.0,
            eth_usd: 3200.0,
        }
    }
}

/// USD amount held as integer cents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Usd(pub i64);

impl Usd {
    pub fn cents(&self) -> i64 {
        self.0
    }

    /// True when within `tolerance_cents` of `other`.
    pub fn within(&self, other: Usd, tolerance_cents: i64) -> bool {
        (self.0 - other.0).abs() <= tolerance_cents
    }
}

impl fmt::Display for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl Serialize for Usd {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// `gas * gas_price * 10^-9 * eth_usd`, rounded half-up to cents.
pub fn fee_usd(gas: u64, params: &MarketParams) -> Usd {
    let dollars = gas as f64 * params.gas_price_gwei * params.eth_usd / 1e9;
    Usd((dollars * 100.0).round() as i64)
}

/// Operations a role performs once per auction under a variant. Seller-side
/// operations are shared across variants; the baselines reuse the same
/// contract skeleton.
pub fn variant_ops(variant: Variant, role: Role) -> &'static [OpTag] {
    match (variant, role) {
        (Variant::Proposed, Role::Bidder) => &[
            OpTag::SendFunds,
            OpTag::CommitBid,
            OpTag::ProveBid,
            OpTag::RevealBid,
        ],
        (Variant::SimpleDeposit, Role::Bidder) => {
            &[OpTag::DepositCommitBid, OpTag::DepositRevealBid]
        }
        (Variant::OpenBid, Role::Bidder) => &[OpTag::OpenBidding],
        (_, Role::Seller) => &[OpTag::StartAuction, OpTag::FinalizeAuction],
    }
}

/// Total (gas, usd) one role pays under a variant.
pub fn role_cost(
    schedule: &FeeSchedule,
    variant: Variant,
    role: Role,
    params: &MarketParams,
) -> (u64, Usd) {
    let gas: u64 = variant_ops(variant, role)
        .iter()
        .map(|tag| schedule.gas(*tag))
        .sum();
    (gas, fee_usd(gas, params))
}

/// Componentwise `role_cost(a) - role_cost(b)`: (gas delta, usd-cents delta).
pub fn overhead(
    schedule: &FeeSchedule,
    a: Variant,
    b: Variant,
    role: Role,
    params: &MarketParams,
) -> (i64, Usd) {
    let (gas_a, usd_a) = role_cost(schedule, a, role, params);
    let (gas_b, usd_b) = role_cost(schedule, b, role, params);
    (gas_a as i64 - gas_b as i64, Usd(usd_a.0 - usd_b.0))
}
