//! Sealed-bid auction simulator with fund binding.
//!
//! Bidders escrow funds at one-time contract addresses precomputed with the
//! CREATE2 rule, commit to (address, price) with a hash commitment, and prove
//! the escrowed balance to an oracle through a three-party attestation
//! without revealing the address. At reveal time the auction contract deploys
//! the fund-binding contract, drains it, opens the commitment, and settles
//! the auction on committed prices. Since a bidding transfer looks exactly
//! like any other transfer, the hidden bids share an anonymity set with all
//! fresh, silent in-window receivers; [`anonymity`] measures that set.
//!
//! Modules:
//! - [`ledger`]: account ledger, clock, CREATE2 derivation, trace export
//! - [`crypto`]: hash commitments over the 768-bit bid layout, signatures
//! - [`deco`]: source/prover/verifier balance attestation with key sharing
//! - [`auction`]: the auction state machine plus deposit/open-bid baselines
//! - [`fees`]: gas schedule and USD conversion
//! - [`anonymity`]: candidate filter, balance histogram, max-bid bound
//! - [`scenario`]: deterministic end-to-end runner and report builder
//! - [`trace`]: trace CSV wire format

pub mod anonymity;
pub mod auction;
pub mod crypto;
pub mod deco;
pub mod fees;
pub mod ledger;
pub mod scenario;
pub mod trace;

pub use auction::{AuctionHouse, AuctionParams, AuctionResult, BlockWindow, Salt};
pub use crypto::{com_open, commit, BidMessage, Commitment, Decommitment, OracleKeypair};
pub use ledger::{derive_onetime_address, keccak256, Address, LedgerState, Wei, WEI_PER_ETH};
pub use scenario::{run_scenario, Report, Scenario};
