//! The auction-contract state machine, plus the simple-deposit and open-bid
//! baselines used for fee comparisons.
//!
//! Flow of the main protocol: a seller starts an auction; bidders submit
//! commitments over (one-time address, price) during the bidding window and
//! back them with oracle credentials; during the revealing window the
//! contract deploys the fund-binding contract at the salt-derived address,
//! withdraws its full balance, opens the commitment, and tracks the highest
//! committed price while refunding everyone else; finalization pays the
//! seller. Funds of bidders who never reveal stay locked at their one-time
//! addresses: only the auction contract can deploy there or withdraw, and it
//! only does so with a bidder-supplied salt.

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{com_open, BidMessage, Commitment, Decommitment, OracleVerifyingKey};
use crate::deco::{credential_message, CommitmentRegistry, OracleCredential};
use crate::ledger::{keccak256, Address, LedgerError, LedgerState, Wei};

/// Inclusive block window. The end block is the last block that belongs to
/// the window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockWindow {
    pub start: u64,
    pub end: u64,
}

impl BlockWindow {
    pub fn new(start: u64, end: u64) -> Self {
        BlockWindow { start, end }
    }

    pub fn contains(&self, block: u64) -> bool {
        block >= self.start && block <= self.end
    }

    fn is_valid(&self) -> bool {
        self.start <= self.end
    }
}

/// Where an auction stands relative to the ledger clock.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    BeforeBidding,
    Bidding,
    BetweenWindows,
    Revealing,
    RevealingEnded,
    Finalized,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Phase::BeforeBidding => "before-bidding",
            Phase::Bidding => "bidding",
            Phase::BetweenWindows => "between-windows",
            Phase::Revealing => "revealing",
            Phase::RevealingEnded => "revealing-ended",
            Phase::Finalized => "finalized",
        };
        f.write_str(s)
    }
}

/// Immutable per-auction parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuctionConfig {
    pub auction_id: u64,
    pub seller: Address,
    pub bidding_window: BlockWindow,
    pub revealing_window: BlockWindow,
    pub contract_address: Address,
    pub fundbinding_bytecode_hash: [u8; 32],
    /// Opaque stand-in for the auctioned item; handed to the winner.
    pub item_token: String,
}

/// Salt a bidder feeds into one-time address derivation: auction id, the
/// bidder's revealing address, and 32 random bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Salt {
    pub auction_id: u64,
    pub bidder_reveal_address: Address,
    pub random: [u8; 32],
}

impl Salt {
    /// `auction_id (8 bytes BE) || address (20 bytes) || random (32 bytes)`.
    pub fn to_bytes(&self) -> [u8; 60] {
        let mut out = [0u8; 60];
        out[..8].copy_from_slice(&self.auction_id.to_be_bytes());
        out[8..28].copy_from_slice(self.bidder_reveal_address.as_bytes());
        out[28..].copy_from_slice(&self.random);
        out
    }

    /// CREATE2 requires exactly 32 salt bytes; the variable-length salt is
    /// reduced by KECCAK-256.
    pub fn salt32(&self) -> [u8; 32] {
        keccak256(&self.to_bytes())
    }
}

/// The one-time address this salt produces under an auction's parameters.
pub fn onetime_address_for_salt(config: &AuctionConfig, salt: &Salt) -> Address {
    crate::ledger::derive_onetime_address(
        config.contract_address,
        &salt.salt32(),
        &config.fundbinding_bytecode_hash,
    )
}

/// Draws a fresh salt and precomputes the one-time address for it.
pub fn make_onetime_address<R: RngCore + ?Sized>(
    config: &AuctionConfig,
    bidder_reveal_address: Address,
    rng: &mut R,
) -> (Address, Salt) {
    let mut random = [0u8; 32];
    rng.fill_bytes(&mut random);
    let salt = Salt {
        auction_id: config.auction_id,
        bidder_reveal_address,
        random,
    };
    (onetime_address_for_salt(config, &salt), salt)
}

/// What a successful reveal recorded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealedBid {
    pub price: Wei,
    pub onetime_address: Address,
    /// Full balance pulled out of the one-time contract at reveal time.
    pub withdrawn: Wei,
    pub reveal_sender: Address,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BidRecord {
    pub bid_id: u64,
    pub commitment: Commitment,
    pub attested: bool,
    pub credential: Option<OracleCredential>,
    pub revealed: Option<RevealedBid>,
}

/// Ledger effects of one reveal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RevealOutcome {
    pub bid_id: u64,
    pub became_highest: bool,
    pub withdrawn: Wei,
    /// Sent back to the revealing address (excess over the committed price,
    /// plus the price itself when the bid did not take the lead).
    pub refunded_to_sender: Wei,
    /// Previous leader refunded when the lead changed: (bid id, amount).
    pub refunded_previous: Option<(u64, Wei)>,
}

/// Final standing of an auction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuctionResult {
    pub auction_id: u64,
    pub winner_bid_id: Option<u64>,
    pub price: Wei,
    pub seller_payout: Wei,
    pub item_token: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuctionError {
    #[error("invalid windows: bidding must precede revealing and the clock must sit before bidding start")]
    InvalidWindows,
    #[error("operation requires phase {expected}, but the auction is in phase {actual}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("unknown auction {0}")]
    UnknownAuction(u64),
    #[error("unknown bid id {0}")]
    UnknownBidId(u64),
    #[error("credential signature does not verify for this bid")]
    BadSignature,
    #[error("bid {0} has no verified credential; unattested commitments are ignored at reveal")]
    NotAttested(u64),
    #[error("decommitment invalid; withdrawn funds ({refunded} wei) returned to the revealing address")]
    OpenFailed { refunded: Wei },
    #[error("one-time balance {balance} below committed price {price}; {refunded} wei returned")]
    BalanceBelowPrice {
        balance: Wei,
        price: Wei,
        refunded: Wei,
    },
    #[error("deposit {deposit} below committed price {price}")]
    InsufficientDeposit { deposit: Wei, price: Wei },
    #[error("open bid {bid} does not beat the current highest {highest}")]
    BidTooLow { bid: Wei, highest: Wei },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

fn phase_of(
    bidding: &BlockWindow,
    revealing: &BlockWindow,
    finalized: bool,
    block: u64,
) -> Phase {
    if finalized {
        Phase::Finalized
    } else if block < bidding.start {
        Phase::BeforeBidding
    } else if block <= bidding.end {
        Phase::Bidding
    } else if block < revealing.start {
        Phase::BetweenWindows
    } else if block <= revealing.end {
        Phase::Revealing
    } else {
        Phase::RevealingEnded
    }
}

fn require_phase(expected: Phase, actual: Phase) -> Result<(), AuctionError> {
    if expected == actual {
        Ok(())
    } else {
        Err(AuctionError::WrongPhase { expected, actual })
    }
}

/// Per-auction mutable state.
#[derive(Clone, Debug)]
pub struct AuctionState {
    pub config: AuctionConfig,
    bids: BTreeMap<u64, BidRecord>,
    next_bid_id: u64,
    highest: Option<(u64, Wei)>,
    escrow: Wei,
    finalized: bool,
}

impl AuctionState {
    pub fn phase(&self, block: u64) -> Phase {
        phase_of(
            &self.config.bidding_window,
            &self.config.revealing_window,
            self.finalized,
            block,
        )
    }

    pub fn bids(&self) -> impl Iterator<Item = &BidRecord> {
        self.bids.values()
    }

    pub fn bid(&self, bid_id: u64) -> Option<&BidRecord> {
        self.bids.get(&bid_id)
    }

    /// Current (bid id, committed price) leader.
    pub fn highest(&self) -> Option<(u64, Wei)> {
        self.highest
    }

    /// Funds held for the current leader. Equals the leader's committed price
    /// whenever a leader exists.
    pub fn escrow(&self) -> Wei {
        self.escrow
    }
}

impl CommitmentRegistry for AuctionState {
    fn auction_id(&self) -> u64 {
        self.config.auction_id
    }

    fn commitment_of(&self, bid_id: u64) -> Option<Commitment> {
        self.bids.get(&bid_id).map(|record| record.commitment)
    }
}

/// Inputs to [`AuctionHouse::start_auction`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuctionParams {
    pub bidding_window: BlockWindow,
    pub revealing_window: BlockWindow,
    #[serde(default)]
    pub item_token: String,
}

/// Manager of all auctions sharing one trusted oracle key. Plays the role of
/// the deployed auction contract: assigns auction and bid ids and owns the
/// escrow accounts.
#[derive(Clone, Debug)]
pub struct AuctionHouse {
    oracle_vk: OracleVerifyingKey,
    auctions: BTreeMap<u64, AuctionState>,
    next_auction_id: u64,
}

const AUCTION_CODE_TAG: &[u8] = b"sealedbid.auction-contract.v1";
const FUNDBINDING_CODE_TAG: &[u8] = b"sealedbid.fund-binding.v1";

impl AuctionHouse {
    pub fn new(oracle_vk: OracleVerifyingKey) -> Self {
        AuctionHouse {
            oracle_vk,
            auctions: BTreeMap::new(),
            next_auction_id: 1,
        }
    }

    pub fn oracle_vk(&self) -> &OracleVerifyingKey {
        &self.oracle_vk
    }

    pub fn auction(&self, auction_id: u64) -> Option<&AuctionState> {
        self.auctions.get(&auction_id)
    }

    fn auction_mut(&mut self, auction_id: u64) -> Result<&mut AuctionState, AuctionError> {
        self.auctions
            .get_mut(&auction_id)
            .ok_or(AuctionError::UnknownAuction(auction_id))
    }

    /// Creates an auction in the bidding-pending state and installs its
    /// contract account on the ledger.
    pub fn start_auction(
        &mut self,
        ledger: &mut LedgerState,
        seller: Address,
        params: AuctionParams,
    ) -> Result<u64, AuctionError> {
        if !params.bidding_window.is_valid()
            || !params.revealing_window.is_valid()
            || params.bidding_window.end >= params.revealing_window.start
            || ledger.clock().block >= params.bidding_window.start
        {
            return Err(AuctionError::InvalidWindows);
        }
        let auction_id = self.next_auction_id;
        self.next_auction_id += 1;

        let mut seed = Vec::with_capacity(AUCTION_CODE_TAG.len() + 8);
        seed.extend_from_slice(AUCTION_CODE_TAG);
        seed.extend_from_slice(&auction_id.to_be_bytes());
        let contract_address = Address::from_hash(&keccak256(&seed));
        ledger.install_contract(contract_address, keccak256(AUCTION_CODE_TAG))?;

        let config = AuctionConfig {
            auction_id,
            seller,
            bidding_window: params.bidding_window,
            revealing_window: params.revealing_window,
            contract_address,
            fundbinding_bytecode_hash: keccak256(FUNDBINDING_CODE_TAG),
            item_token: params.item_token,
        };
        self.auctions.insert(
            auction_id,
            AuctionState {
                config,
                bids: BTreeMap::new(),
                next_bid_id: 1,
                highest: None,
                escrow: 0,
                finalized: false,
            },
        );
        Ok(auction_id)
    }

    /// Registers a commitment during the bidding phase. Duplicate commitments
    /// get distinct bid ids; each needs its own credential and salt.
    pub fn submit_commitment(
        &mut self,
        ledger: &LedgerState,
        _bidder: Address,
        auction_id: u64,
        commitment: Commitment,
    ) -> Result<u64, AuctionError> {
        let block = ledger.clock().block;
        let auction = self.auction_mut(auction_id)?;
        require_phase(Phase::Bidding, auction.phase(block))?;
        let bid_id = auction.next_bid_id;
        auction.next_bid_id += 1;
        auction.bids.insert(
            bid_id,
            BidRecord {
                bid_id,
                commitment,
                attested: false,
                credential: None,
                revealed: None,
            },
        );
        Ok(bid_id)
    }

    /// Marks a bid attested iff the oracle signature over
    /// `auction_id || bid_id || commitment` verifies.
    pub fn submit_credential(
        &mut self,
        ledger: &LedgerState,
        _bidder: Address,
        auction_id: u64,
        bid_id: u64,
        credential: OracleCredential,
    ) -> Result<(), AuctionError> {
        let block = ledger.clock().block;
        let oracle_vk = self.oracle_vk;
        let auction = self.auction_mut(auction_id)?;
        require_phase(Phase::Bidding, auction.phase(block))?;
        let record = auction
            .bids
            .get_mut(&bid_id)
            .ok_or(AuctionError::UnknownBidId(bid_id))?;
        let message = credential_message(auction_id, bid_id, &record.commitment);
        if !oracle_vk.verify(&message, &credential.signature) {
            return Err(AuctionError::BadSignature);
        }
        record.attested = true;
        record.credential = Some(credential);
        Ok(())
    }

    /// Reveals a bid: deploys the fund-binding contract at the salt-derived
    /// address, drains it to the auction contract, opens the commitment, and
    /// settles refunds.
    ///
    /// The effective bid is the committed price even when the one-time
    /// balance exceeds it; the excess returns to the revealing address at
    /// once. A failed opening refunds the withdrawn balance and voids the
    /// reveal.
    pub fn reveal(
        &mut self,
        ledger: &mut LedgerState,
        reveal_sender: Address,
        auction_id: u64,
        bid_id: u64,
        price: Wei,
        salt: &Salt,
        dec: &Decommitment,
    ) -> Result<RevealOutcome, AuctionError> {
        let block = ledger.clock().block;
        let auction = self.auction_mut(auction_id)?;
        require_phase(Phase::Revealing, auction.phase(block))?;
        let record = auction
            .bids
            .get(&bid_id)
            .ok_or(AuctionError::UnknownBidId(bid_id))?;
        if !record.attested {
            return Err(AuctionError::NotAttested(bid_id));
        }
        let commitment = record.commitment;
        let contract = auction.config.contract_address;

        let theta = onetime_address_for_salt(&auction.config, salt);
        ledger.deploy_at(
            contract,
            &salt.salt32(),
            &auction.config.fundbinding_bytecode_hash,
            contract,
        )?;
        let withdrawn = ledger.balance(&theta);
        ledger.contract_withdraw(theta, contract, withdrawn, contract)?;

        let msg = BidMessage {
            onetime_address: theta,
            price,
        };
        if !com_open(&commitment, dec, &msg) {
            ledger.contract_withdraw(contract, reveal_sender, withdrawn, contract)?;
            return Err(AuctionError::OpenFailed { refunded: withdrawn });
        }
        if withdrawn < price {
            // Cannot happen after honest attestation; handled anyway.
            ledger.contract_withdraw(contract, reveal_sender, withdrawn, contract)?;
            return Err(AuctionError::BalanceBelowPrice {
                balance: withdrawn,
                price,
                refunded: withdrawn,
            });
        }

        let excess = withdrawn - price;
        if excess > 0 {
            ledger.contract_withdraw(contract, reveal_sender, excess, contract)?;
        }

        let became_highest = match auction.highest {
            None => true,
            Some((_, leader_price)) => price > leader_price,
        };
        let mut refunded_previous = None;
        let refunded_to_sender;
        if became_highest {
            if let Some((prev_id, prev_price)) = auction.highest {
                let prev_sender = auction.bids[&prev_id]
                    .revealed
                    .as_ref()
                    .expect("leader is always revealed")
                    .reveal_sender;
                ledger.contract_withdraw(contract, prev_sender, prev_price, contract)?;
                refunded_previous = Some((prev_id, prev_price));
            }
            auction.highest = Some((bid_id, price));
            auction.escrow = price;
            refunded_to_sender = excess;
        } else {
            ledger.contract_withdraw(contract, reveal_sender, price, contract)?;
            refunded_to_sender = withdrawn;
        }

        let record = auction.bids.get_mut(&bid_id).expect("checked above");
        record.revealed = Some(RevealedBid {
            price,
            onetime_address: theta,
            withdrawn,
            reveal_sender,
        });
        Ok(RevealOutcome {
            bid_id,
            became_highest,
            withdrawn,
            refunded_to_sender,
            refunded_previous,
        })
    }

    /// Pays the seller and closes the auction once the revealing window has
    /// ended. With zero reveals the result carries no winner and no payout.
    pub fn finalize(
        &mut self,
        ledger: &mut LedgerState,
        _seller: Address,
        auction_id: u64,
    ) -> Result<AuctionResult, AuctionError> {
        let block = ledger.clock().block;
        let auction = self.auction_mut(auction_id)?;
        require_phase(Phase::RevealingEnded, auction.phase(block))?;

        let payout = auction.escrow;
        if payout > 0 {
            ledger.contract_withdraw(
                auction.config.contract_address,
                auction.config.seller,
                payout,
                auction.config.contract_address,
            )?;
        }
        auction.escrow = 0;
        auction.finalized = true;
        let winner = auction.highest;
        Ok(AuctionResult {
            auction_id,
            winner_bid_id: winner.map(|(id, _)| id),
            price: winner.map(|(_, price)| price).unwrap_or(0),
            seller_payout: payout,
            item_token: winner.map(|_| auction.config.item_token.clone()),
        })
    }
}

// ---------------------------------------------------------------------------
// Baselines for the fee comparison
// ---------------------------------------------------------------------------

/// Simple-deposit baseline: the bidder escrows the deposit with the contract
/// at commit time, leaking the maximum bidding price. Deposit >= committed
/// price is enforced at reveal.
#[derive(Clone, Debug)]
pub struct SimpleDepositAuction {
    pub seller: Address,
    pub contract_address: Address,
    pub bidding_window: BlockWindow,
    pub revealing_window: BlockWindow,
    bids: BTreeMap<u64, DepositBid>,
    next_bid_id: u64,
    highest: Option<(u64, Wei)>,
    escrow: Wei,
    finalized: bool,
}

#[derive(Clone, Debug)]
pub struct DepositBid {
    pub bid_id: u64,
    pub bidder: Address,
    pub commitment: Commitment,
    pub deposit: Wei,
    pub revealed: Option<Wei>,
}

impl SimpleDepositAuction {
    pub fn start(
        ledger: &mut LedgerState,
        seller: Address,
        bidding_window: BlockWindow,
        revealing_window: BlockWindow,
    ) -> Result<Self, AuctionError> {
        if !bidding_window.is_valid()
            || !revealing_window.is_valid()
            || bidding_window.end >= revealing_window.start
            || ledger.clock().block >= bidding_window.start
        {
            return Err(AuctionError::InvalidWindows);
        }
        let contract_address = Address::from_hash(&keccak256(b"sealedbid.baseline.deposit.v1"));
        ledger.install_contract(contract_address, keccak256(b"deposit-auction"))?;
        Ok(SimpleDepositAuction {
            seller,
            contract_address,
            bidding_window,
            revealing_window,
            bids: BTreeMap::new(),
            next_bid_id: 1,
            highest: None,
            escrow: 0,
            finalized: false,
        })
    }

    pub fn phase(&self, block: u64) -> Phase {
        phase_of(
            &self.bidding_window,
            &self.revealing_window,
            self.finalized,
            block,
        )
    }

    /// Commitment plus up-front deposit. The commitment binds the bidder's
    /// own address together with the price.
    pub fn commit_bid(
        &mut self,
        ledger: &mut LedgerState,
        bidder: Address,
        commitment: Commitment,
        deposit: Wei,
    ) -> Result<u64, AuctionError> {
        require_phase(Phase::Bidding, self.phase(ledger.clock().block))?;
        ledger.transfer(bidder, self.contract_address, deposit)?;
        let bid_id = self.next_bid_id;
        self.next_bid_id += 1;
        self.bids.insert(
            bid_id,
            DepositBid {
                bid_id,
                bidder,
                commitment,
                deposit,
                revealed: None,
            },
        );
        Ok(bid_id)
    }

    pub fn reveal(
        &mut self,
        ledger: &mut LedgerState,
        bid_id: u64,
        price: Wei,
        dec: &Decommitment,
    ) -> Result<RevealOutcome, AuctionError> {
        require_phase(Phase::Revealing, self.phase(ledger.clock().block))?;
        let record = self
            .bids
            .get(&bid_id)
            .ok_or(AuctionError::UnknownBidId(bid_id))?;
        let msg = BidMessage {
            onetime_address: record.bidder,
            price,
        };
        if !com_open(&record.commitment, dec, &msg) {
            return Err(AuctionError::OpenFailed { refunded: 0 });
        }
        if record.deposit < price {
            return Err(AuctionError::InsufficientDeposit {
                deposit: record.deposit,
                price,
            });
        }
        let bidder = record.bidder;
        let deposit = record.deposit;
        let contract = self.contract_address;
        let excess = deposit - price;
        if excess > 0 {
            ledger.contract_withdraw(contract, bidder, excess, contract)?;
        }
        let became_highest = match self.highest {
            None => true,
            Some((_, leader)) => price > leader,
        };
        let mut refunded_previous = None;
        let refunded_to_sender;
        if became_highest {
            if let Some((prev_id, prev_price)) = self.highest {
                let prev_bidder = self.bids[&prev_id].bidder;
                ledger.contract_withdraw(contract, prev_bidder, prev_price, contract)?;
                refunded_previous = Some((prev_id, prev_price));
            }
            self.highest = Some((bid_id, price));
            self.escrow = price;
            refunded_to_sender = excess;
        } else {
            ledger.contract_withdraw(contract, bidder, price, contract)?;
            refunded_to_sender = deposit;
        }
        self.bids.get_mut(&bid_id).expect("checked above").revealed = Some(price);
        Ok(RevealOutcome {
            bid_id,
            became_highest,
            withdrawn: deposit,
            refunded_to_sender,
            refunded_previous,
        })
    }

    pub fn finalize(&mut self, ledger: &mut LedgerState) -> Result<AuctionResult, AuctionError> {
        require_phase(Phase::RevealingEnded, self.phase(ledger.clock().block))?;
        let payout = self.escrow;
        if payout > 0 {
            ledger.contract_withdraw(
                self.contract_address,
                self.seller,
                payout,
                self.contract_address,
            )?;
        }
        self.escrow = 0;
        self.finalized = true;
        Ok(AuctionResult {
            auction_id: 0,
            winner_bid_id: self.highest.map(|(id, _)| id),
            price: self.highest.map(|(_, p)| p).unwrap_or(0),
            seller_payout: payout,
            item_token: None,
        })
    }

    pub fn highest(&self) -> Option<(u64, Wei)> {
        self.highest
    }
}

/// Open-bid baseline: prices are public from the start. Only strictly higher
/// bids are accepted; the previous leader is refunded immediately.
#[derive(Clone, Debug)]
pub struct OpenBidAuction {
    pub seller: Address,
    pub contract_address: Address,
    pub bidding_window: BlockWindow,
    bids: Vec<(Address, Wei)>,
    highest: Option<(Address, Wei)>,
    escrow: Wei,
    finalized: bool,
}

impl OpenBidAuction {
    pub fn start(
        ledger: &mut LedgerState,
        seller: Address,
        bidding_window: BlockWindow,
    ) -> Result<Self, AuctionError> {
        if !bidding_window.is_valid() || ledger.clock().block >= bidding_window.start {
            return Err(AuctionError::InvalidWindows);
        }
        let contract_address = Address::from_hash(&keccak256(b"sealedbid.baseline.openbid.v1"));
        ledger.install_contract(contract_address, keccak256(b"open-bid-auction"))?;
        Ok(OpenBidAuction {
            seller,
            contract_address,
            bidding_window,
            bids: Vec::new(),
            highest: None,
            escrow: 0,
            finalized: false,
        })
    }

    fn phase(&self, block: u64) -> Phase {
        // No revealing window: past the bidding window the auction is ready
        // to finalize.
        let pseudo_revealing = BlockWindow::new(u64::MAX, u64::MAX);
        match phase_of(&self.bidding_window, &pseudo_revealing, self.finalized, block) {
            Phase::BetweenWindows => Phase::RevealingEnded,
            other => other,
        }
    }

    pub fn bid(
        &mut self,
        ledger: &mut LedgerState,
        bidder: Address,
        price: Wei,
    ) -> Result<(), AuctionError> {
        require_phase(Phase::Bidding, self.phase(ledger.clock().block))?;
        if let Some((_, leader)) = self.highest {
            if price <= leader {
                return Err(AuctionError::BidTooLow {
                    bid: price,
                    highest: leader,
                });
            }
        }
        ledger.transfer(bidder, self.contract_address, price)?;
        if let Some((prev_bidder, prev_price)) = self.highest {
            ledger.contract_withdraw(
                self.contract_address,
                prev_bidder,
                prev_price,
                self.contract_address,
            )?;
        }
        self.bids.push((bidder, price));
        self.highest = Some((bidder, price));
        self.escrow = price;
        Ok(())
    }

    pub fn finalize(&mut self, ledger: &mut LedgerState) -> Result<AuctionResult, AuctionError> {
        require_phase(Phase::RevealingEnded, self.phase(ledger.clock().block))?;
        let payout = self.escrow;
        if payout > 0 {
            ledger.contract_withdraw(
                self.contract_address,
                self.seller,
                payout,
                self.contract_address,
            )?;
        }
        self.escrow = 0;
        self.finalized = true;
        Ok(AuctionResult {
            auction_id: 0,
            winner_bid_id: None,
            price: self.highest.map(|(_, p)| p).unwrap_or(0),
            seller_payout: payout,
            item_token: None,
        })
    }

    pub fn highest(&self) -> Option<(Address, Wei)> {
        self.highest
    }
}
