//! End-to-end scenario runner.
//!
//! A scenario is a JSON-loadable description of one auction: windows, bidders
//! with funding and prices, and synthetic background traffic. Running it
//! drives the whole protocol — genesis funding, bidding transfers mixed with
//! decoys, commitments, attestations, credentials, reveals, finalization —
//! and produces a report with the winner, per-bidder costs and refunds, the
//! anonymity histogram over the bidding window, and a conservation check. All
//! randomness flows from the single seed, so reports are byte-identical
//! across runs.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anonymity::{self, AnalysisSummary, AnonymityError, BucketSpec, Window};
use crate::auction::{
    make_onetime_address, AuctionError, AuctionHouse, AuctionParams, Salt,
};
use crate::crypto::{commit, BidMessage, Commitment, Decommitment, OracleKeypair};
use crate::deco::{attest_bid, AttestationError, BalanceSource, ReferenceBackend};
use crate::fees::{fee_usd, FeeSchedule, MarketParams, OpTag};
use crate::ledger::{Address, LedgerError, LedgerState, Wei};

fn default_true() -> bool {
    true
}

/// One bidder: genesis funding, the price they commit to, and whether they
/// show up for the revealing phase.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BidderSpec {
    pub funding_wei: Wei,
    pub price_wei: Wei,
    #[serde(default = "default_true")]
    pub reveal: bool,
}

/// Synthetic background traffic: `count` transfers with values drawn
/// uniformly from the bounds, each from a fresh source to a fresh recipient.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DecoySpec {
    pub count: u32,
    pub value_min_wei: Wei,
    pub value_max_wei: Wei,
}

impl Default for DecoySpec {
    fn default() -> Self {
        DecoySpec {
            count: 32,
            value_min_wei: crate::ledger::WEI_PER_ETH / 100,
            value_max_wei: 2 * crate::ledger::WEI_PER_ETH,
        }
    }
}

/// Full scenario description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    #[serde(default)]
    pub market: MarketParams,
    pub auction: AuctionParams,
    pub bidders: Vec<BidderSpec>,
    #[serde(default)]
    pub decoys: DecoySpec,
}

impl Scenario {
    pub fn from_json(json: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario =
            serde_json::from_str(json).map_err(|e| ScenarioError::Config {
                field: "<root>".to_string(),
                message: e.to_string(),
            })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let err = |field: &str, message: &str| {
            Err(ScenarioError::Config {
                field: field.to_string(),
                message: message.to_string(),
            })
        };
        if self.bidders.is_empty() {
            return err("bidders", "at least one bidder is required");
        }
        for (i, bidder) in self.bidders.iter().enumerate() {
            if bidder.price_wei == 0 {
                return err(&format!("bidders[{i}].price_wei"), "price must be > 0");
            }
            if bidder.funding_wei < bidder.price_wei {
                return err(
                    &format!("bidders[{i}].funding_wei"),
                    "funding must cover the bidding price",
                );
            }
        }
        if self.auction.bidding_window.start < 1 {
            return err(
                "auction.bidding_window.start",
                "bidding must start after the genesis block",
            );
        }
        if self.auction.bidding_window.start > self.auction.bidding_window.end
            || self.auction.revealing_window.start > self.auction.revealing_window.end
            || self.auction.bidding_window.end >= self.auction.revealing_window.start
        {
            return err("auction", "bidding window must precede the revealing window");
        }
        if self.decoys.value_min_wei > self.decoys.value_max_wei {
            return err("decoys.value_min_wei", "min must not exceed max");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Auction(#[from] AuctionError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Attestation(#[from] AttestationError),
    #[error(transparent)]
    Anonymity(#[from] AnonymityError),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeeReport {
    pub gas: u64,
    pub usd: String,
}

fn fee_report(gas: u64, market: &MarketParams) -> FeeReport {
    FeeReport {
        gas,
        usd: fee_usd(gas, market).to_string(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WinnerReport {
    pub bid_id: u64,
    pub bidder_index: usize,
    pub price_wei: Wei,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BidderReport {
    pub index: usize,
    pub funding_wei: Wei,
    pub price_wei: Wei,
    pub revealed: bool,
    /// Balance still locked at the one-time address (non-revealing bidders).
    pub locked_wei: Wei,
    /// Everything the protocol sent back: excess over the committed price
    /// plus refunds after losing the lead.
    pub refunded_wei: Wei,
    pub fees: FeeReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConservationReport {
    pub genesis_total_wei: Wei,
    pub final_total_wei: Wei,
    pub locked_total_wei: Wei,
    pub holds: bool,
}

/// Everything a scenario run produces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub auction_id: u64,
    pub winner: Option<WinnerReport>,
    pub seller_payout_wei: Wei,
    pub item_token: Option<String>,
    pub bidders: Vec<BidderReport>,
    pub seller_fees: FeeReport,
    pub conservation: ConservationReport,
    pub anonymity: AnalysisSummary,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut json = serde_json::to_string_pretty(self).expect("report is always serializable");
        json.push('\n');
        json
    }
}

fn random_address<R: RngCore>(rng: &mut R) -> Address {
    let mut bytes = [0u8; 20];
    rng.fill_bytes(&mut bytes);
    Address(bytes)
}

struct PlannedTransfer {
    block: u64,
    from: Address,
    to: Address,
    value: Wei,
}

struct BidderPlan {
    funding_addr: Address,
    reveal_addr: Address,
    theta: Address,
    salt: Salt,
    commitment: Commitment,
    decommitment: Decommitment,
    bid_id: u64,
}

/// Runs a validated scenario to completion.
pub fn run_scenario(scenario: &Scenario) -> Result<Report, ScenarioError> {
    run_scenario_with_trace(scenario).map(|(report, _)| report)
}

/// Like [`run_scenario`], also returning the full ledger trace of the run.
pub fn run_scenario_with_trace(
    scenario: &Scenario,
) -> Result<(Report, Vec<crate::trace::TraceRecord>), ScenarioError> {
    scenario.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(scenario.seed);
    let oracle = OracleKeypair::generate(&mut rng);
    let mut ledger = LedgerState::new();
    let mut house = AuctionHouse::new(oracle.verifying_key());

    let seller = random_address(&mut rng);
    let bidder_addrs: Vec<(Address, Address)> = scenario
        .bidders
        .iter()
        .map(|_| (random_address(&mut rng), random_address(&mut rng)))
        .collect();

    for (spec, (funding_addr, _)) in scenario.bidders.iter().zip(&bidder_addrs) {
        ledger.fund_genesis(*funding_addr, spec.funding_wei)?;
    }

    let auction_id = house.start_auction(&mut ledger, seller, scenario.auction.clone())?;
    let config = house
        .auction(auction_id)
        .expect("auction just started")
        .config
        .clone();
    let bidding = scenario.auction.bidding_window;

    // Plan every ledger transfer up front, then replay in block order. The
    // bidding transfers and the decoys end up interleaved in the trace with
    // nothing but (from, to) telling them apart.
    let mut planned: Vec<PlannedTransfer> = Vec::new();
    let mut bidder_plans: Vec<BidderPlan> = Vec::new();
    for (spec, (funding_addr, reveal_addr)) in scenario.bidders.iter().zip(&bidder_addrs) {
        let (theta, salt) = make_onetime_address(&config, *reveal_addr, &mut rng);
        let msg = BidMessage {
            onetime_address: theta,
            price: spec.price_wei,
        };
        let (commitment, decommitment) = commit(&msg, &mut rng);
        planned.push(PlannedTransfer {
            block: rng.random_range(bidding.start..=bidding.end),
            from: *funding_addr,
            to: theta,
            value: spec.price_wei,
        });
        bidder_plans.push(BidderPlan {
            funding_addr: *funding_addr,
            reveal_addr: *reveal_addr,
            theta,
            salt,
            commitment,
            decommitment,
            bid_id: 0,
        });
    }

    let pre_window_blocks = bidding.start.saturating_sub(1);
    for i in 0..scenario.decoys.count {
        let source = random_address(&mut rng);
        let sink = random_address(&mut rng);
        let value = rng.random_range(scenario.decoys.value_min_wei..=scenario.decoys.value_max_wei);
        // Roughly a quarter of the decoys land before the window so that the
        // first-receipt rule has history to work against.
        let block = if pre_window_blocks >= 1 && i % 4 == 0 {
            rng.random_range(1..=pre_window_blocks)
        } else {
            rng.random_range(bidding.start..=bidding.end)
        };
        ledger.fund_genesis(source, value)?;
        planned.push(PlannedTransfer {
            block,
            from: source,
            to: sink,
            value,
        });
    }

    planned.sort_by_key(|t| t.block);
    for transfer in &planned {
        let now = ledger.clock().block;
        if transfer.block > now {
            ledger.advance_blocks(transfer.block - now);
        }
        ledger.transfer(transfer.from, transfer.to, transfer.value)?;
    }
    if ledger.clock().block < bidding.start {
        ledger.advance_blocks(bidding.start - ledger.clock().block);
    }

    // Contract-side bidding steps, still inside the bidding window.
    let source = BalanceSource::snapshot(&ledger);
    let backend = ReferenceBackend;
    for plan in bidder_plans.iter_mut() {
        plan.bid_id =
            house.submit_commitment(&ledger, plan.funding_addr, auction_id, plan.commitment)?;
        let registry = house.auction(auction_id).expect("auction exists");
        let (credential, _transcript) = attest_bid(
            &mut rng,
            &source,
            &backend,
            &oracle,
            registry,
            plan.bid_id,
            &plan.commitment,
            plan.theta,
            &plan.decommitment,
        )?;
        house.submit_credential(&ledger, plan.reveal_addr, auction_id, plan.bid_id, credential)?;
    }

    // Revealing phase.
    let revealing_start = scenario.auction.revealing_window.start;
    ledger.advance_blocks(revealing_start - ledger.clock().block);
    let mut refunded = vec![0u128; scenario.bidders.len()];
    for (index, (plan, spec)) in bidder_plans.iter().zip(&scenario.bidders).enumerate() {
        if !spec.reveal {
            continue;
        }
        let outcome = house.reveal(
            &mut ledger,
            plan.reveal_addr,
            auction_id,
            plan.bid_id,
            spec.price_wei,
            &plan.salt,
            &plan.decommitment,
        )?;
        refunded[index] += outcome.refunded_to_sender;
        if let Some((prev_bid, amount)) = outcome.refunded_previous {
            let prev_index = bidder_plans
                .iter()
                .position(|p| p.bid_id == prev_bid)
                .expect("refunded bid belongs to a bidder");
            refunded[prev_index] += amount;
        }
    }

    // Finalization.
    let revealing_end = scenario.auction.revealing_window.end;
    ledger.advance_blocks(revealing_end + 1 - ledger.clock().block);
    let result = house.finalize(&mut ledger, seller, auction_id)?;

    // Reporting.
    let schedule = FeeSchedule::default_table();
    let bidding_gas: u64 = [OpTag::SendFunds, OpTag::CommitBid, OpTag::ProveBid]
        .iter()
        .map(|t| schedule.gas(*t))
        .sum();
    let bidders = bidder_plans
        .iter()
        .zip(&scenario.bidders)
        .enumerate()
        .map(|(index, (plan, spec))| {
            let gas = if spec.reveal {
                bidding_gas + schedule.gas(OpTag::RevealBid)
            } else {
                bidding_gas
            };
            BidderReport {
                index,
                funding_wei: spec.funding_wei,
                price_wei: spec.price_wei,
                revealed: spec.reveal,
                locked_wei: if spec.reveal {
                    0
                } else {
                    ledger.balance(&plan.theta)
                },
                refunded_wei: refunded[index],
                fees: fee_report(gas, &scenario.market),
            }
        })
        .collect::<Vec<_>>();
    let locked_total_wei = bidders.iter().map(|b| b.locked_wei).sum();
    let seller_gas = schedule.gas(OpTag::StartAuction) + schedule.gas(OpTag::FinalizeAuction);

    let winner = result.winner_bid_id.map(|bid_id| WinnerReport {
        bid_id,
        bidder_index: bidder_plans
            .iter()
            .position(|p| p.bid_id == bid_id)
            .expect("winner is one of the bidders"),
        price_wei: result.price,
    });

    let trace = ledger.export_trace(0, ledger.clock().block)?;
    let window = Window::from_blocks(bidding.start, bidding.end)?;
    let anonymity = anonymity::analyze(&trace, &window, &BucketSpec::default_table())?;

    let report = Report {
        seed: scenario.seed,
        auction_id,
        winner,
        seller_payout_wei: result.seller_payout,
        item_token: result.item_token,
        bidders,
        seller_fees: fee_report(seller_gas, &scenario.market),
        conservation: ConservationReport {
            genesis_total_wei: ledger.genesis_total(),
            final_total_wei: ledger.total_balance(),
            locked_total_wei,
            holds: ledger.conservation_holds(),
        },
        anonymity,
    };
    Ok((report, ledger.export_full_trace()))
}

/// Reproduces the bundled cost tables at the given market parameters: one row
/// per operation plus per-role aggregates and the proposed-vs-deposit
/// overhead. Drives the `fees` subcommand.
pub fn fee_tables(schedule: &FeeSchedule, market: &MarketParams) -> String {
    use crate::fees::{overhead, role_cost, Role, Variant};

    let mut out = String::new();
    let mut section = |title: &str, tags: &[OpTag]| {
        out.push_str(title);
        out.push('\n');
        out.push_str("operation,gas,usd\n");
        for tag in tags {
            let gas = schedule.gas(*tag);
            out.push_str(&format!("{},{},{}\n", tag.label(), gas, fee_usd(gas, market)));
        }
        out.push('\n');
    };
    section(
        "# bidder operations (proposed protocol)",
        &[
            OpTag::SendFunds,
            OpTag::CommitBid,
            OpTag::ProveBid,
            OpTag::RevealBid,
        ],
    );
    section(
        "# seller operations (proposed protocol)",
        &[OpTag::StartAuction, OpTag::FinalizeAuction],
    );
    section(
        "# bidder operations (simple deposit method)",
        &[OpTag::DepositCommitBid, OpTag::DepositRevealBid],
    );
    section("# bidder operations (open bid)", &[OpTag::OpenBidding]);

    let (proposed_gas, proposed_usd) = role_cost(schedule, Variant::Proposed, Role::Bidder, market);
    let (deposit_gas, deposit_usd) =
        role_cost(schedule, Variant::SimpleDeposit, Role::Bidder, market);
    let (open_gas, open_usd) = role_cost(schedule, Variant::OpenBid, Role::Bidder, market);
    let (seller_gas, seller_usd) = role_cost(schedule, Variant::Proposed, Role::Seller, market);
    let (delta_gas, delta_usd) = overhead(
        schedule,
        Variant::Proposed,
        Variant::SimpleDeposit,
        Role::Bidder,
        market,
    );
    out.push_str("# aggregates\n");
    out.push_str(&format!(
        "bidder total (proposed),{proposed_gas},{proposed_usd}\n"
    ));
    out.push_str(&format!(
        "bidder total (simple deposit),{deposit_gas},{deposit_usd}\n"
    ));
    out.push_str(&format!("bidder total (open bid),{open_gas},{open_usd}\n"));
    out.push_str(&format!("seller total,{seller_gas},{seller_usd}\n"));
    out.push_str(&format!(
        "price-hiding overhead (proposed - simple deposit),{delta_gas},{delta_usd}\n"
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::BlockWindow;
    use crate::ledger::WEI_PER_ETH;

    const ETH: Wei = WEI_PER_ETH;

    fn scenario(bidders: Vec<BidderSpec>) -> Scenario {
        Scenario {
            seed: 11,
            market: MarketParams::default(),
            auction: AuctionParams {
                bidding_window: BlockWindow::new(10, 40),
                revealing_window: BlockWindow::new(41, 70),
                item_token: "item".to_string(),
            },
            bidders,
            decoys: DecoySpec {
                count: 16,
                value_min_wei: ETH / 100,
                value_max_wei: ETH,
            },
        }
    }

    fn bidder(price: Wei) -> BidderSpec {
        BidderSpec {
            funding_wei: price + ETH,
            price_wei: price,
            reveal: true,
        }
    }

    #[test]
    fn highest_price_wins() {
        let report = run_scenario(&scenario(vec![
            bidder(2 * ETH / 10),
            bidder(3 * ETH / 10),
            bidder(5 * ETH / 10),
        ]))
        .unwrap();
        let winner = report.winner.unwrap();
        assert_eq!(winner.bidder_index, 2);
        assert_eq!(winner.price_wei, 5 * ETH / 10);
        assert_eq!(report.seller_payout_wei, 5 * ETH / 10);
        assert!(report.conservation.holds);
        assert_eq!(report.item_token.as_deref(), Some("item"));
    }

    #[test]
    fn same_seed_gives_identical_report_bytes() {
        let s = scenario(vec![bidder(ETH / 4), bidder(ETH / 2)]);
        let a = run_scenario(&s).unwrap().to_json();
        let b = run_scenario(&s).unwrap().to_json();
        assert_eq!(a, b);

        let mut reseeded = s;
        reseeded.seed = 12;
        let c = run_scenario(&reseeded).unwrap().to_json();
        assert_ne!(a, c);
    }

    #[test]
    fn non_revealing_bidder_funds_stay_locked() {
        let mut specs = vec![bidder(ETH / 4), bidder(ETH / 2)];
        specs[1].reveal = false;
        let report = run_scenario(&scenario(specs)).unwrap();
        assert_eq!(report.winner.as_ref().unwrap().bidder_index, 0);
        assert_eq!(report.bidders[1].locked_wei, ETH / 2);
        assert_eq!(report.conservation.locked_total_wei, ETH / 2);
        assert!(report.conservation.holds);
        // Reveal gas is not charged to the no-show.
        assert!(report.bidders[1].fees.gas < report.bidders[0].fees.gas);
    }

    #[test]
    fn losing_bidders_are_made_whole() {
        let report = run_scenario(&scenario(vec![bidder(ETH / 4), bidder(ETH / 2)])).unwrap();
        assert_eq!(report.bidders[0].refunded_wei, ETH / 4);
        assert_eq!(report.bidders[0].locked_wei, 0);
    }

    #[test]
    fn config_errors_carry_field_paths() {
        let mut s = scenario(vec![bidder(ETH)]);
        s.bidders[0].price_wei = 0;
        match run_scenario(&s) {
            Err(ScenarioError::Config { field, .. }) => {
                assert_eq!(field, "bidders[0].price_wei");
            }
            other => panic!("expected config error, got {other:?}"),
        }

        let empty = scenario(vec![]);
        assert!(matches!(
            run_scenario(&empty),
            Err(ScenarioError::Config { .. })
        ));
    }

    #[test]
    fn scenario_json_round_trip() {
        let s = scenario(vec![bidder(ETH / 3)]);
        let json = serde_json::to_string_pretty(&s).unwrap();
        let parsed = Scenario::from_json(&json).unwrap();
        assert_eq!(parsed.seed, s.seed);
        assert_eq!(parsed.bidders.len(), 1);
    }

    #[test]
    fn anonymity_section_sees_bidders_among_decoys() {
        let report = run_scenario(&scenario(vec![bidder(ETH / 4), bidder(ETH / 2)])).unwrap();
        // The two one-time addresses hide among the in-window decoy sinks.
        assert!(report.anonymity.candidate_count > 2);
        let total: u64 = report.anonymity.histogram.iter().map(|b| b.count).sum();
        assert_eq!(total as usize, report.anonymity.candidate_count);
    }
}
