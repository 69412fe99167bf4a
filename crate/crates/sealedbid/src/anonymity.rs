//! Anonymity-set analysis over a transfer trace.
//!
//! A one-time bidding address is hidden among every address that (1) sends
//! nothing during the bidding window and (2) receives for the first time in
//! the whole trace during that window. The analyzer extracts those candidate
//! addresses, buckets them by end-of-window balance, and reports the maximum
//! candidate balance as an upper bound on any hidden bid.
//!
//! "First time" is relative to the supplied trace: the trace should include
//! history from before the window for the rule to mean anything. Deploy and
//! contract-call records are not part of the transfer graph.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Address, Clock, TxKind, Wei, WEI_PER_ETH};
use crate::trace::TraceRecord;

/// Analysis window, inclusive on both ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: Clock,
    pub end: Clock,
}

impl Window {
    pub fn from_blocks(start_block: u64, end_block: u64) -> Result<Self, AnonymityError> {
        if start_block > end_block {
            return Err(AnonymityError::InvalidWindow {
                start: start_block,
                end: end_block,
            });
        }
        Ok(Window {
            start: Clock {
                block: start_block,
                timestamp: 0,
            },
            end: Clock {
                block: end_block,
                timestamp: 0,
            },
        })
    }

    pub fn contains_block(&self, block: u64) -> bool {
        block >= self.start.block && block <= self.end.block
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnonymityError {
    #[error("trace is not sorted by block at record {position}")]
    UnsortedTrace { position: usize },
    #[error("invalid window: start block {start} > end block {end}")]
    InvalidWindow { start: u64, end: u64 },
    #[error("bucket ratio must be > 1 and bounds must satisfy 0 < lo < hi")]
    InvalidRatio,
    #[error("bucket edges must be strictly ascending")]
    InvalidBuckets,
}

/// Addresses satisfying both hiding conditions, with their end-of-window
/// balances (sum of in-window credits; condition 1 rules out debits).
pub fn candidate_addresses(
    trace: &[TraceRecord],
    window: &Window,
) -> Result<BTreeMap<Address, Wei>, AnonymityError> {
    ensure_sorted(trace)?;

    let mut first_receipt: BTreeMap<Address, u64> = BTreeMap::new();
    let mut in_window_senders: BTreeSet<Address> = BTreeSet::new();
    let mut in_window_credits: BTreeMap<Address, Wei> = BTreeMap::new();

    for record in trace.iter().filter(|r| r.kind == TxKind::Transfer) {
        first_receipt.entry(record.to).or_insert(record.block);
        if window.contains_block(record.block) {
            in_window_senders.insert(record.from);
            *in_window_credits.entry(record.to).or_insert(0) += record.value_wei;
        }
    }

    Ok(in_window_credits
        .into_iter()
        .filter(|(addr, _)| {
            !in_window_senders.contains(addr)
                && first_receipt
                    .get(addr)
                    .is_some_and(|&block| window.contains_block(block))
        })
        .collect())
}

/// Maximum end-of-window balance over candidates; 0 when the set is empty.
/// Bounds the hidden maximum bidding price from above.
pub fn max_balance_bound(trace: &[TraceRecord], window: &Window) -> Result<Wei, AnonymityError> {
    Ok(candidate_addresses(trace, window)?
        .values()
        .copied()
        .max()
        .unwrap_or(0))
}

fn ensure_sorted(trace: &[TraceRecord]) -> Result<(), AnonymityError> {
    for (position, pair) in trace.windows(2).enumerate() {
        if pair[0].block > pair[1].block {
            return Err(AnonymityError::UnsortedTrace {
                position: position + 1,
            });
        }
    }
    Ok(())
}

/// Balance ranges: half-open `[lower[i], lower[i+1])`, the final range closed
/// by `upper` or unbounded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketSpec {
    lower_edges_wei: Vec<Wei>,
    upper_wei: Option<Wei>,
}

impl Default for BucketSpec {
    fn default() -> Self {
        Self::default_table()
    }
}

impl BucketSpec {
    /// 0–0.1, 0.1–0.5, 0.5–1, 1–10, 10–50, 50–100, 100–1000, 1000–∞ (ETH).
    pub fn default_table() -> Self {
        const E: Wei = WEI_PER_ETH;
        BucketSpec {
            lower_edges_wei: vec![
                0,
                E / 10,
                E / 2,
                E,
                10 * E,
                50 * E,
                100 * E,
                1000 * E,
            ],
            upper_wei: None,
        }
    }

    pub fn from_edges(lower_edges_wei: Vec<Wei>, upper_wei: Option<Wei>) -> Result<Self, AnonymityError> {
        if lower_edges_wei.is_empty()
            || lower_edges_wei.windows(2).any(|w| w[0] >= w[1])
            || upper_wei.is_some_and(|hi| hi <= *lower_edges_wei.last().unwrap())
        {
            return Err(AnonymityError::InvalidBuckets);
        }
        Ok(BucketSpec {
            lower_edges_wei,
            upper_wei,
        })
    }

    pub fn lower_edges_wei(&self) -> &[Wei] {
        &self.lower_edges_wei
    }

    pub fn upper_wei(&self) -> Option<Wei> {
        self.upper_wei
    }

    /// Lower edges in ETH.
    pub fn edges_eth(&self) -> Vec<f64> {
        self.lower_edges_wei.iter().map(|&w| wei_to_eth(w)).collect()
    }

    /// Index of the range holding `balance`, if any range does.
    fn bucket_of(&self, balance: Wei) -> Option<usize> {
        if balance < self.lower_edges_wei[0] {
            return None;
        }
        if let Some(upper) = self.upper_wei {
            if balance >= upper {
                return None;
            }
        }
        match self.lower_edges_wei.binary_search(&balance) {
            Ok(i) => Some(i),
            Err(i) => Some(i - 1),
        }
    }
}

/// Geometric ranges `[lo, lo*r), [lo*r, lo*r^2), ...` covering up to `hi`.
pub fn geometric_buckets(lo_eth: f64, hi_eth: f64, ratio: f64) -> Result<BucketSpec, AnonymityError> {
    if !(ratio > 1.0) || !(lo_eth > 0.0) || !(lo_eth < hi_eth) {
        return Err(AnonymityError::InvalidRatio);
    }
    let mut lower_edges_wei = Vec::new();
    let mut edge = lo_eth;
    while edge < hi_eth {
        lower_edges_wei.push(eth_to_wei(edge));
        edge *= ratio;
    }
    BucketSpec::from_edges(lower_edges_wei, Some(eth_to_wei(edge)))
}

pub fn wei_to_eth(wei: Wei) -> f64 {
    wei as f64 / WEI_PER_ETH as f64
}

pub fn eth_to_wei(eth: f64) -> Wei {
    (eth * WEI_PER_ETH as f64).round() as Wei
}

/// One histogram row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCount {
    pub lo_wei: Wei,
    /// `None` marks the unbounded final range.
    pub hi_wei: Option<Wei>,
    pub count: u64,
}

/// Counts each candidate in exactly one range by end balance. Candidates
/// outside a bounded spec are dropped.
pub fn bucket_by_balance(candidates: &BTreeMap<Address, Wei>, spec: &BucketSpec) -> Vec<BucketCount> {
    let edges = spec.lower_edges_wei();
    let mut counts = vec![0u64; edges.len()];
    for &balance in candidates.values() {
        if let Some(i) = spec.bucket_of(balance) {
            counts[i] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| BucketCount {
            lo_wei: edges[i],
            hi_wei: edges.get(i + 1).copied().or(spec.upper_wei()),
            count,
        })
        .collect()
}

/// Histogram CSV: `range_lo_eth,range_hi_eth,count`, unbounded upper edge as
/// `inf`.
pub fn write_histogram_csv<W: Write>(
    out: &mut W,
    histogram: &[BucketCount],
) -> std::io::Result<()> {
    writeln!(out, "range_lo_eth,range_hi_eth,count")?;
    for row in histogram {
        let hi = row
            .hi_wei
            .map_or_else(|| "inf".to_string(), |w| wei_to_eth(w).to_string());
        writeln!(out, "{},{},{}", wei_to_eth(row.lo_wei), hi, row.count)?;
    }
    Ok(())
}

/// JSON summary of one analysis run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub from_block: u64,
    pub to_block: u64,
    pub transfer_count: usize,
    pub candidate_count: usize,
    pub max_balance_bound_wei: Wei,
    pub max_balance_bound_eth: f64,
    pub histogram: Vec<BucketCount>,
}

/// Runs the full analysis: candidates, histogram, and balance bound.
pub fn analyze(
    trace: &[TraceRecord],
    window: &Window,
    spec: &BucketSpec,
) -> Result<AnalysisSummary, AnonymityError> {
    let candidates = candidate_addresses(trace, window)?;
    let histogram = bucket_by_balance(&candidates, spec);
    let bound = candidates.values().copied().max().unwrap_or(0);
    Ok(AnalysisSummary {
        from_block: window.start.block,
        to_block: window.end.block,
        transfer_count: trace.iter().filter(|r| r.kind == TxKind::Transfer).count(),
        candidate_count: candidates.len(),
        max_balance_bound_wei: bound,
        max_balance_bound_eth: wei_to_eth(bound),
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ETH: Wei = WEI_PER_ETH;

    fn addr(byte: u8) -> Address {
        Address([byte; 20])
    }

    fn transfer(block: u64, from: Address, to: Address, value: Wei) -> TraceRecord {
        TraceRecord {
            block,
            timestamp: block * 13,
            from,
            to,
            value_wei: value,
            kind: TxKind::Transfer,
        }
    }

    #[test]
    fn empty_trace_has_no_candidates() {
        let window = Window::from_blocks(10, 20).unwrap();
        assert!(candidate_addresses(&[], &window).unwrap().is_empty());
        assert_eq!(max_balance_bound(&[], &window).unwrap(), 0);
    }

    #[test]
    fn fresh_silent_receiver_qualifies() {
        let window = Window::from_blocks(10, 20).unwrap();
        let trace = vec![transfer(12, addr(1), addr(2), 3 * ETH / 10)];
        let candidates = candidate_addresses(&trace, &window).unwrap();
        assert_eq!(candidates.get(&addr(2)), Some(&(3 * ETH / 10)));
        assert!(!candidates.contains_key(&addr(1)));
    }

    #[test]
    fn prior_receipt_disqualifies() {
        let window = Window::from_blocks(10, 20).unwrap();
        let trace = vec![
            transfer(5, addr(1), addr(2), ETH),
            transfer(12, addr(1), addr(2), ETH),
        ];
        let candidates = candidate_addresses(&trace, &window).unwrap();
        assert!(candidates.is_empty());

        // Brute-force check over the same trace.
        let brute: Vec<Address> = [addr(1), addr(2)]
            .into_iter()
            .filter(|a| {
                let sends = trace
                    .iter()
                    .any(|r| r.from == *a && window.contains_block(r.block));
                let first_in_window = trace
                    .iter()
                    .find(|r| r.to == *a)
                    .is_some_and(|r| window.contains_block(r.block));
                !sends && first_in_window
            })
            .collect();
        assert!(brute.is_empty());
    }

    #[test]
    fn in_window_sender_disqualifies() {
        let window = Window::from_blocks(10, 20).unwrap();
        let trace = vec![
            transfer(12, addr(1), addr(2), ETH),
            transfer(15, addr(2), addr(3), ETH / 2),
        ];
        let candidates = candidate_addresses(&trace, &window).unwrap();
        assert!(!candidates.contains_key(&addr(2)));
        assert_eq!(candidates.get(&addr(3)), Some(&(ETH / 2)));
    }

    #[test]
    fn non_transfer_records_are_ignored() {
        let window = Window::from_blocks(10, 20).unwrap();
        let mut deploy = transfer(12, addr(1), addr(2), 0);
        deploy.kind = TxKind::Deploy;
        let mut call = transfer(13, addr(2), addr(3), ETH);
        call.kind = TxKind::ContractCall;
        let candidates = candidate_addresses(&[deploy, call], &window).unwrap();
        assert!(candidates.is_empty());
    }

    #[test]
    fn unsorted_trace_rejected() {
        let window = Window::from_blocks(0, 100).unwrap();
        let trace = vec![
            transfer(9, addr(1), addr(2), 1),
            transfer(5, addr(1), addr(3), 1),
        ];
        assert_eq!(
            candidate_addresses(&trace, &window),
            Err(AnonymityError::UnsortedTrace { position: 1 })
        );
    }

    #[test]
    fn default_buckets_match_table_shape() {
        let spec = BucketSpec::default_table();
        let mut candidates = BTreeMap::new();
        candidates.insert(addr(1), 3 * ETH / 10);
        candidates.insert(addr(2), 4 * ETH / 10);
        candidates.insert(addr(3), 7 * ETH);
        let histogram = bucket_by_balance(&candidates, &spec);
        let by_lo: BTreeMap<Wei, u64> = histogram.iter().map(|b| (b.lo_wei, b.count)).collect();
        assert_eq!(by_lo[&(ETH / 10)], 2);
        assert_eq!(by_lo[&ETH], 1);
        assert_eq!(histogram.iter().map(|b| b.count).sum::<u64>(), 3);
    }

    #[test]
    fn boundary_balance_falls_into_upper_range() {
        let spec = BucketSpec::default_table();
        let mut candidates = BTreeMap::new();
        candidates.insert(addr(1), ETH / 2); // exactly 0.5 ETH
        let histogram = bucket_by_balance(&candidates, &spec);
        let row = histogram.iter().find(|b| b.count == 1).unwrap();
        assert_eq!(row.lo_wei, ETH / 2);
        assert_eq!(row.hi_wei, Some(ETH));
    }

    #[test]
    fn geometric_bucket_edges() {
        let spec = geometric_buckets(0.1, 10.0, 1.25).unwrap();
        let edges = spec.edges_eth();
        assert_eq!(edges[0], 0.1);
        assert_eq!(edges[1], 0.125);
        assert_eq!(edges[2], 0.15625);
        assert_eq!(spec.lower_edges_wei()[0], ETH / 10);

        assert_eq!(
            geometric_buckets(0.1, 10.0, 1.0),
            Err(AnonymityError::InvalidRatio)
        );

        let single = geometric_buckets(1.0, 1.25, 1.25).unwrap();
        assert_eq!(single.lower_edges_wei().len(), 1);
        assert_eq!(single.upper_wei(), Some(eth_to_wei(1.25)));
    }

    #[test]
    fn bound_is_max_candidate_balance() {
        let window = Window::from_blocks(10, 20).unwrap();
        let trace = vec![
            transfer(12, addr(1), addr(2), 3 * ETH / 10),
            transfer(13, addr(1), addr(3), ETH / 2),
        ];
        assert_eq!(max_balance_bound(&trace, &window).unwrap(), ETH / 2);
    }

    #[test]
    fn histogram_csv_format() {
        let spec = BucketSpec::default_table();
        let histogram = bucket_by_balance(&BTreeMap::new(), &spec);
        let mut out = Vec::new();
        write_histogram_csv(&mut out, &histogram).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("range_lo_eth,range_hi_eth,count"));
        assert_eq!(lines.next(), Some("0,0.1,0"));
        assert!(text.lines().last().unwrap().starts_with("1000,inf,"));
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn arb_trace(max_len: usize) -> impl Strategy<Value = Vec<TraceRecord>> {
        proptest::collection::vec(
            (0u64..60, 0u8..24, 0u8..24, 0u128..4 * WEI_PER_ETH),
            0..max_len,
        )
        .prop_map(|rows| {
            let mut rows: Vec<TraceRecord> = rows
                .into_iter()
                .map(|(block, from, to, value)| TraceRecord {
                    block,
                    timestamp: block * 13,
                    from: Address([from; 20]),
                    to: Address([to; 20]),
                    value_wei: value,
                    kind: TxKind::Transfer,
                })
                .collect();
            rows.sort_by_key(|r| r.block);
            rows
        })
    }

    proptest! {
        #[test]
        fn candidates_never_send_in_window(trace in arb_trace(120)) {
            let window = Window::from_blocks(20, 40).unwrap();
            let candidates = candidate_addresses(&trace, &window).unwrap();
            for addr in candidates.keys() {
                prop_assert!(!trace.iter().any(
                    |r| r.from == *addr && window.contains_block(r.block)
                ));
            }
        }

        #[test]
        fn widening_only_removes_new_senders(trace in arb_trace(120)) {
            let narrow = Window::from_blocks(25, 35).unwrap();
            let wide = Window::from_blocks(20, 40).unwrap();
            let narrow_set = candidate_addresses(&trace, &narrow).unwrap();
            let wide_set = candidate_addresses(&trace, &wide).unwrap();
            for (addr, _) in narrow_set {
                let sends_in_wide = trace
                    .iter()
                    .any(|r| r.from == addr && wide.contains_block(r.block));
                let first_receipt_in_wide = trace
                    .iter()
                    .find(|r| r.to == addr)
                    .is_some_and(|r| wide.contains_block(r.block));
                if !sends_in_wide && first_receipt_in_wide {
                    prop_assert!(wide_set.contains_key(&addr));
                }
            }
        }

        #[test]
        fn every_candidate_lands_in_exactly_one_default_bucket(trace in arb_trace(120)) {
            let window = Window::from_blocks(20, 40).unwrap();
            let candidates = candidate_addresses(&trace, &window).unwrap();
            let histogram = bucket_by_balance(&candidates, &BucketSpec::default_table());
            prop_assert_eq!(
                histogram.iter().map(|b| b.count).sum::<u64>() as usize,
                candidates.len()
            );
        }
    }
}
