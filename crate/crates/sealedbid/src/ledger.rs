//! Account-based ledger simulation.
//!
//! The ledger tracks balances, nonces, and a deployed-code marker per account,
//! an append-only transaction trace, and a block clock that only moves through
//! explicit [`LedgerState::advance_block`] calls. Contract addresses are derived
//! with the EIP-1014 CREATE2 rule, so a fund-binding contract's address is a
//! pure function of (deployer, salt, bytecode hash) and can be computed before
//! anything exists at that address.
//!
//! Fees are deliberately not burned here; conservation of funds is an exact
//! integer invariant (`total_balance() == genesis_total()`), and fee accounting
//! lives in [`crate::fees`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha3::{Digest, Keccak256};
use thiserror::Error;

use crate::trace::TraceRecord;

/// Smallest unit of value. 1 ETH = 10^18 wei.
pub type Wei = u128;

/// Wei per ETH.
pub const WEI_PER_ETH: Wei = 1_000_000_000_000_000_000;

/// Seconds per block unless a caller advances the clock explicitly.
pub const DEFAULT_BLOCK_TIME_SECS: u64 = 13;

/// 20-byte account identifier, rendered as `0x` + 40 lowercase hex chars.
///
/// Ordering is plain byte order so that map iteration is deterministic.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const LEN: usize = 20;

    pub const fn zero() -> Self {
        Address([0u8; 20])
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    /// Builds an address from the low 20 bytes of a 32-byte hash.
    pub fn from_hash(digest: &[u8; 32]) -> Self {
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest[12..32]);
        Address(out)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid address {0:?}: expected 0x-prefixed 40-char hex")]
pub struct AddressParseError(String);

impl FromStr for Address {
    type Err = AddressParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw = s.strip_prefix("0x").unwrap_or(s);
        if raw.len() != 40 {
            return Err(AddressParseError(s.to_string()));
        }
        let bytes = hex::decode(raw).map_err(|_| AddressParseError(s.to_string()))?;
        let mut out = [0u8; 20];
        out.copy_from_slice(&bytes);
        Ok(Address(out))
    }
}

impl Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Shape of a ledger transaction.
///
/// A bidding transfer to a one-time address and an ordinary transfer share the
/// `Transfer` kind and the exact same record layout; nothing in a transaction
/// marks it as auction-related.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TxKind {
    Transfer,
    Deploy,
    ContractCall,
}

impl fmt::Display for TxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TxKind::Transfer => "transfer",
            TxKind::Deploy => "deploy",
            TxKind::ContractCall => "contract-call",
        };
        f.write_str(s)
    }
}

impl FromStr for TxKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "transfer" => Ok(TxKind::Transfer),
            "deploy" => Ok(TxKind::Deploy),
            "contract-call" => Ok(TxKind::ContractCall),
            other => Err(format!("unknown transaction kind {other:?}")),
        }
    }
}

/// One applied ledger transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub block: u64,
    pub timestamp: u64,
    pub from: Address,
    pub to: Address,
    pub value: Wei,
    pub kind: TxKind,
}

/// Per-address account state.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub balance: Wei,
    pub nonce: u64,
    /// Bytecode-hash marker; present once the account holds deployed code.
    pub code: Option<[u8; 32]>,
    /// Set for deployed fund-binding contracts: the only address allowed to
    /// withdraw from this account.
    pub owner: Option<Address>,
}

/// Ledger clock: (block number, unix timestamp).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clock {
    pub block: u64,
    pub timestamp: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("insufficient balance: {address} holds {balance} wei, tried to move {required}")]
    InsufficientBalance {
        address: Address,
        balance: Wei,
        required: Wei,
    },
    #[error("address {0} already holds deployed code")]
    AddressOccupied(Address),
    #[error("{0} is not authorized to deploy fund-binding contracts")]
    UnauthorizedDeployer(Address),
    #[error("address {0} holds no code")]
    NotAContract(Address),
    #[error("{caller} is not the owner of contract {contract}")]
    UnauthorizedCaller { contract: Address, caller: Address },
    #[error("invalid trace window: from_block {from} > to_block {to}")]
    InvalidWindow { from: u64, to: u64 },
    #[error("genesis funding is only allowed during the setup stage")]
    SetupClosed,
    #[error("account {0} is a contract; its funds move only through owner withdrawals")]
    ContractFundsLocked(Address),
}

/// The single owner of all simulated chain state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerState {
    accounts: BTreeMap<Address, Account>,
    trace: Vec<Transaction>,
    clock: Clock,
    genesis_total: Wei,
    setup_open: bool,
    block_time_secs: u64,
}

impl Default for LedgerState {
    fn default() -> Self {
        Self::new()
    }
}

impl LedgerState {
    pub fn new() -> Self {
        LedgerState {
            accounts: BTreeMap::new(),
            trace: Vec::new(),
            clock: Clock::default(),
            genesis_total: 0,
            setup_open: true,
            block_time_secs: DEFAULT_BLOCK_TIME_SECS,
        }
    }

    pub fn with_block_time(mut self, secs: u64) -> Self {
        self.block_time_secs = secs;
        self
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    pub fn trace(&self) -> &[Transaction] {
        &self.trace
    }

    pub fn account(&self, addr: &Address) -> Option<&Account> {
        self.accounts.get(addr)
    }

    pub fn balance(&self, addr: &Address) -> Wei {
        self.accounts.get(addr).map_or(0, |a| a.balance)
    }

    pub fn genesis_total(&self) -> Wei {
        self.genesis_total
    }

    /// Copy of every account balance, keyed by address. Used as the balance
    /// source snapshot for attestation.
    pub fn balances_snapshot(&self) -> BTreeMap<Address, Wei> {
        self.accounts
            .iter()
            .map(|(addr, account)| (*addr, account.balance))
            .collect()
    }

    /// Sum of every account balance. Conservation demands this stays equal to
    /// [`genesis_total`](Self::genesis_total) after any sequence of successful
    /// operations.
    pub fn total_balance(&self) -> Wei {
        self.accounts.values().map(|a| a.balance).sum()
    }

    pub fn conservation_holds(&self) -> bool {
        self.total_balance() == self.genesis_total
    }

    /// Advances the clock by `blocks` blocks and `seconds` seconds, closing
    /// the setup stage on first use.
    pub fn advance_block(&mut self, blocks: u64, seconds: u64) {
        self.setup_open = false;
        self.clock.block += blocks;
        self.clock.timestamp += seconds;
    }

    /// Advances by `blocks` blocks at the configured cadence.
    pub fn advance_blocks(&mut self, blocks: u64) {
        self.advance_block(blocks, blocks * self.block_time_secs);
    }

    /// Credits an account out-of-band during setup. No transaction is recorded;
    /// genesis funding has no on-chain sender.
    pub fn fund_genesis(&mut self, addr: Address, amount: Wei) -> Result<(), LedgerError> {
        if !self.setup_open {
            return Err(LedgerError::SetupClosed);
        }
        self.accounts.entry(addr).or_default().balance += amount;
        self.genesis_total += amount;
        Ok(())
    }

    /// Moves `value` from `from` to `to`, auto-creating the receiver.
    ///
    /// Contract accounts cannot be the sender; their funds leave only through
    /// [`contract_withdraw`](Self::contract_withdraw).
    pub fn transfer(
        &mut self,
        from: Address,
        to: Address,
        value: Wei,
    ) -> Result<Transaction, LedgerError> {
        let sender = self.accounts.get(&from);
        if sender.is_some_and(|a| a.code.is_some()) {
            return Err(LedgerError::ContractFundsLocked(from));
        }
        let balance = sender.map_or(0, |a| a.balance);
        if balance < value {
            return Err(LedgerError::InsufficientBalance {
                address: from,
                balance,
                required: value,
            });
        }
        let sender = self.accounts.entry(from).or_default();
        sender.balance -= value;
        sender.nonce += 1;
        self.accounts.entry(to).or_default().balance += value;
        Ok(self.record(from, to, value, TxKind::Transfer))
    }

    /// Installs a code marker directly, outside CREATE2. Used to place auction
    /// contracts themselves; only code-bearing accounts may later act as
    /// fund-binding deployers. The account owns itself: its code decides
    /// payouts, modeled as self-called withdrawals.
    pub fn install_contract(&mut self, addr: Address, code_hash: [u8; 32]) -> Result<(), LedgerError> {
        let account = self.accounts.entry(addr).or_default();
        if account.code.is_some() {
            return Err(LedgerError::AddressOccupied(addr));
        }
        account.code = Some(code_hash);
        account.owner = Some(addr);
        Ok(())
    }

    /// Deploys a fund-binding contract at the CREATE2-derived address.
    ///
    /// Any balance already sitting at the derived address is preserved: funds
    /// sent there before deployment become withdrawable by `owner` afterwards.
    pub fn deploy_at(
        &mut self,
        deployer: Address,
        salt32: &[u8; 32],
        bytecode_hash: &[u8; 32],
        owner: Address,
    ) -> Result<Address, LedgerError> {
        if !self.accounts.get(&deployer).is_some_and(|a| a.code.is_some()) {
            return Err(LedgerError::UnauthorizedDeployer(deployer));
        }
        let addr = derive_onetime_address(deployer, salt32, bytecode_hash);
        let account = self.accounts.entry(addr).or_default();
        if account.code.is_some() {
            return Err(LedgerError::AddressOccupied(addr));
        }
        account.code = Some(*bytecode_hash);
        account.owner = Some(owner);
        self.accounts.entry(deployer).or_default().nonce += 1;
        Ok(self.record(deployer, addr, 0, TxKind::Deploy).to)
    }

    /// Owner-guarded withdrawal from a deployed contract.
    pub fn contract_withdraw(
        &mut self,
        contract: Address,
        to: Address,
        amount: Wei,
        caller: Address,
    ) -> Result<Transaction, LedgerError> {
        let account = self
            .accounts
            .get(&contract)
            .filter(|a| a.code.is_some())
            .ok_or(LedgerError::NotAContract(contract))?;
        if account.owner != Some(caller) {
            return Err(LedgerError::UnauthorizedCaller { contract, caller });
        }
        if account.balance < amount {
            return Err(LedgerError::InsufficientBalance {
                address: contract,
                balance: account.balance,
                required: amount,
            });
        }
        self.accounts.get_mut(&contract).expect("checked above").balance -= amount;
        self.accounts.entry(to).or_default().balance += amount;
        Ok(self.record(contract, to, amount, TxKind::ContractCall))
    }

    /// All transfer-kind transactions with block in `[from_block, to_block]`,
    /// in trace order, as analyzer records.
    pub fn export_trace(
        &self,
        from_block: u64,
        to_block: u64,
    ) -> Result<Vec<TraceRecord>, LedgerError> {
        if from_block > to_block {
            return Err(LedgerError::InvalidWindow {
                from: from_block,
                to: to_block,
            });
        }
        Ok(self
            .trace
            .iter()
            .filter(|tx| {
                tx.kind == TxKind::Transfer && tx.block >= from_block && tx.block <= to_block
            })
            .map(TraceRecord::from)
            .collect())
    }

    /// The whole trace, all kinds, as analyzer records.
    pub fn export_full_trace(&self) -> Vec<TraceRecord> {
        self.trace.iter().map(TraceRecord::from).collect()
    }

    fn record(&mut self, from: Address, to: Address, value: Wei, kind: TxKind) -> Transaction {
        let tx = Transaction {
            block: self.clock.block,
            timestamp: self.clock.timestamp,
            from,
            to,
            value,
            kind,
        };
        self.trace.push(tx.clone());
        tx
    }
}

/// KECCAK-256 of arbitrary bytes.
pub fn keccak256(data: &[u8]) -> [u8; 32] {
    let mut hasher = Keccak256::new();
    hasher.update(data);
    hasher.finalize().into()
}

/// EIP-1014 CREATE2 address derivation:
/// last 20 bytes of `keccak256(0xff ++ deployer ++ salt ++ bytecode_hash)`.
pub fn derive_onetime_address(
    deployer: Address,
    salt32: &[u8; 32],
    bytecode_hash: &[u8; 32],
) -> Address {
    let mut hasher = Keccak256::new();
    hasher.update([0xffu8]);
    hasher.update(deployer.0);
    hasher.update(salt32);
    hasher.update(bytecode_hash);
    let digest: [u8; 32] = hasher.finalize().into();
    Address::from_hash(&digest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(byte: u8) -> Address {
        Address([byte; 20])
    }

    const ETH: Wei = WEI_PER_ETH;

    #[test]
    fn genesis_funding_credits_and_accumulates() {
        let mut ledger = LedgerState::new();
        ledger.fund_genesis(addr(0xaa), ETH).unwrap();
        assert_eq!(ledger.balance(&addr(0xaa)), ETH);

        let mut ledger = LedgerState::new();
        ledger.fund_genesis(addr(0xaa), 5 * ETH / 10).unwrap();
        ledger.fund_genesis(addr(0xaa), 5 * ETH / 10).unwrap();
        assert_eq!(ledger.balance(&addr(0xaa)), ETH);

        ledger.fund_genesis(addr(0xbb), 0).unwrap();
        assert_eq!(ledger.balance(&addr(0xbb)), 0);
        assert!(ledger.trace().is_empty());
    }

    #[test]
    fn genesis_rejected_after_setup() {
        let mut ledger = LedgerState::new();
        ledger.advance_blocks(1);
        assert_eq!(
            ledger.fund_genesis(addr(1), ETH),
            Err(LedgerError::SetupClosed)
        );
    }

    #[test]
    fn transfer_moves_value_and_appends_trace() {
        let mut ledger = LedgerState::new();
        ledger.fund_genesis(addr(1), ETH).unwrap();
        ledger.advance_blocks(1);
        ledger.transfer(addr(1), addr(2), 3 * ETH / 10).unwrap();
        assert_eq!(ledger.balance(&addr(1)), 7 * ETH / 10);
        assert_eq!(ledger.balance(&addr(2)), 3 * ETH / 10);
        assert_eq!(ledger.trace().len(), 1);
        assert_eq!(ledger.trace()[0].kind, TxKind::Transfer);
    }

    #[test]
    fn transfer_insufficient_leaves_state_untouched() {
        let mut ledger = LedgerState::new();
        ledger.fund_genesis(addr(1), ETH).unwrap();
        let before = ledger.clone();
        let err = ledger.transfer(addr(1), addr(2), 2 * ETH).unwrap_err();
        assert!(matches!(err, LedgerError::InsufficientBalance { .. }));
        assert_eq!(ledger, before);
    }

    #[test]
    fn transfer_auto_creates_receiver() {
        let mut ledger = LedgerState::new();
        ledger.fund_genesis(addr(1), ETH).unwrap();
        ledger.transfer(addr(1), addr(9), ETH).unwrap();
        let created = ledger.account(&addr(9)).unwrap();
        assert_eq!(created.balance, ETH);
        assert_eq!(created.nonce, 0);
    }

    #[test]
    fn derivation_is_deterministic_and_salt_sensitive() {
        let dep = addr(0x11);
        let salt = [7u8; 32];
        let code = keccak256(b"fund-binding");
        let a = derive_onetime_address(dep, &salt, &code);
        let b = derive_onetime_address(dep, &salt, &code);
        assert_eq!(a, b);

        let mut flipped = salt;
        flipped[0] ^= 1;
        assert_ne!(a, derive_onetime_address(dep, &flipped, &code));
        assert_ne!(a, derive_onetime_address(addr(0x12), &salt, &code));
    }

    #[test]
    fn derivation_golden_vector() {
        // Official EIP-1014 example: zero deployer, zero salt, empty init code.
        let got = derive_onetime_address(Address::zero(), &[0u8; 32], &keccak256(b""));
        assert_eq!(
            got.to_string(),
            "0xe33c0c7f7df4809055c3eba6c09cfe4baf1bd9e0"
        );
    }

    #[test]
    fn derivation_collision_probe() {
        use rand::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..10_000 {
            let mut dep = [0u8; 20];
            let mut salt = [0u8; 32];
            let mut code = [0u8; 32];
            rng.fill_bytes(&mut dep);
            rng.fill_bytes(&mut salt);
            rng.fill_bytes(&mut code);
            assert!(seen.insert(derive_onetime_address(Address(dep), &salt, &code)));
        }
    }

    #[test]
    fn deploy_preserves_balance_and_guards() {
        let mut ledger = LedgerState::new();
        let auction = addr(0xc0);
        ledger.install_contract(auction, keccak256(b"auction")).unwrap();
        ledger.fund_genesis(addr(1), ETH).unwrap();

        let code = keccak256(b"fund-binding");
        let salt = [3u8; 32];
        let theta = derive_onetime_address(auction, &salt, &code);
        ledger.transfer(addr(1), theta, 3 * ETH / 10).unwrap();

        let deployed = ledger.deploy_at(auction, &salt, &code, auction).unwrap();
        assert_eq!(deployed, theta);
        assert_eq!(ledger.balance(&theta), 3 * ETH / 10);
        assert_eq!(ledger.account(&theta).unwrap().owner, Some(auction));

        assert_eq!(
            ledger.deploy_at(auction, &salt, &code, auction),
            Err(LedgerError::AddressOccupied(theta))
        );
        assert_eq!(
            ledger.deploy_at(addr(1), &salt, &code, addr(1)),
            Err(LedgerError::UnauthorizedDeployer(addr(1)))
        );
    }

    #[test]
    fn withdraw_guards_and_full_drain() {
        let mut ledger = LedgerState::new();
        let auction = addr(0xc0);
        ledger.install_contract(auction, keccak256(b"auction")).unwrap();
        ledger.fund_genesis(addr(1), ETH).unwrap();

        let code = keccak256(b"fund-binding");
        let salt = [4u8; 32];
        let theta = derive_onetime_address(auction, &salt, &code);
        ledger.transfer(addr(1), theta, ETH).unwrap();

        assert_eq!(
            ledger.contract_withdraw(theta, addr(1), 1, addr(1)),
            Err(LedgerError::NotAContract(theta))
        );
        ledger.deploy_at(auction, &salt, &code, auction).unwrap();
        assert_eq!(
            ledger.contract_withdraw(theta, addr(1), 1, addr(1)),
            Err(LedgerError::UnauthorizedCaller {
                contract: theta,
                caller: addr(1)
            })
        );
        ledger.contract_withdraw(theta, auction, ETH, auction).unwrap();
        assert_eq!(ledger.balance(&theta), 0);
        assert_eq!(
            ledger.contract_withdraw(addr(5), addr(1), 1, addr(1)),
            Err(LedgerError::NotAContract(addr(5)))
        );
    }

    #[test]
    fn export_trace_window() {
        let mut ledger = LedgerState::new();
        assert!(ledger.export_trace(0, 10).unwrap().is_empty());
        assert!(ledger.export_trace(5, 4).is_err());

        ledger.fund_genesis(addr(1), 10 * ETH).unwrap();
        for i in 0..3u64 {
            ledger.advance_blocks(1);
            ledger.transfer(addr(1), addr(2 + i as u8), ETH).unwrap();
        }
        let records = ledger.export_trace(1, 3).unwrap();
        assert_eq!(records.len(), 3);
        assert!(records.windows(2).all(|w| w[0].block <= w[1].block));
        assert!(ledger.export_trace(100, 200).unwrap().is_empty());
    }

    #[test]
    fn conservation_over_mixed_operations() {
        let mut ledger = LedgerState::new();
        let auction = addr(0xc0);
        ledger.install_contract(auction, keccak256(b"auction")).unwrap();
        ledger.fund_genesis(addr(1), 2 * ETH).unwrap();
        ledger.fund_genesis(addr(2), 3 * ETH).unwrap();
        ledger.advance_blocks(1);

        let code = keccak256(b"fund-binding");
        let theta = derive_onetime_address(auction, &[9u8; 32], &code);
        ledger.transfer(addr(1), theta, ETH).unwrap();
        ledger.transfer(addr(2), addr(3), ETH / 2).unwrap();
        ledger.deploy_at(auction, &[9u8; 32], &code, auction).unwrap();
        ledger.contract_withdraw(theta, auction, ETH, auction).unwrap();
        let _ = ledger.transfer(addr(3), addr(4), 5 * ETH); // fails, must not disturb totals

        assert!(ledger.conservation_holds());
        assert_eq!(ledger.total_balance(), 5 * ETH);
    }

    #[test]
    fn contract_balance_never_moves_by_plain_transfer() {
        let mut ledger = LedgerState::new();
        let auction = addr(0xc0);
        ledger.install_contract(auction, keccak256(b"auction")).unwrap();
        ledger.fund_genesis(addr(1), ETH).unwrap();
        ledger.transfer(addr(1), auction, ETH).unwrap();
        assert_eq!(
            ledger.transfer(auction, addr(1), 1),
            Err(LedgerError::ContractFundsLocked(auction))
        );
    }

    #[test]
    fn address_hex_round_trip() {
        let a = Address([0xab; 20]);
        let rendered = a.to_string();
        assert_eq!(rendered, format!("0x{}", "ab".repeat(20)));
        assert_eq!(rendered.parse::<Address>().unwrap(), a);
        assert!("0x1234".parse::<Address>().is_err());
        assert!("zz".repeat(20).parse::<Address>().is_err());
    }
}
