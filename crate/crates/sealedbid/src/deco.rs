//! Three-party balance attestation.
//!
//! A balance source (an Etherscan stand-in backed by a ledger snapshot), a
//! prover (the bidder), and a verifier (the oracle) run a session that ends
//! with a signed credential binding a bid id to a verified commitment. The
//! MAC key is additively shared between prover and verifier; the source holds
//! the full key and tags its responses with it. The verifier never sees which
//! address was queried: queries and responses travel in envelopes opaque to
//! it, and the proof object carries the address only in masked form.
//!
//! Real TLS, garbled circuits, and MPC are out of scope; the message flow,
//! key sharing, and check order are preserved. The bundled proof backend is
//! sound but not zero-knowledge — the claimed balance and decommitment ride
//! inside the proof object — and the backend interface leaves a slot for a
//! succinct-proof implementation.

use std::collections::BTreeMap;

use hmac::{Hmac, Mac};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::{
    commit_with, BidMessage, Commitment, Decommitment, OracleKeypair, OracleSignature,
};
use crate::ledger::{Address, LedgerState, Wei};

type HmacSha256 = Hmac<Sha256>;

/// 128-bit MAC key or key share.
pub type MacKey = [u8; 16];

/// HMAC-SHA256 tag over a source response.
pub type MacTag = [u8; 32];

/// Additive shares of the MAC key: `prover + verifier = mac key (mod 2^128)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyShares {
    pub prover: MacKey,
    pub verifier: MacKey,
}

/// Recombines the shares by 128-bit wrapping addition.
pub fn reconstruct_mac_key(prover: &MacKey, verifier: &MacKey) -> MacKey {
    u128::from_be_bytes(*prover)
        .wrapping_add(u128::from_be_bytes(*verifier))
        .to_be_bytes()
}

/// Balance lookup service holding a point-in-time ledger snapshot.
///
/// Absence is a zero balance, matching account-model semantics; every
/// response is MAC-tagged under the session key the source received in the
/// handshake.
#[derive(Clone, Debug)]
pub struct BalanceSource {
    balances: BTreeMap<Address, Wei>,
}

impl BalanceSource {
    pub fn snapshot(ledger: &LedgerState) -> Self {
        BalanceSource {
            balances: ledger.balances_snapshot(),
        }
    }

    pub fn from_balances(balances: BTreeMap<Address, Wei>) -> Self {
        BalanceSource { balances }
    }

    fn respond(&self, mac_key: &MacKey, theta: &Address) -> (Wei, MacTag) {
        let balance = self.balances.get(theta).copied().unwrap_or(0);
        (balance, mac_tag(mac_key, theta, balance))
    }
}

/// `MAC(k, theta || balance)` with the balance as a 32-byte big-endian word.
pub fn mac_tag(mac_key: &MacKey, theta: &Address, balance: Wei) -> MacTag {
    let mut mac = HmacSha256::new_from_slice(mac_key).expect("any key length is valid for hmac");
    mac.update(theta.as_bytes());
    let mut word = [0u8; 32];
    word[16..].copy_from_slice(&balance.to_be_bytes());
    mac.update(&word);
    mac.finalize().into_bytes().into()
}

/// Message the oracle signs: `auction_id || bid_id || commitment`, both ids
/// as 8-byte big-endian words.
pub fn credential_message(auction_id: u64, bid_id: u64, com: &Commitment) -> [u8; 48] {
    let mut out = [0u8; 48];
    out[..8].copy_from_slice(&auction_id.to_be_bytes());
    out[8..16].copy_from_slice(&bid_id.to_be_bytes());
    out[16..].copy_from_slice(&com.0);
    out
}

/// Signed statement that the commitment registered under `bid_id` passed the
/// balance attestation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCredential {
    pub bid_id: u64,
    pub signature: OracleSignature,
}

/// Where the verifier looks up the commitment a bid id is registered under.
pub trait CommitmentRegistry {
    fn auction_id(&self) -> u64;
    fn commitment_of(&self, bid_id: u64) -> Option<Commitment>;
}

/// Proof that a commitment opens to the attested balance.
///
/// `payload` is backend-specific evidence; `claimed_balance` is public here
/// because the bundled backend is not zero-knowledge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceProof {
    pub backend: String,
    pub claimed_balance: Wei,
    pub payload: serde_json::Value,
}

/// Pluggable proof system for `com = Commit(theta, balance)` statements.
pub trait ProofBackend {
    fn name(&self) -> &'static str;

    fn prove(
        &self,
        com: &Commitment,
        theta: Address,
        balance: Wei,
        dec: &Decommitment,
    ) -> BalanceProof;

    /// Accepts iff the proof shows `com` commits to `claimed_balance`.
    fn check(&self, com: &Commitment, claimed_balance: Wei, proof: &BalanceProof) -> bool;
}

/// Reference backend: sound, complete, and deliberately not private.
///
/// The proof carries the decommitment and the one-time address masked with a
/// decommitment-derived pad, so a checker can recompute the commitment while
/// the raw address bytes never appear on the wire.
#[derive(Clone, Copy, Debug, Default)]
pub struct ReferenceBackend;

const REFERENCE_BACKEND_NAME: &str = "reference-recompute";

fn address_mask(dec: &Decommitment, com: &Commitment) -> [u8; 20] {
    let mut hasher = Sha256::new();
    hasher.update(b"sealedbid.addr-mask.v1");
    hasher.update(dec.0);
    hasher.update(com.0);
    let digest = hasher.finalize();
    let mut mask = [0u8; 20];
    mask.copy_from_slice(&digest[..20]);
    mask
}

fn xor_20(a: &[u8; 20], b: &[u8; 20]) -> [u8; 20] {
    let mut out = [0u8; 20];
    for i in 0..20 {
        out[i] = a[i] ^ b[i];
    }
    out
}

impl ProofBackend for ReferenceBackend {
    fn name(&self) -> &'static str {
        REFERENCE_BACKEND_NAME
    }

    fn prove(
        &self,
        com: &Commitment,
        theta: Address,
        balance: Wei,
        dec: &Decommitment,
    ) -> BalanceProof {
        let masked = xor_20(theta.as_bytes(), &address_mask(dec, com));
        BalanceProof {
            backend: REFERENCE_BACKEND_NAME.to_string(),
            claimed_balance: balance,
            payload: serde_json::json!({
                "dec": dec.to_string(),
                "masked_address": format!("0x{}", hex::encode(masked)),
            }),
        }
    }

    fn check(&self, com: &Commitment, claimed_balance: Wei, proof: &BalanceProof) -> bool {
        if proof.backend != REFERENCE_BACKEND_NAME || proof.claimed_balance != claimed_balance {
            return false;
        }
        let Some(dec) = proof
            .payload
            .get("dec")
            .and_then(|v| v.as_str())
            .and_then(|s| s.parse::<Decommitment>().ok())
        else {
            return false;
        };
        let Some(masked) = proof
            .payload
            .get("masked_address")
            .and_then(|v| v.as_str())
            .and_then(|s| s.parse::<Address>().ok())
        else {
            return false;
        };
        let theta = Address(xor_20(masked.as_bytes(), &address_mask(&dec, com)));
        let msg = BidMessage {
            onetime_address: theta,
            price: claimed_balance,
        };
        commit_with(&msg, &dec) == *com
    }
}

/// Everything the verifier stores about a session. Serialized as canonical
/// key-ordered JSON for reports and the privacy scan.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AttestationTranscript {
    pub handshake: Option<HandshakeRecord>,
    /// Encrypted query; opaque to the verifier.
    pub query_envelope: Option<String>,
    pub tagged_response: Option<TaggedResponseRecord>,
    pub commitment: Option<Commitment>,
    /// Set once the verifier releases its key share to the prover.
    pub verifier_share_released: bool,
    pub proof: Option<BalanceProof>,
    pub credential: Option<OracleCredential>,
    pub rejection: Option<String>,
}

impl AttestationTranscript {
    /// Canonical JSON: object keys sorted, no insignificant whitespace.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("transcript is always serializable");
        value.to_string()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HandshakeRecord {
    pub session_id: String,
    pub verifier_share: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaggedResponseRecord {
    pub ciphertext: String,
    pub tag: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AttestationError {
    #[error("MAC check failed: source response forged or corrupted")]
    MacCheckFailed,
    #[error("proof rejected for bid {bid_id}")]
    ProofRejected { bid_id: u64 },
    #[error("unknown bid id {0}")]
    UnknownBidId(u64),
    #[error("session step out of order: {0}")]
    OutOfOrder(&'static str),
}

/// One attestation session: handshake, balance query, proof, attestation.
pub struct AttestationSession {
    shares: KeyShares,
    source_mac_key: MacKey,
    enc_key: [u8; 32],
    transcript: AttestationTranscript,
    /// Tag of the source response, kept by the prover for the MAC check.
    response_tag: Option<MacTag>,
}

impl AttestationSession {
    /// Three-party handshake: draws fresh shares, hands the recombined key to
    /// the source side, and the prover-source encryption key to the prover.
    pub fn handshake<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut prover = [0u8; 16];
        let mut verifier = [0u8; 16];
        let mut enc_key = [0u8; 32];
        let mut session_id = [0u8; 8];
        rng.fill_bytes(&mut prover);
        rng.fill_bytes(&mut verifier);
        rng.fill_bytes(&mut enc_key);
        rng.fill_bytes(&mut session_id);

        let shares = KeyShares { prover, verifier };
        let transcript = AttestationTranscript {
            handshake: Some(HandshakeRecord {
                session_id: format!("0x{}", hex::encode(session_id)),
                verifier_share: format!("0x{}", hex::encode(verifier)),
            }),
            ..AttestationTranscript::default()
        };
        AttestationSession {
            source_mac_key: reconstruct_mac_key(&shares.prover, &shares.verifier),
            shares,
            enc_key,
            transcript,
            response_tag: None,
        }
    }

    pub fn key_shares(&self) -> &KeyShares {
        &self.shares
    }

    /// The full key as held by the source.
    pub fn source_mac_key(&self) -> MacKey {
        self.source_mac_key
    }

    pub fn transcript(&self) -> &AttestationTranscript {
        &self.transcript
    }

    /// Prover-side balance query. The verifier contributes its share-bound
    /// session but observes only the encrypted envelopes; the plaintext query
    /// and response stay between prover and source.
    pub fn query_balance(&mut self, source: &BalanceSource, theta: Address) -> (Wei, MacTag) {
        let envelope = self.seal(b"query", theta.as_bytes());
        let (balance, tag) = source.respond(&self.source_mac_key, &theta);
        let mut word = [0u8; 32];
        word[16..].copy_from_slice(&balance.to_be_bytes());
        let response_ct = self.seal(b"response", &word);

        self.transcript.query_envelope = Some(format!("0x{}", hex::encode(envelope)));
        self.transcript.tagged_response = Some(TaggedResponseRecord {
            ciphertext: format!("0x{}", hex::encode(response_ct)),
            tag: format!("0x{}", hex::encode(tag)),
        });
        self.response_tag = Some(tag);
        (balance, tag)
    }

    /// Prover step: the verifier releases its share, the prover recombines
    /// the MAC key and checks the source tag against its claims, then builds
    /// the proof.
    pub fn prove_bid(
        &mut self,
        backend: &dyn ProofBackend,
        com: &Commitment,
        theta: Address,
        balance: Wei,
        dec: &Decommitment,
    ) -> Result<BalanceProof, AttestationError> {
        let response_tag = self
            .response_tag
            .ok_or(AttestationError::OutOfOrder("prove_bid before query_balance"))?;
        self.transcript.verifier_share_released = true;
        let recombined = reconstruct_mac_key(&self.shares.prover, &self.shares.verifier);
        if mac_tag(&recombined, &theta, balance) != response_tag {
            self.transcript.rejection = Some("mac-check-failed".to_string());
            return Err(AttestationError::MacCheckFailed);
        }
        let proof = backend.prove(com, theta, balance, dec);
        self.transcript.commitment = Some(*com);
        self.transcript.proof = Some(proof.clone());
        Ok(proof)
    }

    /// Verifier step: looks up the registered commitment, checks the proof,
    /// and signs the credential.
    pub fn verify_and_attest(
        &mut self,
        backend: &dyn ProofBackend,
        oracle: &OracleKeypair,
        registry: &dyn CommitmentRegistry,
        bid_id: u64,
        proof: &BalanceProof,
    ) -> Result<OracleCredential, AttestationError> {
        let com = registry
            .commitment_of(bid_id)
            .ok_or(AttestationError::UnknownBidId(bid_id))?;
        if !backend.check(&com, proof.claimed_balance, proof) {
            self.transcript.rejection = Some(format!("proof-rejected:{bid_id}"));
            return Err(AttestationError::ProofRejected { bid_id });
        }
        let message = credential_message(registry.auction_id(), bid_id, &com);
        let credential = OracleCredential {
            bid_id,
            signature: oracle.sign(&message),
        };
        self.transcript.credential = Some(credential.clone());
        Ok(credential)
    }

    /// XOR stream cipher over a SHA-256 keystream; models the TLS channel
    /// between prover and source.
    fn seal(&self, label: &[u8], data: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(data.len());
        let mut counter: u32 = 0;
        while out.len() < data.len() {
            let mut hasher = Sha256::new();
            hasher.update(self.enc_key);
            hasher.update(label);
            hasher.update(counter.to_be_bytes());
            let pad = hasher.finalize();
            for &byte in pad.iter() {
                let pos = out.len();
                if pos >= data.len() {
                    break;
                }
                out.push(data[pos] ^ byte);
            }
            counter += 1;
        }
        out
    }
}

/// Convenience wrapper running a full honest attestation for one bid.
#[allow(clippy::too_many_arguments)]
pub fn attest_bid(
    rng: &mut (impl RngCore + ?Sized),
    source: &BalanceSource,
    backend: &dyn ProofBackend,
    oracle: &OracleKeypair,
    registry: &dyn CommitmentRegistry,
    bid_id: u64,
    com: &Commitment,
    theta: Address,
    dec: &Decommitment,
) -> Result<(OracleCredential, AttestationTranscript), AttestationError> {
    let mut session = AttestationSession::handshake(rng);
    let (balance, _tag) = session.query_balance(source, theta);
    let proof = session.prove_bid(backend, com, theta, balance, dec)?;
    let credential = session.verify_and_attest(backend, oracle, registry, bid_id, &proof)?;
    Ok((credential, session.transcript().clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::commit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct TestRegistry {
        auction_id: u64,
        entries: BTreeMap<u64, Commitment>,
    }

    impl CommitmentRegistry for TestRegistry {
        fn auction_id(&self) -> u64 {
            self.auction_id
        }
        fn commitment_of(&self, bid_id: u64) -> Option<Commitment> {
            self.entries.get(&bid_id).copied()
        }
    }

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(99)
    }

    fn funded_source(theta: Address, balance: Wei) -> BalanceSource {
        let mut balances = BTreeMap::new();
        balances.insert(theta, balance);
        BalanceSource::from_balances(balances)
    }

    #[test]
    fn shares_recombine_to_source_key() {
        let mut r = rng();
        let session = AttestationSession::handshake(&mut r);
        let shares = session.key_shares();
        assert_eq!(
            reconstruct_mac_key(&shares.prover, &shares.verifier),
            session.source_mac_key()
        );

        let other = AttestationSession::handshake(&mut r);
        assert_ne!(session.key_shares(), other.key_shares());
        assert_ne!(session.source_mac_key(), other.source_mac_key());
    }

    #[test]
    fn share_addition_is_a_one_time_pad() {
        // For a fixed prover share, every possible mac key is reachable by
        // some verifier share, so the share alone carries no key information.
        let prover = [0x42u8; 16];
        for target in [0u128, 1, u128::MAX, 0xdead_beef] {
            let verifier = target
                .wrapping_sub(u128::from_be_bytes(prover))
                .to_be_bytes();
            assert_eq!(reconstruct_mac_key(&prover, &verifier), target.to_be_bytes());
        }
    }

    #[test]
    fn query_returns_snapshot_balance_with_valid_tag() {
        let mut r = rng();
        let theta = Address([0x11; 20]);
        let source = funded_source(theta, 300_000_000_000_000_000);
        let mut session = AttestationSession::handshake(&mut r);
        let (balance, tag) = session.query_balance(&source, theta);
        assert_eq!(balance, 300_000_000_000_000_000);
        assert_eq!(tag, mac_tag(&session.source_mac_key(), &theta, balance));

        let (unfunded, tag2) = session.query_balance(&source, Address([0x22; 20]));
        assert_eq!(unfunded, 0);
        assert_eq!(
            tag2,
            mac_tag(&session.source_mac_key(), &Address([0x22; 20]), 0)
        );
    }

    #[test]
    fn honest_flow_yields_verifiable_credential() {
        let mut r = rng();
        let theta = Address([0x33; 20]);
        let balance: Wei = 7 * crate::ledger::WEI_PER_ETH;
        let msg = BidMessage {
            onetime_address: theta,
            price: balance,
        };
        let (com, dec) = commit(&msg, &mut r);
        let registry = TestRegistry {
            auction_id: 5,
            entries: BTreeMap::from([(1, com)]),
        };
        let oracle = OracleKeypair::generate(&mut r);
        let source = funded_source(theta, balance);

        let (credential, transcript) = attest_bid(
            &mut r,
            &source,
            &ReferenceBackend,
            &oracle,
            &registry,
            1,
            &com,
            theta,
            &dec,
        )
        .unwrap();

        let message = credential_message(5, 1, &com);
        assert!(oracle.verifying_key().verify(&message, &credential.signature));
        assert!(transcript.credential.is_some());

        // Replaying the credential against another bid id fails verification.
        let other_message = credential_message(5, 2, &com);
        assert!(!oracle
            .verifying_key()
            .verify(&other_message, &credential.signature));
    }

    #[test]
    fn perturbations_reject_at_the_corresponding_check() {
        let mut r = rng();
        let theta = Address([0x44; 20]);
        let balance: Wei = 1_000_000_000;
        let msg = BidMessage {
            onetime_address: theta,
            price: balance,
        };
        let (com, dec) = commit(&msg, &mut r);
        let registry = TestRegistry {
            auction_id: 9,
            entries: BTreeMap::from([(1, com)]),
        };
        let oracle = OracleKeypair::generate(&mut r);
        let source = funded_source(theta, balance);
        let backend = ReferenceBackend;

        // Balance claim off by one: MAC binds (theta, balance).
        let mut session = AttestationSession::handshake(&mut r);
        session.query_balance(&source, theta);
        assert_eq!(
            session.prove_bid(&backend, &com, theta, balance + 1, &dec),
            Err(AttestationError::MacCheckFailed)
        );

        // Wrong address claim: same check trips.
        let mut session = AttestationSession::handshake(&mut r);
        session.query_balance(&source, theta);
        assert_eq!(
            session.prove_bid(&backend, &com, Address([0x45; 20]), balance, &dec),
            Err(AttestationError::MacCheckFailed)
        );

        // Decommitment from a different commitment: proof check rejects.
        let mut session = AttestationSession::handshake(&mut r);
        session.query_balance(&source, theta);
        let (_, wrong_dec) = commit(&msg, &mut r);
        let proof = session
            .prove_bid(&backend, &com, theta, balance, &wrong_dec)
            .unwrap();
        assert_eq!(
            session.verify_and_attest(&backend, &oracle, &registry, 1, &proof),
            Err(AttestationError::ProofRejected { bid_id: 1 })
        );

        // Unknown bid id.
        let mut session = AttestationSession::handshake(&mut r);
        session.query_balance(&source, theta);
        let proof = session.prove_bid(&backend, &com, theta, balance, &dec).unwrap();
        assert_eq!(
            session.verify_and_attest(&backend, &oracle, &registry, 77, &proof),
            Err(AttestationError::UnknownBidId(77))
        );
    }

    #[test]
    fn transcript_never_contains_the_onetime_address() {
        let mut r = rng();
        let theta = Address([0x5a; 20]);
        let balance: Wei = 42_000_000_000;
        let msg = BidMessage {
            onetime_address: theta,
            price: balance,
        };
        let (com, dec) = commit(&msg, &mut r);
        let registry = TestRegistry {
            auction_id: 2,
            entries: BTreeMap::from([(1, com)]),
        };
        let oracle = OracleKeypair::generate(&mut r);
        let source = funded_source(theta, balance);

        let (_, transcript) = attest_bid(
            &mut r,
            &source,
            &ReferenceBackend,
            &oracle,
            &registry,
            1,
            &com,
            theta,
            &dec,
        )
        .unwrap();

        let json = transcript.to_canonical_json();
        let hex_lower = hex::encode(theta.as_bytes());
        assert!(!json.contains(&hex_lower));
        assert!(!json.to_lowercase().contains(&hex_lower));
        let raw = theta.as_bytes();
        assert!(!json
            .as_bytes()
            .windows(raw.len())
            .any(|window| window == raw));
    }

    #[test]
    fn canonical_json_keys_are_sorted() {
        let transcript = AttestationTranscript::default();
        let json = transcript.to_canonical_json();
        let keys: Vec<&str> = json
            .trim_matches(|c| c == '{' || c == '}')
            .split(',')
            .map(|kv| kv.split(':').next().unwrap().trim_matches('"'))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn reference_backend_is_complete_and_sound() {
        let mut r = rng();
        let theta = Address([0x66; 20]);
        let msg = BidMessage {
            onetime_address: theta,
            price: 55,
        };
        let (com, dec) = commit(&msg, &mut r);
        let backend = ReferenceBackend;
        let proof = backend.prove(&com, theta, 55, &dec);
        assert!(backend.check(&com, 55, &proof));
        assert!(!backend.check(&com, 56, &proof));

        let mut tampered = proof.clone();
        tampered.claimed_balance = 56;
        assert!(!backend.check(&com, 56, &tampered));

        let (other_com, _) = commit(&msg, &mut r);
        assert!(!backend.check(&other_com, 55, &proof));
    }
}
