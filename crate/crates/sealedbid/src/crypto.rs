//! Hash-based commitments over the 768-bit bid layout, plus the oracle's
//! signature facility.
//!
//! A commitment input is exactly 96 bytes: the one-time address left-padded
//! to 32 bytes, the price as a 32-byte big-endian word, and 32 random bytes.
//! The digest is SHA-256 over that concatenation. Opening recomputes and
//! compares.

use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ledger::{Address, Wei};

/// Message under commitment: the one-time address and the bidding price.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BidMessage {
    pub onetime_address: Address,
    pub price: Wei,
}

impl BidMessage {
    pub const SERIALIZED_LEN: usize = 64;

    /// 32-byte zero-padded address word followed by the 32-byte big-endian
    /// price word. Injective on (address, price) by construction.
    pub fn to_bytes(&self) -> [u8; Self::SERIALIZED_LEN] {
        let mut out = [0u8; Self::SERIALIZED_LEN];
        out[12..32].copy_from_slice(self.onetime_address.as_bytes());
        out[48..64].copy_from_slice(&self.price.to_be_bytes());
        out
    }
}

macro_rules! hex32_newtype {
    ($name:ident, $doc:literal) => {
        #[doc = $doc]
        #[derive(Clone, Copy, PartialEq, Eq, Hash)]
        pub struct $name(pub [u8; 32]);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "0x{}", hex::encode(self.0))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{self}")
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let raw = s.strip_prefix("0x").unwrap_or(s);
                if raw.len() != 64 {
                    return Err(format!("expected 64 hex chars, got {}", raw.len()));
                }
                let bytes = hex::decode(raw).map_err(|e| e.to_string())?;
                let mut out = [0u8; 32];
                out.copy_from_slice(&bytes);
                Ok($name(out))
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_string())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

hex32_newtype!(Commitment, "256-bit commitment digest, `0x` + 64 hex chars.");
hex32_newtype!(
    Decommitment,
    "The 32 random bytes that open a commitment, `0x` + 64 hex chars."
);

/// Commits to a bid message with randomness drawn from `rng`.
pub fn commit<R: RngCore + ?Sized>(msg: &BidMessage, rng: &mut R) -> (Commitment, Decommitment) {
    let mut r = [0u8; 32];
    rng.fill_bytes(&mut r);
    let dec = Decommitment(r);
    (commit_with(msg, &dec), dec)
}

/// Deterministic core of [`commit`]: `SHA256(serialize(msg) || r)`.
pub fn commit_with(msg: &BidMessage, dec: &Decommitment) -> Commitment {
    let mut hasher = Sha256::new();
    hasher.update(msg.to_bytes());
    hasher.update(dec.0);
    Commitment(hasher.finalize().into())
}

/// Accepts iff `com` equals the recomputed digest of `(msg, dec)`.
pub fn com_open(com: &Commitment, dec: &Decommitment, msg: &BidMessage) -> bool {
    commit_with(msg, dec) == *com
}

/// The oracle's Ed25519 signing keypair.
#[derive(Clone, Debug)]
pub struct OracleKeypair {
    signing: SigningKey,
}

impl OracleKeypair {
    /// Derives a keypair from 32 bytes of caller-supplied randomness.
    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        OracleKeypair {
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn verifying_key(&self) -> OracleVerifyingKey {
        OracleVerifyingKey(self.signing.verifying_key())
    }

    pub fn sign(&self, message: &[u8]) -> OracleSignature {
        OracleSignature(self.signing.sign(message))
    }
}

/// Public half of the oracle keypair, embedded in auction configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleVerifyingKey(VerifyingKey);

impl OracleVerifyingKey {
    pub fn verify(&self, message: &[u8], signature: &OracleSignature) -> bool {
        self.0.verify(message, &signature.0).is_ok()
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }
}

impl fmt::Display for OracleVerifyingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0.to_bytes()))
    }
}

impl Serialize for OracleVerifyingKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for OracleVerifyingKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let raw = s.strip_prefix("0x").unwrap_or(&s);
        let bytes = hex::decode(raw).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("expected 32 bytes"))?;
        let vk = VerifyingKey::from_bytes(&arr).map_err(serde::de::Error::custom)?;
        Ok(OracleVerifyingKey(vk))
    }
}

/// Detached Ed25519 signature.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct OracleSignature(ed25519_dalek::Signature);

impl OracleSignature {
    pub fn to_bytes(&self) -> [u8; 64] {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8; 64]) -> Self {
        OracleSignature(ed25519_dalek::Signature::from_bytes(bytes))
    }
}

impl fmt::Display for OracleSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0.to_bytes()))
    }
}

impl fmt::Debug for OracleSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl Serialize for OracleSignature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for OracleSignature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let raw = s.strip_prefix("0x").unwrap_or(&s);
        let bytes = hex::decode(raw).map_err(serde::de::Error::custom)?;
        let arr: [u8; 64] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("expected 64 bytes"))?;
        Ok(OracleSignature::from_bytes(&arr))
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn serialization_injective(
            a in proptest::array::uniform20(any::<u8>()),
            b in proptest::array::uniform20(any::<u8>()),
            pa in any::<u128>(),
            pb in any::<u128>(),
        ) {
            let ma = BidMessage { onetime_address: Address(a), price: pa };
            let mb = BidMessage { onetime_address: Address(b), price: pb };
            prop_assert_eq!(ma.to_bytes() == mb.to_bytes(), ma == mb);
        }

        #[test]
        fn open_accepts_exactly_the_committed_message(
            addr in proptest::array::uniform20(any::<u8>()),
            price in any::<u128>(),
            r in proptest::array::uniform32(any::<u8>()),
            other_price in any::<u128>(),
        ) {
            let msg = BidMessage { onetime_address: Address(addr), price };
            let dec = Decommitment(r);
            let com = commit_with(&msg, &dec);
            prop_assert!(com_open(&com, &dec, &msg));
            if other_price != price {
                let other = BidMessage { onetime_address: Address(addr), price: other_price };
                prop_assert!(!com_open(&com, &dec, &other));
            }
        }
    }
}
