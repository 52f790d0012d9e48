//! Hashing and signing behind one interface, in two interchangeable
//! backends.
//!
//! The `ideal` backend models collision-free hashing and unforgeable
//! signatures with a shared oracle: a digest is the index of the input in
//! the list of all distinct inputs hashed so far, and verification accepts
//! exactly the (signer, message) pairs that were actually signed. It makes
//! consistency arguments exact in tests: two equal digests imply equal
//! inputs, full stop.
//!
//! The `sha256` backend swaps the oracle for SHA-256 digests and
//! deterministic HMAC-SHA-256 tags under per-client keys derived from the
//! scenario seed. The key registry stands in for real client credentials;
//! everything here runs inside one simulated process, so key distribution
//! is out of scope.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use hmac::{Hmac, KeyInit, Mac};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::hexbytes;
use crate::ClientId;

/// Opaque digest bytes. Ideal digests are 8-byte indices; SHA-256 digests
/// are 32 bytes. The hash-chain sentinel is the 4 ASCII bytes `null`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Digest(#[serde(with = "hexbytes")] pub Vec<u8>);

impl Digest {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

/// Signature bytes tagged with the claimed signer. Verification always
/// binds to the signer the caller expects, not to this field.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    #[serde(with = "hexbytes")]
    pub bytes: Vec<u8>,
    pub signer: ClientId,
}

pub trait CryptoBackend: Send + Sync {
    fn hash(&self, input: &[u8]) -> Digest;
    fn sign(&self, signer: ClientId, message: &[u8]) -> Signature;
    fn verify(&self, signer: ClientId, sig: &Signature, message: &[u8]) -> bool;
}

/// Backend selector carried in scenario configuration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CryptoKind {
    #[default]
    Ideal,
    Sha256,
}

impl CryptoKind {
    /// Builds a backend shared by every actor of one simulation.
    pub fn build(&self, clients: u64, seed: u64) -> Arc<dyn CryptoBackend> {
        match self {
            CryptoKind::Ideal => Arc::new(IdealCrypto::new()),
            CryptoKind::Sha256 => Arc::new(Sha256Crypto::new(clients, seed)),
        }
    }
}

impl fmt::Display for CryptoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CryptoKind::Ideal => write!(f, "ideal"),
            CryptoKind::Sha256 => write!(f, "sha256"),
        }
    }
}

// --- ideal backend ---------------------------------------------------------

#[derive(Default)]
struct IdealState {
    hash_inputs: Vec<Vec<u8>>,
    hash_index: HashMap<Vec<u8>, u64>,
    signed: Vec<(ClientId, Vec<u8>)>,
    signed_index: HashMap<(ClientId, Vec<u8>), u64>,
}

/// Oracle-backed hashing and signing. One instance is shared by all actors
/// of a simulation; the mutex serialises oracle queries.
#[derive(Default)]
pub struct IdealCrypto {
    state: Mutex<IdealState>,
}

impl IdealCrypto {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of distinct inputs hashed so far. Equals the number of
    /// distinct digests handed out, which is the whole point of the oracle.
    pub fn distinct_hash_inputs(&self) -> usize {
        self.state.lock().unwrap().hash_inputs.len()
    }

    /// Total signatures issued (distinct signer/message pairs).
    pub fn distinct_signatures(&self) -> usize {
        self.state.lock().unwrap().signed.len()
    }
}

impl CryptoBackend for IdealCrypto {
    fn hash(&self, input: &[u8]) -> Digest {
        let mut st = self.state.lock().unwrap();
        let idx = match st.hash_index.get(input) {
            Some(i) => *i,
            None => {
                let i = st.hash_inputs.len() as u64;
                st.hash_inputs.push(input.to_vec());
                st.hash_index.insert(input.to_vec(), i);
                i
            }
        };
        Digest(idx.to_be_bytes().to_vec())
    }

    fn sign(&self, signer: ClientId, message: &[u8]) -> Signature {
        let mut st = self.state.lock().unwrap();
        let key = (signer, message.to_vec());
        let idx = match st.signed_index.get(&key) {
            Some(i) => *i,
            None => {
                let i = st.signed.len() as u64;
                st.signed.push(key.clone());
                st.signed_index.insert(key, i);
                i
            }
        };
        Signature {
            bytes: idx.to_be_bytes().to_vec(),
            signer,
        }
    }

    fn verify(&self, signer: ClientId, sig: &Signature, message: &[u8]) -> bool {
        let bytes: [u8; 8] = match sig.bytes.as_slice().try_into() {
            Ok(b) => b,
            Err(_) => return false,
        };
        let idx = u64::from_be_bytes(bytes) as usize;
        let st = self.state.lock().unwrap();
        match st.signed.get(idx) {
            Some((s, m)) => *s == signer && m == message,
            None => false,
        }
    }
}

// --- sha256 backend --------------------------------------------------------

type HmacSha256 = Hmac<Sha256>;

/// SHA-256 digests and HMAC-SHA-256 signatures under per-client keys
/// derived from the scenario seed.
pub struct Sha256Crypto {
    keys: Vec<[u8; 32]>,
}

impl Sha256Crypto {
    pub fn new(clients: u64, seed: u64) -> Self {
        let keys = (1..=clients)
            .map(|i| {
                let mut h = Sha256::new();
                h.update(b"client-signing-key");
                h.update(seed.to_be_bytes());
                h.update(i.to_be_bytes());
                h.finalize().into()
            })
            .collect();
        Self { keys }
    }

    fn key(&self, client: ClientId) -> &[u8; 32] {
        self.keys
            .get((client.0 - 1) as usize)
            .unwrap_or_else(|| panic!("no signing key for {client}"))
    }

    fn tag(&self, signer: ClientId, message: &[u8]) -> Vec<u8> {
        let mut mac = HmacSha256::new_from_slice(self.key(signer)).expect("hmac accepts any key length");
        mac.update(message);
        mac.finalize().into_bytes().to_vec()
    }
}

impl CryptoBackend for Sha256Crypto {
    fn hash(&self, input: &[u8]) -> Digest {
        Digest(Sha256::digest(input).to_vec())
    }

    fn sign(&self, signer: ClientId, message: &[u8]) -> Signature {
        Signature {
            bytes: self.tag(signer, message),
            signer,
        }
    }

    fn verify(&self, signer: ClientId, sig: &Signature, message: &[u8]) -> bool {
        if (signer.0 as usize) > self.keys.len() || signer.0 == 0 {
            return false;
        }
        self.tag(signer, message) == sig.bytes
    }
}

/// Plain SHA-256 of `input`, independent of backend choice. Used where a
/// fixed deterministic hash is needed for shape decisions rather than for
/// integrity (authenticated-store priorities).
pub fn fixed_sha256(input: &[u8]) -> [u8; 32] {
    Sha256::digest(input).into()
}
