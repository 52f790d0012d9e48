//! Core library for a consistency-verifying client/server protocol.
//!
//! Clients execute a deterministic shared functionality (a counter or a
//! key-value store) through a single untrusted server. Completed operations
//! are committed into a signed hash chain; every client replays the chain
//! and halts on the first inconsistency. With a correct server the protocol
//! provides linearizability and wait-freedom for commuting operations; a
//! Byzantine server can at worst fork clients into consistent partitions,
//! which the bundled checkers certify as fork-linearizable.
//!
//! The crate is organised around the protocol roles plus the tooling
//! needed to exercise them:
//!
//! * [`functionality`]: workload semantics and the commutativity oracle
//! * [`crypto`]: ideal and SHA-256 backed hashing/signing
//! * [`wire`]: canonical byte encodings of payloads and messages
//! * [`client`] / [`server`]: the protocol state machines
//! * [`adversary`]: Byzantine server behaviours
//! * [`simnet`]: deterministic discrete-event simulator and traces
//! * [`checker`]: linearizability and fork-linearizability verdicts
//! * [`authstore`]: Merkle-authenticated key-value store outsourcing
//! * [`scenarios`]: canned scenario builders used by tests and the CLI
//! * [`report`]: per-run summaries

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod adversary;
pub mod authstore;
pub mod checker;
pub mod client;
pub mod crypto;
pub mod functionality;
pub mod report;
pub mod scenarios;
pub mod server;
pub mod simnet;
pub mod wire;

pub use client::{Client, HaltReason};
pub use crypto::{CryptoBackend, CryptoKind, Digest, Signature};
pub use functionality::{Operation, Response, StateValue, Status, Workload};
pub use server::Server;
pub use simnet::{Scenario, Trace};

/// One-based client identifier. Client 1 is the lowest valid id.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ClientId(pub u64);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.0)
    }
}

/// Serde helper: byte strings as lowercase hex, so traces stay greppable.
pub(crate) mod hexbytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(de)?;
        hex::decode(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde helper: byte-keyed maps as JSON objects with hex keys and
/// values. JSON object keys must be strings, so the store contents
/// cannot serialize as a map of raw byte strings.
pub(crate) mod hexmap {
    use std::collections::BTreeMap;

    use serde::ser::SerializeMap;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<Vec<u8>, Vec<u8>>,
        ser: S,
    ) -> Result<S::Ok, S::Error> {
        let mut out = ser.serialize_map(Some(map.len()))?;
        for (k, v) in map {
            out.serialize_entry(&hex::encode(k), &hex::encode(v))?;
        }
        out.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> Result<BTreeMap<Vec<u8>, Vec<u8>>, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(de)?;
        raw.into_iter()
            .map(|(k, v)| {
                Ok((
                    hex::decode(&k).map_err(serde::de::Error::custom)?,
                    hex::decode(&v).map_err(serde::de::Error::custom)?,
                ))
            })
            .collect()
    }
}
