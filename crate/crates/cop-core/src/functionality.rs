//! Workload semantics: the deterministic functionality clients execute
//! through the server, plus the commutativity checks the protocol relies on.
//!
//! Two workloads are provided. The counter holds a non-negative integer;
//! `add(x)` always succeeds and `dec(x)` subtracts only when `x` is at most
//! the current value, returning `false` (and leaving the state alone)
//! otherwise. The key-value store maps byte strings to byte strings with
//! `put` and `get`; reading an absent key yields a distinguished response
//! rather than an error.
//!
//! Two operation sequences commute in a state when every order-preserving
//! interleaving of them produces the same response for each operation and
//! the same final state. [`commute`] decides this by brute force;
//! [`commute_fast`] is a cheap sound approximation that may say `false`
//! even when the sequences do commute, but never the reverse.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::hexbytes;

pub type Key = Vec<u8>;
pub type Value = Vec<u8>;

/// Combined length limit for [`commute`]. The interleaving count grows as a
/// binomial coefficient, so the oracle refuses longer inputs loudly instead
/// of grinding away.
pub const COMMUTE_MAX_COMBINED_LEN: usize = 12;

/// One invocable operation of either workload.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Add(u64),
    Dec(u64),
    Get(#[serde(with = "hexbytes")] Key),
    Put(
        #[serde(with = "hexbytes")] Key,
        #[serde(with = "hexbytes")] Value,
    ),
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operation::Add(x) => write!(f, "add({x})"),
            Operation::Dec(x) => write!(f, "dec({x})"),
            Operation::Get(k) => write!(f, "get({})", printable(k)),
            Operation::Put(k, v) => write!(f, "put({},{})", printable(k), printable(v)),
        }
    }
}

fn printable(bytes: &[u8]) -> String {
    if !bytes.is_empty() && bytes.iter().all(|b| b.is_ascii_graphic()) {
        String::from_utf8_lossy(bytes).into_owned()
    } else {
        format!("0x{}", hex::encode(bytes))
    }
}

/// Response to one operation. `None` marks "no operation ran" (the result
/// of folding an empty sequence); `Abort` is the distinguished failure
/// response a client reports when it refuses to execute an operation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Bool(bool),
    Value(#[serde(with = "hexbytes")] Value),
    Absent,
    None,
    Abort,
}

/// Commit status of an operation: executed or refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Success,
    Abort,
}

impl Status {
    pub fn flip(self) -> Status {
        match self {
            Status::Success => Status::Abort,
            Status::Abort => Status::Success,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Success => write!(f, "success"),
            Status::Abort => write!(f, "abort"),
        }
    }
}

/// Full state of either workload.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateValue {
    Counter(u64),
    Map(#[serde(with = "crate::hexmap")] BTreeMap<Key, Value>),
}

/// Which workload a scenario runs; picks the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Workload {
    Counter,
    Kv,
}

impl Workload {
    pub fn initial_state(&self) -> StateValue {
        match self {
            Workload::Counter => StateValue::Counter(0),
            Workload::Kv => StateValue::Map(BTreeMap::new()),
        }
    }
}

impl StateValue {
    /// Applies one operation, returning the successor state and the
    /// response. Total within a workload; applying a counter operation to a
    /// map state (or vice versa) is a caller bug and panics.
    pub fn apply(&self, op: &Operation) -> (StateValue, Response) {
        match (self, op) {
            (StateValue::Counter(s), Operation::Add(x)) => {
                (StateValue::Counter(s + x), Response::Bool(true))
            }
            (StateValue::Counter(s), Operation::Dec(x)) => {
                if *x <= *s {
                    (StateValue::Counter(s - x), Response::Bool(true))
                } else {
                    (StateValue::Counter(*s), Response::Bool(false))
                }
            }
            (StateValue::Map(m), Operation::Get(k)) => {
                let r = match m.get(k) {
                    Some(v) => Response::Value(v.clone()),
                    None => Response::Absent,
                };
                (StateValue::Map(m.clone()), r)
            }
            (StateValue::Map(m), Operation::Put(k, v)) => {
                let mut m = m.clone();
                m.insert(k.clone(), v.clone());
                (StateValue::Map(m), Response::Bool(true))
            }
            (s, o) => panic!("operation {o} does not apply to state {s:?}"),
        }
    }
}

/// Folds a sequence of operations over a state. Returns the final state and
/// the response of the last operation, or [`Response::None`] for an empty
/// sequence.
pub fn apply_seq(initial: &StateValue, ops: &[Operation]) -> (StateValue, Response) {
    let mut state = initial.clone();
    let mut last = Response::None;
    for op in ops {
        let (next, r) = state.apply(op);
        state = next;
        last = r;
    }
    (state, last)
}

/// Decides whether `rho1` and `rho2` commute in `initial` by enumerating
/// every order-preserving interleaving and comparing each operation's
/// response and the final state against the `rho1 . rho2` baseline.
///
/// Panics when the combined length exceeds [`COMMUTE_MAX_COMBINED_LEN`].
pub fn commute(initial: &StateValue, rho1: &[Operation], rho2: &[Operation]) -> bool {
    let combined = rho1.len() + rho2.len();
    assert!(
        combined <= COMMUTE_MAX_COMBINED_LEN,
        "commute oracle limited to {COMMUTE_MAX_COMBINED_LEN} operations, got {combined}"
    );
    let baseline = run_interleaving(initial, rho1, rho2, &sequential_merge(rho1.len(), rho2.len()));
    let mut merge = Vec::with_capacity(combined);
    all_merges(rho1.len(), rho2.len(), &mut merge, &mut |m| {
        run_interleaving(initial, rho1, rho2, m) == baseline
    })
}

/// Outcome of one interleaving: the response of every operation of each
/// sequence (by position) plus the final state.
fn run_interleaving(
    initial: &StateValue,
    rho1: &[Operation],
    rho2: &[Operation],
    merge: &[bool],
) -> (Vec<Response>, Vec<Response>, StateValue) {
    let mut state = initial.clone();
    let (mut r1, mut r2) = (Vec::new(), Vec::new());
    let (mut i1, mut i2) = (0, 0);
    for &from_first in merge {
        let op = if from_first {
            let op = &rho1[i1];
            i1 += 1;
            op
        } else {
            let op = &rho2[i2];
            i2 += 1;
            op
        };
        let (next, r) = state.apply(op);
        state = next;
        if from_first {
            r1.push(r);
        } else {
            r2.push(r);
        }
    }
    (r1, r2, state)
}

fn sequential_merge(n1: usize, n2: usize) -> Vec<bool> {
    let mut m = vec![true; n1];
    m.extend(std::iter::repeat_n(false, n2));
    m
}

/// Enumerates merge patterns (true = take from the first sequence) and
/// feeds each to `accept`; stops early and returns false once one is
/// rejected.
fn all_merges(
    left1: usize,
    left2: usize,
    merge: &mut Vec<bool>,
    accept: &mut impl FnMut(&[bool]) -> bool,
) -> bool {
    if left1 == 0 && left2 == 0 {
        return accept(merge);
    }
    if left1 > 0 {
        merge.push(true);
        let ok = all_merges(left1 - 1, left2, merge, accept);
        merge.pop();
        if !ok {
            return false;
        }
    }
    if left2 > 0 {
        merge.push(false);
        let ok = all_merges(left1, left2 - 1, merge, accept);
        merge.pop();
        if !ok {
            return false;
        }
    }
    true
}

/// Sound fast approximation of [`commute`]: `true` implies the sequences
/// commute, `false` decides nothing.
///
/// Counter: commutes whenever the current value covers the sum of all
/// decrements, since then every decrement succeeds in every interleaving.
/// Key-value: commutes when neither sequence writes a key the other touches.
pub fn commute_fast(initial: &StateValue, rho1: &[Operation], rho2: &[Operation]) -> bool {
    if rho1.is_empty() || rho2.is_empty() {
        return true;
    }
    match initial {
        StateValue::Counter(s) => {
            let dec_sum: u64 = rho1
                .iter()
                .chain(rho2)
                .map(|op| match op {
                    Operation::Dec(x) => *x,
                    Operation::Add(_) => 0,
                    other => panic!("counter commute on {other}"),
                })
                .sum();
            dec_sum <= *s
        }
        StateValue::Map(_) => commute_by_key_sets(&seq_key_sets(rho1), &seq_key_sets(rho2)),
    }
}

/// Read and write key footprint of a key-value operation sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySets {
    pub reads: BTreeSet<Key>,
    pub writes: BTreeSet<Key>,
}

impl KeySets {
    pub fn union(&mut self, other: &KeySets) {
        self.reads.extend(other.reads.iter().cloned());
        self.writes.extend(other.writes.iter().cloned());
    }
}

/// Footprint of a single key-value operation. Panics on counter operations.
pub fn op_key_sets(op: &Operation) -> KeySets {
    let mut ks = KeySets::default();
    match op {
        Operation::Get(k) => {
            ks.reads.insert(k.clone());
        }
        Operation::Put(k, _) => {
            ks.writes.insert(k.clone());
        }
        other => panic!("key sets of non key-value operation {other}"),
    }
    ks
}

pub fn seq_key_sets(ops: &[Operation]) -> KeySets {
    let mut ks = KeySets::default();
    for op in ops {
        ks.union(&op_key_sets(op));
    }
    ks
}

/// Key-set commutativity: neither side writes anything the other reads or
/// writes. State-independent and sound for the key-value workload.
pub fn commute_by_key_sets(a: &KeySets, b: &KeySets) -> bool {
    let clash = |writes: &BTreeSet<Key>, other: &KeySets| {
        writes
            .iter()
            .any(|k| other.reads.contains(k) || other.writes.contains(k))
    };
    !clash(&a.writes, b) && !clash(&b.writes, a)
}
