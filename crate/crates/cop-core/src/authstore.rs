//! Authenticated key-value store: a Merkle search tree plus the proof
//! objects that let a client verify reads, writes and whole-state advances
//! while holding nothing but a constant-size digest per version.
//!
//! The tree is a treap: a binary search tree over keys that is at the same
//! time a max-heap over per-key priorities. Priorities come from a fixed
//! hash of the key, so distinct keys get distinct priorities and every key
//! set has exactly one admissible shape, independent of insertion order.
//! The root digest is therefore a canonical commitment to the contents.
//! Priorities deliberately use [`fixed_sha256`] rather than the store's
//! hash backend: the replaceable backend may be stateful (the ideal
//! instantiation numbers inputs by first use), and tree shape must be a
//! pure function of content.
//!
//! A proof is a single root-to-slot search path. It certifies presence
//! (path ends at the key), absence (path ends at the empty slot the key
//! would occupy), or a write (the verifier re-derives both the old and the
//! new root from the same path, splicing an inserted key in at the
//! position its priority dictates).

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::crypto::{fixed_sha256, CryptoBackend, Digest};
use crate::functionality::{KeySets, Operation, Response};
use crate::wire::{
    put_field, put_u32, put_u64, read_operation, read_response, write_operation, write_response,
    Reader, WireError,
};

pub type Key = Vec<u8>;
pub type Value = Vec<u8>;

const NODE_TAG: u8 = 0x4e;
const EMPTY_TAG: u8 = 0x45;

/// Shape-determining priority of a key. Fixed across hash backends.
pub fn key_rank(key: &[u8]) -> [u8; 32] {
    let mut input = Vec::with_capacity(14 + key.len());
    input.extend_from_slice(b"store-priority");
    input.extend_from_slice(key);
    fixed_sha256(&input)
}

fn node_digest(
    backend: &dyn CryptoBackend,
    key: &[u8],
    value: &[u8],
    left: &Digest,
    right: &Digest,
) -> Digest {
    let mut buf = vec![NODE_TAG];
    put_field(&mut buf, key);
    put_field(&mut buf, value);
    put_field(&mut buf, left.as_bytes());
    put_field(&mut buf, right.as_bytes());
    backend.hash(&buf)
}

/// Digest of a store that holds no keys at all.
pub fn empty_store_digest(backend: &dyn CryptoBackend) -> Digest {
    backend.hash(&[EMPTY_TAG])
}

#[derive(Clone)]
struct Node {
    key: Key,
    value: Value,
    rank: [u8; 32],
    digest: Digest,
    left: Option<Box<Node>>,
    right: Option<Box<Node>>,
}

impl Node {
    fn leaf(backend: &dyn CryptoBackend, key: Key, value: Value) -> Box<Node> {
        let empty = empty_store_digest(backend);
        let rank = key_rank(&key);
        let digest = node_digest(backend, &key, &value, &empty, &empty);
        Box::new(Node {
            key,
            value,
            rank,
            digest,
            left: None,
            right: None,
        })
    }
}

fn child_digest(backend: &dyn CryptoBackend, child: &Option<Box<Node>>) -> Digest {
    child
        .as_ref()
        .map(|n| n.digest.clone())
        .unwrap_or_else(|| empty_store_digest(backend))
}

fn refresh(backend: &dyn CryptoBackend, n: &mut Node) {
    let left = child_digest(backend, &n.left);
    let right = child_digest(backend, &n.right);
    n.digest = node_digest(backend, &n.key, &n.value, &left, &right);
}

fn outranks(a: &Node, b: &Node) -> bool {
    (a.rank, &a.key) > (b.rank, &b.key)
}

/// Which child a search step descended into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// One interior node on a proof path: enough to re-derive its digest once
/// the digest of the child the search descended into is known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub key: Key,
    pub value: Value,
    /// Digest of the child the search did not take.
    pub other: Digest,
    pub descend: Side,
}

/// Where the search path ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    /// The key is present; its node's value and child digests.
    Found {
        value: Value,
        left: Digest,
        right: Digest,
    },
    /// The key is absent; the path ends at the empty slot it would occupy.
    Empty,
}

/// Search-path proof for one operation against one store version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proof {
    pub path: Vec<PathStep>,
    pub terminal: Terminal,
}

/// The authenticated store itself, held by the server.
#[derive(Clone)]
pub struct AuthKvStore {
    backend: Arc<dyn CryptoBackend>,
    root: Option<Box<Node>>,
}

impl AuthKvStore {
    pub fn new(backend: Arc<dyn CryptoBackend>) -> Self {
        Self {
            backend,
            root: None,
        }
    }

    pub fn digest(&self) -> Digest {
        child_digest(&*self.backend, &self.root)
    }

    pub fn get(&self, key: &[u8]) -> Option<&Value> {
        let mut cur = self.root.as_deref();
        while let Some(n) = cur {
            match key.cmp(&n.key) {
                std::cmp::Ordering::Equal => return Some(&n.value),
                std::cmp::Ordering::Less => cur = n.left.as_deref(),
                std::cmp::Ordering::Greater => cur = n.right.as_deref(),
            }
        }
        None
    }

    pub fn len(&self) -> usize {
        fn count(n: &Option<Box<Node>>) -> usize {
            n.as_ref().map_or(0, |n| 1 + count(&n.left) + count(&n.right))
        }
        count(&self.root)
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    /// All entries in key order.
    pub fn entries(&self) -> Vec<(Key, Value)> {
        fn walk(n: &Option<Box<Node>>, out: &mut Vec<(Key, Value)>) {
            if let Some(n) = n {
                walk(&n.left, out);
                out.push((n.key.clone(), n.value.clone()));
                walk(&n.right, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// The whole store as text, one `hexkey=hexvalue` line per entry in
    /// key order, for diffing snapshots against an independent oracle.
    pub fn export_text(&self) -> String {
        self.entries()
            .iter()
            .map(|(k, v)| format!("{}={}\n", hex::encode(k), hex::encode(v)))
            .collect()
    }

    /// Search-path proof for `key` against the current version, with the
    /// response a lookup would give.
    pub fn prove(&self, key: &[u8]) -> (Proof, Response) {
        let backend = &*self.backend;
        let mut path = Vec::new();
        let mut cur = self.root.as_deref();
        loop {
            match cur {
                None => {
                    return (
                        Proof {
                            path,
                            terminal: Terminal::Empty,
                        },
                        Response::Absent,
                    )
                }
                Some(n) => match key.cmp(&n.key) {
                    std::cmp::Ordering::Equal => {
                        let terminal = Terminal::Found {
                            value: n.value.clone(),
                            left: child_digest(backend, &n.left),
                            right: child_digest(backend, &n.right),
                        };
                        return (Proof { path, terminal }, Response::Value(n.value.clone()));
                    }
                    std::cmp::Ordering::Less => {
                        path.push(PathStep {
                            key: n.key.clone(),
                            value: n.value.clone(),
                            other: child_digest(backend, &n.right),
                            descend: Side::Left,
                        });
                        cur = n.left.as_deref();
                    }
                    std::cmp::Ordering::Greater => {
                        path.push(PathStep {
                            key: n.key.clone(),
                            value: n.value.clone(),
                            other: child_digest(backend, &n.left),
                            descend: Side::Right,
                        });
                        cur = n.right.as_deref();
                    }
                },
            }
        }
    }

    pub fn insert(&mut self, key: Key, value: Value) {
        let backend = Arc::clone(&self.backend);
        self.root = Some(insert_node(&*backend, self.root.take(), key, value));
    }

    pub fn remove(&mut self, key: &[u8]) -> Option<Value> {
        let backend = Arc::clone(&self.backend);
        let (root, out) = remove_node(&*backend, self.root.take(), key);
        self.root = root;
        out
    }

    /// Executes a key-value operation, returning the proof against the
    /// pre-state and the response. Panics on counter operations: routing a
    /// counter workload into the authenticated store is a caller bug.
    pub fn execute(&mut self, op: &Operation) -> (Proof, Response) {
        match op {
            Operation::Get(k) => self.prove(k),
            Operation::Put(k, v) => {
                let (proof, _) = self.prove(k);
                self.insert(k.clone(), v.clone());
                (proof, Response::Bool(true))
            }
            other => panic!("authenticated store cannot execute {other}"),
        }
    }
}

fn insert_node(
    backend: &dyn CryptoBackend,
    slot: Option<Box<Node>>,
    key: Key,
    value: Value,
) -> Box<Node> {
    let Some(mut n) = slot else {
        return Node::leaf(backend, key, value);
    };
    match key.cmp(&n.key) {
        std::cmp::Ordering::Equal => {
            n.value = value;
            refresh(backend, &mut n);
            n
        }
        std::cmp::Ordering::Less => {
            n.left = Some(insert_node(backend, n.left.take(), key, value));
            if outranks(n.left.as_ref().unwrap(), &n) {
                rotate_right(backend, n)
            } else {
                refresh(backend, &mut n);
                n
            }
        }
        std::cmp::Ordering::Greater => {
            n.right = Some(insert_node(backend, n.right.take(), key, value));
            if outranks(n.right.as_ref().unwrap(), &n) {
                rotate_left(backend, n)
            } else {
                refresh(backend, &mut n);
                n
            }
        }
    }
}

fn rotate_right(backend: &dyn CryptoBackend, mut n: Box<Node>) -> Box<Node> {
    let mut l = n.left.take().unwrap();
    n.left = l.right.take();
    refresh(backend, &mut n);
    l.right = Some(n);
    refresh(backend, &mut l);
    l
}

fn rotate_left(backend: &dyn CryptoBackend, mut n: Box<Node>) -> Box<Node> {
    let mut r = n.right.take().unwrap();
    n.right = r.left.take();
    refresh(backend, &mut n);
    r.left = Some(n);
    refresh(backend, &mut r);
    r
}

fn remove_node(
    backend: &dyn CryptoBackend,
    slot: Option<Box<Node>>,
    key: &[u8],
) -> (Option<Box<Node>>, Option<Value>) {
    let Some(mut n) = slot else {
        return (None, None);
    };
    match key.cmp(&n.key) {
        std::cmp::Ordering::Equal => {
            let merged = merge_nodes(backend, n.left.take(), n.right.take());
            (merged, Some(n.value))
        }
        std::cmp::Ordering::Less => {
            let (child, out) = remove_node(backend, n.left.take(), key);
            n.left = child;
            refresh(backend, &mut n);
            (Some(n), out)
        }
        std::cmp::Ordering::Greater => {
            let (child, out) = remove_node(backend, n.right.take(), key);
            n.right = child;
            refresh(backend, &mut n);
            (Some(n), out)
        }
    }
}

/// Joins two treaps where every key of `a` is below every key of `b`.
fn merge_nodes(
    backend: &dyn CryptoBackend,
    a: Option<Box<Node>>,
    b: Option<Box<Node>>,
) -> Option<Box<Node>> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(mut a), Some(b)) if outranks(&a, &b) => {
            a.right = merge_nodes(backend, a.right.take(), Some(b));
            refresh(backend, &mut a);
            Some(a)
        }
        (Some(a), Some(mut b)) => {
            b.left = merge_nodes(backend, Some(a), b.left.take());
            refresh(backend, &mut b);
            Some(b)
        }
    }
}

// --- verification -----------------------------------------------------------

/// Re-derives the root digest from a path whose deepest point hashes to
/// `terminal`.
fn fold_path(backend: &dyn CryptoBackend, path: &[PathStep], terminal: Digest) -> Digest {
    let mut d = terminal;
    for step in path.iter().rev() {
        let (left, right) = match step.descend {
            Side::Left => (d, step.other.clone()),
            Side::Right => (step.other.clone(), d),
        };
        d = node_digest(backend, &step.key, &step.value, &left, &right);
    }
    d
}

/// New root after inserting `key` at the empty slot a path ends in. The
/// new node takes the position its priority dictates: path nodes that
/// outrank it keep their places, the rest are split around the new key,
/// each keeping its off-path subtree.
fn insert_via_path(backend: &dyn CryptoBackend, path: &[PathStep], key: &[u8], value: &[u8]) -> Digest {
    let new_rank = key_rank(key);
    let ins = path
        .iter()
        .position(|s| (key_rank(&s.key), s.key.as_slice()) < (new_rank, key))
        .unwrap_or(path.len());
    let mut below_left = empty_store_digest(backend);
    let mut below_right = empty_store_digest(backend);
    for step in path[ins..].iter().rev() {
        match step.descend {
            // Descended right, so step.key < key: the node goes below the
            // new key on the left, keeping its own left subtree.
            Side::Right => {
                below_left = node_digest(backend, &step.key, &step.value, &step.other, &below_left);
            }
            Side::Left => {
                below_right =
                    node_digest(backend, &step.key, &step.value, &below_right, &step.other);
            }
        }
    }
    let new_node = node_digest(backend, key, value, &below_left, &below_right);
    fold_path(backend, &path[..ins], new_node)
}

/// Checks a proof for `op` against the trusted pre-state digest `pre`.
/// Returns the post-state digest and the operation's response, or `None`
/// if the proof does not verify.
pub fn verify_exec(
    backend: &dyn CryptoBackend,
    pre: &Digest,
    proof: &Proof,
    op: &Operation,
) -> Option<(Digest, Response)> {
    let (key, put_value) = match op {
        Operation::Get(k) => (k.as_slice(), None),
        Operation::Put(k, v) => (k.as_slice(), Some(v.as_slice())),
        _ => return None,
    };
    // Direction consistency pins the path to the unique search path for
    // `key`; without it an absence proof could point at any empty slot.
    for step in &proof.path {
        let expect = match key.cmp(step.key.as_slice()) {
            std::cmp::Ordering::Less => Side::Left,
            std::cmp::Ordering::Greater => Side::Right,
            std::cmp::Ordering::Equal => return None,
        };
        if step.descend != expect {
            return None;
        }
    }
    let old_terminal = match &proof.terminal {
        Terminal::Found { value, left, right } => node_digest(backend, key, value, left, right),
        Terminal::Empty => empty_store_digest(backend),
    };
    if &fold_path(backend, &proof.path, old_terminal) != pre {
        return None;
    }
    match (put_value, &proof.terminal) {
        (None, Terminal::Found { value, .. }) => Some((pre.clone(), Response::Value(value.clone()))),
        (None, Terminal::Empty) => Some((pre.clone(), Response::Absent)),
        (Some(v), Terminal::Found { left, right, .. }) => {
            let new_terminal = node_digest(backend, key, v, left, right);
            Some((
                fold_path(backend, &proof.path, new_terminal),
                Response::Bool(true),
            ))
        }
        (Some(v), Terminal::Empty) => Some((
            insert_via_path(backend, &proof.path, key, v),
            Response::Bool(true),
        )),
    }
}

// --- proof bundles carried by protocol messages -----------------------------

/// Proof for one of the requester's own pending operations, re-executed in
/// sequence order from the bundle's base version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthStep {
    pub seq: u64,
    pub op: Operation,
    pub proof: Proof,
    pub response: Response,
}

/// Proof chain justifying a response: starting from the digest at
/// `base_version`, replay the issuer's successful pending operations
/// (`steps`), then the operation itself (`op_proof`, yielding `response`).
/// Commits carry the bundle onward so every client can re-verify the
/// committer's response derivation against its own digest history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthBundle {
    pub base_version: u64,
    pub steps: Vec<AuthStep>,
    pub op_proof: Proof,
    pub response: Response,
}

/// Store-related material in a reply: the proof bundle for the requester,
/// plus the server-computed read/write key sets of each window entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyAuth {
    pub bundle: AuthBundle,
    pub window_keys: Vec<KeySets>,
}

/// Store-related material in a broadcast: the committer's bundle as
/// relayed, and the server's advance proof for the operation against the
/// immediately preceding version. The advance proof is identical for all
/// recipients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BroadcastAuth {
    pub bundle: AuthBundle,
    pub advance: Proof,
}

impl Proof {
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf);
        buf
    }

    pub(crate) fn write(&self, buf: &mut Vec<u8>) {
        put_u32(buf, self.path.len() as u32);
        for step in &self.path {
            put_field(buf, &step.key);
            put_field(buf, &step.value);
            put_field(buf, step.other.as_bytes());
            buf.push(match step.descend {
                Side::Left => 0x00,
                Side::Right => 0x01,
            });
        }
        match &self.terminal {
            Terminal::Empty => buf.push(0x00),
            Terminal::Found { value, left, right } => {
                buf.push(0x01);
                put_field(buf, value);
                put_field(buf, left.as_bytes());
                put_field(buf, right.as_bytes());
            }
        }
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let count = r.u32()?;
        let mut path = Vec::new();
        for _ in 0..count {
            let key = r.field()?.to_vec();
            let value = r.field()?.to_vec();
            let other = Digest(r.field()?.to_vec());
            let descend = match r.u8()? {
                0x00 => Side::Left,
                0x01 => Side::Right,
                tag => {
                    return Err(WireError::UnknownTag {
                        tag,
                        context: "proof step side",
                    })
                }
            };
            path.push(PathStep {
                key,
                value,
                other,
                descend,
            });
        }
        let terminal = match r.u8()? {
            0x00 => Terminal::Empty,
            0x01 => {
                let value = r.field()?.to_vec();
                let left = Digest(r.field()?.to_vec());
                let right = Digest(r.field()?.to_vec());
                Terminal::Found { value, left, right }
            }
            tag => {
                return Err(WireError::UnknownTag {
                    tag,
                    context: "proof terminal",
                })
            }
        };
        Ok(Proof { path, terminal })
    }
}

impl AuthBundle {
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        put_u64(&mut buf, self.base_version);
        put_u32(&mut buf, self.steps.len() as u32);
        for step in &self.steps {
            put_u64(&mut buf, step.seq);
            let mut op_bytes = Vec::new();
            write_operation(&mut op_bytes, &step.op);
            put_field(&mut buf, &op_bytes);
            put_field(&mut buf, &step.proof.encode());
            write_response(&mut buf, &step.response);
        }
        put_field(&mut buf, &self.op_proof.encode());
        write_response(&mut buf, &self.response);
        buf
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let base_version = r.u64()?;
        let count = r.u32()?;
        let mut steps = Vec::new();
        for _ in 0..count {
            let seq = r.u64()?;
            let op = read_in_field(r, read_operation)?;
            let proof = read_in_field(r, Proof::read)?;
            let response = read_response(r)?;
            steps.push(AuthStep {
                seq,
                op,
                proof,
                response,
            });
        }
        let op_proof = read_in_field(r, Proof::read)?;
        let response = read_response(r)?;
        Ok(AuthBundle {
            base_version,
            steps,
            op_proof,
            response,
        })
    }
}

impl ReplyAuth {
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        put_field(&mut buf, &self.bundle.encode());
        put_u32(&mut buf, self.window_keys.len() as u32);
        for ks in &self.window_keys {
            write_key_sets(&mut buf, ks);
        }
        buf
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let bundle = read_in_field(r, AuthBundle::read)?;
        let count = r.u32()?;
        let mut window_keys = Vec::new();
        for _ in 0..count {
            window_keys.push(read_key_sets(r)?);
        }
        Ok(ReplyAuth {
            bundle,
            window_keys,
        })
    }
}

impl BroadcastAuth {
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        put_field(&mut buf, &self.bundle.encode());
        put_field(&mut buf, &self.advance.encode());
        buf
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let bundle = read_in_field(r, AuthBundle::read)?;
        let advance = read_in_field(r, Proof::read)?;
        Ok(BroadcastAuth { bundle, advance })
    }
}

fn read_in_field<T>(
    r: &mut Reader<'_>,
    parse: impl FnOnce(&mut Reader<'_>) -> Result<T, WireError>,
) -> Result<T, WireError> {
    let bytes = r.field()?;
    let mut inner = Reader::new(bytes);
    let v = parse(&mut inner)?;
    inner.finish()?;
    Ok(v)
}

fn write_key_sets(buf: &mut Vec<u8>, ks: &KeySets) {
    put_u32(buf, ks.reads.len() as u32);
    for k in &ks.reads {
        put_field(buf, k);
    }
    put_u32(buf, ks.writes.len() as u32);
    for k in &ks.writes {
        put_field(buf, k);
    }
}

fn read_key_sets(r: &mut Reader<'_>) -> Result<KeySets, WireError> {
    let mut ks = KeySets::default();
    for _ in 0..r.u32()? {
        ks.reads.insert(r.field()?.to_vec());
    }
    for _ in 0..r.u32()? {
        ks.writes.insert(r.field()?.to_vec());
    }
    Ok(ks)
}

// --- versioned retention on the server --------------------------------------

/// How the server keeps the per-sequence-number store versions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreRetention {
    /// A full copy per version.
    Full,
    /// The latest store plus per-version undo records; old versions are
    /// reconstructed on demand and can be garbage-collected once every
    /// client has confirmed past them.
    Compact,
}

#[derive(Clone)]
enum UndoRecord {
    Noop,
    Revert { key: Key, prior: Option<Value> },
}

/// The server's store versions `D[0..=v]`, where version `v` reflects the
/// first `v` broadcast operations (aborted ones leave the state as is).
#[derive(Clone)]
pub struct VersionedStores {
    retention: StoreRetention,
    latest: AuthKvStore,
    version: u64,
    history: Vec<AuthKvStore>,
    undo: VecDeque<UndoRecord>,
    floor: u64,
}

impl VersionedStores {
    pub fn new(backend: Arc<dyn CryptoBackend>, retention: StoreRetention) -> Self {
        let latest = AuthKvStore::new(backend);
        let history = match retention {
            StoreRetention::Full => vec![latest.clone()],
            StoreRetention::Compact => Vec::new(),
        };
        Self {
            retention,
            latest,
            version: 0,
            history,
            undo: VecDeque::new(),
            floor: 0,
        }
    }

    pub fn latest(&self) -> &AuthKvStore {
        &self.latest
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Lowest version still reconstructable.
    pub fn floor(&self) -> u64 {
        self.floor
    }

    /// Applies a successful operation, creating the next version. Returns
    /// its proof against the previous version and its response.
    pub fn apply(&mut self, op: &Operation) -> (Proof, Response) {
        let undo = match op {
            Operation::Put(k, _) => UndoRecord::Revert {
                key: k.clone(),
                prior: self.latest.get(k).cloned(),
            },
            _ => UndoRecord::Noop,
        };
        let (proof, response) = self.latest.execute(op);
        self.push_version(undo);
        (proof, response)
    }

    /// Creates the next version without a state change (aborted
    /// operation).
    pub fn skip(&mut self) {
        self.push_version(UndoRecord::Noop);
    }

    fn push_version(&mut self, undo: UndoRecord) {
        self.version += 1;
        match self.retention {
            StoreRetention::Full => self.history.push(self.latest.clone()),
            StoreRetention::Compact => self.undo.push_back(undo),
        }
    }

    /// A copy of the store at `version`, if still retained.
    pub fn store_at(&self, version: u64) -> Option<AuthKvStore> {
        if version > self.version || version < self.floor {
            return None;
        }
        match self.retention {
            StoreRetention::Full => Some(self.history[version as usize].clone()),
            StoreRetention::Compact => {
                let mut store = self.latest.clone();
                let from = (version - self.floor) as usize;
                for record in self.undo.iter().skip(from).rev() {
                    match record {
                        UndoRecord::Noop => {}
                        UndoRecord::Revert { key, prior } => match prior {
                            Some(v) => store.insert(key.clone(), v.clone()),
                            None => {
                                store.remove(key);
                            }
                        },
                    }
                }
                Some(store)
            }
        }
    }

    /// Drops reconstruction data for versions below `min_confirmed`, the
    /// lowest version every client is known to have confirmed. Only
    /// meaningful in compact retention; full retention keeps everything
    /// for replay.
    pub fn discard_below(&mut self, min_confirmed: u64) {
        if self.retention == StoreRetention::Compact {
            while self.floor < min_confirmed.min(self.version) {
                self.undo.pop_front();
                self.floor += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::CryptoKind;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    /// Independent reference: build the unique admissible tree for a key
    /// set recursively (highest priority at the root) and hash it bottom
    /// up, sharing no code with the incremental store.
    fn reference_digest(backend: &dyn CryptoBackend, map: &BTreeMap<Key, Value>) -> Digest {
        fn build(backend: &dyn CryptoBackend, entries: &[(&Key, &Value)]) -> Digest {
            if entries.is_empty() {
                return empty_store_digest(backend);
            }
            let root = entries
                .iter()
                .enumerate()
                .max_by_key(|(_, (k, _))| (key_rank(k), (*k).clone()))
                .map(|(i, _)| i)
                .unwrap();
            let left = build(backend, &entries[..root]);
            let right = build(backend, &entries[root + 1..]);
            let (k, v) = entries[root];
            node_digest(backend, k, v, &left, &right)
        }
        let entries: Vec<_> = map.iter().collect();
        build(backend, &entries)
    }

    fn sha_backend() -> Arc<dyn CryptoBackend> {
        CryptoKind::Sha256.build(4, 7)
    }

    fn store_from(backend: &Arc<dyn CryptoBackend>, pairs: &[(&[u8], &[u8])]) -> AuthKvStore {
        let mut store = AuthKvStore::new(Arc::clone(backend));
        for (k, v) in pairs {
            store.insert(k.to_vec(), v.to_vec());
        }
        store
    }

    #[test]
    fn empty_store_matches_reference() {
        let backend = sha_backend();
        let store = AuthKvStore::new(Arc::clone(&backend));
        assert_eq!(store.digest(), reference_digest(&*backend, &BTreeMap::new()));
    }

    #[test]
    fn insertion_order_does_not_change_digest() {
        let backend = sha_backend();
        let a = store_from(&backend, &[(b"a", b"1"), (b"b", b"2"), (b"c", b"3")]);
        let b = store_from(&backend, &[(b"c", b"3"), (b"a", b"1"), (b"b", b"2")]);
        assert_eq!(a.digest(), b.digest());
        let map: BTreeMap<Key, Value> = [(b"a", b"1"), (b"b", b"2"), (b"c", b"3")]
            .iter()
            .map(|(k, v)| (k.to_vec(), v.to_vec()))
            .collect();
        assert_eq!(a.digest(), reference_digest(&*backend, &map));
    }

    #[test]
    fn update_changes_digest_and_tracks_reference() {
        let backend = sha_backend();
        let mut store = store_from(&backend, &[(b"a", b"1"), (b"b", b"2")]);
        let before = store.digest();
        store.insert(b"a".to_vec(), b"9".to_vec());
        assert_ne!(store.digest(), before);
        let map: BTreeMap<Key, Value> = [(b"a".to_vec(), b"9".to_vec()), (b"b".to_vec(), b"2".to_vec())]
            .into_iter()
            .collect();
        assert_eq!(store.digest(), reference_digest(&*backend, &map));
    }

    #[test]
    fn remove_restores_reference_digest() {
        let backend = sha_backend();
        let mut store = store_from(&backend, &[(b"a", b"1"), (b"b", b"2"), (b"c", b"3")]);
        assert_eq!(store.remove(b"b"), Some(b"2".to_vec()));
        assert_eq!(store.remove(b"b"), None);
        let map: BTreeMap<Key, Value> = [(b"a".to_vec(), b"1".to_vec()), (b"c".to_vec(), b"3".to_vec())]
            .into_iter()
            .collect();
        assert_eq!(store.digest(), reference_digest(&*backend, &map));
    }

    #[test]
    fn membership_proof_verifies_and_reads_value() {
        let backend = sha_backend();
        let store = store_from(&backend, &[(b"a", b"1"), (b"b", b"2"), (b"c", b"3")]);
        let op = Operation::Get(b"b".to_vec());
        let (proof, response) = store.prove(b"b");
        assert_eq!(response, Response::Value(b"2".to_vec()));
        let (post, derived) = verify_exec(&*backend, &store.digest(), &proof, &op).unwrap();
        assert_eq!(post, store.digest());
        assert_eq!(derived, Response::Value(b"2".to_vec()));
    }

    #[test]
    fn absence_proof_verifies_on_empty_and_populated_stores() {
        let backend = sha_backend();
        let empty = AuthKvStore::new(Arc::clone(&backend));
        let (proof, response) = empty.prove(b"x");
        assert_eq!(response, Response::Absent);
        let op = Operation::Get(b"x".to_vec());
        let (post, derived) = verify_exec(&*backend, &empty.digest(), &proof, &op).unwrap();
        assert_eq!(post, empty.digest());
        assert_eq!(derived, Response::Absent);

        let store = store_from(&backend, &[(b"a", b"1"), (b"c", b"3")]);
        let op = Operation::Get(b"b".to_vec());
        let (proof, _) = store.prove(b"b");
        let (_, derived) = verify_exec(&*backend, &store.digest(), &proof, &op).unwrap();
        assert_eq!(derived, Response::Absent);
    }

    #[test]
    fn put_proofs_predict_the_new_root() {
        let backend = sha_backend();
        // Update of an existing key.
        let mut store = store_from(&backend, &[(b"a", b"1"), (b"b", b"2")]);
        let pre = store.digest();
        let op = Operation::Put(b"a".to_vec(), b"9".to_vec());
        let (proof, response) = store.execute(&op);
        assert_eq!(response, Response::Bool(true));
        let (post, derived) = verify_exec(&*backend, &pre, &proof, &op).unwrap();
        assert_eq!(post, store.digest());
        assert_eq!(derived, Response::Bool(true));

        // Fresh insertion.
        let pre = store.digest();
        let op = Operation::Put(b"m".to_vec(), b"5".to_vec());
        let (proof, _) = store.execute(&op);
        let (post, _) = verify_exec(&*backend, &pre, &proof, &op).unwrap();
        assert_eq!(post, store.digest());
    }

    #[test]
    fn proof_for_one_key_rejected_for_another() {
        let backend = sha_backend();
        let store = store_from(&backend, &[(b"a", b"1"), (b"b", b"2"), (b"c", b"3")]);
        let (proof, _) = store.prove(b"a");
        let wrong = Operation::Get(b"c".to_vec());
        assert!(verify_exec(&*backend, &store.digest(), &proof, &wrong).is_none());
    }

    #[test]
    fn tampered_proofs_fail() {
        let backend = sha_backend();
        let store = store_from(&backend, &[(b"a", b"1"), (b"b", b"2"), (b"c", b"3")]);
        let op = Operation::Get(b"a".to_vec());
        let (good, _) = store.prove(b"a");
        assert!(verify_exec(&*backend, &store.digest(), &good, &op).is_some());

        let mut wrong_value = good.clone();
        if let Terminal::Found { value, .. } = &mut wrong_value.terminal {
            value[0] ^= 1;
        }
        assert!(verify_exec(&*backend, &store.digest(), &wrong_value, &op).is_none());

        let mut truncated = good.clone();
        truncated.path.pop();
        assert!(verify_exec(&*backend, &store.digest(), &truncated, &op).is_none());

        let mut flipped_side = good.clone();
        if let Some(step) = flipped_side.path.first_mut() {
            step.descend = match step.descend {
                Side::Left => Side::Right,
                Side::Right => Side::Left,
            };
        }
        assert!(verify_exec(&*backend, &store.digest(), &flipped_side, &op).is_none());

        let stale = Digest(vec![0; 8]);
        assert!(verify_exec(&*backend, &stale, &good, &op).is_none());
    }

    #[test]
    fn counter_operation_is_rejected_by_verifier() {
        let backend = sha_backend();
        let store = store_from(&backend, &[(b"a", b"1")]);
        let (proof, _) = store.prove(b"a");
        assert!(verify_exec(&*backend, &store.digest(), &proof, &Operation::Add(1)).is_none());
    }

    /// Hash-derived priorities keep the treap balanced, so search paths
    /// should stay within 4*log2(n) + 4 hops; for n = 512 that is 40.
    #[test]
    fn proof_paths_stay_logarithmic() {
        let backend = sha_backend();
        let mut store = AuthKvStore::new(Arc::clone(&backend));
        for i in 0..512u32 {
            store.insert(i.to_be_bytes().to_vec(), vec![1]);
        }
        let longest = (0..512u32)
            .map(|i| store.prove(&i.to_be_bytes()).0.path.len())
            .max()
            .unwrap();
        assert!(longest <= 40, "deepest search path {longest} exceeds 4*log2(512)+4");
    }

    #[test]
    fn export_text_lists_entries_sorted() {
        let backend = sha_backend();
        let store = store_from(&backend, &[(b"b", b"2"), (b"a", b"1")]);
        assert_eq!(store.export_text(), "61=31\n62=32\n");
        assert_eq!(AuthKvStore::new(Arc::clone(&backend)).export_text(), "");
    }

    #[test]
    fn ideal_backend_digests_are_content_deterministic() {
        let backend = CryptoKind::Ideal.build(4, 1);
        let a = store_from(&backend, &[(b"a", b"1"), (b"b", b"2")]);
        let b = store_from(&backend, &[(b"b", b"2"), (b"a", b"1")]);
        assert_eq!(a.digest(), b.digest());
        let op = Operation::Get(b"a".to_vec());
        let (proof, _) = a.prove(b"a");
        let (post, derived) = verify_exec(&*backend, &a.digest(), &proof, &op).unwrap();
        assert_eq!(post, a.digest());
        assert_eq!(derived, Response::Value(b"1".to_vec()));
    }

    #[test]
    fn versioned_stores_full_and_compact_agree() {
        let backend = sha_backend();
        let ops = [
            Operation::Put(b"a".to_vec(), b"1".to_vec()),
            Operation::Put(b"b".to_vec(), b"2".to_vec()),
            Operation::Get(b"a".to_vec()),
            Operation::Put(b"a".to_vec(), b"3".to_vec()),
            Operation::Put(b"c".to_vec(), b"4".to_vec()),
            Operation::Put(b"b".to_vec(), b"5".to_vec()),
        ];
        let mut full = VersionedStores::new(Arc::clone(&backend), StoreRetention::Full);
        let mut compact = VersionedStores::new(Arc::clone(&backend), StoreRetention::Compact);
        for (i, op) in ops.iter().enumerate() {
            if i == 3 {
                // An aborted slot: both modes advance the version untouched.
                full.skip();
                compact.skip();
            }
            let (pf, rf) = full.apply(op);
            let (pc, rc) = compact.apply(op);
            assert_eq!(pf, pc);
            assert_eq!(rf, rc);
        }
        assert_eq!(full.version(), compact.version());
        for v in 0..=full.version() {
            let f = full.store_at(v).unwrap();
            let c = compact.store_at(v).unwrap();
            assert_eq!(f.digest(), c.digest(), "version {v}");
            assert_eq!(f.entries(), c.entries(), "version {v}");
        }
    }

    #[test]
    fn compact_retention_discards_below_floor() {
        let backend = sha_backend();
        let mut stores = VersionedStores::new(Arc::clone(&backend), StoreRetention::Compact);
        for i in 0..5u8 {
            stores.apply(&Operation::Put(vec![i], vec![i]));
        }
        assert!(stores.store_at(0).is_some());
        stores.discard_below(3);
        assert_eq!(stores.floor(), 3);
        assert!(stores.store_at(2).is_none());
        assert!(stores.store_at(3).is_some());
        assert_eq!(
            stores.store_at(5).unwrap().digest(),
            stores.latest().digest()
        );
    }

    #[test]
    fn proof_codec_round_trips() {
        let backend = sha_backend();
        let store = store_from(&backend, &[(b"a", b"1"), (b"b", b"2"), (b"c", b"3")]);
        for key in [&b"a"[..], b"b", b"x"] {
            let (proof, _) = store.prove(key);
            let bytes = proof.encode();
            let mut r = Reader::new(&bytes);
            let back = Proof::read(&mut r).unwrap();
            r.finish().unwrap();
            assert_eq!(back, proof);
        }
    }

    #[test]
    fn bundle_codec_round_trips() {
        let backend = sha_backend();
        let mut store = store_from(&backend, &[(b"a", b"1")]);
        let op = Operation::Put(b"b".to_vec(), b"2".to_vec());
        let (proof, response) = store.execute(&op);
        let (op_proof, op_response) = store.prove(b"a");
        let bundle = AuthBundle {
            base_version: 3,
            steps: vec![AuthStep {
                seq: 4,
                op,
                proof,
                response,
            }],
            op_proof: op_proof.clone(),
            response: op_response,
        };
        let bytes = bundle.encode();
        let mut r = Reader::new(&bytes);
        let back = AuthBundle::read(&mut r).unwrap();
        r.finish().unwrap();
        assert_eq!(back, bundle);

        let reply = ReplyAuth {
            bundle: bundle.clone(),
            window_keys: vec![crate::functionality::seq_key_sets(&[Operation::Get(
                b"a".to_vec(),
            )])],
        };
        let bytes = reply.encode();
        let mut r = Reader::new(&bytes);
        let back = ReplyAuth::read(&mut r).unwrap();
        r.finish().unwrap();
        assert_eq!(back, reply);

        let bcast = BroadcastAuth {
            bundle,
            advance: op_proof,
        };
        let bytes = bcast.encode();
        let mut r = Reader::new(&bytes);
        let back = BroadcastAuth::read(&mut r).unwrap();
        r.finish().unwrap();
        assert_eq!(back, bcast);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn random_contents_match_reference(
            pairs in proptest::collection::vec(
                (proptest::collection::vec(any::<u8>(), 1..5),
                 proptest::collection::vec(any::<u8>(), 0..4)),
                0..24,
            ),
        ) {
            let backend = sha_backend();
            let mut store = AuthKvStore::new(Arc::clone(&backend));
            let mut map = BTreeMap::new();
            for (k, v) in pairs {
                store.insert(k.clone(), v.clone());
                map.insert(k, v);
            }
            prop_assert_eq!(store.digest(), reference_digest(&*backend, &map));
            prop_assert_eq!(store.len(), map.len());
        }

        #[test]
        fn random_put_proofs_predict_new_roots(
            pairs in proptest::collection::vec(
                (proptest::collection::vec(any::<u8>(), 1..4),
                 proptest::collection::vec(any::<u8>(), 0..3)),
                0..16,
            ),
            key in proptest::collection::vec(any::<u8>(), 1..4),
            value in proptest::collection::vec(any::<u8>(), 0..3),
        ) {
            let backend = sha_backend();
            let mut store = AuthKvStore::new(Arc::clone(&backend));
            for (k, v) in pairs {
                store.insert(k, v);
            }
            let pre = store.digest();
            let op = Operation::Put(key, value);
            let (proof, _) = store.execute(&op);
            let (post, response) = verify_exec(&*backend, &pre, &proof, &op).unwrap();
            prop_assert_eq!(post, store.digest());
            prop_assert_eq!(response, Response::Bool(true));
        }

        #[test]
        fn random_removals_match_reference(
            keys in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 1..3), 1..16),
            victims in proptest::collection::vec(any::<usize>(), 1..8),
        ) {
            let backend = sha_backend();
            let mut store = AuthKvStore::new(Arc::clone(&backend));
            let mut map = BTreeMap::new();
            for k in &keys {
                store.insert(k.clone(), k.clone());
                map.insert(k.clone(), k.clone());
            }
            for pick in victims {
                let k = keys[pick % keys.len()].clone();
                prop_assert_eq!(store.remove(&k), map.remove(&k));
            }
            prop_assert_eq!(store.digest(), reference_digest(&*backend, &map));
        }
    }
}
