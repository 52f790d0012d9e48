//! The client state machine: invocation, reply handling (hash chain,
//! pending-window classification, conflict check, commit) and broadcast
//! handling (verify, confirm, apply). Any inconsistency in what the server
//! shows moves the client into an absorbing halted state carrying the
//! reason; a halted client emits nothing further.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::authstore::{verify_exec, AuthBundle, empty_store_digest};
use crate::crypto::{CryptoBackend, Digest};
use crate::functionality::{
    apply_seq, commute_fast, op_key_sets, KeySets, Operation, Response, StateValue, Status,
    Workload,
};
use crate::wire::{
    chain_genesis, chain_link, commit_payload, invoke_payload, BroadcastMessage, CommitMessage,
    InvokeMessage, ReplyMessage,
};
use crate::ClientId;

/// Why a client stopped participating. Each value corresponds to exactly
/// one verification site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    /// A pending entry's invocation signature did not verify.
    BadInvokeSignature,
    /// A reply's hash-chain entry contradicts one recorded earlier.
    ChainMismatchReply,
    /// The reply window was empty, did not end with this client's current
    /// operation, or ended at an already-confirmed position.
    LastPendingNotSelf,
    /// A broadcast's commit signature did not verify.
    BadCommitSignature,
    /// A broadcast arrived out of order.
    BadBroadcastSeq,
    /// A broadcast's hash-chain entry contradicts the local chain.
    ChainMismatchBroadcast,
    /// Store proof material in a reply was missing or did not verify.
    BadStoreProofReply,
    /// Store proof material in a broadcast was missing or did not verify.
    BadStoreProofBroadcast,
}

impl std::fmt::Display for HaltReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            HaltReason::BadInvokeSignature => "bad_invoke_signature",
            HaltReason::ChainMismatchReply => "chain_mismatch_reply",
            HaltReason::LastPendingNotSelf => "last_pending_not_self",
            HaltReason::BadCommitSignature => "bad_commit_signature",
            HaltReason::BadBroadcastSeq => "bad_broadcast_seq",
            HaltReason::ChainMismatchBroadcast => "chain_mismatch_broadcast",
            HaltReason::BadStoreProofReply => "bad_store_proof_reply",
            HaltReason::BadStoreProofBroadcast => "bad_store_proof_broadcast",
        };
        f.write_str(name)
    }
}

/// Status and response a client recorded when committing one of its own
/// operations. Consulted, never recomputed, when the operation reappears
/// in a pending window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnRecord {
    pub op: Operation,
    pub status: Status,
    pub response: Response,
}

/// The operation awaiting its reply, together with the confirmation
/// count that went out in its invocation message. The reply window is
/// anchored right after that count, which may since have fallen behind
/// the live one: broadcasts can arrive between invocation and reply.
#[derive(Debug, Clone, PartialEq, Eq)]
struct InFlight {
    op: Operation,
    base: u64,
}

/// What tracks the application state between confirmations.
#[derive(Clone)]
enum StateTracking {
    /// The client holds the state itself and applies confirmed operations.
    Plain(StateValue),
    /// The client holds only a digest per confirmed version and verifies
    /// server-supplied proofs against it.
    Authenticated(BTreeMap<u64, Digest>),
}

/// Result of handling a reply. The commit variant is large but also the
/// common case, and the value is consumed right away, so boxing it would
/// only add an allocation per operation.
#[derive(Debug, Clone, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum ReplyOutcome {
    /// The operation completed: send the commit, output the response.
    Committed {
        commit: CommitMessage,
        response: Response,
        status: Status,
    },
    Halted(HaltReason),
    /// The client had already halted; the message was dropped.
    Ignored,
}

/// Result of handling a broadcast.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BroadcastOutcome {
    Confirmed {
        seq: u64,
        op: Operation,
        committer: ClientId,
        /// Whether the operation changed state (it committed successfully).
        applied: bool,
        /// The new store digest, when running against the authenticated
        /// store.
        store_digest: Option<Digest>,
    },
    Halted(HaltReason),
    Ignored,
}

#[derive(Clone)]
pub struct Client {
    id: ClientId,
    backend: Arc<dyn CryptoBackend>,
    gc: bool,
    halted: Option<HaltReason>,
    /// The one operation currently awaiting its reply.
    in_flight: Option<InFlight>,
    /// Number of confirmed operations.
    confirmed: u64,
    tracking: StateTracking,
    /// Hash chain: entry per promised or confirmed sequence number.
    chain: BTreeMap<u64, Digest>,
    /// Own committed operations by sequence number.
    own: BTreeMap<u64, OwnRecord>,
}

impl Client {
    /// `authenticated` switches the key-value workload to digest-and-proof
    /// state tracking. Panics when combined with the counter workload:
    /// proofs are defined over the keyed store only.
    pub fn new(
        id: ClientId,
        workload: Workload,
        authenticated: bool,
        gc: bool,
        backend: Arc<dyn CryptoBackend>,
    ) -> Self {
        let tracking = if authenticated {
            assert_eq!(
                workload,
                Workload::Kv,
                "authenticated store requires the key-value workload"
            );
            let mut digests = BTreeMap::new();
            digests.insert(0, empty_store_digest(&*backend));
            StateTracking::Authenticated(digests)
        } else {
            StateTracking::Plain(workload.initial_state())
        };
        let mut chain = BTreeMap::new();
        chain.insert(0, chain_genesis());
        Client {
            id,
            backend,
            gc,
            halted: None,
            in_flight: None,
            confirmed: 0,
            tracking,
            chain,
            own: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> ClientId {
        self.id
    }

    pub fn halt_reason(&self) -> Option<HaltReason> {
        self.halted
    }

    pub fn confirmed(&self) -> u64 {
        self.confirmed
    }

    pub fn in_flight(&self) -> Option<&Operation> {
        self.in_flight.as_ref().map(|f| &f.op)
    }

    /// Confirmed application state, when the client tracks it directly.
    pub fn state(&self) -> Option<&StateValue> {
        match &self.tracking {
            StateTracking::Plain(s) => Some(s),
            StateTracking::Authenticated(_) => None,
        }
    }

    /// Store digest at a confirmed version, when tracking digests.
    pub fn store_digest_at(&self, seq: u64) -> Option<&Digest> {
        match &self.tracking {
            StateTracking::Plain(_) => None,
            StateTracking::Authenticated(g) => g.get(&seq),
        }
    }

    pub fn chain_digest_at(&self, seq: u64) -> Option<&Digest> {
        self.chain.get(&seq)
    }

    pub fn own_record(&self, seq: u64) -> Option<&OwnRecord> {
        self.own.get(&seq)
    }

    /// Fingerprint of the confirmed prefix: the confirmation count and the
    /// hash-chain entry covering it. Two clients shown the same prefix
    /// report equal digests; forked clients cannot.
    pub fn status_digest(&self) -> (u64, Digest) {
        (self.confirmed, self.chain[&self.confirmed].clone())
    }

    /// Starts an operation. Returns the message to send, or nothing if the
    /// client has halted. Panics when an operation is already in flight:
    /// drivers must wait for completion.
    pub fn invoke(&mut self, op: Operation) -> Option<InvokeMessage> {
        if self.halted.is_some() {
            return None;
        }
        assert!(
            self.in_flight.is_none(),
            "{} invoked {op} while another operation is in flight",
            self.id
        );
        let sig = self.backend.sign(self.id, &invoke_payload(&op, self.id));
        self.in_flight = Some(InFlight {
            op: op.clone(),
            base: self.confirmed,
        });
        Some(InvokeMessage {
            op,
            confirmed: self.confirmed,
            sig,
        })
    }

    fn halt(&mut self, reason: HaltReason) -> HaltReason {
        self.halted = Some(reason);
        self.in_flight = None;
        reason
    }

    pub fn on_reply(&mut self, msg: &ReplyMessage) -> ReplyOutcome {
        if self.halted.is_some() {
            return ReplyOutcome::Ignored;
        }
        let Some(InFlight { op: current, base }) = self.in_flight.clone() else {
            // A reply with no operation in flight can only come from a
            // misbehaving server; it trivially fails the final-entry rule.
            return ReplyOutcome::Halted(self.halt(HaltReason::LastPendingNotSelf));
        };

        // Walk the window at promised sequence numbers base+1.. and split
        // the still-unconfirmed suffix into own successful operations and
        // other clients'. Entries at or below the confirmed count are
        // already folded into the state; they get their signatures and any
        // retained chain entries checked but contribute nothing further.
        let mut own_pending: Vec<(u64, Operation)> = Vec::new();
        let mut other_pending: Vec<Operation> = Vec::new();
        for (k, entry) in msg.window.iter().enumerate() {
            let l = base + 1 + k as u64;
            if !self
                .backend
                .verify(entry.client, &entry.sig, &invoke_payload(&entry.op, entry.client))
            {
                return ReplyOutcome::Halted(self.halt(HaltReason::BadInvokeSignature));
            }
            // Under garbage collection the chain below the confirmed
            // frontier is gone; such positions cannot be cross-checked.
            if let Some(prev) = self.chain.get(&(l - 1)) {
                let link = chain_link(prev, &entry.op, l, entry.client);
                let expected = self.backend.hash(&link);
                match self.chain.get(&l) {
                    Some(existing) if *existing != expected => {
                        return ReplyOutcome::Halted(self.halt(HaltReason::ChainMismatchReply));
                    }
                    Some(_) => {}
                    None => {
                        self.chain.insert(l, expected);
                    }
                }
            }
            if l <= self.confirmed {
                continue;
            }
            if entry.client == self.id {
                if self.own.get(&l).map(|rec| rec.status) == Some(Status::Success) {
                    own_pending.push((l, entry.op.clone()));
                }
            } else {
                other_pending.push(entry.op.clone());
            }
        }

        let last_matches = msg
            .window
            .last()
            .is_some_and(|e| e.client == self.id && e.op == current);
        if !last_matches {
            return ReplyOutcome::Halted(self.halt(HaltReason::LastPendingNotSelf));
        }
        let seq = base + msg.window.len() as u64;
        if seq <= self.confirmed || !self.chain.contains_key(&seq) {
            // The window ends at or below the confirmed frontier, so it
            // cannot cover the operation whose reply this claims to be.
            return ReplyOutcome::Halted(self.halt(HaltReason::LastPendingNotSelf));
        }

        let (status, response, auth) = match &self.tracking {
            StateTracking::Plain(state) => {
                let pending_ops: Vec<Operation> =
                    own_pending.iter().map(|(_, op)| op.clone()).collect();
                let (tentative, _) = apply_seq(state, &pending_ops);
                if commute_fast(&tentative, std::slice::from_ref(&current), &other_pending) {
                    let (_, r) = tentative.apply(&current);
                    (Status::Success, r, None)
                } else {
                    (Status::Abort, Response::Abort, None)
                }
            }
            StateTracking::Authenticated(_) => {
                match self.reply_with_proofs(msg, &current, &own_pending, &other_pending) {
                    Ok(done) => done,
                    Err(reason) => return ReplyOutcome::Halted(self.halt(reason)),
                }
            }
        };

        let chain_entry = self.chain[&seq].clone();
        let auth_bytes = auth.as_ref().map(|b: &AuthBundle| b.encode());
        let payload = commit_payload(&current, seq, &chain_entry, status, auth_bytes.as_deref());
        let sig = self.backend.sign(self.id, &payload);
        self.own.insert(
            seq,
            OwnRecord {
                op: current.clone(),
                status,
                response: response.clone(),
            },
        );
        self.in_flight = None;
        ReplyOutcome::Committed {
            commit: CommitMessage {
                op: current,
                seq,
                chain: chain_entry,
                status,
                sig,
                auth,
            },
            response,
            status,
        }
    }

    /// Reply handling against the authenticated store: check the server's
    /// key sets, replay the proof bundle from the confirmed digest, run
    /// the conflict check on key sets, and derive the response from the
    /// operation's own proof. The post-operation digest is discarded; only
    /// a broadcast advances the confirmed digest chain.
    fn reply_with_proofs(
        &self,
        msg: &ReplyMessage,
        current: &Operation,
        own_pending: &[(u64, Operation)],
        other_pending: &[Operation],
    ) -> Result<(Status, Response, Option<AuthBundle>), HaltReason> {
        let StateTracking::Authenticated(digests) = &self.tracking else {
            unreachable!("proof handling outside authenticated tracking");
        };
        let auth = msg.auth.as_ref().ok_or(HaltReason::BadStoreProofReply)?;
        if auth.bundle.base_version != self.confirmed {
            return Err(HaltReason::BadStoreProofReply);
        }
        if auth.window_keys.len() != msg.window.len() {
            return Err(HaltReason::BadStoreProofReply);
        }
        for (claimed, entry) in auth.window_keys.iter().zip(&msg.window) {
            if *claimed != op_key_sets(&entry.op) {
                return Err(HaltReason::BadStoreProofReply);
            }
        }

        if auth.bundle.steps.len() != own_pending.len() {
            return Err(HaltReason::BadStoreProofReply);
        }
        let mut digest = digests[&self.confirmed].clone();
        for (step, (seq, op)) in auth.bundle.steps.iter().zip(own_pending) {
            if step.seq != *seq || step.op != *op {
                return Err(HaltReason::BadStoreProofReply);
            }
            let (next, response) = verify_exec(&*self.backend, &digest, &step.proof, op)
                .ok_or(HaltReason::BadStoreProofReply)?;
            if response != step.response {
                return Err(HaltReason::BadStoreProofReply);
            }
            // The operation already produced an output once; the server
            // must not be able to rewrite history under it.
            let recorded = self.own.get(seq).ok_or(HaltReason::BadStoreProofReply)?;
            if recorded.response != response {
                return Err(HaltReason::BadStoreProofReply);
            }
            digest = next;
        }

        let mine = op_key_sets(current);
        let mut others = KeySets::default();
        for op in other_pending {
            others.union(&op_key_sets(op));
        }
        if crate::functionality::commute_by_key_sets(&mine, &others) {
            let (_, response) = verify_exec(&*self.backend, &digest, &auth.bundle.op_proof, current)
                .ok_or(HaltReason::BadStoreProofReply)?;
            if response != auth.bundle.response {
                return Err(HaltReason::BadStoreProofReply);
            }
            Ok((Status::Success, response, Some(auth.bundle.clone())))
        } else {
            Ok((Status::Abort, Response::Abort, None))
        }
    }

    pub fn on_broadcast(&mut self, msg: &BroadcastMessage) -> BroadcastOutcome {
        if self.halted.is_some() {
            return BroadcastOutcome::Ignored;
        }
        let q = self.confirmed + 1;
        if msg.seq != q {
            return BroadcastOutcome::Halted(self.halt(HaltReason::BadBroadcastSeq));
        }
        if !self
            .backend
            .verify(msg.committer, &msg.sig, &msg.signed_payload())
        {
            return BroadcastOutcome::Halted(self.halt(HaltReason::BadCommitSignature));
        }
        // The signature covers (op, seq, chain, status), so deriving the
        // chain entry from message fields is safe when none is recorded;
        // an entry promised earlier must match exactly.
        let derived = self
            .backend
            .hash(&chain_link(&self.chain[&(q - 1)], &msg.op, q, msg.committer));
        match self.chain.get(&q) {
            Some(existing) => {
                if *existing != msg.chain {
                    return BroadcastOutcome::Halted(self.halt(HaltReason::ChainMismatchBroadcast));
                }
            }
            None => {
                if derived != msg.chain {
                    return BroadcastOutcome::Halted(self.halt(HaltReason::ChainMismatchBroadcast));
                }
                self.chain.insert(q, derived);
            }
        }

        let applied = msg.status == Status::Success;
        let mut store_digest = None;
        match &mut self.tracking {
            StateTracking::Plain(state) => {
                if applied {
                    let (next, _) = state.apply(&msg.op);
                    *state = next;
                }
            }
            StateTracking::Authenticated(digests) => {
                let current = digests[&(q - 1)].clone();
                let next = if applied {
                    match Self::advance_digest(&*self.backend, digests, &current, msg) {
                        Ok(d) => d,
                        Err(reason) => return BroadcastOutcome::Halted(self.halt(reason)),
                    }
                } else {
                    current
                };
                store_digest = Some(next.clone());
                digests.insert(q, next);
            }
        }
        self.confirmed = q;
        if self.gc {
            self.chain = self.chain.split_off(&q);
            self.own = self.own.split_off(&(q + 1));
        }
        BroadcastOutcome::Confirmed {
            seq: q,
            op: msg.op.clone(),
            committer: msg.committer,
            applied,
            store_digest,
        }
    }

    /// Verifies a successful broadcast's proof material: the committer's
    /// relayed bundle must replay cleanly from the digest version it names,
    /// and the server's advance proof moves the local digest from version
    /// q-1 to q. Both must derive the same response.
    fn advance_digest(
        backend: &dyn CryptoBackend,
        digests: &BTreeMap<u64, Digest>,
        current: &Digest,
        msg: &BroadcastMessage,
    ) -> Result<Digest, HaltReason> {
        let auth = msg.auth.as_ref().ok_or(HaltReason::BadStoreProofBroadcast)?;
        let base = digests
            .get(&auth.bundle.base_version)
            .ok_or(HaltReason::BadStoreProofBroadcast)?;
        let mut digest = base.clone();
        for step in &auth.bundle.steps {
            let (next, response) = verify_exec(backend, &digest, &step.proof, &step.op)
                .ok_or(HaltReason::BadStoreProofBroadcast)?;
            if response != step.response {
                return Err(HaltReason::BadStoreProofBroadcast);
            }
            digest = next;
        }
        let (_, bundle_response) = verify_exec(backend, &digest, &auth.bundle.op_proof, &msg.op)
            .ok_or(HaltReason::BadStoreProofBroadcast)?;
        if bundle_response != auth.bundle.response {
            return Err(HaltReason::BadStoreProofBroadcast);
        }
        let (next, advance_response) = verify_exec(backend, current, &auth.advance, &msg.op)
            .ok_or(HaltReason::BadStoreProofBroadcast)?;
        if advance_response != bundle_response {
            return Err(HaltReason::BadStoreProofBroadcast);
        }
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::CryptoKind;
    use crate::wire::PendingEntry;

    fn backend() -> Arc<dyn CryptoBackend> {
        CryptoKind::Sha256.build(4, 11)
    }

    fn counter_client(backend: &Arc<dyn CryptoBackend>) -> Client {
        Client::new(ClientId(1), Workload::Counter, false, false, Arc::clone(backend))
    }

    fn entry(backend: &Arc<dyn CryptoBackend>, op: Operation, client: ClientId) -> PendingEntry {
        let sig = backend.sign(client, &invoke_payload(&op, client));
        PendingEntry { op, client, sig }
    }

    fn reply(window: Vec<PendingEntry>) -> ReplyMessage {
        ReplyMessage { window, auth: None }
    }

    /// Drives `client` through one committed operation at the head of an
    /// otherwise empty window and returns the commit.
    fn run_solo_op(client: &mut Client, backend: &Arc<dyn CryptoBackend>, op: Operation) -> CommitMessage {
        client.invoke(op.clone()).unwrap();
        let outcome = client.on_reply(&reply(vec![entry(backend, op, client.id())]));
        match outcome {
            ReplyOutcome::Committed { commit, .. } => commit,
            other => panic!("expected commit, got {other:?}"),
        }
    }

    fn broadcast_from(commit: &CommitMessage, committer: ClientId) -> BroadcastMessage {
        BroadcastMessage {
            op: commit.op.clone(),
            seq: commit.seq,
            chain: commit.chain.clone(),
            status: commit.status,
            committer,
            sig: commit.sig.clone(),
            auth: None,
        }
    }

    #[test]
    fn solo_round_trip_confirms_and_applies() {
        let backend = backend();
        let mut client = counter_client(&backend);
        assert_eq!(client.status_digest(), (0, chain_genesis()));

        let invoke = client.invoke(Operation::Add(2)).unwrap();
        assert_eq!(invoke.confirmed, 0);
        let outcome = client.on_reply(&reply(vec![entry(&backend, Operation::Add(2), ClientId(1))]));
        let ReplyOutcome::Committed { commit, response, status } = outcome else {
            panic!("no commit");
        };
        assert_eq!(commit.seq, 1);
        assert_eq!(status, Status::Success);
        assert_eq!(response, Response::Bool(true));
        // State changes only on confirmation.
        assert_eq!(client.state(), Some(&StateValue::Counter(0)));

        let outcome = client.on_broadcast(&broadcast_from(&commit, ClientId(1)));
        assert!(matches!(
            outcome,
            BroadcastOutcome::Confirmed { seq: 1, applied: true, .. }
        ));
        assert_eq!(client.state(), Some(&StateValue::Counter(2)));
        assert_eq!(client.confirmed(), 1);
        assert_ne!(client.status_digest().1, chain_genesis());
    }

    /// The worked counter scenario: with 7 confirmed, a pending add(2)
    /// from another client lets dec(4) through but forces dec(6) to abort,
    /// because the conflict check runs on the temporary state 3 left by
    /// the successful pending dec(4).
    #[test]
    fn pending_self_shifts_conflict_state() {
        let backend = backend();
        let mut client = counter_client(&backend);
        let commit = run_solo_op(&mut client, &backend, Operation::Add(7));
        client.on_broadcast(&broadcast_from(&commit, ClientId(1)));
        assert_eq!(client.state(), Some(&StateValue::Counter(7)));

        let add2 = entry(&backend, Operation::Add(2), ClientId(2));
        client.invoke(Operation::Dec(4)).unwrap();
        let window = vec![add2.clone(), entry(&backend, Operation::Dec(4), ClientId(1))];
        let ReplyOutcome::Committed { commit, response, status } = client.on_reply(&reply(window))
        else {
            panic!("dec(4) should commit");
        };
        assert_eq!(commit.seq, 3);
        assert_eq!(status, Status::Success);
        assert_eq!(response, Response::Bool(true));

        client.invoke(Operation::Dec(6)).unwrap();
        let window = vec![
            add2,
            entry(&backend, Operation::Dec(4), ClientId(1)),
            entry(&backend, Operation::Dec(6), ClientId(1)),
        ];
        let ReplyOutcome::Committed { commit, response, status } = client.on_reply(&reply(window))
        else {
            panic!("dec(6) should commit an abort");
        };
        assert_eq!(commit.seq, 4);
        assert_eq!(status, Status::Abort);
        assert_eq!(response, Response::Abort);
        assert_eq!(client.own_record(4).unwrap().status, Status::Abort);
        // Nothing was confirmed during any of this.
        assert_eq!(client.confirmed(), 1);
        assert_eq!(client.state(), Some(&StateValue::Counter(7)));
    }

    #[test]
    fn pending_sequence_conflicts_even_when_pairs_commute() {
        let backend = backend();
        let mut client = counter_client(&backend);
        let commit = run_solo_op(&mut client, &backend, Operation::Add(7));
        client.on_broadcast(&broadcast_from(&commit, ClientId(1)));

        client.invoke(Operation::Dec(4)).unwrap();
        let window = vec![
            entry(&backend, Operation::Dec(1), ClientId(2)),
            entry(&backend, Operation::Dec(3), ClientId(3)),
            entry(&backend, Operation::Dec(4), ClientId(1)),
        ];
        let ReplyOutcome::Committed { status, response, .. } = client.on_reply(&reply(window))
        else {
            panic!("dec(4) should commit an abort");
        };
        assert_eq!(status, Status::Abort);
        assert_eq!(response, Response::Abort);
    }

    #[test]
    fn aborted_own_pending_is_not_replayed() {
        let backend = backend();
        let mut client = counter_client(&backend);
        let commit = run_solo_op(&mut client, &backend, Operation::Add(3));
        client.on_broadcast(&broadcast_from(&commit, ClientId(1)));

        // dec(2) aborts against a conflicting pending dec(3).
        client.invoke(Operation::Dec(2)).unwrap();
        let dec3 = entry(&backend, Operation::Dec(3), ClientId(2));
        let window = vec![dec3.clone(), entry(&backend, Operation::Dec(2), ClientId(1))];
        let ReplyOutcome::Committed { status, .. } = client.on_reply(&reply(window)) else {
            panic!("expected abort commit");
        };
        assert_eq!(status, Status::Abort);

        // The aborted dec(2) reappears pending; it must contribute nothing,
        // so add(1) sees temporary state 3 and dec(3) pending: sum 3 <= 3
        // only without the aborted dec's effect counted.
        client.invoke(Operation::Add(1)).unwrap();
        let window = vec![
            dec3,
            entry(&backend, Operation::Dec(2), ClientId(1)),
            entry(&backend, Operation::Add(1), ClientId(1)),
        ];
        let ReplyOutcome::Committed { status, response, .. } = client.on_reply(&reply(window))
        else {
            panic!("expected commit");
        };
        assert_eq!(status, Status::Success);
        assert_eq!(response, Response::Bool(true));
    }

    #[test]
    fn forged_window_signature_halts() {
        let backend = backend();
        let mut client = counter_client(&backend);
        client.invoke(Operation::Add(1)).unwrap();
        let mut bad = entry(&backend, Operation::Add(5), ClientId(2));
        bad.sig.bytes[0] ^= 1;
        let window = vec![bad, entry(&backend, Operation::Add(1), ClientId(1))];
        assert_eq!(
            client.on_reply(&reply(window)),
            ReplyOutcome::Halted(HaltReason::BadInvokeSignature)
        );
        assert_eq!(client.halt_reason(), Some(HaltReason::BadInvokeSignature));
    }

    #[test]
    fn window_not_ending_with_own_op_halts() {
        let backend = backend();
        let mut client = counter_client(&backend);
        client.invoke(Operation::Add(1)).unwrap();
        let window = vec![
            entry(&backend, Operation::Add(1), ClientId(1)),
            entry(&backend, Operation::Add(5), ClientId(2)),
        ];
        assert_eq!(
            client.on_reply(&reply(window)),
            ReplyOutcome::Halted(HaltReason::LastPendingNotSelf)
        );
    }

    #[test]
    fn empty_window_halts() {
        let backend = backend();
        let mut client = counter_client(&backend);
        client.invoke(Operation::Add(1)).unwrap();
        assert_eq!(
            client.on_reply(&reply(vec![])),
            ReplyOutcome::Halted(HaltReason::LastPendingNotSelf)
        );
    }

    #[test]
    fn rewritten_pending_entry_halts_on_next_reply() {
        let backend = backend();
        let mut client = counter_client(&backend);
        // First reply promises add(5) from client 2 at sequence 1.
        client.invoke(Operation::Add(1)).unwrap();
        let window = vec![
            entry(&backend, Operation::Add(5), ClientId(2)),
            entry(&backend, Operation::Add(1), ClientId(1)),
        ];
        assert!(matches!(
            client.on_reply(&reply(window)),
            ReplyOutcome::Committed { .. }
        ));
        // Second reply claims a different operation at that position.
        client.invoke(Operation::Add(2)).unwrap();
        let window = vec![
            entry(&backend, Operation::Add(6), ClientId(2)),
            entry(&backend, Operation::Add(1), ClientId(1)),
            entry(&backend, Operation::Add(2), ClientId(1)),
        ];
        assert_eq!(
            client.on_reply(&reply(window)),
            ReplyOutcome::Halted(HaltReason::ChainMismatchReply)
        );
    }

    #[test]
    fn out_of_order_broadcast_halts() {
        let backend = backend();
        let mut client = counter_client(&backend);
        let commit = run_solo_op(&mut client, &backend, Operation::Add(1));
        let mut skipped = broadcast_from(&commit, ClientId(1));
        skipped.seq = 2;
        assert_eq!(
            client.on_broadcast(&skipped),
            BroadcastOutcome::Halted(HaltReason::BadBroadcastSeq)
        );
    }

    #[test]
    fn tampered_broadcast_status_fails_signature() {
        let backend = backend();
        let mut client = counter_client(&backend);
        let commit = run_solo_op(&mut client, &backend, Operation::Add(1));
        let mut flipped = broadcast_from(&commit, ClientId(1));
        flipped.status = Status::Abort;
        assert_eq!(
            client.on_broadcast(&flipped),
            BroadcastOutcome::Halted(HaltReason::BadCommitSignature)
        );
    }

    #[test]
    fn broadcast_conflicting_with_promised_chain_halts() {
        let backend = backend();
        let mut client = counter_client(&backend);
        // The reply promises add(5) by client 2 at sequence 1.
        client.invoke(Operation::Add(1)).unwrap();
        let window = vec![
            entry(&backend, Operation::Add(5), ClientId(2)),
            entry(&backend, Operation::Add(1), ClientId(1)),
        ];
        client.on_reply(&reply(window));
        // A broadcast then delivers a different operation at sequence 1,
        // correctly signed by its committer.
        let op = Operation::Add(6);
        let link = chain_link(&chain_genesis(), &op, 1, ClientId(2));
        let chain = backend.hash(&link);
        let payload = commit_payload(&op, 1, &chain, Status::Success, None);
        let sig = backend.sign(ClientId(2), &payload);
        let msg = BroadcastMessage {
            op,
            seq: 1,
            chain,
            status: Status::Success,
            committer: ClientId(2),
            sig,
            auth: None,
        };
        assert_eq!(
            client.on_broadcast(&msg),
            BroadcastOutcome::Halted(HaltReason::ChainMismatchBroadcast)
        );
    }

    #[test]
    fn aborted_broadcast_confirms_without_applying() {
        let backend = backend();
        let mut client = counter_client(&backend);
        // Another client's aborted op arrives as the first broadcast.
        let op = Operation::Dec(5);
        let link = chain_link(&chain_genesis(), &op, 1, ClientId(2));
        let chain = backend.hash(&link);
        let payload = commit_payload(&op, 1, &chain, Status::Abort, None);
        let sig = backend.sign(ClientId(2), &payload);
        let msg = BroadcastMessage {
            op,
            seq: 1,
            chain,
            status: Status::Abort,
            committer: ClientId(2),
            sig,
            auth: None,
        };
        let outcome = client.on_broadcast(&msg);
        assert!(matches!(
            outcome,
            BroadcastOutcome::Confirmed { applied: false, .. }
        ));
        assert_eq!(client.state(), Some(&StateValue::Counter(0)));
        assert_eq!(client.confirmed(), 1);
    }

    #[test]
    fn halt_is_absorbing() {
        let backend = backend();
        let mut client = counter_client(&backend);
        client.invoke(Operation::Add(1)).unwrap();
        client.on_reply(&reply(vec![]));
        assert!(client.halt_reason().is_some());
        assert_eq!(client.invoke(Operation::Add(2)), None);
        assert_eq!(client.on_reply(&reply(vec![])), ReplyOutcome::Ignored);
        let dummy = BroadcastMessage {
            op: Operation::Add(1),
            seq: 1,
            chain: chain_genesis(),
            status: Status::Success,
            committer: ClientId(2),
            sig: crate::crypto::Signature {
                bytes: vec![],
                signer: ClientId(2),
            },
            auth: None,
        };
        assert_eq!(client.on_broadcast(&dummy), BroadcastOutcome::Ignored);
    }

    #[test]
    fn gc_keeps_only_the_confirmed_frontier() {
        let backend = backend();
        let mut client = Client::new(ClientId(1), Workload::Counter, false, true, Arc::clone(&backend));
        for i in 1..=3 {
            let commit = run_solo_op(&mut client, &backend, Operation::Add(i));
            client.on_broadcast(&broadcast_from(&commit, ClientId(1)));
        }
        assert_eq!(client.confirmed(), 3);
        assert!(client.chain_digest_at(2).is_none());
        assert!(client.chain_digest_at(3).is_some());
        assert_eq!(client.state(), Some(&StateValue::Counter(6)));
        // The chain frontier still supports the next operation.
        let commit = run_solo_op(&mut client, &backend, Operation::Add(4));
        assert_eq!(commit.seq, 4);
        client.on_broadcast(&broadcast_from(&commit, ClientId(1)));
        assert_eq!(client.state(), Some(&StateValue::Counter(10)));
    }

    #[test]
    #[should_panic(expected = "in flight")]
    fn double_invoke_is_a_driver_bug() {
        let backend = backend();
        let mut client = counter_client(&backend);
        client.invoke(Operation::Add(1)).unwrap();
        client.invoke(Operation::Add(2)).unwrap();
    }
}
