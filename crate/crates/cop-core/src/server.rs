//! The untrusted server: assigns sequence numbers to invocations, shows
//! each requester the pending window, and releases commits as broadcasts
//! in sequence order. It verifies nothing; every guarantee clients enjoy
//! comes from their own checks on what the server relays.

use std::collections::BTreeMap;

use crate::authstore::{AuthBundle, AuthStep, BroadcastAuth, ReplyAuth, VersionedStores};
use crate::functionality::{op_key_sets, Status};
use crate::wire::{BroadcastMessage, CommitMessage, InvokeMessage, PendingEntry, ReplyMessage};
use crate::ClientId;

#[derive(Clone)]
struct CommitRecord {
    msg: CommitMessage,
    committer: ClientId,
}

#[derive(Clone)]
pub struct Server {
    /// Highest sequence number assigned to an invocation.
    invoked_count: u64,
    /// Number of operations already released as broadcasts.
    broadcast_count: u64,
    /// Invocations by sequence number.
    invoked: BTreeMap<u64, PendingEntry>,
    /// Commits received so far, by sequence number. A later commit for
    /// the same number overwrites the earlier one.
    committed: BTreeMap<u64, CommitRecord>,
    /// Confirmation counts clients attached to their invocations, seeded
    /// at zero for everyone. The minimum bounds how far back the next
    /// window can reach, so garbage collection must stay above it.
    confirmed_floor: BTreeMap<ClientId, u64>,
    /// Versioned authenticated store, when running the proof-carrying
    /// variant of the protocol.
    stores: Option<VersionedStores>,
    gc: bool,
}

impl Server {
    /// `clients` is the number of clients that may ever invoke; their
    /// identifiers are 1 through `clients`.
    pub fn new(clients: u64, stores: Option<VersionedStores>, gc: bool) -> Self {
        Server {
            invoked_count: 0,
            broadcast_count: 0,
            invoked: BTreeMap::new(),
            committed: BTreeMap::new(),
            confirmed_floor: (1..=clients).map(|i| (ClientId(i), 0)).collect(),
            stores,
            gc,
        }
    }

    pub fn invoked_count(&self) -> u64 {
        self.invoked_count
    }

    pub fn broadcast_count(&self) -> u64 {
        self.broadcast_count
    }

    pub fn store_digest(&self) -> Option<crate::crypto::Digest> {
        self.stores.as_ref().map(|s| s.latest().digest())
    }

    /// Assigns the next sequence number and answers with the window of
    /// operations from right after the requester's stated confirmation
    /// count through the new invocation, oldest first. The requester
    /// numbers the window from that same count, so the anchor must be the
    /// message field, not the broadcast watermark: the client may not
    /// have processed every released broadcast when it sent the
    /// invocation, in which case the window's leading entries repeat
    /// operations the requester will have confirmed by the time the reply
    /// arrives.
    pub fn on_invoke(&mut self, from: ClientId, msg: &InvokeMessage) -> ReplyMessage {
        debug_assert!(
            msg.confirmed <= self.broadcast_count,
            "{from} claims more confirmations than operations broadcast"
        );
        self.confirmed_floor.insert(from, msg.confirmed);
        self.invoked_count += 1;
        let seq = self.invoked_count;
        self.invoked.insert(
            seq,
            PendingEntry {
                op: msg.op.clone(),
                client: from,
                sig: msg.sig.clone(),
            },
        );

        let window: Vec<(u64, PendingEntry)> = self
            .invoked
            .range(msg.confirmed + 1..=seq)
            .map(|(l, e)| (*l, e.clone()))
            .collect();

        let auth = self.stores.as_ref().map(|stores| {
            debug_assert_eq!(stores.version(), self.broadcast_count);
            let mut scratch = stores.latest().clone();
            let mut steps = Vec::new();
            for (l, entry) in &window[..window.len() - 1] {
                // The proof bundle starts from the store at the broadcast
                // watermark; only the requester's successful operations
                // past that point still need replaying onto it.
                if entry.client != from || *l <= self.broadcast_count {
                    continue;
                }
                let succeeded = self
                    .committed
                    .get(l)
                    .is_some_and(|rec| rec.msg.status == Status::Success);
                if succeeded {
                    let (proof, response) = scratch.execute(&entry.op);
                    steps.push(AuthStep {
                        seq: *l,
                        op: entry.op.clone(),
                        proof,
                        response,
                    });
                }
            }
            let (op_proof, response) = scratch.execute(&msg.op);
            ReplyAuth {
                bundle: AuthBundle {
                    base_version: self.broadcast_count,
                    steps,
                    op_proof,
                    response,
                },
                window_keys: window.iter().map(|(_, e)| op_key_sets(&e.op)).collect(),
            }
        });

        ReplyMessage {
            window: window.into_iter().map(|(_, e)| e).collect(),
            auth,
        }
    }

    /// Records a commit and releases every broadcast that is now due: the
    /// watermark advances while a commit for the next sequence number is
    /// on file. Each returned broadcast is for delivery to every client,
    /// the committer included. Signatures are relayed unverified.
    pub fn on_commit(&mut self, from: ClientId, msg: &CommitMessage) -> Vec<BroadcastMessage> {
        self.committed.insert(
            msg.seq,
            CommitRecord {
                msg: msg.clone(),
                committer: from,
            },
        );
        let mut released = Vec::new();
        while let Some(rec) = self.committed.get(&(self.broadcast_count + 1)) {
            self.broadcast_count += 1;
            let auth = match &mut self.stores {
                Some(stores) => {
                    if rec.msg.status == Status::Success {
                        let (advance, _) = stores.apply(&rec.msg.op);
                        rec.msg
                            .auth
                            .as_ref()
                            .map(|bundle| BroadcastAuth {
                                bundle: bundle.clone(),
                                advance,
                            })
                    } else {
                        stores.skip();
                        None
                    }
                }
                None => None,
            };
            released.push(BroadcastMessage {
                op: rec.msg.op.clone(),
                seq: rec.msg.seq,
                chain: rec.msg.chain.clone(),
                status: rec.msg.status,
                committer: rec.committer,
                sig: rec.msg.sig.clone(),
                auth,
            });
        }
        if self.gc && !released.is_empty() {
            // A future window reaches back to just past its requester's
            // stated confirmation count, which never regresses below the
            // client's current floor; everything at or below the smallest
            // floor is out of reach for every client.
            let min = self.confirmed_floor.values().copied().min().unwrap_or(0);
            self.invoked = self.invoked.split_off(&(min + 1));
            self.committed = self.committed.split_off(&(self.broadcast_count + 1));
            if let Some(stores) = &mut self.stores {
                stores.discard_below(min);
            }
        }
        released
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{CryptoBackend, CryptoKind};
    use crate::functionality::{Operation, Workload};
    use crate::{Client, ClientId};
    use std::sync::Arc;

    fn backend() -> Arc<dyn CryptoBackend> {
        CryptoKind::Sha256.build(4, 5)
    }

    struct Rig {
        server: Server,
        clients: Vec<Client>,
    }

    /// A server and clients wired directly together, delivering every
    /// message synchronously in invocation order.
    impl Rig {
        fn new(n: u64, workload: Workload) -> Self {
            let backend = backend();
            let clients = (1..=n)
                .map(|i| Client::new(ClientId(i), workload, false, false, Arc::clone(&backend)))
                .collect();
            Rig {
                server: Server::new(n, None, false),
                clients,
            }
        }

        fn client(&mut self, id: ClientId) -> &mut Client {
            &mut self.clients[(id.0 - 1) as usize]
        }

        /// Runs one operation start to finish, including broadcast
        /// delivery to everyone.
        fn run_op(&mut self, id: ClientId, op: Operation) -> crate::functionality::Response {
            let invoke = self.client(id).invoke(op).expect("client halted");
            let reply = self.server.on_invoke(id, &invoke);
            let outcome = self.client(id).on_reply(&reply);
            let crate::client::ReplyOutcome::Committed { commit, response, .. } = outcome else {
                panic!("operation did not commit: {outcome:?}");
            };
            for broadcast in self.server.on_commit(id, &commit) {
                for c in &mut self.clients {
                    let out = c.on_broadcast(&broadcast);
                    assert!(
                        matches!(out, crate::client::BroadcastOutcome::Confirmed { .. }),
                        "broadcast rejected: {out:?}"
                    );
                }
            }
            response
        }
    }

    #[test]
    fn sequence_numbers_and_windows_grow_until_broadcast() {
        let backend = backend();
        let mut server = Server::new(2, None, false);
        let sig = |op: &Operation, id: ClientId| {
            backend.sign(id, &crate::wire::invoke_payload(op, id))
        };
        let inv = |op: Operation, id: ClientId, c: u64| InvokeMessage {
            sig: sig(&op, id),
            op,
            confirmed: c,
        };

        let r1 = server.on_invoke(ClientId(1), &inv(Operation::Add(1), ClientId(1), 0));
        assert_eq!(r1.window.len(), 1);
        let r2 = server.on_invoke(ClientId(2), &inv(Operation::Add(2), ClientId(2), 0));
        assert_eq!(r2.window.len(), 2);
        assert_eq!(r2.window[0].op, Operation::Add(1));
        assert_eq!(r2.window[1].op, Operation::Add(2));
        assert_eq!(server.invoked_count(), 2);
        assert_eq!(server.broadcast_count(), 0);
    }

    #[test]
    fn commits_release_in_order_regardless_of_arrival() {
        let mut rig = Rig::new(2, Workload::Counter);
        // Get two invocations pending, commit the second first.
        let i1 = rig.client(ClientId(1)).invoke(Operation::Add(1)).unwrap();
        let r1 = rig.server.on_invoke(ClientId(1), &i1);
        let i2 = rig.client(ClientId(2)).invoke(Operation::Add(2)).unwrap();
        let r2 = rig.server.on_invoke(ClientId(2), &i2);

        let crate::client::ReplyOutcome::Committed { commit: c2, .. } =
            rig.client(ClientId(2)).on_reply(&r2)
        else {
            panic!("no commit from client 2");
        };
        assert!(rig.server.on_commit(ClientId(2), &c2).is_empty());

        let crate::client::ReplyOutcome::Committed { commit: c1, .. } =
            rig.client(ClientId(1)).on_reply(&r1)
        else {
            panic!("no commit from client 1");
        };
        let released = rig.server.on_commit(ClientId(1), &c1);
        assert_eq!(released.len(), 2);
        assert_eq!(released[0].seq, 1);
        assert_eq!(released[0].committer, ClientId(1));
        assert_eq!(released[1].seq, 2);
        assert_eq!(released[1].committer, ClientId(2));
        assert_eq!(rig.server.broadcast_count(), 2);
    }

    #[test]
    fn stale_count_window_repeats_already_broadcast_entries() {
        let mut rig = Rig::new(2, Workload::Counter);
        // Client 2 runs a full operation.
        let i2 = rig.client(ClientId(2)).invoke(Operation::Add(5)).unwrap();
        let r2 = rig.server.on_invoke(ClientId(2), &i2);
        let crate::client::ReplyOutcome::Committed { commit, .. } =
            rig.client(ClientId(2)).on_reply(&r2)
        else {
            panic!("no commit");
        };
        let broadcasts = rig.server.on_commit(ClientId(2), &commit);
        assert_eq!(broadcasts.len(), 1);

        // Client 1 invoked before seeing that broadcast, so its message
        // carries confirmed = 0 and the window reaches back to position
        // 1, repeating the already-broadcast add(5) ahead of the new
        // invocation.
        let i1 = rig.client(ClientId(1)).invoke(Operation::Add(1)).unwrap();
        assert_eq!(i1.confirmed, 0);
        let r1 = rig.server.on_invoke(ClientId(1), &i1);
        assert_eq!(r1.window.len(), 2);
        assert_eq!(r1.window[0].op, Operation::Add(5));
        assert_eq!(r1.window[1].op, Operation::Add(1));

        // On the client's queue the broadcast precedes the reply, so the
        // repeated entry lands at an already-confirmed position and only
        // cross-checks the recorded chain; add(1) still commits next.
        for b in broadcasts {
            rig.client(ClientId(1)).on_broadcast(&b);
            rig.client(ClientId(2)).on_broadcast(&b);
        }
        let outcome = rig.client(ClientId(1)).on_reply(&r1);
        let crate::client::ReplyOutcome::Committed { commit, .. } = outcome else {
            panic!("stale-count invocation failed: {outcome:?}");
        };
        assert_eq!(commit.seq, 2);
        for b in rig.server.on_commit(ClientId(1), &commit) {
            rig.client(ClientId(1)).on_broadcast(&b);
            rig.client(ClientId(2)).on_broadcast(&b);
        }
        assert_eq!(rig.client(ClientId(1)).confirmed(), 2);
        assert_eq!(
            rig.client(ClientId(1)).status_digest(),
            rig.client(ClientId(2)).status_digest()
        );
    }

    #[test]
    fn later_commit_for_same_seq_wins_while_held() {
        let mut rig = Rig::new(3, Workload::Counter);
        let i1 = rig.client(ClientId(1)).invoke(Operation::Add(1)).unwrap();
        let r1 = rig.server.on_invoke(ClientId(1), &i1);
        let i2 = rig.client(ClientId(2)).invoke(Operation::Add(2)).unwrap();
        let r2 = rig.server.on_invoke(ClientId(2), &i2);

        let crate::client::ReplyOutcome::Committed { commit: c2, .. } =
            rig.client(ClientId(2)).on_reply(&r2)
        else {
            panic!("no commit");
        };
        // A second, different commit arrives for sequence 2 while it is
        // still held back.
        let mut forged = c2.clone();
        forged.status = Status::Abort;
        rig.server.on_commit(ClientId(2), &c2);
        rig.server.on_commit(ClientId(3), &forged);

        let crate::client::ReplyOutcome::Committed { commit: c1, .. } =
            rig.client(ClientId(1)).on_reply(&r1)
        else {
            panic!("no commit");
        };
        let released = rig.server.on_commit(ClientId(1), &c1);
        assert_eq!(released[1].status, Status::Abort);
        assert_eq!(released[1].committer, ClientId(3));
    }

    #[test]
    fn three_clients_converge_through_full_rounds() {
        let mut rig = Rig::new(3, Workload::Counter);
        rig.run_op(ClientId(1), Operation::Add(10));
        rig.run_op(ClientId(2), Operation::Dec(3));
        rig.run_op(ClientId(3), Operation::Add(1));
        rig.run_op(ClientId(2), Operation::Dec(8));
        let expected = crate::functionality::StateValue::Counter(0);
        for id in 1..=3 {
            let client = rig.client(ClientId(id));
            assert_eq!(client.state(), Some(&expected));
            assert_eq!(client.confirmed(), 4);
        }
        let digests: Vec<_> = (1..=3)
            .map(|id| rig.client(ClientId(id)).status_digest())
            .collect();
        assert_eq!(digests[0], digests[1]);
        assert_eq!(digests[1], digests[2]);
    }

    #[test]
    fn gc_keeps_entries_lagging_clients_may_still_request() {
        let mut rig = Rig::new(2, Workload::Counter);
        rig.server.gc = true;
        rig.run_op(ClientId(1), Operation::Add(1));
        // Client 2 has stated no confirmations yet, so its next window
        // may reach back to position 1; nothing can be dropped.
        assert_eq!(rig.server.invoked.len(), 1);
        rig.run_op(ClientId(2), Operation::Add(2));
        // Client 1's floor is still zero: entry 1 stays reachable.
        assert_eq!(rig.server.invoked.len(), 2);
        assert!(rig.server.committed.is_empty());
        rig.run_op(ClientId(1), Operation::Add(3));
        // That invocation stated confirmed = 2, lifting the smallest
        // floor to client 2's count of 1 and releasing entry 1.
        assert!(!rig.server.invoked.contains_key(&1));
        assert!(rig.server.invoked.contains_key(&2));
        assert_eq!(rig.client(ClientId(2)).state(), Some(&crate::functionality::StateValue::Counter(6)));
    }
}
