//! Deterministic discrete-event simulation. Clients and a server (or an
//! adversary posing as one) exchange messages over per-pair FIFO
//! channels; a seeded scheduler picks which channel delivers next, script
//! drivers feed clients their operations, and everything that happens is
//! recorded as a trace that can be replayed bit-for-bit.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::adversary::AdversarySpec;
use crate::client::{BroadcastOutcome, Client, HaltReason, ReplyOutcome};
use crate::crypto::{CryptoKind, Digest};
use crate::functionality::{Operation, Response, StateValue, Status, Workload};
use crate::wire::Message;
use crate::ClientId;

/// A message producer standing in for the server side of every
/// conversation: the honest sequencer or an adversary wrapping it.
/// Returned messages are addressed explicitly and enqueued in order.
pub trait ServerBehavior {
    fn handle(&mut self, from: ClientId, msg: Message) -> Vec<(ClientId, Message)>;
}

/// The correct server lifted into the behavior interface: replies go to
/// the requester, released broadcasts fan out to every client.
pub struct HonestServer {
    server: crate::server::Server,
    clients: Vec<ClientId>,
}

impl HonestServer {
    pub fn new(server: crate::server::Server, clients: Vec<ClientId>) -> Self {
        HonestServer { server, clients }
    }
}

impl ServerBehavior for HonestServer {
    fn handle(&mut self, from: ClientId, msg: Message) -> Vec<(ClientId, Message)> {
        match msg {
            Message::Invoke(m) => {
                vec![(from, Message::Reply(self.server.on_invoke(from, &m)))]
            }
            Message::Commit(m) => {
                let mut out = Vec::new();
                for b in self.server.on_commit(from, &m) {
                    for &c in &self.clients {
                        out.push((c, Message::Broadcast(b.clone())));
                    }
                }
                out
            }
            _ => Vec::new(),
        }
    }
}

/// One step of a client's script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptStep {
    /// Invoke this operation once the previous one has completed.
    Op(Operation),
    /// Block until the server has received this many invocations in
    /// total, across all clients.
    WaitServerInvoked(u64),
    /// Block until every client has confirmed at least this many
    /// operations. Chaining these serializes a multi-client schedule.
    WaitAllConfirmed(u64),
    /// Freeze this client permanently: the driver stops and queued
    /// messages are never delivered to it, even for an operation still in
    /// flight. Models a crashed or unboundedly slow client.
    Stall,
}

pub type Script = Vec<ScriptStep>;

fn default_event_cap() -> u64 {
    200_000
}

/// Everything that determines a run. Two runs of the same scenario
/// produce identical traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub clients: u64,
    pub workload: Workload,
    #[serde(default)]
    pub authstore: bool,
    #[serde(default)]
    pub crypto: CryptoKind,
    pub seed: u64,
    #[serde(default)]
    pub gc: bool,
    #[serde(default)]
    pub adversary: AdversarySpec,
    pub scripts: Vec<Script>,
    #[serde(default = "default_event_cap")]
    pub event_cap: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Actor {
    Server,
    Client(ClientId),
}

impl std::fmt::Display for Actor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Actor::Server => f.write_str("server"),
            Actor::Client(c) => write!(f, "c{}", c.0),
        }
    }
}

impl Serialize for Actor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Actor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        if text == "server" {
            return Ok(Actor::Server);
        }
        text.strip_prefix('c')
            .and_then(|n| n.parse().ok())
            .map(|n| Actor::Client(ClientId(n)))
            .ok_or_else(|| serde::de::Error::custom(format!("unknown actor {text:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Invoke,
    Reply,
    Commit,
    Broadcast,
}

fn message_kind(msg: &Message) -> MessageKind {
    match msg {
        Message::Invoke(_) => MessageKind::Invoke,
        Message::Reply(_) => MessageKind::Reply,
        Message::Commit(_) => MessageKind::Commit,
        Message::Broadcast(_) => MessageKind::Broadcast,
    }
}

fn message_seq(msg: &Message) -> Option<u64> {
    match msg {
        Message::Commit(m) => Some(m.seq),
        Message::Broadcast(m) => Some(m.seq),
        _ => None,
    }
}

/// A pending-window entry as promised to a committing client, with the
/// sequence number it was shown at.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowEntry {
    pub seq: u64,
    pub client: ClientId,
    pub op: Operation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventBody {
    /// A client sent an invocation.
    Invoke {
        client: ClientId,
        op: Operation,
        confirmed: u64,
    },
    /// The server side sent a reply.
    Reply { to: ClientId, window_len: u64 },
    /// A client committed its operation. `window` is the promised order
    /// the commit is based on, starting right after `base_confirmed`.
    Commit {
        client: ClientId,
        op: Operation,
        seq: u64,
        status: Status,
        base_confirmed: u64,
        window: Vec<WindowEntry>,
    },
    /// The server side sent a broadcast to one client.
    Broadcast {
        to: ClientId,
        op: Operation,
        seq: u64,
        committer: ClientId,
        status: Status,
    },
    /// A queued message reached its receiver's handler.
    Deliver {
        from: Actor,
        to: Actor,
        message: MessageKind,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        seq: Option<u64>,
    },
    /// A client validated a broadcast and advanced its confirmed prefix.
    Confirm {
        client: ClientId,
        seq: u64,
        op: Operation,
        committer: ClientId,
        applied: bool,
        /// Store digest after this confirmation, in authenticated-store
        /// runs.
        #[serde(skip_serializing_if = "Option::is_none", default)]
        store_digest: Option<Digest>,
    },
    /// A client delivered an operation's result to its caller.
    Output {
        client: ClientId,
        op: Operation,
        response: Response,
        status: Status,
    },
    /// A client detected server misbehavior and stopped.
    Halt { client: ClientId, reason: HaltReason },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub index: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

/// Per-client end-of-run snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSummary {
    pub client: ClientId,
    pub invoked: u64,
    pub completed: u64,
    pub aborted: u64,
    pub confirmed: u64,
    pub halt: Option<HaltReason>,
    pub stalled: bool,
    /// Hash-chain entry at the confirmed position; equal across clients
    /// exactly when they were shown the same prefix.
    pub chain_digest: Digest,
    pub final_state: Option<StateValue>,
    pub store_digest: Option<Digest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub scenario: Scenario,
    pub events: Vec<TraceEvent>,
    pub summaries: Vec<ClientSummary>,
}

/// One client operation as seen by an external observer: its invocation,
/// and its response if one was delivered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryOp {
    pub client: ClientId,
    pub op: Operation,
    pub invoked_at: u64,
    pub completed_at: Option<u64>,
    pub response: Option<Response>,
    pub status: Option<Status>,
}

impl Trace {
    /// The history: invocation and response events only, in trace order.
    pub fn history(&self) -> Vec<HistoryOp> {
        let mut ops: Vec<HistoryOp> = Vec::new();
        let mut open: BTreeMap<ClientId, usize> = BTreeMap::new();
        for ev in &self.events {
            match &ev.body {
                EventBody::Invoke { client, op, .. } => {
                    let prev = open.insert(*client, ops.len());
                    debug_assert!(
                        prev.map(|p| ops[p].completed_at.is_some()).unwrap_or(true),
                        "history not well formed: {client} invoked twice"
                    );
                    ops.push(HistoryOp {
                        client: *client,
                        op: op.clone(),
                        invoked_at: ev.index,
                        completed_at: None,
                        response: None,
                        status: None,
                    });
                }
                EventBody::Output {
                    client,
                    response,
                    status,
                    ..
                } => {
                    let slot = open.get(client).copied().expect("output without invoke");
                    ops[slot].completed_at = Some(ev.index);
                    ops[slot].response = Some(response.clone());
                    ops[slot].status = Some(*status);
                }
                _ => {}
            }
        }
        ops
    }

    pub fn halted(&self) -> impl Iterator<Item = (ClientId, HaltReason)> + '_ {
        self.summaries
            .iter()
            .filter_map(|s| s.halt.map(|r| (s.client, r)))
    }

    /// Writes the trace as line-delimited JSON: a scenario header line,
    /// one event per line, and a summary footer line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Header<'a> {
            scenario: &'a Scenario,
        }
        #[derive(Serialize)]
        struct Footer<'a> {
            summaries: &'a [ClientSummary],
        }
        serde_json::to_writer(&mut w, &Header { scenario: &self.scenario })?;
        w.write_all(b"\n")?;
        for ev in &self.events {
            serde_json::to_writer(&mut w, ev)?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &Footer { summaries: &self.summaries })?;
        w.write_all(b"\n")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trace, TraceIoError> {
        #[derive(Deserialize)]
        struct Header {
            scenario: Scenario,
        }
        #[derive(Deserialize)]
        struct Footer {
            summaries: Vec<ClientSummary>,
        }
        let mut lines = r.lines();
        let first = lines.next().ok_or(TraceIoError::MissingScenario)??;
        let header: Header = serde_json::from_str(&first)?;
        let mut events = Vec::new();
        let mut summaries = None;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if line.contains("\"summaries\"") {
                if let Ok(footer) = serde_json::from_str::<Footer>(&line) {
                    summaries = Some(footer.summaries);
                    continue;
                }
            }
            events.push(serde_json::from_str(&line)?);
        }
        Ok(Trace {
            scenario: header.scenario,
            events,
            summaries: summaries.ok_or(TraceIoError::MissingSummaries)?,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceIoError {
    #[error("trace i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("trace file is missing the scenario header line")]
    MissingScenario,
    #[error("trace file is missing the summary footer line")]
    MissingSummaries,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("scenario invalid: {0}")]
    InvalidScenario(String),
    #[error("event cap {cap} exceeded; the scenario does not terminate")]
    EventCapExceeded { cap: u64 },
    #[error("replay diverged from the recorded trace at event {index}")]
    ReplayMismatch { index: u64 },
}

struct ClientRuntime {
    machine: Client,
    script: VecDeque<ScriptStep>,
    stalled: bool,
    invoked: u64,
    completed: u64,
    aborted: u64,
}

struct Sim {
    behavior: Box<dyn ServerBehavior>,
    clients: Vec<ClientRuntime>,
    channels: BTreeMap<(Actor, Actor), VecDeque<Message>>,
    events: Vec<TraceEvent>,
    event_cap: u64,
    rng: StdRng,
    rr_last: Option<(Actor, Actor)>,
    step: u64,
    server_invoked: u64,
}

fn validate(scenario: &Scenario) -> Result<(), SimError> {
    let fail = |msg: String| Err(SimError::InvalidScenario(msg));
    if scenario.clients == 0 {
        return fail("need at least one client".into());
    }
    if scenario.scripts.len() != scenario.clients as usize {
        return fail(format!(
            "{} scripts for {} clients",
            scenario.scripts.len(),
            scenario.clients
        ));
    }
    if scenario.authstore && scenario.workload != Workload::Kv {
        return fail("the authenticated store requires the kv workload".into());
    }
    if scenario.event_cap == 0 {
        return fail("event cap must be positive".into());
    }
    for (i, script) in scenario.scripts.iter().enumerate() {
        for step in script {
            if let ScriptStep::Op(op) = step {
                let matches = match scenario.workload {
                    Workload::Counter => {
                        matches!(op, Operation::Add(_) | Operation::Dec(_))
                    }
                    Workload::Kv => matches!(op, Operation::Get(_) | Operation::Put(_, _)),
                };
                if !matches {
                    return fail(format!(
                        "client {} scripts {op} against the {:?} workload",
                        i + 1,
                        scenario.workload
                    ));
                }
            }
        }
    }
    Ok(())
}

pub fn run(scenario: &Scenario) -> Result<Trace, SimError> {
    validate(scenario)?;
    let backend = scenario.crypto.build(scenario.clients, scenario.seed);
    let behavior = crate::adversary::build(scenario, Arc::clone(&backend))?;
    let clients = (1..=scenario.clients)
        .map(|i| ClientRuntime {
            machine: Client::new(
                ClientId(i),
                scenario.workload,
                scenario.authstore,
                scenario.gc,
                Arc::clone(&backend),
            ),
            script: scenario.scripts[(i - 1) as usize].iter().cloned().collect(),
            stalled: false,
            invoked: 0,
            completed: 0,
            aborted: 0,
        })
        .collect();
    let mut sim = Sim {
        behavior,
        clients,
        channels: BTreeMap::new(),
        events: Vec::new(),
        event_cap: scenario.event_cap,
        rng: StdRng::seed_from_u64(scenario.seed),
        rr_last: None,
        step: 0,
        server_invoked: 0,
    };
    sim.run_loop()?;
    Ok(Trace {
        scenario: scenario.clone(),
        summaries: sim.summaries(),
        events: sim.events,
    })
}

/// Re-runs a trace's scenario and checks the result matches event for
/// event; any divergence is a determinism bug.
pub fn replay(trace: &Trace) -> Result<Trace, SimError> {
    let second = run(&trace.scenario)?;
    if second.events != trace.events || second.summaries != trace.summaries {
        let index = second
            .events
            .iter()
            .zip(&trace.events)
            .position(|(a, b)| a != b)
            .unwrap_or_else(|| trace.events.len().min(second.events.len()))
            as u64;
        return Err(SimError::ReplayMismatch { index });
    }
    Ok(second)
}

impl Sim {
    fn run_loop(&mut self) -> Result<(), SimError> {
        loop {
            self.poll_drivers()?;
            let keys = self.deliverable();
            if keys.is_empty() {
                break;
            }
            let key = self.pick(&keys);
            self.deliver(key)?;
        }
        Ok(())
    }

    /// Channels with something to deliver to a receiver that will take
    /// it. A stalled client's queue is frozen with the client.
    fn deliverable(&self) -> Vec<(Actor, Actor)> {
        self.channels
            .iter()
            .filter(|((_, to), queue)| {
                if queue.is_empty() {
                    return false;
                }
                match to {
                    Actor::Server => true,
                    Actor::Client(c) => !self.clients[(c.0 - 1) as usize].stalled,
                }
            })
            .map(|(key, _)| *key)
            .collect()
    }

    /// Alternates a seeded random choice with a round-robin sweep. The
    /// sweep guarantees every queued message is delivered eventually no
    /// matter how the random picks fall.
    fn pick(&mut self, keys: &[(Actor, Actor)]) -> (Actor, Actor) {
        self.step += 1;
        let chosen = if self.step % 2 == 1 {
            keys[self.rng.random_range(0..keys.len())]
        } else {
            match self.rr_last {
                Some(last) => *keys.iter().find(|k| **k > last).unwrap_or(&keys[0]),
                None => keys[0],
            }
        };
        self.rr_last = Some(chosen);
        chosen
    }

    fn push_event(&mut self, body: EventBody) -> Result<(), SimError> {
        let index = self.events.len() as u64;
        if index >= self.event_cap {
            return Err(SimError::EventCapExceeded { cap: self.event_cap });
        }
        self.events.push(TraceEvent { index, body });
        Ok(())
    }

    fn poll_drivers(&mut self) -> Result<(), SimError> {
        for idx in 0..self.clients.len() {
            loop {
                let rt = &self.clients[idx];
                if rt.stalled || rt.machine.halt_reason().is_some() {
                    break;
                }
                match rt.script.front() {
                    None => break,
                    Some(ScriptStep::Stall) => {
                        self.clients[idx].script.pop_front();
                        self.clients[idx].stalled = true;
                        break;
                    }
                    Some(ScriptStep::WaitServerInvoked(k)) => {
                        if self.server_invoked >= *k {
                            self.clients[idx].script.pop_front();
                        } else {
                            break;
                        }
                    }
                    Some(ScriptStep::WaitAllConfirmed(k)) => {
                        let k = *k;
                        if self.clients.iter().all(|c| c.machine.confirmed() >= k) {
                            self.clients[idx].script.pop_front();
                        } else {
                            break;
                        }
                    }
                    Some(ScriptStep::Op(_)) => {
                        if rt.machine.in_flight().is_some() {
                            break;
                        }
                        let Some(ScriptStep::Op(op)) = self.clients[idx].script.pop_front()
                        else {
                            unreachable!()
                        };
                        let id = ClientId(idx as u64 + 1);
                        let msg = self.clients[idx]
                            .machine
                            .invoke(op.clone())
                            .expect("halted clients are filtered above");
                        self.push_event(EventBody::Invoke {
                            client: id,
                            op,
                            confirmed: msg.confirmed,
                        })?;
                        self.clients[idx].invoked += 1;
                        self.channels
                            .entry((Actor::Client(id), Actor::Server))
                            .or_default()
                            .push_back(Message::Invoke(msg));
                        break;
                    }
                }
            }
        }
        Ok(())
    }

    fn record_send(&mut self, to: ClientId, msg: &Message) -> Result<(), SimError> {
        match msg {
            Message::Reply(m) => self.push_event(EventBody::Reply {
                to,
                window_len: m.window.len() as u64,
            }),
            Message::Broadcast(m) => self.push_event(EventBody::Broadcast {
                to,
                op: m.op.clone(),
                seq: m.seq,
                committer: m.committer,
                status: m.status,
            }),
            // The protocol has no server-to-client invokes or commits;
            // if an adversary fabricates one it still shows up as a
            // deliver event.
            _ => Ok(()),
        }
    }

    fn deliver(&mut self, key: (Actor, Actor)) -> Result<(), SimError> {
        let msg = self
            .channels
            .get_mut(&key)
            .and_then(|q| q.pop_front())
            .expect("picked channel is nonempty");
        self.push_event(EventBody::Deliver {
            from: key.0,
            to: key.1,
            message: message_kind(&msg),
            seq: message_seq(&msg),
        })?;
        match key.1 {
            Actor::Server => {
                if matches!(msg, Message::Invoke(_)) {
                    self.server_invoked += 1;
                }
                let Actor::Client(from) = key.0 else {
                    unreachable!("the server does not message itself")
                };
                let out = self.behavior.handle(from, msg);
                for (to, m) in out {
                    self.record_send(to, &m)?;
                    self.channels
                        .entry((Actor::Server, Actor::Client(to)))
                        .or_default()
                        .push_back(m);
                }
            }
            Actor::Client(id) => {
                let idx = (id.0 - 1) as usize;
                match msg {
                    Message::Reply(reply) => {
                        let outcome = self.clients[idx].machine.on_reply(&reply);
                        match outcome {
                            ReplyOutcome::Committed {
                                commit,
                                response,
                                status,
                            } => {
                                // The committer numbered the window from the
                                // confirmation count sent with its invocation;
                                // recover that anchor from the commit.
                                let base = commit.seq - reply.window.len() as u64;
                                let window = reply
                                    .window
                                    .iter()
                                    .enumerate()
                                    .map(|(k, e)| WindowEntry {
                                        seq: base + 1 + k as u64,
                                        client: e.client,
                                        op: e.op.clone(),
                                    })
                                    .collect();
                                self.push_event(EventBody::Commit {
                                    client: id,
                                    op: commit.op.clone(),
                                    seq: commit.seq,
                                    status,
                                    base_confirmed: base,
                                    window,
                                })?;
                                self.push_event(EventBody::Output {
                                    client: id,
                                    op: commit.op.clone(),
                                    response,
                                    status,
                                })?;
                                self.clients[idx].completed += 1;
                                if status == Status::Abort {
                                    self.clients[idx].aborted += 1;
                                }
                                self.channels
                                    .entry((Actor::Client(id), Actor::Server))
                                    .or_default()
                                    .push_back(Message::Commit(commit));
                            }
                            ReplyOutcome::Halted(reason) => {
                                self.push_event(EventBody::Halt { client: id, reason })?;
                            }
                            ReplyOutcome::Ignored => {}
                        }
                    }
                    Message::Broadcast(b) => {
                        let outcome = self.clients[idx].machine.on_broadcast(&b);
                        match outcome {
                            BroadcastOutcome::Confirmed {
                                seq,
                                op,
                                committer,
                                applied,
                                store_digest,
                            } => {
                                self.push_event(EventBody::Confirm {
                                    client: id,
                                    seq,
                                    op,
                                    committer,
                                    applied,
                                    store_digest,
                                })?;
                            }
                            BroadcastOutcome::Halted(reason) => {
                                self.push_event(EventBody::Halt { client: id, reason })?;
                            }
                            BroadcastOutcome::Ignored => {}
                        }
                    }
                    // Clients only understand replies and broadcasts.
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn summaries(&self) -> Vec<ClientSummary> {
        self.clients
            .iter()
            .map(|rt| {
                let (confirmed, chain_digest) = rt.machine.status_digest();
                ClientSummary {
                    client: rt.machine.id(),
                    invoked: rt.invoked,
                    completed: rt.completed,
                    aborted: rt.aborted,
                    confirmed,
                    halt: rt.machine.halt_reason(),
                    stalled: rt.stalled,
                    chain_digest,
                    final_state: rt.machine.state().cloned(),
                    store_digest: rt.machine.store_digest_at(confirmed).cloned(),
                }
            })
            .collect()
    }
}
