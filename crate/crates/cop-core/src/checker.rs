//! Consistency deciders over observed histories and traces.
//!
//! `check_linearizable` and `check_fork_linearizable` are exhaustive
//! oracles over small histories: they search every admissible
//! serialization (or per-client family of serializations) and either
//! produce a witness or prove by exhaustion that none exists.
//!
//! `build_views_whitebox` reads a full trace and derives each client's
//! view directly from protocol bookkeeping: the confirmed prefix some
//! client certified for it plus its own uncommunicated committed tail.
//! `verify_view_conditions` then checks those views satisfy the three
//! fork-linearizability conditions, without any searching.
//!
//! `check_promised_prefixes` and `check_confirm_realtime` assert two
//! trace invariants underpinning the whitebox construction: a confirmed
//! prefix always equals the order promised to the committer, and
//! confirmation order never contradicts real time.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::functionality::{Operation, Response, StateValue, Status, Workload};
use crate::simnet::{EventBody, HistoryOp, Trace, WindowEntry};
use crate::ClientId;

/// Ceiling on complete operations for the exhaustive searches.
pub const EXHAUSTIVE_OP_BOUND: usize = 10;

/// Ceiling on search nodes before the checker gives up, to fail loudly
/// on pathological inputs instead of hanging.
const SEARCH_NODE_CAP: u64 = 20_000_000;

#[derive(Debug, thiserror::Error)]
pub enum CheckError {
    #[error("history has {complete} complete operations; the exhaustive checker is bounded at {bound}")]
    TooLarge { complete: usize, bound: usize },
    #[error("search exceeded {0} nodes without concluding")]
    Exploded(u64),
    #[error("trace is not analyzable: {0}")]
    MalformedTrace(String),
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub ok: bool,
    pub evidence: Evidence,
}

#[derive(Debug, Clone)]
pub enum Evidence {
    /// History indices in a satisfying serialization order.
    Order(Vec<usize>),
    /// A satisfying serialization per client, as history indices.
    ClientOrders(Vec<(ClientId, Vec<usize>)>),
    /// Fixed checks all passed; how many assertions ran.
    Checked(usize),
    /// The whole search space was explored without finding a witness.
    Exhausted { explored: u64 },
    /// The first failed assertion.
    Violation(String),
}

impl Verdict {
    fn pass(evidence: Evidence) -> Self {
        Verdict { ok: true, evidence }
    }

    fn fail(evidence: Evidence) -> Self {
        Verdict { ok: false, evidence }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.ok, &self.evidence) {
            (true, Evidence::Order(order)) => write!(f, "pass (serialization {order:?})"),
            (true, Evidence::ClientOrders(_)) => write!(f, "pass (per-client views found)"),
            (true, Evidence::Checked(n)) => write!(f, "pass ({n} assertions)"),
            (true, _) => write!(f, "pass"),
            (false, Evidence::Exhausted { explored }) => {
                write!(f, "fail (no witness in {explored} explored orders)")
            }
            (false, Evidence::Violation(v)) => write!(f, "fail ({v})"),
            (false, _) => write!(f, "fail"),
        }
    }
}

/// Is `a` before `b` in real time: did `a` complete before `b` was
/// invoked? Incomplete operations never precede anything.
fn precedes(a: &HistoryOp, b: &HistoryOp) -> bool {
    a.completed_at.is_some_and(|done| done < b.invoked_at)
}

fn bound_check(history: &[HistoryOp]) -> Result<(), CheckError> {
    let complete = history.iter().filter(|h| h.response.is_some()).count();
    if complete > EXHAUSTIVE_OP_BOUND {
        return Err(CheckError::TooLarge {
            complete,
            bound: EXHAUSTIVE_OP_BOUND,
        });
    }
    Ok(())
}

struct LinSearch<'a> {
    history: &'a [HistoryOp],
    complete_mask: u64,
    abortable: bool,
    memo: HashSet<(u64, StateValue)>,
    explored: u64,
}

impl<'a> LinSearch<'a> {
    fn dfs(
        &mut self,
        scheduled: u64,
        state: &StateValue,
        order: &mut Vec<usize>,
    ) -> Result<bool, CheckError> {
        if scheduled & self.complete_mask == self.complete_mask {
            return Ok(true);
        }
        if !self.memo.insert((scheduled, state.clone())) {
            return Ok(false);
        }
        self.explored += 1;
        if self.explored > SEARCH_NODE_CAP {
            return Err(CheckError::Exploded(SEARCH_NODE_CAP));
        }
        for idx in 0..self.history.len() {
            if scheduled & (1 << idx) != 0 {
                continue;
            }
            let op = &self.history[idx];
            // Real-time order: anything that completed before this op
            // was invoked must already be in the serialization.
            let blocked = self.history.iter().enumerate().any(|(j, other)| {
                j != idx && scheduled & (1 << j) == 0 && precedes(other, op)
            });
            if blocked {
                continue;
            }
            let next_mask = scheduled | (1 << idx);
            order.push(idx);
            let found = match (&op.response, op.status) {
                // An observed abort serializes as a no-op, allowed only
                // under the abortable specification.
                (Some(_), Some(Status::Abort)) => {
                    self.abortable && self.dfs(next_mask, state, order)?
                }
                (Some(expected), _) => {
                    let (next_state, produced) = state.apply(&op.op);
                    produced == *expected && self.dfs(next_mask, &next_state, order)?
                }
                // Including an incomplete operation: it takes effect, and
                // no observer constrains its response.
                (None, _) => {
                    let (next_state, _) = state.apply(&op.op);
                    self.dfs(next_mask, &next_state, order)?
                }
            };
            if found {
                return Ok(true);
            }
            order.pop();
        }
        Ok(false)
    }
}

/// Exhaustively decides whether the history linearizes: some real-time
/// preserving serialization of all complete operations (plus any subset
/// of incomplete ones) reproduces every observed response. With
/// `abortable`, operations observed as aborted serialize as no-ops;
/// without it they make the history unexplainable.
pub fn check_linearizable(
    history: &[HistoryOp],
    workload: Workload,
    abortable: bool,
) -> Result<Verdict, CheckError> {
    bound_check(history)?;
    let complete_mask = history
        .iter()
        .enumerate()
        .filter(|(_, h)| h.response.is_some())
        .fold(0u64, |m, (i, _)| m | (1 << i));
    let mut search = LinSearch {
        history,
        complete_mask,
        abortable,
        memo: HashSet::new(),
        explored: 0,
    };
    let mut order = Vec::new();
    if search.dfs(0, &workload.initial_state(), &mut order)? {
        Ok(Verdict::pass(Evidence::Order(order)))
    } else {
        Ok(Verdict::fail(Evidence::Exhausted {
            explored: search.explored,
        }))
    }
}

/// Enumerates, for one client, every identity sequence that could be its
/// view: all its complete operations appear with their observed
/// responses, any other operation may appear applied or as a no-op, and
/// real-time order holds within the sequence.
struct ViewEnum<'a> {
    history: &'a [HistoryOp],
    client: ClientId,
    own_mask: u64,
    candidates: BTreeSet<Vec<usize>>,
    explored: u64,
}

impl<'a> ViewEnum<'a> {
    fn dfs(
        &mut self,
        used: u64,
        own_done: u64,
        state: &StateValue,
        seq: &mut Vec<usize>,
    ) -> Result<(), CheckError> {
        if own_done == self.own_mask {
            self.candidates.insert(seq.clone());
            return Ok(());
        }
        self.explored += 1;
        if self.explored > SEARCH_NODE_CAP {
            return Err(CheckError::Exploded(SEARCH_NODE_CAP));
        }
        for idx in 0..self.history.len() {
            if used & (1 << idx) != 0 {
                continue;
            }
            let op = &self.history[idx];
            // Appending may not put this op after one it precedes.
            let misordered = seq
                .iter()
                .any(|&placed| precedes(op, &self.history[placed]));
            if misordered {
                continue;
            }
            let own_complete = op.client == self.client && op.response.is_some();
            let next_used = used | (1 << idx);
            let next_own = if own_complete {
                own_done | (1 << idx)
            } else {
                own_done
            };
            seq.push(idx);
            if own_complete {
                match op.status {
                    Some(Status::Abort) => {
                        // The client observed an abort: a no-op here.
                        self.dfs(next_used, next_own, state, seq)?;
                    }
                    _ => {
                        let (next_state, produced) = state.apply(&op.op);
                        if Some(&produced) == op.response.as_ref() {
                            self.dfs(next_used, next_own, &next_state, seq)?;
                        }
                    }
                }
            } else {
                // Nobody in this view observed the response: the op may
                // have taken effect or aborted.
                let (next_state, _) = state.apply(&op.op);
                self.dfs(next_used, next_own, &next_state, seq)?;
                self.dfs(next_used, next_own, state, seq)?;
            }
            seq.pop();
        }
        Ok(())
    }
}

/// The prefix-equality condition between two views: every operation they
/// share must be preceded by identical prefixes in both.
fn prefixes_compatible(a: &[usize], b: &[usize]) -> bool {
    let pos_b: BTreeMap<usize, usize> = b.iter().enumerate().map(|(p, &op)| (op, p)).collect();
    for (pa, &op) in a.iter().enumerate() {
        if let Some(&pb) = pos_b.get(&op) {
            if pa != pb || a[..pa] != b[..pb] {
                return false;
            }
        }
    }
    true
}

/// Exhaustively decides fork-linearizability: does every client have a
/// view (a serialization explaining its own responses) such that any
/// operation shared between two views carries identical prefixes in
/// both?
pub fn check_fork_linearizable(
    history: &[HistoryOp],
    workload: Workload,
) -> Result<Verdict, CheckError> {
    bound_check(history)?;
    // A single shared serialization is the common case and the cheap one.
    if let Verdict {
        ok: true,
        evidence: Evidence::Order(order),
    } = check_linearizable(history, workload, true)?
    {
        let clients: BTreeSet<ClientId> = history.iter().map(|h| h.client).collect();
        return Ok(Verdict::pass(Evidence::ClientOrders(
            clients.into_iter().map(|c| (c, order.clone())).collect(),
        )));
    }

    let clients: Vec<ClientId> = {
        let set: BTreeSet<ClientId> = history.iter().map(|h| h.client).collect();
        set.into_iter().collect()
    };
    let mut per_client: Vec<Vec<Vec<usize>>> = Vec::new();
    for &client in &clients {
        let own_mask = history
            .iter()
            .enumerate()
            .filter(|(_, h)| h.client == client && h.response.is_some())
            .fold(0u64, |m, (i, _)| m | (1 << i));
        let mut en = ViewEnum {
            history,
            client,
            own_mask,
            candidates: BTreeSet::new(),
            explored: 0,
        };
        en.dfs(0, 0, &workload.initial_state(), &mut Vec::new())?;
        if en.candidates.is_empty() {
            return Ok(Verdict::fail(Evidence::Violation(format!(
                "no serialization explains {client}'s responses"
            ))));
        }
        per_client.push(en.candidates.into_iter().collect());
    }

    fn assign(per_client: &[Vec<Vec<usize>>], chosen: &mut Vec<Vec<usize>>) -> bool {
        let level = chosen.len();
        if level == per_client.len() {
            return true;
        }
        for candidate in &per_client[level] {
            if chosen.iter().all(|c| prefixes_compatible(c, candidate)) {
                chosen.push(candidate.clone());
                if assign(per_client, chosen) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }

    let mut chosen = Vec::new();
    if assign(&per_client, &mut chosen) {
        Ok(Verdict::pass(Evidence::ClientOrders(
            clients.into_iter().zip(chosen).collect(),
        )))
    } else {
        let explored = per_client.iter().map(|c| c.len() as u64).sum();
        Ok(Verdict::fail(Evidence::Exhausted { explored }))
    }
}

/// One operation inside a view: who committed it, at which sequence
/// number, and whether it took effect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewOp {
    pub client: ClientId,
    pub seq: u64,
    pub op: Operation,
    pub applied: bool,
}

/// A client's view: the certified confirmed prefix (alpha) followed by
/// its own committed-but-uncommunicated tail (beta).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct View {
    pub client: ClientId,
    pub ops: Vec<ViewOp>,
    pub alpha_len: usize,
}

impl View {
    pub fn alpha(&self) -> &[ViewOp] {
        &self.ops[..self.alpha_len]
    }

    pub fn beta(&self) -> &[ViewOp] {
        &self.ops[self.alpha_len..]
    }
}

/// Per-client protocol bookkeeping pulled out of a trace.
struct TraceIndex {
    /// Commit events per client, in order: (seq, op, status).
    commits: BTreeMap<ClientId, Vec<(u64, Operation, Status)>>,
    /// Confirm events per client, in order: (seq, op, committer, applied).
    confirms: BTreeMap<ClientId, Vec<(u64, Operation, ClientId, bool)>>,
    /// Promised window and confirmed base per commit, keyed by
    /// (committer, seq).
    promises: BTreeMap<(ClientId, u64), (u64, Vec<WindowEntry>)>,
}

impl TraceIndex {
    fn build(trace: &Trace) -> Self {
        let mut commits: BTreeMap<ClientId, Vec<(u64, Operation, Status)>> = BTreeMap::new();
        let mut confirms: BTreeMap<ClientId, Vec<(u64, Operation, ClientId, bool)>> =
            BTreeMap::new();
        let mut promises = BTreeMap::new();
        for ev in &trace.events {
            match &ev.body {
                EventBody::Commit {
                    client,
                    op,
                    seq,
                    status,
                    base_confirmed,
                    window,
                } => {
                    commits
                        .entry(*client)
                        .or_default()
                        .push((*seq, op.clone(), *status));
                    promises.insert((*client, *seq), (*base_confirmed, window.clone()));
                }
                EventBody::Confirm {
                    client,
                    seq,
                    op,
                    committer,
                    applied,
                    ..
                } => {
                    confirms
                        .entry(*client)
                        .or_default()
                        .push((*seq, op.clone(), *committer, *applied));
                }
                _ => {}
            }
        }
        TraceIndex {
            commits,
            confirms,
            promises,
        }
    }
}

/// Builds each client's view from protocol internals. The anchor is the
/// client's committed operation with the highest sequence number that
/// any client confirmed; the confirmer's confirmed prefix up to that
/// point becomes alpha, and the client's later commits become beta. A
/// client whose commits nobody confirmed keeps its own confirmed prefix
/// as alpha.
pub fn build_views_whitebox(trace: &Trace) -> Result<Vec<View>, CheckError> {
    let index = TraceIndex::build(trace);
    let mut views = Vec::new();
    for client_n in 1..=trace.scenario.clients {
        let client = ClientId(client_n);
        let own_commits = index.commits.get(&client).cloned().unwrap_or_default();

        // The best-certified own commit: highest sequence number among
        // those appearing in anyone's confirm stream.
        let mut anchor: Option<(u64, ClientId)> = None;
        for (&confirmer, stream) in &index.confirms {
            for (seq, _, committer, _) in stream {
                if *committer == client
                    && own_commits.iter().any(|(s, _, _)| s == seq)
                    && anchor.map(|(best, _)| *seq > best).unwrap_or(true)
                {
                    anchor = Some((*seq, confirmer));
                }
            }
        }

        let (alpha_source, alpha_end) = match anchor {
            Some((seq, confirmer)) => (confirmer, seq),
            None => {
                let own = index.confirms.get(&client).map(Vec::as_slice).unwrap_or(&[]);
                (client, own.last().map(|(s, _, _, _)| *s).unwrap_or(0))
            }
        };
        let source_stream = index
            .confirms
            .get(&alpha_source)
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let alpha: Vec<ViewOp> = source_stream
            .iter()
            .take_while(|(seq, _, _, _)| *seq <= alpha_end)
            .map(|(seq, op, committer, applied)| ViewOp {
                client: *committer,
                seq: *seq,
                op: op.clone(),
                applied: *applied,
            })
            .collect();
        if alpha.last().map(|v| v.seq).unwrap_or(0) != alpha_end {
            return Err(CheckError::MalformedTrace(format!(
                "{alpha_source} confirmed up to {} but the view of {client} needs {alpha_end}",
                alpha.last().map(|v| v.seq).unwrap_or(0)
            )));
        }

        // Every own commit at or below the anchor must be certified in
        // alpha; the rest form the uncommunicated tail.
        let mut ops = alpha;
        let alpha_len = ops.len();
        for (seq, op, status) in &own_commits {
            if *seq <= alpha_end {
                let present = ops[..alpha_len]
                    .iter()
                    .any(|v| v.seq == *seq && v.client == client && v.op == *op);
                if !present {
                    return Err(CheckError::MalformedTrace(format!(
                        "{client} committed {op} at {seq} but the certified prefix disagrees"
                    )));
                }
            } else {
                ops.push(ViewOp {
                    client,
                    seq: *seq,
                    op: op.clone(),
                    applied: *status == Status::Success,
                });
            }
        }
        views.push(View {
            client,
            ops,
            alpha_len,
        });
    }
    Ok(views)
}

/// Checks the supplied views against the trace's history: each view
/// contains exactly its client's complete operations with matching
/// outcomes, replays legally under the abortable specification,
/// preserves real time, and shares identical prefixes with every other
/// view at every shared operation.
pub fn verify_view_conditions(views: &[View], trace: &Trace) -> Verdict {
    let history = trace.history();
    let index = TraceIndex::build(trace);
    let violation = |msg: String| Verdict::fail(Evidence::Violation(msg));

    // Complete history operations per client, in order, so the k-th
    // commit of a client pairs with its k-th completed operation.
    let mut complete: BTreeMap<ClientId, Vec<usize>> = BTreeMap::new();
    for (i, h) in history.iter().enumerate() {
        if h.response.is_some() {
            complete.entry(h.client).or_default().push(i);
        }
    }
    let locate = |vop: &ViewOp| -> Result<usize, String> {
        let commits = index
            .commits
            .get(&vop.client)
            .ok_or_else(|| format!("{} has no commits", vop.client))?;
        let rank = commits
            .iter()
            .position(|(s, _, _)| *s == vop.seq)
            .ok_or_else(|| format!("{} never committed sequence {}", vop.client, vop.seq))?;
        let slots = complete
            .get(&vop.client)
            .ok_or_else(|| format!("{} has no complete operations", vop.client))?;
        let idx = *slots
            .get(rank)
            .ok_or_else(|| format!("{} commit {} has no matching response", vop.client, vop.seq))?;
        if history[idx].op != vop.op {
            return Err(format!(
                "view lists {} at sequence {} where the history ran {}",
                vop.op, vop.seq, history[idx].op
            ));
        }
        Ok(idx)
    };

    let mut assertions = 0;
    let mut located: Vec<Vec<usize>> = Vec::new();
    for view in views {
        // Condition: the view is a view of the history at this client.
        let own_in_view: Vec<&ViewOp> =
            view.ops.iter().filter(|v| v.client == view.client).collect();
        let own_complete = complete.get(&view.client).cloned().unwrap_or_default();
        if own_in_view.len() != own_complete.len() {
            return violation(format!(
                "{} has {} complete operations but its view lists {}",
                view.client,
                own_complete.len(),
                own_in_view.len()
            ));
        }
        let mut indices = Vec::new();
        let mut state = trace.scenario.workload.initial_state();
        for vop in &view.ops {
            let idx = match locate(vop) {
                Ok(i) => i,
                Err(e) => return violation(e),
            };
            if indices.contains(&idx) {
                return violation(format!("{} appears twice in {}'s view", vop.op, view.client));
            }
            indices.push(idx);
            let h = &history[idx];
            if vop.client == view.client {
                let succeeded = h.status == Some(Status::Success);
                if vop.applied != succeeded {
                    return violation(format!(
                        "{}'s view marks {} applied={} against its own observation",
                        view.client, vop.op, vop.applied
                    ));
                }
            }
            if vop.applied {
                let (next, response) = state.apply(&vop.op);
                if vop.client == view.client && Some(&response) != h.response.as_ref() {
                    return violation(format!(
                        "replaying {}'s view produces {:?} for {}, observed {:?}",
                        view.client, response, vop.op, h.response
                    ));
                }
                state = next;
            } else if vop.client == view.client && h.response != Some(Response::Abort) {
                return violation(format!(
                    "{}'s view skips {} though it observed a response",
                    view.client, vop.op
                ));
            }
            assertions += 1;
        }
        // Condition: the view preserves real time.
        for a in 0..indices.len() {
            for b in (a + 1)..indices.len() {
                if precedes(&history[indices[b]], &history[indices[a]]) {
                    return violation(format!(
                        "{}'s view orders {} before {} against real time",
                        view.client,
                        history[indices[a]].op,
                        history[indices[b]].op
                    ));
                }
                assertions += 1;
            }
        }
        located.push(indices);
    }

    // Condition: no joining after a fork. Shared operations carry equal
    // prefixes, compared with their applied flags since those are part
    // of the announced order.
    let key = |v: &ViewOp| (v.client, v.seq, v.op.clone(), v.applied);
    for i in 0..views.len() {
        for j in (i + 1)..views.len() {
            let pos_j: BTreeMap<_, _> = views[j]
                .ops
                .iter()
                .enumerate()
                .map(|(p, v)| (key(v), p))
                .collect();
            for (pi, vop) in views[i].ops.iter().enumerate() {
                if let Some(&pj) = pos_j.get(&key(vop)) {
                    let prefix_i: Vec<_> = views[i].ops[..=pi].iter().map(&key).collect();
                    let prefix_j: Vec<_> = views[j].ops[..=pj].iter().map(&key).collect();
                    if prefix_i != prefix_j {
                        return violation(format!(
                            "{} and {} share {} with different prefixes",
                            views[i].client, views[j].client, vop.op
                        ));
                    }
                    assertions += 1;
                }
            }
        }
    }
    Verdict::pass(Evidence::Checked(assertions))
}

/// Asserts that whenever a client confirms an operation, its confirmed
/// prefix up to that point is exactly the order the server promised the
/// committer: the committer's own confirmed base followed by the pending
/// window it committed against.
pub fn check_promised_prefixes(trace: &Trace) -> Verdict {
    let index = TraceIndex::build(trace);
    let mut assertions = 0;
    for (confirmer, stream) in &index.confirms {
        for (upto, (seq, _, committer, _)) in stream.iter().enumerate() {
            let Some((base, window)) = index.promises.get(&(*committer, *seq)) else {
                return Verdict::fail(Evidence::Violation(format!(
                    "{confirmer} confirmed sequence {seq} that {committer} never committed"
                )));
            };
            // The promise covers positions base+1..=seq; the committer's
            // own confirm stream certifies positions 1..=base.
            let committer_stream = index
                .confirms
                .get(committer)
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            if committer_stream.len() < *base as usize {
                return Verdict::fail(Evidence::Violation(format!(
                    "{committer} committed on a base of {base} but confirmed less"
                )));
            }
            let mut promised: Vec<(u64, ClientId, Operation)> = committer_stream
                [..*base as usize]
                .iter()
                .map(|(s, op, who, _)| (*s, *who, op.clone()))
                .collect();
            promised.extend(
                window
                    .iter()
                    .map(|w| (w.seq, w.client, w.op.clone())),
            );
            let confirmed: Vec<(u64, ClientId, Operation)> = stream[..=upto]
                .iter()
                .map(|(s, op, who, _)| (*s, *who, op.clone()))
                .collect();
            if promised != confirmed {
                return Verdict::fail(Evidence::Violation(format!(
                    "{confirmer}'s prefix at sequence {seq} deviates from what {committer} was promised"
                )));
            }
            assertions += 1;
        }
    }
    Verdict::pass(Evidence::Checked(assertions))
}

/// Asserts confirmation order never contradicts real time: if one client
/// confirms operation A before operation B, then B did not complete
/// before A was invoked.
pub fn check_confirm_realtime(trace: &Trace) -> Verdict {
    let history = trace.history();
    let index = TraceIndex::build(trace);
    let mut complete: BTreeMap<ClientId, Vec<usize>> = BTreeMap::new();
    for (i, h) in history.iter().enumerate() {
        if h.response.is_some() {
            complete.entry(h.client).or_default().push(i);
        }
    }
    let mut assertions = 0;
    for stream in index.confirms.values() {
        let located: Vec<Option<usize>> = stream
            .iter()
            .map(|(seq, _, committer, _)| {
                let rank = index
                    .commits
                    .get(committer)?
                    .iter()
                    .position(|(s, _, _)| s == seq)?;
                complete.get(committer)?.get(rank).copied()
            })
            .collect();
        for a in 0..located.len() {
            for b in (a + 1)..located.len() {
                let (Some(ia), Some(ib)) = (located[a], located[b]) else {
                    continue;
                };
                if precedes(&history[ib], &history[ia]) {
                    return Verdict::fail(Evidence::Violation(format!(
                        "{} confirmed before {} against real-time order",
                        history[ia].op, history[ib].op
                    )));
                }
                assertions += 1;
            }
        }
    }
    Verdict::pass(Evidence::Checked(assertions))
}
