//! Canonical byte encodings: operation and message frames, plus the exact
//! payloads that get signed and hash-chained.
//!
//! Every variable-length field is prefixed with its 4-byte big-endian
//! length; integers (sequence numbers, client ids, counter operands) are
//! 8-byte big-endian. Fixed field order plus explicit lengths make every
//! encoding injective. Decoding is strict: unknown tags, short input and
//! trailing bytes are all errors. `WIRE.md` in the repository root mirrors
//! these layouts field by field.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authstore::{AuthBundle, BroadcastAuth, ReplyAuth};
use crate::crypto::{Digest, Signature};
use crate::functionality::{Operation, Status};
use crate::ClientId;

pub const OP_TAG_ADD: u8 = 0x01;
pub const OP_TAG_DEC: u8 = 0x02;
pub const OP_TAG_GET: u8 = 0x03;
pub const OP_TAG_PUT: u8 = 0x04;

pub const MSG_TAG_INVOKE: u8 = 0x11;
pub const MSG_TAG_REPLY: u8 = 0x12;
pub const MSG_TAG_COMMIT: u8 = 0x13;
pub const MSG_TAG_BROADCAST: u8 = 0x14;

pub const STATUS_SUCCESS: u8 = 0x01;
pub const STATUS_ABORT: u8 = 0x02;

pub const RESP_TAG_TRUE: u8 = 0x01;
pub const RESP_TAG_FALSE: u8 = 0x02;
pub const RESP_TAG_VALUE: u8 = 0x03;
pub const RESP_TAG_ABSENT: u8 = 0x04;
pub const RESP_TAG_NONE: u8 = 0x05;
pub const RESP_TAG_ABORT: u8 = 0x06;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("input ended early (wanted {wanted} more bytes)")]
    UnexpectedEnd { wanted: usize },
    #[error("unknown tag {tag:#04x} for {context}")]
    UnknownTag { tag: u8, context: &'static str },
    #[error("{0} trailing bytes after a complete value")]
    TrailingBytes(usize),
    #[error("length prefix overflows the remaining input")]
    BadLength,
}

// --- primitive writers and a strict reader ---------------------------------

pub(crate) fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_be_bytes());
}

pub(crate) fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_be_bytes());
}

pub(crate) fn put_field(buf: &mut Vec<u8>, bytes: &[u8]) {
    put_u32(buf, bytes.len() as u32);
    buf.extend_from_slice(bytes);
}

pub(crate) struct Reader<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(input: &'a [u8]) -> Self {
        Self { input, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.input.len() - self.pos < n {
            return Err(WireError::UnexpectedEnd {
                wanted: n - (self.input.len() - self.pos),
            });
        }
        let out = &self.input[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn field(&mut self) -> Result<&'a [u8], WireError> {
        let len = self.u32()? as usize;
        if self.input.len() - self.pos < len {
            return Err(WireError::BadLength);
        }
        self.take(len)
    }

    pub(crate) fn finish(self) -> Result<(), WireError> {
        let rest = self.input.len() - self.pos;
        if rest == 0 {
            Ok(())
        } else {
            Err(WireError::TrailingBytes(rest))
        }
    }
}

/// Decodes a self-delimiting value out of a length-prefixed sub-field,
/// requiring the sub-parser to consume the field exactly.
fn parse_field<T>(
    r: &mut Reader<'_>,
    parse: impl FnOnce(&mut Reader<'_>) -> Result<T, WireError>,
) -> Result<T, WireError> {
    let bytes = r.field()?;
    let mut inner = Reader::new(bytes);
    let v = parse(&mut inner)?;
    inner.finish()?;
    Ok(v)
}

// --- operations, responses, statuses ---------------------------------------

pub fn encode_operation(op: &Operation) -> Vec<u8> {
    let mut buf = Vec::new();
    write_operation(&mut buf, op);
    buf
}

pub(crate) fn write_operation(buf: &mut Vec<u8>, op: &Operation) {
    match op {
        Operation::Add(x) => {
            buf.push(OP_TAG_ADD);
            put_field(buf, &x.to_be_bytes());
        }
        Operation::Dec(x) => {
            buf.push(OP_TAG_DEC);
            put_field(buf, &x.to_be_bytes());
        }
        Operation::Get(k) => {
            buf.push(OP_TAG_GET);
            put_field(buf, k);
        }
        Operation::Put(k, v) => {
            buf.push(OP_TAG_PUT);
            put_field(buf, k);
            put_field(buf, v);
        }
    }
}

pub fn decode_operation(bytes: &[u8]) -> Result<Operation, WireError> {
    let mut r = Reader::new(bytes);
    let op = read_operation(&mut r)?;
    r.finish()?;
    Ok(op)
}

pub(crate) fn read_operation(r: &mut Reader<'_>) -> Result<Operation, WireError> {
    let tag = r.u8()?;
    match tag {
        OP_TAG_ADD | OP_TAG_DEC => {
            let operand = r.field()?;
            let bytes: [u8; 8] = operand.try_into().map_err(|_| WireError::BadLength)?;
            let x = u64::from_be_bytes(bytes);
            Ok(if tag == OP_TAG_ADD {
                Operation::Add(x)
            } else {
                Operation::Dec(x)
            })
        }
        OP_TAG_GET => Ok(Operation::Get(r.field()?.to_vec())),
        OP_TAG_PUT => {
            let k = r.field()?.to_vec();
            let v = r.field()?.to_vec();
            Ok(Operation::Put(k, v))
        }
        tag => Err(WireError::UnknownTag {
            tag,
            context: "operation",
        }),
    }
}

pub(crate) fn write_response(buf: &mut Vec<u8>, r: &crate::functionality::Response) {
    use crate::functionality::Response;
    match r {
        Response::Bool(true) => buf.push(RESP_TAG_TRUE),
        Response::Bool(false) => buf.push(RESP_TAG_FALSE),
        Response::Value(v) => {
            buf.push(RESP_TAG_VALUE);
            put_field(buf, v);
        }
        Response::Absent => buf.push(RESP_TAG_ABSENT),
        Response::None => buf.push(RESP_TAG_NONE),
        Response::Abort => buf.push(RESP_TAG_ABORT),
    }
}

pub(crate) fn read_response(r: &mut Reader<'_>) -> Result<crate::functionality::Response, WireError> {
    use crate::functionality::Response;
    match r.u8()? {
        RESP_TAG_TRUE => Ok(Response::Bool(true)),
        RESP_TAG_FALSE => Ok(Response::Bool(false)),
        RESP_TAG_VALUE => Ok(Response::Value(r.field()?.to_vec())),
        RESP_TAG_ABSENT => Ok(Response::Absent),
        RESP_TAG_NONE => Ok(Response::None),
        RESP_TAG_ABORT => Ok(Response::Abort),
        tag => Err(WireError::UnknownTag {
            tag,
            context: "response",
        }),
    }
}

fn status_byte(s: Status) -> u8 {
    match s {
        Status::Success => STATUS_SUCCESS,
        Status::Abort => STATUS_ABORT,
    }
}

fn read_status(r: &mut Reader<'_>) -> Result<Status, WireError> {
    match r.u8()? {
        STATUS_SUCCESS => Ok(Status::Success),
        STATUS_ABORT => Ok(Status::Abort),
        tag => Err(WireError::UnknownTag {
            tag,
            context: "status",
        }),
    }
}

fn write_signature(buf: &mut Vec<u8>, sig: &Signature) {
    put_field(buf, &sig.bytes);
    put_u64(buf, sig.signer.0);
}

fn read_signature(r: &mut Reader<'_>) -> Result<Signature, WireError> {
    let bytes = r.field()?.to_vec();
    let signer = ClientId(r.u64()?);
    Ok(Signature { bytes, signer })
}

// --- signed payloads and chain links ---------------------------------------

/// Sentinel at position zero of the commit hash chain: the ASCII bytes
/// `null`, not a digest of anything.
pub fn chain_genesis() -> Digest {
    Digest(b"null".to_vec())
}

/// Payload a client signs when invoking an operation.
pub fn invoke_payload(op: &Operation, client: ClientId) -> Vec<u8> {
    let mut buf = Vec::new();
    put_field(&mut buf, b"invoke");
    let mut op_bytes = Vec::new();
    write_operation(&mut op_bytes, op);
    put_field(&mut buf, &op_bytes);
    put_u64(&mut buf, client.0);
    buf
}

/// Payload a client signs when committing the operation at `seq`. In
/// authenticated-store mode the commit additionally covers the proof
/// bundle, passed here in its encoded form.
pub fn commit_payload(
    op: &Operation,
    seq: u64,
    chain: &Digest,
    status: Status,
    auth: Option<&[u8]>,
) -> Vec<u8> {
    let mut buf = Vec::new();
    put_field(&mut buf, b"commit");
    let mut op_bytes = Vec::new();
    write_operation(&mut op_bytes, op);
    put_field(&mut buf, &op_bytes);
    put_u64(&mut buf, seq);
    put_field(&mut buf, chain.as_bytes());
    buf.push(status_byte(status));
    match auth {
        None => buf.push(0x00),
        Some(bytes) => {
            buf.push(0x01);
            put_field(&mut buf, bytes);
        }
    }
    buf
}

/// Preimage of hash-chain entry `seq`: previous digest, operation,
/// sequence number and invoking client.
pub fn chain_link(prev: &Digest, op: &Operation, seq: u64, client: ClientId) -> Vec<u8> {
    let mut buf = Vec::new();
    put_field(&mut buf, prev.as_bytes());
    let mut op_bytes = Vec::new();
    write_operation(&mut op_bytes, op);
    put_field(&mut buf, &op_bytes);
    put_u64(&mut buf, seq);
    put_u64(&mut buf, client.0);
    buf
}

// --- messages ---------------------------------------------------------------

/// Client -> server: invoke `op`, having confirmed `confirmed` operations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvokeMessage {
    pub op: Operation,
    pub confirmed: u64,
    pub sig: Signature,
}

/// One pending operation announced in a reply window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingEntry {
    pub op: Operation,
    pub client: ClientId,
    pub sig: Signature,
}

/// Server -> client: the pending window, oldest first, the requester's own
/// operation last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyMessage {
    pub window: Vec<PendingEntry>,
    pub auth: Option<ReplyAuth>,
}

/// Client -> server: commit the operation at `seq` with chain digest and
/// status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitMessage {
    pub op: Operation,
    pub seq: u64,
    pub chain: Digest,
    pub status: Status,
    pub sig: Signature,
    pub auth: Option<AuthBundle>,
}

/// Server -> every client: the committed operation at `seq`, relayed with
/// the committer's signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BroadcastMessage {
    pub op: Operation,
    pub seq: u64,
    pub chain: Digest,
    pub status: Status,
    pub committer: ClientId,
    pub sig: Signature,
    pub auth: Option<BroadcastAuth>,
}

impl InvokeMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = vec![MSG_TAG_INVOKE];
        let mut op_bytes = Vec::new();
        write_operation(&mut op_bytes, &self.op);
        put_field(&mut buf, &op_bytes);
        put_u64(&mut buf, self.confirmed);
        write_signature(&mut buf, &self.sig);
        buf
    }
}

impl ReplyMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = vec![MSG_TAG_REPLY];
        put_u32(&mut buf, self.window.len() as u32);
        for entry in &self.window {
            let mut op_bytes = Vec::new();
            write_operation(&mut op_bytes, &entry.op);
            put_field(&mut buf, &op_bytes);
            put_u64(&mut buf, entry.client.0);
            write_signature(&mut buf, &entry.sig);
        }
        write_opt_auth(&mut buf, self.auth.as_ref().map(|a| a.encode()));
        buf
    }
}

impl CommitMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = vec![MSG_TAG_COMMIT];
        let mut op_bytes = Vec::new();
        write_operation(&mut op_bytes, &self.op);
        put_field(&mut buf, &op_bytes);
        put_u64(&mut buf, self.seq);
        put_field(&mut buf, self.chain.as_bytes());
        buf.push(status_byte(self.status));
        write_signature(&mut buf, &self.sig);
        write_opt_auth(&mut buf, self.auth.as_ref().map(|a| a.encode()));
        buf
    }

    /// The exact payload `sig` was produced over.
    pub fn signed_payload(&self) -> Vec<u8> {
        commit_payload(
            &self.op,
            self.seq,
            &self.chain,
            self.status,
            self.auth.as_ref().map(|a| a.encode()).as_deref(),
        )
    }
}

impl BroadcastMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = vec![MSG_TAG_BROADCAST];
        let mut op_bytes = Vec::new();
        write_operation(&mut op_bytes, &self.op);
        put_field(&mut buf, &op_bytes);
        put_u64(&mut buf, self.seq);
        put_field(&mut buf, self.chain.as_bytes());
        buf.push(status_byte(self.status));
        put_u64(&mut buf, self.committer.0);
        write_signature(&mut buf, &self.sig);
        write_opt_auth(&mut buf, self.auth.as_ref().map(|a| a.encode()));
        buf
    }

    /// Payload the committer signed: the commit-message payload for this
    /// sequence number, including the proof bundle when present.
    pub fn signed_payload(&self) -> Vec<u8> {
        commit_payload(
            &self.op,
            self.seq,
            &self.chain,
            self.status,
            self.auth.as_ref().map(|a| a.bundle.encode()).as_deref(),
        )
    }
}

fn write_opt_auth(buf: &mut Vec<u8>, auth: Option<Vec<u8>>) {
    match auth {
        None => buf.push(0x00),
        Some(bytes) => {
            buf.push(0x01);
            put_field(buf, &bytes);
        }
    }
}

fn read_opt<T>(
    r: &mut Reader<'_>,
    parse: impl FnOnce(&mut Reader<'_>) -> Result<T, WireError>,
) -> Result<Option<T>, WireError> {
    match r.u8()? {
        0x00 => Ok(None),
        0x01 => Ok(Some(parse_field(r, parse)?)),
        tag => Err(WireError::UnknownTag {
            tag,
            context: "optional field",
        }),
    }
}

/// Any protocol message, for generic decode and for simulator channels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Message {
    Invoke(InvokeMessage),
    Reply(ReplyMessage),
    Commit(CommitMessage),
    Broadcast(BroadcastMessage),
}

impl Message {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Message::Invoke(m) => m.encode(),
            Message::Reply(m) => m.encode(),
            Message::Commit(m) => m.encode(),
            Message::Broadcast(m) => m.encode(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Message, WireError> {
        let mut r = Reader::new(bytes);
        let msg = match r.u8()? {
            MSG_TAG_INVOKE => {
                let op = parse_field(&mut r, read_operation)?;
                let confirmed = r.u64()?;
                let sig = read_signature(&mut r)?;
                Message::Invoke(InvokeMessage { op, confirmed, sig })
            }
            MSG_TAG_REPLY => {
                let count = r.u32()?;
                let mut window = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    let op = parse_field(&mut r, read_operation)?;
                    let client = ClientId(r.u64()?);
                    let sig = read_signature(&mut r)?;
                    window.push(PendingEntry { op, client, sig });
                }
                let auth = read_opt(&mut r, ReplyAuth::read)?;
                Message::Reply(ReplyMessage { window, auth })
            }
            MSG_TAG_COMMIT => {
                let op = parse_field(&mut r, read_operation)?;
                let seq = r.u64()?;
                let chain = Digest(r.field()?.to_vec());
                let status = read_status(&mut r)?;
                let sig = read_signature(&mut r)?;
                let auth = read_opt(&mut r, AuthBundle::read)?;
                Message::Commit(CommitMessage {
                    op,
                    seq,
                    chain,
                    status,
                    sig,
                    auth,
                })
            }
            MSG_TAG_BROADCAST => {
                let op = parse_field(&mut r, read_operation)?;
                let seq = r.u64()?;
                let chain = Digest(r.field()?.to_vec());
                let status = read_status(&mut r)?;
                let committer = ClientId(r.u64()?);
                let sig = read_signature(&mut r)?;
                let auth = read_opt(&mut r, BroadcastAuth::read)?;
                Message::Broadcast(BroadcastMessage {
                    op,
                    seq,
                    chain,
                    status,
                    committer,
                    sig,
                    auth,
                })
            }
            tag => {
                return Err(WireError::UnknownTag {
                    tag,
                    context: "message",
                })
            }
        };
        r.finish()?;
        Ok(msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionality::Response;
    use proptest::prelude::*;

    fn sig(n: u64) -> Signature {
        Signature {
            bytes: n.to_be_bytes().to_vec(),
            signer: ClientId(n % 4 + 1),
        }
    }

    #[test]
    fn chain_genesis_is_the_null_literal() {
        assert_eq!(chain_genesis().as_bytes(), b"null");
        assert_eq!(chain_genesis().to_hex(), "6e756c6c");
    }

    #[test]
    fn operation_tags_are_stable() {
        assert_eq!(encode_operation(&Operation::Add(2))[0], 0x01);
        assert_eq!(encode_operation(&Operation::Dec(2))[0], 0x02);
        assert_eq!(encode_operation(&Operation::Get(vec![1]))[0], 0x03);
        assert_eq!(encode_operation(&Operation::Put(vec![1], vec![2]))[0], 0x04);
    }

    #[test]
    fn add_encoding_layout() {
        // tag, 4-byte length 8, 8-byte big-endian operand
        let bytes = encode_operation(&Operation::Add(2));
        assert_eq!(
            bytes,
            vec![0x01, 0, 0, 0, 8, 0, 0, 0, 0, 0, 0, 0, 2]
        );
    }

    #[test]
    fn decode_rejects_trailing_bytes() {
        let mut bytes = encode_operation(&Operation::Add(1));
        bytes.push(0);
        assert_eq!(decode_operation(&bytes), Err(WireError::TrailingBytes(1)));
    }

    #[test]
    fn decode_rejects_truncation_and_bad_tags() {
        let bytes = encode_operation(&Operation::Put(b"k".to_vec(), b"v".to_vec()));
        assert!(decode_operation(&bytes[..bytes.len() - 1]).is_err());
        assert!(matches!(
            decode_operation(&[0x09]),
            Err(WireError::UnknownTag { tag: 0x09, .. })
        ));
    }

    #[test]
    fn chain_link_separates_all_fields() {
        let prev = chain_genesis();
        let base = chain_link(&prev, &Operation::Add(1), 1, ClientId(1));
        assert_ne!(base, chain_link(&prev, &Operation::Add(2), 1, ClientId(1)));
        assert_ne!(base, chain_link(&prev, &Operation::Add(1), 2, ClientId(1)));
        assert_ne!(base, chain_link(&prev, &Operation::Add(1), 1, ClientId(2)));
        let other_prev = Digest(vec![0; 8]);
        assert_ne!(base, chain_link(&other_prev, &Operation::Add(1), 1, ClientId(1)));
    }

    #[test]
    fn invoke_and_commit_payloads_differ_by_domain_tag() {
        let op = Operation::Add(1);
        let inv = invoke_payload(&op, ClientId(1));
        let com = commit_payload(&op, 1, &chain_genesis(), Status::Success, None);
        assert_ne!(inv, com);
        assert!(inv.windows(6).any(|w| w == b"invoke"));
        assert!(com.windows(6).any(|w| w == b"commit"));
    }

    #[test]
    fn commit_payload_distinguishes_status_and_auth() {
        let op = Operation::Add(1);
        let g = chain_genesis();
        let success = commit_payload(&op, 1, &g, Status::Success, None);
        let abort = commit_payload(&op, 1, &g, Status::Abort, None);
        let with_auth = commit_payload(&op, 1, &g, Status::Success, Some(b"proof"));
        assert_ne!(success, abort);
        assert_ne!(success, with_auth);
    }

    fn any_operation() -> impl Strategy<Value = Operation> {
        prop_oneof![
            any::<u64>().prop_map(Operation::Add),
            any::<u64>().prop_map(Operation::Dec),
            proptest::collection::vec(any::<u8>(), 0..12).prop_map(Operation::Get),
            (
                proptest::collection::vec(any::<u8>(), 0..12),
                proptest::collection::vec(any::<u8>(), 0..12)
            )
                .prop_map(|(k, v)| Operation::Put(k, v)),
        ]
    }

    proptest! {
        #[test]
        fn operation_round_trip(op in any_operation()) {
            prop_assert_eq!(decode_operation(&encode_operation(&op)).unwrap(), op);
        }

        #[test]
        fn operation_encoding_injective(a in any_operation(), b in any_operation()) {
            if a != b {
                prop_assert_ne!(encode_operation(&a), encode_operation(&b));
            }
        }

        #[test]
        fn invoke_message_round_trip(
            op in any_operation(),
            confirmed in any::<u64>(),
            s in any::<u64>(),
        ) {
            let msg = Message::Invoke(InvokeMessage { op, confirmed, sig: sig(s) });
            prop_assert_eq!(Message::decode(&msg.encode()).unwrap(), msg);
        }

        #[test]
        fn reply_message_round_trip(
            ops in proptest::collection::vec((any_operation(), 1u64..5, any::<u64>()), 0..4),
        ) {
            let window = ops
                .into_iter()
                .map(|(op, c, s)| PendingEntry { op, client: ClientId(c), sig: sig(s) })
                .collect();
            let msg = Message::Reply(ReplyMessage { window, auth: None });
            prop_assert_eq!(Message::decode(&msg.encode()).unwrap(), msg);
        }

        #[test]
        fn commit_message_round_trip(
            op in any_operation(),
            seq in any::<u64>(),
            digest in proptest::collection::vec(any::<u8>(), 0..33),
            success in any::<bool>(),
            s in any::<u64>(),
        ) {
            let msg = Message::Commit(CommitMessage {
                op,
                seq,
                chain: Digest(digest),
                status: if success { Status::Success } else { Status::Abort },
                sig: sig(s),
                auth: None,
            });
            prop_assert_eq!(Message::decode(&msg.encode()).unwrap(), msg);
        }

        #[test]
        fn broadcast_message_round_trip(
            op in any_operation(),
            seq in any::<u64>(),
            digest in proptest::collection::vec(any::<u8>(), 0..33),
            committer in 1u64..5,
            success in any::<bool>(),
            s in any::<u64>(),
        ) {
            let msg = Message::Broadcast(BroadcastMessage {
                op,
                seq,
                chain: Digest(digest),
                status: if success { Status::Success } else { Status::Abort },
                committer: ClientId(committer),
                sig: sig(s),
                auth: None,
            });
            prop_assert_eq!(Message::decode(&msg.encode()).unwrap(), msg);
        }

        #[test]
        fn commit_payload_injective_across_fields(
            op1 in any_operation(),
            op2 in any_operation(),
            seq1 in 0u64..100,
            seq2 in 0u64..100,
            s1 in any::<bool>(),
            s2 in any::<bool>(),
        ) {
            let g = chain_genesis();
            let st = |b| if b { Status::Success } else { Status::Abort };
            if (op1.clone(), seq1, s1) != (op2.clone(), seq2, s2) {
                prop_assert_ne!(
                    commit_payload(&op1, seq1, &g, st(s1), None),
                    commit_payload(&op2, seq2, &g, st(s2), None)
                );
            }
        }

        #[test]
        fn response_codec_round_trip(choice in 0u8..6, v in proptest::collection::vec(any::<u8>(), 0..9)) {
            let r = match choice {
                0 => Response::Bool(true),
                1 => Response::Bool(false),
                2 => Response::Value(v),
                3 => Response::Absent,
                4 => Response::None,
                _ => Response::Abort,
            };
            let mut buf = Vec::new();
            write_response(&mut buf, &r);
            let mut reader = Reader::new(&buf);
            let back = read_response(&mut reader).unwrap();
            reader.finish().unwrap();
            prop_assert_eq!(back, r);
        }
    }
}
