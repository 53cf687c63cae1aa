//! Message framing between owner, trustees and the key directory.
//!
//! Frame: `length u32-BE ‖ kind u8 ‖ body`, where `length` counts the kind
//! byte plus the body. Frames longer than [`MAX_FRAME_LEN`] are rejected
//! before any body bytes are read.
//!
//! | kind | message            | body                                           |
//! |------|--------------------|------------------------------------------------|
//! | 1    | recovery_request   | count u16 ‖ { len u32 ‖ sealed blob }*         |
//! | 2    | share_response     | share index u8 ‖ share payload                 |
//! | 3    | refusal            | reason code u8                                 |
//! | 4    | directory_lookup   | locator, UTF-8                                 |
//! | 5    | directory_reply    | 64-byte public key, or empty when not found    |
//!
//! Nothing here encrypts. Sealed packets are already encrypted, and the
//! socket carrier must run inside an authenticated encrypted channel in any
//! real deployment.

use std::collections::{HashMap, VecDeque};
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::crypto::{PublicKey, SealedBlob};
use crate::protocol::{
    DirectoryError, IdentityDirectory, MemoryDirectory, RefusalReason, ShareResponse,
};
use crate::sss::Share;
use crate::wire::{put_prefixed, Reader, Truncated};

pub const MAX_FRAME_LEN: u32 = 16 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("frame truncated")]
    Truncated,
    #[error("unknown message kind {0}")]
    UnknownKind(u8),
    #[error("frame of {0} bytes exceeds the 16 MiB limit")]
    Oversize(u32),
    #[error("malformed message body: {0}")]
    Malformed(String),
    #[error("unknown party {0:?}")]
    UnknownParty(String),
    #[error("unexpected reply: {0}")]
    UnexpectedReply(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<Truncated> for TransportError {
    fn from(_: Truncated) -> Self {
        TransportError::Truncated
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    RecoveryRequest { packets: Vec<SealedBlob> },
    ShareResponse(ShareResponse),
    Refusal(RefusalReason),
    DirectoryLookup { locator: String },
    DirectoryReply { key: Option<PublicKey> },
}

impl Message {
    pub fn kind(&self) -> u8 {
        match self {
            Message::RecoveryRequest { .. } => 1,
            Message::ShareResponse(_) => 2,
            Message::Refusal(_) => 3,
            Message::DirectoryLookup { .. } => 4,
            Message::DirectoryReply { .. } => 5,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Message::RecoveryRequest { .. } => "recovery_request",
            Message::ShareResponse(_) => "share_response",
            Message::Refusal(_) => "refusal",
            Message::DirectoryLookup { .. } => "directory_lookup",
            Message::DirectoryReply { .. } => "directory_reply",
        }
    }

    fn body(&self) -> Vec<u8> {
        match self {
            Message::RecoveryRequest { packets } => {
                let mut out = Vec::new();
                out.extend_from_slice(&(packets.len() as u16).to_be_bytes());
                for blob in packets {
                    put_prefixed(&mut out, &blob.to_bytes());
                }
                out
            }
            Message::ShareResponse(r) => r.share.to_bytes(),
            Message::Refusal(reason) => vec![reason.code()],
            Message::DirectoryLookup { locator } => locator.as_bytes().to_vec(),
            Message::DirectoryReply { key } => {
                key.map(|k| k.to_bytes().to_vec()).unwrap_or_default()
            }
        }
    }

    fn from_body(kind: u8, body: &[u8]) -> Result<Message, TransportError> {
        let malformed = |e: &dyn std::fmt::Display| TransportError::Malformed(e.to_string());
        let mut r = Reader::new(body);
        let msg = match kind {
            1 => {
                let count = r.u16()? as usize;
                let mut packets = Vec::with_capacity(count.min(256));
                for _ in 0..count {
                    packets.push(SealedBlob::from_bytes(r.prefixed()?).map_err(|e| malformed(&e))?);
                }
                Message::RecoveryRequest { packets }
            }
            2 => Message::ShareResponse(ShareResponse {
                share: Share::from_bytes(r.rest()).map_err(|e| malformed(&e))?,
            }),
            3 => {
                let code = r.u8()?;
                Message::Refusal(
                    RefusalReason::from_code(code)
                        .ok_or_else(|| malformed(&format!("refusal code {code}")))?,
                )
            }
            4 => Message::DirectoryLookup {
                locator: String::from_utf8(r.rest().to_vec()).map_err(|e| malformed(&e))?,
            },
            5 => {
                let rest = r.rest();
                let key = if rest.is_empty() {
                    None
                } else {
                    Some(PublicKey::from_bytes(rest).map_err(|e| malformed(&e))?)
                };
                Message::DirectoryReply { key }
            }
            other => return Err(TransportError::UnknownKind(other)),
        };
        if r.remaining() != 0 {
            return Err(TransportError::Malformed(format!(
                "{} trailing bytes in body",
                r.remaining()
            )));
        }
        Ok(msg)
    }
}

pub fn encode_frame(m: &Message) -> Vec<u8> {
    let body = m.body();
    let mut out = Vec::with_capacity(5 + body.len());
    out.extend_from_slice(&(body.len() as u32 + 1).to_be_bytes());
    out.push(m.kind());
    out.extend_from_slice(&body);
    out
}

fn check_length(len: u32) -> Result<(), TransportError> {
    if len > MAX_FRAME_LEN {
        return Err(TransportError::Oversize(len));
    }
    if len == 0 {
        return Err(TransportError::Malformed("empty frame".into()));
    }
    Ok(())
}

/// Decode one frame from the front of `bytes`, returning the message and
/// the number of bytes consumed.
pub fn decode_frame_prefix(bytes: &[u8]) -> Result<(Message, usize), TransportError> {
    let mut r = Reader::new(bytes);
    let len = r.u32()?;
    check_length(len)?;
    let frame = r.take(len as usize)?;
    Ok((Message::from_body(frame[0], &frame[1..])?, 4 + len as usize))
}

/// Decode exactly one frame; trailing bytes are an error.
pub fn decode_frame(bytes: &[u8]) -> Result<Message, TransportError> {
    let (msg, used) = decode_frame_prefix(bytes)?;
    if used != bytes.len() {
        return Err(TransportError::Malformed(format!(
            "{} bytes after frame",
            bytes.len() - used
        )));
    }
    Ok(msg)
}

/// Decode a concatenation of frames.
pub fn decode_frames(mut bytes: &[u8]) -> Result<Vec<Message>, TransportError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (msg, used) = decode_frame_prefix(bytes)?;
        out.push(msg);
        bytes = &bytes[used..];
    }
    Ok(out)
}

pub fn write_frame<W: Write>(w: &mut W, m: &Message) -> Result<(), TransportError> {
    w.write_all(&encode_frame(m))?;
    w.flush()?;
    Ok(())
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Message, TransportError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(eof_as_truncated)?;
    let len = u32::from_be_bytes(len);
    check_length(len)?;
    let mut frame = vec![0u8; len as usize];
    r.read_exact(&mut frame).map_err(eof_as_truncated)?;
    Message::from_body(frame[0], &frame[1..])
}

fn eof_as_truncated(e: io::Error) -> TransportError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        TransportError::Truncated
    } else {
        TransportError::Io(e)
    }
}

pub type PartyId = String;

/// Fault knobs for the simulated channel. Both default to a perfect link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelKnobs {
    pub drop_probability: f64,
    /// Messages become visible this many ticks after sending.
    pub delay_ticks: u64,
}

impl Default for ChannelKnobs {
    fn default() -> Self {
        ChannelKnobs {
            drop_probability: 0.0,
            delay_ticks: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Queued,
    Dropped,
}

struct NetState {
    inboxes: HashMap<PartyId, VecDeque<(u64, Vec<u8>)>>,
    clock: u64,
    knobs: ChannelKnobs,
    rng: ChaCha8Rng,
}

/// In-memory network of named parties with FIFO inboxes. Messages travel
/// as encoded frames.
pub struct SimulatedNetwork {
    state: Mutex<NetState>,
}

impl Default for SimulatedNetwork {
    fn default() -> Self {
        SimulatedNetwork::new(ChannelKnobs::default(), 0)
    }
}

impl SimulatedNetwork {
    pub fn new(knobs: ChannelKnobs, seed: u64) -> Self {
        SimulatedNetwork {
            state: Mutex::new(NetState {
                inboxes: HashMap::new(),
                clock: 0,
                knobs,
                rng: ChaCha8Rng::seed_from_u64(seed),
            }),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, NetState> {
        self.state.lock().expect("network lock poisoned")
    }

    pub fn register(&self, party: impl Into<PartyId>) {
        self.lock().inboxes.entry(party.into()).or_default();
    }

    pub fn deliver(&self, from: &str, to: &str, m: &Message) -> Result<Delivery, TransportError> {
        let mut state = self.lock();
        if !state.inboxes.contains_key(from) {
            return Err(TransportError::UnknownParty(from.to_string()));
        }
        if !state.inboxes.contains_key(to) {
            return Err(TransportError::UnknownParty(to.to_string()));
        }
        let knobs = state.knobs;
        if knobs.drop_probability > 0.0 && state.rng.gen::<f64>() < knobs.drop_probability {
            return Ok(Delivery::Dropped);
        }
        let due = state.clock + knobs.delay_ticks;
        state
            .inboxes
            .get_mut(to)
            .expect("checked above")
            .push_back((due, encode_frame(m)));
        Ok(Delivery::Queued)
    }

    /// Pop the oldest message that is due, if any.
    pub fn receive(&self, party: &str) -> Result<Option<Message>, TransportError> {
        let mut state = self.lock();
        let clock = state.clock;
        let inbox = state
            .inboxes
            .get_mut(party)
            .ok_or_else(|| TransportError::UnknownParty(party.to_string()))?;
        match inbox.front() {
            Some(&(due, _)) if due <= clock => {
                let (_, frame) = inbox.pop_front().expect("front exists");
                decode_frame(&frame).map(Some)
            }
            _ => Ok(None),
        }
    }

    pub fn pending(&self, party: &str) -> usize {
        self.lock().inboxes.get(party).map_or(0, VecDeque::len)
    }

    pub fn advance(&self, ticks: u64) {
        self.lock().clock += ticks;
    }
}

/// Answer a single request against the directory.
pub fn directory_reply(directory: &dyn IdentityDirectory, request: &Message) -> Message {
    match request {
        Message::DirectoryLookup { locator } => Message::DirectoryReply {
            key: directory.lookup(locator).ok(),
        },
        _ => Message::Refusal(RefusalReason::DirectoryUnavailable),
    }
}

fn handle_connection(
    mut stream: TcpStream,
    directory: &MemoryDirectory,
) -> Result<(), TransportError> {
    stream.set_read_timeout(Some(Duration::from_secs(30)))?;
    let request = read_frame(&mut stream)?;
    write_frame(&mut stream, &directory_reply(directory, &request))
}

/// Serve directory lookups, one request/response exchange per connection,
/// each connection on its own thread. Stops after `max_connections` when
/// given.
pub fn serve_directory(
    listener: TcpListener,
    directory: Arc<MemoryDirectory>,
    max_connections: Option<usize>,
) -> io::Result<()> {
    let mut handles = Vec::new();
    for (served, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        let dir = Arc::clone(&directory);
        handles.push(thread::spawn(move || {
            // per-connection failures only affect that client
            let _ = handle_connection(stream, &dir);
        }));
        if max_connections.is_some_and(|max| served + 1 >= max) {
            break;
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}

/// Send one request and wait for its reply.
pub fn request<A: ToSocketAddrs>(addr: A, m: &Message) -> Result<Message, TransportError> {
    let mut stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(Duration::from_secs(30)))?;
    write_frame(&mut stream, m)?;
    read_frame(&mut stream)
}

/// Directory reached over the socket carrier.
#[derive(Debug, Clone)]
pub struct RemoteDirectory {
    pub addr: SocketAddr,
}

impl IdentityDirectory for RemoteDirectory {
    fn lookup(&self, locator: &str) -> Result<PublicKey, DirectoryError> {
        let reply = request(
            self.addr,
            &Message::DirectoryLookup {
                locator: locator.to_string(),
            },
        )
        .map_err(|e| DirectoryError::Unavailable(e.to_string()))?;
        match reply {
            Message::DirectoryReply { key: Some(k) } => Ok(k),
            Message::DirectoryReply { key: None } => {
                Err(DirectoryError::NotFound(locator.to_string()))
            }
            other => Err(DirectoryError::Unavailable(format!(
                "unexpected {} reply",
                other.kind_name()
            ))),
        }
    }
}
