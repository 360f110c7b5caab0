//! Two-party runtime: framed, session-tagged messages over a duplex link.
//!
//! P1 is the initiator and opens sessions; P2 accepts them. Every session starts with an
//! open frame (sequence 0, carrying an opaque hello payload) answered by an ack frame
//! (sequence 0, empty payload) or a rejection (sequence 0, one rejection code). Data
//! frames then run from sequence 1 in each direction. An initiator closes a session with
//! an empty frame carrying the session's own tag.
//!
//! One reader thread per endpoint demultiplexes frames by session id, so independent
//! sessions may be driven from different threads over one link.

pub mod transcript;
pub mod transport;
pub mod wire;

use std::collections::HashMap;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use thiserror::Error;

pub use transcript::{
    DecryptionRecord, Direction, SharedTranscript, Transcript, TranscriptEntry, ViewKind,
};
pub use transport::{in_process_pair, tcp_link, Link};
pub use wire::{decode_message, encode_message, DecodeError, ProtocolMessage, ProtocolTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartyRole {
    P1,
    P2,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("transport disconnected")]
    TransportDisconnected,
    #[error("frame corrupt: {0}")]
    FrameCorrupt(DecodeError),
    #[error("sequence gap: expected {expected}, got {got}")]
    SequenceGap { expected: u32, got: u32 },
    #[error("session id {0:#018x} already in use")]
    SessionIdCollision(u64),
    #[error("peer holds a different key")]
    KeyMismatch,
    #[error("peer rejected session open with code {0}")]
    Rejected(u64),
    #[error("session aborted: {0}")]
    Aborted(String),
    #[error("cannot encode frame: {0}")]
    Encode(#[from] wire::EncodeError),
}

/// Codes carried by a rejection frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Rejection {
    SessionIdCollision = 1,
    KeyMismatch = 2,
}

type Delivery = Result<ProtocolMessage, RuntimeError>;

struct Table {
    inboxes: HashMap<u64, Sender<Delivery>>,
    accept_tx: Option<Sender<Incoming>>,
    failure: Option<RuntimeError>,
    next_id: u64,
}

struct Inner {
    role: PartyRole,
    writer: Mutex<Box<dyn transport::FrameWriter>>,
    table: Mutex<Table>,
    transcript: Option<SharedTranscript>,
}

impl Inner {
    fn direction(&self, outgoing: bool) -> Direction {
        match (self.role, outgoing) {
            (PartyRole::P1, true) | (PartyRole::P2, false) => Direction::P1ToP2,
            _ => Direction::P2ToP1,
        }
    }

    fn send(&self, msg: &ProtocolMessage) -> Result<(), RuntimeError> {
        let frame = encode_message(msg)?;
        if let Some(failure) = self.table.lock().unwrap().failure.clone() {
            return Err(failure);
        }
        if let Some(t) = &self.transcript {
            t.lock().unwrap().record(self.direction(true), msg);
        }
        self.writer.lock().unwrap().write_frame(&frame)
    }

    fn unregister(&self, id: u64) {
        self.table.lock().unwrap().inboxes.remove(&id);
    }

    fn fail_all(&self, err: RuntimeError) {
        let mut table = self.table.lock().unwrap();
        if table.failure.is_none() {
            table.failure = Some(err.clone());
        }
        for (_, tx) in table.inboxes.drain() {
            let _ = tx.send(Err(err.clone()));
        }
        table.accept_tx = None;
    }

    fn route(self: &Arc<Self>, msg: ProtocolMessage) {
        if let Some(t) = &self.transcript {
            t.lock().unwrap().record(self.direction(false), &msg);
        }
        let mut table = self.table.lock().unwrap();
        let is_open = self.role == PartyRole::P2 && msg.sequence_no == 0;
        if is_open {
            if table.inboxes.contains_key(&msg.session_id) {
                drop(table);
                let _ = self.send(&ProtocolMessage {
                    session_id: msg.session_id,
                    tag: msg.tag,
                    sequence_no: 0,
                    payload: vec![BigUint::from(Rejection::SessionIdCollision as u8)],
                });
                return;
            }
            let Some(accept_tx) = table.accept_tx.clone() else {
                return;
            };
            let (tx, rx) = channel();
            table.inboxes.insert(msg.session_id, tx);
            drop(table);
            let _ = accept_tx.send(Incoming {
                endpoint: Arc::clone(self),
                open: msg,
                inbox: Some(rx),
            });
            return;
        }
        if let Some(tx) = table.inboxes.get(&msg.session_id) {
            let _ = tx.send(Ok(msg));
        }
        // Frames for unknown sessions belong to sessions already closed or aborted here.
    }
}

/// One party's end of a link, shared by all of that party's sessions.
#[derive(Clone)]
pub struct Endpoint {
    inner: Arc<Inner>,
    accept_rx: Arc<Mutex<Option<Receiver<Incoming>>>>,
}

#[derive(Debug, Clone, Default)]
pub struct EndpointOptions {
    pub transcript: Option<SharedTranscript>,
    /// Starting point for session ids allocated by an initiator.
    pub first_session_id: u64,
}

impl Endpoint {
    pub fn new(link: Link, role: PartyRole, options: EndpointOptions) -> Self {
        let (accept_tx, accept_rx) = channel();
        let inner = Arc::new(Inner {
            role,
            writer: Mutex::new(link.writer),
            table: Mutex::new(Table {
                inboxes: HashMap::new(),
                accept_tx: Some(accept_tx),
                failure: None,
                next_id: options.first_session_id,
            }),
            transcript: options.transcript,
        });
        let reader_inner = Arc::clone(&inner);
        let mut reader = link.reader;
        thread::Builder::new()
            .name(format!("{role:?}-reader"))
            .spawn(move || loop {
                match reader.read_frame() {
                    Ok(Some(frame)) => match decode_message(&frame) {
                        Ok(msg) => reader_inner.route(msg),
                        Err(e) => {
                            reader_inner.fail_all(RuntimeError::FrameCorrupt(e));
                            break;
                        }
                    },
                    Ok(None) => {
                        reader_inner.fail_all(RuntimeError::TransportDisconnected);
                        break;
                    }
                    Err(e) => {
                        reader_inner.fail_all(e);
                        break;
                    }
                }
            })
            .expect("spawn reader thread");
        Endpoint {
            inner,
            accept_rx: Arc::new(Mutex::new(Some(accept_rx))),
        }
    }

    pub fn role(&self) -> PartyRole {
        self.inner.role
    }

    pub fn transcript(&self) -> Option<&SharedTranscript> {
        self.inner.transcript.as_ref()
    }

    /// The error that ended this endpoint, if any.
    pub fn failure(&self) -> Option<RuntimeError> {
        self.inner.table.lock().unwrap().failure.clone()
    }

    /// Stops sending; the peer sees the link close.
    pub fn shutdown(&self) {
        self.inner.writer.lock().unwrap().close();
    }

    /// Opens a session as initiator and waits for the peer's ack.
    pub fn open_session(
        &self,
        tag: ProtocolTag,
        hello: Vec<BigUint>,
    ) -> Result<Session, RuntimeError> {
        let (tx, rx) = channel();
        let id = {
            let mut table = self.inner.table.lock().unwrap();
            if let Some(failure) = &table.failure {
                return Err(failure.clone());
            }
            let mut id = table.next_id;
            while table.inboxes.contains_key(&id) {
                id = id.wrapping_add(1);
            }
            table.next_id = id.wrapping_add(1);
            table.inboxes.insert(id, tx);
            id
        };
        let mut session = Session {
            id,
            tag,
            inner: Arc::clone(&self.inner),
            inbox: rx,
            next_send: 0,
            next_recv: 0,
            state: SessionState::Open,
        };
        session.send_tagged(tag, hello)?;
        let ack = session.recv_message()?;
        match ack.payload.as_slice() {
            [] => Ok(session),
            [code] => {
                session.state = SessionState::Aborted;
                Err(match code.to_u8() {
                    Some(c) if c == Rejection::SessionIdCollision as u8 => {
                        RuntimeError::SessionIdCollision(id)
                    }
                    Some(c) if c == Rejection::KeyMismatch as u8 => RuntimeError::KeyMismatch,
                    _ => RuntimeError::Rejected(code.to_u64().unwrap_or(u64::MAX)),
                })
            }
            _ => {
                session.state = SessionState::Aborted;
                Err(RuntimeError::Aborted("malformed session ack".into()))
            }
        }
    }

    /// Waits for the next session opened by the peer.
    pub fn accept(&self) -> Result<Incoming, RuntimeError> {
        let guard = self.accept_rx.lock().unwrap();
        let rx = guard.as_ref().ok_or(RuntimeError::TransportDisconnected)?;
        rx.recv().map_err(|_| {
            self.failure()
                .unwrap_or(RuntimeError::TransportDisconnected)
        })
    }
}

/// A session the peer asked to open, not yet acknowledged.
pub struct Incoming {
    endpoint: Arc<Inner>,
    open: ProtocolMessage,
    inbox: Option<Receiver<Delivery>>,
}

impl Incoming {
    pub fn session_id(&self) -> u64 {
        self.open.session_id
    }

    pub fn tag(&self) -> ProtocolTag {
        self.open.tag
    }

    pub fn hello(&self) -> &[BigUint] {
        &self.open.payload
    }

    pub fn accept(mut self) -> Result<Session, RuntimeError> {
        let mut session = Session {
            id: self.open.session_id,
            tag: self.open.tag,
            inner: Arc::clone(&self.endpoint),
            inbox: self.inbox.take().expect("inbox present until accepted"),
            next_send: 0,
            next_recv: 1,
            state: SessionState::Open,
        };
        session.send_tagged(self.open.tag, Vec::new())?;
        Ok(session)
    }

    pub fn reject(self, code: Rejection) -> Result<(), RuntimeError> {
        self.endpoint.send(&ProtocolMessage {
            session_id: self.open.session_id,
            tag: self.open.tag,
            sequence_no: 0,
            payload: vec![BigUint::from(code as u8)],
        })
    }
}

impl Drop for Incoming {
    fn drop(&mut self) {
        if self.inbox.is_some() {
            self.endpoint.unregister(self.open.session_id);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SessionState {
    Open,
    Closed,
    Aborted,
}

/// One sub-protocol conversation. Single-threaded by construction (`&mut self`).
pub struct Session {
    id: u64,
    tag: ProtocolTag,
    inner: Arc<Inner>,
    inbox: Receiver<Delivery>,
    next_send: u32,
    next_recv: u32,
    state: SessionState,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("tag", &self.tag)
            .field("next_send", &self.next_send)
            .field("next_recv", &self.next_recv)
            .finish()
    }
}

impl Session {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn tag(&self) -> ProtocolTag {
        self.tag
    }

    pub fn role(&self) -> PartyRole {
        self.inner.role
    }

    pub fn transcript(&self) -> Option<&SharedTranscript> {
        self.inner.transcript.as_ref()
    }

    fn ensure_open(&self) -> Result<(), RuntimeError> {
        match self.state {
            SessionState::Open => Ok(()),
            SessionState::Closed => Err(RuntimeError::Aborted("session closed".into())),
            SessionState::Aborted => Err(RuntimeError::Aborted("session aborted".into())),
        }
    }

    /// Marks the session dead and returns `err` for propagation.
    pub fn abort(&mut self, err: RuntimeError) -> RuntimeError {
        if self.state == SessionState::Open {
            self.state = SessionState::Aborted;
            self.inner.unregister(self.id);
        }
        err
    }

    pub fn send(&mut self, values: Vec<BigUint>) -> Result<(), RuntimeError> {
        self.send_tagged(self.tag, values)
    }

    pub fn send_tagged(
        &mut self,
        tag: ProtocolTag,
        values: Vec<BigUint>,
    ) -> Result<(), RuntimeError> {
        self.ensure_open()?;
        let msg = ProtocolMessage {
            session_id: self.id,
            tag,
            sequence_no: self.next_send,
            payload: values,
        };
        match self.inner.send(&msg) {
            Ok(()) => {
                self.next_send = self.next_send.wrapping_add(1);
                Ok(())
            }
            Err(e) => Err(self.abort(e)),
        }
    }

    pub fn recv(&mut self) -> Result<Vec<BigUint>, RuntimeError> {
        Ok(self.recv_message()?.payload)
    }

    pub fn recv_message(&mut self) -> Result<ProtocolMessage, RuntimeError> {
        self.ensure_open()?;
        let msg = match self.inbox.recv() {
            Ok(Ok(msg)) => msg,
            Ok(Err(e)) => return Err(self.abort(e)),
            Err(_) => return Err(self.abort(RuntimeError::TransportDisconnected)),
        };
        if msg.sequence_no != self.next_recv {
            let err = RuntimeError::SequenceGap {
                expected: self.next_recv,
                got: msg.sequence_no,
            };
            return Err(self.abort(err));
        }
        self.next_recv = self.next_recv.wrapping_add(1);
        Ok(msg)
    }

    /// Ends the session. An initiator tells the peer; an acceptor just forgets it.
    pub fn close(mut self) -> Result<(), RuntimeError> {
        self.finish()
    }

    fn finish(&mut self) -> Result<(), RuntimeError> {
        if self.state != SessionState::Open {
            return Ok(());
        }
        let result = if self.inner.role == PartyRole::P1 {
            let tag = self.tag;
            self.send_tagged(tag, Vec::new())
        } else {
            Ok(())
        };
        self.state = SessionState::Closed;
        self.inner.unregister(self.id);
        result
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.finish();
    }
}
