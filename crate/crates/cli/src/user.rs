//! The exchange between a querying user and P1, over one TCP connection.
//!
//! | seq | direction | tag      | payload                                   |
//! |-----|-----------|----------|-------------------------------------------|
//! | 0   | user → P1 | `PPKNN`  | `N`                                       |
//! | 0   | P1 → user | `PPKNN`  | `m, w, l` or an error code                |
//! | 1   | user → P1 | `PPKNN`  | `k, mode, E(q_1)..E(q_m), E(t_1)..E(t_p)` |
//! | 1   | P1 → user | `RESULT` | `r_1, v_1, .., r_p, v_p` or an error code |
//!
//! `p` is 1 in secure mode and `k` in fast mode. A one-entry reply is always an error code.

use std::io::{Read, Write};

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use ppknn_core::paillier::PublicKey;
use ppknn_core::ppknn::{
    classify, ClassificationResult, ClassifyOptions, DeliveredShare, EncryptedDatabase,
    EncryptedQuery, PpknnError, QueryPads, ResultMode, Schema,
};
use ppknn_core::protocols::{EncryptedVector, PartyOne};
use ppknn_core::runtime::wire::read_frame;
use ppknn_core::runtime::{decode_message, encode_message, ProtocolMessage, ProtocolTag};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ErrorCode {
    KeyMismatch = 1,
    Dimension = 2,
    KOutOfRange = 3,
    Malformed = 4,
    ProtocolFailure = 5,
}

impl ErrorCode {
    pub fn from_value(v: &BigUint) -> Option<Self> {
        Some(match v.to_u8()? {
            1 => ErrorCode::KeyMismatch,
            2 => ErrorCode::Dimension,
            3 => ErrorCode::KOutOfRange,
            4 => ErrorCode::Malformed,
            5 => ErrorCode::ProtocolFailure,
            _ => return None,
        })
    }

    pub fn describe(self) -> &'static str {
        match self {
            ErrorCode::KeyMismatch => "P1 serves a database under a different key",
            ErrorCode::Dimension => "query arity does not match the database",
            ErrorCode::KOutOfRange => "k is outside [1, n]",
            ErrorCode::Malformed => "P1 could not parse the request",
            ErrorCode::ProtocolFailure => "the two-party protocol failed",
        }
    }
}

#[derive(Debug, Error)]
pub enum ExchangeError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad frame: {0}")]
    Frame(String),
    #[error("peer closed the connection")]
    Closed,
    #[error("{}", .0.describe())]
    Code(ErrorCode),
    #[error("unexpected reply: {0}")]
    Unexpected(String),
    #[error(transparent)]
    Ppknn(#[from] PpknnError),
}

fn send<W: Write>(w: &mut W, msg: &ProtocolMessage) -> Result<(), ExchangeError> {
    let bytes = encode_message(msg).map_err(|e| ExchangeError::Frame(e.to_string()))?;
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

fn recv<R: Read>(r: &mut R) -> Result<ProtocolMessage, ExchangeError> {
    let frame = read_frame(r)?.ok_or(ExchangeError::Closed)?;
    decode_message(&frame).map_err(|e| ExchangeError::Frame(e.to_string()))
}

fn message(session_id: u64, tag: ProtocolTag, seq: u32, payload: Vec<BigUint>) -> ProtocolMessage {
    ProtocolMessage {
        session_id,
        tag,
        sequence_no: seq,
        payload,
    }
}

fn expect(msg: &ProtocolMessage, id: u64, tag: ProtocolTag, seq: u32) -> Result<(), ExchangeError> {
    if msg.session_id != id || msg.tag != tag || msg.sequence_no != seq {
        return Err(ExchangeError::Unexpected(format!(
            "session {:#x} {} seq {}",
            msg.session_id, msg.tag, msg.sequence_no
        )));
    }
    if let [code] = msg.payload.as_slice() {
        return Err(match ErrorCode::from_value(code) {
            Some(code) => ExchangeError::Code(code),
            None => ExchangeError::Unexpected(format!("error code {code}")),
        });
    }
    Ok(())
}

/// User side, first half: asks P1 for the database schema.
pub fn fetch_schema<S: Read + Write>(
    stream: &mut S,
    pk: &PublicKey,
    session_id: u64,
) -> Result<Schema, ExchangeError> {
    send(
        stream,
        &message(session_id, ProtocolTag::Ppknn, 0, vec![pk.n().clone()]),
    )?;
    let reply = recv(stream)?;
    expect(&reply, session_id, ProtocolTag::Ppknn, 0)?;
    let fields: Vec<u64> = reply.payload.iter().filter_map(|v| v.to_u64()).collect();
    match fields.as_slice() {
        [m, w, l] if reply.payload.len() == 3 && *l <= u32::MAX as u64 => Ok(Schema {
            m: *m as usize,
            w: *w,
            l: *l as u32,
        }),
        _ => Err(ExchangeError::Unexpected("schema reply".into())),
    }
}

/// User side, second half: sends the encrypted query and returns the delivered shares.
pub fn submit_query<S: Read + Write>(
    stream: &mut S,
    session_id: u64,
    query: &EncryptedQuery,
) -> Result<ClassificationResult, ExchangeError> {
    let mut payload = vec![BigUint::from(query.k), BigUint::from(query.mode.code())];
    payload.extend(
        query
            .attributes
            .elements()
            .iter()
            .map(|c| c.as_biguint().clone()),
    );
    payload.extend(query.pads.iter().map(|c| c.as_biguint().clone()));
    send(stream, &message(session_id, ProtocolTag::Ppknn, 1, payload))?;
    let reply = recv(stream)?;
    expect(&reply, session_id, ProtocolTag::Result, 1)?;
    let expected = query.mode.pad_count(query.k);
    if reply.payload.len() != 2 * expected {
        return Err(ExchangeError::Unexpected(format!(
            "{} result entries, expected {}",
            reply.payload.len(),
            2 * expected
        )));
    }
    let mut values = reply.payload.into_iter();
    let shares = (0..expected)
        .map(|_| DeliveredShare {
            blinding: values.next().expect("counted"),
            blinded: values.next().expect("counted"),
        })
        .collect();
    Ok(ClassificationResult {
        k_used: query.k,
        mode: query.mode,
        shares,
    })
}

/// Reconstructs the label the user asked for.
pub fn reconstruct(
    pk: &PublicKey,
    result: &ClassificationResult,
    pads: &QueryPads,
) -> Result<u64, ExchangeError> {
    Ok(result.label(pk, pads)?)
}

/// P1 side: answers one user connection. Returns the classification error, if any, after
/// the user has been told.
pub fn serve_user<S: Read + Write>(
    stream: &mut S,
    p1: &PartyOne,
    db: &EncryptedDatabase,
    options: &ClassifyOptions,
) -> Result<(), ExchangeError> {
    let pk = p1.public_key();
    let hello = recv(stream)?;
    let id = hello.session_id;
    let reply_code = |s: &mut S, tag, seq, code: ErrorCode| {
        send(s, &message(id, tag, seq, vec![BigUint::from(code as u8)]))
    };
    if hello.tag != ProtocolTag::Ppknn || hello.sequence_no != 0 {
        reply_code(stream, ProtocolTag::Ppknn, 0, ErrorCode::Malformed)?;
        return Err(ExchangeError::Code(ErrorCode::Malformed));
    }
    if hello.payload != [pk.n().clone()] {
        reply_code(stream, ProtocolTag::Ppknn, 0, ErrorCode::KeyMismatch)?;
        return Err(ExchangeError::Code(ErrorCode::KeyMismatch));
    }
    let s = db.schema;
    send(
        stream,
        &message(
            id,
            ProtocolTag::Ppknn,
            0,
            vec![BigUint::from(s.m), BigUint::from(s.w), BigUint::from(s.l)],
        ),
    )?;

    let request = recv(stream)?;
    let parsed = if request.session_id != id
        || request.tag != ProtocolTag::Ppknn
        || request.sequence_no != 1
    {
        Err(ErrorCode::Malformed)
    } else {
        parse_query(request.payload, pk, s.m)
    };
    let query = match parsed {
        Ok(q) => q,
        Err(code) => {
            reply_code(stream, ProtocolTag::Result, 1, code)?;
            return Err(ExchangeError::Code(code));
        }
    };
    match classify(p1, db, &query, options) {
        Ok(result) => {
            let payload = result
                .shares
                .into_iter()
                .flat_map(|s| [s.blinding, s.blinded])
                .collect();
            send(stream, &message(id, ProtocolTag::Result, 1, payload))
        }
        Err(e) => {
            let code = match e {
                PpknnError::KOutOfRange { .. } => ErrorCode::KOutOfRange,
                PpknnError::Dimension { .. } => ErrorCode::Dimension,
                _ => ErrorCode::ProtocolFailure,
            };
            reply_code(stream, ProtocolTag::Result, 1, code)?;
            Err(e.into())
        }
    }
}

fn parse_query(
    payload: Vec<BigUint>,
    pk: &PublicKey,
    m: usize,
) -> Result<EncryptedQuery, ErrorCode> {
    let mut values = payload.into_iter();
    let k = values
        .next()
        .and_then(|v| v.to_usize())
        .ok_or(ErrorCode::Malformed)?;
    let mode = values
        .next()
        .and_then(|v| v.to_u64())
        .and_then(ResultMode::from_code)
        .ok_or(ErrorCode::Malformed)?;
    if k == 0 {
        return Err(ErrorCode::KOutOfRange);
    }
    let rest: Vec<BigUint> = values.collect();
    if rest.len() != m + mode.pad_count(k) {
        return Err(ErrorCode::Dimension);
    }
    let mut cts = Vec::with_capacity(rest.len());
    for v in rest {
        cts.push(pk.validate(v).map_err(|_| ErrorCode::Malformed)?);
    }
    let pads = cts.split_off(m);
    Ok(EncryptedQuery {
        attributes: EncryptedVector::new(cts),
        k,
        mode,
        pads,
    })
}
