//! Binary framing for [`ProtocolMessage`].
//!
//! ```text
//! version:u8 (0x01) | tag:u8 | session_id:u64 | sequence_no:u32 | count:u16
//! count x ( len:u32 | len bytes, big-endian unsigned, no leading zero byte )
//! crc32:u32 over everything before it
//! ```
//! All multi-byte integers are big-endian.

use std::io::Read;

use num_bigint::BigUint;
use thiserror::Error;

pub const WIRE_VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 16;
pub const TRAILER_LEN: usize = 4;
/// Upper bound on the payload section (length prefixes plus integer bytes).
pub const MAX_PAYLOAD_BYTES: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ProtocolTag {
    Sm = 1,
    Ssed = 2,
    Sbd = 3,
    Lsb = 4,
    Smin = 5,
    SminN = 6,
    Ppknn = 7,
    Result = 8,
}

impl ProtocolTag {
    pub const ALL: [ProtocolTag; 8] = [
        ProtocolTag::Sm,
        ProtocolTag::Ssed,
        ProtocolTag::Sbd,
        ProtocolTag::Lsb,
        ProtocolTag::Smin,
        ProtocolTag::SminN,
        ProtocolTag::Ppknn,
        ProtocolTag::Result,
    ];

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == b)
    }

    pub fn name(self) -> &'static str {
        match self {
            ProtocolTag::Sm => "SM",
            ProtocolTag::Ssed => "SSED",
            ProtocolTag::Sbd => "SBD",
            ProtocolTag::Lsb => "LSB",
            ProtocolTag::Smin => "SMIN",
            ProtocolTag::SminN => "SMINN",
            ProtocolTag::Ppknn => "PPKNN",
            ProtocolTag::Result => "RESULT",
        }
    }
}

impl std::fmt::Display for ProtocolTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub session_id: u64,
    pub tag: ProtocolTag,
    pub sequence_no: u32,
    pub payload: Vec<BigUint>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("frame truncated")]
    Truncated,
    #[error("unsupported wire version {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("unknown protocol tag {0:#04x}")]
    UnknownTag(u8),
    #[error("payload of {0} bytes exceeds the frame limit")]
    Oversize(usize),
    #[error("payload entry {0} is not canonically encoded")]
    NonCanonical(usize),
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("payload has {0} entries; at most 65535 fit in a frame")]
    TooManyEntries(usize),
    #[error("payload of {0} bytes exceeds the frame limit")]
    Oversize(usize),
}

pub fn encode_message(msg: &ProtocolMessage) -> Result<Vec<u8>, EncodeError> {
    let count = u16::try_from(msg.payload.len())
        .map_err(|_| EncodeError::TooManyEntries(msg.payload.len()))?;
    let entries: Vec<Vec<u8>> = msg
        .payload
        .iter()
        .map(|v| {
            if v.bits() == 0 {
                Vec::new()
            } else {
                v.to_bytes_be()
            }
        })
        .collect();
    let payload_len: usize = entries.iter().map(|e| 4 + e.len()).sum();
    if payload_len > MAX_PAYLOAD_BYTES {
        return Err(EncodeError::Oversize(payload_len));
    }

    let mut out = Vec::with_capacity(HEADER_LEN + payload_len + TRAILER_LEN);
    out.push(WIRE_VERSION);
    out.push(msg.tag as u8);
    out.extend_from_slice(&msg.session_id.to_be_bytes());
    out.extend_from_slice(&msg.sequence_no.to_be_bytes());
    out.extend_from_slice(&count.to_be_bytes());
    for e in &entries {
        out.extend_from_slice(&(e.len() as u32).to_be_bytes());
        out.extend_from_slice(e);
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(DecodeError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Decodes exactly one frame; the whole slice must be consumed.
pub fn decode_message(bytes: &[u8]) -> Result<ProtocolMessage, DecodeError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let header = cur.take(HEADER_LEN)?;
    let version = header[0];
    let tag_byte = header[1];
    let session_id = u64::from_be_bytes(header[2..10].try_into().unwrap());
    let sequence_no = u32::from_be_bytes(header[10..14].try_into().unwrap());
    let count = u16::from_be_bytes(header[14..16].try_into().unwrap()) as usize;

    let mut payload = Vec::with_capacity(count.min(1024));
    let mut payload_len = 0usize;
    for index in 0..count {
        let len = cur.u32()? as usize;
        payload_len = payload_len.saturating_add(4).saturating_add(len);
        if payload_len > MAX_PAYLOAD_BYTES {
            return Err(DecodeError::Oversize(payload_len));
        }
        let raw = cur.take(len)?;
        payload.push((index, raw));
    }
    let body_end = cur.pos;
    let crc = cur.u32()?;
    if cur.pos != bytes.len() {
        return Err(DecodeError::TrailingBytes(bytes.len() - cur.pos));
    }
    if crc32fast::hash(&bytes[..body_end]) != crc {
        return Err(DecodeError::ChecksumMismatch);
    }
    if version != WIRE_VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let tag = ProtocolTag::from_byte(tag_byte).ok_or(DecodeError::UnknownTag(tag_byte))?;
    let payload = payload
        .into_iter()
        .map(|(index, raw)| {
            if raw.first() == Some(&0) {
                Err(DecodeError::NonCanonical(index))
            } else {
                Ok(BigUint::from_bytes_be(raw))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(ProtocolMessage {
        session_id,
        tag,
        sequence_no,
        payload,
    })
}

/// Reads the bytes of one frame from a stream without interpreting them beyond the
/// length fields. Returns `Ok(None)` on a clean end of stream before any byte.
pub fn read_frame<R: Read>(reader: &mut R) -> std::io::Result<Option<Vec<u8>>> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(std::io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let count = u16::from_be_bytes([header[14], header[15]]) as usize;
    let mut frame = header.to_vec();
    let mut payload_len = 0usize;
    for _ in 0..count {
        let mut len = [0u8; 4];
        reader.read_exact(&mut len)?;
        let n = u32::from_be_bytes(len) as usize;
        payload_len = payload_len.saturating_add(4 + n);
        if payload_len > MAX_PAYLOAD_BYTES {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                DecodeError::Oversize(payload_len),
            ));
        }
        frame.extend_from_slice(&len);
        let start = frame.len();
        frame.resize(start + n, 0);
        reader.read_exact(&mut frame[start..])?;
    }
    let mut crc = [0u8; TRAILER_LEN];
    reader.read_exact(&mut crc)?;
    frame.extend_from_slice(&crc);
    Ok(Some(frame))
}
