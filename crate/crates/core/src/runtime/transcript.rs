use std::fmt::Write as _;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use num_bigint::BigUint;

use super::wire::{ProtocolMessage, ProtocolTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    P1ToP2,
    P2ToP1,
}

#[derive(Debug, Clone)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub message: ProtocolMessage,
    pub wall_time: SystemTime,
}

/// How a value P2 decrypted was protected before P2 saw it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewKind {
    /// Additively masked by a fresh uniform element known only to P1.
    Blinded,
    /// Multiplicatively masked; only "is it zero" is meaningful to P2.
    ZeroTest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecryptionRecord {
    pub session_id: u64,
    pub tag: ProtocolTag,
    pub value: BigUint,
    pub kind: ViewKind,
}

#[derive(Debug, Clone, Default)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
    /// Every plaintext P2 obtained by decryption, in order.
    pub p2_decryptions: Vec<DecryptionRecord>,
}

pub type SharedTranscript = Arc<Mutex<Transcript>>;

impl Transcript {
    pub fn shared() -> SharedTranscript {
        Arc::new(Mutex::new(Transcript::default()))
    }

    pub fn record(&mut self, direction: Direction, message: &ProtocolMessage) {
        self.entries.push(TranscriptEntry {
            direction,
            message: message.clone(),
            wall_time: SystemTime::now(),
        });
    }

    pub fn record_decryption(
        &mut self,
        session_id: u64,
        tag: ProtocolTag,
        value: &BigUint,
        kind: ViewKind,
    ) {
        self.p2_decryptions.push(DecryptionRecord {
            session_id,
            tag,
            value: value.clone(),
            kind,
        });
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.p2_decryptions.clear();
    }

    /// Messages without timestamps, for comparing two runs.
    pub fn messages(&self) -> Vec<(Direction, ProtocolMessage)> {
        self.entries
            .iter()
            .map(|e| (e.direction, e.message.clone()))
            .collect()
    }

    /// P2's decrypted values, sorted, as a multiset.
    pub fn p2_view_multiset(&self) -> Vec<BigUint> {
        let mut values: Vec<_> = self
            .p2_decryptions
            .iter()
            .map(|d| d.value.clone())
            .collect();
        values.sort();
        values
    }

    /// One line per message: millis, direction, session, tag, seq, hex payload.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let millis = e
                .wall_time
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0);
            let dir = match e.direction {
                Direction::P1ToP2 => "p1->p2",
                Direction::P2ToP1 => "p2->p1",
            };
            let payload: Vec<String> = e
                .message
                .payload
                .iter()
                .map(|v| v.to_str_radix(16))
                .collect();
            let _ = writeln!(
                out,
                "{millis}\t{dir}\t{:016x}\t{}\t{}\t{}",
                e.message.session_id,
                e.message.tag,
                e.message.sequence_no,
                payload.join(",")
            );
        }
        out
    }
}
