//! Encrypted k-NN classification: database and query encryption, the classification
//! pipeline, the homomorphic majority vote, and blinded delivery of the answer.

mod classify;
mod dbfile;

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use rand::Rng;
use thiserror::Error;

use crate::paillier::{Ciphertext, PaillierError, PublicKey};
use crate::protocols::{EncryptedBits, EncryptedVector, ProtocolError};

pub use classify::{
    classify, classify_traced, deliver_result, exclusion_step, majority_from_bits, majority_label,
    ClassifyOptions, ClassifyTrace, RoundTrace, DEFAULT_MAX_CLASSES,
};
pub use dbfile::DB_HEADER_PREFIX;

#[derive(Debug, Error)]
pub enum PpknnError {
    #[error("record {record}, attribute {column}: value {value} is not below {bound}")]
    AttributeOutOfRange {
        record: usize,
        column: usize,
        value: u64,
        bound: u64,
    },
    #[error("record {record}: label {label} is not below the class count {w}")]
    LabelOutOfRange { record: usize, label: u64, w: u64 },
    #[error("record {record} has {got} attributes, schema has {expected}")]
    SchemaMismatch {
        record: usize,
        expected: usize,
        got: usize,
    },
    #[error("query has {got} attributes, schema has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("k = {k} outside [1, {n}]")]
    KOutOfRange { k: usize, n: usize },
    #[error("class count {w} outside [1, {max}]")]
    ClassCountOutOfRange { w: u64, max: u64 },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("query carries {got} delivery pads, expected {expected}")]
    PadMismatch { expected: usize, got: usize },
    #[error("database file line {line}: {reason}")]
    DatabaseFile { line: usize, reason: String },
    #[error("delivered value does not reconstruct to a label: {0}")]
    Reconstruction(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
}

/// Public shape of a database: `m` attributes, `w` classes, bit budget `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schema {
    pub m: usize,
    pub w: u64,
    pub l: u32,
}

impl Schema {
    /// Largest `l'` with `m * 2^(2 l') <= 2^l`; every attribute must be below `2^l'`, which
    /// keeps each squared distance below `2^l`.
    pub fn attribute_bits(&self) -> u32 {
        let m = self.m.max(1) as u128;
        let mut bits = 0u32;
        while 2 * (bits + 1) + ceil_log2(m) <= self.l.min(126) {
            bits += 1;
        }
        bits.min(63)
    }

    pub fn attribute_bound(&self) -> u64 {
        1u64 << self.attribute_bits()
    }

    /// Bits needed to hold any label in `[0, w)`, at least one.
    pub fn label_bits(&self) -> u32 {
        bit_length(self.w.saturating_sub(1)).max(1)
    }

    fn check_attributes(&self, record: usize, attributes: &[u64]) -> Result<(), PpknnError> {
        let bound = self.attribute_bound();
        match attributes.iter().position(|&a| a >= bound) {
            Some(column) => Err(PpknnError::AttributeOutOfRange {
                record,
                column,
                value: attributes[column],
                bound,
            }),
            None => Ok(()),
        }
    }
}

fn ceil_log2(x: u128) -> u32 {
    if x <= 1 {
        0
    } else {
        128 - (x - 1).leading_zeros()
    }
}

pub(crate) fn bit_length(x: u64) -> u32 {
    64 - x.leading_zeros()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlainRecord {
    pub attributes: Vec<u64>,
    pub label: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedRecord {
    pub attributes: EncryptedVector,
    pub label: Ciphertext,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedDatabase {
    pub schema: Schema,
    pub records: Vec<EncryptedRecord>,
}

impl EncryptedDatabase {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks that every cell is a valid ciphertext under `pk`.
    pub fn check_key(&self, pk: &PublicKey) -> Result<(), PpknnError> {
        for (i, r) in self.records.iter().enumerate() {
            for c in r.attributes.elements().iter().chain([&r.label]) {
                pk.validate(c.as_biguint().clone())
                    .map_err(|e| PpknnError::DatabaseFile {
                        line: i + 2,
                        reason: format!("not a ciphertext under this key: {e}"),
                    })?;
            }
        }
        Ok(())
    }
}

/// Encrypts every attribute and the label of every record, preserving order.
pub fn encrypt_database<R: Rng + ?Sized>(
    pk: &PublicKey,
    schema: Schema,
    records: &[PlainRecord],
    rng: &mut R,
) -> Result<EncryptedDatabase, PpknnError> {
    if !records.is_empty() && (schema.m == 0 || schema.w == 0) {
        return Err(PpknnError::InvalidSchema(
            "a nonempty database needs m >= 1 and w >= 1".into(),
        ));
    }
    for (i, r) in records.iter().enumerate() {
        if r.attributes.len() != schema.m {
            return Err(PpknnError::SchemaMismatch {
                record: i,
                expected: schema.m,
                got: r.attributes.len(),
            });
        }
        schema.check_attributes(i, &r.attributes)?;
        if r.label >= schema.w {
            return Err(PpknnError::LabelOutOfRange {
                record: i,
                label: r.label,
                w: schema.w,
            });
        }
    }
    let records = records
        .iter()
        .map(|r| EncryptedRecord {
            attributes: EncryptedVector::encrypt(pk, &r.attributes, rng),
            label: pk.encrypt_u64(r.label, rng),
        })
        .collect();
    Ok(EncryptedDatabase { schema, records })
}

/// How the answer reaches the user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResultMode {
    /// The majority vote runs under encryption; the user receives one label.
    #[default]
    SecureMajority,
    /// The k neighbor labels are delivered individually and the user votes.
    Fast,
}

impl ResultMode {
    pub fn code(self) -> u64 {
        match self {
            ResultMode::SecureMajority => 0,
            ResultMode::Fast => 1,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(ResultMode::SecureMajority),
            1 => Some(ResultMode::Fast),
            _ => None,
        }
    }

    /// Delivery pads a query in this mode carries.
    pub fn pad_count(self, k: usize) -> usize {
        match self {
            ResultMode::SecureMajority => 1,
            ResultMode::Fast => k,
        }
    }
}

impl fmt::Display for ResultMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResultMode::SecureMajority => "secure",
            ResultMode::Fast => "fast",
        })
    }
}

impl FromStr for ResultMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "secure" => Ok(ResultMode::SecureMajority),
            "fast" => Ok(ResultMode::Fast),
            other => Err(format!("unknown mode {other:?}, expected secure or fast")),
        }
    }
}

/// A user's encrypted query.
///
/// Besides the attributes it carries `E(t)` for user-chosen pads `t`. P2 decrypts the
/// answer blinded by both P1's mask and the pad, so neither cloud party can unblind it
/// even though P2's share travels back through P1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedQuery {
    pub attributes: EncryptedVector,
    pub k: usize,
    pub mode: ResultMode,
    pub pads: Vec<Ciphertext>,
}

/// The user's secret pads matching [`EncryptedQuery::pads`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryPads(pub Vec<BigUint>);

pub fn encrypt_query<R: Rng + ?Sized>(
    pk: &PublicKey,
    schema: &Schema,
    q: &[u64],
    k: usize,
    mode: ResultMode,
    rng: &mut R,
) -> Result<(EncryptedQuery, QueryPads), PpknnError> {
    if q.len() != schema.m {
        return Err(PpknnError::Dimension {
            expected: schema.m,
            got: q.len(),
        });
    }
    schema.check_attributes(0, q)?;
    if k == 0 {
        return Err(PpknnError::KOutOfRange { k, n: 0 });
    }
    let pads: Vec<BigUint> = (0..mode.pad_count(k))
        .map(|_| pk.random_plaintext(rng))
        .collect();
    let query = EncryptedQuery {
        attributes: EncryptedVector::encrypt(pk, q, rng),
        k,
        mode,
        pads: pads
            .iter()
            .map(|t| pk.encrypt(t, rng).expect("pads are reduced mod N"))
            .collect(),
    };
    Ok((query, QueryPads(pads)))
}

/// What the user receives for one delivered label: P1's mask `r` and P2's decryption of
/// `label + r + t mod N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveredShare {
    pub blinding: BigUint,
    pub blinded: BigUint,
}

impl DeliveredShare {
    /// `blinded - blinding - pad mod N`.
    pub fn reconstruct(&self, pk: &PublicKey, pad: &BigUint) -> BigUint {
        let n = pk.n();
        ((&self.blinded % n) + 2u32 * n - (&self.blinding % n) - (pad % n)) % n
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassificationResult {
    pub k_used: usize,
    pub mode: ResultMode,
    pub shares: Vec<DeliveredShare>,
}

impl ClassificationResult {
    /// Every delivered label: one in secure mode, `k` nearest first in fast mode.
    pub fn labels(&self, pk: &PublicKey, pads: &QueryPads) -> Result<Vec<u64>, PpknnError> {
        if pads.0.len() != self.shares.len() {
            return Err(PpknnError::PadMismatch {
                expected: self.shares.len(),
                got: pads.0.len(),
            });
        }
        self.shares
            .iter()
            .zip(&pads.0)
            .map(|(s, t)| {
                let v = s.reconstruct(pk, t);
                u64::try_from(&v).map_err(|_| PpknnError::Reconstruction(format!("{v:x}")))
            })
            .collect()
    }

    /// The class label; in fast mode the user-side vote uses the smallest-class-id tie rule.
    pub fn label(&self, pk: &PublicKey, pads: &QueryPads) -> Result<u64, PpknnError> {
        let labels = self.labels(pk, pads)?;
        crate::oracle::majority(&labels, crate::oracle::TieRule::SmallestClassId)
            .map_err(|e| PpknnError::Reconstruction(e.to_string()))
    }
}

/// Bits of a record's packed payload `label + index * 2^label_bits`.
pub(crate) fn payload_bits(schema: &Schema, n: usize) -> u32 {
    schema.label_bits() + bit_length(n.saturating_sub(1) as u64)
}

pub(crate) fn bits_of(bits: &EncryptedBits, range: std::ops::Range<usize>) -> EncryptedBits {
    EncryptedBits::new(bits.bits()[range].to_vec())
}
