use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::seq::SliceRandom;

use super::{
    bit_length, bits_of, payload_bits, ClassificationResult, DeliveredShare, EncryptedDatabase,
    EncryptedQuery, PpknnError, ResultMode,
};
use crate::paillier::Ciphertext;
use crate::protocols::{EncryptedBits, P1Session, PartyOne, ProtocolError};
use crate::runtime::{ProtocolTag, RuntimeError};

pub const DEFAULT_MAX_CLASSES: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifyOptions {
    pub max_classes: u64,
    /// Sessions run at once in the distance and decomposition stages.
    pub concurrency: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            max_classes: DEFAULT_MAX_CLASSES,
            concurrency: 1,
        }
    }
}

/// What P1 did in one extraction round. Everything here is already in P1's view; tests
/// decrypt it to check the pipeline.
#[derive(Debug, Clone)]
pub struct RoundTrace {
    pub min_distance: Ciphertext,
    pub payload: Ciphertext,
    /// `permutation[j]` is the record index sent at position `j`.
    pub permutation: Vec<usize>,
    pub position: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ClassifyTrace {
    pub distances: Vec<Ciphertext>,
    pub rounds: Vec<RoundTrace>,
}

pub fn classify(
    p1: &PartyOne,
    db: &EncryptedDatabase,
    query: &EncryptedQuery,
    options: &ClassifyOptions,
) -> Result<ClassificationResult, PpknnError> {
    classify_traced(p1, db, query, options).map(|(result, _)| result)
}

/// Runs the whole pipeline: distances, their decomposition, `k` rounds of minimum
/// extraction with exclusion, the vote, and delivery.
pub fn classify_traced(
    p1: &PartyOne,
    db: &EncryptedDatabase,
    query: &EncryptedQuery,
    options: &ClassifyOptions,
) -> Result<(ClassificationResult, ClassifyTrace), PpknnError> {
    let schema = db.schema;
    let n = db.len();
    let k = query.k;
    if k == 0 || k > n {
        return Err(PpknnError::KOutOfRange { k, n });
    }
    if schema.w == 0 || schema.w > options.max_classes {
        return Err(PpknnError::ClassCountOutOfRange {
            w: schema.w,
            max: options.max_classes,
        });
    }
    if query.attributes.len() != schema.m {
        return Err(PpknnError::Dimension {
            expected: schema.m,
            got: query.attributes.len(),
        });
    }
    let expected_pads = query.mode.pad_count(k);
    if query.pads.len() != expected_pads {
        return Err(PpknnError::PadMismatch {
            expected: expected_pads,
            got: query.pads.len(),
        });
    }
    let l = p1.config().bit_budget_l;
    if schema.l != l {
        return Err(PpknnError::InvalidSchema(format!(
            "database bit budget {} differs from the protocol's {l}",
            schema.l
        )));
    }
    if payload_bits(&schema, n) > l || bit_length(k as u64) > l {
        return Err(PpknnError::InvalidSchema(format!(
            "{n} records and {} classes do not fit a {l}-bit payload",
            schema.w
        )));
    }

    let pk = p1.public_key().clone();
    let mut trace = ClassifyTrace::default();

    let distances = run_indexed(n, options.concurrency, |i| {
        let mut s = p1.open(ProtocolTag::Ssed)?;
        let d = s.ssed(&db.records[i].attributes, &query.attributes)?;
        s.close()?;
        Ok(d)
    })?;
    let mut active: Vec<(usize, EncryptedBits)> = run_indexed(n, options.concurrency, |i| {
        let mut s = p1.open(ProtocolTag::Sbd)?;
        let bits = s.sbd(&distances[i])?;
        s.close()?;
        Ok((i, bits))
    })?
    .into_iter()
    .collect();
    trace.distances = distances;

    // Each record travels with `label + i * 2^label_bits`, so the exclusion step can find
    // exactly the record whose label was taken even when distances tie.
    let label_bits = schema.label_bits() as usize;
    let packed: Vec<Ciphertext> = db
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let offset = BigUint::from(i) << label_bits;
            pk.add(&r.label, &pk.encode_constant(&offset))
        })
        .collect();

    let mut extracted = Vec::with_capacity(k);
    for _ in 0..k {
        let mut s = p1.open(ProtocolTag::SminN)?;
        let entries = active
            .iter()
            .map(|(i, bits)| (bits.clone(), packed[*i].clone()))
            .collect();
        let (min_bits, payload) = s.smin_n(entries)?;
        s.close()?;

        let mut s = p1.open(ProtocolTag::Ppknn)?;
        let candidates: Vec<usize> = active.iter().map(|(i, _)| *i).collect();
        let (permutation, position) = exclusion_step(&mut s, &candidates, &packed, &payload)?;
        s.close()?;
        let excluded = permutation[position];
        active.retain(|(i, _)| *i != excluded);

        trace.rounds.push(RoundTrace {
            min_distance: min_bits.recompose(&pk),
            payload: payload.clone(),
            permutation,
            position,
            excluded,
        });
        extracted.push(payload);
    }

    let width = payload_bits(&schema, n) as usize;
    let mut label_bits_list = Vec::with_capacity(k);
    {
        let mut s = p1.open(ProtocolTag::Sbd)?;
        for payload in &extracted {
            let bits = s.sbd_with_len(payload, width)?;
            label_bits_list.push(bits_of(&bits, 0..label_bits));
        }
        s.close()?;
    }

    let to_deliver: Vec<Ciphertext> = match query.mode {
        ResultMode::SecureMajority => vec![majority_from_bits(p1, &label_bits_list, schema.w)?],
        ResultMode::Fast => label_bits_list.iter().map(|b| b.recompose(&pk)).collect(),
    };
    let mut shares = Vec::with_capacity(to_deliver.len());
    for (c, pad) in to_deliver.iter().zip(&query.pads) {
        shares.push(deliver_result(p1, c, Some(pad))?);
    }
    Ok((
        ClassificationResult {
            k_used: k,
            mode: query.mode,
            shares,
        },
        trace,
    ))
}

/// Finds which candidate carries `payload`. P2 sees `rho_j * (p_j - payload)` for fresh
/// nonzero `rho_j` under a fresh permutation and reports the position of the zero.
pub fn exclusion_step(
    s: &mut P1Session,
    candidates: &[usize],
    packed: &[Ciphertext],
    payload: &Ciphertext,
) -> Result<(Vec<usize>, usize), ProtocolError> {
    let pk = s.public_key().clone();
    let mut permutation = candidates.to_vec();
    permutation.shuffle(s.rng());
    let mut masked = Vec::with_capacity(permutation.len());
    for &i in &permutation {
        let rho = pk.random_nonzero(s.rng());
        let diff = pk.scalar_exp(&pk.sub(&packed[i], payload), &rho);
        masked.push(pk.rerandomize(&diff, s.rng()).into_biguint());
    }
    let reply = s.request(ProtocolTag::Ppknn, masked, 1)?;
    match reply[0].to_usize() {
        Some(position) if position < permutation.len() => Ok((permutation, position)),
        _ => Err(ProtocolError::Abort(format!(
            "exclusion reply {} is not a position",
            reply[0]
        ))),
    }
}

/// Decomposes each label and runs the vote. Labels must be below `w`.
pub fn majority_label(
    p1: &PartyOne,
    labels: &[Ciphertext],
    w: u64,
    options: &ClassifyOptions,
) -> Result<Ciphertext, PpknnError> {
    if w == 0 || w > options.max_classes {
        return Err(PpknnError::ClassCountOutOfRange {
            w,
            max: options.max_classes,
        });
    }
    let width = bit_length(w - 1).max(1) as usize;
    let mut s = p1.open(ProtocolTag::Sbd)?;
    let mut bits = Vec::with_capacity(labels.len());
    for c in labels {
        bits.push(s.sbd_with_len(c, width)?);
    }
    s.close()?;
    majority_from_bits(p1, &bits, w)
}

/// `E(c)` for the most frequent class `c` among the bit-decomposed labels; ties go to the
/// smallest class id.
///
/// For each class `c` and label `x`, `[x = c]` is the product over bit positions of
/// `x_i` (where `c_i = 1`) or `1 - x_i` (where `c_i = 0`). Summing gives `E(freq_c)`;
/// `k - freq_c` is decomposed and the classes, in id order, go through the secure
/// minimum with `E(c)` as payload.
pub fn majority_from_bits(
    p1: &PartyOne,
    labels: &[EncryptedBits],
    w: u64,
) -> Result<Ciphertext, PpknnError> {
    let k = labels.len();
    let Some(first) = labels.first() else {
        return Err(ProtocolError::EmptyInput.into());
    };
    let width = first.len();
    if width == 0 || (width < 64 && w > 1u64 << width) {
        return Err(PpknnError::ClassCountOutOfRange {
            w,
            max: 1u64 << width.min(63),
        });
    }
    if let Some(bad) = labels.iter().find(|b| b.len() != width) {
        return Err(ProtocolError::Dimension {
            expected: width,
            got: bad.len(),
        }
        .into());
    }
    let pk = p1.public_key().clone();
    let one = pk.encode_constant(&BigUint::one());
    let count_bits = bit_length(k as u64) as usize;

    let mut s = p1.open(ProtocolTag::Ppknn)?;
    let mut entries = Vec::with_capacity(w as usize);
    for c in 0..w {
        let mut freq = pk.encode_constant(&BigUint::from(0u32));
        for label in labels {
            let mut eq: Option<Ciphertext> = None;
            for (i, bit) in label.bits().iter().enumerate() {
                let matches = if (c >> i) & 1 == 1 {
                    bit.clone()
                } else {
                    pk.sub(&one, bit)
                };
                eq = Some(match eq {
                    None => matches,
                    Some(acc) => s.sm(&acc, &matches)?,
                });
            }
            freq = pk.add(&freq, &eq.expect("width >= 1"));
        }
        let shortfall = pk.sub(&pk.encode_constant(&BigUint::from(k)), &freq);
        let bits = s.sbd_with_len(&shortfall, count_bits)?;
        let class = pk.encrypt_u64(c, s.rng());
        entries.push((bits, class));
    }
    let (_, winner) = s.smin_n(entries)?;
    s.close()?;
    Ok(winner)
}

/// Delivers `E(c)` to the user: P2 decrypts `c + r + t` for P1's fresh mask `r` and the
/// user's pad `t`, and the user receives `r` and that value.
pub fn deliver_result(
    p1: &PartyOne,
    c: &Ciphertext,
    pad: Option<&Ciphertext>,
) -> Result<DeliveredShare, PpknnError> {
    let pk = p1.public_key().clone();
    let mut s = p1.open(ProtocolTag::Result)?;
    let r = pk.random_plaintext(s.rng());
    let mut blinded = pk.add(c, &pk.encrypt(&r, s.rng())?);
    if let Some(pad) = pad {
        blinded = pk.add(&blinded, pad);
    }
    let reply = s.request(ProtocolTag::Result, vec![blinded.into_biguint()], 1)?;
    s.close()?;
    let value = reply.into_iter().next().expect("one entry");
    if &value >= pk.n() {
        return Err(ProtocolError::Runtime(RuntimeError::Aborted(
            "delivered value is not reduced mod N".into(),
        ))
        .into());
    }
    Ok(DeliveredShare {
        blinding: r,
        blinded: value,
    })
}

/// Runs `f(0..n)` on up to `concurrency` threads, keeping results in index order.
fn run_indexed<T, F>(n: usize, concurrency: usize, f: F) -> Result<Vec<T>, PpknnError>
where
    T: Send,
    F: Fn(usize) -> Result<T, ProtocolError> + Sync,
{
    if concurrency <= 1 || n <= 1 {
        return (0..n).map(|i| f(i).map_err(Into::into)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    let failure: Mutex<Option<ProtocolError>> = Mutex::new(None);
    thread::scope(|scope| {
        for _ in 0..concurrency.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n || failure.lock().unwrap().is_some() {
                    return;
                }
                match f(i) {
                    Ok(v) => slots.lock().unwrap()[i] = Some(v),
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e);
                        return;
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e.into());
    }
    Ok(slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|v| v.expect("every index ran"))
        .collect())
}
