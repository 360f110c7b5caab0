//! Plaintext mirrors of every protocol, used as ground truth in differential tests.
//! Quadratic where that keeps them obviously correct.

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("value {value} does not fit in {bits} bits")]
    OutOfRange { value: u64, bits: u32 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("k = {k} outside [1, {n}]")]
    KOutOfRange { k: usize, n: usize },
    #[error("empty input")]
    EmptyInput,
}

/// How a vote between equally frequent labels is settled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    /// The tied label held by the nearest neighbor wins.
    FirstIndex,
    /// The smallest tied class id wins. This is what the secure majority does.
    #[default]
    SmallestClassId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleConfig {
    pub tie_rule: TieRule,
    pub l: u32,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            tie_rule: TieRule::SmallestClassId,
            l: 32,
        }
    }
}

/// A labelled record with plaintext attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPoint {
    pub attributes: Vec<u64>,
    pub label: u64,
}

/// Bits of `x`, least significant first: repeatedly take `x mod 2`, then `x <- floor(x/2)`.
pub fn binary_decompose(x: u64, m: u32) -> Result<Vec<u8>, OracleError> {
    if m < 64 && x >> m != 0 {
        return Err(OracleError::OutOfRange { value: x, bits: m });
    }
    let mut x = x;
    let mut bits = Vec::with_capacity(m as usize);
    for _ in 0..m {
        bits.push((x % 2) as u8);
        x /= 2;
    }
    Ok(bits)
}

pub fn squared_distance(x: &[u64], y: &[u64]) -> Result<u128, OracleError> {
    if x.len() != y.len() {
        return Err(OracleError::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(x.iter()
        .zip(y)
        .map(|(&a, &b)| {
            let d = a.abs_diff(b) as u128;
            d * d
        })
        .sum())
}

/// Minimum and its payload; the first occurrence wins ties.
pub fn min_n_plain<P: Clone>(values: &[(u64, P)]) -> Result<(u64, P), OracleError> {
    let mut best = values.first().ok_or(OracleError::EmptyInput)?;
    for entry in &values[1..] {
        if entry.0 < best.0 {
            best = entry;
        }
    }
    Ok(best.clone())
}

/// Indices of the `k` nearest records, nearest first; equal distances keep index order.
pub fn nearest_indices(
    records: &[LabeledPoint],
    q: &[u64],
    k: usize,
) -> Result<Vec<usize>, OracleError> {
    if k == 0 || k > records.len() {
        return Err(OracleError::KOutOfRange {
            k,
            n: records.len(),
        });
    }
    let mut scored = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        scored.push((squared_distance(&r.attributes, q)?, i));
    }
    scored.sort();
    Ok(scored.into_iter().take(k).map(|(_, i)| i).collect())
}

/// Majority label of `labels` (given nearest first) under `rule`.
pub fn majority(labels: &[u64], rule: TieRule) -> Result<u64, OracleError> {
    if labels.is_empty() {
        return Err(OracleError::EmptyInput);
    }
    let count = |c: u64| labels.iter().filter(|&&l| l == c).count();
    let best = labels.iter().map(|&c| count(c)).max().unwrap_or(0);
    let winner = match rule {
        TieRule::FirstIndex => labels.iter().copied().find(|&c| count(c) == best),
        TieRule::SmallestClassId => labels.iter().copied().filter(|&c| count(c) == best).min(),
    };
    Ok(winner.expect("nonempty"))
}

/// Plaintext k-NN: majority label among the `k` smallest squared distances.
pub fn knn_classify_plain(
    records: &[LabeledPoint],
    q: &[u64],
    k: usize,
    config: &OracleConfig,
) -> Result<u64, OracleError> {
    let idx = nearest_indices(records, q, k)?;
    let labels: Vec<u64> = idx.iter().map(|&i| records[i].label).collect();
    majority(&labels, config.tie_rule)
}

/// Every label the classifier may return when distances tie at the k-th boundary: each
/// way of filling the boundary from the tied group is tried.
pub fn achievable_labels(
    records: &[LabeledPoint],
    q: &[u64],
    k: usize,
    config: &OracleConfig,
) -> Result<BTreeSet<u64>, OracleError> {
    if k == 0 || k > records.len() {
        return Err(OracleError::KOutOfRange {
            k,
            n: records.len(),
        });
    }
    let mut scored = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        scored.push((squared_distance(&r.attributes, q)?, i));
    }
    scored.sort();
    let boundary = scored[k - 1].0;
    let sure: Vec<u64> = scored
        .iter()
        .filter(|(d, _)| *d < boundary)
        .map(|&(_, i)| records[i].label)
        .collect();
    let tied: Vec<u64> = scored
        .iter()
        .filter(|(d, _)| *d == boundary)
        .map(|&(_, i)| records[i].label)
        .collect();
    let need = k - sure.len();

    let mut out = BTreeSet::new();
    let mut chosen = Vec::with_capacity(need);
    fn walk(
        tied: &[u64],
        start: usize,
        need: usize,
        chosen: &mut Vec<u64>,
        sure: &[u64],
        rule: TieRule,
        out: &mut BTreeSet<u64>,
    ) {
        if chosen.len() == need {
            let mut labels = sure.to_vec();
            labels.extend_from_slice(chosen);
            out.insert(majority(&labels, rule).expect("k >= 1"));
            return;
        }
        for i in start..tied.len() {
            chosen.push(tied[i]);
            walk(tied, i + 1, need, chosen, sure, rule, out);
            chosen.pop();
        }
    }
    walk(
        &tied,
        0,
        need,
        &mut chosen,
        &sure,
        config.tie_rule,
        &mut out,
    );
    Ok(out)
}
