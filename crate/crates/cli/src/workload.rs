//! Seeded synthetic datasets and queries for verification, benchmarks and tests.

use std::collections::BTreeSet;

use ppknn_core::oracle::squared_distance;
use ppknn_core::ppknn::PlainRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// `n` distinct records with `m` attributes below `2^attribute_bits` and labels below `w`.
pub fn dataset(n: usize, m: usize, w: u64, attribute_bits: u32, seed: u64) -> Vec<PlainRecord> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let bound = 1u64 << attribute_bits;
    let mut seen = BTreeSet::new();
    let mut records = Vec::with_capacity(n);
    while records.len() < n {
        let attributes: Vec<u64> = (0..m).map(|_| rng.gen_range(0..bound)).collect();
        if !seen.insert(attributes.clone()) {
            continue;
        }
        records.push(PlainRecord {
            attributes,
            label: rng.gen_range(0..w),
        });
    }
    records
}

/// `count` queries whose distances to the records are pairwise distinct, so the
/// neighbors (and hence the answer) are unique.
pub fn distinct_distance_queries(
    records: &[PlainRecord],
    count: usize,
    attribute_bits: u32,
    seed: u64,
) -> Vec<Vec<u64>> {
    let m = records.first().map_or(0, |r| r.attributes.len());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let bound = 1u64 << attribute_bits;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let q: Vec<u64> = (0..m).map(|_| rng.gen_range(0..bound)).collect();
        if has_distinct_distances(records, &q) {
            out.push(q);
        }
    }
    out
}

pub fn has_distinct_distances(records: &[PlainRecord], q: &[u64]) -> bool {
    let mut seen = BTreeSet::new();
    records
        .iter()
        .all(|r| seen.insert(squared_distance(&r.attributes, q).expect("uniform arity")))
}
