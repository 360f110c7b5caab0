//! Acceptance run: one line per criterion, nonzero exit if any fails.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use ppknn_cli::workload;
use ppknn_core::local::{LocalOptions, LocalParties};
use ppknn_core::oracle::{
    binary_decompose, knn_classify_plain, min_n_plain, squared_distance, LabeledPoint, OracleConfig,
};
use ppknn_core::paillier::{keygen, Ciphertext, PublicKey, SecretKey};
use ppknn_core::ppknn::{
    classify, encrypt_database, encrypt_query, exclusion_step, ClassifyOptions, EncryptedDatabase,
    ResultMode, Schema,
};
use ppknn_core::protocols::{
    smin_n_sm_calls, smin_sm_calls, EncryptedBits, EncryptedVector, ProtocolConfig, SmUnblinding,
};
use ppknn_core::runtime::{ProtocolTag, ViewKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tempfile::TempDir;

const KEY_SEED: u64 = 0xacce_0001;
const DATA_SEED: u64 = 0xacce_0006;
const E2E_SCHEMA: Schema = Schema { m: 4, w: 3, l: 18 };
const E2E_N: usize = 30;
const E2E_QUERIES: usize = 20;
const E2E_KS: [usize; 3] = [1, 3, 5];
const TCP_RUNS: usize = 5;
const QUERY_BUDGET: Duration = Duration::from_secs(1200);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn(&mut Ctx) -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Ctx {
    sk: SecretKey,
    pk: PublicKey,
    rng: ChaCha20Rng,
    e2e: Option<E2e>,
}

impl Ctx {
    fn parties(&self, l: u32, unblinding: SmUnblinding, record: bool, seed: u64) -> LocalParties {
        let config = ProtocolConfig {
            bit_budget_l: l,
            sm_unblinding: unblinding,
            ..Default::default()
        };
        LocalParties::start(
            &self.sk,
            config,
            LocalOptions {
                seed: Some(seed),
                record_transcripts: record,
            },
        )
        .expect("parties start")
    }

    fn dec(&self, c: &Ciphertext) -> BigUint {
        self.sk.decrypt(c).expect("own ciphertext")
    }

    fn dec_u64(&self, c: &Ciphertext) -> Option<u64> {
        self.dec(c).to_u64()
    }

    fn dec_bits(&self, bits: &EncryptedBits) -> Vec<BigUint> {
        bits.bits().iter().map(|b| self.dec(b)).collect()
    }
}

/// The end-to-end runs, kept for the transport and audit checks.
struct E2e {
    db: EncryptedDatabase,
    /// `(query, k, secure label)` in run order.
    runs: Vec<(Vec<u64>, usize, u64)>,
    leaked: Vec<String>,
    decryptions: usize,
    zero_tests: usize,
}

fn paillier(ctx: &mut Ctx) -> Outcome {
    let (pk, sk) = (&ctx.pk, &ctx.sk);
    let n = pk.n().clone();
    let mut bad = Vec::new();
    let mut plaintexts: Vec<BigUint> = vec![BigUint::zero(), BigUint::one(), &n - 1u32];
    plaintexts.extend((0..1000).map(|_| pk.random_plaintext(&mut ctx.rng)));
    for m in &plaintexts {
        if sk.decrypt(&pk.encrypt(m, &mut ctx.rng).unwrap()).unwrap() != *m {
            bad.push(format!("roundtrip {m}"));
        }
    }
    for _ in 0..200 {
        let a = pk.random_plaintext(&mut ctx.rng);
        let b = pk.random_plaintext(&mut ctx.rng);
        let (ea, eb) = (
            pk.encrypt(&a, &mut ctx.rng).unwrap(),
            pk.encrypt(&b, &mut ctx.rng).unwrap(),
        );
        if sk.decrypt(&pk.add(&ea, &eb)).unwrap() != (&a + &b) % &n {
            bad.push(format!("add {a} {b}"));
        }
        if sk.decrypt(&pk.scalar_exp(&ea, &b)).unwrap() != (&a * &b) % &n {
            bad.push(format!("scalar {a} {b}"));
        }
    }
    check(
        bad.is_empty(),
        format!(
            "{} roundtrips including 0, 1 and N-1, 200 add, 200 scalar; {} wrong{}",
            plaintexts.len(),
            bad.len(),
            bad.first()
                .map(|b| format!(" (first: {b})"))
                .unwrap_or_default()
        ),
    )
}

fn sm_suite(ctx: &mut Ctx, unblinding: SmUnblinding) -> usize {
    let lp = ctx.parties(32, unblinding, false, 2);
    let mut correct = 0;
    for _ in 0..200 {
        let (a, b) = (ctx.rng.gen::<u32>() as u64, ctx.rng.gen::<u32>() as u64);
        let ea = ctx.pk.encrypt_u64(a, &mut ctx.rng);
        let eb = ctx.pk.encrypt_u64(b, &mut ctx.rng);
        if let Ok(c) = lp.p1.sm(&ea, &eb) {
            correct += usize::from(ctx.dec(&c) == BigUint::from(a) * b);
        }
    }
    correct
}

fn sm(ctx: &mut Ctx) -> Outcome {
    let corrected = sm_suite(ctx, SmUnblinding::Corrected);
    let literal = sm_suite(ctx, SmUnblinding::LiteralTranscription);
    check(
        corrected == 200 && literal < 200,
        format!("corrected {corrected}/200; literal unblinding {literal}/200 (must fail)"),
    )
}

fn ssed(ctx: &mut Ctx) -> Outcome {
    let lp = ctx.parties(40, SmUnblinding::Corrected, false, 3);
    let mut correct = 0;
    for _ in 0..100 {
        let x: Vec<u64> = (0..5).map(|_| ctx.rng.gen::<u16>() as u64).collect();
        let y: Vec<u64> = (0..5).map(|_| ctx.rng.gen::<u16>() as u64).collect();
        let ex = EncryptedVector::encrypt(&ctx.pk, &x, &mut ctx.rng);
        let ey = EncryptedVector::encrypt(&ctx.pk, &y, &mut ctx.rng);
        let expected = BigUint::from(squared_distance(&x, &y).unwrap());
        if let Ok(c) = lp.p1.ssed(&ex, &ey) {
            correct += usize::from(ctx.dec(&c) == expected);
        }
    }
    check(correct == 100, format!("{correct}/100"))
}

fn sbd(ctx: &mut Ctx) -> Outcome {
    let lp = ctx.parties(32, SmUnblinding::Corrected, false, 4);
    let mut correct = 0;
    for _ in 0..100 {
        let z = ctx.rng.gen::<u32>() as u64;
        let expected: Vec<BigUint> = binary_decompose(z, 32)
            .unwrap()
            .into_iter()
            .map(BigUint::from)
            .collect();
        let Ok(bits) = lp.p1.sbd(&ctx.pk.encrypt_u64(z, &mut ctx.rng)) else {
            continue;
        };
        let got = ctx.dec_bits(&bits);
        let boolean = got.iter().all(|b| b.is_zero() || b.is_one());
        let recomposed: BigUint = got.iter().enumerate().map(|(i, b)| b << i).sum();
        correct += usize::from(got == expected && boolean && recomposed == BigUint::from(z));
    }
    check(correct == 100, format!("{correct}/100 at l = 32"))
}

fn smin(ctx: &mut Ctx) -> Outcome {
    const L: usize = 20;
    let lp = ctx.parties(L as u32, SmUnblinding::Corrected, false, 5);
    let pk = ctx.pk.clone();
    let value = |rng: &mut ChaCha20Rng| rng.gen_range(0..1u64 << L);

    let mut pairs_ok = 0;
    for t in 0..200 {
        let u = value(&mut ctx.rng);
        // Every tenth pair ties, so the tie rule is exercised.
        let v = if t % 10 == 0 { u } else { value(&mut ctx.rng) };
        let (pu, pv) = (ctx.rng.gen::<u32>() as u64, ctx.rng.gen::<u32>() as u64);
        let out = lp.p1.smin(
            &EncryptedBits::encrypt(&pk, u, L, &mut ctx.rng),
            &pk.encrypt_u64(pu, &mut ctx.rng),
            &EncryptedBits::encrypt(&pk, v, L, &mut ctx.rng),
            &pk.encrypt_u64(pv, &mut ctx.rng),
        );
        if let Ok((bits, payload)) = out {
            let expected = min_n_plain(&[(u, pu), (v, pv)]).unwrap();
            let got_value = bits_value(&ctx.dec_bits(&bits));
            pairs_ok += usize::from(
                got_value == Some(expected.0) && ctx.dec_u64(&payload) == Some(expected.1),
            );
        }
    }

    let mut lists_ok = 0;
    for t in 0..50 {
        let mut values: Vec<u64> = (0..25).map(|_| value(&mut ctx.rng)).collect();
        if t % 5 == 0 {
            // A repeated minimum: the first occurrence must win.
            let (lo, at) = values
                .iter()
                .enumerate()
                .map(|(i, v)| (*v, i))
                .min()
                .unwrap();
            let other = (at + 7) % values.len();
            values[other] = lo;
        }
        let entries: Vec<(u64, u64)> = values
            .iter()
            .map(|&v| (v, ctx.rng.gen::<u32>() as u64))
            .collect();
        let encrypted = entries
            .iter()
            .map(|&(v, p)| {
                (
                    EncryptedBits::encrypt(&pk, v, L, &mut ctx.rng),
                    pk.encrypt_u64(p, &mut ctx.rng),
                )
            })
            .collect();
        if let Ok((bits, payload)) = lp.p1.smin_n(encrypted) {
            let expected = min_n_plain(&entries).unwrap();
            lists_ok += usize::from(
                bits_value(&ctx.dec_bits(&bits)) == Some(expected.0)
                    && ctx.dec_u64(&payload) == Some(expected.1),
            );
        }
    }
    check(
        pairs_ok == 200 && lists_ok == 50,
        format!(
            "pairs {pairs_ok}/200, lists of 25 {lists_ok}/50, values < 2^20, ties keep the first"
        ),
    )
}

fn bits_value(bits: &[BigUint]) -> Option<u64> {
    let mut v = 0u64;
    for (i, b) in bits.iter().enumerate() {
        match b.to_u64()? {
            0 => {}
            1 => v |= 1 << i,
            _ => return None,
        }
    }
    Some(v)
}

fn end_to_end(ctx: &mut Ctx) -> Outcome {
    let schema = E2E_SCHEMA;
    let bits = schema.attribute_bits();
    let records = workload::dataset(E2E_N, schema.m, schema.w, bits, DATA_SEED);
    let queries = workload::distinct_distance_queries(&records, E2E_QUERIES, bits, DATA_SEED + 1);
    let points: Vec<LabeledPoint> = records
        .iter()
        .map(|r| LabeledPoint {
            attributes: r.attributes.clone(),
            label: r.label,
        })
        .collect();
    let oracle = OracleConfig {
        l: schema.l,
        ..Default::default()
    };
    let lp = ctx.parties(schema.l, SmUnblinding::Corrected, true, 6);
    let db =
        encrypt_database(&ctx.pk, schema, &records, &mut ctx.rng).map_err(|e| e.to_string())?;
    lp.take_p2_view();

    let mut known: BTreeSet<BigUint> = BTreeSet::new();
    for r in &records {
        known.extend(r.attributes.iter().map(|&a| BigUint::from(a)));
        known.insert(BigUint::from(r.label));
    }
    let mut e2e = E2e {
        db: db.clone(),
        runs: Vec::new(),
        leaked: Vec::new(),
        decryptions: 0,
        zero_tests: 0,
    };
    let (mut agree, mut slowest) = (0, Duration::ZERO);
    let mut mismatches = Vec::new();
    let start = Instant::now();
    for q in &queries {
        let mut query_known = known.clone();
        query_known.extend(q.iter().map(|&a| BigUint::from(a)));
        for r in &records {
            query_known.insert(BigUint::from(squared_distance(&r.attributes, q).unwrap()));
        }
        for k in E2E_KS {
            let expected = knn_classify_plain(&points, q, k, &oracle).map_err(|e| e.to_string())?;
            let t = Instant::now();
            let (query, pads) = encrypt_query(
                &ctx.pk,
                &schema,
                q,
                k,
                ResultMode::SecureMajority,
                &mut ctx.rng,
            )
            .map_err(|e| e.to_string())?;
            let got = classify(&lp.p1, &db, &query, &ClassifyOptions::default())
                .and_then(|r| r.label(&ctx.pk, &pads));
            slowest = slowest.max(t.elapsed());
            e2e.runs
                .push((q.clone(), k, *got.as_ref().unwrap_or(&u64::MAX)));
            match got {
                Ok(label) if label == expected => agree += 1,
                Ok(label) => mismatches.push(format!("q={q:?} k={k}: {label} != {expected}")),
                Err(e) => mismatches.push(format!("q={q:?} k={k}: {e}")),
            }

            for d in lp.take_p2_view().p2_decryptions {
                e2e.decryptions += 1;
                let exempt = d.kind == ViewKind::ZeroTest && d.value.is_zero();
                e2e.zero_tests += usize::from(exempt);
                if !exempt && query_known.contains(&d.value) {
                    e2e.leaked
                        .push(format!("{:?} {} {}", d.kind, d.tag, d.value));
                }
            }
        }
    }
    let total = queries.len() * E2E_KS.len();
    let detail =
        format!(
        "{agree}/{total} agree with the oracle (n={E2E_N}, m={}, l={}, attributes < 2^{bits}); \
         slowest query {:.1} s, total {:.0} s{}",
        schema.m,
        schema.l,
        slowest.as_secs_f64(),
        start.elapsed().as_secs_f64(),
        mismatches.first().map(|m| format!("; first mismatch {m}")).unwrap_or_default()
    );
    ctx.e2e = Some(e2e);
    check(agree == total && slowest <= QUERY_BUDGET, detail)
}

fn cross_transport(ctx: &mut Ctx) -> Outcome {
    let e2e = ctx
        .e2e
        .as_ref()
        .ok_or("the end-to-end runs did not happen")?;
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let keys = dir.path().join("keys");
    fs::create_dir(&keys).map_err(|e| e.to_string())?;
    fs::write(keys.join("ppknn.pub"), ctx.pk.to_key_file()).map_err(|e| e.to_string())?;
    fs::write(keys.join("ppknn.sec"), ctx.sk.to_key_file()).map_err(|e| e.to_string())?;
    let db_path = dir.path().join("d.db");
    fs::write(&db_path, e2e.db.to_text()).map_err(|e| e.to_string())?;

    let (_p2, p1) = common::start_pair(&keys, &db_path);
    let mut same = 0;
    let mut diffs = Vec::new();
    for (q, k, in_process) in e2e.runs.iter().take(TCP_RUNS) {
        let out = common::query(&p1, &keys, *k, "secure", q);
        let label = common::stdout(&out).trim().parse::<u64>().ok();
        if common::code(&out) == 0 && label == Some(*in_process) {
            same += 1;
        } else {
            diffs.push(format!(
                "q={q:?} k={k}: in-process {in_process}, tcp {label:?} {}",
                common::stderr(&out).trim()
            ));
        }
    }
    check(
        same == TCP_RUNS,
        format!(
            "{same}/{TCP_RUNS} labels identical over localhost with separate P1/P2 processes{}",
            diffs.first().map(|d| format!("; {d}")).unwrap_or_default()
        ),
    )
}

fn distinct_pairs(mut run: impl FnMut() -> Vec<BigUint>) -> usize {
    (0..100).filter(|_| run() != run()).count()
}

fn audits(ctx: &mut Ctx) -> Outcome {
    let lp = ctx.parties(16, SmUnblinding::Corrected, true, 8);
    let pk = ctx.pk.clone();
    let a = pk.encrypt_u64(41_000, &mut ctx.rng);
    let b = pk.encrypt_u64(17, &mut ctx.rng);
    let sm = distinct_pairs(|| {
        lp.p1.sm(&a, &b).unwrap();
        lp.take_p2_view().p2_view_multiset()
    });
    let sbd = distinct_pairs(|| {
        lp.p1.sbd(&a).unwrap();
        lp.take_p2_view().p2_view_multiset()
    });
    let packed: Vec<Ciphertext> = (0..6u64)
        .map(|i| pk.encrypt_u64(2 + (i << 2), &mut ctx.rng))
        .collect();
    let payload = pk.encrypt_u64(2 + (3 << 2), &mut ctx.rng);
    let candidates: Vec<usize> = (0..packed.len()).collect();
    let mut found = true;
    let exclusion = distinct_pairs(|| {
        let mut s = lp.p1.open(ProtocolTag::Ppknn).unwrap();
        let (perm, pos) = exclusion_step(&mut s, &candidates, &packed, &payload).unwrap();
        s.close().unwrap();
        found &= perm[pos] == 3;
        lp.take_p2_view().p2_view_multiset()
    });

    let e2e = ctx
        .e2e
        .as_ref()
        .ok_or("the end-to-end runs did not happen")?;
    let detail = format!(
        "distinct P2 views in paired reruns: SM {sm}/100, SBD {sbd}/100, exclusion {exclusion}/100; \
         end-to-end runs: {} decryptions by P2 ({} zero-test zeros), {} equal a raw attribute, distance or label{}",
        e2e.decryptions,
        e2e.zero_tests,
        e2e.leaked.len(),
        e2e.leaked.first().map(|l| format!(" (first: {l})")).unwrap_or_default()
    );
    check(
        sm >= 99
            && sbd >= 99
            && exclusion >= 99
            && found
            && e2e.leaked.is_empty()
            && e2e.decryptions > 0,
        detail,
    )
}

fn accounting(ctx: &mut Ctx) -> Outcome {
    let mut bad = Vec::new();
    let lp = ctx.parties(24, SmUnblinding::Corrected, false, 9);
    let pk = ctx.pk.clone();
    for m in [1usize, 3, 4, 7] {
        let x = EncryptedVector::encrypt(&pk, &vec![5; m], &mut ctx.rng);
        let y = EncryptedVector::encrypt(&pk, &vec![9; m], &mut ctx.rng);
        let before = lp.p1.stats().sm_calls;
        lp.p1.ssed(&x, &y).unwrap();
        let used = lp.p1.stats().sm_calls - before;
        if used != m as u64 {
            bad.push(format!("ssed m={m}: {used}"));
        }
    }
    for l in [1usize, 8, 20] {
        let u = EncryptedBits::encrypt(&pk, 1, l, &mut ctx.rng);
        let v = EncryptedBits::encrypt(&pk, 0, l, &mut ctx.rng);
        let p = pk.encrypt_u64(0, &mut ctx.rng);
        let before = lp.p1.stats().sm_calls;
        lp.p1.smin(&u, &p, &v, &p).unwrap();
        let used = lp.p1.stats().sm_calls - before;
        if used != smin_sm_calls(l) || used != 4 * l as u64 {
            bad.push(format!("smin l={l}: {used}"));
        }
    }
    let (n, l) = (6, 8);
    let entries = (0..n)
        .map(|i| {
            (
                EncryptedBits::encrypt(&pk, i as u64 * 3, l, &mut ctx.rng),
                pk.encrypt_u64(i as u64, &mut ctx.rng),
            )
        })
        .collect();
    let before = lp.p1.stats().sm_calls;
    lp.p1.smin_n(entries).unwrap();
    let used = lp.p1.stats().sm_calls - before;
    if used != smin_n_sm_calls(n, l) {
        bad.push(format!("smin_n n={n} l={l}: {used}"));
    }
    check(
        bad.is_empty(),
        format!(
            "SSED uses m SMs (m = 1, 3, 4, 7), SMIN uses 4l (l = 1, 8, 20), SMIN_n uses (n-1)*4l; {} mismatches{}",
            bad.len(),
            bad.first().map(|b| format!(" (first: {b})")).unwrap_or_default()
        ),
    )
}

fn main() {
    // libtest flags such as --nocapture or a name filter are accepted and ignored.
    let mut rng = ChaCha20Rng::seed_from_u64(KEY_SEED);
    let (pk, sk) = keygen(512, &mut rng).expect("512-bit key");
    let mut ctx = Ctx {
        sk,
        pk,
        rng,
        e2e: None,
    };
    let criteria: [Criterion; 9] = [
        ("paillier correctness", paillier),
        ("SM differential", sm),
        ("SSED differential", ssed),
        ("SBD differential", sbd),
        ("SMIN and SMIN_n differential", smin),
        ("end-to-end classification", end_to_end),
        ("cross-transport determinism", cross_transport),
        ("blinding audits", audits),
        ("SM-call accounting", accounting),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| run(&mut ctx))).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({secs:.1} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({secs:.1} s): {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
