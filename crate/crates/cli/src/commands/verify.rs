use num_bigint::BigUint;
use ppknn_core::local::{LocalOptions, LocalParties};
use ppknn_core::oracle::{
    binary_decompose, knn_classify_plain, min_n_plain, squared_distance, LabeledPoint, OracleConfig,
};
use ppknn_core::paillier::{keygen, Ciphertext, SecretKey};
use ppknn_core::ppknn::{
    classify, encrypt_database, encrypt_query, ClassifyOptions, ResultMode, Schema,
};
use ppknn_core::protocols::{EncryptedBits, ProtocolConfig, ProtocolError, SmUnblinding};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::keygen::check_bits;
use crate::error::{failure, CliResult};
use crate::workload;
use crate::VerifyArgs;

struct Suite {
    name: &'static str,
    trials: usize,
    passed: usize,
    failures: Vec<String>,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Suite {
            name,
            trials: 0,
            passed: 0,
            failures: Vec::new(),
        }
    }

    fn record(
        &mut self,
        outcome: Result<Option<String>, ProtocolError>,
        inputs: impl FnOnce() -> String,
    ) {
        self.trials += 1;
        match outcome {
            Ok(None) => self.passed += 1,
            Ok(Some(mismatch)) => self.failures.push(format!("{}: {mismatch}", inputs())),
            Err(e) => self.failures.push(format!("{}: {e}", inputs())),
        }
    }

    fn report(&self) -> bool {
        println!("{}: {}/{} passed", self.name, self.passed, self.trials);
        for f in self.failures.iter().take(3) {
            println!("  failed: {f}");
        }
        if self.failures.len() > 3 {
            println!("  ... {} more", self.failures.len() - 3);
        }
        self.passed == self.trials
    }
}

fn mismatch<T: PartialEq + std::fmt::Debug>(expected: T, got: T) -> Option<String> {
    (expected != got).then(|| format!("expected {expected:?}, got {got:?}"))
}

struct Harness<'a> {
    sk: &'a SecretKey,
    unblinding: SmUnblinding,
    seed: u64,
}

impl Harness<'_> {
    fn parties(&self, l: u32) -> CliResult<LocalParties> {
        let config = ProtocolConfig {
            bit_budget_l: l,
            sm_unblinding: self.unblinding,
            ..Default::default()
        };
        LocalParties::start(
            self.sk,
            config,
            LocalOptions {
                seed: Some(self.seed ^ l as u64),
                record_transcripts: false,
            },
        )
        .map_err(|e| failure(e.to_string()))
    }

    fn dec(&self, c: &Ciphertext) -> BigUint {
        self.sk.decrypt(c).expect("own ciphertext")
    }

    fn dec_bits(&self, bits: &EncryptedBits) -> Vec<BigUint> {
        bits.bits().iter().map(|b| self.dec(b)).collect()
    }
}

fn to_value(bits: &[BigUint]) -> Option<u64> {
    let mut v = 0u64;
    for (i, b) in bits.iter().enumerate() {
        match u64::try_from(b) {
            Ok(0) => {}
            Ok(1) => v |= 1 << i,
            _ => return None,
        }
    }
    Some(v)
}

pub fn run(args: &VerifyArgs) -> CliResult<()> {
    check_bits(args.key_bits, true)?;
    let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
    let (_, sk) = keygen(args.key_bits, &mut rng).map_err(|e| failure(e.to_string()))?;
    let h = Harness {
        sk: &sk,
        unblinding: if args.inject_literal_sm {
            SmUnblinding::LiteralTranscription
        } else {
            SmUnblinding::Corrected
        },
        seed: args.seed,
    };
    let trials = args.trials.max(1);
    let list_trials = (trials / 10).max(1);

    let suites = [
        sm_suite(&h, trials, &mut rng)?,
        ssed_suite(&h, trials, &mut rng)?,
        sbd_suite(&h, trials, &mut rng)?,
        smin_suite(&h, trials, &mut rng)?,
        smin_n_suite(&h, list_trials, &mut rng)?,
        end_to_end_suite(&h, list_trials, &mut rng)?,
    ];
    let mut ok = true;
    for s in &suites {
        ok &= s.report();
    }
    if ok {
        println!("all suites passed");
        Ok(())
    } else {
        Err(failure("differential verification failed"))
    }
}

fn sm_suite(h: &Harness, trials: usize, rng: &mut ChaCha20Rng) -> CliResult<Suite> {
    let lp = h.parties(32)?;
    let pk = lp.p1.public_key().clone();
    let mut suite = Suite::new("sm");
    for _ in 0..trials {
        let (a, b) = (rng.gen::<u32>() as u64, rng.gen::<u32>() as u64);
        let outcome = lp
            .p1
            .sm(&pk.encrypt_u64(a, rng), &pk.encrypt_u64(b, rng))
            .map(|c| mismatch(BigUint::from(a) * b, h.dec(&c)));
        suite.record(outcome, || format!("a={a} b={b}"));
    }
    Ok(suite)
}

fn ssed_suite(h: &Harness, trials: usize, rng: &mut ChaCha20Rng) -> CliResult<Suite> {
    let lp = h.parties(40)?;
    let pk = lp.p1.public_key().clone();
    let mut suite = Suite::new("ssed");
    for _ in 0..trials {
        let x: Vec<u64> = (0..5).map(|_| rng.gen::<u16>() as u64).collect();
        let y: Vec<u64> = (0..5).map(|_| rng.gen::<u16>() as u64).collect();
        let ex = ppknn_core::protocols::EncryptedVector::encrypt(&pk, &x, rng);
        let ey = ppknn_core::protocols::EncryptedVector::encrypt(&pk, &y, rng);
        let expected = BigUint::from(squared_distance(&x, &y).expect("same arity"));
        let outcome = lp.p1.ssed(&ex, &ey).map(|c| mismatch(expected, h.dec(&c)));
        suite.record(outcome, || format!("x={x:?} y={y:?}"));
    }
    Ok(suite)
}

fn sbd_suite(h: &Harness, trials: usize, rng: &mut ChaCha20Rng) -> CliResult<Suite> {
    let lp = h.parties(32)?;
    let pk = lp.p1.public_key().clone();
    let mut suite = Suite::new("sbd");
    for _ in 0..trials {
        let z = rng.gen::<u32>() as u64;
        let expected: Vec<BigUint> = binary_decompose(z, 32)
            .expect("32-bit value")
            .into_iter()
            .map(BigUint::from)
            .collect();
        let outcome = lp.p1.sbd(&pk.encrypt_u64(z, rng)).map(|bits| {
            let got = h.dec_bits(&bits);
            mismatch(&expected, &got).or_else(|| mismatch(Some(z), to_value(&got)))
        });
        suite.record(outcome, || format!("z={z}"));
    }
    Ok(suite)
}

fn smin_suite(h: &Harness, trials: usize, rng: &mut ChaCha20Rng) -> CliResult<Suite> {
    const L: usize = 20;
    let lp = h.parties(L as u32)?;
    let pk = lp.p1.public_key().clone();
    let mut suite = Suite::new("smin");
    for _ in 0..trials {
        let (u, v) = (rng.gen_range(0..1u64 << L), rng.gen_range(0..1u64 << L));
        let (pu, pv) = (rng.gen::<u32>() as u64, rng.gen::<u32>() as u64);
        let outcome = lp
            .p1
            .smin(
                &EncryptedBits::encrypt(&pk, u, L, rng),
                &pk.encrypt_u64(pu, rng),
                &EncryptedBits::encrypt(&pk, v, L, rng),
                &pk.encrypt_u64(pv, rng),
            )
            .map(|(bits, payload)| {
                let expected = min_n_plain(&[(u, pu), (v, pv)]).expect("two entries");
                let got = (
                    to_value(&h.dec_bits(&bits)),
                    u64::try_from(h.dec(&payload)).ok(),
                );
                mismatch((Some(expected.0), Some(expected.1)), got)
            });
        suite.record(outcome, || format!("u={u} v={v}"));
    }
    Ok(suite)
}

fn smin_n_suite(h: &Harness, trials: usize, rng: &mut ChaCha20Rng) -> CliResult<Suite> {
    const L: usize = 20;
    let lp = h.parties(L as u32)?;
    let pk = lp.p1.public_key().clone();
    let mut suite = Suite::new("smin_n");
    for _ in 0..trials {
        let values: Vec<(u64, u64)> = (0..25).map(|i| (rng.gen_range(0..1u64 << L), i)).collect();
        let entries = values
            .iter()
            .map(|&(v, p)| {
                (
                    EncryptedBits::encrypt(&pk, v, L, rng),
                    pk.encrypt_u64(p, rng),
                )
            })
            .collect();
        let outcome = lp.p1.smin_n(entries).map(|(bits, payload)| {
            let expected = min_n_plain(&values).expect("nonempty");
            let got = (
                to_value(&h.dec_bits(&bits)),
                u64::try_from(h.dec(&payload)).ok(),
            );
            mismatch((Some(expected.0), Some(expected.1)), got)
        });
        suite.record(outcome, || {
            format!(
                "values={:?}",
                values.iter().map(|v| v.0).collect::<Vec<_>>()
            )
        });
    }
    Ok(suite)
}

fn end_to_end_suite(h: &Harness, trials: usize, rng: &mut ChaCha20Rng) -> CliResult<Suite> {
    let schema = Schema { m: 3, w: 3, l: 14 };
    let bits = schema.attribute_bits();
    let records = workload::dataset(12, schema.m, schema.w, bits, h.seed);
    let queries = workload::distinct_distance_queries(&records, trials, bits, h.seed + 1);
    let points: Vec<LabeledPoint> = records
        .iter()
        .map(|r| LabeledPoint {
            attributes: r.attributes.clone(),
            label: r.label,
        })
        .collect();
    let lp = h.parties(schema.l)?;
    let pk = lp.p1.public_key().clone();
    let db = encrypt_database(&pk, schema, &records, rng).map_err(|e| failure(e.to_string()))?;
    let oracle = OracleConfig {
        l: schema.l,
        ..Default::default()
    };
    let mut suite = Suite::new("end-to-end");
    for (i, q) in queries.iter().enumerate() {
        let k = [1, 3, 5][i % 3];
        let expected = knn_classify_plain(&points, q, k, &oracle).expect("valid k");
        let (query, pads) = encrypt_query(&pk, &schema, q, k, ResultMode::SecureMajority, rng)
            .map_err(|e| failure(e.to_string()))?;
        let outcome = match classify(&lp.p1, &db, &query, &ClassifyOptions::default()) {
            Ok(result) => Ok(mismatch(Some(expected), result.label(&pk, &pads).ok())),
            Err(ppknn_core::ppknn::PpknnError::Protocol(e)) => Err(e),
            Err(e) => Ok(Some(e.to_string())),
        };
        suite.record(outcome, || format!("q={q:?} k={k}"));
    }
    Ok(suite)
}
