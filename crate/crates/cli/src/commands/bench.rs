use std::time::Instant;

use ppknn_core::local::{LocalOptions, LocalParties};
use ppknn_core::paillier::keygen;
use ppknn_core::ppknn::{
    classify, encrypt_database, encrypt_query, ClassifyOptions, ResultMode, Schema,
};
use ppknn_core::protocols::{EncryptedBits, EncryptedVector, ProtocolConfig, ProtocolError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::keygen::check_bits;
use super::load_secret_key;
use crate::error::{failure, usage, CliResult};
use crate::workload;
use crate::BenchArgs;

const PROTOCOLS: [&str; 6] = ["sm", "ssed", "sbd", "smin", "smin_n", "classify"];

type Rep<'a> = Box<dyn FnMut(&mut ChaCha20Rng) -> Result<(), ProtocolError> + 'a>;

struct Row {
    protocol: &'static str,
    n: usize,
    m: usize,
    k: usize,
}

pub fn run(args: &BenchArgs) -> CliResult<()> {
    if let Some(bad) = args
        .protocols
        .iter()
        .find(|p| !PROTOCOLS.contains(&p.as_str()))
    {
        return Err(usage(format!(
            "unknown protocol {bad:?}; choose from {}",
            PROTOCOLS.join(",")
        )));
    }
    if args.n == 0 || args.m == 0 || args.k == 0 || args.k > args.n || args.reps == 0 {
        return Err(usage("need n, m, reps >= 1 and 1 <= k <= n"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
    let sk = match &args.secret {
        Some(path) => load_secret_key(path)?,
        None => {
            check_bits(args.key_bits, true)?;
            keygen(args.key_bits, &mut rng)
                .map_err(|e| failure(e.to_string()))?
                .1
        }
    };
    let lp = LocalParties::start(
        &sk,
        ProtocolConfig::with_bit_budget(args.l),
        LocalOptions {
            seed: Some(args.seed),
            record_transcripts: false,
        },
    )
    .map_err(|e| usage(e.to_string()))?;
    let p1 = &lp.p1;
    let pk_owned = p1.public_key().clone();
    let pk = &pk_owned;
    let l = args.l as usize;
    let value = |rng: &mut ChaCha20Rng| rng.gen_range(0..1u64 << l.min(63));

    println!("protocol\tn\tm\tl\tk\tmillis\tsm_calls");
    for name in &args.protocols {
        let (row, per_rep): (Row, Rep) = match name.as_str() {
            "sm" => (
                Row {
                    protocol: "sm",
                    n: 1,
                    m: 1,
                    k: 0,
                },
                Box::new(|rng| {
                    let (a, b) = (
                        pk.encrypt_u64(value(rng), rng),
                        pk.encrypt_u64(value(rng), rng),
                    );
                    p1.sm(&a, &b).map(drop)
                }),
            ),
            "ssed" => (
                Row {
                    protocol: "ssed",
                    n: 1,
                    m: args.m,
                    k: 0,
                },
                Box::new(|rng| {
                    let x: Vec<u64> = (0..args.m).map(|_| rng.gen::<u16>() as u64).collect();
                    let y: Vec<u64> = (0..args.m).map(|_| rng.gen::<u16>() as u64).collect();
                    let (x, y) = (
                        EncryptedVector::encrypt(pk, &x, rng),
                        EncryptedVector::encrypt(pk, &y, rng),
                    );
                    p1.ssed(&x, &y).map(drop)
                }),
            ),
            "sbd" => (
                Row {
                    protocol: "sbd",
                    n: 1,
                    m: 1,
                    k: 0,
                },
                Box::new(|rng| p1.sbd(&pk.encrypt_u64(value(rng), rng)).map(drop)),
            ),
            "smin" => (
                Row {
                    protocol: "smin",
                    n: 2,
                    m: 1,
                    k: 0,
                },
                Box::new(|rng| {
                    let p = pk.encrypt_u64(0, rng);
                    let u = EncryptedBits::encrypt(pk, value(rng), l, rng);
                    let v = EncryptedBits::encrypt(pk, value(rng), l, rng);
                    p1.smin(&u, &p, &v, &p).map(drop)
                }),
            ),
            "smin_n" => (
                Row {
                    protocol: "smin_n",
                    n: args.n,
                    m: 1,
                    k: 0,
                },
                Box::new(|rng| {
                    let entries = (0..args.n)
                        .map(|i| {
                            (
                                EncryptedBits::encrypt(pk, value(rng), l, rng),
                                pk.encrypt_u64(i as u64, rng),
                            )
                        })
                        .collect();
                    p1.smin_n(entries).map(drop)
                }),
            ),
            _ => {
                let schema = Schema {
                    m: args.m,
                    w: args.classes,
                    l: args.l,
                };
                let bits = schema.attribute_bits();
                let records = workload::dataset(args.n, args.m, args.classes, bits, args.seed);
                let db = encrypt_database(pk, schema, &records, &mut rng)
                    .map_err(|e| usage(e.to_string()))?;
                (
                    Row {
                        protocol: "classify",
                        n: args.n,
                        m: args.m,
                        k: args.k,
                    },
                    Box::new(move |rng| {
                        let q: Vec<u64> = (0..args.m)
                            .map(|_| rng.gen_range(0..1u64 << bits))
                            .collect();
                        let (query, _) =
                            encrypt_query(pk, &schema, &q, args.k, ResultMode::SecureMajority, rng)
                                .expect("generated in range");
                        classify(p1, &db, &query, &ClassifyOptions::default())
                            .map(drop)
                            .map_err(|e| ProtocolError::Abort(e.to_string()))
                    }),
                )
            }
        };
        let mut per_rep = per_rep;
        let before = p1.stats().sm_calls;
        let start = Instant::now();
        for _ in 0..args.reps {
            per_rep(&mut rng).map_err(|e| failure(format!("{}: {e}", row.protocol)))?;
        }
        let millis = start.elapsed().as_secs_f64() * 1000.0 / args.reps as f64;
        let sm_calls = (p1.stats().sm_calls - before) / args.reps as u64;
        println!(
            "{}\t{}\t{}\t{}\t{}\t{:.3}\t{}",
            row.protocol, row.n, row.m, args.l, row.k, millis, sm_calls
        );
    }
    Ok(())
}
