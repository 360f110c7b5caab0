mod common;

use std::thread;

use common::{dec, dec_bits, dec_u64, key, parties, recorded, rng};
use num_bigint::BigUint;
use ppknn_core::local::{LocalOptions, LocalParties};
use ppknn_core::oracle::{binary_decompose, min_n_plain, squared_distance};
use ppknn_core::paillier::keygen;
use ppknn_core::protocols::{
    smin_n_sm_calls, smin_sm_calls, EncryptedBits, EncryptedVector, PartyOne, ProtocolConfig,
    ProtocolError, SmUnblinding,
};
use ppknn_core::runtime::{
    in_process_pair, Endpoint, EndpointOptions, PartyRole, ProtocolTag, RuntimeError,
};
use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn sm_small_products() {
    let lp = parties(32, 1);
    let pk = lp.p1.public_key().clone();
    let mut r = rng(10);
    for (a, b) in [
        (0u64, 17u64),
        (1, 17),
        (3, 4),
        (17, 0),
        (u32::MAX as u64, u32::MAX as u64),
    ] {
        let c = lp
            .p1
            .sm(&pk.encrypt_u64(a, &mut r), &pk.encrypt_u64(b, &mut r))
            .unwrap();
        assert_eq!(dec(&c), BigUint::from(a) * b, "{a} * {b}");
    }
}

#[test]
fn sm_random_pairs_and_wraparound() {
    let lp = parties(32, 2);
    let pk = lp.p1.public_key().clone();
    let mut r = rng(11);
    for _ in 0..40 {
        let (a, b) = (r.gen::<u32>() as u64, r.gen::<u32>() as u64);
        let c = lp
            .p1
            .sm(&pk.encrypt_u64(a, &mut r), &pk.encrypt_u64(b, &mut r))
            .unwrap();
        assert_eq!(dec_u64(&c), a * b);
    }
    // full-size operands reduce mod N
    let n = pk.n();
    let a = pk.random_plaintext(&mut r);
    let b = n - 1u32;
    let c = lp
        .p1
        .sm(
            &pk.encrypt(&a, &mut r).unwrap(),
            &pk.encrypt(&b, &mut r).unwrap(),
        )
        .unwrap();
    assert_eq!(dec(&c), (&a * &b) % n);
}

#[test]
fn literal_unblinding_breaks_sm() {
    let config = ProtocolConfig {
        sm_unblinding: SmUnblinding::LiteralTranscription,
        ..ProtocolConfig::default()
    };
    let lp = LocalParties::start(key(), config, LocalOptions::default()).unwrap();
    let pk = lp.p1.public_key().clone();
    let mut r = rng(12);
    let wrong = (0..20)
        .filter(|_| {
            let (a, b) = (r.gen::<u32>() as u64 | 1, r.gen::<u32>() as u64 | 1);
            let c = lp
                .p1
                .sm(&pk.encrypt_u64(a, &mut r), &pk.encrypt_u64(b, &mut r))
                .unwrap();
            dec(&c) != BigUint::from(a * b)
        })
        .count();
    assert_eq!(wrong, 20);
}

#[test]
fn sm_view_is_fresh_across_runs() {
    let lp = recorded(ProtocolConfig::default(), None);
    let pk = lp.p1.public_key().clone();
    let mut r = rng(13);
    let a = pk.encrypt_u64(6, &mut r);
    let b = pk.encrypt_u64(7, &mut r);
    let mut views = Vec::new();
    for _ in 0..10 {
        lp.p1.sm(&a, &b).unwrap();
        views.push(lp.take_p2_view().p2_view_multiset());
    }
    for (i, v) in views.iter().enumerate() {
        assert_eq!(v.len(), 2);
        assert!(!v.contains(&BigUint::from(6u32)) && !v.contains(&BigUint::from(7u32)));
        for w in &views[i + 1..] {
            assert_ne!(v, w);
        }
    }
}

#[test]
fn seeded_runs_replay_identically() {
    let run = || {
        let lp = recorded(ProtocolConfig::with_bit_budget(8), Some(77));
        let pk = lp.p1.public_key().clone();
        let mut r = rng(14);
        let a = pk.encrypt_u64(200, &mut r);
        let b = pk.encrypt_u64(3, &mut r);
        lp.p1.sm(&a, &b).unwrap();
        lp.p1.sbd(&a).unwrap();
        let t = lp
            .p1_transcript
            .as_ref()
            .unwrap()
            .lock()
            .unwrap()
            .messages();
        (t, lp.take_p2_view().p2_view_multiset())
    };
    assert_eq!(run(), run());
}

#[test]
fn ssed_examples() {
    let lp = parties(40, 3);
    let pk = lp.p1.public_key().clone();
    let mut r = rng(15);
    let x = EncryptedVector::encrypt(&pk, &[4, 9, 1], &mut r);
    let x2 = EncryptedVector::encrypt(&pk, &[4, 9, 1], &mut r);
    assert_eq!(dec_u64(&lp.p1.ssed(&x, &x2).unwrap()), 0);

    let o = EncryptedVector::encrypt(&pk, &[0, 0], &mut r);
    let y = EncryptedVector::encrypt(&pk, &[3, 4], &mut r);
    assert_eq!(dec_u64(&lp.p1.ssed(&o, &y).unwrap()), 25);
    assert_eq!(dec_u64(&lp.p1.ssed(&y, &o).unwrap()), 25);

    assert!(matches!(
        lp.p1.ssed(&x, &y),
        Err(ProtocolError::Dimension {
            expected: 3,
            got: 2
        })
    ));
}

#[test]
fn ssed_random_vectors_and_call_count() {
    let lp = parties(40, 4);
    let pk = lp.p1.public_key().clone();
    let mut r = rng(16);
    for _ in 0..15 {
        let xs: Vec<u64> = (0..5).map(|_| r.gen::<u16>() as u64).collect();
        let ys: Vec<u64> = (0..5).map(|_| r.gen::<u16>() as u64).collect();
        let before = lp.p1.stats();
        let mut session = lp.p1.open(ProtocolTag::Ssed).unwrap();
        let d = session
            .ssed(
                &EncryptedVector::encrypt(&pk, &xs, &mut r),
                &EncryptedVector::encrypt(&pk, &ys, &mut r),
            )
            .unwrap();
        assert_eq!(session.sm_calls(), 5);
        session.close().unwrap();
        let spent = lp.p1.stats() - before;
        assert_eq!((spent.sm_calls, spent.ssed_calls), (5, 1));
        assert_eq!(dec_u64(&d) as u128, squared_distance(&xs, &ys).unwrap());
    }
}

#[test]
fn lsb_examples() {
    let lp = parties(32, 5);
    let pk = lp.p1.public_key().clone();
    let mut r = rng(17);
    assert_eq!(
        dec_u64(&lp.p1.encrypted_lsb(&pk.encrypt_u64(6, &mut r)).unwrap()),
        0
    );
    assert_eq!(
        dec_u64(&lp.p1.encrypted_lsb(&pk.encrypt_u64(7, &mut r)).unwrap()),
        1
    );
    for _ in 0..40 {
        let z = r.gen::<u32>() as u64;
        let bit = lp.p1.encrypted_lsb(&pk.encrypt_u64(z, &mut r)).unwrap();
        assert_eq!(dec_u64(&bit), z % 2);
    }
}

#[test]
fn sbd_examples() {
    let lp = parties(3, 6);
    let pk = lp.p1.public_key().clone();
    let mut r = rng(18);
    let bits = lp.p1.sbd(&pk.encrypt_u64(5, &mut r)).unwrap();
    assert_eq!(dec_bits(&bits), vec![1, 0, 1]);
    let bits = lp.p1.sbd(&pk.encrypt_u64(0, &mut r)).unwrap();
    assert_eq!(dec_bits(&bits), vec![0, 0, 0]);
    let bits = lp.p1.sbd(&pk.encrypt_u64(7, &mut r)).unwrap();
    assert_eq!(dec_bits(&bits), vec![1, 1, 1]);
}

#[test]
fn sbd_random_values_match_oracle() {
    let lp = parties(32, 7);
    let pk = lp.p1.public_key().clone();
    let mut r = rng(19);
    for _ in 0..12 {
        let z = r.gen::<u32>() as u64;
        let bits = lp.p1.sbd(&pk.encrypt_u64(z, &mut r)).unwrap();
        let plain = dec_bits(&bits);
        let expected: Vec<u64> = binary_decompose(z, 32)
            .unwrap()
            .into_iter()
            .map(u64::from)
            .collect();
        assert_eq!(plain, expected);
        assert!(plain.iter().all(|&b| b <= 1));
        let back: u64 = plain.iter().enumerate().map(|(i, b)| b << i).sum();
        assert_eq!(back, z);
        assert_eq!(dec_u64(&bits.recompose(&pk)), z);
    }
}

#[test]
fn sbd_verification_catches_out_of_range_input() {
    // 9 has no 3-bit decomposition: the extracted bits recompose to 1.
    let lp = parties(3, 8);
    let pk = lp.p1.public_key().clone();
    let mut r = rng(20);
    let err = lp.p1.sbd(&pk.encrypt_u64(9, &mut r)).unwrap_err();
    assert!(matches!(err, ProtocolError::VerificationFailed(_)), "{err}");
    // the link stays usable for later sessions
    let ok = lp.p1.sbd(&pk.encrypt_u64(2, &mut r)).unwrap();
    assert_eq!(dec_bits(&ok), vec![0, 1, 0]);
}

fn enc_bits(lp: &LocalParties, value: u64, l: usize, seed: u64) -> EncryptedBits {
    EncryptedBits::encrypt(lp.p1.public_key(), value, l, &mut rng(seed))
}

fn smin_plain(lp: &LocalParties, u: u64, pu: u64, v: u64, pv: u64, l: usize) -> (u64, u64) {
    let pk = lp.p1.public_key().clone();
    let mut r = rng(u ^ (v << 20));
    let (bits, payload) = lp
        .p1
        .smin(
            &enc_bits(lp, u, l, 1),
            &pk.encrypt_u64(pu, &mut r),
            &enc_bits(lp, v, l, 2),
            &pk.encrypt_u64(pv, &mut r),
        )
        .unwrap();
    assert_eq!(bits.len(), l);
    let m: u64 = dec_bits(&bits)
        .iter()
        .enumerate()
        .map(|(i, b)| b << i)
        .sum();
    (m, dec_u64(&payload))
}

#[test]
fn smin_examples() {
    let lp = parties(8, 9);
    assert_eq!(smin_plain(&lp, 3, 100, 9, 200, 4), (3, 100));
    assert_eq!(smin_plain(&lp, 9, 100, 3, 200, 4), (3, 200));
    assert_eq!(smin_plain(&lp, 5, 100, 5, 200, 4), (5, 100));
    assert_eq!(smin_plain(&lp, 0, 1, 15, 2, 4), (0, 1));
    assert_eq!(smin_plain(&lp, 15, 1, 0, 2, 4), (0, 2));
    assert_eq!(smin_plain(&lp, 1, 7, 0, 8, 1), (0, 8));
}

#[test]
fn smin_random_pairs() {
    let lp = parties(12, 10);
    let mut r = rng(21);
    for _ in 0..15 {
        let (u, v) = (r.gen_range(0..1 << 12), r.gen_range(0..1 << 12));
        let expected = min_n_plain(&[(u, 1u64), (v, 2u64)]).unwrap();
        assert_eq!(smin_plain(&lp, u, 1, v, 2, 12), expected, "{u} vs {v}");
    }
}

#[test]
fn smin_counts_and_errors() {
    let lp = parties(10, 11);
    let pk = lp.p1.public_key().clone();
    let mut r = rng(22);
    let payload = pk.encrypt_u64(0, &mut r);
    for l in [1usize, 5, 10] {
        let mut session = lp.p1.open(ProtocolTag::Smin).unwrap();
        session
            .smin(
                &enc_bits(&lp, 1, l, 3),
                &payload,
                &enc_bits(&lp, 0, l, 4),
                &payload,
            )
            .unwrap();
        assert_eq!(session.sm_calls(), smin_sm_calls(l));
        assert_eq!(smin_sm_calls(l), 4 * l as u64);
    }
    let err = lp
        .p1
        .smin(
            &enc_bits(&lp, 1, 3, 3),
            &payload,
            &enc_bits(&lp, 0, 4, 4),
            &payload,
        )
        .unwrap_err();
    assert!(matches!(
        err,
        ProtocolError::Dimension {
            expected: 3,
            got: 4
        }
    ));
}

#[test]
fn smin_view_does_not_depend_on_order() {
    let lp = recorded(ProtocolConfig::with_bit_budget(6), None);
    let pk = lp.p1.public_key().clone();
    let mut r = rng(23);
    let p = pk.encrypt_u64(0, &mut r);
    let (u, v) = (enc_bits(&lp, 12, 6, 5), enc_bits(&lp, 40, 6, 6));
    let mut views = Vec::new();
    for swap in [false, true, false, true] {
        if swap {
            lp.p1.smin(&v, &p, &u, &p).unwrap();
        } else {
            lp.p1.smin(&u, &p, &v, &p).unwrap();
        }
        let view = lp.take_p2_view().p2_view_multiset();
        assert_eq!(view.len(), 2 * smin_sm_calls(6) as usize);
        views.push(view);
    }
    for i in 0..views.len() {
        for j in i + 1..views.len() {
            assert_ne!(views[i], views[j]);
        }
    }
}

fn smin_n_plain_run(lp: &LocalParties, values: &[u64], l: usize) -> (u64, u64) {
    let pk = lp.p1.public_key().clone();
    let mut r = rng(values.len() as u64);
    let entries = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            (
                enc_bits(lp, v, l, i as u64),
                pk.encrypt_u64(i as u64, &mut r),
            )
        })
        .collect();
    let before = lp.p1.stats().sm_calls;
    let (bits, payload) = lp.p1.smin_n(entries).unwrap();
    assert_eq!(
        lp.p1.stats().sm_calls - before,
        smin_n_sm_calls(values.len(), l)
    );
    let m = dec_bits(&bits)
        .iter()
        .enumerate()
        .map(|(i, b)| b << i)
        .sum();
    (m, dec_u64(&payload))
}

#[test]
fn smin_n_examples() {
    let lp = parties(8, 12);
    assert_eq!(smin_n_plain_run(&lp, &[5], 4), (5, 0));
    assert_eq!(smin_n_plain_run(&lp, &[7, 2, 9, 4], 4), (2, 1));
    assert_eq!(smin_n_plain_run(&lp, &[3, 3], 4), (3, 0));
    assert_eq!(smin_n_plain_run(&lp, &[9, 3, 8, 3, 3], 4), (3, 1));
    assert!(matches!(
        lp.p1.smin_n(Vec::new()),
        Err(ProtocolError::EmptyInput)
    ));
}

#[test]
fn smin_n_matches_plain_minimum_under_shuffles() {
    let lp = parties(20, 13);
    let mut r = rng(24);
    let values: Vec<u64> = (0..9).map(|_| r.gen_range(0..1 << 20)).collect();
    let with_index: Vec<(u64, u64)> = values.iter().copied().zip(0..).collect();
    assert_eq!(
        smin_n_plain_run(&lp, &values, 20),
        min_n_plain(&with_index).unwrap()
    );

    let mut shuffled = values.clone();
    shuffled.shuffle(&mut r);
    assert_eq!(
        smin_n_plain_run(&lp, &shuffled, 20).0,
        *values.iter().min().unwrap()
    );
}

#[test]
fn mismatched_key_is_rejected_at_open() {
    let (other_pk, _) = keygen(512, &mut rng(99)).unwrap();
    let (a, b) = in_process_pair();
    let lp = LocalParties::start_over(
        other_pk.clone(),
        key(),
        ProtocolConfig::default(),
        LocalOptions::default(),
        a,
        b,
    )
    .unwrap();
    let c = other_pk.encrypt_u64(1, &mut rng(1));
    let err = lp.p1.sm(&c, &c).unwrap_err();
    assert!(
        matches!(err, ProtocolError::Runtime(RuntimeError::KeyMismatch)),
        "{err}"
    );
}

#[test]
fn headroom_is_enforced() {
    let (a, _b) = in_process_pair();
    let endpoint = Endpoint::new(a, PartyRole::P1, EndpointOptions::default());
    let pk = key().public_key().clone();
    let err = PartyOne::new(endpoint, pk, ProtocolConfig::with_bit_budget(510), None);
    assert!(matches!(
        err,
        Err(ProtocolError::InsufficientHeadroom { .. })
    ));
}

/// A peer that accepts sessions and answers every request with `reply`.
fn misbehaving_peer(reply: Vec<BigUint>) -> PartyOne {
    let (a, b) = in_process_pair();
    let p2 = Endpoint::new(b, PartyRole::P2, EndpointOptions::default());
    thread::spawn(move || {
        while let Ok(incoming) = p2.accept() {
            let mut session = incoming.accept().unwrap();
            while let Ok(msg) = session.recv_message() {
                if session.send_tagged(msg.tag, reply.clone()).is_err() {
                    break;
                }
            }
        }
    });
    let p1 = Endpoint::new(a, PartyRole::P1, EndpointOptions::default());
    PartyOne::new(
        p1,
        key().public_key().clone(),
        ProtocolConfig::default(),
        None,
    )
    .unwrap()
}

#[test]
fn malformed_replies_abort() {
    let pk = key().public_key().clone();
    let c = pk.encrypt_u64(3, &mut rng(2));
    for reply in [
        vec![],
        vec![BigUint::from(0u32)],
        vec![pk.n_squared().clone()],
        vec![BigUint::from(1u32), BigUint::from(1u32)],
    ] {
        let p1 = misbehaving_peer(reply.clone());
        let err = p1.sm(&c, &c).unwrap_err();
        assert!(
            matches!(err, ProtocolError::Runtime(RuntimeError::Aborted(_))),
            "{reply:?}: {err}"
        );
    }
}

#[test]
fn parallel_sessions_share_one_link() {
    let lp = parties(16, 14);
    let pk = lp.p1.public_key().clone();
    thread::scope(|s| {
        for t in 0..4u64 {
            let p1 = &lp.p1;
            let pk = &pk;
            s.spawn(move || {
                let mut r = rng(t);
                for i in 0..5 {
                    let z = t * 1000 + i;
                    let bits = p1.sbd(&pk.encrypt_u64(z, &mut r)).unwrap();
                    assert_eq!(dec_u64(&bits.recompose(pk)), z);
                }
            });
        }
    });
    assert_eq!(lp.p1.stats().sbd_calls, 20);
}
