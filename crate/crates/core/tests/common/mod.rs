#![allow(dead_code)]

use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use ppknn_core::local::{LocalOptions, LocalParties};
use ppknn_core::paillier::{keygen, Ciphertext, SecretKey};
use ppknn_core::protocols::{EncryptedBits, ProtocolConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn key() -> &'static SecretKey {
    static KEY: OnceLock<SecretKey> = OnceLock::new();
    KEY.get_or_init(|| {
        let mut rng = ChaCha20Rng::seed_from_u64(0x5eed_0512);
        keygen(512, &mut rng).unwrap().1
    })
}

pub fn parties(l: u32, seed: u64) -> LocalParties {
    LocalParties::start(
        key(),
        ProtocolConfig::with_bit_budget(l),
        LocalOptions {
            seed: Some(seed),
            record_transcripts: false,
        },
    )
    .unwrap()
}

pub fn recorded(config: ProtocolConfig, seed: Option<u64>) -> LocalParties {
    LocalParties::start(
        key(),
        config,
        LocalOptions {
            seed,
            record_transcripts: true,
        },
    )
    .unwrap()
}

pub fn dec(c: &Ciphertext) -> BigUint {
    key().decrypt(c).unwrap()
}

pub fn dec_u64(c: &Ciphertext) -> u64 {
    dec(c).to_u64().expect("fits in u64")
}

pub fn dec_bits(bits: &EncryptedBits) -> Vec<u64> {
    bits.bits().iter().map(dec_u64).collect()
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
