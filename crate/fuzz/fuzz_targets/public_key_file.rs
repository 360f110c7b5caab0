#![no_main]

use libfuzzer_sys::fuzz_target;
use ppknn_core::paillier::PublicKey;

fuzz_target!(|text: &str| {
    if let Ok(pk) = PublicKey::from_key_file(text) {
        assert_eq!(PublicKey::from_key_file(&pk.to_key_file()).unwrap(), pk);
    }
});
