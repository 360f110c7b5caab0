#![no_main]

use libfuzzer_sys::fuzz_target;
use ppknn_core::paillier::SecretKey;

fuzz_target!(|text: &str| {
    if let Ok(sk) = SecretKey::from_key_file(text) {
        let again = SecretKey::from_key_file(&sk.to_key_file()).unwrap();
        assert_eq!(again.public_key(), sk.public_key());
    }
});
