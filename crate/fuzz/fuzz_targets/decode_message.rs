#![no_main]

use libfuzzer_sys::fuzz_target;
use ppknn_core::runtime::{decode_message, encode_message};

fuzz_target!(|data: &[u8]| {
    if let Ok(msg) = decode_message(data) {
        // Decoding is strict, so a frame that parses must re-encode to the same bytes.
        let bytes = encode_message(&msg).expect("decoded frames fit the limits");
        assert_eq!(bytes, data);
    }
});
