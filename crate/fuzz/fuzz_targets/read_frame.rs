#![no_main]

use libfuzzer_sys::fuzz_target;
use ppknn_core::runtime::decode_message;
use ppknn_core::runtime::wire::read_frame;

fuzz_target!(|data: &[u8]| {
    let mut reader = data;
    let mut consumed = 0;
    while let Ok(Some(frame)) = read_frame(&mut reader) {
        consumed += frame.len();
        assert!(consumed <= data.len());
        let _ = decode_message(&frame);
    }
});
