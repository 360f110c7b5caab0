#![no_main]

use libfuzzer_sys::fuzz_target;
use ppknn_core::dataset::{parse_csv, to_csv};

fuzz_target!(|text: &str| {
    if let Ok(d) = parse_csv(text) {
        assert_eq!(d.records.len(), d.lines.len());
        if !d.records.is_empty() {
            assert_eq!(parse_csv(&to_csv(&d.records)).unwrap().records, d.records);
        }
    }
});
