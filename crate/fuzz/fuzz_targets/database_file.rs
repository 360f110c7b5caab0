#![no_main]

use libfuzzer_sys::fuzz_target;
use ppknn_core::ppknn::EncryptedDatabase;

fuzz_target!(|text: &str| {
    if let Ok(db) = EncryptedDatabase::from_text(text) {
        let again = EncryptedDatabase::from_text(&db.to_text()).unwrap();
        assert_eq!(again.to_text(), db.to_text());
    }
});
