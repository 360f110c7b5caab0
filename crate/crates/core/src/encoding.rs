//! Canonical lowercase-hex text encoding shared by the key and database file formats.

use num_bigint::BigUint;
use num_traits::Num;

/// Lowercase hex with no leading zeros; zero is `0`.
pub fn to_hex(value: &BigUint) -> String {
    value.to_str_radix(16)
}

/// Parses the canonical form produced by [`to_hex`]. Uppercase digits, signs,
/// prefixes, whitespace and leading zeros are all rejected.
pub fn parse_hex(text: &str) -> Option<BigUint> {
    let bytes = text.as_bytes();
    if bytes.is_empty() || bytes.len() > (1 << 20) {
        return None;
    }
    if !bytes
        .iter()
        .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(b))
    {
        return None;
    }
    if bytes.len() > 1 && bytes[0] == b'0' {
        return None;
    }
    BigUint::from_str_radix(text, 16).ok()
}
