use std::collections::BTreeMap;

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use super::{prime, PaillierError, PublicKey, SecretKey};
use crate::encoding::{parse_hex, to_hex};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyFileError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("inconsistent key: {0}")]
    Inconsistent(String),
}

fn syntax(line: usize, reason: impl Into<String>) -> KeyFileError {
    KeyFileError::Syntax {
        line,
        reason: reason.into(),
    }
}

/// Parses `name=hex` lines, allowing only the given field names, each exactly once.
fn parse_fields(
    text: &str,
    allowed: &[&'static str],
) -> Result<BTreeMap<&'static str, BigUint>, KeyFileError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut fields = BTreeMap::new();
    for (idx, raw) in body.split('\n').enumerate() {
        let line = idx + 1;
        let (name, value) = raw
            .split_once('=')
            .ok_or_else(|| syntax(line, "expected `name=hex`"))?;
        let name = *allowed
            .iter()
            .find(|f| **f == name)
            .ok_or_else(|| syntax(line, format!("unknown field `{}`", name.escape_debug())))?;
        let value =
            parse_hex(value).ok_or_else(|| syntax(line, "value is not canonical lowercase hex"))?;
        if fields.insert(name, value).is_some() {
            return Err(syntax(line, format!("duplicate field `{name}`")));
        }
    }
    Ok(fields)
}

pub(super) fn write_public(pk: &PublicKey) -> String {
    format!(
        "n={}\nbits={}\n",
        to_hex(pk.n()),
        to_hex(&BigUint::from(pk.bit_length()))
    )
}

pub(super) fn read_public(text: &str) -> Result<PublicKey, PaillierError> {
    let mut fields = parse_fields(text, &["n", "bits"])?;
    let n = fields.remove("n").ok_or(KeyFileError::MissingField("n"))?;
    let bits = fields
        .remove("bits")
        .ok_or(KeyFileError::MissingField("bits"))?;
    if bits != BigUint::from(n.bits()) {
        return Err(KeyFileError::Inconsistent(format!(
            "bits field says {bits} but n has {} bits",
            n.bits()
        ))
        .into());
    }
    PublicKey::from_modulus(n)
}

pub(super) fn write_secret(sk: &SecretKey) -> String {
    format!("p={}\nq={}\n", to_hex(sk.p()), to_hex(sk.q()))
}

pub(super) fn read_secret(text: &str) -> Result<SecretKey, PaillierError> {
    let mut fields = parse_fields(text, &["p", "q"])?;
    let p = fields.remove("p").ok_or(KeyFileError::MissingField("p"))?;
    let q = fields.remove("q").ok_or(KeyFileError::MissingField("q"))?;
    if p.bits() > 8192 || q.bits() > 8192 {
        return Err(KeyFileError::Inconsistent("prime factor too large".into()).into());
    }
    // Primality witnesses only need to be unpredictable to whoever wrote the file.
    let mut rng = ChaCha20Rng::from_entropy();
    for (name, value) in [("p", &p), ("q", &q)] {
        if !prime::is_probable_prime(value, prime::MILLER_RABIN_ROUNDS, &mut rng) {
            return Err(KeyFileError::Inconsistent(format!("{name} is not prime")).into());
        }
    }
    SecretKey::from_primes(p, q)
}
