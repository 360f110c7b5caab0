//! Text form of an encrypted database:
//!
//! ```text
//! ppknn-db v1; n=<dec>; m=<dec>; w=<dec>; l=<dec>
//! <hex> <hex> ... <hex label>
//! ```
//!
//! One record per line, `m` attribute ciphertexts then the label, separated by single spaces.

use std::fmt::Write as _;

use super::{EncryptedDatabase, EncryptedRecord, PpknnError, Schema};
use crate::encoding::{parse_hex, to_hex};
use crate::paillier::Ciphertext;
use crate::protocols::EncryptedVector;

pub const DB_HEADER_PREFIX: &str = "ppknn-db v1";

/// Largest record count a header may declare before any record is read.
const MAX_DECLARED_RECORDS: usize = 1 << 24;
const MAX_DECLARED_ATTRIBUTES: usize = 1 << 16;

impl EncryptedDatabase {
    pub fn to_text(&self) -> String {
        let s = &self.schema;
        let mut out = format!(
            "{DB_HEADER_PREFIX}; n={}; m={}; w={}; l={}\n",
            self.records.len(),
            s.m,
            s.w,
            s.l
        );
        for r in &self.records {
            for c in r.attributes.elements() {
                out.push_str(&to_hex(c.as_biguint()));
                out.push(' ');
            }
            let _ = writeln!(out, "{}", to_hex(r.label.as_biguint()));
        }
        out
    }

    /// Parses [`to_text`](Self::to_text) output. Cells are range-checked only as
    /// nonzero integers; use [`check_key`](Self::check_key) to bind them to a key.
    pub fn from_text(text: &str) -> Result<Self, PpknnError> {
        let err = |line: usize, reason: String| PpknnError::DatabaseFile { line, reason };
        let body = text.strip_suffix('\n').unwrap_or(text);
        let mut lines = body.split('\n');
        let header = lines.next().unwrap_or("");
        let (n, schema) = parse_header(header).map_err(|r| err(1, r))?;

        let mut records = Vec::with_capacity(n.min(4096));
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            if records.len() == n {
                return Err(err(line_no, format!("more than the declared {n} records")));
            }
            let mut cells = Vec::with_capacity(schema.m + 1);
            for (col, token) in line.split(' ').enumerate() {
                if col > schema.m {
                    return Err(err(line_no, format!("more than {} cells", schema.m + 1)));
                }
                let value = parse_hex(token).ok_or_else(|| {
                    err(line_no, format!("cell {} is not canonical hex", col + 1))
                })?;
                if value == 0u32.into() {
                    return Err(err(line_no, format!("cell {} is zero", col + 1)));
                }
                cells.push(Ciphertext::from_biguint(value));
            }
            if cells.len() != schema.m + 1 {
                return Err(err(
                    line_no,
                    format!("{} cells, expected {}", cells.len(), schema.m + 1),
                ));
            }
            let label = cells.pop().expect("m + 1 >= 1 cells");
            records.push(EncryptedRecord {
                attributes: EncryptedVector::new(cells),
                label,
            });
        }
        if records.len() != n {
            return Err(err(
                records.len() + 2,
                format!("{} records, header declares {n}", records.len()),
            ));
        }
        Ok(EncryptedDatabase { schema, records })
    }
}

fn parse_header(line: &str) -> Result<(usize, Schema), String> {
    let mut parts = line.split("; ");
    if parts.next() != Some(DB_HEADER_PREFIX) {
        return Err(format!("header must start with {DB_HEADER_PREFIX:?}"));
    }
    let mut field = |name: &str| -> Result<u64, String> {
        let part = parts
            .next()
            .ok_or_else(|| format!("missing field {name}"))?;
        let value = part
            .strip_prefix(name)
            .and_then(|p| p.strip_prefix('='))
            .ok_or_else(|| format!("expected field {name}, found {part:?}"))?;
        parse_decimal(value).ok_or_else(|| format!("field {name} is not a canonical decimal"))
    };
    let n = field("n")?;
    let m = field("m")?;
    let w = field("w")?;
    let l = field("l")?;
    if parts.next().is_some() {
        return Err("unexpected trailing header fields".into());
    }
    if n > MAX_DECLARED_RECORDS as u64 || m > MAX_DECLARED_ATTRIBUTES as u64 {
        return Err("declared size is too large".into());
    }
    if l == 0 || l > 4096 {
        return Err(format!("bit budget {l} out of range"));
    }
    Ok((
        n as usize,
        Schema {
            m: m as usize,
            w,
            l: l as u32,
        },
    ))
}

fn parse_decimal(s: &str) -> Option<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0'))
    {
        return None;
    }
    s.parse().ok()
}
