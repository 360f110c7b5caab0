use std::fs;

use ppknn_core::dataset::parse_csv;
use ppknn_core::ppknn::{encrypt_database, PpknnError, Schema};
use ppknn_core::protocols::ProtocolConfig;

use super::{load_public_key, read_text, rng_from};
use crate::error::{failure, usage, CliResult, Context};
use crate::EncryptDbArgs;

pub fn run(args: &EncryptDbArgs) -> CliResult<()> {
    let pk = load_public_key(&args.public_key)?;
    ProtocolConfig::with_bit_budget(args.l)
        .check_headroom(&pk)
        .map_err(|e| usage(e.to_string()))?;
    let text = read_text(&args.csv)?;
    let dataset = parse_csv(&text).map_err(|e| usage(format!("{}: {e}", args.csv.display())))?;
    let w = args.classes.unwrap_or_else(|| dataset.class_count());
    let schema = Schema {
        m: dataset.attribute_count(),
        w,
        l: args.l,
    };
    let line_of = |record: usize| dataset.lines.get(record).copied().unwrap_or(0);
    let db =
        encrypt_database(&pk, schema, &dataset.records, &mut rng_from(args.seed)).map_err(|e| {
            match e {
                PpknnError::AttributeOutOfRange { record, .. }
                | PpknnError::LabelOutOfRange { record, .. }
                | PpknnError::SchemaMismatch { record, .. } => usage(format!(
                    "{} line {}: {e}",
                    args.csv.display(),
                    line_of(record)
                )),
                other => failure(other.to_string()),
            }
        })?;
    fs::write(&args.out, db.to_text())
        .context(format_args!("cannot write {}", args.out.display()))?;
    println!(
        "n={} m={} w={} l={}",
        db.len(),
        schema.m,
        schema.w,
        schema.l
    );
    Ok(())
}
