use std::net::TcpStream;
use std::time::Duration;

use ppknn_core::ppknn::{encrypt_query, PpknnError, ResultMode};
use rand::Rng;

use super::{load_public_key, rng_from};
use crate::error::{failure, usage, CliError, CliResult};
use crate::user::{fetch_schema, reconstruct, submit_query, ErrorCode, ExchangeError};
use crate::{ModeArg, QueryArgs};

pub fn run(args: &QueryArgs) -> CliResult<()> {
    if args.k == 0 {
        return Err(usage("k = 0 is out of range; k must be at least 1"));
    }
    let pk = load_public_key(&args.public_key)?;
    let mode = match args.mode {
        ModeArg::Secure => ResultMode::SecureMajority,
        ModeArg::Fast => ResultMode::Fast,
    };
    let mut stream = TcpStream::connect_timeout(&args.connect, Duration::from_secs(10))
        .map_err(|e| failure(format!("cannot connect to P1 at {}: {e}", args.connect)))?;
    let mut rng = rng_from(None);
    let session_id: u64 = rng.gen();

    let schema = fetch_schema(&mut stream, &pk, session_id).map_err(exchange_error)?;
    let (query, pads) =
        encrypt_query(&pk, &schema, &args.query, args.k, mode, &mut rng).map_err(|e| match e {
            PpknnError::Dimension { .. }
            | PpknnError::AttributeOutOfRange { .. }
            | PpknnError::KOutOfRange { .. } => usage(e.to_string()),
            other => failure(other.to_string()),
        })?;
    let result = submit_query(&mut stream, session_id, &query).map_err(exchange_error)?;
    if args.verbose && mode == ResultMode::Fast {
        let labels = result
            .labels(&pk, &pads)
            .map_err(|e| failure(e.to_string()))?;
        eprintln!("neighbor labels, nearest first: {labels:?}");
    }
    let label = reconstruct(&pk, &result, &pads).map_err(exchange_error)?;
    println!("{label}");
    Ok(())
}

fn exchange_error(e: ExchangeError) -> CliError {
    match e {
        ExchangeError::Code(ErrorCode::Dimension | ErrorCode::KOutOfRange) => usage(e.to_string()),
        other => failure(other.to_string()),
    }
}
