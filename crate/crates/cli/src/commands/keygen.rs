use std::fs;
use std::io::Write;

use ppknn_core::paillier::{keygen, DEFAULT_KEY_BITS};

use super::{rng_from, PUBLIC_KEY_FILE, SECRET_KEY_FILE};
use crate::error::{usage, CliResult, Context};
use crate::KeygenArgs;

/// Smallest modulus accepted even with `--insecure`.
pub const INSECURE_FLOOR_BITS: u64 = 512;

pub fn run(args: &KeygenArgs) -> CliResult<()> {
    check_bits(args.bits, args.insecure)?;
    let mut rng = rng_from(args.seed);
    let (pk, sk) = keygen(args.bits, &mut rng).map_err(|e| usage(e.to_string()))?;

    fs::create_dir_all(&args.out).context(format_args!("cannot create {}", args.out.display()))?;
    let pub_path = args.out.join(PUBLIC_KEY_FILE);
    let sec_path = args.out.join(SECRET_KEY_FILE);
    fs::write(&pub_path, pk.to_key_file())
        .context(format_args!("cannot write {}", pub_path.display()))?;
    write_private(&sec_path, sk.to_key_file().as_bytes())
        .context(format_args!("cannot write {}", sec_path.display()))?;
    println!("{}", pub_path.display());
    println!("{}", sec_path.display());
    Ok(())
}

pub fn check_bits(bits: u64, insecure: bool) -> CliResult<()> {
    if bits < INSECURE_FLOOR_BITS {
        return Err(usage(format!(
            "refusing a {bits}-bit modulus; the minimum is {INSECURE_FLOOR_BITS}"
        )));
    }
    if bits < DEFAULT_KEY_BITS && !insecure {
        return Err(usage(format!(
            "a {bits}-bit modulus is insecure; pass --insecure to allow it for testing"
        )));
    }
    if !bits.is_multiple_of(2) {
        return Err(usage("the modulus size must be even"));
    }
    Ok(())
}

#[cfg(unix)]
fn write_private(path: &std::path::Path, bytes: &[u8]) -> std::io::Result<()> {
    use std::os::unix::fs::OpenOptionsExt;
    let mut f = fs::OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(true)
        .mode(0o600)
        .open(path)?;
    f.write_all(bytes)
}

#[cfg(not(unix))]
fn write_private(path: &std::path::Path, bytes: &[u8]) -> std::io::Result<()> {
    fs::File::create(path)?.write_all(bytes)
}
