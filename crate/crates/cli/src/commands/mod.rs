pub mod bench;
pub mod encrypt_db;
pub mod keygen;
pub mod query;
pub mod serve;
pub mod verify;

use std::fs;
use std::path::Path;

use ppknn_core::paillier::{PublicKey, SecretKey};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{CliResult, Context};

pub const PUBLIC_KEY_FILE: &str = "ppknn.pub";
pub const SECRET_KEY_FILE: &str = "ppknn.sec";

pub(crate) fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).context(format_args!("cannot read {}", path.display()))
}

pub(crate) fn load_public_key(path: &Path) -> CliResult<PublicKey> {
    PublicKey::from_key_file(&read_text(path)?)
        .context(format_args!("bad public key {}", path.display()))
}

pub(crate) fn load_secret_key(path: &Path) -> CliResult<SecretKey> {
    SecretKey::from_key_file(&read_text(path)?)
        .context(format_args!("bad secret key {}", path.display()))
}

pub(crate) fn rng_from(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}
