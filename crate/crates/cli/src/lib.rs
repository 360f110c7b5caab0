//! Operator commands for the two-party encrypted k-NN classifier.

pub mod commands;
pub mod error;
pub mod user;
pub mod workload;

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "ppknn",
    version,
    about = "Encrypted k-NN classification between two servers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a Paillier key pair.
    Keygen(KeygenArgs),
    /// Encrypt a CSV dataset into a database file.
    EncryptDb(EncryptDbArgs),
    /// Run P1 or P2.
    Serve(ServeArgs),
    /// Classify one record against a running P1.
    Query(QueryArgs),
    /// Run the differential suites in-process against the plaintext oracle.
    Verify(VerifyArgs),
    /// Time the protocols and print a tab-separated table.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    /// Modulus size in bits.
    #[arg(long, default_value_t = 2048)]
    pub bits: u64,
    /// Allow moduli below 2048 bits (never below 512).
    #[arg(long)]
    pub insecure: bool,
    /// Directory for `ppknn.pub` and `ppknn.sec`.
    #[arg(long)]
    pub out: PathBuf,
    /// Deterministic key generation, for tests only.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EncryptDbArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long = "pub")]
    pub public_key: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Bit budget: every squared distance stays below 2^l.
    #[arg(short = 'l', long = "bits-l", default_value_t = 32)]
    pub l: u32,
    /// Number of classes; defaults to one more than the largest label.
    #[arg(long)]
    pub classes: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Role {
    P1,
    P2,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_enum)]
    pub role: Role,
    /// P2: address for P1's connection. P1: address for users.
    #[arg(long)]
    pub listen: SocketAddr,
    /// P1 only: P2's address.
    #[arg(long)]
    pub connect: Option<SocketAddr>,
    /// P2 only: secret key file.
    #[arg(long)]
    pub secret: Option<PathBuf>,
    /// P1 only: public key file.
    #[arg(long = "pub")]
    pub public_key: Option<PathBuf>,
    /// P1 only: encrypted database file.
    #[arg(long)]
    pub db: Option<PathBuf>,
    /// Append every protocol message to this file, tab-separated.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Sessions (P2) or user connections and pipeline stages (P1) handled at once.
    #[arg(long, default_value_t = 1)]
    pub concurrency: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Secure,
    Fast,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// P1's user address.
    #[arg(long)]
    pub connect: SocketAddr,
    #[arg(long = "pub")]
    pub public_key: PathBuf,
    #[arg(short, long)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Secure)]
    pub mode: ModeArg,
    /// Attribute values, comma separated.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub query: Vec<u64>,
    /// Also print the delivered neighbor labels (fast mode) to stderr.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Trials per pairwise suite; list and end-to-end suites scale with it.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Use the uncorrected SM unblinding, which must make the suites fail.
    #[arg(long)]
    pub inject_literal_sm: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 512)]
    pub key_bits: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(short, long, default_value_t = 30)]
    pub n: usize,
    #[arg(short, long, default_value_t = 4)]
    pub m: usize,
    #[arg(short = 'l', long = "bits-l", default_value_t = 32)]
    pub l: u32,
    #[arg(short, long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: u64,
    /// Secret key file; without it a key of `--key-bits` is generated.
    #[arg(long)]
    pub secret: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    pub key_bits: u64,
    /// Comma-separated subset of sm,ssed,sbd,smin,smin_n,classify.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "sm,ssed,sbd,smin,smin_n,classify"
    )]
    pub protocols: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Parses `args` and runs the command, returning the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Keygen(a) => commands::keygen::run(&a),
        Command::EncryptDb(a) => commands::encrypt_db::run(&a),
        Command::Serve(a) => commands::serve::run(&a),
        Command::Query(a) => commands::query::run(&a),
        Command::Verify(a) => commands::verify::run(&a),
        Command::Bench(a) => commands::bench::run(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
