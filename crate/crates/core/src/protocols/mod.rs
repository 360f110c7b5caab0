//! Two-party sub-protocols over Paillier ciphertexts.
//!
//! [`PartyOne`] drives every protocol: it holds the public key and the encrypted inputs,
//! and each call runs inside one [`P1Session`]. [`PartyTwo`] holds the secret key and
//! answers single-step requests, seeing only blinded values.

mod party_two;
mod sbd;
mod sm;
mod smin;
mod ssed;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use num_bigint::BigUint;
use num_traits::One;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::paillier::{Ciphertext, PaillierError, PublicKey};
use crate::runtime::{Endpoint, ProtocolTag, RuntimeError, Session};

pub use party_two::PartyTwo;
pub use smin::{smin_n_sm_calls, smin_sm_calls};

/// Default bit budget: every value and squared distance is below `2^32`.
pub const DEFAULT_BIT_BUDGET: u32 = 32;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("protocol aborted: {0}")]
    Abort(String),
    #[error("verification failed: {0}")]
    VerificationFailed(&'static str),
    #[error("bit budget {l} leaves no blinding headroom under a {n_bits}-bit modulus")]
    InsufficientHeadroom { l: u32, n_bits: u64 },
}

/// How P1 removes the blinding terms after the SM round trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmUnblinding {
    /// `h' * E(a)^(N-r_b) * E(b)^(N-r_a) * E(N - r_a r_b)`.
    #[default]
    Corrected,
    /// `h' * E(a) * E(b)^(N-r_b) * E(N - r_a r_b)`, which leaves cross terms behind.
    /// Kept only so the differential suite can show that it fails.
    LiteralTranscription,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolConfig {
    /// All protocol inputs and squared distances are below `2^bit_budget_l`.
    pub bit_budget_l: u32,
    pub sm_unblinding: SmUnblinding,
    /// Run the blinded recomposition check after each bit decomposition.
    pub verify_decomposition: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            bit_budget_l: DEFAULT_BIT_BUDGET,
            sm_unblinding: SmUnblinding::Corrected,
            verify_decomposition: true,
        }
    }
}

impl ProtocolConfig {
    pub fn with_bit_budget(l: u32) -> Self {
        ProtocolConfig {
            bit_budget_l: l,
            ..Default::default()
        }
    }

    /// Requires `2^l * 4 < N`, so `z + r` with `z < 2^l` and `r < N/4` never wraps.
    pub fn check_headroom(&self, pk: &PublicKey) -> Result<(), ProtocolError> {
        let bound = BigUint::one() << (self.bit_budget_l as u64 + 2);
        if self.bit_budget_l == 0 || &bound >= pk.n() {
            return Err(ProtocolError::InsufficientHeadroom {
                l: self.bit_budget_l,
                n_bits: pk.bit_length(),
            });
        }
        Ok(())
    }
}

/// Encryptions of the bits of one integer, least significant first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedBits(Vec<Ciphertext>);

impl EncryptedBits {
    pub fn new(bits: Vec<Ciphertext>) -> Self {
        EncryptedBits(bits)
    }

    pub fn bits(&self) -> &[Ciphertext] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<Ciphertext> {
        self.0
    }

    /// Encrypts the low `len` bits of `value`.
    pub fn encrypt<R: rand::Rng + ?Sized>(
        pk: &PublicKey,
        value: u64,
        len: usize,
        rng: &mut R,
    ) -> Self {
        EncryptedBits(
            (0..len)
                .map(|i| pk.encrypt_u64((value >> i) & 1, rng))
                .collect(),
        )
    }

    /// `prod bits[i]^(2^i)`, an encryption of the recomposed integer.
    pub fn recompose(&self, pk: &PublicKey) -> Ciphertext {
        let mut acc = pk.encode_constant(&BigUint::from(0u32));
        for (i, bit) in self.0.iter().enumerate() {
            let weight = BigUint::one() << i;
            acc = pk.add(&acc, &pk.scalar_exp(bit, &weight));
        }
        acc
    }
}

/// Attribute-wise encryption of one vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedVector(Vec<Ciphertext>);

impl EncryptedVector {
    pub fn new(elements: Vec<Ciphertext>) -> Self {
        EncryptedVector(elements)
    }

    pub fn encrypt<R: rand::Rng + ?Sized>(pk: &PublicKey, values: &[u64], rng: &mut R) -> Self {
        EncryptedVector(values.iter().map(|&v| pk.encrypt_u64(v, rng)).collect())
    }

    pub fn elements(&self) -> &[Ciphertext] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Counters of sub-protocol invocations made by P1.
#[derive(Debug, Default)]
pub struct Stats {
    pub sm_calls: AtomicU64,
    pub lsb_calls: AtomicU64,
    pub sbd_calls: AtomicU64,
    pub ssed_calls: AtomicU64,
    pub smin_calls: AtomicU64,
    pub zero_tests: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StatsSnapshot {
    pub sm_calls: u64,
    pub lsb_calls: u64,
    pub sbd_calls: u64,
    pub ssed_calls: u64,
    pub smin_calls: u64,
    pub zero_tests: u64,
}

impl Stats {
    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            sm_calls: self.sm_calls.load(Ordering::Relaxed),
            lsb_calls: self.lsb_calls.load(Ordering::Relaxed),
            sbd_calls: self.sbd_calls.load(Ordering::Relaxed),
            ssed_calls: self.ssed_calls.load(Ordering::Relaxed),
            smin_calls: self.smin_calls.load(Ordering::Relaxed),
            zero_tests: self.zero_tests.load(Ordering::Relaxed),
        }
    }

    fn bump(counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }
}

impl std::ops::Sub for StatsSnapshot {
    type Output = StatsSnapshot;

    fn sub(self, rhs: Self) -> Self {
        StatsSnapshot {
            sm_calls: self.sm_calls - rhs.sm_calls,
            lsb_calls: self.lsb_calls - rhs.lsb_calls,
            sbd_calls: self.sbd_calls - rhs.sbd_calls,
            ssed_calls: self.ssed_calls - rhs.ssed_calls,
            smin_calls: self.smin_calls - rhs.smin_calls,
            zero_tests: self.zero_tests - rhs.zero_tests,
        }
    }
}

/// The data-hosting party. Holds only the public key.
pub struct PartyOne {
    endpoint: Endpoint,
    pk: Arc<PublicKey>,
    config: ProtocolConfig,
    seeds: Mutex<ChaCha20Rng>,
    stats: Arc<Stats>,
}

impl PartyOne {
    /// `seed` makes every random choice P1 makes reproducible; `None` draws from the OS.
    pub fn new(
        endpoint: Endpoint,
        pk: PublicKey,
        config: ProtocolConfig,
        seed: Option<u64>,
    ) -> Result<Self, ProtocolError> {
        config.check_headroom(&pk)?;
        let seeds = match seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_entropy(),
        };
        Ok(PartyOne {
            endpoint,
            pk: Arc::new(pk),
            config,
            seeds: Mutex::new(seeds),
            stats: Arc::new(Stats::default()),
        })
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.pk
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    /// A fresh generator for local (non-session) randomness.
    pub fn fork_rng(&self) -> ChaCha20Rng {
        let mut seeds = self.seeds.lock().unwrap();
        ChaCha20Rng::seed_from_u64(seeds.next_u64())
    }

    /// Opens a session bound to this key: the hello carries `N`, and P2 rejects a mismatch.
    pub fn open(&self, tag: ProtocolTag) -> Result<P1Session, ProtocolError> {
        let rng = self.fork_rng();
        let session = self.endpoint.open_session(tag, vec![self.pk.n().clone()])?;
        Ok(P1Session {
            session,
            pk: Arc::clone(&self.pk),
            config: self.config,
            rng,
            stats: Arc::clone(&self.stats),
            sm_calls: 0,
        })
    }

    pub fn sm(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, ProtocolError> {
        self.open(ProtocolTag::Sm)?.sm(a, b)
    }

    pub fn ssed(
        &self,
        x: &EncryptedVector,
        y: &EncryptedVector,
    ) -> Result<Ciphertext, ProtocolError> {
        self.open(ProtocolTag::Ssed)?.ssed(x, y)
    }

    pub fn encrypted_lsb(&self, z: &Ciphertext) -> Result<Ciphertext, ProtocolError> {
        self.open(ProtocolTag::Lsb)?.encrypted_lsb(z)
    }

    pub fn sbd(&self, z: &Ciphertext) -> Result<EncryptedBits, ProtocolError> {
        self.open(ProtocolTag::Sbd)?.sbd(z)
    }

    pub fn smin(
        &self,
        u: &EncryptedBits,
        payload_u: &Ciphertext,
        v: &EncryptedBits,
        payload_v: &Ciphertext,
    ) -> Result<(EncryptedBits, Ciphertext), ProtocolError> {
        self.open(ProtocolTag::Smin)?
            .smin(u, payload_u, v, payload_v)
    }

    pub fn smin_n(
        &self,
        entries: Vec<(EncryptedBits, Ciphertext)>,
    ) -> Result<(EncryptedBits, Ciphertext), ProtocolError> {
        self.open(ProtocolTag::SminN)?.smin_n(entries)
    }
}

/// One open P1 session plus the key, config, and randomness protocols need.
pub struct P1Session {
    session: Session,
    pk: Arc<PublicKey>,
    config: ProtocolConfig,
    rng: ChaCha20Rng,
    stats: Arc<Stats>,
    sm_calls: u64,
}

impl P1Session {
    pub fn id(&self) -> u64 {
        self.session.id()
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.pk
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    /// SM invocations made through this session so far.
    pub fn sm_calls(&self) -> u64 {
        self.sm_calls
    }

    pub fn close(self) -> Result<(), ProtocolError> {
        Ok(self.session.close()?)
    }

    /// Sends one request and returns the reply payload, which must have `expect` entries.
    /// An empty reply is P2's abort signal.
    pub fn request(
        &mut self,
        tag: ProtocolTag,
        values: Vec<BigUint>,
        expect: usize,
    ) -> Result<Vec<BigUint>, ProtocolError> {
        self.session.send_tagged(tag, values)?;
        let reply = self.session.recv_message()?;
        if reply.tag != tag {
            let err = RuntimeError::Aborted(format!("expected a {tag} reply, got {}", reply.tag));
            return Err(self.session.abort(err).into());
        }
        if reply.payload.is_empty() {
            let err = RuntimeError::Aborted(format!("peer aborted the {tag} step"));
            return Err(self.session.abort(err).into());
        }
        if reply.payload.len() != expect {
            let err = RuntimeError::Aborted(format!(
                "{tag} reply has {} entries, expected {expect}",
                reply.payload.len()
            ));
            return Err(self.session.abort(err).into());
        }
        Ok(reply.payload)
    }

    /// Like [`request`](Self::request), validating every reply entry as a ciphertext.
    pub fn request_ciphertexts(
        &mut self,
        tag: ProtocolTag,
        values: Vec<BigUint>,
        expect: usize,
    ) -> Result<Vec<Ciphertext>, ProtocolError> {
        let reply = self.request(tag, values, expect)?;
        let mut out = Vec::with_capacity(reply.len());
        for v in reply {
            match self.pk.validate(v) {
                Ok(c) => out.push(c),
                Err(e) => {
                    let err = RuntimeError::Aborted(format!("malformed {tag} reply: {e}"));
                    return Err(self.session.abort(err).into());
                }
            }
        }
        Ok(out)
    }

    fn encrypt(&mut self, m: &BigUint) -> Ciphertext {
        self.pk
            .encrypt(m, &mut self.rng)
            .expect("blinding values are reduced mod N")
    }
}
