//! Paillier cryptosystem with generator `g = N + 1`.
//!
//! Plaintexts live in `[0, N)`, ciphertexts are residues modulo `N^2`. Multiplying
//! ciphertexts adds plaintexts; raising a ciphertext to `k` multiplies its plaintext by `k`.

mod keyfile;
pub mod prime;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;
use thiserror::Error;

pub use keyfile::KeyFileError;

/// Smallest modulus size `keygen` accepts.
pub const MIN_KEY_BITS: u64 = 256;
/// Default modulus size for operator-facing use.
pub const DEFAULT_KEY_BITS: u64 = 2048;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PaillierError {
    #[error("insecure parameters: {0}")]
    InsecureParameters(String),
    #[error("plaintext out of range [0, N)")]
    PlaintextOutOfRange,
    #[error("malformed ciphertext: {0}")]
    MalformedCiphertext(&'static str),
    #[error(transparent)]
    KeyFile(#[from] KeyFileError),
}

/// A Paillier ciphertext: a unit modulo `N^2`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext(BigUint);

impl Ciphertext {
    /// Wraps a value without checking it; [`PublicKey::validate`] does the check.
    pub fn from_biguint(value: BigUint) -> Self {
        Ciphertext(value)
    }

    pub fn as_biguint(&self) -> &BigUint {
        &self.0
    }

    pub fn into_biguint(self) -> BigUint {
        self.0
    }
}

impl std::fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let hex = self.0.to_str_radix(16);
        if hex.len() > 16 {
            write!(f, "Ciphertext({}..)", &hex[..16])
        } else {
            write!(f, "Ciphertext({hex})")
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PublicKey {
    modulus_n: BigUint,
    modulus_n_squared: BigUint,
    generator_g: BigUint,
    bit_length: u64,
}

impl PublicKey {
    pub fn from_modulus(n: BigUint) -> Result<Self, PaillierError> {
        if n.is_even() || n.bits() < 16 {
            return Err(PaillierError::InsecureParameters(
                "modulus must be an odd composite of reasonable size".into(),
            ));
        }
        let bit_length = n.bits();
        Ok(PublicKey {
            modulus_n_squared: &n * &n,
            generator_g: &n + 1u32,
            modulus_n: n,
            bit_length,
        })
    }

    pub fn n(&self) -> &BigUint {
        &self.modulus_n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.modulus_n_squared
    }

    pub fn generator(&self) -> &BigUint {
        &self.generator_g
    }

    pub fn bit_length(&self) -> u64 {
        self.bit_length
    }

    /// Uniform nonce in `[1, N)` coprime to `N`.
    pub fn random_nonce<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        loop {
            let r = rng.gen_biguint_range(&BigUint::one(), &self.modulus_n);
            if r.gcd(&self.modulus_n).is_one() {
                return r;
            }
        }
    }

    /// Uniform element of `Z_N`.
    pub fn random_plaintext<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        rng.gen_biguint_below(&self.modulus_n)
    }

    /// Uniform nonzero element of `Z_N`.
    pub fn random_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        rng.gen_biguint_range(&BigUint::one(), &self.modulus_n)
    }

    /// `g^m = 1 + mN mod N^2` for `g = N + 1`.
    fn g_pow(&self, m: &BigUint) -> BigUint {
        (BigUint::one() + m * &self.modulus_n) % &self.modulus_n_squared
    }

    pub fn encrypt<R: Rng + ?Sized>(
        &self,
        m: &BigUint,
        rng: &mut R,
    ) -> Result<Ciphertext, PaillierError> {
        if m >= &self.modulus_n {
            return Err(PaillierError::PlaintextOutOfRange);
        }
        let r = self.random_nonce(rng);
        Ok(self.encrypt_with_nonce(m, &r))
    }

    pub fn encrypt_u64<R: Rng + ?Sized>(&self, m: u64, rng: &mut R) -> Ciphertext {
        self.encrypt(&BigUint::from(m), rng)
            .expect("u64 plaintext below a >=256-bit modulus")
    }

    /// `g^m * r^N mod N^2`. The caller supplies the nonce.
    pub fn encrypt_with_nonce(&self, m: &BigUint, r: &BigUint) -> Ciphertext {
        let rn = r.modpow(&self.modulus_n, &self.modulus_n_squared);
        Ciphertext((self.g_pow(m) * rn) % &self.modulus_n_squared)
    }

    /// Encryption of a public constant with nonce 1. Only for values that are combined
    /// with freshly randomized ciphertexts before anyone else sees them.
    pub fn encode_constant(&self, m: &BigUint) -> Ciphertext {
        Ciphertext(self.g_pow(&(m % &self.modulus_n)))
    }

    pub fn add(&self, c1: &Ciphertext, c2: &Ciphertext) -> Ciphertext {
        Ciphertext((&c1.0 * &c2.0) % &self.modulus_n_squared)
    }

    /// Decrypts to `k * m mod N`.
    pub fn scalar_exp(&self, c: &Ciphertext, k: &BigUint) -> Ciphertext {
        Ciphertext(c.0.modpow(k, &self.modulus_n_squared))
    }

    /// Homomorphic negation, `c^(N-1)`.
    pub fn negate(&self, c: &Ciphertext) -> Ciphertext {
        self.scalar_exp(c, &(&self.modulus_n - 1u32))
    }

    /// Decrypts to `(m1 - m2) mod N`.
    pub fn sub(&self, c1: &Ciphertext, c2: &Ciphertext) -> Ciphertext {
        self.add(c1, &self.negate(c2))
    }

    pub fn rerandomize<R: Rng + ?Sized>(&self, c: &Ciphertext, rng: &mut R) -> Ciphertext {
        let r = self.random_nonce(rng);
        let rn = r.modpow(&self.modulus_n, &self.modulus_n_squared);
        Ciphertext((&c.0 * rn) % &self.modulus_n_squared)
    }

    /// Accepts a residue as a ciphertext under this key: in `[0, N^2)` and coprime to `N`.
    pub fn validate(&self, value: BigUint) -> Result<Ciphertext, PaillierError> {
        if value >= self.modulus_n_squared {
            return Err(PaillierError::MalformedCiphertext("not below N^2"));
        }
        if value.is_zero() || !value.gcd(&self.modulus_n).is_one() {
            return Err(PaillierError::MalformedCiphertext("not coprime to N^2"));
        }
        Ok(Ciphertext(value))
    }

    /// Text form: `n=<hex>` and `bits=<hex>` lines.
    pub fn to_key_file(&self) -> String {
        keyfile::write_public(self)
    }

    pub fn from_key_file(text: &str) -> Result<Self, PaillierError> {
        keyfile::read_public(text)
    }
}

#[derive(Clone)]
pub struct SecretKey {
    public: PublicKey,
    prime_p: BigUint,
    prime_q: BigUint,
    lambda: BigUint,
    mu: BigUint,
    // CRT material
    p_squared: BigUint,
    q_squared: BigUint,
    p_minus_one: BigUint,
    q_minus_one: BigUint,
    hp: BigUint,
    hq: BigUint,
    q_inv_p: BigUint,
    n_mod_phi_p_squared: BigUint,
    n_mod_phi_q_squared: BigUint,
    q_squared_inv_p_squared: BigUint,
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecretKey")
            .field("bit_length", &self.public.bit_length)
            .finish_non_exhaustive()
    }
}

impl SecretKey {
    /// Builds the key pair from two distinct primes. Primality is the caller's promise;
    /// the key-file reader checks it.
    pub fn from_primes(p: BigUint, q: BigUint) -> Result<Self, PaillierError> {
        if p == q {
            return Err(PaillierError::InsecureParameters("p equals q".into()));
        }
        if p < BigUint::from(3u32) || q < BigUint::from(3u32) {
            return Err(PaillierError::InsecureParameters("primes too small".into()));
        }
        let n = &p * &q;
        let p_minus_one = &p - 1u32;
        let q_minus_one = &q - 1u32;
        let phi = &p_minus_one * &q_minus_one;
        if !n.gcd(&phi).is_one() {
            return Err(PaillierError::InsecureParameters(
                "gcd(N, phi(N)) != 1".into(),
            ));
        }
        let public = PublicKey::from_modulus(n)?;
        let lambda = p_minus_one.lcm(&q_minus_one);

        let l_of = |u: &BigUint, d: &BigUint| (u - 1u32) / d;
        let g_lambda = public
            .generator_g
            .modpow(&lambda, &public.modulus_n_squared);
        let mu = l_of(&g_lambda, &public.modulus_n)
            .modinv(&public.modulus_n)
            .ok_or_else(|| PaillierError::InsecureParameters("mu not invertible".into()))?;

        let p_squared = &p * &p;
        let q_squared = &q * &q;
        let hp = l_of(&public.generator_g.modpow(&p_minus_one, &p_squared), &p)
            .modinv(&p)
            .ok_or_else(|| PaillierError::InsecureParameters("hp not invertible".into()))?;
        let hq = l_of(&public.generator_g.modpow(&q_minus_one, &q_squared), &q)
            .modinv(&q)
            .ok_or_else(|| PaillierError::InsecureParameters("hq not invertible".into()))?;
        let q_inv_p = (&q % &p)
            .modinv(&p)
            .ok_or_else(|| PaillierError::InsecureParameters("q not invertible mod p".into()))?;
        let n_mod_phi_p_squared = &public.modulus_n % (&p_squared - &p);
        let n_mod_phi_q_squared = &public.modulus_n % (&q_squared - &q);
        let q_squared_inv_p_squared = (&q_squared % &p_squared)
            .modinv(&p_squared)
            .ok_or_else(|| PaillierError::InsecureParameters("q^2 not invertible".into()))?;

        Ok(SecretKey {
            public,
            prime_p: p,
            prime_q: q,
            lambda,
            mu,
            p_squared,
            q_squared,
            p_minus_one,
            q_minus_one,
            hp,
            hq,
            q_inv_p,
            n_mod_phi_p_squared,
            n_mod_phi_q_squared,
            q_squared_inv_p_squared,
        })
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn p(&self) -> &BigUint {
        &self.prime_p
    }

    pub fn q(&self) -> &BigUint {
        &self.prime_q
    }

    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }

    /// CRT decryption. Rejects residues that are not units modulo `N^2`.
    pub fn decrypt(&self, c: &Ciphertext) -> Result<BigUint, PaillierError> {
        let value = &c.0;
        if value >= &self.public.modulus_n_squared {
            return Err(PaillierError::MalformedCiphertext("not below N^2"));
        }
        if value.is_zero() || !value.gcd(&self.public.modulus_n).is_one() {
            return Err(PaillierError::MalformedCiphertext("not coprime to N^2"));
        }
        let mp = {
            let u = (value % &self.p_squared).modpow(&self.p_minus_one, &self.p_squared);
            (((u - 1u32) / &self.prime_p) * &self.hp) % &self.prime_p
        };
        let mq = {
            let u = (value % &self.q_squared).modpow(&self.q_minus_one, &self.q_squared);
            (((u - 1u32) / &self.prime_q) * &self.hq) % &self.prime_q
        };
        // m = mq + q * ((mp - mq) * q^-1 mod p)
        let diff = (&mp + &self.prime_p - (&mq % &self.prime_p)) % &self.prime_p;
        let h = (diff * &self.q_inv_p) % &self.prime_p;
        Ok(mq + h * &self.prime_q)
    }

    /// Textbook `L(c^lambda mod N^2) * mu mod N`, without CRT.
    pub fn decrypt_textbook(&self, c: &Ciphertext) -> Result<BigUint, PaillierError> {
        let pk = &self.public;
        if c.0 >= pk.modulus_n_squared || !c.0.gcd(&pk.modulus_n).is_one() {
            return Err(PaillierError::MalformedCiphertext("not a unit mod N^2"));
        }
        let u = c.0.modpow(&self.lambda, &pk.modulus_n_squared);
        Ok((((u - 1u32) / &pk.modulus_n) * &self.mu) % &pk.modulus_n)
    }

    /// Encryption using the factorization: `r^N mod N^2` is computed modulo `p^2` and `q^2`.
    pub fn encrypt<R: Rng + ?Sized>(
        &self,
        m: &BigUint,
        rng: &mut R,
    ) -> Result<Ciphertext, PaillierError> {
        let pk = &self.public;
        if m >= &pk.modulus_n {
            return Err(PaillierError::PlaintextOutOfRange);
        }
        let r = pk.random_nonce(rng);
        let xp = (&r % &self.p_squared).modpow(&self.n_mod_phi_p_squared, &self.p_squared);
        let xq = (&r % &self.q_squared).modpow(&self.n_mod_phi_q_squared, &self.q_squared);
        let diff = (&xp + &self.p_squared - (&xq % &self.p_squared)) % &self.p_squared;
        let rn = xq + ((diff * &self.q_squared_inv_p_squared) % &self.p_squared) * &self.q_squared;
        Ok(Ciphertext((pk.g_pow(m) * rn) % &pk.modulus_n_squared))
    }

    /// Text form: `p=<hex>` and `q=<hex>` lines.
    pub fn to_key_file(&self) -> String {
        keyfile::write_secret(self)
    }

    pub fn from_key_file(text: &str) -> Result<Self, PaillierError> {
        keyfile::read_secret(text)
    }
}

/// Generates a key pair with an exactly `bit_length`-bit modulus.
pub fn keygen<R: Rng + ?Sized>(
    bit_length: u64,
    rng: &mut R,
) -> Result<(PublicKey, SecretKey), PaillierError> {
    if bit_length < MIN_KEY_BITS {
        return Err(PaillierError::InsecureParameters(format!(
            "{bit_length}-bit modulus is below the {MIN_KEY_BITS}-bit minimum"
        )));
    }
    if !bit_length.is_multiple_of(2) {
        return Err(PaillierError::InsecureParameters(
            "modulus size must be even".into(),
        ));
    }
    loop {
        let p = prime::random_prime(bit_length / 2, rng);
        let q = prime::random_prime(bit_length / 2, rng);
        if p == q {
            continue;
        }
        match SecretKey::from_primes(p, q) {
            Ok(sk) => {
                debug_assert_eq!(sk.public.bit_length, bit_length);
                return Ok((sk.public.clone(), sk));
            }
            Err(PaillierError::InsecureParameters(_)) => continue,
            Err(e) => return Err(e),
        }
    }
}
