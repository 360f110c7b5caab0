use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;

use super::{EncryptedBits, P1Session, ProtocolError, Stats};
use crate::paillier::Ciphertext;
use crate::runtime::ProtocolTag;

impl P1Session {
    /// `E(z mod 2)` for `z < 2^l`.
    ///
    /// P1 sends `E(z + r)` with `r` uniform in `[0, N/4)`; the headroom rule guarantees
    /// `z + r < N`, so P2's parity of the blinded value differs from `z`'s exactly when
    /// `r` is odd.
    pub fn encrypted_lsb(&mut self, z: &Ciphertext) -> Result<Ciphertext, ProtocolError> {
        let pk = std::sync::Arc::clone(&self.pk);
        let quarter = pk.n() >> 2u32;
        let r = self.rng.gen_biguint_below(&quarter);
        let enc_r = self.encrypt(&r);
        let blinded = pk.add(z, &enc_r);
        let reply = self.request_ciphertexts(ProtocolTag::Lsb, vec![blinded.into_biguint()], 1)?;
        let parity = reply.into_iter().next().expect("one entry");
        let bit = if r.is_even() {
            parity
        } else {
            pk.add(&pk.encode_constant(&BigUint::one()), &pk.negate(&parity))
        };
        Stats::bump(&self.stats.lsb_calls);
        Ok(bit)
    }

    /// Bit decomposition of `z < 2^l` into `l` encrypted bits, least significant first.
    pub fn sbd(&mut self, z: &Ciphertext) -> Result<EncryptedBits, ProtocolError> {
        let len = self.config.bit_budget_l as usize;
        self.sbd_with_len(z, len)
    }

    /// Bit decomposition of `z < 2^len`, for `len <= l`.
    ///
    /// Each round extracts the low bit and replaces `E(z)` with `E((z - bit) / 2)`, computed
    /// as `(E(z) * E(bit)^(N-1))^(2^-1 mod N)`; halving is exact because `z - bit` is even.
    pub fn sbd_with_len(
        &mut self,
        z: &Ciphertext,
        len: usize,
    ) -> Result<EncryptedBits, ProtocolError> {
        if len == 0 || len > self.config.bit_budget_l as usize {
            return Err(ProtocolError::Dimension {
                expected: self.config.bit_budget_l as usize,
                got: len,
            });
        }
        let pk = std::sync::Arc::clone(&self.pk);
        let half = (pk.n() + 1u32) >> 1u32;
        let mut current = z.clone();
        let mut bits = Vec::with_capacity(len);
        for i in 0..len {
            let bit = self.encrypted_lsb(&current)?;
            if i + 1 < len {
                current = pk.scalar_exp(&pk.sub(&current, &bit), &half);
            }
            bits.push(bit);
        }
        let bits = EncryptedBits::new(bits);
        if self.config.verify_decomposition {
            self.verify_recomposition(z, &bits)?;
        }
        Stats::bump(&self.stats.sbd_calls);
        Ok(bits)
    }

    /// Asks P2 whether `rho * (sum 2^i bits[i] - z)` decrypts to zero for a fresh nonzero
    /// `rho`. P2 learns one bit; P1 learns whether the decomposition is consistent.
    pub fn verify_recomposition(
        &mut self,
        z: &Ciphertext,
        bits: &EncryptedBits,
    ) -> Result<(), ProtocolError> {
        let pk = std::sync::Arc::clone(&self.pk);
        let diff = pk.sub(&bits.recompose(&pk), z);
        let rho = pk.random_nonzero(&mut self.rng);
        let masked = pk.rerandomize(&pk.scalar_exp(&diff, &rho), &mut self.rng);
        let reply = self.request(ProtocolTag::Sbd, vec![masked.into_biguint()], 1)?;
        Stats::bump(&self.stats.zero_tests);
        if reply[0].is_one() {
            Ok(())
        } else {
            Err(ProtocolError::VerificationFailed(
                "bit decomposition does not recompose to its input",
            ))
        }
    }
}
