use super::{P1Session, ProtocolError, SmUnblinding, Stats};
use crate::paillier::Ciphertext;
use crate::runtime::ProtocolTag;

impl P1Session {
    /// Secure multiplication: returns `E(a * b mod N)`.
    ///
    /// P1 blinds both factors additively with fresh uniform `r_a, r_b`; P2 decrypts the
    /// blinded factors, multiplies them and re-encrypts. P1 then strips the cross terms:
    /// `(a + r_a)(b + r_b) - a r_b - b r_a - r_a r_b = a b`.
    pub fn sm(&mut self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, ProtocolError> {
        let pk = std::sync::Arc::clone(&self.pk);
        let n = pk.n();
        let r_a = pk.random_plaintext(&mut self.rng);
        let r_b = pk.random_plaintext(&mut self.rng);
        let enc_ra = self.encrypt(&r_a);
        let enc_rb = self.encrypt(&r_b);
        let a_blind = pk.add(a, &enc_ra);
        let b_blind = pk.add(b, &enc_rb);

        let reply = self.request_ciphertexts(
            ProtocolTag::Sm,
            vec![a_blind.into_biguint(), b_blind.into_biguint()],
            1,
        )?;
        let h = &reply[0];

        let cross = (&r_a * &r_b) % n;
        let minus_cross = pk.encode_constant(&((n - cross) % n));
        let s = match self.config.sm_unblinding {
            SmUnblinding::Corrected => {
                let a_term = pk.scalar_exp(a, &(n - &r_b));
                let b_term = pk.scalar_exp(b, &(n - &r_a));
                pk.add(&pk.add(h, &a_term), &pk.add(&b_term, &minus_cross))
            }
            SmUnblinding::LiteralTranscription => {
                let s = pk.add(h, a);
                let s = pk.add(&s, &pk.scalar_exp(b, &(n - &r_b)));
                pk.add(&s, &minus_cross)
            }
        };
        self.sm_calls += 1;
        Stats::bump(&self.stats.sm_calls);
        Ok(s)
    }
}
