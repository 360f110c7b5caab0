use num_bigint::BigUint;

use super::{EncryptedBits, P1Session, ProtocolError, Stats};
use crate::paillier::Ciphertext;

/// SM invocations made by one pairwise [`P1Session::smin`] over `l`-bit inputs:
/// `l` products `u_i v_i`, `l - 1` prefix-OR steps, `l` products `f_i u_i`, `l` selections,
/// and one payload selection.
pub fn smin_sm_calls(l: usize) -> u64 {
    4 * l as u64
}

/// SM invocations made by [`P1Session::smin_n`] over `n` entries of `l` bits.
pub fn smin_n_sm_calls(n: usize, l: usize) -> u64 {
    n.saturating_sub(1) as u64 * smin_sm_calls(l)
}

impl P1Session {
    /// Secure minimum of two bit-decomposed values, carrying a payload with the winner.
    ///
    /// Works from the most significant bit down: `d_i = u_i XOR v_i`, `e_i` is the OR of
    /// `d_j` for `j >= i`, and `f_i = e_i - e_{i+1}` marks the highest differing bit. Then
    /// `b = sum f_i u_i` is 1 exactly when `u > v`, and each output is `u + b (v - u)`.
    /// Equal inputs give `b = 0`, so ties keep `u` and its payload.
    pub fn smin(
        &mut self,
        u: &EncryptedBits,
        payload_u: &Ciphertext,
        v: &EncryptedBits,
        payload_v: &Ciphertext,
    ) -> Result<(EncryptedBits, Ciphertext), ProtocolError> {
        if u.len() != v.len() {
            return Err(ProtocolError::Dimension {
                expected: u.len(),
                got: v.len(),
            });
        }
        if u.is_empty() {
            return Err(ProtocolError::EmptyInput);
        }
        let pk = std::sync::Arc::clone(&self.pk);
        let n_minus_two = pk.n() - 2u32;
        let l = u.len();
        let (ub, vb) = (u.bits(), v.bits());

        let mut xor = Vec::with_capacity(l);
        for i in 0..l {
            let uv = self.sm(&ub[i], &vb[i])?;
            // u + v - 2uv
            xor.push(pk.add(&pk.add(&ub[i], &vb[i]), &pk.scalar_exp(&uv, &n_minus_two)));
        }

        let mut prefix_or = vec![xor[l - 1].clone(); l];
        for i in (0..l - 1).rev() {
            let both = self.sm(&prefix_or[i + 1], &xor[i])?;
            prefix_or[i] = pk.sub(&pk.add(&prefix_or[i + 1], &xor[i]), &both);
        }

        let mut u_greater = pk.encode_constant(&BigUint::from(0u32));
        for i in 0..l {
            let first_diff = if i == l - 1 {
                prefix_or[i].clone()
            } else {
                pk.sub(&prefix_or[i], &prefix_or[i + 1])
            };
            let term = self.sm(&first_diff, &ub[i])?;
            u_greater = pk.add(&u_greater, &term);
        }

        let mut min_bits = Vec::with_capacity(l);
        for i in 0..l {
            let delta = pk.sub(&vb[i], &ub[i]);
            let shift = self.sm(&u_greater, &delta)?;
            min_bits.push(pk.add(&ub[i], &shift));
        }
        let payload_delta = pk.sub(payload_v, payload_u);
        let payload_shift = self.sm(&u_greater, &payload_delta)?;
        let payload = pk.add(payload_u, &payload_shift);

        Stats::bump(&self.stats.smin_calls);
        Ok((EncryptedBits::new(min_bits), payload))
    }

    /// Minimum over `n` entries by a pairwise tournament in `ceil(log2 n)` rounds.
    ///
    /// Pairs keep their input order and an odd entry advances unchanged, so among equal
    /// minima the earliest entry wins.
    pub fn smin_n(
        &mut self,
        entries: Vec<(EncryptedBits, Ciphertext)>,
    ) -> Result<(EncryptedBits, Ciphertext), ProtocolError> {
        let Some(first) = entries.first() else {
            return Err(ProtocolError::EmptyInput);
        };
        let l = first.0.len();
        if let Some((bits, _)) = entries.iter().find(|(bits, _)| bits.len() != l) {
            return Err(ProtocolError::Dimension {
                expected: l,
                got: bits.len(),
            });
        }
        let mut round = entries;
        while round.len() > 1 {
            let mut next = Vec::with_capacity(round.len().div_ceil(2));
            let mut iter = round.into_iter();
            while let Some((u, pu)) = iter.next() {
                match iter.next() {
                    Some((v, pv)) => next.push(self.smin(&u, &pu, &v, &pv)?),
                    None => next.push((u, pu)),
                }
            }
            round = next;
        }
        Ok(round.pop().expect("nonempty"))
    }
}
