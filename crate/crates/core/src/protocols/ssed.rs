use super::{EncryptedVector, P1Session, ProtocolError, Stats};
use crate::paillier::Ciphertext;

impl P1Session {
    /// Secure squared Euclidean distance, `E(sum_j (x_j - y_j)^2)`, using one SM per
    /// coordinate.
    pub fn ssed(
        &mut self,
        x: &EncryptedVector,
        y: &EncryptedVector,
    ) -> Result<Ciphertext, ProtocolError> {
        if x.len() != y.len() {
            return Err(ProtocolError::Dimension {
                expected: x.len(),
                got: y.len(),
            });
        }
        let pk = std::sync::Arc::clone(&self.pk);
        let n_minus_one = pk.n() - 1u32;
        let mut acc = pk.encode_constant(&0u32.into());
        for (xj, yj) in x.elements().iter().zip(y.elements()) {
            let diff = pk.add(xj, &pk.scalar_exp(yj, &n_minus_one));
            let square = self.sm(&diff, &diff)?;
            acc = pk.add(&acc, &square);
        }
        Stats::bump(&self.stats.ssed_calls);
        Ok(acc)
    }
}
