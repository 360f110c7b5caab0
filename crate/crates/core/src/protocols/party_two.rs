use std::sync::Arc;
use std::thread;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::paillier::{Ciphertext, SecretKey};
use crate::runtime::{
    Endpoint, Incoming, ProtocolTag, Rejection, RuntimeError, Session, SharedTranscript, ViewKind,
};

/// The key-holding party. Answers one request per message and keeps no state between them.
///
/// | request tag | payload                  | reply                              |
/// |-------------|--------------------------|------------------------------------|
/// | `SM`        | `E(a + r_a), E(b + r_b)` | `E((a + r_a)(b + r_b) mod N)`      |
/// | `LSB`       | `E(z + r)`               | `E((z + r) mod 2)`                 |
/// | `SBD`       | `E(rho * delta)`         | `1` if it decrypts to zero, else `0` |
/// | `PPKNN`     | `E(rho_i * delta_i)...`  | position of the first zero         |
/// | `RESULT`    | `E(c + r + t)`           | `c + r + t mod N`                  |
///
/// Any malformed request is answered with an empty payload, which aborts the session.
#[derive(Clone)]
pub struct PartyTwo {
    sk: Arc<SecretKey>,
    transcript: Option<SharedTranscript>,
    seed: Option<u64>,
}

impl PartyTwo {
    pub fn new(sk: SecretKey) -> Self {
        PartyTwo {
            sk: Arc::new(sk),
            transcript: None,
            seed: None,
        }
    }

    /// Records every decrypted value in `transcript`.
    pub fn with_transcript(mut self, transcript: SharedTranscript) -> Self {
        self.transcript = Some(transcript);
        self
    }

    /// Derives each session's randomness from `seed` and the session id.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn secret_key(&self) -> &SecretKey {
        &self.sk
    }

    /// Serves sessions until the link closes, each on its own thread.
    ///
    /// Returns the link failure if the link broke while a session was still open; a link
    /// closed between sessions is a clean end.
    pub fn serve(&self, endpoint: &Endpoint) -> Result<(), RuntimeError> {
        self.serve_with(endpoint, true)
    }

    /// Like [`serve`](Self::serve) but answers one session at a time.
    pub fn serve_sequential(&self, endpoint: &Endpoint) -> Result<(), RuntimeError> {
        self.serve_with(endpoint, false)
    }

    fn serve_with(&self, endpoint: &Endpoint, concurrent: bool) -> Result<(), RuntimeError> {
        let mut workers = Vec::new();
        let mut failure = None;
        loop {
            let incoming = match endpoint.accept() {
                Ok(incoming) => incoming,
                Err(RuntimeError::TransportDisconnected) => break,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            };
            let session = match self.admit(incoming) {
                Ok(Some(session)) => session,
                Ok(None) => continue,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            };
            if concurrent {
                let me = self.clone();
                workers.push(thread::spawn(move || me.run_session(session)));
                workers.retain(|w| !w.is_finished());
            } else if let Err(e) = self.run_session(session) {
                failure.get_or_insert(e);
            }
        }
        for w in workers {
            if let Ok(Err(e)) = w.join() {
                failure.get_or_insert(e);
            }
        }
        match failure {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Spawns [`serve`](Self::serve) on a background thread.
    pub fn spawn(self, endpoint: Endpoint) -> thread::JoinHandle<Result<(), RuntimeError>> {
        thread::Builder::new()
            .name("p2-serve".into())
            .spawn(move || self.serve(&endpoint))
            .expect("spawn P2")
    }

    fn admit(&self, incoming: Incoming) -> Result<Option<Session>, RuntimeError> {
        if incoming.hello() != [self.sk.public_key().n().clone()] {
            incoming.reject(Rejection::KeyMismatch)?;
            return Ok(None);
        }
        incoming.accept().map(Some)
    }

    /// Answers requests on one session until P1 closes it. A malformed request aborts
    /// the session and is not an error; a link failure is.
    pub fn run_session(&self, mut session: Session) -> Result<(), RuntimeError> {
        let mut rng = match self.seed {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed ^ session.id().rotate_left(29)),
            None => ChaCha20Rng::from_entropy(),
        };
        loop {
            let msg = match session.recv_message() {
                Ok(msg) => msg,
                Err(RuntimeError::Aborted(_)) | Err(RuntimeError::SequenceGap { .. }) => {
                    return Ok(())
                }
                Err(e) => return Err(e),
            };
            if msg.payload.is_empty() && msg.tag == session.tag() {
                return Ok(());
            }
            let reply = self.respond(session.id(), msg.tag, msg.payload, &mut rng);
            let failed = reply.is_none();
            session.send_tagged(msg.tag, reply.unwrap_or_default())?;
            if failed {
                return Ok(());
            }
        }
    }

    fn decrypt(
        &self,
        session_id: u64,
        tag: ProtocolTag,
        value: BigUint,
        kind: ViewKind,
    ) -> Option<BigUint> {
        let c = self.sk.public_key().validate(value).ok()?;
        let m = self.sk.decrypt(&c).ok()?;
        if let Some(t) = &self.transcript {
            t.lock()
                .unwrap()
                .record_decryption(session_id, tag, &m, kind);
        }
        Some(m)
    }

    fn encrypt(&self, m: &BigUint, rng: &mut ChaCha20Rng) -> Option<Ciphertext> {
        self.sk.encrypt(m, rng).ok()
    }

    /// `None` means the request is malformed.
    fn respond(
        &self,
        session_id: u64,
        tag: ProtocolTag,
        payload: Vec<BigUint>,
        rng: &mut ChaCha20Rng,
    ) -> Option<Vec<BigUint>> {
        let n = self.sk.public_key().n();
        match tag {
            ProtocolTag::Sm => {
                let [a, b]: [BigUint; 2] = payload.try_into().ok()?;
                let ha = self.decrypt(session_id, tag, a, ViewKind::Blinded)?;
                let hb = self.decrypt(session_id, tag, b, ViewKind::Blinded)?;
                let h = (ha * hb) % n;
                Some(vec![self.encrypt(&h, rng)?.into_biguint()])
            }
            ProtocolTag::Lsb => {
                let [y]: [BigUint; 1] = payload.try_into().ok()?;
                let y = self.decrypt(session_id, tag, y, ViewKind::Blinded)?;
                let parity = if y.is_odd() {
                    BigUint::one()
                } else {
                    BigUint::zero()
                };
                Some(vec![self.encrypt(&parity, rng)?.into_biguint()])
            }
            ProtocolTag::Sbd => {
                let [c]: [BigUint; 1] = payload.try_into().ok()?;
                let v = self.decrypt(session_id, tag, c, ViewKind::ZeroTest)?;
                Some(vec![BigUint::from(v.is_zero() as u8)])
            }
            ProtocolTag::Ppknn => {
                if payload.is_empty() {
                    return None;
                }
                let mut first_zero = None;
                for (i, c) in payload.into_iter().enumerate() {
                    let v = self.decrypt(session_id, tag, c, ViewKind::ZeroTest)?;
                    if v.is_zero() && first_zero.is_none() {
                        first_zero = Some(i);
                    }
                }
                Some(vec![BigUint::from(first_zero?)])
            }
            ProtocolTag::Result => {
                let [c]: [BigUint; 1] = payload.try_into().ok()?;
                let v = self.decrypt(session_id, tag, c, ViewKind::Blinded)?;
                Some(vec![v])
            }
            ProtocolTag::Ssed | ProtocolTag::Smin | ProtocolTag::SminN => None,
        }
    }
}
