//! Both parties in one process, connected by the in-process transport.

use std::thread::JoinHandle;

use crate::paillier::{PublicKey, SecretKey};
use crate::protocols::{PartyOne, PartyTwo, ProtocolConfig, ProtocolError};
use crate::runtime::{
    in_process_pair, Endpoint, EndpointOptions, Link, PartyRole, RuntimeError, SharedTranscript,
    Transcript,
};

#[derive(Debug, Clone, Default)]
pub struct LocalOptions {
    /// Seeds P1 and P2 so that runs are reproducible.
    pub seed: Option<u64>,
    pub record_transcripts: bool,
}

pub struct LocalParties {
    pub p1: PartyOne,
    pub p1_transcript: Option<SharedTranscript>,
    pub p2_transcript: Option<SharedTranscript>,
    p2_thread: Option<JoinHandle<Result<(), RuntimeError>>>,
}

impl LocalParties {
    pub fn start(
        sk: &SecretKey,
        config: ProtocolConfig,
        options: LocalOptions,
    ) -> Result<Self, ProtocolError> {
        let (p1_link, p2_link) = in_process_pair();
        Self::start_over(
            sk.public_key().clone(),
            sk,
            config,
            options,
            p1_link,
            p2_link,
        )
    }

    /// Like [`start`](Self::start) but P1 uses `pk`, which may differ from P2's key.
    pub fn start_over(
        pk: PublicKey,
        sk: &SecretKey,
        config: ProtocolConfig,
        options: LocalOptions,
        p1_link: Link,
        p2_link: Link,
    ) -> Result<Self, ProtocolError> {
        let (p1_transcript, p2_transcript) = if options.record_transcripts {
            (Some(Transcript::shared()), Some(Transcript::shared()))
        } else {
            (None, None)
        };
        let p1_endpoint = Endpoint::new(
            p1_link,
            PartyRole::P1,
            EndpointOptions {
                transcript: p1_transcript.clone(),
                first_session_id: options
                    .seed
                    .map(|s| s.rotate_left(32))
                    .unwrap_or_else(rand::random),
            },
        );
        let p2_endpoint = Endpoint::new(
            p2_link,
            PartyRole::P2,
            EndpointOptions {
                transcript: p2_transcript.clone(),
                first_session_id: 0,
            },
        );
        let mut p2 = PartyTwo::new(sk.clone());
        if let Some(t) = &p2_transcript {
            p2 = p2.with_transcript(t.clone());
        }
        if let Some(seed) = options.seed {
            p2 = p2.with_seed(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        }
        let p2_thread = p2.spawn(p2_endpoint);
        let p1 = PartyOne::new(p1_endpoint, pk, config, options.seed)?;
        Ok(LocalParties {
            p1,
            p1_transcript,
            p2_transcript,
            p2_thread: Some(p2_thread),
        })
    }

    /// P2's decrypted values recorded so far, cleared afterwards.
    pub fn take_p2_view(&self) -> Transcript {
        let t = self
            .p2_transcript
            .as_ref()
            .expect("transcripts not recorded");
        let mut guard = t.lock().unwrap();
        std::mem::take(&mut *guard)
    }
}

impl Drop for LocalParties {
    fn drop(&mut self) {
        self.p1.endpoint().shutdown();
        if let Some(h) = self.p2_thread.take() {
            let _ = h.join();
        }
    }
}
