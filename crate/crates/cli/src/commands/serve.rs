use std::fs::OpenOptions;
use std::io::Write;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::thread;
use std::time::{Duration, Instant};

use ppknn_core::ppknn::{ClassifyOptions, EncryptedDatabase};
use ppknn_core::protocols::{PartyOne, PartyTwo, ProtocolConfig, ProtocolError};
use ppknn_core::runtime::{
    tcp_link, Endpoint, EndpointOptions, PartyRole, ProtocolTag, RuntimeError, SharedTranscript,
    Transcript,
};

use super::{load_public_key, load_secret_key, read_text};
use crate::error::{failure, usage, CliResult, Context};
use crate::user::{serve_user, ExchangeError};
use crate::{Role, ServeArgs};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(15);

pub fn run(args: &ServeArgs) -> CliResult<()> {
    if args.concurrency == 0 {
        return Err(usage("--concurrency must be at least 1"));
    }
    match args.role {
        Role::P2 => serve_p2(args),
        Role::P1 => serve_p1(args),
    }
}

fn announce(listener: &TcpListener) -> CliResult<()> {
    let addr = listener.local_addr().context("no local address")?;
    println!("listening {addr}");
    std::io::stdout().flush().context("stdout")?;
    Ok(())
}

fn serve_p2(args: &ServeArgs) -> CliResult<()> {
    let secret = args
        .secret
        .as_ref()
        .ok_or_else(|| usage("--role p2 needs --secret"))?;
    let mut p2 = PartyTwo::new(load_secret_key(secret)?);
    if let Some(seed) = args.seed {
        p2 = p2.with_seed(seed);
    }
    let listener =
        TcpListener::bind(args.listen).context(format_args!("cannot bind {}", args.listen))?;
    announce(&listener)?;
    for stream in listener.incoming() {
        let stream = stream.context("accept failed")?;
        let peer = stream.peer_addr().ok();
        let transcript = args.transcript.as_ref().map(|_| Transcript::shared());
        let link = tcp_link(stream).context("cannot set up the P1 link")?;
        let endpoint = Endpoint::new(
            link,
            PartyRole::P2,
            EndpointOptions {
                transcript: transcript.clone(),
                ..Default::default()
            },
        );
        let flusher = spawn_flusher(transcript, args.transcript.clone());
        let outcome = if args.concurrency > 1 {
            p2.serve(&endpoint)
        } else {
            p2.serve_sequential(&endpoint)
        };
        endpoint.shutdown();
        if let Some(f) = flusher {
            f.stop();
        }
        match outcome {
            Ok(()) => eprintln!("P1 {} disconnected", fmt_peer(peer)),
            Err(e) => return Err(failure(format!("P1 link failed mid-session: {e}"))),
        }
    }
    Ok(())
}

fn fmt_peer(peer: Option<SocketAddr>) -> String {
    peer.map_or_else(|| "?".into(), |p| p.to_string())
}

fn connect_with_retry(addr: SocketAddr) -> CliResult<TcpStream> {
    let start = Instant::now();
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if start.elapsed() > CONNECT_TIMEOUT => {
                return Err(failure(format!("cannot connect to P2 at {addr}: {e}")))
            }
            Err(_) => thread::sleep(Duration::from_millis(100)),
        }
    }
}

fn serve_p1(args: &ServeArgs) -> CliResult<()> {
    let (Some(connect), Some(pub_path), Some(db_path)) =
        (args.connect, args.public_key.as_ref(), args.db.as_ref())
    else {
        return Err(usage("--role p1 needs --connect, --pub and --db"));
    };
    let pk = load_public_key(pub_path)?;
    let db = EncryptedDatabase::from_text(&read_text(db_path)?)
        .context(format_args!("bad database {}", db_path.display()))?;
    db.check_key(&pk).map_err(|e| {
        failure(format!(
            "database {} does not match the public key (N differs): {e}",
            db_path.display()
        ))
    })?;
    let config = ProtocolConfig::with_bit_budget(db.schema.l);
    config
        .check_headroom(&pk)
        .map_err(|e| failure(e.to_string()))?;

    let transcript = args.transcript.as_ref().map(|_| Transcript::shared());
    let link = tcp_link(connect_with_retry(connect)?).context("cannot set up the P2 link")?;
    let endpoint = Endpoint::new(
        link,
        PartyRole::P1,
        EndpointOptions {
            transcript: transcript.clone(),
            first_session_id: args
                .seed
                .map(|s| s.rotate_left(32))
                .unwrap_or_else(rand::random),
        },
    );
    let p1 = PartyOne::new(endpoint, pk, config, args.seed).map_err(|e| failure(e.to_string()))?;
    match p1.open(ProtocolTag::Ppknn) {
        Ok(s) => s.close().map_err(|e| failure(e.to_string()))?,
        Err(ProtocolError::Runtime(RuntimeError::KeyMismatch)) => {
            return Err(failure(
                "P2 holds a different key (N differs); refusing to start",
            ))
        }
        Err(e) => return Err(failure(format!("P2 handshake failed: {e}"))),
    }
    let _flusher = spawn_flusher(transcript, args.transcript.clone());

    let listener =
        TcpListener::bind(args.listen).context(format_args!("cannot bind {}", args.listen))?;
    announce(&listener)?;
    let options = ClassifyOptions {
        concurrency: args.concurrency,
        ..Default::default()
    };
    let link_failed = |p1: &PartyOne| {
        p1.endpoint()
            .failure()
            .filter(|e| !matches!(e, RuntimeError::Aborted(_)))
    };

    thread::scope(|scope| {
        let p1 = &p1;
        let db = &db;
        let options = &options;
        // Notices P2 going away even while no user is connected.
        scope.spawn(move || loop {
            if let Some(e) = link_failed(p1) {
                eprintln!("error: P2 link failed: {e}");
                std::process::exit(1);
            }
            thread::sleep(Duration::from_millis(100));
        });
        for stream in listener.incoming() {
            let mut stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("accept failed: {e}");
                    continue;
                }
            };
            let mut handle = move || {
                let peer = stream.peer_addr().ok();
                match serve_user(&mut stream, p1, db, options) {
                    Ok(()) => {}
                    Err(ExchangeError::Closed) => {}
                    Err(e) => eprintln!("query from {} failed: {e}", fmt_peer(peer)),
                }
            };
            if args.concurrency > 1 {
                scope.spawn(handle);
            } else {
                handle();
            }
        }
    });
    Ok(())
}

struct Flusher {
    stop: std::sync::mpsc::Sender<()>,
    handle: thread::JoinHandle<()>,
}

impl Flusher {
    fn stop(self) {
        let _ = self.stop.send(());
        let _ = self.handle.join();
    }
}

/// Appends new transcript entries to `path` every 200 ms and once more on stop.
fn spawn_flusher(transcript: Option<SharedTranscript>, path: Option<PathBuf>) -> Option<Flusher> {
    let (transcript, path) = (transcript?, path?);
    let (stop, stopped) = std::sync::mpsc::channel::<()>();
    let handle = thread::spawn(move || loop {
        let done = !matches!(
            stopped.recv_timeout(Duration::from_millis(200)),
            Err(std::sync::mpsc::RecvTimeoutError::Timeout)
        );
        let batch = {
            let mut t = transcript.lock().unwrap();
            Transcript {
                entries: std::mem::take(&mut t.entries),
                p2_decryptions: Vec::new(),
            }
        };
        if !batch.entries.is_empty() {
            let written = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .and_then(|mut f| f.write_all(batch.to_tsv().as_bytes()));
            if let Err(e) = written {
                eprintln!("cannot write transcript {}: {e}", path.display());
            }
        }
        if done {
            return;
        }
    });
    Some(Flusher { stop, handle })
}
