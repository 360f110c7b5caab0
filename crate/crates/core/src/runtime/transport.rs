//! Frame carriers between the two parties: an in-process queue pair and TCP.

use std::io::{BufReader, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::mpsc::{channel, Receiver, Sender};

use super::{wire, RuntimeError};

pub trait FrameWriter: Send {
    fn write_frame(&mut self, frame: &[u8]) -> Result<(), RuntimeError>;
    fn close(&mut self);
}

pub trait FrameReader: Send {
    /// Blocks for the next frame; `Ok(None)` once the peer has closed cleanly.
    fn read_frame(&mut self) -> Result<Option<Vec<u8>>, RuntimeError>;
}

/// One side of a duplex frame link.
pub struct Link {
    pub writer: Box<dyn FrameWriter>,
    pub reader: Box<dyn FrameReader>,
}

struct QueueWriter(Option<Sender<Vec<u8>>>);
struct QueueReader(Receiver<Vec<u8>>);

impl FrameWriter for QueueWriter {
    fn write_frame(&mut self, frame: &[u8]) -> Result<(), RuntimeError> {
        match &self.0 {
            Some(tx) => tx
                .send(frame.to_vec())
                .map_err(|_| RuntimeError::TransportDisconnected),
            None => Err(RuntimeError::TransportDisconnected),
        }
    }

    fn close(&mut self) {
        self.0 = None;
    }
}

impl FrameReader for QueueReader {
    fn read_frame(&mut self) -> Result<Option<Vec<u8>>, RuntimeError> {
        Ok(self.0.recv().ok())
    }
}

/// A connected pair of in-process links.
pub fn in_process_pair() -> (Link, Link) {
    let (a_tx, a_rx) = channel();
    let (b_tx, b_rx) = channel();
    (
        Link {
            writer: Box::new(QueueWriter(Some(a_tx))),
            reader: Box::new(QueueReader(b_rx)),
        },
        Link {
            writer: Box::new(QueueWriter(Some(b_tx))),
            reader: Box::new(QueueReader(a_rx)),
        },
    )
}

struct TcpWriter(TcpStream);
struct TcpReader(BufReader<TcpStream>);

impl FrameWriter for TcpWriter {
    fn write_frame(&mut self, frame: &[u8]) -> Result<(), RuntimeError> {
        self.0
            .write_all(frame)
            .and_then(|_| self.0.flush())
            .map_err(|_| RuntimeError::TransportDisconnected)
    }

    fn close(&mut self) {
        let _ = self.0.shutdown(Shutdown::Both);
    }
}

impl FrameReader for TcpReader {
    fn read_frame(&mut self) -> Result<Option<Vec<u8>>, RuntimeError> {
        match wire::read_frame(&mut self.0) {
            Ok(frame) => Ok(frame),
            Err(e) => match e.kind() {
                std::io::ErrorKind::InvalidData => Err(RuntimeError::FrameCorrupt(
                    e.into_inner()
                        .and_then(|inner| inner.downcast::<wire::DecodeError>().ok())
                        .map(|d| *d)
                        .unwrap_or(wire::DecodeError::Truncated),
                )),
                std::io::ErrorKind::UnexpectedEof => {
                    Err(RuntimeError::FrameCorrupt(wire::DecodeError::Truncated))
                }
                _ => Err(RuntimeError::TransportDisconnected),
            },
        }
    }
}

/// Wraps a connected TCP stream.
pub fn tcp_link(stream: TcpStream) -> std::io::Result<Link> {
    stream.set_nodelay(true)?;
    let read_half = stream.try_clone()?;
    Ok(Link {
        writer: Box::new(TcpWriter(stream)),
        reader: Box::new(TcpReader(BufReader::new(read_half))),
    })
}
