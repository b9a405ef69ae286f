use std::io::{BufWriter, Write};
use std::net::TcpStream;
use std::thread;
use std::time::Duration;

use log::debug;

use super::wire::{read_frame, write_block_frame, write_frame, WireError, WireMessage, DEFAULT_MAX_PAYLOAD};
use super::StagingError;
use crate::data::Snapshot;

#[derive(Clone, Debug)]
pub struct ProducerConfig {
    pub endpoint_address: String,
    pub producer_id: u32,
    pub connect_attempts: u32,
    pub connect_backoff: Duration,
    /// How long `send_step` waits for the endpoint's acknowledgment.
    pub step_timeout: Duration,
}

impl ProducerConfig {
    pub fn new(endpoint_address: impl Into<String>, producer_id: u32) -> Self {
        Self {
            endpoint_address: endpoint_address.into(),
            producer_id,
            connect_attempts: 50,
            connect_backoff: Duration::from_millis(100),
            step_timeout: Duration::from_secs(60),
        }
    }
}

/// A producer's handshaken connection to the endpoint.
pub struct ProducerConnection {
    stream: TcpStream,
    producer_id: u32,
    bytes_sent: u64,
    steps_sent: u64,
}

impl std::fmt::Debug for ProducerConnection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProducerConnection")
            .field("producer_id", &self.producer_id)
            .field("bytes_sent", &self.bytes_sent)
            .finish()
    }
}

/// Connects (retrying with fixed backoff) and performs the Hello handshake.
pub fn connect(cfg: &ProducerConfig) -> Result<ProducerConnection, StagingError> {
    let mut last_err = None;
    let attempts = cfg.connect_attempts.max(1);
    for attempt in 0..attempts {
        match TcpStream::connect(&cfg.endpoint_address) {
            Ok(stream) => return handshake(stream, cfg),
            Err(e) => {
                debug!(
                    "producer {}: connect attempt {} to {} failed: {e}",
                    cfg.producer_id,
                    attempt + 1,
                    cfg.endpoint_address
                );
                last_err = Some(e);
                if attempt + 1 < attempts {
                    thread::sleep(cfg.connect_backoff);
                }
            }
        }
    }
    Err(StagingError::Unreachable {
        address: cfg.endpoint_address.clone(),
        attempts,
        source: last_err.expect("at least one attempt"),
    })
}

fn handshake(mut stream: TcpStream, cfg: &ProducerConfig) -> Result<ProducerConnection, StagingError> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(cfg.step_timeout))?;
    let sent = write_frame(&mut stream, &WireMessage::hello(cfg.producer_id))?;
    stream.flush()?;
    match read_frame(&mut stream, DEFAULT_MAX_PAYLOAD).map_err(|e| timeout_or(e, cfg.producer_id))? {
        (WireMessage::HelloAck { accepted: true }, _) => {}
        (WireMessage::HelloAck { accepted: false }, _) => {
            return Err(StagingError::Rejected {
                producer_id: cfg.producer_id,
            })
        }
        (other, _) => {
            return Err(StagingError::Protocol {
                producer_id: Some(cfg.producer_id),
                reason: format!("expected HelloAck, got {:?}", other.tag()),
            })
        }
    }
    Ok(ProducerConnection {
        stream,
        producer_id: cfg.producer_id,
        bytes_sent: sent,
        steps_sent: 0,
    })
}

fn timeout_or(e: WireError, producer_id: u32) -> StagingError {
    match e {
        WireError::Io(ref io)
            if matches!(io.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) =>
        {
            StagingError::AckTimeout { producer_id }
        }
        other => StagingError::Wire {
            producer_id: Some(producer_id),
            source: other,
        },
    }
}

impl ProducerConnection {
    pub fn producer_id(&self) -> u32 {
        self.producer_id
    }

    /// Total bytes written to the endpoint, handshake included.
    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn steps_sent(&self) -> u64 {
        self.steps_sent
    }

    /// Streams one snapshot and blocks until the endpoint acknowledges it.
    ///
    /// Returns the acknowledged step, which always equals `s.step`.
    pub fn send_step(&mut self, s: &Snapshot) -> Result<u64, StagingError> {
        let pid = self.producer_id;
        let header = WireMessage::StepHeader {
            step: s.step,
            time: s.time,
            block_count: s.blocks.len() as u32,
        };
        let mut w = BufWriter::with_capacity(1 << 16, &self.stream);
        let mut sent = write_frame(&mut w, &header)
            .and_then(|n| w.flush().map(|_| n))
            .map_err(|e| StagingError::ConnectionLost {
                producer_id: pid,
                after_header: false,
                source: e,
            })?;
        for b in &s.blocks {
            sent += write_block_frame(&mut w, b).map_err(|e| StagingError::ConnectionLost {
                producer_id: pid,
                after_header: true,
                source: e,
            })?;
        }
        w.flush().map_err(|e| StagingError::ConnectionLost {
            producer_id: pid,
            after_header: true,
            source: e,
        })?;
        drop(w);
        self.bytes_sent += sent;

        match read_frame(&mut self.stream, DEFAULT_MAX_PAYLOAD).map_err(|e| timeout_or(e, pid))? {
            (WireMessage::StepAck { step }, _) if step == s.step => {
                self.steps_sent += 1;
                Ok(step)
            }
            (WireMessage::StepAck { step }, _) => Err(StagingError::Protocol {
                producer_id: Some(pid),
                reason: format!("ack for step {step}, expected {}", s.step),
            }),
            (WireMessage::Bye, _) => Err(StagingError::Aborted { producer_id: pid }),
            (other, _) => Err(StagingError::Protocol {
                producer_id: Some(pid),
                reason: format!("expected StepAck, got {:?}", other.tag()),
            }),
        }
    }

    /// Sends Bye and closes the connection.
    pub fn close(mut self) -> Result<u64, StagingError> {
        self.bytes_sent += write_frame(&mut self.stream, &WireMessage::Bye)?;
        self.stream.flush()?;
        let _ = self.stream.shutdown(std::net::Shutdown::Write);
        Ok(self.bytes_sent)
    }
}
