use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, warn};

use super::wire::{read_frame, write_frame, WireError, WireMessage, DEFAULT_MAX_PAYLOAD, PROTOCOL_VERSION};
use super::StagingError;
use crate::bridge::{BridgeHandle, StepReport};
use crate::data::{assemble_global, Block, Layout, Snapshot};

#[derive(Clone, Debug)]
pub struct EndpointConfig {
    pub listen_address: String,
    pub expected_producers: u32,
    /// Longest wait for the next message of an in-progress step.
    pub step_timeout: Duration,
    /// Longest wait for all producers to connect.
    pub accept_timeout: Duration,
    /// Extra delay before acknowledging each step (test and benchmark hook).
    pub ack_delay: Duration,
    pub max_payload: u64,
}

impl EndpointConfig {
    pub fn new(listen_address: impl Into<String>, expected_producers: u32) -> Self {
        Self {
            listen_address: listen_address.into(),
            expected_producers,
            step_timeout: Duration::from_secs(120),
            accept_timeout: Duration::from_secs(60),
            ack_delay: Duration::ZERO,
            max_payload: DEFAULT_MAX_PAYLOAD,
        }
    }
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self::new("127.0.0.1:7766", 4)
    }
}

/// Per global step as seen by the endpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct EndpointStep {
    pub step: u64,
    /// Seconds from the first producer's header to the last block.
    pub gather_seconds: f64,
    pub assemble_seconds: f64,
    pub bridge_seconds: f64,
    pub report: StepReport,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ServeSummary {
    pub steps: Vec<EndpointStep>,
    pub incomplete_steps: u64,
    pub rejected_connections: u64,
    /// Bytes received per producer id, handshake and Bye included.
    pub bytes_received: BTreeMap<u32, u64>,
    /// Why the run ended early, if it did.
    pub aborted: Option<String>,
}

impl ServeSummary {
    pub fn steps_completed(&self) -> usize {
        self.steps.len()
    }
}

enum Event {
    Step {
        producer: u32,
        step: u64,
        time: f64,
        blocks: Vec<Block>,
        first_byte: Instant,
    },
    Bye {
        producer: u32,
    },
    Lost {
        producer: u32,
        mid_step: bool,
        reason: String,
    },
}

/// A bound endpoint, not yet serving.
pub struct Endpoint {
    listener: TcpListener,
    cfg: EndpointConfig,
}

impl Endpoint {
    pub fn bind(cfg: EndpointConfig) -> Result<Self, StagingError> {
        if cfg.expected_producers == 0 {
            return Err(StagingError::Config("expected_producers must be at least 1".into()));
        }
        let listener = TcpListener::bind(&cfg.listen_address).map_err(|source| StagingError::Bind {
            address: cfg.listen_address.clone(),
            source,
        })?;
        Ok(Self { listener, cfg })
    }

    pub fn local_addr(&self) -> std::io::Result<std::net::SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts the configured producers and serves until every one says Bye.
    pub fn serve(self, bridge: &mut BridgeHandle) -> Result<ServeSummary, StagingError> {
        let cfg = self.cfg;
        let k = cfg.expected_producers as usize;
        let listener = self.listener;
        listener.set_nonblocking(true)?;

        let rejected = Arc::new(AtomicU64::new(0));
        let mut peers: BTreeMap<u32, TcpStream> = BTreeMap::new();
        let deadline = Instant::now() + cfg.accept_timeout;
        while peers.len() < k {
            match listener.accept() {
                Ok((stream, addr)) => {
                    debug!("endpoint: connection from {addr}");
                    match handshake(stream, &peers, cfg.step_timeout) {
                        Ok(Some((id, stream))) => {
                            peers.insert(id, stream);
                        }
                        Ok(None) => {
                            rejected.fetch_add(1, Ordering::Relaxed);
                        }
                        Err(e) => warn!("endpoint: handshake failed: {e}"),
                    }
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if Instant::now() > deadline {
                        return Err(StagingError::AcceptTimeout {
                            connected: peers.len(),
                            expected: k,
                        });
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(e.into()),
            }
        }

        let stop = Arc::new(AtomicBool::new(false));
        let acceptor = spawn_rejector(listener, Arc::clone(&stop), Arc::clone(&rejected));

        let (tx, rx) = mpsc::channel();
        let byte_counters: BTreeMap<u32, Arc<AtomicU64>> =
            peers.keys().map(|&id| (id, Arc::new(AtomicU64::new(22)))).collect();
        let mut readers = Vec::with_capacity(k);
        let mut writers: BTreeMap<u32, TcpStream> = BTreeMap::new();
        for (&id, stream) in &peers {
            let reader = stream.try_clone()?;
            reader.set_read_timeout(None)?;
            writers.insert(id, stream.try_clone()?);
            readers.push(spawn_reader(
                id,
                reader,
                tx.clone(),
                Arc::clone(&byte_counters[&id]),
                cfg.max_payload,
            ));
        }
        drop(tx);

        let result = run_steps(&cfg, bridge, &rx, &mut writers);

        stop.store(true, Ordering::Relaxed);
        for s in peers.values() {
            let _ = s.shutdown(Shutdown::Both);
        }
        let _ = acceptor.join();
        for r in readers {
            let _ = r.join();
        }

        let mut summary = result?;
        summary.rejected_connections = rejected.load(Ordering::Relaxed);
        summary.bytes_received = byte_counters
            .iter()
            .map(|(&id, c)| (id, c.load(Ordering::Relaxed)))
            .collect();
        Ok(summary)
    }
}

/// Binds `cfg.listen_address` and serves one run.
pub fn endpoint_serve(cfg: EndpointConfig, bridge: &mut BridgeHandle) -> Result<ServeSummary, StagingError> {
    Endpoint::bind(cfg)?.serve(bridge)
}

/// Reads Hello and answers. Returns the accepted id and stream, or `None` for
/// a rejected duplicate.
fn handshake(
    mut stream: TcpStream,
    peers: &BTreeMap<u32, TcpStream>,
    timeout: Duration,
) -> Result<Option<(u32, TcpStream)>, StagingError> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(timeout))?;
    let (msg, _) = read_frame(&mut stream, 64).map_err(|source| StagingError::Wire {
        producer_id: None,
        source,
    })?;
    let WireMessage::Hello {
        producer_id,
        protocol_version,
    } = msg
    else {
        return Err(StagingError::Protocol {
            producer_id: None,
            reason: format!("expected Hello, got {:?}", msg.tag()),
        });
    };
    let accept = protocol_version == PROTOCOL_VERSION && !peers.contains_key(&producer_id);
    write_frame(&mut stream, &WireMessage::HelloAck { accepted: accept })?;
    stream.flush()?;
    if accept {
        Ok(Some((producer_id, stream)))
    } else {
        warn!("endpoint: rejected producer {producer_id}");
        Ok(None)
    }
}

/// Answers every connection after the expected set with HelloAck{false}.
fn spawn_rejector(listener: TcpListener, stop: Arc<AtomicBool>, rejected: Arc<AtomicU64>) -> JoinHandle<()> {
    thread::spawn(move || {
        while !stop.load(Ordering::Relaxed) {
            match listener.accept() {
                Ok((mut stream, _)) => {
                    let _ = stream.set_nonblocking(false);
                    let _ = stream.set_read_timeout(Some(Duration::from_secs(5)));
                    if read_frame(&mut stream, 64).is_ok() {
                        let _ = write_frame(&mut stream, &WireMessage::HelloAck { accepted: false });
                    }
                    rejected.fetch_add(1, Ordering::Relaxed);
                }
                Err(_) => thread::sleep(Duration::from_millis(10)),
            }
        }
    })
}

fn spawn_reader(
    producer: u32,
    mut stream: TcpStream,
    tx: Sender<Event>,
    bytes: Arc<AtomicU64>,
    max_payload: u64,
) -> JoinHandle<()> {
    thread::spawn(move || {
        let lost = |mid_step: bool, reason: String| Event::Lost {
            producer,
            mid_step,
            reason,
        };
        loop {
            let (header, n) = match read_frame(&mut stream, max_payload) {
                Ok(x) => x,
                Err(WireError::Closed) => {
                    let _ = tx.send(lost(false, "connection closed before Bye".into()));
                    return;
                }
                Err(e) => {
                    let _ = tx.send(lost(false, e.to_string()));
                    return;
                }
            };
            let first_byte = Instant::now();
            bytes.fetch_add(n, Ordering::Relaxed);
            match header {
                WireMessage::StepHeader {
                    step,
                    time,
                    block_count,
                } => {
                    let mut blocks = Vec::with_capacity(block_count as usize);
                    for _ in 0..block_count {
                        match read_frame(&mut stream, max_payload) {
                            Ok((WireMessage::BlockPayload { block }, n)) => {
                                bytes.fetch_add(n, Ordering::Relaxed);
                                blocks.push(block);
                            }
                            Ok((other, _)) => {
                                let _ = tx.send(lost(true, format!("expected BlockPayload, got {:?}", other.tag())));
                                return;
                            }
                            Err(e) => {
                                let _ = tx.send(lost(true, format!("lost mid-step {step}: {e}")));
                                return;
                            }
                        }
                    }
                    if tx
                        .send(Event::Step {
                            producer,
                            step,
                            time,
                            blocks,
                            first_byte,
                        })
                        .is_err()
                    {
                        return;
                    }
                }
                WireMessage::Bye => {
                    let _ = tx.send(Event::Bye { producer });
                    return;
                }
                other => {
                    let _ = tx.send(lost(false, format!("unexpected {:?} from producer", other.tag())));
                    return;
                }
            }
        }
    })
}

struct Pending {
    step: u64,
    time: f64,
    blocks: Vec<Block>,
    first_byte: Instant,
}

fn abort_all(writers: &mut BTreeMap<u32, TcpStream>) {
    for w in writers.values_mut() {
        let _ = write_frame(w, &WireMessage::Bye);
        let _ = w.flush();
    }
}

fn run_steps(
    cfg: &EndpointConfig,
    bridge: &mut BridgeHandle,
    rx: &Receiver<Event>,
    writers: &mut BTreeMap<u32, TcpStream>,
) -> Result<ServeSummary, StagingError> {
    let k = cfg.expected_producers as usize;
    let mut summary = ServeSummary::default();
    let mut pending: BTreeMap<u32, Pending> = BTreeMap::new();
    let mut done: BTreeSet<u32> = BTreeSet::new();
    let mut last_step: Option<u64> = None;

    while done.len() < k {
        let event = match rx.recv_timeout(cfg.step_timeout) {
            Ok(e) => e,
            Err(RecvTimeoutError::Timeout) => {
                let waiting: Vec<u32> = writers
                    .keys()
                    .filter(|id| !pending.contains_key(id) && !done.contains(id))
                    .copied()
                    .collect();
                abort_all(writers);
                return Err(StagingError::StepTimeout { waiting });
            }
            Err(RecvTimeoutError::Disconnected) => break,
        };
        match event {
            Event::Step {
                producer,
                step,
                time,
                blocks,
                first_byte,
            } => {
                if let Some(prev) = last_step.filter(|&p| step <= p) {
                    abort_all(writers);
                    return Err(StagingError::Protocol {
                        producer_id: Some(producer),
                        reason: format!("step {step} does not follow completed step {prev}"),
                    });
                }
                if let Some((&other, p)) = pending.iter().find(|(_, p)| p.step != step) {
                    abort_all(writers);
                    return Err(StagingError::StepMismatch {
                        producer_id: producer,
                        step,
                        other_producer: other,
                        other_step: p.step,
                    });
                }
                pending.insert(
                    producer,
                    Pending {
                        step,
                        time,
                        blocks,
                        first_byte,
                    },
                );
                if pending.len() == k {
                    let gathered = std::mem::take(&mut pending);
                    let record = complete_step(gathered, bridge)?;
                    if !cfg.ack_delay.is_zero() {
                        thread::sleep(cfg.ack_delay);
                    }
                    for w in writers.values_mut() {
                        write_frame(w, &WireMessage::StepAck { step: record.step })?;
                        w.flush()?;
                    }
                    last_step = Some(record.step);
                    summary.steps.push(record);
                }
            }
            Event::Bye { producer } => {
                done.insert(producer);
                if !pending.is_empty() {
                    summary.incomplete_steps += 1;
                    summary.aborted = Some(format!("producer {producer} said Bye while a step was in progress"));
                    abort_all(writers);
                    return Ok(summary);
                }
            }
            Event::Lost {
                producer,
                mid_step,
                reason,
            } => {
                warn!("endpoint: producer {producer} lost: {reason}");
                if mid_step || !pending.is_empty() {
                    summary.incomplete_steps += 1;
                }
                summary.aborted = Some(format!("producer {producer}: {reason}"));
                writers.remove(&producer);
                abort_all(writers);
                return Ok(summary);
            }
        }
    }
    Ok(summary)
}

fn complete_step(gathered: BTreeMap<u32, Pending>, bridge: &mut BridgeHandle) -> Result<EndpointStep, StagingError> {
    let first_byte = gathered.values().map(|p| p.first_byte).min().expect("k >= 1");
    let gather_seconds = first_byte.elapsed().as_secs_f64();
    let (&producer_id, first) = gathered.iter().next().expect("k >= 1");
    let (step, time) = (first.step, first.time);

    let t0 = Instant::now();
    let blocks: Vec<Block> = gathered.into_values().flat_map(|p| p.blocks).collect();
    let global = assemble_global(&blocks, Layout::TileX).map_err(|e| StagingError::Protocol {
        producer_id: None,
        reason: format!("step {step}: {e}"),
    })?;
    let snapshot = Snapshot {
        time,
        step,
        producer_id,
        blocks: vec![global],
    };
    let assemble_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let report = bridge.update(&snapshot)?;
    Ok(EndpointStep {
        step,
        gather_seconds,
        assemble_seconds,
        bridge_seconds: t1.elapsed().as_secs_f64(),
        report,
    })
}
