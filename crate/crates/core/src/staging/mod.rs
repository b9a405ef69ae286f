//! In-transit staging: producers stream snapshots over TCP to an endpoint
//! that assembles them and drives a bridge.

use std::io;

use thiserror::Error;

use crate::bridge::BridgeError;

mod endpoint;
mod producer;
pub mod wire;

pub use endpoint::{endpoint_serve, Endpoint, EndpointConfig, EndpointStep, ServeSummary};
pub use producer::{connect, ProducerConfig, ProducerConnection};
pub use wire::{WireError, WireMessage};

/// Environment variable naming the endpoint address for producers.
pub const ENDPOINT_ENV: &str = "NEKMINI_ENDPOINT";

#[derive(Debug, Error)]
pub enum StagingError {
    #[error("endpoint {address} unreachable after {attempts} attempts: {source}")]
    Unreachable {
        address: String,
        attempts: u32,
        #[source]
        source: io::Error,
    },
    #[error("cannot bind {address}: {source}")]
    Bind {
        address: String,
        #[source]
        source: io::Error,
    },
    #[error("endpoint rejected producer {producer_id}")]
    Rejected { producer_id: u32 },
    #[error("protocol error (producer {producer_id:?}): {reason}")]
    Protocol { producer_id: Option<u32>, reason: String },
    #[error("producer {producer_id}: timed out waiting for acknowledgment")]
    AckTimeout { producer_id: u32 },
    #[error("wire error (producer {producer_id:?}): {source}")]
    Wire {
        producer_id: Option<u32>,
        #[source]
        source: WireError,
    },
    #[error("producer {producer_id}: connection lost{}: {source}", if *after_header { " mid-step" } else { "" })]
    ConnectionLost {
        producer_id: u32,
        after_header: bool,
        #[source]
        source: io::Error,
    },
    #[error("producer {producer_id}: endpoint aborted the run")]
    Aborted { producer_id: u32 },
    #[error("producer {producer_id} sent step {step} but producer {other_producer} sent step {other_step}")]
    StepMismatch {
        producer_id: u32,
        step: u64,
        other_producer: u32,
        other_step: u64,
    },
    #[error("timed out waiting for producers {waiting:?}")]
    StepTimeout { waiting: Vec<u32> },
    #[error("only {connected} of {expected} producers connected")]
    AcceptTimeout { connected: usize, expected: usize },
    #[error("invalid staging configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}
