//! Encodes each message type, prints the frame bytes, and decodes a block
//! frame fed in small pieces the way a socket might deliver it.
//!
//! cargo run --example wire_codec

use nekmini::solver::{init_state, snapshot_of, SolverParams};
use nekmini::staging::wire::{decode_message, encode_message, Decoded, DEFAULT_MAX_PAYLOAD};
use nekmini::staging::WireMessage;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(" ")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for m in [
        WireMessage::hello(7),
        WireMessage::HelloAck { accepted: true },
        WireMessage::StepHeader {
            step: 100,
            time: 0.25,
            block_count: 1,
        },
        WireMessage::StepAck { step: 100 },
        WireMessage::Bye,
    ] {
        let frame = encode_message(&m);
        println!("{:<10} {:>3} bytes  {}", format!("{:?}", m.tag()), frame.len(), hex(&frame));
    }

    let p = SolverParams::new(16, 16, 1e4, 0.7);
    let snap = snapshot_of(&init_state(&p)?, 0, 0);
    let frame = encode_message(&WireMessage::BlockPayload {
        block: snap.blocks[0].clone(),
    });
    println!("BlockPayload for a 16x16 block: {} bytes", frame.len());

    let mut buf = Vec::new();
    let mut chunks = 0;
    for chunk in frame.chunks(1000) {
        buf.extend_from_slice(chunk);
        chunks += 1;
        match decode_message(&buf, DEFAULT_MAX_PAYLOAD)? {
            Decoded::NeedMore => continue,
            Decoded::Message { message, consumed } => {
                let WireMessage::BlockPayload { block } = message else {
                    unreachable!()
                };
                assert_eq!(consumed, frame.len());
                assert_eq!(block, snap.blocks[0]);
                println!("decoded after {chunks} chunks, identical to the original block");
            }
        }
    }

    let mut bad = encode_message(&WireMessage::Bye);
    bad[0] = b'X';
    println!("corrupted frame: {}", decode_message(&bad, DEFAULT_MAX_PAYLOAD).unwrap_err());
    Ok(())
}
