//! Framed binary messages between producers and the staging endpoint.
//!
//! Every frame is
//!
//! ```text
//! "NKSS" | version u8 (0x01) | tag u8 | payload length u64 | payload
//! ```
//!
//! with all integers and floats little-endian. Payloads by tag:
//!
//! | tag  | message      | payload                                            |
//! |------|--------------|----------------------------------------------------|
//! | 0x01 | Hello        | producer_id u32, flags u32 (zero)                  |
//! | 0x02 | HelloAck     | accepted u8 (0 or 1)                               |
//! | 0x03 | StepHeader   | step u64, time f64, block_count u32                |
//! | 0x04 | BlockPayload | marshaled block (below)                            |
//! | 0x05 | StepAck      | step u64                                           |
//! | 0x06 | Bye          | empty                                              |
//!
//! A block is marshaled as origin 3×f64, spacing 3×f64, extents 6×i64,
//! field count u32, then per field: name length u16, UTF-8 name,
//! association u8 (0 point, 1 cell), components u32, value count u64,
//! values f64[].

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::data::{Association, Block, Extents, FieldArray};

pub const MAGIC: [u8; 4] = *b"NKSS";
pub const PROTOCOL_VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 14;
/// Default cap on a frame's declared payload length (1 GiB).
pub const DEFAULT_MAX_PAYLOAD: u64 = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Tag {
    Hello = 0x01,
    HelloAck = 0x02,
    StepHeader = 0x03,
    BlockPayload = 0x04,
    StepAck = 0x05,
    Bye = 0x06,
}

impl Tag {
    fn from_byte(b: u8) -> Option<Tag> {
        Some(match b {
            0x01 => Tag::Hello,
            0x02 => Tag::HelloAck,
            0x03 => Tag::StepHeader,
            0x04 => Tag::BlockPayload,
            0x05 => Tag::StepAck,
            0x06 => Tag::Bye,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum WireMessage {
    Hello { producer_id: u32, protocol_version: u8 },
    HelloAck { accepted: bool },
    StepHeader { step: u64, time: f64, block_count: u32 },
    BlockPayload { block: Block },
    StepAck { step: u64 },
    Bye,
}

impl WireMessage {
    pub fn tag(&self) -> Tag {
        match self {
            WireMessage::Hello { .. } => Tag::Hello,
            WireMessage::HelloAck { .. } => Tag::HelloAck,
            WireMessage::StepHeader { .. } => Tag::StepHeader,
            WireMessage::BlockPayload { .. } => Tag::BlockPayload,
            WireMessage::StepAck { .. } => Tag::StepAck,
            WireMessage::Bye => Tag::Bye,
        }
    }

    pub fn hello(producer_id: u32) -> Self {
        WireMessage::Hello {
            producer_id,
            protocol_version: PROTOCOL_VERSION,
        }
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unknown protocol version {0}")]
    UnknownVersion(u8),
    #[error("unknown message tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("declared payload length {len} exceeds cap {cap}")]
    PayloadTooLarge { len: u64, cap: u64 },
    #[error("malformed {tag:?} payload: {reason}")]
    Malformed { tag: Tag, reason: String },
    #[error("connection closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Result of an incremental decode attempt.
#[derive(Debug, PartialEq)]
pub enum Decoded {
    /// A complete frame; `consumed` bytes belong to it.
    Message { message: WireMessage, consumed: usize },
    /// The input holds a valid frame prefix; nothing was consumed.
    NeedMore,
}

fn frame_header(version: u8, tag: Tag, len: u64) -> [u8; HEADER_LEN] {
    let mut h = [0; HEADER_LEN];
    h[..4].copy_from_slice(&MAGIC);
    h[4] = version;
    h[5] = tag as u8;
    h[6..].copy_from_slice(&len.to_le_bytes());
    h
}

/// Appends the marshaled form of `b` to `out`.
pub fn marshal_block(b: &Block, out: &mut Vec<u8>) {
    for v in b.origin.iter().chain(&b.spacing) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for e in &b.extents.0 {
        out.extend_from_slice(&e.to_le_bytes());
    }
    out.extend_from_slice(&(b.fields.len() as u32).to_le_bytes());
    for f in &b.fields {
        out.extend_from_slice(&(f.name.len() as u16).to_le_bytes());
        out.extend_from_slice(f.name.as_bytes());
        out.push(f.association.tag());
        out.extend_from_slice(&f.components.to_le_bytes());
        out.extend_from_slice(&(f.values.len() as u64).to_le_bytes());
        for v in &f.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Marshaled size of `b` in bytes.
pub fn block_wire_len(b: &Block) -> usize {
    6 * 8 + 6 * 8 + 4 + b.fields.iter().map(|f| 2 + f.name.len() + 1 + 4 + 8 + 8 * f.values.len()).sum::<usize>()
}

/// Encodes one frame.
pub fn encode_message(m: &WireMessage) -> Vec<u8> {
    let mut payload = Vec::new();
    let mut version = PROTOCOL_VERSION;
    match m {
        WireMessage::Hello {
            producer_id,
            protocol_version,
        } => {
            version = *protocol_version;
            payload.extend_from_slice(&producer_id.to_le_bytes());
            payload.extend_from_slice(&0u32.to_le_bytes());
        }
        WireMessage::HelloAck { accepted } => payload.push(u8::from(*accepted)),
        WireMessage::StepHeader {
            step,
            time,
            block_count,
        } => {
            payload.extend_from_slice(&step.to_le_bytes());
            payload.extend_from_slice(&time.to_le_bytes());
            payload.extend_from_slice(&block_count.to_le_bytes());
        }
        WireMessage::BlockPayload { block } => {
            payload.reserve(block_wire_len(block));
            marshal_block(block, &mut payload);
        }
        WireMessage::StepAck { step } => payload.extend_from_slice(&step.to_le_bytes()),
        WireMessage::Bye => {}
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&frame_header(version, m.tag(), payload.len() as u64));
    out.extend_from_slice(&payload);
    out
}

/// Writes a `BlockPayload` frame for `b` without building the message value.
pub fn write_block_frame<W: Write>(w: &mut W, b: &Block) -> io::Result<u64> {
    let len = block_wire_len(b);
    let mut buf = Vec::with_capacity(HEADER_LEN + len);
    buf.extend_from_slice(&frame_header(PROTOCOL_VERSION, Tag::BlockPayload, len as u64));
    marshal_block(b, &mut buf);
    w.write_all(&buf)?;
    Ok(buf.len() as u64)
}

/// Validates a 14-byte (or shorter) header prefix. Returns the tag and payload
/// length once all 14 bytes are present.
fn check_header(bytes: &[u8], cap: u64) -> Result<Option<(Tag, u64)>, WireError> {
    let n = bytes.len().min(4);
    if bytes[..n] != MAGIC[..n] {
        let mut m = [0; 4];
        m[..n].copy_from_slice(&bytes[..n]);
        return Err(WireError::BadMagic(m));
    }
    if bytes.len() > 4 && bytes[4] != PROTOCOL_VERSION {
        return Err(WireError::UnknownVersion(bytes[4]));
    }
    if bytes.len() > 5 && Tag::from_byte(bytes[5]).is_none() {
        return Err(WireError::UnknownTag(bytes[5]));
    }
    if bytes.len() < HEADER_LEN {
        return Ok(None);
    }
    let tag = Tag::from_byte(bytes[5]).expect("checked above");
    let len = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes"));
    if len > cap {
        return Err(WireError::PayloadTooLarge { len, cap });
    }
    Ok(Some((tag, len)))
}

/// Decodes one frame from the front of `bytes`.
pub fn decode_message(bytes: &[u8], max_payload: u64) -> Result<Decoded, WireError> {
    let Some((tag, len)) = check_header(bytes, max_payload)? else {
        return Ok(Decoded::NeedMore);
    };
    let total = HEADER_LEN as u64 + len;
    if (bytes.len() as u64) < total {
        return Ok(Decoded::NeedMore);
    }
    let payload = &bytes[HEADER_LEN..total as usize];
    let message = decode_payload(tag, bytes[4], payload)?;
    Ok(Decoded::Message {
        message,
        consumed: total as usize,
    })
}

/// Reads exactly one frame from a stream. A clean end of stream before the
/// first header byte is reported as [`WireError::Closed`].
pub fn read_frame<R: Read>(r: &mut R, max_payload: u64) -> Result<(WireMessage, u64), WireError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Err(WireError::Closed),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let (tag, len) = check_header(&header, max_payload)?.expect("full header");
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    let message = decode_payload(tag, header[4], &payload)?;
    Ok((message, HEADER_LEN as u64 + len))
}

pub fn write_frame<W: Write>(w: &mut W, m: &WireMessage) -> io::Result<u64> {
    let bytes = encode_message(m);
    w.write_all(&bytes)?;
    Ok(bytes.len() as u64)
}

struct Reader<'a> {
    tag: Tag,
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn malformed(&self, reason: impl Into<String>) -> WireError {
        WireError::Malformed {
            tag: self.tag,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(self.malformed(format!("need {n} more bytes, {} left", self.buf.len())));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, WireError> {
        self.array().map(u16::from_le_bytes)
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        self.array().map(u32::from_le_bytes)
    }
    fn u64(&mut self) -> Result<u64, WireError> {
        self.array().map(u64::from_le_bytes)
    }
    fn i64(&mut self) -> Result<i64, WireError> {
        self.array().map(i64::from_le_bytes)
    }
    fn f64(&mut self) -> Result<f64, WireError> {
        self.array().map(f64::from_le_bytes)
    }

    fn finish(self) -> Result<(), WireError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(self.malformed(format!("{} trailing bytes", self.buf.len())))
        }
    }
}

fn decode_payload(tag: Tag, version: u8, payload: &[u8]) -> Result<WireMessage, WireError> {
    let mut r = Reader { tag, buf: payload };
    let m = match tag {
        Tag::Hello => {
            let producer_id = r.u32()?;
            let flags = r.u32()?;
            if flags != 0 {
                return Err(r.malformed(format!("reserved flags {flags:#x}")));
            }
            WireMessage::Hello {
                producer_id,
                protocol_version: version,
            }
        }
        Tag::HelloAck => match r.u8()? {
            0 => WireMessage::HelloAck { accepted: false },
            1 => WireMessage::HelloAck { accepted: true },
            b => return Err(r.malformed(format!("accepted byte {b}"))),
        },
        Tag::StepHeader => WireMessage::StepHeader {
            step: r.u64()?,
            time: r.f64()?,
            block_count: r.u32()?,
        },
        Tag::BlockPayload => WireMessage::BlockPayload {
            block: unmarshal_block(&mut r)?,
        },
        Tag::StepAck => WireMessage::StepAck { step: r.u64()? },
        Tag::Bye => WireMessage::Bye,
    };
    r.finish()?;
    Ok(m)
}

fn unmarshal_block(r: &mut Reader<'_>) -> Result<Block, WireError> {
    let mut geo = [0.0; 6];
    for g in &mut geo {
        *g = r.f64()?;
    }
    let mut extents = [0i64; 6];
    for e in &mut extents {
        *e = r.i64()?;
    }
    let field_count = r.u32()?;
    let mut fields = Vec::with_capacity(field_count.min(1024) as usize);
    for _ in 0..field_count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| r.malformed("field name is not UTF-8"))?
            .to_string();
        let association = Association::from_tag(r.u8()?).ok_or_else(|| r.malformed("bad association"))?;
        let components = r.u32()?;
        let count = r.u64()?;
        let nbytes = count
            .checked_mul(8)
            .filter(|&n| n <= r.buf.len() as u64)
            .ok_or_else(|| r.malformed(format!("field '{name}' declares {count} values")))?;
        let raw = r.take(nbytes as usize)?;
        let values = raw
            .chunks_exact(8)
            .map(|w| f64::from_le_bytes(w.try_into().expect("8-byte chunk")))
            .collect();
        fields.push(FieldArray::new(name, association, components, values));
    }
    Ok(Block {
        origin: [geo[0], geo[1], geo[2]],
        spacing: [geo[3], geo[4], geo[5]],
        extents: Extents(extents),
        fields,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_frame_is_22_bytes() {
        let bytes = encode_message(&WireMessage::hello(0));
        assert_eq!(bytes.len(), 22);
        assert_eq!(&bytes[..4], b"NKSS");
        assert_eq!(bytes[4], 0x01);
        assert_eq!(bytes[5], 0x01);
        assert_eq!(&bytes[6..14], &8u64.to_le_bytes());
        assert_eq!(&bytes[14..], &[0u8; 8]);
    }

    #[test]
    fn bye_has_empty_payload() {
        let bytes = encode_message(&WireMessage::Bye);
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(bytes[5], 0x06);
        assert_eq!(&bytes[6..], &0u64.to_le_bytes());
    }

    #[test]
    fn tags_match_table() {
        let cases = [
            (WireMessage::HelloAck { accepted: true }, 0x02, 1),
            (
                WireMessage::StepHeader {
                    step: 1,
                    time: 0.5,
                    block_count: 4,
                },
                0x03,
                20,
            ),
            (WireMessage::StepAck { step: 9 }, 0x05, 8),
        ];
        for (m, tag, len) in cases {
            let b = encode_message(&m);
            assert_eq!(b[5], tag);
            assert_eq!(b.len(), HEADER_LEN + len);
        }
    }

    #[test]
    fn bad_magic_version_tag() {
        let mut b = encode_message(&WireMessage::Bye);
        b[0] = b'X';
        assert!(matches!(decode_message(&b, DEFAULT_MAX_PAYLOAD), Err(WireError::BadMagic(_))));
        assert!(decode_message(b"XK", DEFAULT_MAX_PAYLOAD)
            .unwrap_err()
            .to_string()
            .contains("bad magic"));
        let mut b = encode_message(&WireMessage::Bye);
        b[4] = 2;
        assert!(matches!(decode_message(&b, DEFAULT_MAX_PAYLOAD), Err(WireError::UnknownVersion(2))));
        let mut b = encode_message(&WireMessage::Bye);
        b[5] = 0x7f;
        assert!(matches!(decode_message(&b, DEFAULT_MAX_PAYLOAD), Err(WireError::UnknownTag(0x7f))));
    }

    #[test]
    fn partial_input_needs_more() {
        let b = encode_message(&WireMessage::StepAck { step: 3 });
        for cut in [0, 3, 10, 14, b.len() - 1] {
            assert_eq!(decode_message(&b[..cut], DEFAULT_MAX_PAYLOAD).unwrap(), Decoded::NeedMore);
        }
        let mut two = b.clone();
        two.extend_from_slice(&encode_message(&WireMessage::Bye));
        match decode_message(&two, DEFAULT_MAX_PAYLOAD).unwrap() {
            Decoded::Message { message, consumed } => {
                assert_eq!(message, WireMessage::StepAck { step: 3 });
                assert_eq!(consumed, b.len());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn oversize_declared_length() {
        let mut b = encode_message(&WireMessage::Bye);
        b[6..14].copy_from_slice(&(2u64 << 30).to_le_bytes());
        assert!(matches!(
            decode_message(&b, DEFAULT_MAX_PAYLOAD),
            Err(WireError::PayloadTooLarge { .. })
        ));
        let small = encode_message(&WireMessage::StepAck { step: 1 });
        assert!(matches!(decode_message(&small, 4), Err(WireError::PayloadTooLarge { .. })));
    }

    #[test]
    fn length_must_match_body() {
        let mut b = encode_message(&WireMessage::StepAck { step: 1 });
        b.push(0);
        b[6..14].copy_from_slice(&9u64.to_le_bytes());
        assert!(matches!(
            decode_message(&b, DEFAULT_MAX_PAYLOAD),
            Err(WireError::Malformed { .. })
        ));
    }

    #[test]
    fn read_frame_reports_clean_close() {
        let mut empty: &[u8] = &[];
        assert!(matches!(read_frame(&mut empty, DEFAULT_MAX_PAYLOAD), Err(WireError::Closed)));
        let b = encode_message(&WireMessage::StepAck { step: 5 });
        let mut cut: &[u8] = &b[..9];
        assert!(matches!(read_frame(&mut cut, DEFAULT_MAX_PAYLOAD), Err(WireError::Io(_))));
    }
}
