//! Length-prefixed JSON framing: a 4-byte big-endian body length followed by
//! a UTF-8 JSON object `{"v": 1, "id": <u64>, "type": ..., "payload": {...}}`.

use std::io::{self, Read, Write};

use serde_json::{Map, Value};

use super::Message;

pub const PROTOCOL_VERSION: u64 = 1;
pub const MAX_FRAME_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub id: u64,
    pub message: Message,
}

impl Envelope {
    pub fn new(id: u64, message: Message) -> Self {
        Self { id, message }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("frame of {len} bytes exceeds the {MAX_FRAME_BYTES}-byte limit")]
    FrameTooLarge { len: usize },
    /// `id` is set when the body was readable enough to recover it.
    #[error("malformed frame: {detail}")]
    MalformedFrame { detail: String, id: Option<u64> },
    #[error("unsupported protocol version {found} (expected {PROTOCOL_VERSION})")]
    VersionMismatch { found: String, id: Option<u64> },
    /// The peer closed the stream on a frame boundary.
    #[error("connection closed")]
    Closed,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CodecError {
    fn malformed(detail: impl Into<String>, id: Option<u64>) -> Self {
        CodecError::MalformedFrame {
            detail: detail.into(),
            id,
        }
    }

    /// Whether the stream can still be used after this error.
    pub fn is_recoverable(&self) -> bool {
        matches!(self, CodecError::MalformedFrame { .. } | CodecError::VersionMismatch { .. })
    }

    pub fn correlation_id(&self) -> Option<u64> {
        match self {
            CodecError::MalformedFrame { id, .. } | CodecError::VersionMismatch { id, .. } => *id,
            _ => None,
        }
    }
}

pub fn encode_body(env: &Envelope) -> Result<Vec<u8>, CodecError> {
    let tagged = serde_json::to_value(&env.message).map_err(|e| CodecError::malformed(e.to_string(), Some(env.id)))?;
    let Value::Object(tagged) = tagged else {
        unreachable!("messages serialize as objects")
    };
    let mut body = Map::new();
    body.insert("v".into(), PROTOCOL_VERSION.into());
    body.insert("id".into(), env.id.into());
    for (k, v) in tagged {
        body.insert(k, v);
    }
    let bytes = serde_json::to_vec(&Value::Object(body)).map_err(|e| CodecError::malformed(e.to_string(), Some(env.id)))?;
    if bytes.len() > MAX_FRAME_BYTES {
        return Err(CodecError::FrameTooLarge { len: bytes.len() });
    }
    Ok(bytes)
}

pub fn encode_message(env: &Envelope) -> Result<Vec<u8>, CodecError> {
    let body = encode_body(env)?;
    let mut frame = Vec::with_capacity(body.len() + 4);
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.extend_from_slice(&body);
    Ok(frame)
}

/// Decodes one JSON body. The version is checked before anything else.
pub fn decode_body(body: &[u8]) -> Result<Envelope, CodecError> {
    let value: Value = serde_json::from_slice(body).map_err(|e| CodecError::malformed(format!("invalid JSON: {e}"), None))?;
    let Value::Object(mut obj) = value else {
        return Err(CodecError::malformed("frame body is not a JSON object", None));
    };
    let id = obj.get("id").and_then(Value::as_u64);
    match obj.remove("v") {
        Some(v) if v.as_u64() == Some(PROTOCOL_VERSION) => {}
        Some(v) => {
            return Err(CodecError::VersionMismatch {
                found: v.to_string(),
                id,
            })
        }
        None => return Err(CodecError::malformed("missing protocol version field `v`", id)),
    }
    let Some(id) = id else {
        return Err(CodecError::malformed("missing or non-integer correlation id", None));
    };
    obj.remove("id");
    obj.entry("payload").or_insert_with(|| Value::Object(Map::new()));
    let message: Message = serde_json::from_value(Value::Object(obj)).map_err(|e| CodecError::malformed(e.to_string(), Some(id)))?;
    Ok(Envelope { id, message })
}

/// Decodes exactly one complete frame (prefix included).
pub fn decode_frame(frame: &[u8]) -> Result<Envelope, CodecError> {
    if frame.len() < 4 {
        return Err(CodecError::malformed(format!("frame of {} bytes has no length prefix", frame.len()), None));
    }
    let len = u32::from_be_bytes(frame[..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(CodecError::FrameTooLarge { len });
    }
    let body = &frame[4..];
    if body.len() != len {
        return Err(CodecError::malformed(format!("length prefix says {len} bytes but {} follow", body.len()), None));
    }
    decode_body(body)
}

pub fn read_frame<R: Read + ?Sized>(reader: &mut R) -> Result<Envelope, CodecError> {
    let mut prefix = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match reader.read(&mut prefix[filled..]) {
            Ok(0) if filled == 0 => return Err(CodecError::Closed),
            Ok(0) => return Err(CodecError::Io(io::ErrorKind::UnexpectedEof.into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(CodecError::FrameTooLarge { len });
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body)?;
    decode_body(&body)
}

pub fn write_frame<W: Write + ?Sized>(writer: &mut W, env: &Envelope) -> Result<(), CodecError> {
    let frame = encode_message(env)?;
    writer.write_all(&frame)?;
    writer.flush()?;
    Ok(())
}
