//! Length-prefixed message framing.
//!
//! A frame is a 2-byte big-endian topic length, the UTF-8 topic, a 4-byte
//! big-endian payload length and a JSON object payload that carries the
//! sequence number in its `"seq"` field.

use std::io::{self, Read, Write};

use serde_json::{Map, Value};
use thiserror::Error;

use crate::io::bus::{Message, Topic};

/// Largest accepted payload, bytes.
pub const MAX_PAYLOAD: usize = 16 << 20;

#[derive(Debug, Error)]
pub enum WireError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("topic is not UTF-8")]
    TopicEncoding,
    #[error("{0}")]
    Topic(String),
    #[error("payload of {0} bytes exceeds the frame limit")]
    TooLarge(usize),
    #[error("payload is not a JSON object with an integer seq: {0}")]
    Payload(String),
}

/// Writes one raw frame.
pub fn write_frame<W: Write>(out: &mut W, topic: &str, payload: &[u8]) -> Result<(), WireError> {
    let tlen = u16::try_from(topic.len()).map_err(|_| WireError::Topic("topic too long".into()))?;
    if payload.len() > MAX_PAYLOAD {
        return Err(WireError::TooLarge(payload.len()));
    }
    out.write_all(&tlen.to_be_bytes())?;
    out.write_all(topic.as_bytes())?;
    out.write_all(&(payload.len() as u32).to_be_bytes())?;
    out.write_all(payload)?;
    Ok(())
}

/// Reads one raw frame; `None` on a clean end of stream before a frame.
pub fn read_frame<R: Read>(input: &mut R) -> Result<Option<(String, Vec<u8>)>, WireError> {
    let mut tlen = [0u8; 2];
    match input.read_exact(&mut tlen) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let mut topic = vec![0u8; u16::from_be_bytes(tlen) as usize];
    input.read_exact(&mut topic)?;
    let topic = String::from_utf8(topic).map_err(|_| WireError::TopicEncoding)?;
    let mut plen = [0u8; 4];
    input.read_exact(&mut plen)?;
    let plen = u32::from_be_bytes(plen) as usize;
    if plen > MAX_PAYLOAD {
        return Err(WireError::TooLarge(plen));
    }
    let mut payload = vec![0u8; plen];
    input.read_exact(&mut payload)?;
    Ok(Some((topic, payload)))
}

/// Frame bytes of `m`.
pub fn encode(m: &Message) -> Vec<u8> {
    let mut obj = match &m.payload {
        Value::Object(o) => o.clone(),
        other => {
            let mut o = Map::new();
            o.insert("value".into(), other.clone());
            o
        }
    };
    obj.insert("seq".into(), Value::from(m.seq));
    let payload = serde_json::to_vec(&Value::Object(obj)).expect("JSON values serialize");
    let mut out = Vec::with_capacity(payload.len() + 16);
    write_frame(&mut out, m.topic.as_str(), &payload).expect("writes to a Vec succeed");
    out
}

pub fn write_message<W: Write>(out: &mut W, m: &Message) -> Result<(), WireError> {
    out.write_all(&encode(m))?;
    Ok(())
}

/// Reads one message; `None` on a clean end of stream.
pub fn read_message<R: Read>(input: &mut R) -> Result<Option<Message>, WireError> {
    let Some((topic, payload)) = read_frame(input)? else {
        return Ok(None);
    };
    let topic: Topic = topic.parse().map_err(WireError::Topic)?;
    let value: Value = serde_json::from_slice(&payload).map_err(|e| WireError::Payload(e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(WireError::Payload("not an object".into()));
    };
    let seq = obj
        .remove("seq")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| WireError::Payload("missing seq".into()))?;
    Ok(Some(Message {
        topic,
        seq,
        payload: Value::Object(obj),
    }))
}
