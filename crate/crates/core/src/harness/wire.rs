//! Frame format: `SMM1`, one type byte, a little-endian u64 payload length,
//! then the payload. Matrices inside payloads use the binary matrix format.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::linalg::{FieldMatrix, MatrixError};

pub const MAGIC: [u8; 4] = *b"SMM1";
pub const HEADER_LEN: usize = 13;
/// Largest payload a reader accepts by default.
pub const DEFAULT_MAX_PAYLOAD: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameType {
    ShareOneSided = 1,
    ShareFully = 2,
    Answer = 3,
    Error = 4,
}

impl FrameType {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(FrameType::ShareOneSided),
            2 => Some(FrameType::ShareFully),
            3 => Some(FrameType::Answer),
            4 => Some(FrameType::Error),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unknown frame type {0}")]
    UnknownType(u8),
    #[error("payload of {len} bytes exceeds limit {max}")]
    TooLarge { len: u64, max: u64 },
    #[error("connection closed mid-frame")]
    Truncated,
    #[error("malformed payload: {0}")]
    Payload(String),
    #[error("unexpected {0:?} frame")]
    Unexpected(FrameType),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for WireError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            WireError::Truncated
        } else {
            WireError::Io(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.to_bytes())?;
        w.flush()
    }

    /// Reads one frame. Returns `Ok(None)` on a clean end of stream before
    /// the first header byte.
    pub fn read_from<R: Read>(r: &mut R, max_payload: u64) -> Result<Option<Self>, WireError> {
        let mut header = [0u8; HEADER_LEN];
        let mut filled = 0;
        while filled < HEADER_LEN {
            match r.read(&mut header[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => return Err(WireError::Truncated),
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let magic: [u8; 4] = header[..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(WireError::BadMagic(magic));
        }
        let kind = FrameType::from_byte(header[4]).ok_or(WireError::UnknownType(header[4]))?;
        let len = u64::from_le_bytes(header[5..].try_into().expect("8 bytes"));
        if len > max_payload {
            return Err(WireError::TooLarge { len, max: max_payload });
        }
        let mut payload = vec![0u8; len as usize];
        r.read_exact(&mut payload)?;
        Ok(Some(Frame { kind, payload }))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut cursor = bytes;
        let frame = Self::read_from(&mut cursor, u64::MAX)?.ok_or(WireError::Truncated)?;
        if !cursor.is_empty() {
            return Err(WireError::Payload(format!("{} bytes after frame", cursor.len())));
        }
        Ok(frame)
    }
}

/// The decoded content of a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    /// `Ã_i` and the public `B`.
    ShareOneSided { a: FieldMatrix, b: FieldMatrix },
    /// `Ã_i` and `B̃_i`.
    ShareFully { a: FieldMatrix, b: FieldMatrix },
    Answer(FieldMatrix),
    Error(String),
}

fn two_matrices(payload: &[u8]) -> Result<(FieldMatrix, FieldMatrix), WireError> {
    let mut cursor = payload;
    let max = payload.len() / 8;
    let a = FieldMatrix::read_binary(&mut cursor, max)?;
    let b = FieldMatrix::read_binary(&mut cursor, max)?;
    if !cursor.is_empty() {
        return Err(WireError::Payload(format!("{} trailing bytes", cursor.len())));
    }
    Ok((a, b))
}

impl Message {
    pub fn to_frame(&self) -> Frame {
        let (kind, payload) = match self {
            Message::ShareOneSided { a, b } => {
                let mut p = a.to_binary();
                p.extend(b.to_binary());
                (FrameType::ShareOneSided, p)
            }
            Message::ShareFully { a, b } => {
                let mut p = a.to_binary();
                p.extend(b.to_binary());
                (FrameType::ShareFully, p)
            }
            Message::Answer(z) => (FrameType::Answer, z.to_binary()),
            Message::Error(msg) => (FrameType::Error, msg.as_bytes().to_vec()),
        };
        Frame { kind, payload }
    }

    pub fn from_frame(frame: &Frame) -> Result<Self, WireError> {
        Ok(match frame.kind {
            FrameType::ShareOneSided => {
                let (a, b) = two_matrices(&frame.payload)?;
                Message::ShareOneSided { a, b }
            }
            FrameType::ShareFully => {
                let (a, b) = two_matrices(&frame.payload)?;
                Message::ShareFully { a, b }
            }
            FrameType::Answer => Message::Answer(FieldMatrix::from_binary(&frame.payload)?),
            FrameType::Error => Message::Error(
                String::from_utf8(frame.payload.clone())
                    .map_err(|_| WireError::Payload("error text is not UTF-8".into()))?,
            ),
        })
    }
}
