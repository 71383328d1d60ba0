//! Five-byte command frames: `FF AA 01 <code> FE`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HEADER: [u8; 3] = [0xFF, 0xAA, 0x01];
pub const TRAILER: u8 = 0xFE;
pub const FRAME_LEN: usize = 5;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("invalid command code {0} (expected 0..=6)")]
    InvalidCode(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Command {
    Stop = 0,
    Forward = 1,
    Reverse = 2,
    /// Counter-clockwise rotation (left).
    RotCcw = 3,
    /// Clockwise rotation (right).
    RotCw = 4,
    LedOn = 5,
    LedOff = 6,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Stop,
        Command::Forward,
        Command::Reverse,
        Command::RotCcw,
        Command::RotCw,
        Command::LedOn,
        Command::LedOff,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn label(self) -> &'static str {
        match self {
            Command::Stop => "STOP",
            Command::Forward => "FORWARD",
            Command::Reverse => "REVERSE",
            Command::RotCcw => "LEFT",
            Command::RotCw => "RIGHT",
            Command::LedOn => "LED_ON",
            Command::LedOff => "LED_OFF",
        }
    }
}

impl TryFrom<u8> for Command {
    type Error = ProtocolError;

    fn try_from(code: u8) -> Result<Self, Self::Error> {
        Command::ALL
            .get(code as usize)
            .copied()
            .ok_or(ProtocolError::InvalidCode(code))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn encode(code: u8) -> Result<[u8; FRAME_LEN], ProtocolError> {
    Command::try_from(code).map(encode_command)
}

pub fn encode_command(cmd: Command) -> [u8; FRAME_LEN] {
    [HEADER[0], HEADER[1], HEADER[2], cmd.code(), TRAILER]
}

/// Streaming frame decoder that resynchronizes on garbage.
///
/// Scanning is greedy: at each `0xFF` a complete well-formed frame is
/// consumed whole; anything else discards one byte. A partial frame is kept
/// only while it is still a viable frame prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecoderState {
    buffer: Vec<u8>,
    pub frames_emitted: u64,
    pub bytes_skipped: u64,
}

enum Prefix {
    Complete(u8),
    Partial,
    Invalid,
}

fn check_prefix(bytes: &[u8]) -> Prefix {
    for (i, &b) in bytes.iter().enumerate().take(FRAME_LEN) {
        let ok = match i {
            0..=2 => b == HEADER[i],
            3 => b <= Command::LedOff as u8,
            _ => b == TRAILER,
        };
        if !ok {
            return Prefix::Invalid;
        }
    }
    if bytes.len() >= FRAME_LEN {
        Prefix::Complete(bytes[3])
    } else {
        Prefix::Partial
    }
}

impl DecoderState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn buffered(&self) -> &[u8] {
        &self.buffer
    }

    /// Feed a chunk and return the codes of every frame completed by it.
    pub fn decode_push(&mut self, chunk: &[u8]) -> Vec<u8> {
        self.buffer.extend_from_slice(chunk);
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < self.buffer.len() {
            match check_prefix(&self.buffer[pos..]) {
                Prefix::Complete(code) => {
                    out.push(code);
                    self.frames_emitted += 1;
                    pos += FRAME_LEN;
                }
                Prefix::Partial => break,
                Prefix::Invalid => {
                    self.bytes_skipped += 1;
                    pos += 1;
                }
            }
        }
        self.buffer.drain(..pos);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn code_table() {
        assert_eq!(encode(1).unwrap(), [0xFF, 0xAA, 0x01, 0x01, 0xFE]);
        assert_eq!(encode(0).unwrap(), [0xFF, 0xAA, 0x01, 0x00, 0xFE]);
        assert_eq!(encode(6).unwrap(), [0xFF, 0xAA, 0x01, 0x06, 0xFE]);
        assert_eq!(encode(7), Err(ProtocolError::InvalidCode(7)));
    }

    #[test]
    fn single_frame() {
        let mut d = DecoderState::new();
        assert_eq!(d.decode_push(&[0xFF, 0xAA, 0x01, 0x03, 0xFE]), vec![3]);
        assert_eq!(d.frames_emitted, 1);
        assert!(d.buffered().is_empty());
    }

    #[test]
    fn leading_garbage_is_skipped() {
        let mut d = DecoderState::new();
        let codes = d.decode_push(&[0xDE, 0xAD, 0xFF, 0xAA, 0x01, 0x02, 0xFE]);
        assert_eq!(codes, vec![2]);
        assert_eq!(d.bytes_skipped, 2);
    }

    #[test]
    fn split_frame_is_reassembled() {
        let mut d = DecoderState::new();
        assert!(d.decode_push(&[0xFF, 0xAA, 0x01]).is_empty());
        assert_eq!(d.buffered().len(), 3);
        assert_eq!(d.decode_push(&[0x04, 0xFE]), vec![4]);
        assert!(d.buffered().is_empty());
    }

    #[test]
    fn bad_code_resyncs_after_ff() {
        let mut d = DecoderState::new();
        // Code 0x09 is rejected; the real frame after it still decodes.
        let codes = d.decode_push(&[0xFF, 0xAA, 0x01, 0x09, 0xFF, 0xAA, 0x01, 0x00, 0xFE]);
        assert_eq!(codes, vec![0]);
        assert_eq!(d.bytes_skipped, 4);
    }

    #[test]
    fn forged_trailer_does_not_swallow_header() {
        let mut d = DecoderState::new();
        let codes = d.decode_push(&[0xFF, 0xAA, 0x01, 0xFF, 0xAA, 0x01, 0x05, 0xFE]);
        assert_eq!(codes, vec![5]);
    }

    #[test]
    fn dead_prefix_is_not_buffered() {
        let mut d = DecoderState::new();
        assert!(d.decode_push(&[0xFF, 0xAB]).is_empty());
        assert!(d.buffered().is_empty());
        assert_eq!(d.bytes_skipped, 2);
    }
}
