//! Stream framing on top of the frame packet layout.
//!
//! A connection opens with an 8-byte hello in each direction: `FCHS`, u16 protocol version,
//! u16 status (0 ok, 1 version mismatch, 2 busy); all little-endian. Afterwards the client
//! sends back-to-back frame packets and the server answers each with a 16-byte ack:
//!
//! | offset | size | field                                     |
//! |--------|------|-------------------------------------------|
//! | 0      | 4    | magic `FCAK`                              |
//! | 4      | 1    | emitted state (0 feasible, 1 warning, 2 infeasible) |
//! | 5      | 1    | raw state                                 |
//! | 6      | 1    | flags (bit 0: frame rejected by guidance) |
//! | 7      | 1    | reserved                                  |
//! | 8      | 8    | frame index (u64)                         |
//!
//! A malformed packet ends the session: the server drops the connection.

use std::io::{Read, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::time::Duration;

use feasicap_core::guidance::FeasibilityState;
use feasicap_core::recording::{encode_frame_packet, FramePacket, PACKET_VERSION};

use crate::TransportError;

pub const HELLO_MAGIC: [u8; 4] = *b"FCHS";
pub const ACK_MAGIC: [u8; 4] = *b"FCAK";
pub const HELLO_LEN: usize = 8;
pub const ACK_LEN: usize = 16;
pub const PROTOCOL_VERSION: u16 = PACKET_VERSION;

pub const HELLO_OK: u16 = 0;
pub const HELLO_VERSION_MISMATCH: u16 = 1;
pub const HELLO_BUSY: u16 = 2;

const ACK_REJECTED: u8 = 1;

pub fn encode_hello(version: u16, status: u16) -> [u8; HELLO_LEN] {
    let mut b = [0; HELLO_LEN];
    b[..4].copy_from_slice(&HELLO_MAGIC);
    b[4..6].copy_from_slice(&version.to_le_bytes());
    b[6..8].copy_from_slice(&status.to_le_bytes());
    b
}

/// `(version, status)`.
pub fn decode_hello(b: &[u8]) -> Result<(u16, u16), TransportError> {
    if b.len() < HELLO_LEN || b[..4] != HELLO_MAGIC {
        return Err(TransportError::PacketCorrupt("bad stream hello".into()));
    }
    Ok((u16::from_le_bytes([b[4], b[5]]), u16::from_le_bytes([b[6], b[7]])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ack {
    pub frame_index: u64,
    pub state: FeasibilityState,
    pub raw_state: FeasibilityState,
    /// The guidance session refused the frame (lost tracking, bad timestamps, unconfigured).
    pub rejected: bool,
}

impl Ack {
    pub fn encode(&self) -> [u8; ACK_LEN] {
        let mut b = [0; ACK_LEN];
        b[..4].copy_from_slice(&ACK_MAGIC);
        b[4] = self.state.code();
        b[5] = self.raw_state.code();
        b[6] = if self.rejected { ACK_REJECTED } else { 0 };
        b[8..].copy_from_slice(&self.frame_index.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Result<Self, TransportError> {
        let bad = || TransportError::PacketCorrupt("bad ack".into());
        if b.len() != ACK_LEN || b[..4] != ACK_MAGIC {
            return Err(bad());
        }
        Ok(Ack {
            state: FeasibilityState::from_code(b[4]).ok_or_else(bad)?,
            raw_state: FeasibilityState::from_code(b[5]).ok_or_else(bad)?,
            rejected: b[6] & ACK_REJECTED != 0,
            frame_index: u64::from_le_bytes(b[8..16].try_into().expect("8 bytes")),
        })
    }
}

/// Blocking device-side client: one packet out, one ack back.
pub struct StreamClient {
    stream: TcpStream,
}

impl StreamClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, TransportError> {
        Self::connect_with_version(addr, PROTOCOL_VERSION)
    }

    pub fn connect_with_version(addr: impl ToSocketAddrs, version: u16) -> Result<Self, TransportError> {
        let mut stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(Duration::from_secs(10)))?;
        stream.write_all(&encode_hello(version, HELLO_OK))?;
        let mut b = [0; HELLO_LEN];
        read_exact(&mut stream, &mut b)?;
        let (theirs, status) = decode_hello(&b)?;
        match status {
            HELLO_OK => Ok(StreamClient { stream }),
            HELLO_BUSY => Err(TransportError::Busy),
            _ => Err(TransportError::VersionMismatch { ours: version, theirs }),
        }
    }

    /// Sends one packet and waits for its acknowledgement.
    pub fn send(&mut self, packet: &FramePacket) -> Result<Ack, TransportError> {
        let bytes = encode_frame_packet(packet).map_err(|e| TransportError::PacketCorrupt(e.to_string()))?;
        self.stream.write_all(&bytes)?;
        self.read_ack()
    }

    /// Writes arbitrary bytes, for fault injection.
    pub fn send_raw(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
        self.stream.write_all(bytes)?;
        Ok(())
    }

    pub fn read_ack(&mut self) -> Result<Ack, TransportError> {
        let mut b = [0; ACK_LEN];
        read_exact(&mut self.stream, &mut b)?;
        Ack::decode(&b)
    }

    /// Half-closes the sending side; the server finishes the session on EOF.
    pub fn finish(self) -> Result<(), TransportError> {
        self.stream.shutdown(Shutdown::Write)?;
        let mut rest = Vec::new();
        let _ = (&self.stream).read_to_end(&mut rest);
        Ok(())
    }
}

fn read_exact(stream: &mut TcpStream, buf: &mut [u8]) -> Result<(), TransportError> {
    stream.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::ConnectionReset => TransportError::Closed,
        _ => TransportError::Io(e),
    })
}
