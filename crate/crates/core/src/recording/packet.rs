//! Frame packet wire format.
//!
//! All fields little-endian, in this order:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `FCP1`                   |
//! | 4      | 2    | version (u16, currently 1)     |
//! | 6      | 2    | flags (u16)                    |
//! | 8      | 8    | tracker timestamp (f64, s)     |
//! | 16     | 8    | wall clock (f64, unix s)       |
//! | 24     | 128  | pose, 16 × f64, column-major   |
//! | 152    | 4    | image length (u32)             |
//! | 156    | n    | image bytes (opaque JPEG blob) |
//!
//! A packet is self-delimiting: the header gives the total length.

use thiserror::Error;

use crate::guidance::TrackerFrame;
use crate::pose::{pose_from_column_major, pose_to_column_major, PoseError, ROTATION_TOLERANCE};

pub const PACKET_MAGIC: [u8; 4] = *b"FCP1";
pub const PACKET_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 156;
/// Largest image accepted by the decoder.
pub const MAX_IMAGE_LEN: usize = 64 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PacketError {
    #[error("bad packet magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported packet version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated packet: need {needed} bytes, have {available}")]
    TruncatedPacket { needed: usize, available: usize },
    #[error("image of {0} bytes exceeds the packet limit")]
    ImageTooLarge(usize),
    #[error("non-finite field in packet")]
    NonFinite,
    #[error("pose bottom row is not (0, 0, 0, 1)")]
    BadPose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePacket {
    pub flags: u16,
    pub tracker_timestamp: f64,
    pub wall_clock: f64,
    /// Column-major 4×4 homogeneous matrix.
    pub pose: [f64; 16],
    pub image: Vec<u8>,
}

impl FramePacket {
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.image.len()
    }

    pub fn from_frame(frame: &TrackerFrame) -> Self {
        FramePacket {
            flags: 0,
            tracker_timestamp: frame.tracker_timestamp,
            wall_clock: frame.wall_clock,
            pose: pose_to_column_major(&frame.device_pose),
            image: frame.image.clone(),
        }
    }

    pub fn to_tracker_frame(&self) -> Result<TrackerFrame, PoseError> {
        Ok(TrackerFrame {
            device_pose: pose_from_column_major(&self.pose, ROTATION_TOLERANCE)?,
            tracker_timestamp: self.tracker_timestamp,
            wall_clock: self.wall_clock,
            image: self.image.clone(),
        })
    }

    /// Bitwise equality, NaN payloads included.
    pub fn bit_eq(&self, other: &FramePacket) -> bool {
        self.flags == other.flags
            && self.tracker_timestamp.to_bits() == other.tracker_timestamp.to_bits()
            && self.wall_clock.to_bits() == other.wall_clock.to_bits()
            && self.pose.iter().zip(other.pose.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
            && self.image == other.image
    }
}

pub fn encode_frame_packet(packet: &FramePacket) -> Result<Vec<u8>, PacketError> {
    let mut out = Vec::with_capacity(packet.encoded_len());
    encode_into(packet, &mut out)?;
    Ok(out)
}

pub fn encode_into(packet: &FramePacket, out: &mut Vec<u8>) -> Result<(), PacketError> {
    let finite = packet.tracker_timestamp.is_finite()
        && packet.wall_clock.is_finite()
        && packet.pose.iter().all(|v| v.is_finite());
    if !finite {
        return Err(PacketError::NonFinite);
    }
    if packet.pose[3] != 0.0 || packet.pose[7] != 0.0 || packet.pose[11] != 0.0 || packet.pose[15] != 1.0 {
        return Err(PacketError::BadPose);
    }
    if packet.image.len() > MAX_IMAGE_LEN {
        return Err(PacketError::ImageTooLarge(packet.image.len()));
    }
    out.extend_from_slice(&PACKET_MAGIC);
    out.extend_from_slice(&PACKET_VERSION.to_le_bytes());
    out.extend_from_slice(&packet.flags.to_le_bytes());
    out.extend_from_slice(&packet.tracker_timestamp.to_le_bytes());
    out.extend_from_slice(&packet.wall_clock.to_le_bytes());
    for v in &packet.pose {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(packet.image.len() as u32).to_le_bytes());
    out.extend_from_slice(&packet.image);
    Ok(())
}

fn f64_at(buf: &[u8], off: usize) -> f64 {
    f64::from_le_bytes(buf[off..off + 8].try_into().expect("8-byte slice"))
}

/// Validates the fixed header and returns the total packet length it announces.
pub fn peek_packet_len(buf: &[u8]) -> Result<usize, PacketError> {
    if buf.len() >= 4 && buf[..4] != PACKET_MAGIC {
        return Err(PacketError::BadMagic(buf[..4].try_into().expect("4 bytes")));
    }
    if buf.len() >= 6 {
        let version = u16::from_le_bytes([buf[4], buf[5]]);
        if version != PACKET_VERSION {
            return Err(PacketError::UnsupportedVersion(version));
        }
    }
    if buf.len() < HEADER_LEN {
        return Err(PacketError::TruncatedPacket { needed: HEADER_LEN, available: buf.len() });
    }
    let image_len = u32::from_le_bytes(buf[152..156].try_into().expect("4 bytes")) as usize;
    if image_len > MAX_IMAGE_LEN {
        return Err(PacketError::ImageTooLarge(image_len));
    }
    Ok(HEADER_LEN + image_len)
}

/// Decodes one packet from the front of `buf`, returning it with the number of bytes consumed.
pub fn decode_prefix(buf: &[u8]) -> Result<(FramePacket, usize), PacketError> {
    let total = peek_packet_len(buf)?;
    if buf.len() < total {
        return Err(PacketError::TruncatedPacket { needed: total, available: buf.len() });
    }
    let flags = u16::from_le_bytes([buf[6], buf[7]]);
    let mut pose = [0.0; 16];
    for (i, v) in pose.iter_mut().enumerate() {
        *v = f64_at(buf, 24 + 8 * i);
    }
    if pose[3] != 0.0 || pose[7] != 0.0 || pose[11] != 0.0 || pose[15] != 1.0 {
        return Err(PacketError::BadPose);
    }
    let packet = FramePacket {
        flags,
        tracker_timestamp: f64_at(buf, 8),
        wall_clock: f64_at(buf, 16),
        pose,
        image: buf[HEADER_LEN..total].to_vec(),
    };
    Ok((packet, total))
}

/// Decodes a buffer holding exactly one packet.
pub fn decode_frame_packet(buf: &[u8]) -> Result<FramePacket, PacketError> {
    let (p, used) = decode_prefix(buf)?;
    if used != buf.len() {
        // trailing bytes are the start of something that is not a packet
        peek_packet_len(&buf[used..])?;
    }
    Ok(p)
}

/// Incremental decoder for a byte stream of back-to-back packets.
#[derive(Debug, Default)]
pub struct PacketDecoder {
    buf: Vec<u8>,
}

impl PacketDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next complete packet, `Ok(None)` when more bytes are needed.
    pub fn next_packet(&mut self) -> Result<Option<FramePacket>, PacketError> {
        match decode_prefix(&self.buf) {
            Ok((p, used)) => {
                self.buf.drain(..used);
                Ok(Some(p))
            }
            Err(PacketError::TruncatedPacket { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}
