//! Frame packets, episode storage and post-hoc analysis.

mod episode;
pub mod mcap;
mod packet;
mod stats;
mod timeline;

use thiserror::Error;

pub use episode::{
    decode_image_payload, decode_pose_payload, encode_image_payload, encode_pose_payload, feasibility_message,
    frame_messages, read_episode, seconds_to_nanos, write_episode, ChannelData, ChannelMessage, Episode,
    EpisodeFormat, EpisodeWriter, PoseFrame, FEASIBILITY_TOPIC, HARDWARE_TOPIC, IMAGE_TOPIC, POSE_TOPIC,
    REQUIRED_TOPICS,
};
pub use packet::{
    decode_frame_packet, decode_prefix, encode_frame_packet, encode_into, peek_packet_len, FramePacket,
    PacketDecoder, PacketError, HEADER_LEN, MAX_IMAGE_LEN, PACKET_MAGIC, PACKET_VERSION,
};
pub use stats::{compute_stats, stats_from_states, FeasibilityStats};
pub use timeline::{export_timeline, parse_timeline_csv, timeline_csv, timeline_svg, TimelineFormat, TimelineRow};

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("corrupt episode file: {0}")]
    CorruptFile(String),
    #[error("schema mismatch on {topic}: found {found}")]
    SchemaMismatch { topic: String, found: String },
    #[error("missing channel {0}")]
    MissingChannel(String),
    #[error("timestamps on {0} go backwards")]
    NonMonotonic(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
