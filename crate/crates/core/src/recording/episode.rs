use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::mcap::{read_file, McapChannel, McapMessage, McapRecord, McapSchema, McapWriter};
use super::packet::FramePacket;
use super::EpisodeError;
use crate::guidance::FrameRecord;

pub const POSE_TOPIC: &str = "/iphone_pose";
pub const IMAGE_TOPIC: &str = "/iphone_image";
pub const HARDWARE_TOPIC: &str = "/hardware_mask";
pub const FEASIBILITY_TOPIC: &str = "/feasibility";
pub const REQUIRED_TOPICS: [&str; 4] = [POSE_TOPIC, IMAGE_TOPIC, HARDWARE_TOPIC, FEASIBILITY_TOPIC];

const POSE_SCHEMA: &str = "feasicap.PoseFrame";
const IMAGE_SCHEMA: &str = "feasicap.ImageFrame";
const HARDWARE_SCHEMA: &str = "feasicap.HardwareMask";
const FEASIBILITY_SCHEMA: &str = "feasicap.FrameRecord";

const POSE_PAYLOAD_LEN: usize = 156;
const IMAGE_HEADER_LEN: usize = 24;

/// Schema layout for each standard topic: (schema name, schema encoding, message encoding, description).
fn standard_schema(topic: &str) -> Option<(&'static str, &'static str, &'static str, &'static str)> {
    match topic {
        POSE_TOPIC => Some((
            POSE_SCHEMA,
            "feasicap-layout",
            "feasicap-le",
            "u64 frame_index, u16 flags, u16 reserved, f64 tracker_timestamp, f64 wall_clock, f64[16] pose (column-major); little-endian",
        )),
        IMAGE_TOPIC => Some((
            IMAGE_SCHEMA,
            "feasicap-layout",
            "feasicap-le",
            "u64 frame_index, f64 tracker_timestamp, f64 wall_clock, then the image blob to the end of the message; little-endian",
        )),
        HARDWARE_TOPIC => Some((HARDWARE_SCHEMA, "feasicap-layout", "octet-stream", "opaque hardware state bytes")),
        FEASIBILITY_TOPIC => Some((FEASIBILITY_SCHEMA, "jsonschema", "json", r#"{"title":"FrameRecord","type":"object"}"#)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMessage {
    pub sequence: u32,
    /// Wall-clock receive time, ns since the unix epoch.
    pub log_time: u64,
    /// Source timestamp, ns.
    pub publish_time: u64,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelData {
    pub schema_name: String,
    pub schema_encoding: String,
    pub message_encoding: String,
    pub messages: Vec<ChannelMessage>,
}

impl ChannelData {
    fn standard(topic: &str) -> Option<Self> {
        standard_schema(topic).map(|(name, enc, msg_enc, _)| ChannelData {
            schema_name: name.into(),
            schema_encoding: enc.into(),
            message_encoding: msg_enc.into(),
            messages: Vec::new(),
        })
    }
}

/// One recorded demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: String,
    pub channels: BTreeMap<String, ChannelData>,
    pub start_wall_clock: f64,
    pub end_wall_clock: f64,
    /// Free-form session metadata (robot name, calibration, ...).
    pub metadata: BTreeMap<String, String>,
}

/// Decoded `/iphone_pose` message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseFrame {
    pub frame_index: u64,
    pub flags: u16,
    pub tracker_timestamp: f64,
    pub wall_clock: f64,
    pub pose: [f64; 16],
}

pub fn seconds_to_nanos(t: f64) -> u64 {
    if t.is_finite() && t > 0.0 {
        (t * 1e9).round().min(u64::MAX as f64) as u64
    } else {
        0
    }
}

pub fn encode_pose_payload(frame_index: u64, packet: &FramePacket) -> Vec<u8> {
    let mut out = Vec::with_capacity(POSE_PAYLOAD_LEN);
    out.extend_from_slice(&frame_index.to_le_bytes());
    out.extend_from_slice(&packet.flags.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&packet.tracker_timestamp.to_le_bytes());
    out.extend_from_slice(&packet.wall_clock.to_le_bytes());
    for v in &packet.pose {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn f64_at(buf: &[u8], off: usize) -> f64 {
    f64::from_le_bytes(buf[off..off + 8].try_into().expect("8 bytes"))
}

pub fn decode_pose_payload(data: &[u8]) -> Result<PoseFrame, EpisodeError> {
    if data.len() != POSE_PAYLOAD_LEN {
        return Err(EpisodeError::CorruptFile(format!("pose message of {} bytes", data.len())));
    }
    let mut pose = [0.0; 16];
    for (i, v) in pose.iter_mut().enumerate() {
        *v = f64_at(data, 28 + 8 * i);
    }
    Ok(PoseFrame {
        frame_index: u64::from_le_bytes(data[..8].try_into().expect("8 bytes")),
        flags: u16::from_le_bytes([data[8], data[9]]),
        tracker_timestamp: f64_at(data, 12),
        wall_clock: f64_at(data, 20),
        pose,
    })
}

pub fn encode_image_payload(frame_index: u64, packet: &FramePacket) -> Vec<u8> {
    let mut out = Vec::with_capacity(IMAGE_HEADER_LEN + packet.image.len());
    out.extend_from_slice(&frame_index.to_le_bytes());
    out.extend_from_slice(&packet.tracker_timestamp.to_le_bytes());
    out.extend_from_slice(&packet.wall_clock.to_le_bytes());
    out.extend_from_slice(&packet.image);
    out
}

/// Returns `(frame_index, tracker_timestamp, wall_clock, image)`.
pub fn decode_image_payload(data: &[u8]) -> Result<(u64, f64, f64, &[u8]), EpisodeError> {
    if data.len() < IMAGE_HEADER_LEN {
        return Err(EpisodeError::CorruptFile(format!("image message of {} bytes", data.len())));
    }
    Ok((
        u64::from_le_bytes(data[..8].try_into().expect("8 bytes")),
        f64_at(data, 8),
        f64_at(data, 16),
        &data[IMAGE_HEADER_LEN..],
    ))
}

impl Episode {
    /// Empty episode with the four standard channels.
    pub fn new(id: impl Into<String>) -> Self {
        let channels = REQUIRED_TOPICS
            .iter()
            .map(|t| (t.to_string(), ChannelData::standard(t).expect("standard topic")))
            .collect();
        Episode { id: id.into(), channels, start_wall_clock: 0.0, end_wall_clock: 0.0, metadata: BTreeMap::new() }
    }

    pub fn channel(&self, topic: &str) -> Result<&ChannelData, EpisodeError> {
        self.channels.get(topic).ok_or_else(|| EpisodeError::MissingChannel(topic.to_string()))
    }

    /// Appends a message, enforcing per-channel monotone log times.
    pub fn push(&mut self, topic: &str, msg: ChannelMessage) -> Result<(), EpisodeError> {
        let chan = self.channels.get_mut(topic).ok_or_else(|| EpisodeError::MissingChannel(topic.to_string()))?;
        if let Some(last) = chan.messages.last() {
            if msg.log_time < last.log_time {
                return Err(EpisodeError::NonMonotonic(topic.to_string()));
            }
        }
        chan.messages.push(msg);
        Ok(())
    }

    /// Records one received frame on the pose and image channels.
    pub fn push_frame(&mut self, frame_index: u64, packet: &FramePacket) -> Result<(), EpisodeError> {
        let (pose, image) = frame_messages(frame_index, packet);
        self.push(POSE_TOPIC, pose)?;
        self.push(IMAGE_TOPIC, image)
    }

    pub fn push_feasibility(&mut self, record: &FrameRecord) -> Result<(), EpisodeError> {
        self.push(FEASIBILITY_TOPIC, feasibility_message(record)?)
    }

    pub fn pose_frames(&self) -> Result<Vec<PoseFrame>, EpisodeError> {
        self.channel(POSE_TOPIC)?.messages.iter().map(|m| decode_pose_payload(&m.data)).collect()
    }

    pub fn feasibility_records(&self) -> Result<Vec<FrameRecord>, EpisodeError> {
        self.channel(FEASIBILITY_TOPIC)?
            .messages
            .iter()
            .map(|m| serde_json::from_slice(&m.data).map_err(|e| EpisodeError::CorruptFile(format!("feasibility record: {e}"))))
            .collect()
    }

    /// `(topic, message index)` for every message, merged across channels by log time.
    /// Ties keep topic order, then per-channel order.
    pub fn global_index(&self) -> Vec<(String, usize)> {
        let mut all: Vec<(u64, &str, usize)> = self
            .channels
            .iter()
            .flat_map(|(t, c)| c.messages.iter().enumerate().map(move |(i, m)| (m.log_time, t.as_str(), i)))
            .collect();
        all.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(b.1)).then(a.2.cmp(&b.2)));
        all.into_iter().map(|(_, t, i)| (t.to_string(), i)).collect()
    }

    /// Checks the structural invariants: monotone channels and feasibility records that
    /// reference recorded pose frames.
    pub fn validate(&self) -> Result<(), EpisodeError> {
        for (topic, chan) in &self.channels {
            if chan.messages.windows(2).any(|w| w[1].log_time < w[0].log_time) {
                return Err(EpisodeError::NonMonotonic(topic.clone()));
            }
        }
        if let (Some(_), Some(_)) = (self.channels.get(POSE_TOPIC), self.channels.get(FEASIBILITY_TOPIC)) {
            let frames: std::collections::HashSet<u64> = self.pose_frames()?.iter().map(|p| p.frame_index).collect();
            for r in self.feasibility_records()? {
                if !frames.contains(&r.frame_index) {
                    return Err(EpisodeError::CorruptFile(format!(
                        "feasibility record for frame {} has no pose frame",
                        r.frame_index
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn frame_messages(frame_index: u64, packet: &FramePacket) -> (ChannelMessage, ChannelMessage) {
    let log_time = seconds_to_nanos(packet.wall_clock);
    let publish_time = seconds_to_nanos(packet.tracker_timestamp);
    let seq = frame_index as u32;
    (
        ChannelMessage { sequence: seq, log_time, publish_time, data: encode_pose_payload(frame_index, packet) },
        ChannelMessage { sequence: seq, log_time, publish_time, data: encode_image_payload(frame_index, packet) },
    )
}

pub fn feasibility_message(record: &FrameRecord) -> Result<ChannelMessage, EpisodeError> {
    Ok(ChannelMessage {
        sequence: record.frame_index as u32,
        log_time: seconds_to_nanos(record.wall_clock),
        publish_time: seconds_to_nanos(record.tracker_timestamp),
        data: serde_json::to_vec(record).map_err(|e| EpisodeError::CorruptFile(e.to_string()))?,
    })
}

/// On-disk container for episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeFormat {
    Mcap,
    /// Newline-delimited JSON, one record per line, message bytes in base64.
    Ndjson,
}

impl EpisodeFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ndjson") | Some("jsonl") => EpisodeFormat::Ndjson,
            _ => EpisodeFormat::Mcap,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            EpisodeFormat::Mcap => "mcap",
            EpisodeFormat::Ndjson => "ndjson",
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum NdjsonLine {
    Channel { topic: String, schema_name: String, schema_encoding: String, message_encoding: String },
    Message { topic: String, sequence: u32, log_time: u64, publish_time: u64, data: String },
    Metadata { name: String, metadata: BTreeMap<String, String> },
}

enum Sink {
    Mcap(McapWriter<BufWriter<File>>),
    Ndjson(BufWriter<File>),
}

/// Streaming episode writer: channels are declared up front and messages appended in
/// arrival order, so a long session never has to be held in memory.
pub struct EpisodeWriter {
    sink: Sink,
    id: String,
    topics: BTreeMap<String, (u16, Option<u64>)>,
    start: Option<f64>,
    end: f64,
    metadata: BTreeMap<String, String>,
}

const METADATA_NAME: &str = "feasicap.episode";

impl EpisodeWriter {
    pub fn create(path: &Path, id: impl Into<String>) -> Result<Self, EpisodeError> {
        Self::create_with(path, id, EpisodeFormat::from_path(path), &REQUIRED_TOPICS.map(|t| ChannelData::standard(t).map(|c| (t.to_string(), c))).into_iter().flatten().collect())
    }

    fn create_with(
        path: &Path,
        id: impl Into<String>,
        format: EpisodeFormat,
        channels: &BTreeMap<String, ChannelData>,
    ) -> Result<Self, EpisodeError> {
        let file = BufWriter::new(File::create(path)?);
        let mut sink = match format {
            EpisodeFormat::Mcap => Sink::Mcap(McapWriter::new(file, "", concat!("feasicap ", env!("CARGO_PKG_VERSION")))?),
            EpisodeFormat::Ndjson => Sink::Ndjson(file),
        };
        let mut topics = BTreeMap::new();
        for (i, (topic, chan)) in channels.iter().enumerate() {
            let id = (i + 1) as u16;
            match &mut sink {
                Sink::Mcap(w) => {
                    let data = standard_schema(topic).map_or(Vec::new(), |s| s.3.as_bytes().to_vec());
                    w.schema(&McapSchema { id, name: chan.schema_name.clone(), encoding: chan.schema_encoding.clone(), data })?;
                    w.channel(&McapChannel {
                        id,
                        schema_id: id,
                        topic: topic.clone(),
                        message_encoding: chan.message_encoding.clone(),
                        metadata: BTreeMap::new(),
                    })?;
                }
                Sink::Ndjson(w) => write_line(
                    w,
                    &NdjsonLine::Channel {
                        topic: topic.clone(),
                        schema_name: chan.schema_name.clone(),
                        schema_encoding: chan.schema_encoding.clone(),
                        message_encoding: chan.message_encoding.clone(),
                    },
                )?,
            }
            topics.insert(topic.clone(), (id, None));
        }
        Ok(EpisodeWriter { sink, id: id.into(), topics, start: None, end: 0.0, metadata: BTreeMap::new() })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    /// Widens the recorded wall-clock span to include `t`.
    pub fn note_wall_clock(&mut self, t: f64) {
        if t.is_finite() {
            self.start = Some(self.start.map_or(t, |s| s.min(t)));
            self.end = self.end.max(t);
        }
    }

    pub fn write(&mut self, topic: &str, msg: &ChannelMessage) -> Result<(), EpisodeError> {
        let (id, last) = self.topics.get_mut(topic).ok_or_else(|| EpisodeError::MissingChannel(topic.to_string()))?;
        if last.is_some_and(|l| msg.log_time < l) {
            return Err(EpisodeError::NonMonotonic(topic.to_string()));
        }
        *last = Some(msg.log_time);
        match &mut self.sink {
            Sink::Mcap(w) => w.message(&McapMessage {
                channel_id: *id,
                sequence: msg.sequence,
                log_time: msg.log_time,
                publish_time: msg.publish_time,
                data: msg.data.clone(),
            })?,
            Sink::Ndjson(w) => write_line(
                w,
                &NdjsonLine::Message {
                    topic: topic.to_string(),
                    sequence: msg.sequence,
                    log_time: msg.log_time,
                    publish_time: msg.publish_time,
                    data: base64::engine::general_purpose::STANDARD.encode(&msg.data),
                },
            )?,
        }
        Ok(())
    }

    pub fn write_frame(&mut self, frame_index: u64, packet: &FramePacket) -> Result<(), EpisodeError> {
        let (pose, image) = frame_messages(frame_index, packet);
        self.note_wall_clock(packet.wall_clock);
        self.write(POSE_TOPIC, &pose)?;
        self.write(IMAGE_TOPIC, &image)
    }

    pub fn write_feasibility(&mut self, record: &FrameRecord) -> Result<(), EpisodeError> {
        self.write(FEASIBILITY_TOPIC, &feasibility_message(record)?)
    }

    pub fn finish(mut self) -> Result<(), EpisodeError> {
        let mut meta = std::mem::take(&mut self.metadata);
        meta.insert("id".into(), self.id.clone());
        meta.insert("start_wall_clock".into(), format!("{:?}", self.start.unwrap_or(0.0)));
        meta.insert("end_wall_clock".into(), format!("{:?}", self.end));
        match self.sink {
            Sink::Mcap(mut w) => {
                w.metadata(METADATA_NAME, &meta)?;
                w.finish()?;
            }
            Sink::Ndjson(mut w) => {
                write_line(&mut w, &NdjsonLine::Metadata { name: METADATA_NAME.into(), metadata: meta })?;
                w.flush()?;
            }
        }
        Ok(())
    }
}

fn write_line(w: &mut impl Write, line: &NdjsonLine) -> Result<(), EpisodeError> {
    serde_json::to_writer(&mut *w, line).map_err(|e| EpisodeError::CorruptFile(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Writes a complete in-memory episode. The container follows the file extension.
pub fn write_episode(path: &Path, episode: &Episode) -> Result<(), EpisodeError> {
    let mut w = EpisodeWriter::create_with(path, episode.id.clone(), EpisodeFormat::from_path(path), &episode.channels)?;
    w.start = Some(episode.start_wall_clock);
    w.end = episode.end_wall_clock;
    w.metadata = episode.metadata.clone();
    // interleave by log time, as a live recorder would
    for (topic, i) in episode.global_index() {
        w.write(&topic, &episode.channels[&topic].messages[i])?;
    }
    w.finish()
}

fn apply_metadata(ep: &mut Episode, mut meta: BTreeMap<String, String>) -> Result<(), EpisodeError> {
    let parse = |v: Option<String>| -> Result<f64, EpisodeError> {
        v.map_or(Ok(0.0), |s| s.parse().map_err(|_| EpisodeError::CorruptFile(format!("bad wall clock {s}"))))
    };
    if let Some(id) = meta.remove("id") {
        ep.id = id;
    }
    ep.start_wall_clock = parse(meta.remove("start_wall_clock"))?;
    ep.end_wall_clock = parse(meta.remove("end_wall_clock"))?;
    ep.metadata = meta;
    Ok(())
}

fn check_schema(topic: &str, chan: &ChannelData) -> Result<(), EpisodeError> {
    if let Some((name, _, msg_enc, _)) = standard_schema(topic) {
        if chan.schema_name != name || chan.message_encoding != msg_enc {
            return Err(EpisodeError::SchemaMismatch {
                topic: topic.to_string(),
                found: format!("{} / {}", chan.schema_name, chan.message_encoding),
            });
        }
    }
    Ok(())
}

pub fn read_episode(path: &Path) -> Result<Episode, EpisodeError> {
    let fallback_id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("episode").to_string();
    let mut ep = Episode { id: fallback_id, channels: BTreeMap::new(), start_wall_clock: 0.0, end_wall_clock: 0.0, metadata: BTreeMap::new() };
    match EpisodeFormat::from_path(path) {
        EpisodeFormat::Mcap => {
            let mut schemas: BTreeMap<u16, McapSchema> = BTreeMap::new();
            let mut by_id: BTreeMap<u16, String> = BTreeMap::new();
            for rec in read_file(path)? {
                match rec {
                    McapRecord::Schema(s) => {
                        schemas.insert(s.id, s);
                    }
                    McapRecord::Channel(c) => {
                        let schema = schemas
                            .get(&c.schema_id)
                            .ok_or_else(|| EpisodeError::CorruptFile(format!("channel {} references unknown schema", c.topic)))?;
                        let data = ChannelData {
                            schema_name: schema.name.clone(),
                            schema_encoding: schema.encoding.clone(),
                            message_encoding: c.message_encoding.clone(),
                            messages: Vec::new(),
                        };
                        check_schema(&c.topic, &data)?;
                        by_id.insert(c.id, c.topic.clone());
                        ep.channels.insert(c.topic, data);
                    }
                    McapRecord::Message(m) => {
                        let topic = by_id
                            .get(&m.channel_id)
                            .ok_or_else(|| EpisodeError::CorruptFile(format!("message on unknown channel {}", m.channel_id)))?;
                        ep.channels.get_mut(topic).expect("registered channel").messages.push(ChannelMessage {
                            sequence: m.sequence,
                            log_time: m.log_time,
                            publish_time: m.publish_time,
                            data: m.data,
                        });
                    }
                    McapRecord::Metadata { name, metadata } if name == METADATA_NAME => apply_metadata(&mut ep, metadata)?,
                    _ => {}
                }
            }
        }
        EpisodeFormat::Ndjson => {
            let reader = BufReader::new(File::open(path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: NdjsonLine = serde_json::from_str(&line)
                    .map_err(|e| EpisodeError::CorruptFile(format!("line {}: {e}", n + 1)))?;
                match parsed {
                    NdjsonLine::Channel { topic, schema_name, schema_encoding, message_encoding } => {
                        let data = ChannelData { schema_name, schema_encoding, message_encoding, messages: Vec::new() };
                        check_schema(&topic, &data)?;
                        ep.channels.insert(topic, data);
                    }
                    NdjsonLine::Message { topic, sequence, log_time, publish_time, data } => {
                        let data = base64::engine::general_purpose::STANDARD
                            .decode(data)
                            .map_err(|e| EpisodeError::CorruptFile(format!("line {}: {e}", n + 1)))?;
                        ep.channels
                            .get_mut(&topic)
                            .ok_or_else(|| EpisodeError::CorruptFile(format!("line {}: unknown channel {topic}", n + 1)))?
                            .messages
                            .push(ChannelMessage { sequence, log_time, publish_time, data });
                    }
                    NdjsonLine::Metadata { name, metadata } if name == METADATA_NAME => apply_metadata(&mut ep, metadata)?,
                    NdjsonLine::Metadata { .. } => {}
                }
            }
        }
    }
    for (topic, chan) in &ep.channels {
        if chan.messages.windows(2).any(|w| w[1].log_time < w[0].log_time) {
            return Err(EpisodeError::CorruptFile(format!("channel {topic} is not time-ordered")));
        }
    }
    Ok(ep)
}
