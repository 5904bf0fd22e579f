//! Minimal MCAP container support: unchunked files with Header, Schema, Channel, Message,
//! Metadata, DataEnd and Footer records, no summary section. CRC fields are written as zero
//! ("not computed"), which readers accept.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::EpisodeError;

pub const MCAP_MAGIC: &[u8; 8] = b"\x89MCAP0\r\n";

const OP_HEADER: u8 = 0x01;
const OP_FOOTER: u8 = 0x02;
const OP_SCHEMA: u8 = 0x03;
const OP_CHANNEL: u8 = 0x04;
const OP_MESSAGE: u8 = 0x05;
const OP_METADATA: u8 = 0x0C;
const OP_DATA_END: u8 = 0x0F;

#[derive(Debug, Clone, PartialEq)]
pub struct McapSchema {
    pub id: u16,
    pub name: String,
    pub encoding: String,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McapChannel {
    pub id: u16,
    pub schema_id: u16,
    pub topic: String,
    pub message_encoding: String,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McapMessage {
    pub channel_id: u16,
    pub sequence: u32,
    pub log_time: u64,
    pub publish_time: u64,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum McapRecord {
    Header { profile: String, library: String },
    Schema(McapSchema),
    Channel(McapChannel),
    Message(McapMessage),
    Metadata { name: String, metadata: BTreeMap<String, String> },
    DataEnd,
    Footer,
    Unknown(u8),
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

fn put_map(buf: &mut Vec<u8>, map: &BTreeMap<String, String>) {
    let mut inner = Vec::new();
    for (k, v) in map {
        put_str(&mut inner, k);
        put_str(&mut inner, v);
    }
    buf.extend_from_slice(&(inner.len() as u32).to_le_bytes());
    buf.extend_from_slice(&inner);
}

pub struct McapWriter<W: Write> {
    out: W,
}

impl<W: Write> McapWriter<W> {
    pub fn new(mut out: W, profile: &str, library: &str) -> std::io::Result<Self> {
        out.write_all(MCAP_MAGIC)?;
        let mut w = McapWriter { out };
        let mut body = Vec::new();
        put_str(&mut body, profile);
        put_str(&mut body, library);
        w.record(OP_HEADER, &body)?;
        Ok(w)
    }

    fn record(&mut self, op: u8, body: &[u8]) -> std::io::Result<()> {
        self.out.write_all(&[op])?;
        self.out.write_all(&(body.len() as u64).to_le_bytes())?;
        self.out.write_all(body)
    }

    pub fn schema(&mut self, s: &McapSchema) -> std::io::Result<()> {
        let mut body = Vec::new();
        body.extend_from_slice(&s.id.to_le_bytes());
        put_str(&mut body, &s.name);
        put_str(&mut body, &s.encoding);
        body.extend_from_slice(&(s.data.len() as u32).to_le_bytes());
        body.extend_from_slice(&s.data);
        self.record(OP_SCHEMA, &body)
    }

    pub fn channel(&mut self, c: &McapChannel) -> std::io::Result<()> {
        let mut body = Vec::new();
        body.extend_from_slice(&c.id.to_le_bytes());
        body.extend_from_slice(&c.schema_id.to_le_bytes());
        put_str(&mut body, &c.topic);
        put_str(&mut body, &c.message_encoding);
        put_map(&mut body, &c.metadata);
        self.record(OP_CHANNEL, &body)
    }

    pub fn message(&mut self, m: &McapMessage) -> std::io::Result<()> {
        let mut body = Vec::with_capacity(22 + m.data.len());
        body.extend_from_slice(&m.channel_id.to_le_bytes());
        body.extend_from_slice(&m.sequence.to_le_bytes());
        body.extend_from_slice(&m.log_time.to_le_bytes());
        body.extend_from_slice(&m.publish_time.to_le_bytes());
        body.extend_from_slice(&m.data);
        self.record(OP_MESSAGE, &body)
    }

    pub fn metadata(&mut self, name: &str, metadata: &BTreeMap<String, String>) -> std::io::Result<()> {
        let mut body = Vec::new();
        put_str(&mut body, name);
        put_map(&mut body, metadata);
        self.record(OP_METADATA, &body)
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.record(OP_DATA_END, &0u32.to_le_bytes())?;
        let mut footer = Vec::with_capacity(20);
        footer.extend_from_slice(&0u64.to_le_bytes());
        footer.extend_from_slice(&0u64.to_le_bytes());
        footer.extend_from_slice(&0u32.to_le_bytes());
        self.record(OP_FOOTER, &footer)?;
        self.out.write_all(MCAP_MAGIC)?;
        self.out.flush()?;
        Ok(self.out)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> EpisodeError {
    EpisodeError::CorruptFile(msg.into())
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EpisodeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("record overruns its length"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, EpisodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, EpisodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, EpisodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, EpisodeError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid UTF-8 string"))
    }

    fn map(&mut self) -> Result<BTreeMap<String, String>, EpisodeError> {
        let n = self.u32()? as usize;
        let mut inner = Cursor { buf: self.take(n)?, pos: 0 };
        let mut map = BTreeMap::new();
        while inner.pos < inner.buf.len() {
            let k = inner.string()?;
            let v = inner.string()?;
            map.insert(k, v);
        }
        Ok(map)
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }
}

/// Parses an entire unchunked MCAP file into its records, ending at the Footer.
pub fn read_records(bytes: &[u8]) -> Result<Vec<McapRecord>, EpisodeError> {
    if bytes.len() < 16 || &bytes[..8] != MCAP_MAGIC {
        return Err(corrupt("missing leading MCAP magic"));
    }
    if &bytes[bytes.len() - 8..] != MCAP_MAGIC {
        return Err(corrupt("missing trailing MCAP magic (file not finished?)"));
    }
    let body = &bytes[8..bytes.len() - 8];
    let mut cur = Cursor { buf: body, pos: 0 };
    let mut records = Vec::new();
    while cur.pos < body.len() {
        let op = cur.take(1)?[0];
        let len = cur.u64()?;
        let len = usize::try_from(len).map_err(|_| corrupt("record length overflow"))?;
        let mut r = Cursor { buf: cur.take(len)?, pos: 0 };
        let rec = match op {
            OP_HEADER => McapRecord::Header { profile: r.string()?, library: r.string()? },
            OP_SCHEMA => {
                let id = r.u16()?;
                let name = r.string()?;
                let encoding = r.string()?;
                let n = r.u32()? as usize;
                McapRecord::Schema(McapSchema { id, name, encoding, data: r.take(n)?.to_vec() })
            }
            OP_CHANNEL => McapRecord::Channel(McapChannel {
                id: r.u16()?,
                schema_id: r.u16()?,
                topic: r.string()?,
                message_encoding: r.string()?,
                metadata: r.map()?,
            }),
            OP_MESSAGE => McapRecord::Message(McapMessage {
                channel_id: r.u16()?,
                sequence: r.u32()?,
                log_time: r.u64()?,
                publish_time: r.u64()?,
                data: r.rest().to_vec(),
            }),
            OP_METADATA => McapRecord::Metadata { name: r.string()?, metadata: r.map()? },
            OP_DATA_END => McapRecord::DataEnd,
            OP_FOOTER => McapRecord::Footer,
            other => McapRecord::Unknown(other),
        };
        let done = rec == McapRecord::Footer;
        records.push(rec);
        if done {
            break;
        }
    }
    if records.first().map_or(true, |r| !matches!(r, McapRecord::Header { .. })) {
        return Err(corrupt("first record is not a Header"));
    }
    if records.last() != Some(&McapRecord::Footer) {
        return Err(corrupt("no Footer record"));
    }
    Ok(records)
}

pub fn read_file(path: &std::path::Path) -> Result<Vec<McapRecord>, EpisodeError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    read_records(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_records() {
        let mut w = McapWriter::new(Vec::new(), "", "test").unwrap();
        let schema = McapSchema { id: 1, name: "s".into(), encoding: "jsonschema".into(), data: b"{}".to_vec() };
        let mut meta = BTreeMap::new();
        meta.insert("k".to_string(), "v".to_string());
        let chan = McapChannel { id: 3, schema_id: 1, topic: "/t".into(), message_encoding: "json".into(), metadata: meta.clone() };
        let msg = McapMessage { channel_id: 3, sequence: 9, log_time: 5, publish_time: 6, data: b"{\"a\":1}".to_vec() };
        w.schema(&schema).unwrap();
        w.channel(&chan).unwrap();
        w.message(&msg).unwrap();
        w.metadata("episode", &meta).unwrap();
        let bytes = w.finish().unwrap();
        assert_eq!(&bytes[..8], MCAP_MAGIC);
        let recs = read_records(&bytes).unwrap();
        assert_eq!(
            recs,
            vec![
                McapRecord::Header { profile: String::new(), library: "test".into() },
                McapRecord::Schema(schema),
                McapRecord::Channel(chan),
                McapRecord::Message(msg),
                McapRecord::Metadata { name: "episode".into(), metadata: meta },
                McapRecord::DataEnd,
                McapRecord::Footer,
            ]
        );
    }

    #[test]
    fn unfinished_file_is_corrupt() {
        let w = McapWriter::new(Vec::new(), "", "test").unwrap();
        let bytes = w.out;
        assert!(matches!(read_records(&bytes), Err(EpisodeError::CorruptFile(_))));
    }

    #[test]
    fn overlong_record_is_corrupt() {
        let mut bytes = MCAP_MAGIC.to_vec();
        bytes.push(OP_HEADER);
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        bytes.extend_from_slice(MCAP_MAGIC);
        assert!(matches!(read_records(&bytes), Err(EpisodeError::CorruptFile(_))));
    }
}
