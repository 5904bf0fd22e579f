#![allow(dead_code)]

use std::sync::Arc;
use std::time::{Duration, Instant};

use feasicap_core::guidance::TrackerFrame;
use feasicap_core::profiling::synthetic_trajectory;
use feasicap_core::recording::FramePacket;
use feasicap_core::robots::arm7;
use feasicap_transport::{Server, ServerConfig, ServerHandle, StreamClient};

pub fn server(dir: &std::path::Path, tweak: impl FnOnce(&mut ServerConfig)) -> ServerHandle {
    let mut cfg = ServerConfig::local(Arc::new(arm7()), dir);
    cfg.replay_time_scale = f64::INFINITY;
    tweak(&mut cfg);
    Server::start(cfg).expect("server starts")
}

/// Frames around the arm's ready pose with distinct images and real wall-clock stamps.
pub fn packets(n: usize) -> Vec<FramePacket> {
    let t0 = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap().as_secs_f64();
    synthetic_trajectory(&arm7(), n)
        .into_iter()
        .enumerate()
        .map(|(k, f)| {
            let frame = TrackerFrame { wall_clock: t0 + f.tracker_timestamp, image: vec![k as u8; k % 7], ..f };
            FramePacket::from_frame(&frame)
        })
        .collect()
}

pub fn wait_until(timeout: Duration, mut cond: impl FnMut() -> bool) -> bool {
    let end = Instant::now() + timeout;
    while Instant::now() < end {
        if cond() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    cond()
}

/// Streams every packet and closes; returns the acks.
pub fn stream_all(h: &ServerHandle, packets: &[FramePacket]) -> Vec<feasicap_transport::Ack> {
    let before = h.session_status().episodes_recorded;
    let mut c = StreamClient::connect(h.stream_addr()).unwrap();
    let acks = packets.iter().map(|p| c.send(p).unwrap()).collect();
    c.finish().unwrap();
    assert!(wait_until(Duration::from_secs(5), || {
        let s = h.session_status();
        !s.active && s.episodes_recorded > before
    }));
    acks
}

pub fn get(url: &str) -> reqwest::blocking::Response {
    reqwest::blocking::get(url).unwrap()
}

pub fn post(url: &str, body: &str) -> reqwest::blocking::Response {
    reqwest::blocking::Client::new()
        .post(url)
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()
        .unwrap()
}
