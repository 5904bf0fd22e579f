//! DNS-SD announcement of a station, and a UDP beacon carrying the same payload for
//! networks that filter multicast DNS.

use std::collections::BTreeMap;
use std::net::{IpAddr, Ipv4Addr, SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use mdns_sd::{IfKind, ServiceDaemon, ServiceEvent, ServiceInfo};
use serde::{Deserialize, Serialize};

use crate::TransportError;

pub const SERVICE_TYPE: &str = "_feasicap._tcp.local.";
const BEACON_MAGIC: &[u8; 4] = b"FCBN";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceAnnouncement {
    pub service_name: String,
    pub instance_id: String,
    pub host: IpAddr,
    pub stream_port: u16,
    pub http_port: u16,
    pub protocol_version: u16,
}

impl ServiceAnnouncement {
    pub fn validate(&self) -> Result<(), TransportError> {
        if self.stream_port == 0 || self.http_port == 0 {
            return Err(TransportError::Discovery("announced ports must be bound".into()));
        }
        if self.protocol_version != crate::stream::PROTOCOL_VERSION {
            return Err(TransportError::Discovery(format!("protocol version {} is not ours", self.protocol_version)));
        }
        if self.instance_id.is_empty() || self.instance_id.contains('.') {
            return Err(TransportError::Discovery("instance id must be a non-empty label without dots".into()));
        }
        Ok(())
    }
}

fn daemon(loopback: bool) -> Result<ServiceDaemon, TransportError> {
    let d = ServiceDaemon::new().map_err(|e| TransportError::NoNetwork(e.to_string()))?;
    if loopback {
        d.enable_interface(IfKind::LoopbackV4).map_err(|e| TransportError::Discovery(e.to_string()))?;
    }
    Ok(d)
}

/// A registered DNS-SD instance; unregisters on drop.
pub struct Announcer {
    daemon: ServiceDaemon,
    fullname: String,
}

impl Announcer {
    /// Registers `ann` under [`SERVICE_TYPE`] with TXT keys `proto`, `http` and `id`.
    pub fn announce(ann: &ServiceAnnouncement) -> Result<Self, TransportError> {
        ann.validate()?;
        let daemon = daemon(ann.host.is_loopback())?;
        let props = [
            ("proto", ann.protocol_version.to_string()),
            ("http", ann.http_port.to_string()),
            ("id", ann.instance_id.clone()),
        ];
        let host = format!("{}.local.", ann.instance_id);
        let info = ServiceInfo::new(SERVICE_TYPE, &ann.instance_id, &host, ann.host, ann.stream_port, &props[..])
            .map_err(|e| TransportError::Discovery(e.to_string()))?;
        let fullname = info.get_fullname().to_string();
        daemon.register(info).map_err(|e| TransportError::Discovery(e.to_string()))?;
        Ok(Announcer { daemon, fullname })
    }
}

impl Drop for Announcer {
    fn drop(&mut self) {
        if let Ok(rx) = self.daemon.unregister(&self.fullname) {
            let _ = rx.recv_timeout(Duration::from_millis(500));
        }
        let _ = self.daemon.shutdown();
    }
}

/// Collects resolved instances until `timeout` elapses. `loopback` also listens on 127/8.
pub fn browse(timeout: Duration, loopback: bool) -> Result<Vec<ServiceAnnouncement>, TransportError> {
    let deadline = Instant::now() + timeout;
    let daemon = daemon(loopback)?;
    let rx = daemon.browse(SERVICE_TYPE).map_err(|e| TransportError::Discovery(e.to_string()))?;
    let mut found = BTreeMap::new();
    while let Some(left) = deadline.checked_duration_since(Instant::now()) {
        match rx.recv_timeout(left) {
            Ok(ServiceEvent::ServiceResolved(info)) => {
                if let Some(a) = from_info(&info) {
                    found.insert(a.instance_id.clone(), a);
                }
            }
            Ok(_) => {}
            Err(_) => break,
        }
    }
    let _ = daemon.stop_browse(SERVICE_TYPE);
    let _ = daemon.shutdown();
    Ok(found.into_values().collect())
}

fn from_info(info: &ServiceInfo) -> Option<ServiceAnnouncement> {
    let prop = |k: &str| info.get_property_val_str(k);
    let host = info.get_addresses().iter().next().copied()?;
    let instance_id = match prop("id") {
        Some(id) => id.to_string(),
        None => info.get_fullname().strip_suffix(&format!(".{SERVICE_TYPE}"))?.to_string(),
    };
    Some(ServiceAnnouncement {
        service_name: SERVICE_TYPE.trim_end_matches('.').to_string(),
        instance_id,
        host,
        stream_port: info.get_port(),
        http_port: prop("http")?.parse().ok()?,
        protocol_version: prop("proto")?.parse().ok()?,
    })
}

/// Periodic UDP datagrams `FCBN` + announcement JSON.
pub struct Beacon {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Beacon {
    /// Sends to `target` every `interval`; use the broadcast address on a LAN.
    pub fn start(ann: &ServiceAnnouncement, target: SocketAddr, interval: Duration) -> Result<Self, TransportError> {
        ann.validate()?;
        let bind = if target.ip().is_loopback() { Ipv4Addr::LOCALHOST } else { Ipv4Addr::UNSPECIFIED };
        let sock = UdpSocket::bind((bind, 0)).map_err(|e| TransportError::NoNetwork(e.to_string()))?;
        sock.set_broadcast(true)?;
        let mut payload = BEACON_MAGIC.to_vec();
        payload.extend(serde_json::to_vec(ann).expect("announcement serializes"));
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = std::thread::Builder::new().name("feasicap-beacon".into()).spawn(move || {
            while !flag.load(Ordering::Relaxed) {
                if let Err(e) = sock.send_to(&payload, target) {
                    tracing::debug!("beacon send failed: {e}");
                }
                std::thread::sleep(interval);
            }
        })?;
        Ok(Beacon { stop, thread: Some(thread) })
    }
}

impl Drop for Beacon {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Listens on `port` for beacons until `timeout`, one entry per instance id.
pub fn listen_beacons(bind: IpAddr, port: u16, timeout: Duration) -> Result<Vec<ServiceAnnouncement>, TransportError> {
    let sock = UdpSocket::bind((bind, port)).map_err(|e| TransportError::from_bind(e, port))?;
    let deadline = Instant::now() + timeout;
    let mut found = BTreeMap::new();
    let mut buf = [0u8; 2048];
    while let Some(left) = deadline.checked_duration_since(Instant::now()) {
        sock.set_read_timeout(Some(left.max(Duration::from_millis(1))))?;
        let Ok((n, _)) = sock.recv_from(&mut buf) else { continue };
        if n > 4 && &buf[..4] == BEACON_MAGIC {
            if let Ok(a) = serde_json::from_slice::<ServiceAnnouncement>(&buf[4..n]) {
                found.insert(a.instance_id.clone(), a);
            }
        }
    }
    Ok(found.into_values().collect())
}
