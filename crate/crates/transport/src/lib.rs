//! Network side of a feasicap station: DNS-SD announcement (plus a UDP beacon fallback),
//! the persistent frame stream, the HTTP control API, the server-push guidance feed and
//! the replay executor.
//!
//! The guidance session lives on one worker thread. Stream connections and HTTP handlers
//! talk to it only through its command queue; recording happens on a separate thread so
//! disk I/O never delays an acknowledgement.

mod discovery;
mod error;
mod http;
mod jobs;
mod server;
mod store;
pub mod stream;
mod worker;

pub use discovery::{browse, listen_beacons, Announcer, Beacon, ServiceAnnouncement, SERVICE_TYPE};
pub use error::TransportError;
pub use jobs::{JobStatus, ReplayJobView};
pub use server::{BeaconConfig, Server, ServerConfig, ServerHandle};
pub use store::{EpisodeStore, EpisodeSummary};
pub use stream::{Ack, StreamClient};
pub use worker::SessionStatus;
