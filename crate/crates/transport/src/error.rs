use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("network unavailable: {0}")]
    NoNetwork(String),
    #[error("protocol version mismatch: ours {ours}, theirs {theirs}")]
    VersionMismatch { ours: u16, theirs: u16 },
    #[error("a stream session is already active")]
    Busy,
    #[error("corrupt packet stream: {0}")]
    PacketCorrupt(String),
    #[error("connection closed")]
    Closed,
    #[error("discovery: {0}")]
    Discovery(String),
    #[error("episode: {0}")]
    Episode(String),
    #[error("guidance: {0}")]
    Guidance(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TransportError {
    /// Maps a bind failure to [`TransportError::PortInUse`] where that is the cause.
    pub(crate) fn from_bind(e: std::io::Error, port: u16) -> Self {
        match e.kind() {
            std::io::ErrorKind::AddrInUse => TransportError::PortInUse(port),
            std::io::ErrorKind::AddrNotAvailable => TransportError::NoNetwork(e.to_string()),
            _ => TransportError::Io(e),
        }
    }
}
