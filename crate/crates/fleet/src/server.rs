//! One TCP port serves both vehicles and consoles. Vehicle frames always begin
//! with a zero byte (payloads are capped well below 16 MiB), which no HTTP
//! request line does, so the first byte of each connection picks the handler.

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use reefseed::fleetlink::{encode_message, try_decode_frame, CommandMessage, Message, DEFAULT_PORT};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, watch};
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;
use tracing::{debug, info, warn};

use crate::feed::{ConsoleEnvelope, ConsoleRequest, FeedMessage};
use crate::hub::{Hub, HubConfig, HubHandle, LinkId};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub hub: HubConfig,
    /// Directory served at `/` for the console bundle.
    pub static_dir: Option<PathBuf>,
    /// How long a new connection may stay silent before it is dropped.
    pub first_byte_timeout: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([0, 0, 0, 0], DEFAULT_PORT)),
            hub: HubConfig::default(),
            static_dir: None,
            first_byte_timeout: Duration::from_secs(10),
        }
    }
}

/// A running service. Dropping it does not stop it; call [`FleetServer::shutdown`].
pub struct FleetServer {
    local_addr: SocketAddr,
    hub: HubHandle,
    stop: watch::Sender<bool>,
    accept: JoinHandle<()>,
    http: JoinHandle<io::Result<()>>,
}

impl FleetServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn hub(&self) -> &HubHandle {
        &self.hub
    }

    /// Closes the listener and every open connection.
    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        self.accept.abort();
        let _ = self.http.await;
    }
}

/// Binds the port and starts serving.
pub async fn serve(config: ServerConfig) -> io::Result<FleetServer> {
    let listener = TcpListener::bind(config.bind).await?;
    let local_addr = listener.local_addr()?;
    let hub = Hub::spawn(config.hub.clone());
    let (stop, stop_rx) = watch::channel(false);
    let (http_tx, http_rx) = mpsc::channel(64);

    let mut app =
        Router::new().route("/feed", get(feed_upgrade)).route("/api/vehicles", get(vehicles)).with_state(hub.clone());
    if let Some(dir) = &config.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    let mut http_stop = stop_rx.clone();
    let http = tokio::spawn(async move {
        axum::serve(ChannelListener { rx: http_rx, local_addr }, app)
            .with_graceful_shutdown(async move {
                let _ = http_stop.wait_for(|s| *s).await;
            })
            .await
    });

    let accept = tokio::spawn(accept_loop(listener, hub.clone(), http_tx, stop_rx, config.first_byte_timeout));
    info!(%local_addr, "fleetlink listening");
    Ok(FleetServer { local_addr, hub, stop, accept, http })
}

async fn accept_loop(
    listener: TcpListener,
    hub: HubHandle,
    http: mpsc::Sender<(TcpStream, SocketAddr)>,
    stop: watch::Receiver<bool>,
    first_byte_timeout: Duration,
) {
    loop {
        let (stream, peer) = match listener.accept().await {
            Ok(c) => c,
            Err(e) => {
                warn!("accept failed: {e}");
                tokio::time::sleep(Duration::from_millis(50)).await;
                continue;
            }
        };
        let hub = hub.clone();
        let http = http.clone();
        let stop = stop.clone();
        tokio::spawn(async move {
            let mut first = [0u8; 1];
            match tokio::time::timeout(first_byte_timeout, stream.peek(&mut first)).await {
                Ok(Ok(1)) if first[0] == 0 => vehicle_link(stream, peer, hub, stop).await,
                Ok(Ok(1)) => {
                    let _ = http.send((stream, peer)).await;
                }
                _ => debug!(%peer, "connection closed before first byte"),
            }
        });
    }
}

struct ChannelListener {
    rx: mpsc::Receiver<(TcpStream, SocketAddr)>,
    local_addr: SocketAddr,
}

impl axum::serve::Listener for ChannelListener {
    type Io = TcpStream;
    type Addr = SocketAddr;

    async fn accept(&mut self) -> (Self::Io, Self::Addr) {
        match self.rx.recv().await {
            Some(conn) => conn,
            None => std::future::pending().await,
        }
    }

    fn local_addr(&self) -> io::Result<Self::Addr> {
        Ok(self.local_addr)
    }
}

#[derive(Debug, thiserror::Error)]
pub(crate) enum LinkError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Codec(#[from] reefseed::fleetlink::CodecError),
    #[error("{0}")]
    Protocol(String),
    #[error(transparent)]
    Hub(#[from] crate::hub::HubError),
}

/// Reads frames into `buf` until one decodes. `Ok(None)` on a clean close.
pub(crate) async fn read_frame(
    stream: &mut (impl AsyncReadExt + Unpin),
    buf: &mut Vec<u8>,
) -> Result<Option<Message>, LinkError> {
    loop {
        if let Some((msg, used)) = try_decode_frame(buf)? {
            buf.drain(..used);
            return Ok(Some(msg));
        }
        let mut chunk = [0u8; 4096];
        let n = stream.read(&mut chunk).await?;
        if n == 0 {
            return if buf.is_empty() {
                Ok(None)
            } else {
                Err(LinkError::Protocol("connection closed mid-frame".into()))
            };
        }
        buf.extend_from_slice(&chunk[..n]);
    }
}

async fn vehicle_link(mut stream: TcpStream, peer: SocketAddr, hub: HubHandle, mut stop: watch::Receiver<bool>) {
    let mut buf = Vec::new();
    let first = match read_frame(&mut stream, &mut buf).await {
        Ok(Some(Message::Telemetry(t))) => t,
        Ok(Some(Message::Command(_))) => {
            warn!(%peer, "vehicle link must open with telemetry");
            return;
        }
        Ok(None) => return,
        Err(e) => {
            warn!(%peer, "vehicle link rejected: {e}");
            return;
        }
    };
    let vehicle_id = first.vehicle_id.clone();
    let (tx, mut commands) = mpsc::channel::<CommandMessage>(32);
    let link = match hub.join(&vehicle_id, tx).await {
        Ok(link) => link,
        Err(e) => {
            warn!(%peer, vehicle = %vehicle_id, "registration refused: {e}");
            return;
        }
    };
    let _ = hub.telemetry(link, first).await;
    let result = link_loop(&mut stream, &mut buf, &hub, link, &vehicle_id, &mut commands, &mut stop).await;
    if let Err(e) = result {
        warn!(%peer, vehicle = %vehicle_id, "vehicle link closed: {e}");
    }
    hub.leave(&vehicle_id, link).await;
}

async fn link_loop(
    stream: &mut TcpStream,
    buf: &mut Vec<u8>,
    hub: &HubHandle,
    link: LinkId,
    vehicle_id: &str,
    commands: &mut mpsc::Receiver<CommandMessage>,
    stop: &mut watch::Receiver<bool>,
) -> Result<(), LinkError> {
    let (mut reader, mut writer) = stream.split();
    loop {
        tokio::select! {
            frame = read_frame(&mut reader, buf) => match frame? {
                Some(Message::Telemetry(t)) if t.vehicle_id == vehicle_id => hub.telemetry(link, t).await?,
                Some(Message::Telemetry(t)) => {
                    return Err(LinkError::Protocol(format!("telemetry for `{}` on link of `{vehicle_id}`", t.vehicle_id)))
                }
                Some(Message::Command(_)) => return Err(LinkError::Protocol("vehicles may not send commands".into())),
                None => return Ok(()),
            },
            cmd = commands.recv() => match cmd {
                Some(cmd) => writer.write_all(&encode_message(&Message::Command(cmd))?).await?,
                // superseded by a newer connection for the same vehicle
                None => return Ok(()),
            },
            _ = stopped(stop) => return Ok(()),
        }
    }
}

async fn vehicles(State(hub): State<HubHandle>) -> impl IntoResponse {
    match hub.snapshot().await {
        Ok(v) => Json(v).into_response(),
        Err(e) => (axum::http::StatusCode::SERVICE_UNAVAILABLE, e.to_string()).into_response(),
    }
}

async fn feed_upgrade(ws: WebSocketUpgrade, State(hub): State<HubHandle>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| console_session(socket, hub))
}

async fn send(socket: &mut WebSocket, msg: &FeedMessage) -> bool {
    socket.send(WsMessage::Text(msg.to_json().into())).await.is_ok()
}

async fn console_session(mut socket: WebSocket, hub: HubHandle) {
    let mut feed = hub.subscribe();
    match hub.snapshot().await {
        Ok(vehicles) => {
            if !send(&mut socket, &FeedMessage::Snapshot { vehicles }).await {
                return;
            }
        }
        Err(_) => return,
    }
    loop {
        tokio::select! {
            frame = feed.recv() => {
                let msg = match frame {
                    Ok(msg) => msg,
                    Err(broadcast::error::RecvError::Lagged(skipped)) => FeedMessage::Lagged { skipped },
                    Err(broadcast::error::RecvError::Closed) => return,
                };
                if !send(&mut socket, &msg).await {
                    return;
                }
            }
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(WsMessage::Text(t))) => t,
                    Some(Ok(WsMessage::Close(_))) | None | Some(Err(_)) => return,
                    Some(Ok(_)) => continue,
                };
                let reply = console_request(&hub, text.as_str()).await;
                if !send(&mut socket, &reply).await {
                    return;
                }
            }
        }
    }
}

async fn console_request(hub: &HubHandle, text: &str) -> FeedMessage {
    let env: ConsoleEnvelope = match serde_json::from_str(text) {
        Ok(env) => env,
        Err(e) => return FeedMessage::Reply { id: None, ok: false, error: Some(format!("bad request: {e}")) },
    };
    let id = env.id;
    let result = match env.request {
        ConsoleRequest::Command(cmd) => match Message::Command(cmd.clone()).validate() {
            Ok(()) => hub.command(cmd).await.map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        },
        ConsoleRequest::DispatchFormation { base, spec, start } => {
            hub.dispatch(base, spec, start).await.map(|_| ()).map_err(|e| e.to_string())
        }
        ConsoleRequest::Snapshot => {
            return match hub.snapshot().await {
                Ok(vehicles) => FeedMessage::Snapshot { vehicles },
                Err(e) => FeedMessage::Reply { id, ok: false, error: Some(e.to_string()) },
            }
        }
    };
    match result {
        Ok(()) => FeedMessage::Reply { id, ok: true, error: None },
        Err(e) => FeedMessage::Reply { id, ok: false, error: Some(e) },
    }
}

/// Resolves once the stop flag is set (or its sender is gone).
pub(crate) async fn stopped(stop: &mut watch::Receiver<bool>) {
    let _ = stop.wait_for(|s| *s).await;
}
