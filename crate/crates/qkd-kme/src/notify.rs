//! Inter-KME activation delivery.
//!
//! When a master SAE reserves a key, its KME must tell the slave SAE's KME
//! which key was chosen and for which SAE pairing — synchronously, before the
//! master SAE gets its response. The [`ActivationNotifier`] trait isolates
//! that side effect so service logic can be exercised without a network.

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use http_body_util::{BodyExt, Full};
use hyper::body::Bytes;
use hyper::Request;
use hyper_util::rt::TokioIo;
use rustls::pki_types::ServerName;
use thiserror::Error;
use tokio::net::TcpStream;
use tokio_rustls::TlsConnector;

use crate::api::ActivationMsg;
use crate::config::PeerConfig;

/// Why an activation never reached (or was refused by) the peer KME.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NotifyFailure {
    #[error("peer unreachable: {0}")]
    Unreachable(String),
    #[error("peer answered {status}: {reason}")]
    Rejected { status: u16, reason: String },
    #[error("peer did not answer within {0:?}")]
    TimedOut(Duration),
}

/// Delivers activation messages to federated peer KMEs.
pub trait ActivationNotifier: Send + Sync + 'static {
    fn notify(
        &self,
        peer: &PeerConfig,
        activation: &ActivationMsg,
    ) -> impl Future<Output = Result<(), NotifyFailure>> + Send;
}

/// Production notifier: one fresh mutually-authenticated HTTPS connection per
/// activation, posted to the peer's KME-facing listener.
///
/// A fresh connection per message trades a little latency for simplicity:
/// there is no pool to poison, and a peer restart never strands this side on
/// a dead socket.
#[derive(Clone)]
pub struct HttpNotifier {
    tls: Arc<rustls::ClientConfig>,
    timeout: Duration,
}

impl HttpNotifier {
    pub fn new(tls: Arc<rustls::ClientConfig>, timeout: Duration) -> HttpNotifier {
        HttpNotifier { tls, timeout }
    }

    async fn post_activation(
        &self,
        peer: &PeerConfig,
        activation: &ActivationMsg,
    ) -> Result<(), NotifyFailure> {
        let unreachable = |detail: String| NotifyFailure::Unreachable(detail);

        let host = peer
            .address
            .rsplit_once(':')
            .map(|(host, _port)| host)
            .unwrap_or(peer.address.as_str());
        let server_name = ServerName::try_from(host.to_string())
            .map_err(|e| unreachable(format!("bad peer host {host:?}: {e}")))?;

        let tcp = TcpStream::connect(&peer.address)
            .await
            .map_err(|e| unreachable(format!("connect {}: {e}", peer.address)))?;
        let tls = TlsConnector::from(self.tls.clone())
            .connect(server_name, tcp)
            .await
            .map_err(|e| unreachable(format!("tls handshake with {}: {e}", peer.address)))?;

        let (mut sender, conn) = hyper::client::conn::http1::handshake(TokioIo::new(tls))
            .await
            .map_err(|e| unreachable(format!("http handshake: {e}")))?;
        tokio::spawn(async move {
            let _ = conn.await;
        });

        let body = serde_json::to_vec(activation).expect("activation serializes");
        let request = Request::post("/api/v1/internal/activate")
            .header(hyper::header::HOST, host)
            .header(hyper::header::CONTENT_TYPE, "application/json")
            .body(Full::new(Bytes::from(body)))
            .expect("static request parts are valid");

        let response = sender
            .send_request(request)
            .await
            .map_err(|e| unreachable(format!("request failed: {e}")))?;
        let status = response.status().as_u16();
        if status == 200 {
            return Ok(());
        }
        let reason = match response.into_body().collect().await {
            Ok(collected) => String::from_utf8_lossy(&collected.to_bytes()).into_owned(),
            Err(_) => String::from("<unreadable body>"),
        };
        Err(NotifyFailure::Rejected { status, reason })
    }
}

impl ActivationNotifier for HttpNotifier {
    async fn notify(
        &self,
        peer: &PeerConfig,
        activation: &ActivationMsg,
    ) -> Result<(), NotifyFailure> {
        match tokio::time::timeout(self.timeout, self.post_activation(peer, activation)).await {
            Ok(result) => result,
            Err(_) => Err(NotifyFailure::TimedOut(self.timeout)),
        }
    }
}
