//! TLS listeners and HTTP plumbing around the core service.
//!
//! A running KME owns three sockets — SAE-facing, KME-facing, admin-facing —
//! all presenting the same server certificate and all requesting (but not
//! requiring) a client certificate at the TLS layer. Authorization happens
//! above TLS: a connection without a usable client certificate is accepted
//! and then answered 401 by the router, which gives scanners a uniform
//! response instead of a TLS alert that would confirm the service's nature.

use std::convert::Infallible;
use std::fs::File;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use http_body_util::BodyExt;
use http_body_util::Full;
use hyper::body::{Bytes, Incoming};
use hyper::service::service_fn;
use hyper::{Request, Response};
use hyper_util::rt::TokioIo;
use log::{debug, info, warn};
use qkd_keystore::{KeyStore, KeyStoreError};
use rustls::pki_types::{CertificateDer, PrivateKeyDer};
use rustls::server::WebPkiClientVerifier;
use rustls::{ClientConfig, RootCertStore, ServerConfig};
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::watch;
use tokio::task::JoinHandle;
use tokio_rustls::server::TlsStream;
use tokio_rustls::TlsAcceptor;

use crate::config::{KmeConfig, TlsConfig};
use crate::core::KmeCore;
use crate::http::{handle, ApiResponse, ListenerRole};
use crate::notify::HttpNotifier;
use crate::serial::serial_from_der;

/// Failures while bringing a KME service up.
#[derive(Debug, Error)]
pub enum ServeError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("tls error: {0}")]
    Tls(#[from] rustls::Error),
    #[error("client verifier: {0}")]
    Verifier(String),
    #[error("no private key found in {0}")]
    NoPrivateKey(String),
    #[error("key store error: {0}")]
    Store(#[from] KeyStoreError),
}

/// Handle to a running service: the three bound addresses (useful when the
/// configuration asked for port 0) and a way to stop accepting.
pub struct RunningKme {
    pub sae_addr: SocketAddr,
    pub kme_addr: SocketAddr,
    pub admin_addr: SocketAddr,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl RunningKme {
    /// Stop accepting new connections and wait for the accept loops to exit.
    /// Connections already being served run to completion on their own tasks.
    pub async fn shutdown(mut self) {
        let _ = self.shutdown.send(true);
        for task in self.tasks.drain(..) {
            let _ = task.await;
        }
    }

    /// Wait until the accept loops stop on their own (they normally never
    /// do); used by the CLI to park the main task while serving.
    pub async fn wait(mut self) {
        for task in self.tasks.drain(..) {
            let _ = task.await;
        }
    }
}

/// Ingest material, load TLS identities, bind the three listeners, and start
/// serving. Returns once all sockets are bound and accepting.
pub async fn serve(config: KmeConfig) -> Result<RunningKme, ServeError> {
    let store = KeyStore::new();
    let report = store.ingest_dir(&config.material.dir)?;
    info!(
        "ingested {} keys across {} peer links from {}",
        report.total_new_keys(),
        report.peers.len(),
        config.material.dir.display()
    );
    if let Some(journal) = &config.material.journal {
        let replayed = store.attach_journal(journal)?;
        info!("replayed {replayed} journal entries from {}", journal.display());
    }

    let (server_tls, client_tls) = load_tls(&config.tls)?;
    let notifier = HttpNotifier::new(client_tls, Duration::from_millis(config.notify_timeout_ms));
    let core = Arc::new(KmeCore::new(&config, store, notifier));
    let acceptor = TlsAcceptor::from(server_tls);

    let sae_listener = TcpListener::bind(config.listen.sae).await?;
    let kme_listener = TcpListener::bind(config.listen.kme).await?;
    let admin_listener = TcpListener::bind(config.listen.admin).await?;
    let sae_addr = sae_listener.local_addr()?;
    let kme_addr = kme_listener.local_addr()?;
    let admin_addr = admin_listener.local_addr()?;
    info!(
        "KME {} listening: sae {sae_addr}, kme {kme_addr}, admin {admin_addr}",
        config.kme_id
    );

    let (shutdown, _) = watch::channel(false);
    let tasks = vec![
        (sae_listener, ListenerRole::Sae),
        (kme_listener, ListenerRole::Kme),
        (admin_listener, ListenerRole::Admin),
    ]
    .into_iter()
    .map(|(listener, role)| {
        tokio::spawn(accept_loop(
            listener,
            role,
            acceptor.clone(),
            core.clone(),
            shutdown.subscribe(),
        ))
    })
    .collect();

    Ok(RunningKme {
        sae_addr,
        kme_addr,
        admin_addr,
        shutdown,
        tasks,
    })
}

async fn accept_loop(
    listener: TcpListener,
    role: ListenerRole,
    acceptor: TlsAcceptor,
    core: Arc<KmeCore<HttpNotifier>>,
    mut shutdown: watch::Receiver<bool>,
) {
    loop {
        tokio::select! {
            _ = shutdown.changed() => break,
            accepted = listener.accept() => match accepted {
                Ok((tcp, remote)) => {
                    tokio::spawn(serve_connection(acceptor.clone(), tcp, remote, role, core.clone()));
                }
                Err(e) => {
                    warn!("accept failed on {role:?} listener: {e}");
                }
            },
        }
    }
}

async fn serve_connection(
    acceptor: TlsAcceptor,
    tcp: TcpStream,
    remote: SocketAddr,
    role: ListenerRole,
    core: Arc<KmeCore<HttpNotifier>>,
) {
    let tls = match acceptor.accept(tcp).await {
        Ok(tls) => tls,
        Err(e) => {
            debug!("tls handshake with {remote} failed: {e}");
            return;
        }
    };
    let serial = peer_serial(&tls);
    debug!(
        "{role:?} connection from {remote} as {} (serial {serial:?})",
        serial.map_or("anonymous", |s| core.describe_serial(s)),
    );

    let service = service_fn(move |request: Request<Incoming>| {
        let core = core.clone();
        async move { Ok::<_, Infallible>(respond(&core, role, serial, request).await) }
    });
    if let Err(e) = hyper::server::conn::http1::Builder::new()
        .serve_connection(TokioIo::new(tls), service)
        .await
    {
        debug!("connection with {remote} ended: {e}");
    }
}

/// Serial of the presented client certificate, if one was presented and it
/// parses. An unparseable certificate is treated the same as none: the
/// router will answer 401.
fn peer_serial(tls: &TlsStream<TcpStream>) -> Option<u64> {
    let (_, connection) = tls.get_ref();
    let leaf = connection.peer_certificates()?.first()?;
    match serial_from_der(leaf.as_ref()) {
        Ok(serial) => Some(serial),
        Err(e) => {
            warn!("client presented unusable certificate: {e}");
            None
        }
    }
}

async fn respond(
    core: &KmeCore<HttpNotifier>,
    role: ListenerRole,
    serial: Option<u64>,
    request: Request<Incoming>,
) -> Response<Full<Bytes>> {
    let method = request.method().as_str().to_string();
    let path = request.uri().path().to_string();
    let query = request.uri().query().map(str::to_string);
    let body = match request.into_body().collect().await {
        Ok(collected) => collected.to_bytes(),
        Err(e) => {
            return render(ApiResponse {
                status: 400,
                body: serde_json::json!({ "reason": format!("unreadable body: {e}") }),
            })
        }
    };
    render(handle(core, role, &method, &path, query.as_deref(), serial, &body).await)
}

fn render(api: ApiResponse) -> Response<Full<Bytes>> {
    let body = serde_json::to_vec(&api.body).expect("response body serializes");
    Response::builder()
        .status(api.status)
        .header(hyper::header::CONTENT_TYPE, "application/json")
        .body(Full::new(Bytes::from(body)))
        .expect("static response parts are valid")
}

fn read_certs(path: &Path) -> Result<Vec<CertificateDer<'static>>, ServeError> {
    let mut reader = BufReader::new(File::open(path)?);
    let certs: Vec<CertificateDer<'static>> =
        rustls_pemfile::certs(&mut reader).collect::<Result<_, _>>()?;
    Ok(certs)
}

fn read_key(path: &Path) -> Result<PrivateKeyDer<'static>, ServeError> {
    let mut reader = BufReader::new(File::open(path)?);
    rustls_pemfile::private_key(&mut reader)?
        .ok_or_else(|| ServeError::NoPrivateKey(path.display().to_string()))
}

/// Build the server-side TLS configuration (shared by all three listeners)
/// and the client-side configuration used for outbound activation calls.
fn load_tls(tls: &TlsConfig) -> Result<(Arc<ServerConfig>, Arc<ClientConfig>), ServeError> {
    let certs = read_certs(&tls.cert)?;
    let key = read_key(&tls.key)?;
    let mut roots = RootCertStore::empty();
    for ca in read_certs(&tls.ca)? {
        roots.add(ca)?;
    }

    let verifier = WebPkiClientVerifier::builder(Arc::new(roots.clone()))
        .allow_unauthenticated()
        .build()
        .map_err(|e| ServeError::Verifier(e.to_string()))?;
    let server = ServerConfig::builder()
        .with_client_cert_verifier(verifier)
        .with_single_cert(certs.clone(), key.clone_key())?;
    let client = ClientConfig::builder()
        .with_root_certificates(roots)
        .with_client_auth_cert(certs, key)?;
    Ok((Arc::new(server), Arc::new(client)))
}
