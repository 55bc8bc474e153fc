//! Client library a TLS endpoint (SAE) uses to talk to its local KME.
//!
//! A [`KmeSession`] holds the KME's address, the endpoint's TLS credential,
//! and the trust anchor, and offers the three operations a handshake needs:
//! learn its own SAE id, reserve a fresh key toward a slave SAE, and fetch a
//! key by identifier. It also implements [`tls_qkd::KmeAccess`], so a session
//! plugs directly into the handshake drivers.
//!
//! Calls are blocking with a configurable timeout (default five seconds — a
//! handshake's key fetch normally completes in milliseconds, so the timeout
//! only bounds pathological stalls). The library never retries: a key
//! request reserves material on the KME, so retrying is a policy decision
//! that belongs to the caller.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use log::debug;
use qkd_keystore::{KeyMaterial, KeyUuid, SaeId, KEY_SIZE_BITS};
use serde::Deserialize;
use thiserror::Error;
use tls_qkd::{KmeAccess, KmeFailure, KmeReply, KmeRequest};
use ureq::tls::{ClientCert, PemItem, PrivateKey, RootCerts, TlsConfig};
use ureq::Agent;

/// Problems assembling a session from its credential material, detected
/// before any network traffic.
#[derive(Debug, Error)]
#[error("invalid KME session credentials: {0}")]
pub struct CredentialError(String);

/// Everything needed to open a session with a KME.
#[derive(Clone)]
pub struct SessionConfig {
    /// `host:port` of the KME's SAE-facing listener.
    pub endpoint: String,
    /// PEM bundle of CA certificates anchoring the KME's server certificate.
    pub ca_pem: String,
    /// This endpoint's client certificate (PEM), identifying it to the KME.
    pub cert_pem: String,
    /// Private key (PEM) for the client certificate.
    pub key_pem: String,
    /// Per-request timeout.
    pub timeout: Duration,
}

impl SessionConfig {
    /// Config with the default five-second timeout.
    pub fn new(
        endpoint: impl Into<String>,
        ca_pem: impl Into<String>,
        cert_pem: impl Into<String>,
        key_pem: impl Into<String>,
    ) -> SessionConfig {
        SessionConfig {
            endpoint: endpoint.into(),
            ca_pem: ca_pem.into(),
            cert_pem: cert_pem.into(),
            key_pem: key_pem.into(),
            timeout: Duration::from_secs(5),
        }
    }
}

/// Key size every container entry must decode to.
const KEY_SIZE_BYTES: usize = KEY_SIZE_BITS / 8;

/// A blocking session with one KME.
///
/// The cached SAE id is immutable once fetched. A session performs one
/// request at a time (methods take `&mut self`); independent sessions are
/// unrelated and may run concurrently.
pub struct KmeSession {
    agent: Agent,
    endpoint: String,
    own_sae_id: Option<SaeId>,
    requests_sent: u64,
}

impl std::fmt::Debug for KmeSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KmeSession")
            .field("endpoint", &self.endpoint)
            .field("own_sae_id", &self.own_sae_id)
            .field("requests_sent", &self.requests_sent)
            .finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct WireKeyContainer {
    keys: Vec<WireKeyEntry>,
}

#[derive(Deserialize)]
struct WireKeyEntry {
    #[serde(rename = "key_ID")]
    key_id: String,
    key: String,
}

/// Pool state for the link serving a given slave SAE, as reported by the
/// KME's status route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct LinkStatus {
    #[serde(rename = "source_KME_ID")]
    pub source_kme_id: i64,
    #[serde(rename = "target_KME_ID")]
    pub target_kme_id: i64,
    pub key_size: u32,
    pub stored_key_count: usize,
    pub max_keys_per_request: usize,
}

enum Method {
    Get,
    Post,
}

impl KmeSession {
    /// Build a session. Parses the credential PEMs eagerly so a bad
    /// deployment fails at startup rather than inside a handshake.
    pub fn new(config: SessionConfig) -> Result<KmeSession, CredentialError> {
        let bad = |what: &str, detail: String| CredentialError(format!("{what}: {detail}"));

        let client_chain = pem_certs(config.cert_pem.as_bytes())
            .map_err(|e| bad("client certificate", e))?;
        if client_chain.is_empty() {
            return Err(bad("client certificate", "no certificate in PEM".into()));
        }
        let key = PrivateKey::from_pem(config.key_pem.as_bytes())
            .map_err(|e| bad("private key", e.to_string()))?;
        let roots = pem_certs(config.ca_pem.as_bytes()).map_err(|e| bad("CA bundle", e))?;
        if roots.is_empty() {
            return Err(bad("CA bundle", "no certificate in PEM".into()));
        }

        let tls = TlsConfig::builder()
            .client_cert(Some(ClientCert::new_with_certs(&client_chain, key)))
            .root_certs(RootCerts::new_with_certs(&roots))
            .build();
        let agent = Agent::config_builder()
            .tls_config(tls)
            .timeout_global(Some(config.timeout))
            // Non-2xx answers are meaningful (exhausted pool, consumed key,
            // ...) and are mapped per route, not treated as transport faults.
            .http_status_as_error(false)
            .build()
            .new_agent();

        Ok(KmeSession {
            agent,
            endpoint: config.endpoint,
            own_sae_id: None,
            requests_sent: 0,
        })
    }

    /// Number of HTTP requests this session has sent. Lets callers verify
    /// the caching contract (a cached answer sends nothing).
    pub fn requests_sent(&self) -> u64 {
        self.requests_sent
    }

    /// Ask the KME which SAE id this session's certificate is registered as.
    /// The first answer is cached for the session's lifetime.
    pub fn fetch_own_sae_id(&mut self) -> Result<SaeId, KmeFailure> {
        if let Some(id) = self.own_sae_id {
            return Ok(id);
        }
        let (status, body) = self.request(Method::Get, "/api/v1/sae/info/me")?;
        match status {
            200 => {
                let id = body
                    .get("SAE_ID")
                    .and_then(serde_json::Value::as_i64)
                    .ok_or_else(|| protocol("sae info response lacks an integer SAE_ID", &body))?;
                self.own_sae_id = Some(id);
                Ok(id)
            }
            401 => Err(KmeFailure::NotRegistered),
            other => Err(unexpected_status(other, &body)),
        }
    }

    /// Reserve a fresh key for a session with `slave_sae_id`. Returns the
    /// key's identifier (to be sent to the peer SAE) and its material.
    pub fn request_key(
        &mut self,
        slave_sae_id: SaeId,
    ) -> Result<(KeyUuid, KeyMaterial), KmeFailure> {
        let path = format!("/api/v1/keys/{slave_sae_id}/enc_keys");
        let (status, body) = self.request(Method::Post, &path)?;
        match status {
            200 => {
                let (uuid, material) = parse_container(&body)?;
                debug!("reserved key {uuid} for slave SAE {slave_sae_id}");
                Ok((uuid, material))
            }
            401 => Err(KmeFailure::NotRegistered),
            503 => Err(KmeFailure::PoolExhausted),
            other => Err(unexpected_status(other, &body)),
        }
    }

    /// Retrieve the key `key_uuid` that `master_sae_id` reserved for this
    /// endpoint. Each key can be retrieved exactly once.
    pub fn request_key_by_id(
        &mut self,
        master_sae_id: SaeId,
        key_uuid: &KeyUuid,
    ) -> Result<KeyMaterial, KmeFailure> {
        let path = format!("/api/v1/keys/{master_sae_id}/dec_keys?key_ID={key_uuid}");
        let (status, body) = self.request(Method::Get, &path)?;
        match status {
            200 => {
                let (uuid, material) = parse_container(&body)?;
                if uuid != *key_uuid {
                    return Err(protocol(
                        &format!("KME answered with key {uuid} instead of {key_uuid}"),
                        &body,
                    ));
                }
                debug!("retrieved key {key_uuid} reserved by master SAE {master_sae_id}");
                Ok(material)
            }
            404 => Err(KmeFailure::KeyNotFound),
            401 => Err(KmeFailure::Unauthorized),
            410 => Err(KmeFailure::AlreadyConsumed),
            other => Err(unexpected_status(other, &body)),
        }
    }

    /// Pool state for the link that serves `slave_sae_id`.
    pub fn link_status(&mut self, slave_sae_id: SaeId) -> Result<LinkStatus, KmeFailure> {
        let path = format!("/api/v1/keys/{slave_sae_id}/status");
        let (status, body) = self.request(Method::Get, &path)?;
        match status {
            200 => serde_json::from_value(body.clone())
                .map_err(|e| protocol(&format!("status response: {e}"), &body)),
            401 => Err(KmeFailure::NotRegistered),
            other => Err(unexpected_status(other, &body)),
        }
    }

    /// One HTTP round trip. Transport-level failures (refused connection,
    /// TLS failure, timeout) map to [`KmeFailure::Unreachable`]; the status
    /// and parsed JSON body are returned for the caller to interpret.
    fn request(
        &mut self,
        method: Method,
        path: &str,
    ) -> Result<(u16, serde_json::Value), KmeFailure> {
        let url = format!("https://{}{}", self.endpoint, path);
        self.requests_sent += 1;
        let result = match method {
            Method::Get => self.agent.get(&url).call(),
            Method::Post => self.agent.post(&url).send_empty(),
        };
        let mut response = result.map_err(|e| KmeFailure::Unreachable(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| KmeFailure::Unreachable(format!("reading response body: {e}")))?;
        let body = serde_json::from_str(&text)
            .map_err(|_| KmeFailure::Protocol(format!("KME answered non-JSON body {text:?}")))?;
        Ok((status, body))
    }
}

/// Sessions satisfy the handshake machines' KME dependency directly.
impl KmeAccess for KmeSession {
    fn perform(&mut self, request: &KmeRequest) -> KmeReply {
        let result = match request {
            KmeRequest::OwnSaeId => self.fetch_own_sae_id().map(KmeReply::OwnSaeId),
            KmeRequest::NewKey { slave_sae_id } => self
                .request_key(*slave_sae_id)
                .map(|(key_uuid, material)| KmeReply::NewKey { key_uuid, material }),
            KmeRequest::KeyById {
                master_sae_id,
                key_uuid,
            } => self
                .request_key_by_id(*master_sae_id, key_uuid)
                .map(KmeReply::KeyMaterial),
        };
        result.unwrap_or_else(KmeReply::Failed)
    }
}

fn pem_certs(pem: &[u8]) -> Result<Vec<ureq::tls::Certificate<'static>>, String> {
    let mut certs = Vec::new();
    for item in ureq::tls::parse_pem(pem) {
        match item.map_err(|e| e.to_string())? {
            PemItem::Certificate(cert) => certs.push(cert),
            _ => continue,
        }
    }
    Ok(certs)
}

fn protocol(message: &str, body: &serde_json::Value) -> KmeFailure {
    KmeFailure::Protocol(format!("{message} (body: {body})"))
}

fn unexpected_status(status: u16, body: &serde_json::Value) -> KmeFailure {
    let reason = body
        .get("reason")
        .and_then(serde_json::Value::as_str)
        .unwrap_or("<no reason>");
    KmeFailure::Protocol(format!("KME answered unexpected status {status}: {reason}"))
}

/// Validate and decode a one-key container: exactly the shape the KME emits,
/// with a parseable UUID and a key that decodes to exactly 32 bytes.
fn parse_container(body: &serde_json::Value) -> Result<(KeyUuid, KeyMaterial), KmeFailure> {
    let container: WireKeyContainer = serde_json::from_value(body.clone())
        .map_err(|e| protocol(&format!("malformed key container: {e}"), body))?;
    let entry = container
        .keys
        .first()
        .ok_or_else(|| protocol("key container holds no keys", body))?;
    let uuid: KeyUuid = entry
        .key_id
        .parse()
        .map_err(|e| protocol(&format!("key_ID is not a UUID: {e}"), body))?;
    let decoded = BASE64
        .decode(&entry.key)
        .map_err(|e| protocol(&format!("key is not valid base64: {e}"), body))?;
    let material: KeyMaterial = decoded.try_into().map_err(|bytes: Vec<u8>| {
        KmeFailure::Protocol(format!(
            "key decodes to {} bytes, expected {KEY_SIZE_BYTES}",
            bytes.len()
        ))
    })?;
    Ok((uuid, material))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn container_json(key_id: &str, key_bytes: &[u8]) -> serde_json::Value {
        json!({ "keys": [{ "key_ID": key_id, "key": BASE64.encode(key_bytes) }] })
    }

    #[test]
    fn container_round_trips() {
        let material = [0x5au8; 32];
        let uuid = qkd_keystore::derive_key_uuid(&material);
        let (parsed_uuid, parsed_material) =
            parse_container(&container_json(&uuid.to_string(), &material)).unwrap();
        assert_eq!(parsed_uuid, uuid);
        assert_eq!(parsed_material, material);
    }

    #[test]
    fn short_key_is_a_protocol_error() {
        let err = parse_container(&container_json(
            "70d0fb51-34d9-5e04-a489-really-not",
            &[0u8; 31],
        ))
        .unwrap_err();
        assert!(matches!(err, KmeFailure::Protocol(_)), "{err:?}");

        let uuid = qkd_keystore::derive_key_uuid(&[1u8; 32]).to_string();
        let err = parse_container(&container_json(&uuid, &[0u8; 31])).unwrap_err();
        match err {
            KmeFailure::Protocol(message) => {
                assert!(message.contains("31 bytes"), "{message}");
            }
            other => panic!("expected Protocol, got {other:?}"),
        }
    }

    #[test]
    fn empty_and_malformed_containers_are_protocol_errors() {
        for body in [
            json!({ "keys": [] }),
            json!({ "key_ID": "x" }),
            json!(null),
            json!({ "keys": [{ "key_ID": "not-a-uuid", "key": "QQ==" }] }),
            json!({ "keys": [{ "key_ID": "70d0fb51-34d9-5e04-a489-000000000000", "key": "@@" }] }),
        ] {
            let err = parse_container(&body).unwrap_err();
            assert!(matches!(err, KmeFailure::Protocol(_)), "body {body}: {err:?}");
        }
    }

    #[test]
    fn bad_credentials_fail_at_construction() {
        let err = KmeSession::new(SessionConfig::new(
            "127.0.0.1:1",
            "not a pem",
            "not a pem",
            "not a pem",
        ))
        .unwrap_err();
        assert!(err.to_string().contains("credentials"), "{err}");
    }
}
