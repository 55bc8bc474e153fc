//! Role-scoped request router.
//!
//! This layer is transport-free: the TLS listeners hand it a method, a path,
//! a query string, a body, and the caller's certificate serial (if any), and
//! get back a status code plus a JSON body. Keeping it free of socket types
//! lets the full routing and authorization matrix run as plain unit tests.
//!
//! Authentication comes **before** routing. A caller with no certificate, or
//! with a certificate serial no registry knows, receives 401 for every path —
//! valid or not — so an unauthenticated scanner cannot map the API surface.

use qkd_keystore::{KmeId, SaeId};
use serde_json::json;

use crate::api::{ActivationMsg, ErrorBody};
use crate::core::{ActivateOutcome, KmeCore};
use crate::error::ServiceError;
use crate::notify::ActivationNotifier;

/// Which listener a request arrived on. Routes exist per audience: an SAE
/// cannot reach the activation route even with a valid certificate, because
/// the SAE listener does not serve it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListenerRole {
    Sae,
    Kme,
    Admin,
}

/// A rendered response: HTTP status plus JSON body.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: serde_json::Value,
}

impl ApiResponse {
    fn ok(body: serde_json::Value) -> ApiResponse {
        ApiResponse { status: 200, body }
    }

    fn error(err: &ServiceError) -> ApiResponse {
        ApiResponse {
            status: err.status(),
            body: serde_json::to_value(ErrorBody {
                reason: err.reason(),
            })
            .expect("error body serializes"),
        }
    }
}

/// Dispatch one request.
pub async fn handle<N: ActivationNotifier>(
    core: &KmeCore<N>,
    role: ListenerRole,
    method: &str,
    path: &str,
    query: Option<&str>,
    caller_serial: Option<u64>,
    body: &[u8],
) -> ApiResponse {
    // Authentication gate. Nothing below runs for an unknown caller, so the
    // response never reveals whether a path exists.
    let serial = match caller_serial {
        None => {
            return ApiResponse {
                status: 401,
                body: json!({ "reason": "client certificate required" }),
            }
        }
        Some(serial) => serial,
    };
    if core.describe_serial(serial) == "unknown" {
        return ApiResponse {
            status: 401,
            body: json!({ "reason": "unknown client certificate" }),
        };
    }

    match route(core, role, method, path, query, serial, body).await {
        Ok(body) => ApiResponse::ok(body),
        Err(err) => ApiResponse::error(&err),
    }
}

async fn route<N: ActivationNotifier>(
    core: &KmeCore<N>,
    role: ListenerRole,
    method: &str,
    path: &str,
    query: Option<&str>,
    serial: u64,
    body: &[u8],
) -> Result<serde_json::Value, ServiceError> {
    let segments: Vec<&str> = path.split('/').filter(|s| !s.is_empty()).collect();

    match (role, segments.as_slice()) {
        (ListenerRole::Sae, ["api", "v1", "keys", slave, "enc_keys"]) => {
            require_method(method, &["POST", "GET"])?;
            let slave_sae_id = parse_sae_id(slave)?;
            let container = core.enc_keys(serial, slave_sae_id).await?;
            Ok(serde_json::to_value(container).expect("container serializes"))
        }
        (ListenerRole::Sae, ["api", "v1", "keys", master, "dec_keys"]) => {
            require_method(method, &["POST", "GET"])?;
            let master_sae_id = parse_sae_id(master)?;
            let key_id = query_param(query, "key_ID").ok_or_else(|| {
                ServiceError::Malformed("dec_keys requires a key_ID query parameter".into())
            })?;
            let container = core.dec_keys(serial, master_sae_id, &key_id)?;
            Ok(serde_json::to_value(container).expect("container serializes"))
        }
        (ListenerRole::Sae, ["api", "v1", "keys", slave, "status"]) => {
            require_method(method, &["GET"])?;
            let slave_sae_id = parse_sae_id(slave)?;
            let status = core.status(serial, slave_sae_id)?;
            Ok(serde_json::to_value(status).expect("status serializes"))
        }
        (ListenerRole::Sae, ["api", "v1", "sae", "info", "me"]) => {
            require_method(method, &["GET"])?;
            let info = core.sae_info_me(serial)?;
            Ok(serde_json::to_value(info).expect("info serializes"))
        }
        (ListenerRole::Kme, ["api", "v1", "internal", "activate"]) => {
            require_method(method, &["POST"])?;
            let msg: ActivationMsg = serde_json::from_slice(body)
                .map_err(|e| ServiceError::Malformed(format!("activation body: {e}")))?;
            let outcome = core.activate(serial, &msg)?;
            Ok(json!({
                "result": match outcome {
                    ActivateOutcome::Activated => "activated",
                    ActivateOutcome::AlreadyActive => "already-active",
                }
            }))
        }
        (ListenerRole::Admin, ["api", "v1", "admin", "entropy", peer]) => {
            require_method(method, &["GET"])?;
            let peer_kme_id: KmeId = peer
                .parse()
                .map_err(|_| ServiceError::Malformed("peer KME id must be an integer".into()))?;
            let report = core.entropy(serial, peer_kme_id)?;
            Ok(serde_json::to_value(report).expect("report serializes"))
        }
        _ => Err(ServiceError::UnknownRoute),
    }
}

fn require_method(method: &str, allowed: &[&str]) -> Result<(), ServiceError> {
    if allowed.contains(&method) {
        Ok(())
    } else {
        Err(ServiceError::MethodNotAllowed)
    }
}

fn parse_sae_id(segment: &str) -> Result<SaeId, ServiceError> {
    segment
        .parse()
        .map_err(|_| ServiceError::Malformed("SAE id must be a decimal integer".into()))
}

/// Minimal query-string lookup. Values in this API (UUIDs, decimal ids) never
/// need percent-decoding, so none is attempted.
fn query_param(query: Option<&str>, name: &str) -> Option<String> {
    query?
        .split('&')
        .filter_map(|pair| pair.split_once('='))
        .find(|(key, _)| *key == name)
        .map(|(_, value)| value.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_param_finds_key_id() {
        assert_eq!(
            query_param(Some("key_ID=abc-def&x=1"), "key_ID").as_deref(),
            Some("abc-def")
        );
        assert_eq!(query_param(Some("x=1"), "key_ID"), None);
        assert_eq!(query_param(None, "key_ID"), None);
    }
}
