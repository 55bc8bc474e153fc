//! Service-level error taxonomy and its mapping onto HTTP status codes.

use thiserror::Error;

/// Everything that can go wrong while answering an API request.
///
/// The variants are deliberately coarse: clients key their behaviour off the
/// HTTP status plus the `reason` string, so two failures that a caller must
/// treat differently get distinct variants, and nothing else does.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ServiceError {
    /// Caller presented no certificate, an unknown certificate, or a
    /// certificate that is not entitled to this operation.
    #[error("unauthorized")]
    Unauthorized,
    /// The path does not name a route on this listener.
    #[error("no such route")]
    UnknownRoute,
    /// Request method is not accepted on this route.
    #[error("method not allowed")]
    MethodNotAllowed,
    /// The request body or query string is syntactically unusable.
    #[error("malformed request: {0}")]
    Malformed(String),
    /// The named slave SAE is not served by any federated KME.
    #[error("no route to SAE {0}")]
    UnroutableSae(i64),
    /// The referenced key does not exist (or is not visible to the caller).
    #[error("unknown key")]
    KeyNotFound,
    /// The referenced key was already delivered once and is gone.
    #[error("key already consumed")]
    AlreadyConsumed,
    /// An activation replay disagreed with the recorded pairing.
    #[error("activation conflict")]
    ActivationConflict,
    /// No key material is left for the requested peer link.
    #[error("key pool exhausted")]
    PoolExhausted,
    /// The slave's KME could not be informed of a reservation; the
    /// reservation has been rolled back.
    #[error("peer notification failed: {0}")]
    NotifyFailed(String),
    /// No material has ever been ingested for the requested peer link.
    #[error("no key material for peer")]
    NoMaterial,
    /// Unexpected internal fault.
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    /// HTTP status code this error is reported with.
    pub fn status(&self) -> u16 {
        match self {
            ServiceError::Unauthorized => 401,
            ServiceError::UnknownRoute => 404,
            ServiceError::MethodNotAllowed => 405,
            ServiceError::Malformed(_) => 400,
            ServiceError::UnroutableSae(_) => 404,
            ServiceError::KeyNotFound => 404,
            ServiceError::AlreadyConsumed => 410,
            ServiceError::ActivationConflict => 409,
            ServiceError::PoolExhausted => 503,
            ServiceError::NotifyFailed(_) => 502,
            ServiceError::NoMaterial => 404,
            ServiceError::Internal(_) => 500,
        }
    }

    /// Machine-readable reason string carried in the response body.
    pub fn reason(&self) -> String {
        self.to_string()
    }
}
