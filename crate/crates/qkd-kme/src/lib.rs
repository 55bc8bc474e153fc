//! Key Management Entity service.
//!
//! A KME holds pools of symmetric keys shared pairwise with federated peer
//! KMEs and delivers them to registered application endpoints (SAEs) over
//! mutually-authenticated HTTPS. The master SAE of a connection asks its own
//! KME to reserve a key toward a slave SAE; the two KMEs synchronize the
//! reservation over their private link; the slave SAE then retrieves the
//! same key by identifier from its own KME. Every key is delivered at most
//! once per side.
//!
//! The crate splits into:
//! - [`config`]: the TOML deployment description (listeners, TLS identity,
//!   peer/SAE/admin registries);
//! - [`core`]: network-free service logic over a
//!   [`qkd_keystore::KeyStore`];
//! - [`http`]: the role-scoped router mapping requests to core calls;
//! - [`notify`]: synchronous activation delivery between KMEs;
//! - [`server`]: the three TLS listeners and hyper glue;
//! - [`api`] / [`error`]: wire bodies and the error-to-status taxonomy.

pub mod api;
pub mod config;
pub mod core;
pub mod error;
pub mod http;
pub mod notify;
pub mod serial;
pub mod server;

pub use api::{
    ActivationMsg, EntropyResponse, ErrorBody, KeyContainer, KeyEntry, SaeInfoMe, StatusResponse,
};
pub use config::{ConfigError, KmeConfig};
pub use core::{ActivateOutcome, KmeCore};
pub use error::ServiceError;
pub use http::{handle, ApiResponse, ListenerRole};
pub use notify::{ActivationNotifier, HttpNotifier, NotifyFailure};
pub use serial::serial_from_der;
pub use server::{serve, RunningKme, ServeError};
