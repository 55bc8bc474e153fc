//! Service configuration: listeners, TLS identity, key material location,
//! and the registries that drive authentication and routing.
//!
//! A KME trusts exactly what this file tells it to trust. Certificate serial
//! numbers are the sole caller identity: the TLS layer proves possession of a
//! CA-signed certificate, and the serial then selects a registered SAE, a
//! federated peer KME, or an admin. A serial may appear in only one registry.

use std::collections::HashSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use qkd_keystore::{KmeId, SaeId};
use serde::Deserialize;
use thiserror::Error;

/// Errors raised while loading or validating a configuration file.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Fully parsed and validated service configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmeConfig {
    /// This KME's own identifier within the federation.
    pub kme_id: KmeId,
    pub listen: ListenConfig,
    pub material: MaterialConfig,
    pub tls: TlsConfig,
    /// Milliseconds to wait for a peer KME to acknowledge an activation
    /// before rolling the reservation back.
    #[serde(default = "default_notify_timeout_ms")]
    pub notify_timeout_ms: u64,
    #[serde(default, rename = "peer")]
    pub peers: Vec<PeerConfig>,
    #[serde(default, rename = "sae")]
    pub saes: Vec<SaeConfig>,
    #[serde(default, rename = "admin")]
    pub admins: Vec<AdminConfig>,
}

fn default_notify_timeout_ms() -> u64 {
    3000
}

/// The three independent listener sockets. Separating them lets a deployment
/// firewall each audience differently: SAEs reach only `sae`, federated KMEs
/// only `kme`, and operators only `admin`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ListenConfig {
    pub sae: SocketAddr,
    pub kme: SocketAddr,
    pub admin: SocketAddr,
}

/// Where key material lives on disk.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    /// Directory scanned at startup; one subdirectory per peer KME id.
    pub dir: PathBuf,
    /// Optional append-only journal recording key lifecycle transitions.
    pub journal: Option<PathBuf>,
}

/// TLS identity shared by all three listeners, plus the CA bundle that
/// anchors every caller certificate.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsConfig {
    pub cert: PathBuf,
    pub key: PathBuf,
    pub ca: PathBuf,
}

/// A federated peer KME: where to reach its KME-facing listener and which
/// certificate serial it authenticates with.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeerConfig {
    pub kme_id: KmeId,
    /// `host:port` of the peer's KME-facing listener.
    pub address: String,
    pub cert_serial: u64,
}

/// A registered SAE: its identity, its certificate serial, and the KME that
/// serves it. Routing derives entirely from `home_kme`: a slave SAE is
/// reachable when its home KME is this KME's federated peer.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaeConfig {
    pub sae_id: SaeId,
    pub cert_serial: u64,
    pub home_kme: KmeId,
}

/// An operator identity allowed on the admin listener.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdminConfig {
    pub cert_serial: u64,
}

impl KmeConfig {
    /// Read and validate a TOML configuration file.
    pub fn load(path: &Path) -> Result<KmeConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let config: KmeConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Structural checks that TOML syntax alone cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut serials = HashSet::new();
        for (serial, owner) in self
            .peers
            .iter()
            .map(|p| (p.cert_serial, "peer"))
            .chain(self.saes.iter().map(|s| (s.cert_serial, "sae")))
            .chain(self.admins.iter().map(|a| (a.cert_serial, "admin")))
        {
            if !serials.insert(serial) {
                return Err(ConfigError::Invalid(format!(
                    "certificate serial {serial} registered twice (second use: {owner}); \
                     serials identify callers and must be unique"
                )));
            }
        }

        let mut peer_ids = HashSet::new();
        for peer in &self.peers {
            if peer.kme_id == self.kme_id {
                return Err(ConfigError::Invalid(format!(
                    "peer list contains this KME's own id {}",
                    self.kme_id
                )));
            }
            if !peer_ids.insert(peer.kme_id) {
                return Err(ConfigError::Invalid(format!(
                    "peer KME {} listed twice",
                    peer.kme_id
                )));
            }
        }

        let mut sae_ids = HashSet::new();
        for sae in &self.saes {
            if !sae_ids.insert(sae.sae_id) {
                return Err(ConfigError::Invalid(format!(
                    "SAE {} registered twice",
                    sae.sae_id
                )));
            }
            if sae.home_kme != self.kme_id && !peer_ids.contains(&sae.home_kme) {
                return Err(ConfigError::Invalid(format!(
                    "SAE {} names home KME {} which is neither this KME nor a peer",
                    sae.sae_id, sae.home_kme
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const GOOD: &str = r#"
        kme_id = 1
        notify_timeout_ms = 1500

        [listen]
        sae = "127.0.0.1:14701"
        kme = "127.0.0.1:14702"
        admin = "127.0.0.1:14703"

        [material]
        dir = "/var/lib/kme/material"
        journal = "/var/lib/kme/journal.log"

        [tls]
        cert = "/etc/kme/kme.pem"
        key = "/etc/kme/kme.key"
        ca = "/etc/kme/ca.pem"

        [[peer]]
        kme_id = 2
        address = "kme-b.example.net:14702"
        cert_serial = 5002

        [[sae]]
        sae_id = 101
        cert_serial = 1101
        home_kme = 1

        [[sae]]
        sae_id = 202
        cert_serial = 2202
        home_kme = 2

        [[admin]]
        cert_serial = 9001
    "#;

    fn load_str(text: &str) -> Result<KmeConfig, ConfigError> {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(text.as_bytes()).unwrap();
        KmeConfig::load(file.path())
    }

    #[test]
    fn parses_complete_config() {
        let config = load_str(GOOD).unwrap();
        assert_eq!(config.kme_id, 1);
        assert_eq!(config.notify_timeout_ms, 1500);
        assert_eq!(config.listen.sae.port(), 14701);
        assert_eq!(config.peers.len(), 1);
        assert_eq!(config.saes.len(), 2);
        assert_eq!(config.admins[0].cert_serial, 9001);
        assert_eq!(
            config.material.journal.as_deref(),
            Some(Path::new("/var/lib/kme/journal.log"))
        );
    }

    #[test]
    fn notify_timeout_defaults_when_absent() {
        let text = GOOD.replace("notify_timeout_ms = 1500", "");
        assert_eq!(load_str(&text).unwrap().notify_timeout_ms, 3000);
    }

    #[test]
    fn rejects_duplicate_serial_across_registries() {
        let text = GOOD.replace("cert_serial = 9001", "cert_serial = 1101");
        let err = load_str(&text).unwrap_err();
        assert!(err.to_string().contains("serial 1101"), "{err}");
    }

    #[test]
    fn rejects_unknown_home_kme() {
        let text = GOOD.replace("home_kme = 2", "home_kme = 3");
        let err = load_str(&text).unwrap_err();
        assert!(err.to_string().contains("home KME 3"), "{err}");
    }

    #[test]
    fn rejects_self_peer() {
        let text = GOOD.replace("kme_id = 2", "kme_id = 1");
        let err = load_str(&text).unwrap_err();
        assert!(err.to_string().contains("own id 1"), "{err}");
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = GOOD.replace("kme_id = 1\n", "kme_id = 1\nbogus = true\n");
        assert!(matches!(
            load_str(&text).unwrap_err(),
            ConfigError::Parse { .. }
        ));
    }
}
