//! Service logic: authentication, routing, and key lifecycle orchestration.
//!
//! [`KmeCore`] is deliberately network-free. It receives a caller identity
//! (the certificate serial the TLS layer extracted), consults its registries,
//! drives the [`KeyStore`], and asks an [`ActivationNotifier`] to inform the
//! peer KME. The HTTP layer on top of it only parses requests and renders
//! responses, so every authorization decision lives — and is tested — here.

use std::collections::{HashMap, HashSet};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use log::{info, warn};
use qkd_keystore::{
    ActivationOutcome, KeyStore, KeyStoreError, KeyUuid, KmeId, SaeId, KEY_SIZE_BITS,
};

use crate::api::{
    ActivationMsg, EntropyResponse, KeyContainer, KeyEntry, SaeInfoMe, StatusResponse,
};
use crate::config::{KmeConfig, PeerConfig, SaeConfig};
use crate::error::ServiceError;
use crate::notify::ActivationNotifier;

/// Outcome of an inbound activation, distinguished so the handler can log
/// retransmits without changing the (identical) HTTP answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivateOutcome {
    /// The key moved to RESERVED for the named pair.
    Activated,
    /// Identical retransmit of an activation already applied.
    AlreadyActive,
}

/// The service: registries plus the key store and the peer notifier.
pub struct KmeCore<N> {
    kme_id: KmeId,
    store: KeyStore,
    notifier: N,
    saes_by_serial: HashMap<u64, SaeConfig>,
    saes_by_id: HashMap<SaeId, SaeConfig>,
    peers_by_id: HashMap<KmeId, PeerConfig>,
    peer_serials: HashSet<u64>,
    admin_serials: HashSet<u64>,
}

impl<N: ActivationNotifier> KmeCore<N> {
    /// Assemble a core from a validated configuration, a store that has
    /// already ingested its material, and a notifier.
    pub fn new(config: &KmeConfig, store: KeyStore, notifier: N) -> KmeCore<N> {
        KmeCore {
            kme_id: config.kme_id,
            store,
            notifier,
            saes_by_serial: config
                .saes
                .iter()
                .map(|s| (s.cert_serial, s.clone()))
                .collect(),
            saes_by_id: config.saes.iter().map(|s| (s.sae_id, s.clone())).collect(),
            peers_by_id: config.peers.iter().map(|p| (p.kme_id, p.clone())).collect(),
            peer_serials: config.peers.iter().map(|p| p.cert_serial).collect(),
            admin_serials: config.admins.iter().map(|a| a.cert_serial).collect(),
        }
    }

    /// This KME's own federation identifier.
    pub fn kme_id(&self) -> KmeId {
        self.kme_id
    }

    /// Direct store access, for status displays and tests.
    pub fn store(&self) -> &KeyStore {
        &self.store
    }

    fn sae_from_serial(&self, serial: u64) -> Result<&SaeConfig, ServiceError> {
        self.saes_by_serial
            .get(&serial)
            .ok_or(ServiceError::Unauthorized)
    }

    /// Resolve the peer KME that serves `slave_sae_id`, for routing a
    /// reservation. A slave homed on this same KME is unroutable: keys exist
    /// only on links *between* KMEs, so both SAEs of a pair must sit on
    /// different KMEs.
    fn route_to_slave(&self, slave_sae_id: SaeId) -> Result<&PeerConfig, ServiceError> {
        let slave = self
            .saes_by_id
            .get(&slave_sae_id)
            .ok_or(ServiceError::UnroutableSae(slave_sae_id))?;
        if slave.home_kme == self.kme_id {
            return Err(ServiceError::UnroutableSae(slave_sae_id));
        }
        self.peers_by_id
            .get(&slave.home_kme)
            .ok_or(ServiceError::UnroutableSae(slave_sae_id))
    }

    /// `POST/GET /api/v1/keys/{slave_SAE_ID}/enc_keys` — reserve a fresh key
    /// for the calling master SAE and the named slave SAE.
    ///
    /// The peer KME's acknowledgement is awaited *before* the key is
    /// released to the caller; if the peer cannot be told, the reservation
    /// is rolled back and the pool is left exactly as it was.
    pub async fn enc_keys(
        &self,
        caller_serial: u64,
        slave_sae_id: SaeId,
    ) -> Result<KeyContainer, ServiceError> {
        let master = self.sae_from_serial(caller_serial)?.clone();
        let peer = self.route_to_slave(slave_sae_id)?.clone();

        let reserved = self
            .store
            .reserve_key(peer.kme_id, master.sae_id, slave_sae_id)
            .map_err(|e| match e {
                KeyStoreError::PoolExhausted { .. } => ServiceError::PoolExhausted,
                other => ServiceError::Internal(other.to_string()),
            })?;

        let activation = ActivationMsg {
            key_id: reserved.uuid.to_string(),
            master_sae_id: master.sae_id,
            slave_sae_id,
        };
        if let Err(failure) = self.notifier.notify(&peer, &activation).await {
            // The slave's KME never learned of this key, so the slave SAE
            // could never fetch it. Return the key to the front of the pool
            // and report the delivery as failed.
            if let Err(rollback) = self.store.cancel_reservation(&reserved.uuid) {
                warn!(
                    "reservation rollback for {} failed after notify error: {rollback}",
                    reserved.uuid
                );
            }
            return Err(ServiceError::NotifyFailed(failure.to_string()));
        }

        info!(
            "delivered key {} to master SAE {} for slave SAE {} (via KME {})",
            reserved.uuid, master.sae_id, slave_sae_id, peer.kme_id
        );
        Ok(KeyContainer {
            keys: vec![KeyEntry {
                key_id: reserved.uuid.to_string(),
                key: BASE64.encode(reserved.material),
            }],
        })
    }

    /// `POST/GET /api/v1/keys/{master_SAE_ID}/dec_keys?key_ID=...` — deliver
    /// a previously activated key to the calling slave SAE, exactly once.
    pub fn dec_keys(
        &self,
        caller_serial: u64,
        master_sae_id: SaeId,
        key_id: &str,
    ) -> Result<KeyContainer, ServiceError> {
        let slave = self.sae_from_serial(caller_serial)?;
        let uuid: KeyUuid = key_id
            .parse()
            .map_err(|_| ServiceError::Malformed(format!("key_ID {key_id:?} is not a UUID")))?;

        // The store only binds a key to its slave; the master named in the
        // path is checked here. Activations are write-once, so this check
        // cannot race with the consumption below.
        if let Some((_, Some(activation))) = self.store.state_of(&uuid) {
            if activation.master_sae != master_sae_id {
                return Err(ServiceError::Unauthorized);
            }
        }

        let material = self.store.take_key(&uuid, slave.sae_id).map_err(|e| match e {
            KeyStoreError::NotFound { .. } => ServiceError::KeyNotFound,
            KeyStoreError::AlreadyConsumed { .. } => ServiceError::AlreadyConsumed,
            KeyStoreError::Unauthorized { .. } => ServiceError::Unauthorized,
            other => ServiceError::Internal(other.to_string()),
        })?;

        info!("delivered key {uuid} to slave SAE {}", slave.sae_id);
        Ok(KeyContainer {
            keys: vec![KeyEntry {
                key_id: uuid.to_string(),
                key: BASE64.encode(material),
            }],
        })
    }

    /// `POST /api/v1/internal/activate` — a federated peer KME announces a
    /// reservation made on its side of a shared link.
    ///
    /// Retransmits of an identical activation succeed idempotently; an
    /// activation that disagrees with recorded state is a conflict; an
    /// activation for a key this store has never seen is alarming (the two
    /// pools may have diverged) and is logged as such.
    pub fn activate(
        &self,
        caller_serial: u64,
        msg: &ActivationMsg,
    ) -> Result<ActivateOutcome, ServiceError> {
        if !self.peer_serials.contains(&caller_serial) {
            return Err(ServiceError::Unauthorized);
        }
        let uuid: KeyUuid = msg.key_id.parse().map_err(|_| {
            ServiceError::Malformed(format!("key_ID {:?} is not a UUID", msg.key_id))
        })?;

        match self
            .store
            .activate_remote(&uuid, msg.master_sae_id, msg.slave_sae_id)
        {
            Ok(ActivationOutcome::Activated) => {
                info!(
                    "activated key {uuid} for master SAE {} / slave SAE {}",
                    msg.master_sae_id, msg.slave_sae_id
                );
                Ok(ActivateOutcome::Activated)
            }
            Ok(ActivationOutcome::AlreadyActive) => Ok(ActivateOutcome::AlreadyActive),
            Err(KeyStoreError::NotFound { .. }) => {
                warn!(
                    "alert: peer announced activation of unknown key {uuid}; \
                     pools may have diverged"
                );
                Err(ServiceError::KeyNotFound)
            }
            Err(KeyStoreError::ActivationConflict { .. }) => {
                warn!(
                    "alert: conflicting activation replay for key {uuid} \
                     (claimed master SAE {} / slave SAE {})",
                    msg.master_sae_id, msg.slave_sae_id
                );
                Err(ServiceError::ActivationConflict)
            }
            Err(other) => Err(ServiceError::Internal(other.to_string())),
        }
    }

    /// `GET /api/v1/keys/{slave_SAE_ID}/status` — pool state for the link
    /// that would serve a reservation toward the named slave SAE.
    pub fn status(
        &self,
        caller_serial: u64,
        slave_sae_id: SaeId,
    ) -> Result<StatusResponse, ServiceError> {
        self.sae_from_serial(caller_serial)?;
        let peer = self.route_to_slave(slave_sae_id)?;
        let pool = self.store.status(peer.kme_id);
        Ok(StatusResponse {
            source_kme_id: self.kme_id,
            target_kme_id: peer.kme_id,
            key_size: KEY_SIZE_BITS as u32,
            stored_key_count: pool.stored_key_count,
            max_keys_per_request: pool.max_keys_per_request,
        })
    }

    /// `GET /api/v1/sae/info/me` — tell a calling SAE its own registered id.
    pub fn sae_info_me(&self, caller_serial: u64) -> Result<SaeInfoMe, ServiceError> {
        let sae = self.sae_from_serial(caller_serial)?;
        Ok(SaeInfoMe { sae_id: sae.sae_id })
    }

    /// `GET /api/v1/admin/entropy/{peer_kme_id}` — entropy estimate over all
    /// material held for one peer link. Admin credential required.
    pub fn entropy(
        &self,
        caller_serial: u64,
        peer_kme_id: KmeId,
    ) -> Result<EntropyResponse, ServiceError> {
        if !self.admin_serials.contains(&caller_serial) {
            return Err(ServiceError::Unauthorized);
        }
        let report = self
            .store
            .entropy_report(peer_kme_id)
            .ok_or(ServiceError::NoMaterial)?;
        Ok(EntropyResponse {
            peer_kme_id,
            total_bytes: report.total_bytes,
            entropy_bits_per_byte: report.entropy_bits_per_byte,
            stored_key_count: self.store.status(peer_kme_id).stored_key_count,
            total_key_count: self.store.total_key_count(peer_kme_id),
        })
    }

    /// Whether this serial belongs to any registered caller on the given
    /// audience. Used by listeners for logging only — each operation
    /// re-checks entitlement itself.
    pub fn describe_serial(&self, serial: u64) -> &'static str {
        if self.saes_by_serial.contains_key(&serial) {
            "sae"
        } else if self.peer_serials.contains(&serial) {
            "peer-kme"
        } else if self.admin_serials.contains(&serial) {
            "admin"
        } else {
            "unknown"
        }
    }
}
