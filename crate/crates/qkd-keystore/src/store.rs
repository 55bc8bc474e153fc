//! The key store: pools of fixed-size keys with lifecycle tracking.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::entropy::{byte_entropy, EntropyReport};
use crate::error::KeyStoreError;
use crate::ingest::{self, IngestReport, PeerIngest};
use crate::journal::{read_journal, JournalLine, JournalWriter};
use crate::key::{
    derive_key_uuid, KeyActivation, KeyMaterial, KeyState, KeyUuid, KmeId, SaeId, KEY_SIZE_BITS,
    KEY_SIZE_BYTES, MAX_KEYS_PER_REQUEST,
};

/// A key reserved for delivery: identifier plus material.
#[derive(Clone)]
pub struct ReservedKey {
    /// Content-derived identifier, to be passed to the peer SAE.
    pub uuid: KeyUuid,
    /// The 256-bit key material.
    pub material: KeyMaterial,
}

impl std::fmt::Debug for ReservedKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Never let key material leak into logs via Debug.
        f.debug_struct("ReservedKey")
            .field("uuid", &self.uuid)
            .field("material", &"[redacted]")
            .finish()
    }
}

/// Result of applying a peer KME's activation notification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationOutcome {
    /// The key moved AVAILABLE → RESERVED for the given SAE pair.
    Activated,
    /// The key was already bound to exactly this SAE pair (retransmit).
    AlreadyActive,
}

/// Pool summary for one peer KME, as served on the status route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPoolStatus {
    /// Peer KME this pool is shared with.
    pub peer_kme_id: KmeId,
    /// Number of keys currently AVAILABLE for reservation.
    pub stored_key_count: usize,
    /// Size of each delivered key in bits.
    pub key_size_bits: usize,
    /// Maximum number of keys per delivery request (always 1).
    pub max_keys_per_request: usize,
}

#[derive(Debug)]
struct StoredKey {
    material: KeyMaterial,
    peer_kme: KmeId,
    state: KeyState,
    activation: Option<KeyActivation>,
}

#[derive(Debug, Default)]
struct Inner {
    keys: HashMap<KeyUuid, StoredKey>,
    /// Per peer KME: identifiers of AVAILABLE keys in reservation order.
    pools: BTreeMap<KmeId, VecDeque<KeyUuid>>,
    journal: Option<JournalWriter>,
}

/// Thread-safe store of QKD keys, one pool per peer KME.
///
/// All operations take `&self` and perform their state transition atomically
/// under an internal lock; no operation holds the lock across I/O other than
/// the (local, line-buffered) journal append. In particular, two concurrent
/// reservations can never return the same key.
#[derive(Debug, Default)]
pub struct KeyStore {
    inner: Mutex<Inner>,
}

impl KeyStore {
    /// Creates an empty store.
    pub fn new() -> Self {
        KeyStore::default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().expect("key store lock poisoned")
    }

    /// Scans `root` for material directories (one per peer KME) and ingests
    /// every `.cor` file found. Safe to call repeatedly: slices whose
    /// identifier is already known are skipped.
    ///
    /// # Errors
    ///
    /// Fails on I/O problems or on an identifier collision between distinct
    /// material (a fatal consistency violation).
    pub fn ingest_dir(&self, root: &Path) -> Result<IngestReport, KeyStoreError> {
        let mut report = IngestReport::default();
        for (peer, files) in ingest::scan_material_root(root)? {
            let stream = ingest::read_stream(&files)?;
            let mut inner = self.lock();
            let mut peer_report = ingest_stream(&mut inner, peer, &stream)?;
            peer_report.files = files.len();
            drop(inner);
            if peer_report.duplicate_keys > 0 {
                log::debug!(
                    "peer {peer}: skipped {} already-known keys during rescan",
                    peer_report.duplicate_keys
                );
            }
            report.peers.insert(peer, peer_report);
        }
        Ok(report)
    }

    /// Ingests an in-memory material stream for `peer`, applying the same
    /// slicing rule as [`KeyStore::ingest_dir`]. Intended for tests and
    /// simulations.
    pub fn ingest_bytes(&self, peer: KmeId, stream: &[u8]) -> Result<PeerIngest, KeyStoreError> {
        let mut inner = self.lock();
        ingest_stream(&mut inner, peer, stream)
    }

    /// Replays the journal at `path` over the already-ingested pool, then
    /// attaches it so subsequent transitions are appended. Returns the number
    /// of journal lines applied.
    ///
    /// Lines naming identifiers this store does not hold (e.g. material files
    /// that have since been removed) are skipped with a warning.
    pub fn attach_journal(&self, path: &Path) -> Result<usize, KeyStoreError> {
        let lines = read_journal(path)?;
        let mut inner = self.lock();
        let mut applied = 0;
        for line in &lines {
            if apply_replay(&mut inner, line) {
                applied += 1;
            } else {
                log::warn!("journal references unknown key {}; skipped", line.uuid);
            }
        }
        inner.journal = Some(JournalWriter::open_append(path)?);
        Ok(applied)
    }

    /// Reserves the oldest AVAILABLE key shared with `peer` for the given
    /// master/slave SAE pair.
    ///
    /// # Errors
    ///
    /// [`KeyStoreError::PoolExhausted`] when no key is available.
    pub fn reserve_key(
        &self,
        peer: KmeId,
        master_sae: SaeId,
        slave_sae: SaeId,
    ) -> Result<ReservedKey, KeyStoreError> {
        let mut inner = self.lock();
        let uuid = inner
            .pools
            .get_mut(&peer)
            .and_then(|pool| pool.pop_front())
            .ok_or(KeyStoreError::PoolExhausted { peer_kme: peer })?;
        let activation = KeyActivation {
            master_sae,
            slave_sae,
        };
        let key = inner
            .keys
            .get_mut(&uuid)
            .expect("pool entry without stored key");
        debug_assert_eq!(key.state, KeyState::Available);
        key.state = KeyState::Reserved;
        key.activation = Some(activation);
        let material = key.material;
        journal(&mut inner, &uuid, KeyState::Reserved, Some(&activation))?;
        Ok(ReservedKey { uuid, material })
    }

    /// Applies a peer KME's notification that `uuid` has been reserved for
    /// the given SAE pair (this store being the slave side).
    ///
    /// Idempotent for retransmissions: a second notification with the same
    /// pair yields [`ActivationOutcome::AlreadyActive`].
    ///
    /// # Errors
    ///
    /// [`KeyStoreError::NotFound`] for an unknown identifier;
    /// [`KeyStoreError::ActivationConflict`] when the key is already bound to
    /// a different SAE pair.
    pub fn activate_remote(
        &self,
        uuid: &KeyUuid,
        master_sae: SaeId,
        slave_sae: SaeId,
    ) -> Result<ActivationOutcome, KeyStoreError> {
        let mut inner = self.lock();
        let activation = KeyActivation {
            master_sae,
            slave_sae,
        };
        let key = inner
            .keys
            .get_mut(uuid)
            .ok_or(KeyStoreError::NotFound { uuid: *uuid })?;
        match key.state {
            KeyState::Available => {
                key.state = KeyState::Reserved;
                key.activation = Some(activation);
                let peer = key.peer_kme;
                remove_from_pool(&mut inner, peer, uuid);
                journal(&mut inner, uuid, KeyState::Reserved, Some(&activation))?;
                Ok(ActivationOutcome::Activated)
            }
            KeyState::Reserved | KeyState::Consumed => {
                if key.activation == Some(activation) {
                    Ok(ActivationOutcome::AlreadyActive)
                } else {
                    Err(KeyStoreError::ActivationConflict { uuid: *uuid })
                }
            }
        }
    }

    /// Delivers the material of a RESERVED key to the SAE it was reserved
    /// for, transitioning it to CONSUMED. One-time: a second call yields
    /// [`KeyStoreError::AlreadyConsumed`].
    ///
    /// # Errors
    ///
    /// [`KeyStoreError::NotFound`] for an unknown identifier (or a key whose
    /// activation never arrived — indistinguishable to an unauthorized
    /// caller); [`KeyStoreError::Unauthorized`] when `requester` is not the
    /// reserved slave SAE; [`KeyStoreError::AlreadyConsumed`] after delivery.
    pub fn take_key(
        &self,
        uuid: &KeyUuid,
        requester: SaeId,
    ) -> Result<KeyMaterial, KeyStoreError> {
        let mut inner = self.lock();
        let key = inner
            .keys
            .get_mut(uuid)
            .ok_or(KeyStoreError::NotFound { uuid: *uuid })?;
        match key.state {
            KeyState::Available => {
                log::warn!("key {uuid} requested before activation arrived");
                Err(KeyStoreError::NotFound { uuid: *uuid })
            }
            KeyState::Consumed => Err(KeyStoreError::AlreadyConsumed { uuid: *uuid }),
            KeyState::Reserved => {
                let activation = key.activation.expect("reserved key without activation");
                if activation.slave_sae != requester {
                    return Err(KeyStoreError::Unauthorized { uuid: *uuid });
                }
                key.state = KeyState::Consumed;
                let material = key.material;
                journal(&mut inner, uuid, KeyState::Consumed, Some(&activation))?;
                Ok(material)
            }
        }
    }

    /// Returns a RESERVED key to AVAILABLE (compensation when the peer KME
    /// could not be notified of the reservation). The key becomes the next
    /// reservation candidate again.
    ///
    /// # Errors
    ///
    /// [`KeyStoreError::NotFound`] for an unknown identifier;
    /// [`KeyStoreError::NotReserved`] when the key is not currently RESERVED.
    pub fn cancel_reservation(&self, uuid: &KeyUuid) -> Result<(), KeyStoreError> {
        let mut inner = self.lock();
        let key = inner
            .keys
            .get_mut(uuid)
            .ok_or(KeyStoreError::NotFound { uuid: *uuid })?;
        if key.state != KeyState::Reserved {
            return Err(KeyStoreError::NotReserved { uuid: *uuid });
        }
        key.state = KeyState::Available;
        key.activation = None;
        let peer = key.peer_kme;
        inner.pools.entry(peer).or_default().push_front(*uuid);
        journal(&mut inner, uuid, KeyState::Available, None)?;
        Ok(())
    }

    /// Pool summary for `peer`, as served on the status route. A peer with no
    /// ingested material reports zero stored keys.
    pub fn status(&self, peer: KmeId) -> KeyPoolStatus {
        let inner = self.lock();
        KeyPoolStatus {
            peer_kme_id: peer,
            stored_key_count: inner.pools.get(&peer).map_or(0, VecDeque::len),
            key_size_bits: KEY_SIZE_BITS,
            max_keys_per_request: MAX_KEYS_PER_REQUEST,
        }
    }

    /// Entropy estimate over all material held for `peer`, in every lifecycle
    /// state. `None` when no material has been ingested for that peer.
    pub fn entropy_report(&self, peer: KmeId) -> Option<EntropyReport> {
        let inner = self.lock();
        let chunks = inner
            .keys
            .values()
            .filter(|k| k.peer_kme == peer)
            .map(|k| k.material.as_slice());
        let (total_bytes, entropy_bits_per_byte) = byte_entropy(chunks);
        if total_bytes == 0 {
            return None;
        }
        Some(EntropyReport {
            peer_kme_id: peer,
            total_bytes,
            entropy_bits_per_byte,
        })
    }

    /// Peer KMEs for which this store holds any material.
    pub fn peer_ids(&self) -> Vec<KmeId> {
        let inner = self.lock();
        let mut ids: Vec<KmeId> = inner.keys.values().map(|k| k.peer_kme).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Current lifecycle state and activation of a key, for inspection.
    pub fn state_of(&self, uuid: &KeyUuid) -> Option<(KeyState, Option<KeyActivation>)> {
        let inner = self.lock();
        inner.keys.get(uuid).map(|k| (k.state, k.activation))
    }

    /// Total number of keys held for `peer`, in any state.
    pub fn total_key_count(&self, peer: KmeId) -> usize {
        let inner = self.lock();
        inner.keys.values().filter(|k| k.peer_kme == peer).count()
    }
}

fn ingest_stream(
    inner: &mut Inner,
    peer: KmeId,
    stream: &[u8],
) -> Result<PeerIngest, KeyStoreError> {
    let mut report = PeerIngest {
        stream_bytes: stream.len() as u64,
        discarded_tail_bytes: stream.len() % KEY_SIZE_BYTES,
        ..PeerIngest::default()
    };
    for chunk in stream.chunks_exact(KEY_SIZE_BYTES) {
        let material: KeyMaterial = chunk.try_into().expect("exact chunk");
        let uuid = derive_key_uuid(&material);
        match inner.keys.get(&uuid) {
            Some(existing) => {
                if existing.material != material {
                    return Err(KeyStoreError::UuidCollision { uuid });
                }
                if existing.peer_kme != peer {
                    log::warn!(
                        "identical key material seen for peers {} and {peer}; keeping first",
                        existing.peer_kme
                    );
                }
                report.duplicate_keys += 1;
            }
            None => {
                inner.keys.insert(
                    uuid,
                    StoredKey {
                        material,
                        peer_kme: peer,
                        state: KeyState::Available,
                        activation: None,
                    },
                );
                inner.pools.entry(peer).or_default().push_back(uuid);
                report.new_keys += 1;
            }
        }
    }
    Ok(report)
}

/// Applies one replayed journal line. Returns false when the key is unknown.
fn apply_replay(inner: &mut Inner, line: &JournalLine) -> bool {
    let Some(key) = inner.keys.get_mut(&line.uuid) else {
        return false;
    };
    let peer = key.peer_kme;
    let was_available = key.state == KeyState::Available;
    key.state = line.state;
    key.activation = line.activation;
    match line.state {
        KeyState::Available => {
            if !was_available {
                inner.pools.entry(peer).or_default().push_front(line.uuid);
            }
        }
        KeyState::Reserved | KeyState::Consumed => {
            if was_available {
                remove_from_pool(inner, peer, &line.uuid);
            }
        }
    }
    true
}

fn remove_from_pool(inner: &mut Inner, peer: KmeId, uuid: &KeyUuid) {
    if let Some(pool) = inner.pools.get_mut(&peer) {
        if let Some(pos) = pool.iter().position(|u| u == uuid) {
            pool.remove(pos);
        }
    }
}

fn journal(
    inner: &mut Inner,
    uuid: &KeyUuid,
    state: KeyState,
    activation: Option<&KeyActivation>,
) -> Result<(), KeyStoreError> {
    if let Some(writer) = inner.journal.as_mut() {
        writer.record(uuid, state, activation)?;
    }
    Ok(())
}
