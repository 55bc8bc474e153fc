//! Error surface of the key store.

use crate::key::{KeyUuid, KmeId};

/// Errors returned by key store operations.
#[derive(Debug, thiserror::Error)]
pub enum KeyStoreError {
    /// Filesystem problem while ingesting material or writing the journal.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Two distinct 32-byte materials produced the same identifier. The pools
    /// on the two KMEs can no longer be trusted to agree; refuse to continue.
    #[error("fatal: key identifier collision on {uuid} between distinct material")]
    UuidCollision {
        /// The colliding identifier.
        uuid: KeyUuid,
    },

    /// No AVAILABLE key remains for the given peer KME.
    #[error("key pool for peer KME {peer_kme} is exhausted")]
    PoolExhausted {
        /// Peer KME whose pool is empty.
        peer_kme: KmeId,
    },

    /// The identifier does not name a key this store can serve.
    #[error("no key with identifier {uuid}")]
    NotFound {
        /// The unknown identifier.
        uuid: KeyUuid,
    },

    /// The key exists but was already delivered; a key is never handed out twice.
    #[error("key {uuid} has already been consumed")]
    AlreadyConsumed {
        /// The consumed key's identifier.
        uuid: KeyUuid,
    },

    /// The requester is not the SAE the key was reserved for.
    #[error("requester is not authorized for key {uuid}")]
    Unauthorized {
        /// The requested key's identifier.
        uuid: KeyUuid,
    },

    /// The key is reserved for a different SAE pair than the activation names.
    #[error("activation conflict on key {uuid}")]
    ActivationConflict {
        /// The contested key's identifier.
        uuid: KeyUuid,
    },

    /// Cancellation requested for a key that is not currently reserved.
    #[error("key {uuid} is not reserved")]
    NotReserved {
        /// The key's identifier.
        uuid: KeyUuid,
    },

    /// A journal line could not be parsed.
    #[error("malformed journal line {line_no}: {reason}")]
    MalformedJournal {
        /// 1-based line number in the journal file.
        line_no: usize,
        /// What was wrong with it.
        reason: String,
    },
}
