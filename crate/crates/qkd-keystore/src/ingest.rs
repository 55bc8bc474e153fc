//! Discovery and slicing of post-processed key material files.
//!
//! Material lives under one directory per peer KME, named by that peer's
//! decimal identifier:
//!
//! ```text
//! <material_root>/
//!   2/                 # material shared with peer KME 2
//!     20260101-a.cor
//!     20260101-b.cor
//!   7/
//!     batch-000.cor
//! ```
//!
//! Within a peer directory, every `*.cor` file is taken in lexicographic
//! filename order and the file contents are concatenated into a single byte
//! stream per peer. The stream is sliced into consecutive 32-byte keys; only
//! the final remainder of the whole stream (< 32 bytes) is discarded, so the
//! number of keys derived from a stream does not depend on how it was split
//! into files. Both KMEs of a link apply this rule to identical files and
//! therefore derive identical pools.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::key::KmeId;

/// Filename extension of post-processed material files.
pub const MATERIAL_FILE_EXTENSION: &str = "cor";

/// Outcome of ingesting one peer's material stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerIngest {
    /// Keys newly added to the pool by this scan.
    pub new_keys: usize,
    /// Slices whose identifier was already known (identical material);
    /// skipped idempotently.
    pub duplicate_keys: usize,
    /// Number of material files that contributed to the stream.
    pub files: usize,
    /// Total length of the concatenated stream in bytes.
    pub stream_bytes: u64,
    /// Bytes at the end of the stream too short to form a key.
    pub discarded_tail_bytes: usize,
}

/// Outcome of one ingestion scan, per peer KME.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Per-peer summaries, keyed by peer KME id.
    pub peers: BTreeMap<KmeId, PeerIngest>,
}

impl IngestReport {
    /// Total number of keys newly added across all peers.
    pub fn total_new_keys(&self) -> usize {
        self.peers.values().map(|p| p.new_keys).sum()
    }
}

/// Lists the material files under `root`, grouped by peer KME id.
///
/// Directories whose name does not parse as a KME id and files without the
/// `.cor` extension are ignored. Files are returned in lexicographic filename
/// order, which is the slicing order.
pub(crate) fn scan_material_root(root: &Path) -> io::Result<Vec<(KmeId, Vec<PathBuf>)>> {
    let mut peers = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let name = entry.file_name();
        let Some(peer_id) = name.to_str().and_then(|s| s.parse::<KmeId>().ok()) else {
            log::debug!("ignoring non-peer directory {:?}", entry.path());
            continue;
        };
        peers.push((peer_id, list_material_files(&entry.path())?));
    }
    peers.sort_by_key(|(id, _)| *id);
    Ok(peers)
}

/// Lists the `.cor` files directly inside `dir`, sorted by filename.
pub(crate) fn list_material_files(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let path = entry.path();
        let is_material = path
            .extension()
            .is_some_and(|ext| ext == MATERIAL_FILE_EXTENSION);
        if is_material {
            files.push(path);
        } else {
            log::debug!("ignoring non-material file {path:?}");
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Reads and concatenates the given files into one material stream.
pub(crate) fn read_stream(files: &[PathBuf]) -> io::Result<Vec<u8>> {
    let mut stream = Vec::new();
    for file in files {
        stream.extend(std::fs::read(file)?);
    }
    Ok(stream)
}
