//! Append-only lifecycle journal.
//!
//! Every state transition is appended as one line so that a restarted KME can
//! rebuild the lifecycle of its pool after re-ingesting the material files:
//!
//! ```text
//! <uuid> <STATE> <master_sae> <slave_sae>
//! ```
//!
//! with `-` in the SAE columns when the state carries no activation (i.e. a
//! key returned to AVAILABLE by compensation). Replay applies lines in order;
//! the last line for a uuid wins.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, LineWriter, Write};
use std::path::Path;

use crate::error::KeyStoreError;
use crate::key::{KeyActivation, KeyState, KeyUuid};

/// One parsed journal line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct JournalLine {
    pub uuid: KeyUuid,
    pub state: KeyState,
    pub activation: Option<KeyActivation>,
}

/// Appends lifecycle events to the journal file, flushing per line.
#[derive(Debug)]
pub(crate) struct JournalWriter {
    out: LineWriter<File>,
}

impl JournalWriter {
    /// Opens (creating if necessary) the journal at `path` for appending.
    pub fn open_append(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JournalWriter {
            out: LineWriter::new(file),
        })
    }

    /// Appends one transition.
    pub fn record(
        &mut self,
        uuid: &KeyUuid,
        state: KeyState,
        activation: Option<&KeyActivation>,
    ) -> std::io::Result<()> {
        match activation {
            Some(act) => writeln!(
                self.out,
                "{uuid} {state} {} {}",
                act.master_sae, act.slave_sae
            ),
            None => writeln!(self.out, "{uuid} {state} - -"),
        }
    }
}

/// Reads and parses the journal at `path`. A missing file is an empty journal.
pub(crate) fn read_journal(path: &Path) -> Result<Vec<JournalLine>, KeyStoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut lines = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        lines.push(parse_line(&line, idx + 1)?);
    }
    Ok(lines)
}

fn parse_line(line: &str, line_no: usize) -> Result<JournalLine, KeyStoreError> {
    let malformed = |reason: &str| KeyStoreError::MalformedJournal {
        line_no,
        reason: reason.to_string(),
    };
    let mut fields = line.split_ascii_whitespace();
    let uuid: KeyUuid = fields
        .next()
        .ok_or_else(|| malformed("missing uuid"))?
        .parse()
        .map_err(|_| malformed("bad uuid"))?;
    let state: KeyState = fields
        .next()
        .ok_or_else(|| malformed("missing state"))?
        .parse()
        .map_err(|_| malformed("bad state"))?;
    let master = fields.next().ok_or_else(|| malformed("missing master"))?;
    let slave = fields.next().ok_or_else(|| malformed("missing slave"))?;
    if fields.next().is_some() {
        return Err(malformed("trailing fields"));
    }
    let activation = match (master, slave) {
        ("-", "-") => None,
        (m, s) => Some(KeyActivation {
            master_sae: m.parse().map_err(|_| malformed("bad master sae id"))?,
            slave_sae: s.parse().map_err(|_| malformed("bad slave sae id"))?,
        }),
    };
    if activation.is_none() && state != KeyState::Available {
        return Err(malformed("non-AVAILABLE state without an SAE pair"));
    }
    Ok(JournalLine {
        uuid,
        state,
        activation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_reserved_line() {
        let line = parse_line("de8a847b-ff8c-543d-a9b8-53a215e6ee77 RESERVED 10 20", 1).unwrap();
        assert_eq!(line.state, KeyState::Reserved);
        assert_eq!(
            line.activation,
            Some(KeyActivation {
                master_sae: 10,
                slave_sae: 20
            })
        );
    }

    #[test]
    fn parses_compensation_line() {
        let line = parse_line("de8a847b-ff8c-543d-a9b8-53a215e6ee77 AVAILABLE - -", 1).unwrap();
        assert_eq!(line.state, KeyState::Available);
        assert_eq!(line.activation, None);
    }

    #[test]
    fn rejects_reserved_without_pair() {
        let err = parse_line("de8a847b-ff8c-543d-a9b8-53a215e6ee77 RESERVED - -", 3).unwrap_err();
        assert!(matches!(
            err,
            KeyStoreError::MalformedJournal { line_no: 3, .. }
        ));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_line("not a journal line", 1).is_err());
        assert!(parse_line("de8a847b-ff8c-543d-a9b8-53a215e6ee77 FROZEN 1 2", 1).is_err());
    }
}
