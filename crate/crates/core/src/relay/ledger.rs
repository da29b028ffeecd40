//! Relay ledger file: one line per commitment,
//! `relay_id seq prev_hex root_hex n_entries endorsement_count`.

use thiserror::Error;

use crate::codec::Digest;

use super::RelayCommitment;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerLine {
    pub relay_id: String,
    pub sequence: u64,
    pub previous: Digest,
    pub batch_root: Digest,
    pub entry_count: u64,
    pub endorsement_count: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("relay ledger line {line}: {reason}")]
pub struct LedgerParseError {
    pub line: usize,
    pub reason: String,
}

impl From<&RelayCommitment> for LedgerLine {
    fn from(c: &RelayCommitment) -> Self {
        LedgerLine {
            relay_id: c.body.relay_id.clone(),
            sequence: c.body.sequence,
            previous: c.body.previous,
            batch_root: c.body.batch_root,
            entry_count: c.body.entry_count,
            endorsement_count: c.endorsements.len(),
        }
    }
}

impl std::fmt::Display for LedgerLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {}",
            self.relay_id,
            self.sequence,
            self.previous.to_hex(),
            self.batch_root.to_hex(),
            self.entry_count,
            self.endorsement_count
        )
    }
}

pub fn render<'a>(commitments: impl IntoIterator<Item = &'a RelayCommitment>) -> String {
    commitments
        .into_iter()
        .map(|c| format!("{}\n", LedgerLine::from(c)))
        .collect()
}

pub fn parse(text: &str) -> Result<Vec<LedgerLine>, LedgerParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let err = |reason: &str| LedgerParseError {
                line: i + 1,
                reason: reason.to_string(),
            };
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 6 {
                return Err(err("expected 6 fields"));
            }
            Ok(LedgerLine {
                relay_id: f[0].to_string(),
                sequence: f[1].parse().map_err(|_| err("sequence"))?,
                previous: Digest::from_hex(f[2]).map_err(|_| err("previous digest"))?,
                batch_root: Digest::from_hex(f[3]).map_err(|_| err("root digest"))?,
                entry_count: f[4].parse().map_err(|_| err("entry count"))?,
                endorsement_count: f[5].parse().map_err(|_| err("endorsement count"))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relay::{CycleEntry, Relay, RelayConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn render_then_parse() {
        let mut r = Relay::new(
            RelayConfig::new("clearing-1"),
            &mut ChaCha20Rng::seed_from_u64(5),
        )
        .unwrap();
        r.commit_cycle(0).unwrap();
        r.submit(CycleEntry::new(Digest::hash(b"a"), Digest::hash(b"b")))
            .unwrap();
        r.commit_cycle(1).unwrap();
        let text = render(r.commitments());
        let lines = parse(&text).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].entry_count, 1);
        assert_eq!(lines[1].endorsement_count, 3);
        assert_eq!(lines[1].previous, r.commitment(0).unwrap().digest());
        assert!(text.starts_with("clearing-1 0 0000"));
    }

    #[test]
    fn bad_lines_rejected() {
        assert!(parse("a 1 2").is_err());
        assert!(parse(&format!("a x {} {} 0 0", "00".repeat(32), "00".repeat(32))).is_err());
    }
}
