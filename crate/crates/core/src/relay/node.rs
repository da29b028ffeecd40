use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};

use crate::codec::{Canonical, Digest, Encoder};
use crate::instrumentation::{touch, Service};
use crate::keys::AuthKeyPair;

use super::{
    merkle, validate_relay_id, CommitmentBody, CycleEntry, Endorsement, InclusionProof, Receipt,
    RelayCommitment, RelayError, RelayId, RelayTrust, SubmitOutcome,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelayConfig {
    pub id: RelayId,
    pub endorsers: usize,
    /// Defaults to all endorsers.
    pub quorum: Option<usize>,
    /// Cycles between commitments.
    pub period: u64,
    pub parent: Option<RelayId>,
}

impl RelayConfig {
    pub fn new(id: impl Into<RelayId>) -> Self {
        RelayConfig {
            id: id.into(),
            endorsers: 3,
            quorum: None,
            period: 1,
            parent: None,
        }
    }

    pub fn with_parent(mut self, parent: impl Into<RelayId>) -> Self {
        self.parent = Some(parent.into());
        self
    }

    pub fn with_period(mut self, period: u64) -> Self {
        self.period = period;
        self
    }

    pub fn with_endorsers(mut self, endorsers: usize, quorum: Option<usize>) -> Self {
        self.endorsers = endorsers;
        self.quorum = quorum;
        self
    }
}

#[derive(Clone, Debug)]
struct CommittedCycle {
    commitment: RelayCommitment,
    /// Sorted by state digest.
    entries: Vec<CycleEntry>,
}

#[derive(Clone, Copy, Debug)]
struct Location {
    successor: Digest,
    sequence: u64,
}

/// One relay. Stores digests and commitments only.
#[derive(Clone, Debug)]
pub struct Relay {
    id: RelayId,
    endorsers: Vec<AuthKeyPair>,
    offline: BTreeSet<usize>,
    quorum: usize,
    period: u64,
    parent: Option<RelayId>,
    children: BTreeMap<RelayId, RelayTrust>,
    pending: BTreeMap<Digest, Digest>,
    index: BTreeMap<Digest, Location>,
    cycles: Vec<CommittedCycle>,
    aggregated: BTreeMap<(RelayId, u64), RelayCommitment>,
}

impl Relay {
    pub fn new<R: RngCore + CryptoRng>(
        config: RelayConfig,
        rng: &mut R,
    ) -> Result<Self, RelayError> {
        validate_relay_id(&config.id)?;
        if config.endorsers == 0 {
            return Err(RelayError::Config(
                "a relay needs at least one endorser".into(),
            ));
        }
        let quorum = config.quorum.unwrap_or(config.endorsers);
        if quorum == 0 || quorum > config.endorsers {
            return Err(RelayError::Config(format!(
                "quorum {quorum} out of range for {} endorsers",
                config.endorsers
            )));
        }
        if config.period == 0 {
            return Err(RelayError::Config("cycle period must be positive".into()));
        }
        if config.parent.as_deref() == Some(config.id.as_str()) {
            return Err(RelayError::Config(format!(
                "relay {} is its own parent",
                config.id
            )));
        }
        let endorsers = (0..config.endorsers)
            .map(|_| AuthKeyPair::generate(rng))
            .collect();
        Ok(Relay {
            id: config.id,
            endorsers,
            offline: BTreeSet::new(),
            quorum,
            period: config.period,
            parent: config.parent,
            children: BTreeMap::new(),
            pending: BTreeMap::new(),
            index: BTreeMap::new(),
            cycles: Vec::new(),
            aggregated: BTreeMap::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn parent(&self) -> Option<&str> {
        self.parent.as_deref()
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn trust(&self) -> RelayTrust {
        RelayTrust {
            endorsers: self.endorsers.iter().map(|k| k.public()).collect(),
            quorum: self.quorum,
            parent: self.parent.clone(),
        }
    }

    pub fn register_child(&mut self, child: RelayId, trust: RelayTrust) {
        self.children.insert(child, trust);
    }

    pub fn set_endorser_online(&mut self, index: usize, online: bool) {
        if online {
            self.offline.remove(&index);
        } else {
            self.offline.insert(index);
        }
    }

    pub fn endorser_count(&self) -> usize {
        self.endorsers.len()
    }

    /// Whether a commitment is due at `cycle` under this relay's period.
    pub fn is_due(&self, cycle: u64) -> bool {
        match self.cycles.last() {
            None => true,
            Some(c) => cycle >= c.commitment.body.timestamp + self.period,
        }
    }

    pub fn next_sequence(&self) -> u64 {
        self.cycles.len() as u64
    }

    pub fn latest(&self) -> Option<&RelayCommitment> {
        self.cycles.last().map(|c| &c.commitment)
    }

    pub fn commitment(&self, sequence: u64) -> Option<&RelayCommitment> {
        self.cycles.get(sequence as usize).map(|c| &c.commitment)
    }

    pub fn commitments(&self) -> impl Iterator<Item = &RelayCommitment> {
        self.cycles.iter().map(|c| &c.commitment)
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Every committed entry, in cycle order.
    pub fn committed_entries(&self) -> impl Iterator<Item = &CycleEntry> {
        self.cycles.iter().flat_map(|c| c.entries.iter())
    }

    pub fn submit(&mut self, entry: CycleEntry) -> Result<SubmitOutcome, RelayError> {
        touch(Service::Relay);
        let next = self.next_sequence();
        if let Some(loc) = self.index.get(&entry.state_digest) {
            return if loc.successor == entry.successor_digest {
                Ok(SubmitOutcome::DuplicateIdempotent(
                    self.receipt(loc.sequence),
                ))
            } else {
                Err(RelayError::ConflictingSuccessor {
                    state: entry.state_digest,
                    existing: loc.successor,
                    attempted: entry.successor_digest,
                })
            };
        }
        match self.pending.get(&entry.state_digest) {
            Some(s) if *s == entry.successor_digest => {
                Ok(SubmitOutcome::DuplicateIdempotent(self.receipt(next)))
            }
            Some(s) => Err(RelayError::ConflictingSuccessor {
                state: entry.state_digest,
                existing: *s,
                attempted: entry.successor_digest,
            }),
            None => {
                self.pending
                    .insert(entry.state_digest, entry.successor_digest);
                Ok(SubmitOutcome::Queued(self.receipt(next)))
            }
        }
    }

    fn receipt(&self, sequence: u64) -> Receipt {
        Receipt {
            relay_id: self.id.clone(),
            sequence,
        }
    }

    fn endorse(&self, body: CommitmentBody) -> Result<RelayCommitment, RelayError> {
        let online: Vec<&AuthKeyPair> = self
            .endorsers
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.offline.contains(i))
            .map(|(_, k)| k)
            .collect();
        if online.len() < self.quorum {
            return Err(RelayError::QuorumUnavailable {
                available: online.len(),
                quorum: self.quorum,
            });
        }
        let digest = crate::codec::selector(&body);
        let endorsements = online
            .into_iter()
            .map(|k| Endorsement {
                endorser: k.public(),
                signature: k.sign_digest(&digest),
            })
            .collect();
        Ok(RelayCommitment { body, endorsements })
    }

    /// Publishes the queued entries as the next commitment. Empty cycles
    /// still publish. On `QuorumUnavailable` the queue is kept for the next
    /// attempt.
    pub fn commit_cycle(&mut self, timestamp: u64) -> Result<RelayCommitment, RelayError> {
        touch(Service::Relay);
        let entries: Vec<CycleEntry> = self
            .pending
            .iter()
            .map(|(s, t)| CycleEntry::new(*s, *t))
            .collect();
        let leaves: Vec<Digest> = entries.iter().map(merkle::leaf_hash).collect();
        let body = CommitmentBody {
            relay_id: self.id.clone(),
            sequence: self.next_sequence(),
            previous: self.latest().map(|c| c.digest()).unwrap_or(Digest::ZERO),
            batch_root: merkle::root_of(&leaves),
            timestamp,
            entry_count: entries.len() as u64,
        };
        let commitment = self.endorse(body)?;
        let sequence = commitment.body.sequence;
        for e in &entries {
            self.index.insert(
                e.state_digest,
                Location {
                    successor: e.successor_digest,
                    sequence,
                },
            );
        }
        self.pending.clear();
        self.cycles.push(CommittedCycle {
            commitment: commitment.clone(),
            entries,
        });
        Ok(commitment)
    }

    pub fn prove_inclusion(&self, entry: &CycleEntry) -> Result<InclusionProof, RelayError> {
        touch(Service::Relay);
        let loc = match self.index.get(&entry.state_digest) {
            Some(loc) if loc.successor == entry.successor_digest => *loc,
            Some(_) => return Err(RelayError::UnknownEntry),
            None => {
                return match self.pending.get(&entry.state_digest) {
                    Some(s) if *s == entry.successor_digest => Err(RelayError::NotCommittedYet),
                    _ => Err(RelayError::UnknownEntry),
                }
            }
        };
        let cycle = &self.cycles[loc.sequence as usize];
        let pos = cycle
            .entries
            .binary_search_by(|e| e.state_digest.cmp(&entry.state_digest))
            .map_err(|_| RelayError::UnknownEntry)?;
        let leaves: Vec<Digest> = cycle.entries.iter().map(merkle::leaf_hash).collect();
        let levels = merkle::levels(&leaves);
        Ok(InclusionProof {
            leaf: *entry,
            path: merkle::path_for(&levels, pos),
            relay_id: self.id.clone(),
            sequence: loc.sequence,
        })
    }

    /// The committed successor of `state`, if any.
    pub fn successor_of(&self, state: &Digest) -> Option<(Digest, u64)> {
        touch(Service::Relay);
        self.index.get(state).map(|l| (l.successor, l.sequence))
    }

    /// Queues a child relay's commitment as an entry keyed by its position.
    pub fn aggregate(&mut self, child: &RelayCommitment) -> Result<SubmitOutcome, RelayError> {
        touch(Service::Relay);
        let trust = self
            .children
            .get(&child.body.relay_id)
            .ok_or_else(|| RelayError::UnknownChild(child.body.relay_id.clone()))?;
        if !trust.endorsed(child) {
            return Err(RelayError::BadChildEndorsement);
        }
        let entry = CycleEntry::new(child.position().digest(), child.digest());
        let outcome = self.submit(entry)?;
        self.aggregated
            .entry((child.body.relay_id.clone(), child.body.sequence))
            .or_insert_with(|| child.clone());
        Ok(outcome)
    }

    /// The child commitment this relay accepted for a position.
    pub fn aggregated_commitment(&self, child: &str, sequence: u64) -> Option<&RelayCommitment> {
        self.aggregated.get(&(child.to_string(), sequence))
    }

    /// Inclusion proof and parent commitment for an aggregated child
    /// commitment.
    pub fn prove_aggregation(
        &self,
        child: &RelayCommitment,
    ) -> Result<(InclusionProof, RelayCommitment), RelayError> {
        let entry = CycleEntry::new(child.position().digest(), child.digest());
        let proof = self.prove_inclusion(&entry)?;
        let commitment = self.cycles[proof.sequence as usize].commitment.clone();
        Ok((proof, commitment))
    }

    /// Fault injection: an alternative commitment for `sequence`, same
    /// previous link, different root, endorsed by the relay's own keys.
    pub fn forge_fork(&self, sequence: u64, junk: Digest) -> Option<RelayCommitment> {
        let real = self.commitment(sequence)?;
        let mut body = real.body.clone();
        body.batch_root = merkle::root_of(&[junk]);
        body.entry_count = 1;
        let digest = crate::codec::selector(&body);
        let endorsements = self
            .endorsers
            .iter()
            .map(|k| Endorsement {
                endorser: k.public(),
                signature: k.sign_digest(&digest),
            })
            .collect();
        Some(RelayCommitment { body, endorsements })
    }

    /// Everything the relay stores, encoded, for obliviousness checks.
    pub fn stored_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        for (s, t) in &self.pending {
            enc.digest(s).digest(t);
        }
        for (s, l) in &self.index {
            enc.digest(s).digest(&l.successor).u64(l.sequence);
        }
        for c in &self.cycles {
            enc.fixed(c.commitment.to_canonical().as_slice());
            for e in &c.entries {
                enc.object(e);
            }
        }
        for c in self.aggregated.values() {
            enc.fixed(c.to_canonical().as_slice());
        }
        enc.finish()
    }
}
