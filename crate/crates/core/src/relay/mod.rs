//! Oblivious commitment relays.
//!
//! A relay accepts `(state, successor)` digest pairs, keeps at most one
//! successor per state, and once per cycle publishes an endorsed commitment
//! over a Merkle root of the queued pairs. Commitments chain by digest.
//! Relays may aggregate the commitments of child relays, which extends a
//! proof of provenance from a local relay up to a root relay.

pub mod equivocation;
pub mod ledger;
pub mod merkle;
mod node;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::{selector, tags, Canonical, CodecError, Decoder, Digest, Encoder};
use crate::keys::{AuthSignature, PublicKey};

pub use equivocation::{detect_equivocation, EquivocationEvidence};
pub use merkle::{PathStep, Side};
pub use node::{Relay, RelayConfig};

pub type RelayId = String;

pub fn validate_relay_id(id: &str) -> Result<(), RelayError> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(RelayError::Config(format!("invalid relay id {id:?}")))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RelayError {
    #[error("state {state:?} already has successor {existing:?}")]
    ConflictingSuccessor {
        state: Digest,
        existing: Digest,
        attempted: Digest,
    },
    #[error("entry is queued but its cycle has not been committed")]
    NotCommittedYet,
    #[error("entry unknown to this relay")]
    UnknownEntry,
    #[error("only {available} endorsers available, quorum is {quorum}")]
    QuorumUnavailable { available: usize, quorum: usize },
    #[error("relay {0} is not a registered child")]
    UnknownChild(RelayId),
    #[error("child commitment lacks a valid endorsement quorum")]
    BadChildEndorsement,
    #[error("relay configuration: {0}")]
    Config(String),
}

/// One submitted digest pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CycleEntry {
    pub state_digest: Digest,
    pub successor_digest: Digest,
}

impl CycleEntry {
    pub fn new(state_digest: Digest, successor_digest: Digest) -> Self {
        CycleEntry {
            state_digest,
            successor_digest,
        }
    }
}

impl Canonical for CycleEntry {
    const TAG: u8 = tags::CYCLE_ENTRY;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.digest(&self.state_digest)
            .digest(&self.successor_digest);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(CycleEntry {
            state_digest: dec.digest()?,
            successor_digest: dec.digest()?,
        })
    }
}

/// `(relay, sequence)` as a leaf key in a parent relay. Aggregating a child
/// commitment submits `(position digest, commitment digest)`, so the parent
/// admits at most one commitment per child position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelayPosition {
    pub relay_id: RelayId,
    pub sequence: u64,
}

impl RelayPosition {
    pub fn digest(&self) -> Digest {
        selector(self)
    }
}

impl Canonical for RelayPosition {
    const TAG: u8 = tags::RELAY_POSITION;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.str(&self.relay_id).u64(self.sequence);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(RelayPosition {
            relay_id: dec.str()?,
            sequence: dec.u64()?,
        })
    }
}

/// The endorsed part of a commitment.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CommitmentBody {
    pub relay_id: RelayId,
    pub sequence: u64,
    pub previous: Digest,
    pub batch_root: Digest,
    pub timestamp: u64,
    pub entry_count: u64,
}

impl Canonical for CommitmentBody {
    const TAG: u8 = tags::COMMITMENT_BODY;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.str(&self.relay_id)
            .u64(self.sequence)
            .digest(&self.previous)
            .digest(&self.batch_root)
            .u64(self.timestamp)
            .u64(self.entry_count);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(CommitmentBody {
            relay_id: dec.str()?,
            sequence: dec.u64()?,
            previous: dec.digest()?,
            batch_root: dec.digest()?,
            timestamp: dec.u64()?,
            entry_count: dec.u64()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Endorsement {
    pub endorser: PublicKey,
    pub signature: AuthSignature,
}

impl Canonical for Endorsement {
    const TAG: u8 = tags::ENDORSEMENT;

    fn encode_fields(&self, enc: &mut Encoder) {
        self.endorser.encode(enc);
        self.signature.encode(enc);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Endorsement {
            endorser: PublicKey::decode(dec)?,
            signature: AuthSignature::decode(dec)?,
        })
    }
}

/// A published cycle commitment.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RelayCommitment {
    pub body: CommitmentBody,
    pub endorsements: Vec<Endorsement>,
}

impl RelayCommitment {
    pub fn relay_id(&self) -> &str {
        &self.body.relay_id
    }

    pub fn sequence(&self) -> u64 {
        self.body.sequence
    }

    pub fn batch_root(&self) -> Digest {
        self.body.batch_root
    }

    pub fn previous(&self) -> Digest {
        self.body.previous
    }

    /// The commitment hash: selector of the body. Endorsement sets do not
    /// affect it.
    pub fn digest(&self) -> Digest {
        selector(&self.body)
    }

    pub fn position(&self) -> RelayPosition {
        RelayPosition {
            relay_id: self.body.relay_id.clone(),
            sequence: self.body.sequence,
        }
    }
}

impl Canonical for RelayCommitment {
    const TAG: u8 = tags::RELAY_COMMITMENT;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.object(&self.body).list(&self.endorsements, |e, x| {
            e.object(x);
        });
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(RelayCommitment {
            body: dec.object()?,
            endorsements: dec.list(|d| d.object())?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InclusionProof {
    pub leaf: CycleEntry,
    pub path: Vec<PathStep>,
    pub relay_id: RelayId,
    pub sequence: u64,
}

impl InclusionProof {
    /// True iff the proof names `commitment` and folds to its batch root.
    pub fn verify(&self, commitment: &RelayCommitment) -> bool {
        self.relay_id == commitment.body.relay_id
            && self.sequence == commitment.body.sequence
            && merkle::fold(merkle::leaf_hash(&self.leaf), &self.path) == commitment.body.batch_root
    }
}

impl Canonical for InclusionProof {
    const TAG: u8 = tags::INCLUSION_PROOF;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.object(&self.leaf)
            .list(&self.path, |e, p| p.encode(e))
            .str(&self.relay_id)
            .u64(self.sequence);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(InclusionProof {
            leaf: dec.object()?,
            path: dec.list(PathStep::decode)?,
            relay_id: dec.str()?,
            sequence: dec.u64()?,
        })
    }
}

/// Names the cycle a queued entry will be committed in.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Receipt {
    pub relay_id: RelayId,
    pub sequence: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SubmitOutcome {
    Queued(Receipt),
    /// The identical pair was already known; nothing new was queued.
    DuplicateIdempotent(Receipt),
}

impl SubmitOutcome {
    pub fn receipt(&self) -> &Receipt {
        match self {
            SubmitOutcome::Queued(r) | SubmitOutcome::DuplicateIdempotent(r) => r,
        }
    }
}

/// What a verifier needs to know about one relay.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelayTrust {
    pub endorsers: Vec<PublicKey>,
    pub quorum: usize,
    pub parent: Option<RelayId>,
}

impl RelayTrust {
    /// Counts distinct configured endorsers with a valid signature over the
    /// commitment digest.
    pub fn valid_endorsements(&self, commitment: &RelayCommitment) -> usize {
        let digest = commitment.digest();
        let mut seen = Vec::new();
        for e in &commitment.endorsements {
            if self.endorsers.contains(&e.endorser)
                && !seen.contains(&e.endorser)
                && e.endorser.verify(digest.as_bytes(), &e.signature)
            {
                seen.push(e.endorser);
            }
        }
        seen.len()
    }

    pub fn endorsed(&self, commitment: &RelayCommitment) -> bool {
        self.quorum > 0 && self.valid_endorsements(commitment) >= self.quorum
    }
}

pub type RelayDirectory = BTreeMap<RelayId, RelayTrust>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("commitment {index} has sequence {found}, expected {expected}")]
    SequenceGap {
        index: usize,
        expected: u64,
        found: u64,
    },
    #[error("commitment {index} does not link to its predecessor")]
    BrokenLink { index: usize },
    #[error("commitment {index} belongs to relay {found}, expected {expected}")]
    ForeignRelay {
        index: usize,
        expected: RelayId,
        found: RelayId,
    },
}

/// Checks that `commitments` form one chain: one relay, consecutive
/// sequences, each `previous` equal to the digest of its predecessor.
pub fn verify_commitment_chain(commitments: &[RelayCommitment]) -> Result<(), ChainError> {
    for (i, pair) in commitments.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if a.body.relay_id != b.body.relay_id {
            return Err(ChainError::ForeignRelay {
                index: i + 1,
                expected: a.body.relay_id.clone(),
                found: b.body.relay_id.clone(),
            });
        }
        if b.body.sequence != a.body.sequence + 1 {
            return Err(ChainError::SequenceGap {
                index: i + 1,
                expected: a.body.sequence + 1,
                found: b.body.sequence,
            });
        }
        if b.body.previous != a.digest() {
            return Err(ChainError::BrokenLink { index: i + 1 });
        }
    }
    if let Some(first) = commitments.first() {
        if first.body.sequence == 0 && first.body.previous != Digest::ZERO {
            return Err(ChainError::BrokenLink { index: 0 });
        }
    }
    Ok(())
}

/// Checks that no state digest has two successors across `entries`.
pub fn one_successor_violations<'a>(
    entries: impl IntoIterator<Item = &'a CycleEntry>,
) -> Vec<(Digest, Digest, Digest)> {
    let mut seen: BTreeMap<Digest, Digest> = BTreeMap::new();
    let mut out = Vec::new();
    for e in entries {
        match seen.get(&e.state_digest) {
            Some(s) if *s != e.successor_digest => {
                out.push((e.state_digest, *s, e.successor_digest))
            }
            Some(_) => {}
            None => {
                seen.insert(e.state_digest, e.successor_digest);
            }
        }
    }
    out
}
