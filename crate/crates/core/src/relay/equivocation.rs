use crate::codec::{tags, Canonical, CodecError, Decoder, Encoder};

use super::{RelayCommitment, RelayDirectory};

/// Two endorsed commitments for one relay position that disagree on the
/// batch root or the previous link. Checkable by anyone holding the relay's
/// endorser keys.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivocationEvidence {
    pub first: RelayCommitment,
    pub second: RelayCommitment,
}

fn conflicting(a: &RelayCommitment, b: &RelayCommitment) -> bool {
    a.body.relay_id == b.body.relay_id
        && a.body.sequence == b.body.sequence
        && (a.body.batch_root != b.body.batch_root || a.body.previous != b.body.previous)
}

pub fn detect_equivocation(
    a: &RelayCommitment,
    b: &RelayCommitment,
) -> Option<EquivocationEvidence> {
    conflicting(a, b).then(|| {
        // canonical order so the same pair always yields the same evidence
        let (first, second) = if a.digest() <= b.digest() {
            (a, b)
        } else {
            (b, a)
        };
        EquivocationEvidence {
            first: first.clone(),
            second: second.clone(),
        }
    })
}

impl EquivocationEvidence {
    /// Both commitments carry a quorum of the relay's endorsements and
    /// conflict at the same position.
    pub fn verify(&self, directory: &RelayDirectory) -> bool {
        let Some(trust) = directory.get(&self.first.body.relay_id) else {
            return false;
        };
        conflicting(&self.first, &self.second)
            && trust.endorsed(&self.first)
            && trust.endorsed(&self.second)
    }
}

impl Canonical for EquivocationEvidence {
    const TAG: u8 = tags::EQUIVOCATION_EVIDENCE;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.object(&self.first).object(&self.second);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(EquivocationEvidence {
            first: dec.object()?,
            second: dec.object()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Digest;
    use crate::relay::{CycleEntry, Relay, RelayConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn setup() -> (Relay, RelayDirectory) {
        let mut r = Relay::new(RelayConfig::new("g"), &mut ChaCha20Rng::seed_from_u64(4)).unwrap();
        for t in 0..15u64 {
            r.submit(CycleEntry::new(
                Digest::hash(&t.to_be_bytes()),
                Digest::hash(b"s"),
            ))
            .unwrap();
            r.commit_cycle(t).unwrap();
        }
        let mut dir = RelayDirectory::new();
        dir.insert("g".into(), r.trust());
        (r, dir)
    }

    #[test]
    fn honest_pair_yields_nothing() {
        let (r, _) = setup();
        let a = r.commitment(3).unwrap();
        let b = r.commitment(4).unwrap();
        assert!(detect_equivocation(a, b).is_none());
        assert!(detect_equivocation(a, &a.clone()).is_none());
    }

    #[test]
    fn forked_sequence_twelve_yields_checkable_evidence() {
        let (r, dir) = setup();
        let fork = r.forge_fork(12, Digest::hash(b"other")).unwrap();
        let ev = detect_equivocation(r.commitment(12).unwrap(), &fork).unwrap();
        assert!(ev.verify(&dir));
        let bytes = ev.to_canonical();
        let back = EquivocationEvidence::from_canonical(bytes.as_slice()).unwrap();
        assert!(back.verify(&dir));
    }

    #[test]
    fn unendorsed_fork_is_not_evidence_of_the_relay() {
        let (r, dir) = setup();
        let mut fork = r.forge_fork(2, Digest::hash(b"x")).unwrap();
        fork.endorsements.clear();
        let ev = detect_equivocation(r.commitment(2).unwrap(), &fork).unwrap();
        assert!(!ev.verify(&dir));
    }

    #[test]
    fn differing_previous_counts() {
        let (r, dir) = setup();
        let real = r.commitment(5).unwrap();
        let mut body = real.body.clone();
        body.previous = Digest::hash(b"elsewhere");
        let _ = dir;
        let alt = RelayCommitment {
            body,
            endorsements: vec![],
        };
        assert!(detect_equivocation(real, &alt).is_some());
    }
}
