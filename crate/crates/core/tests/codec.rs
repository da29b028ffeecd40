use proptest::prelude::*;

use sha2::{Digest as _, Sha256};
use uso_cbdc::codec::{selector, Canonical, Digest};
use uso_cbdc::relay::{CycleEntry, InclusionProof, PathStep, RelayPosition, Side};

fn digest() -> impl Strategy<Value = Digest> {
    any::<[u8; 32]>().prop_map(Digest)
}

fn entry() -> impl Strategy<Value = CycleEntry> {
    (digest(), digest()).prop_map(|(a, b)| CycleEntry::new(a, b))
}

fn step() -> impl Strategy<Value = PathStep> {
    (digest(), any::<bool>()).prop_map(|(sibling, left)| PathStep {
        sibling,
        side: if left { Side::Left } else { Side::Right },
    })
}

fn proof() -> impl Strategy<Value = InclusionProof> {
    (
        entry(),
        prop::collection::vec(step(), 0..8),
        "[a-z][a-z0-9-]{0,15}",
        any::<u64>(),
    )
        .prop_map(|(leaf, path, relay_id, sequence)| InclusionProof {
            leaf,
            path,
            relay_id,
            sequence,
        })
}

// hand-built encodings: tag byte, u32 length prefixes, big-endian integers
fn oracle_position(p: &RelayPosition) -> Vec<u8> {
    let mut out = vec![RelayPosition::TAG];
    out.extend((p.relay_id.len() as u32).to_be_bytes());
    out.extend(p.relay_id.as_bytes());
    out.extend(p.sequence.to_be_bytes());
    out
}

fn oracle_entry(e: &CycleEntry) -> Vec<u8> {
    let mut out = vec![CycleEntry::TAG];
    out.extend(e.state_digest.0);
    out.extend(e.successor_digest.0);
    out
}

proptest! {
    #[test]
    fn entry_matches_hand_encoding(e in entry()) {
        let bytes = e.to_canonical().0;
        prop_assert_eq!(&bytes, &oracle_entry(&e));
        prop_assert_eq!(selector(&e).0, <[u8; 32]>::from(Sha256::digest(&bytes)));
        prop_assert_eq!(CycleEntry::from_canonical(&bytes).unwrap(), e);
    }

    #[test]
    fn position_matches_hand_encoding(relay_id in "\\PC{0,24}", sequence in any::<u64>()) {
        let p = RelayPosition { relay_id, sequence };
        let bytes = p.to_canonical().0;
        prop_assert_eq!(&bytes, &oracle_position(&p));
        prop_assert_eq!(RelayPosition::from_canonical(&bytes).unwrap(), p);
    }

    #[test]
    fn proofs_round_trip(p in proof()) {
        let bytes = p.to_canonical().0;
        prop_assert_eq!(InclusionProof::from_canonical(&bytes).unwrap(), p);
    }

    #[test]
    fn truncation_and_trailing_bytes_rejected(p in proof(), cut in any::<prop::sample::Index>(), extra in any::<u8>()) {
        let bytes = p.to_canonical().0;
        let n = cut.index(bytes.len());
        prop_assert!(InclusionProof::from_canonical(&bytes[..n]).is_err());
        let mut longer = bytes.clone();
        longer.push(extra);
        prop_assert!(InclusionProof::from_canonical(&longer).is_err());
    }

    #[test]
    fn distinct_objects_have_distinct_selectors(a in entry(), b in entry()) {
        prop_assume!(a != b);
        prop_assert_ne!(selector(&a), selector(&b));
    }
}
