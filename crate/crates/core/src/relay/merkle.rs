//! Binary Merkle tree over a cycle's entries.
//!
//! Leaves are the cycle entries sorted by state digest. Each level pairs
//! adjacent nodes left to right; an odd trailing node is promoted to the next
//! level unchanged. The root of an empty cycle is `SHA-256("EMPTY-CYCLE")`.
//! Leaf and interior hashes are domain-separated by a one-byte prefix.

use crate::codec::{CodecError, Decoder, Digest, Encoder};

use super::CycleEntry;

pub const EMPTY_CYCLE_TAG: &[u8] = b"EMPTY-CYCLE";

const LEAF_PREFIX: u8 = 0x00;
const NODE_PREFIX: u8 = 0x01;

pub fn empty_root() -> Digest {
    Digest::hash(EMPTY_CYCLE_TAG)
}

pub fn leaf_hash(entry: &CycleEntry) -> Digest {
    Digest::hash_parts(&[
        &[LEAF_PREFIX],
        entry.state_digest.as_bytes(),
        entry.successor_digest.as_bytes(),
    ])
}

pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    Digest::hash_parts(&[&[NODE_PREFIX], left.as_bytes(), right.as_bytes()])
}

/// Which side of the running hash the sibling sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PathStep {
    pub sibling: Digest,
    pub side: Side,
}

impl PathStep {
    pub fn encode(&self, enc: &mut Encoder) {
        enc.u8(match self.side {
            Side::Left => 0,
            Side::Right => 1,
        })
        .digest(&self.sibling);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let side = match dec.u8()? {
            0 => Side::Left,
            1 => Side::Right,
            _ => return Err(CodecError::Invalid("path side")),
        };
        Ok(PathStep {
            side,
            sibling: dec.digest()?,
        })
    }
}

/// All levels of the tree, leaves first. Empty input yields no levels.
pub fn levels(leaves: &[Digest]) -> Vec<Vec<Digest>> {
    let mut out = Vec::new();
    if leaves.is_empty() {
        return out;
    }
    let mut cur = leaves.to_vec();
    while cur.len() > 1 {
        let next = cur
            .chunks(2)
            .map(|pair| match pair {
                [l, r] => node_hash(l, r),
                [single] => *single,
                _ => unreachable!(),
            })
            .collect();
        out.push(std::mem::replace(&mut cur, next));
    }
    out.push(cur);
    out
}

pub fn root_of(leaves: &[Digest]) -> Digest {
    match levels(leaves).last() {
        Some(top) => top[0],
        None => empty_root(),
    }
}

pub fn path_for(levels: &[Vec<Digest>], mut index: usize) -> Vec<PathStep> {
    let mut path = Vec::new();
    for level in &levels[..levels.len().saturating_sub(1)] {
        let promoted = index == level.len() - 1 && level.len() % 2 == 1;
        if !promoted {
            let (sibling, side) = if index.is_multiple_of(2) {
                (level[index + 1], Side::Right)
            } else {
                (level[index - 1], Side::Left)
            };
            path.push(PathStep { sibling, side });
        }
        index /= 2;
    }
    path
}

pub fn fold(leaf: Digest, path: &[PathStep]) -> Digest {
    path.iter().fold(leaf, |acc, step| match step.side {
        Side::Left => node_hash(&step.sibling, &acc),
        Side::Right => node_hash(&acc, &step.sibling),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaves(n: usize) -> Vec<Digest> {
        (0..n)
            .map(|i| Digest::hash(&(i as u64).to_be_bytes()))
            .collect()
    }

    #[test]
    fn empty_and_singleton() {
        assert_eq!(root_of(&[]), Digest::hash(b"EMPTY-CYCLE"));
        let l = leaves(1);
        assert_eq!(root_of(&l), l[0]);
        assert!(path_for(&levels(&l), 0).is_empty());
    }

    #[test]
    fn three_leaves_promote_the_last() {
        let l = leaves(3);
        let expected = node_hash(&node_hash(&l[0], &l[1]), &l[2]);
        assert_eq!(root_of(&l), expected);
        // the promoted leaf has a single-step path
        let p = path_for(&levels(&l), 2);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].side, Side::Left);
    }

    #[test]
    fn every_path_folds_to_root() {
        for n in 1..40 {
            let l = leaves(n);
            let lv = levels(&l);
            let root = root_of(&l);
            for (i, leaf) in l.iter().enumerate() {
                assert_eq!(fold(*leaf, &path_for(&lv, i)), root, "n={n} i={i}");
            }
        }
    }
}
