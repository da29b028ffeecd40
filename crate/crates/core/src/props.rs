//! Property tests that need the crate-private fixture.

use std::collections::BTreeMap;

use proptest::prelude::*;

use crate::asset::{create_transfer, verify_asset, Asset, Finality, OwnerLock};
use crate::blindsig::{unblind, Signature};
use crate::codec::Canonical;
use crate::keys::AuthKeyPair;
use crate::mint::monitoring::{audit, check_records, Action, PlateRegistry};
use crate::mint::Consumed;
use crate::testkit::Kit;

#[derive(Clone, Debug)]
enum MintOp {
    Withdraw(&'static str),
    Recycle(usize),
    Redeem(usize),
    Replay(usize),
}

fn mint_op() -> impl Strategy<Value = MintOp> {
    prop_oneof![
        3 => prop_oneof![Just("p100"), Just("p50")].prop_map(MintOp::Withdraw),
        1 => any::<usize>().prop_map(MintOp::Recycle),
        1 => any::<usize>().prop_map(MintOp::Redeem),
        1 => any::<usize>().prop_map(MintOp::Replay),
    ]
}

fn plate_of(d: u64) -> &'static str {
    if d == 100 {
        "p100"
    } else {
        "p50"
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Any interleaving of withdrawals, recycles, redemptions and replays
    /// keeps plate counters equal to a plain ledger model, and the records
    /// audit clean.
    #[test]
    fn mint_matches_ledger_model(seed in 0u64..1000, ops in prop::collection::vec(mint_op(), 1..14)) {
        let mut kit = Kit::new(seed);
        let mut live: Vec<(Asset, Signature, AuthKeyPair)> = Vec::new();
        let mut spent: Vec<Asset> = Vec::new();
        let mut issued: BTreeMap<&str, u64> = BTreeMap::new();
        let mut redeemed: BTreeMap<&str, u64> = BTreeMap::new();
        for op in ops {
            match op {
                MintOp::Withdraw(p) => {
                    let w = kit.withdraw(p);
                    *issued.entry(p).or_default() += w.0.denomination();
                    live.push(w);
                }
                MintOp::Recycle(i) | MintOp::Redeem(i) if !live.is_empty() => {
                    let (a, sig, owner) = live.remove(i % live.len());
                    let d = a.denomination();
                    let to = OwnerLock::key(kit.minter.public_key());
                    let surrendered = kit.pay(&a, Some(&sig), &owner, to, None);
                    if matches!(op, MintOp::Recycle(_)) {
                        // the recycle pays for a new asset of the same value
                        let (fresh, factor, blinded, holder) = kit.template(plate_of(d));
                        let cycle = kit.cycle;
                        let (s, _) = kit.minter.recycle(plate_of(d), Consumed::Asset(&surrendered), &blinded, cycle).unwrap();
                        *issued.entry(plate_of(d)).or_default() += d;
                        live.push((fresh, unblind(&s, factor), holder));
                    } else {
                        let cycle = kit.cycle;
                        kit.minter.redeem(&surrendered, cycle).unwrap();
                    }
                    *redeemed.entry(plate_of(d)).or_default() += d;
                    spent.push(surrendered);
                }
                MintOp::Replay(i) if !spent.is_empty() => {
                    let a = spent[i % spent.len()].clone();
                    let before = kit.minter.records().len();
                    let cycle = kit.cycle;
                    prop_assert!(kit.minter.redeem(&a, cycle).is_err());
                    let (_, _, blinded, _) = kit.template(plate_of(a.denomination()));
                    prop_assert!(kit.minter.recycle(plate_of(a.denomination()), Consumed::Asset(&a), &blinded, cycle).is_err());
                    prop_assert_eq!(kit.minter.records().len(), before);
                }
                _ => {}
            }
            for p in kit.minter.plates() {
                let id = p.plate_id.as_str();
                let want = *issued.get(id).unwrap_or(&0) as i128 - *redeemed.get(id).unwrap_or(&0) as i128;
                prop_assert_eq!(p.in_flight(), want, "plate {}", id);
            }
            let outstanding: u64 = live.iter().map(|l| l.0.denomination()).sum();
            let in_flight: i128 = kit.minter.plates().map(|p| p.in_flight()).sum();
            prop_assert_eq!(in_flight, outstanding as i128);
        }
        let records = kit.minter.records();
        for r in records.iter().filter(|r| r.action == Action::Recycle) {
            prop_assert_eq!(r.value_destroyed, r.value_signed);
        }
        let minters = BTreeMap::from([(kit.minter.id().to_string(), kit.minter.public_key())]);
        prop_assert!(check_records(records, &minters).is_empty());
        let registry = PlateRegistry { minters, plates: kit.minter.snapshots() };
        prop_assert!(audit(records, &registry).clean());
    }
}

/// A three-hop asset that verifies, plus the keys along the way.
fn chain(seed: u64) -> (Kit, Asset, Vec<AuthKeyPair>) {
    let mut kit = Kit::new(seed);
    let (a, sig, alice) = kit.withdraw("p100");
    let bob = AuthKeyPair::generate(&mut kit.rng);
    let carol = AuthKeyPair::generate(&mut kit.rng);
    let dave = AuthKeyPair::generate(&mut kit.rng);
    let a = kit.pay(&a, Some(&sig), &alice, OwnerLock::key(bob.public()), None);
    let a = kit.pay(&a, None, &bob, OwnerLock::key(carol.public()), None);
    let a = kit.pay(&a, None, &carol, OwnerLock::key(dave.public()), None);
    (kit, a, vec![alice, bob, carol, dave])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Flipping any bit of a verifying asset either breaks decoding or
    /// breaks verification.
    #[test]
    fn bit_flips_never_verify(seed in 0u64..4, pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let (kit, asset, _) = chain(seed);
        let trust = kit.trust();
        prop_assert!(verify_asset(&asset, &trust).passed());
        let mut bytes = asset.to_canonical().0;
        let i = pos.index(bytes.len());
        bytes[i] ^= 1 << bit;
        if let Ok(forged) = Asset::from_canonical(&bytes) {
            prop_assert!(!verify_asset(&forged, &trust).passed(), "byte {} bit {} still verifies", i, bit);
        }
    }
}

#[test]
fn structural_forgeries_fail() {
    let (mut kit, asset, keys) = chain(11);
    let trust = kit.trust();
    let mallory = AuthKeyPair::generate(&mut kit.rng);

    // drop the middle hop
    let mut skipped = asset.clone();
    skipped.updates.remove(1);
    skipped.proof.steps.remove(1);
    assert!(!verify_asset(&skipped, &trust).passed());

    // an outsider signs the next hop
    let u = create_transfer(
        &asset,
        None,
        OwnerLock::key(mallory.public()),
        None,
        &mallory,
        None,
    );
    if let Ok(u) = u {
        let forged = kit.register(&asset.with_update(u));
        assert_eq!(verify_asset(&forged, &trust).finality, Finality::Invalid);
    }

    // a past owner re-spends from an earlier state
    let mut past = asset.clone();
    past.updates.truncate(1);
    past.proof.steps.truncate(1);
    let fork = create_transfer(
        &past,
        None,
        OwnerLock::key(mallory.public()),
        None,
        &keys[1],
        None,
    )
    .unwrap();
    let fork = past.with_update(fork);
    let entry = fork.last_entry().unwrap();
    assert!(
        kit.relay.submit(entry).is_err(),
        "relay accepted a second successor"
    );

    // proof steps stripped
    let mut bare = asset.clone();
    bare.proof.steps.clear();
    assert!(!verify_asset(&bare, &trust).passed());

    // proof steps swapped
    let mut swapped = asset.clone();
    swapped.proof.steps.swap(0, 2);
    assert!(!verify_asset(&swapped, &trust).passed());
}
