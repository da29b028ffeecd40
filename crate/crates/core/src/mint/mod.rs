//! Minters recycle value: each blind signature they produce is paid for by
//! destroying a voucher or retiring a spent asset of equal value, and every
//! action is recorded on the monitoring ledger.

pub mod monitoring;

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::asset::{verify_asset, Asset, DenominationCertificate, TrustRoots};
use crate::blindsig::{
    sign_blinded, BlindError, BlindedMessage, IssuerKeyPair, KeyProfile, Signature,
};
use crate::codec::{selector, tags, Canonical, CodecError, Decoder, Digest, Encoder};
use crate::instrumentation::{touch, Service};
use crate::keys::{AuthKeyPair, AuthSignature, PublicKey};

pub use monitoring::{
    audit, audit_in_flight, detect_plate_compromise, Action, Alarm, AuditReport, ConsumedRef,
    MonitoringRecord, PlateRegistry, PlateSnapshot,
};

pub type PlateId = String;

pub const DEFAULT_DENOMINATIONS: [u64; 5] = [1, 5, 10, 50, 100];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MintError {
    #[error("consumed value {consumed} does not match plate denomination {plate}")]
    ValueMismatch { consumed: u64, plate: u64 },
    #[error("plate {0} expired")]
    PlateExpired(PlateId),
    #[error("plate {0} would exceed its in-flight cap")]
    InFlightCapExceeded(PlateId),
    #[error("plate {0} would exceed its cumulative cap")]
    CumulativeCapExceeded(PlateId),
    #[error("already destroyed")]
    AlreadyDestroyed,
    #[error("asset already spent")]
    AlreadySpent,
    #[error("asset does not verify: {0}")]
    VerificationFailed(String),
    #[error("asset has not been surrendered to this minter")]
    NotSurrendered,
    #[error("voucher signature does not verify")]
    BadVoucher,
    #[error("unknown plate {0}")]
    UnknownPlate(PlateId),
    #[error("no plate of this minter signed the asset")]
    ForeignPlate,
    #[error(transparent)]
    Blind(#[from] BlindError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlateLimits {
    pub cap_in_flight: u64,
    pub cap_cumulative: u64,
    /// Last cycle in which the plate may sign.
    pub expiry: u64,
}

/// A denomination-bound signing key with usage limits and counters.
#[derive(Clone, Debug)]
pub struct MintingPlate {
    pub plate_id: PlateId,
    pub key: IssuerKeyPair,
    pub certificate: DenominationCertificate,
    pub denomination: u64,
    pub limits: PlateLimits,
    issued_total: u64,
    redeemed_total: u64,
}

impl MintingPlate {
    /// Generates a plate key and has the central bank certify it.
    pub fn create<R: RngCore + CryptoRng>(
        rng: &mut R,
        central_bank: &AuthKeyPair,
        plate_id: impl Into<PlateId>,
        denomination: u64,
        limits: PlateLimits,
        profile: KeyProfile,
    ) -> Result<Self, MintError> {
        let key = IssuerKeyPair::generate(rng, profile, denomination)?;
        let certificate =
            DenominationCertificate::issue(central_bank, denomination, key.public().clone());
        Ok(MintingPlate {
            plate_id: plate_id.into(),
            key,
            certificate,
            denomination,
            limits,
            issued_total: 0,
            redeemed_total: 0,
        })
    }

    pub fn issued_total(&self) -> u64 {
        self.issued_total
    }

    pub fn redeemed_total(&self) -> u64 {
        self.redeemed_total
    }

    pub fn in_flight(&self) -> i128 {
        self.issued_total as i128 - self.redeemed_total as i128
    }

    fn check_issue(&self, cycle: u64, redeem_same: u64) -> Result<(), MintError> {
        if cycle > self.limits.expiry {
            return Err(MintError::PlateExpired(self.plate_id.clone()));
        }
        let issued = self.issued_total + self.denomination;
        if issued > self.limits.cap_cumulative {
            return Err(MintError::CumulativeCapExceeded(self.plate_id.clone()));
        }
        if issued as i128 - (self.redeemed_total + redeem_same) as i128
            > self.limits.cap_in_flight as i128
        {
            return Err(MintError::InFlightCapExceeded(self.plate_id.clone()));
        }
        Ok(())
    }

    pub fn snapshot(&self, minter_id: &str) -> PlateSnapshot {
        PlateSnapshot {
            plate_id: self.plate_id.clone(),
            minter_id: minter_id.to_string(),
            denomination: self.denomination,
            cap_in_flight: self.limits.cap_in_flight,
            cap_cumulative: self.limits.cap_cumulative,
            expiry: self.limits.expiry,
            issued_total: self.issued_total,
            redeemed_total: self.redeemed_total,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VoucherBody {
    pub voucher_id: String,
    pub value: u64,
}

impl Canonical for VoucherBody {
    const TAG: u8 = tags::VOUCHER_BODY;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.str(&self.voucher_id).u64(self.value);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(VoucherBody {
            voucher_id: dec.str()?,
            value: dec.u64()?,
        })
    }
}

/// A central-bank IOU that a minter destroys in exchange for a signature.
/// Whether it is live or destroyed is tracked by the minters.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Voucher {
    pub body: VoucherBody,
    pub issuer_signature: AuthSignature,
}

impl Voucher {
    pub fn issue(central_bank: &AuthKeyPair, voucher_id: impl Into<String>, value: u64) -> Self {
        let body = VoucherBody {
            voucher_id: voucher_id.into(),
            value,
        };
        Voucher {
            issuer_signature: central_bank.sign_digest(&selector(&body)),
            body,
        }
    }

    pub fn id(&self) -> &str {
        &self.body.voucher_id
    }

    pub fn value(&self) -> u64 {
        self.body.value
    }

    pub fn verify(&self, central_bank: &PublicKey) -> bool {
        central_bank.verify(selector(&self.body).as_bytes(), &self.issuer_signature)
    }
}

impl Canonical for Voucher {
    const TAG: u8 = tags::VOUCHER;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.object(&self.body);
        self.issuer_signature.encode(enc);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Voucher {
            body: dec.object()?,
            issuer_signature: AuthSignature::decode(dec)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VoucherState {
    Live,
    Destroyed,
}

#[derive(Clone, Copy, Debug)]
pub enum Consumed<'a> {
    Voucher(&'a Voucher),
    /// An asset whose newest owner is the minter's intake key.
    Asset(&'a Asset),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Redemption {
    pub value: u64,
    pub record: MonitoringRecord,
}

/// One minter: its plates, spent set, destroyed vouchers and its own
/// append-only stream of monitoring records.
#[derive(Clone, Debug)]
pub struct Minter {
    id: String,
    key: AuthKeyPair,
    trust: TrustRoots,
    plates: BTreeMap<PlateId, MintingPlate>,
    spent: BTreeSet<Digest>,
    destroyed: BTreeSet<String>,
    records: Vec<MonitoringRecord>,
}

impl Minter {
    pub fn new(id: impl Into<String>, key: AuthKeyPair, trust: TrustRoots) -> Self {
        Minter {
            id: id.into(),
            key,
            trust,
            plates: BTreeMap::new(),
            spent: BTreeSet::new(),
            destroyed: BTreeSet::new(),
            records: Vec::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Record-signing key; spent assets are surrendered to it.
    pub fn public_key(&self) -> PublicKey {
        self.key.public()
    }

    pub fn set_trust(&mut self, trust: TrustRoots) {
        self.trust = trust;
    }

    pub fn install_plate(&mut self, plate: MintingPlate) {
        self.plates.insert(plate.plate_id.clone(), plate);
    }

    pub fn plate(&self, id: &str) -> Option<&MintingPlate> {
        self.plates.get(id)
    }

    pub fn plates(&self) -> impl Iterator<Item = &MintingPlate> {
        self.plates.values()
    }

    /// An unexpired plate of this denomination with room for one more
    /// issuance.
    pub fn plate_for(&self, denomination: u64, cycle: u64) -> Option<&MintingPlate> {
        self.plates
            .values()
            .find(|p| p.denomination == denomination && p.check_issue(cycle, 0).is_ok())
    }

    /// The plate whose key signed `asset`.
    pub fn plate_of(&self, asset: &Asset) -> Option<&MintingPlate> {
        let key = &asset.genesis.certificate.plate_key;
        self.plates.values().find(|p| p.key.public() == key)
    }

    pub fn records(&self) -> &[MonitoringRecord] {
        &self.records
    }

    pub fn voucher_state(&self, id: &str) -> VoucherState {
        if self.destroyed.contains(id) {
            VoucherState::Destroyed
        } else {
            VoucherState::Live
        }
    }

    pub fn is_spent(&self, first_update: &Digest) -> bool {
        self.spent.contains(first_update)
    }

    pub fn spent_count(&self) -> usize {
        self.spent.len()
    }

    /// Checks a surrendered asset and returns its spent-set key and plate.
    fn check_surrendered(&self, asset: &Asset) -> Result<(Digest, PlateId), MintError> {
        let report = verify_asset(asset, &self.trust);
        if !report.passed() {
            return Err(MintError::VerificationFailed(format!(
                "{}: {}",
                report.finality,
                report.findings.join("; ")
            )));
        }
        let owner = asset.current_owner();
        if owner.key != self.key.public() || owner.hashlock.is_some() {
            return Err(MintError::NotSurrendered);
        }
        let plate = self.plate_of(asset).ok_or(MintError::ForeignPlate)?;
        let digest = asset
            .first_update_digest()
            .ok_or_else(|| MintError::VerificationFailed("no updates".into()))?;
        Ok((digest, plate.plate_id.clone()))
    }

    fn append(
        &mut self,
        plate_id: &str,
        action: Action,
        destroyed: u64,
        signed: u64,
        consumed: ConsumedRef,
        cycle: u64,
    ) -> MonitoringRecord {
        let record = MonitoringRecord::signed(
            &self.key,
            self.records.len() as u64,
            &self.id,
            plate_id,
            action,
            destroyed,
            signed,
            consumed,
            cycle,
        );
        self.records.push(record.clone());
        record
    }

    /// Destroys `consumed` and signs `blinded` under `plate_id`. Every check
    /// runs before any state changes.
    pub fn recycle(
        &mut self,
        plate_id: &str,
        consumed: Consumed<'_>,
        blinded: &BlindedMessage,
        cycle: u64,
    ) -> Result<(Signature, MonitoringRecord), MintError> {
        touch(Service::Mint);
        let plate = self
            .plates
            .get(plate_id)
            .ok_or_else(|| MintError::UnknownPlate(plate_id.to_string()))?;
        let (value, consumed_ref) = match consumed {
            Consumed::Voucher(v) => {
                if !v.verify(&self.trust.central_bank) {
                    return Err(MintError::BadVoucher);
                }
                if self.destroyed.contains(v.id()) {
                    return Err(MintError::AlreadyDestroyed);
                }
                (v.value(), ConsumedRef::Voucher(v.id().to_string()))
            }
            Consumed::Asset(a) => {
                let (digest, from_plate) = self.check_surrendered(a)?;
                if self.spent.contains(&digest) {
                    return Err(MintError::AlreadyDestroyed);
                }
                (
                    a.denomination(),
                    ConsumedRef::Asset {
                        plate_id: from_plate,
                        digest,
                    },
                )
            }
        };
        if value != plate.denomination {
            return Err(MintError::ValueMismatch {
                consumed: value,
                plate: plate.denomination,
            });
        }
        let same_plate = consumed_ref.redeemed_plate() == Some(plate_id);
        plate.check_issue(cycle, if same_plate { value } else { 0 })?;
        let signature = sign_blinded(blinded, &plate.key)?;

        match &consumed_ref {
            ConsumedRef::Voucher(id) => {
                self.destroyed.insert(id.clone());
            }
            ConsumedRef::Asset {
                plate_id: from,
                digest,
            } => {
                self.spent.insert(*digest);
                if let Some(p) = self.plates.get_mut(from) {
                    p.redeemed_total += value;
                }
            }
        }
        if let Some(p) = self.plates.get_mut(plate_id) {
            p.issued_total += value;
        }
        let record = self.append(plate_id, Action::Recycle, value, value, consumed_ref, cycle);
        Ok((signature, record))
    }

    /// Retires a surrendered asset for reserves. The caller credits the
    /// returned value to the presenting bank.
    pub fn redeem(&mut self, asset: &Asset, cycle: u64) -> Result<Redemption, MintError> {
        touch(Service::Mint);
        let (digest, from) = self.check_surrendered(asset)?;
        if self.spent.contains(&digest) {
            return Err(MintError::AlreadySpent);
        }
        let value = asset.denomination();
        self.spent.insert(digest);
        if let Some(p) = self.plates.get_mut(&from) {
            p.redeemed_total += value;
        }
        let record = self.append(
            &from.clone(),
            Action::Redeem,
            value,
            0,
            ConsumedRef::Asset {
                plate_id: from,
                digest,
            },
            cycle,
        );
        Ok(Redemption { value, record })
    }

    /// Fault injection: a signature with no record and no counter change,
    /// as a thief holding the plate key would produce.
    pub fn sign_unrecorded(
        &self,
        plate_id: &str,
        blinded: &BlindedMessage,
    ) -> Result<Signature, MintError> {
        let plate = self
            .plates
            .get(plate_id)
            .ok_or_else(|| MintError::UnknownPlate(plate_id.to_string()))?;
        Ok(sign_blinded(blinded, &plate.key)?)
    }

    /// Fault injection: a properly signed recycle record that signed twice
    /// the value it destroyed. Plate counters are left alone.
    pub fn inject_unbalanced_record(
        &mut self,
        plate_id: &str,
        cycle: u64,
    ) -> Result<MonitoringRecord, MintError> {
        let d = self
            .plates
            .get(plate_id)
            .ok_or_else(|| MintError::UnknownPlate(plate_id.to_string()))?
            .denomination;
        let consumed = ConsumedRef::Voucher(format!("forged-{}", self.records.len()));
        Ok(self.append(plate_id, Action::Recycle, d, 2 * d, consumed, cycle))
    }

    pub fn snapshots(&self) -> Vec<PlateSnapshot> {
        self.plates.values().map(|p| p.snapshot(&self.id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blindsig::{blind, unblind, verify, BlindingFactor};
    use crate::testkit::{Kit, LIMITS};

    #[test]
    fn voucher_recycle_signs_and_records() {
        let mut k = Kit::new(1);
        let v = k.voucher(100);
        let (a, factor, blinded, _) = k.template("p100");
        let (s, rec) = k
            .minter
            .recycle("p100", Consumed::Voucher(&v), &blinded, 1)
            .unwrap();
        let key = k.minter.plate("p100").unwrap().key.public().clone();
        assert!(verify(&a.genesis.digest(), &unblind(&s, factor), &key));
        assert_eq!((rec.value_destroyed, rec.value_signed), (100, 100));
        assert_eq!(rec.action, Action::Recycle);
        assert_eq!(k.minter.voucher_state(v.id()), VoucherState::Destroyed);
        assert_eq!(k.minter.plate("p100").unwrap().in_flight(), 100);
        assert_eq!(
            k.minter.recycle("p100", Consumed::Voucher(&v), &blinded, 1),
            Err(MintError::AlreadyDestroyed)
        );
    }

    #[test]
    fn denomination_mismatch() {
        let mut k = Kit::new(2);
        let v = k.voucher(100);
        let (_, _, blinded, _) = k.template("p50");
        assert_eq!(
            k.minter.recycle("p50", Consumed::Voucher(&v), &blinded, 1),
            Err(MintError::ValueMismatch {
                consumed: 100,
                plate: 50
            })
        );
        assert_eq!(k.minter.voucher_state(v.id()), VoucherState::Live);
        assert!(k.minter.records().is_empty());
    }

    #[test]
    fn forged_voucher_rejected() {
        let mut k = Kit::new(3);
        let thief = AuthKeyPair::generate(&mut k.rng);
        let v = Voucher::issue(&thief, "v9", 100);
        let (_, _, blinded, _) = k.template("p100");
        assert_eq!(
            k.minter.recycle("p100", Consumed::Voucher(&v), &blinded, 1),
            Err(MintError::BadVoucher)
        );
    }

    #[test]
    fn spent_asset_replays() {
        let mut k = Kit::new(4);
        let spent = k.spent_asset("p100");
        let (_, _, blinded, _) = k.template("p100");
        k.minter
            .recycle("p100", Consumed::Asset(&spent), &blinded, 5)
            .unwrap();
        // issued twice (voucher, asset), redeemed once
        assert_eq!(k.minter.plate("p100").unwrap().in_flight(), 100);
        assert_eq!(
            k.minter
                .recycle("p100", Consumed::Asset(&spent), &blinded, 5),
            Err(MintError::AlreadyDestroyed)
        );
        assert_eq!(k.minter.redeem(&spent, 5), Err(MintError::AlreadySpent));

        let other = k.spent_asset("p100");
        let r = k.minter.redeem(&other, 6).unwrap();
        assert_eq!(r.value, 100);
        assert_eq!(k.minter.redeem(&other, 6), Err(MintError::AlreadySpent));
        assert_eq!(
            k.minter
                .recycle("p100", Consumed::Asset(&other), &blinded, 6),
            Err(MintError::AlreadyDestroyed)
        );
    }

    #[test]
    fn unsurrendered_asset_rejected() {
        let mut k = Kit::new(5);
        let (a, sig, owner) = k.withdraw("p100");
        let bob = AuthKeyPair::generate(&mut k.rng);
        let held = k.pay(
            &a,
            Some(&sig),
            &owner,
            crate::asset::OwnerLock::key(bob.public()),
            None,
        );
        assert_eq!(k.minter.redeem(&held, 3), Err(MintError::NotSurrendered));
        assert!(matches!(
            k.minter.redeem(&a, 3),
            Err(MintError::VerificationFailed(_))
        ));
    }

    #[test]
    fn caps_and_expiry() {
        let mut k = Kit::new(6);
        let limits = PlateLimits {
            cap_in_flight: 100,
            cap_cumulative: 200,
            expiry: 3,
        };
        let plate =
            MintingPlate::create(&mut k.rng, &k.bank, "tight", 100, limits, KeyProfile::Test)
                .unwrap();
        k.minter.install_plate(plate);
        let (_, _, blinded, _) = k.template("tight");
        let v1 = k.voucher(100);
        let v2 = k.voucher(100);
        k.minter
            .recycle("tight", Consumed::Voucher(&v1), &blinded, 1)
            .unwrap();
        // exactly at cap is allowed; one more is not
        assert_eq!(k.minter.plate("tight").unwrap().in_flight(), 100);
        assert_eq!(
            k.minter
                .recycle("tight", Consumed::Voucher(&v2), &blinded, 1),
            Err(MintError::InFlightCapExceeded("tight".into()))
        );
        assert_eq!(
            k.minter
                .recycle("tight", Consumed::Voucher(&v2), &blinded, 4),
            Err(MintError::PlateExpired("tight".into()))
        );
        assert_eq!(k.minter.voucher_state(v2.id()), VoucherState::Live);
        assert!(k
            .minter
            .plate_for(100, 1)
            .is_some_and(|p| p.plate_id == "p100"));
    }

    #[test]
    fn audit_agrees_with_counters() {
        let mut k = Kit::new(7);
        let reg = |k: &Kit| PlateRegistry {
            minters: [(k.minter.id().to_string(), k.minter.public_key())].into(),
            plates: k.minter.snapshots(),
        };
        assert_eq!(audit_in_flight(k.minter.records(), "p100"), 0);
        let spent = k.spent_asset("p100");
        let (_, _, blinded, _) = k.template("p100");
        k.minter
            .recycle("p100", Consumed::Asset(&spent), &blinded, 9)
            .unwrap();
        assert_eq!(audit_in_flight(k.minter.records(), "p100"), 100);
        let report = audit(k.minter.records(), &reg(&k));
        assert!(report.clean(), "{}", report.render());

        let text = monitoring::render(k.minter.records());
        let parsed = monitoring::parse(&text).unwrap();
        assert_eq!(parsed, k.minter.records());
        assert_eq!(
            PlateRegistry::from_text(&reg(&k).to_text()).unwrap(),
            reg(&k)
        );
    }

    #[test]
    fn injected_record_flagged() {
        let mut k = Kit::new(8);
        k.withdraw("p100");
        let mut records = k.minter.records().to_vec();
        let forger = AuthKeyPair::generate(&mut k.rng);
        records.push(MonitoringRecord::signed(
            &forger,
            1,
            "m1",
            "p100",
            Action::Recycle,
            100,
            100,
            ConsumedRef::Voucher("v999".into()),
            2,
        ));
        let reg = PlateRegistry {
            minters: [("m1".to_string(), k.minter.public_key())].into(),
            plates: k.minter.snapshots(),
        };
        let report = audit(&records, &reg);
        assert!(!report.clean());
        assert!(report
            .faults
            .iter()
            .any(|f| matches!(f, monitoring::RecordFault::BadSignature { .. })));
        let p100 = report.plates.iter().find(|p| p.0 == "p100").unwrap();
        assert!(p100
            .2
            .iter()
            .any(|a| matches!(a, Alarm::CounterMismatch { .. })));
    }

    #[test]
    fn unrecorded_signatures_trip_alarm_on_redemption() {
        let mut k = Kit::new(9);
        let snapshot = |k: &Kit| k.minter.plate("p50").unwrap().snapshot("m1");
        assert!(detect_plate_compromise(k.minter.records(), &snapshot(&k)).is_empty());
        let key = k.minter.plate("p50").unwrap().key.public().clone();
        let mut forged = Vec::new();
        for _ in 0..5 {
            let (a, factor, blinded, owner) = k.template("p50");
            let s = k.minter.sign_unrecorded("p50", &blinded).unwrap();
            let sig = unblind(&s, factor);
            let to = crate::asset::OwnerLock::key(k.minter.public_key());
            forged.push(k.pay(&a, Some(&sig), &owner, to, None));
        }
        let _ = key;
        for a in &forged {
            k.minter.redeem(a, 20).unwrap();
        }
        let alarms = detect_plate_compromise(k.minter.records(), &snapshot(&k));
        assert!(alarms.contains(&Alarm::RedeemedExceedsIssued {
            issued: 0,
            redeemed: 250
        }));
    }

    #[test]
    fn in_flight_at_cap_is_not_an_alarm() {
        let mut k = Kit::new(10);
        for _ in 0..10 {
            k.withdraw("p100");
        }
        let snap = k.minter.plate("p100").unwrap().snapshot("m1");
        assert_eq!(snap.issued_total, LIMITS.cap_in_flight);
        assert!(detect_plate_compromise(k.minter.records(), &snap).is_empty());
        let mut over = snap.clone();
        over.cap_in_flight -= 1;
        assert!(detect_plate_compromise(k.minter.records(), &over)
            .iter()
            .any(|a| matches!(a, Alarm::InFlightOverCap { .. })));
    }

    #[test]
    fn blinding_hides_template_from_minter() {
        let mut k = Kit::new(11);
        let (a, _, blinded, _) = k.template("p100");
        let key = k.minter.plate("p100").unwrap().key.public().clone();
        let f2 = BlindingFactor::random(&mut k.rng, &key);
        let b2 = blind(&a.genesis.digest(), &f2, &key).unwrap();
        assert_ne!(blinded, b2);
    }
}
