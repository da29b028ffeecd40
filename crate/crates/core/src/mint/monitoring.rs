//! The monitoring ledger: signed, append-only minter records, and the audits
//! the central bank runs over them.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::codec::{selector, tags, Canonical, CodecError, Decoder, Digest, Encoder};
use crate::keys::{AuthKeyPair, AuthSignature, PublicKey};

use super::PlateId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Recycle,
    Redeem,
}

impl Action {
    fn as_str(self) -> &'static str {
        match self {
            Action::Recycle => "recycle",
            Action::Redeem => "redeem",
        }
    }
}

/// What a minter destroyed. A spent asset also names the plate that signed
/// it, so redemptions can be attributed without the asset bytes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ConsumedRef {
    Voucher(String),
    Asset { plate_id: PlateId, digest: Digest },
}

impl fmt::Display for ConsumedRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConsumedRef::Voucher(id) => write!(f, "voucher:{id}"),
            ConsumedRef::Asset { plate_id, digest } => {
                write!(f, "asset:{plate_id}:{}", digest.to_hex())
            }
        }
    }
}

impl ConsumedRef {
    fn parse(s: &str) -> Option<ConsumedRef> {
        if let Some(id) = s.strip_prefix("voucher:") {
            return (!id.is_empty()).then(|| ConsumedRef::Voucher(id.to_string()));
        }
        let rest = s.strip_prefix("asset:")?;
        let (plate, hex) = rest.rsplit_once(':')?;
        Some(ConsumedRef::Asset {
            plate_id: plate.to_string(),
            digest: Digest::from_hex(hex).ok()?,
        })
    }

    /// The plate whose issuance this consumption retires, if any.
    pub fn redeemed_plate(&self) -> Option<&str> {
        match self {
            ConsumedRef::Voucher(_) => None,
            ConsumedRef::Asset { plate_id, .. } => Some(plate_id),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MonitoringRecord {
    pub sequence: u64,
    pub minter_id: String,
    /// The plate that signed (recycle) or whose asset was retired (redeem).
    pub plate_id: PlateId,
    pub action: Action,
    pub value_destroyed: u64,
    pub value_signed: u64,
    pub consumed: ConsumedRef,
    pub cycle: u64,
    pub signature: AuthSignature,
}

impl MonitoringRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn signed(
        key: &AuthKeyPair,
        sequence: u64,
        minter_id: &str,
        plate_id: &str,
        action: Action,
        value_destroyed: u64,
        value_signed: u64,
        consumed: ConsumedRef,
        cycle: u64,
    ) -> Self {
        let mut r = MonitoringRecord {
            sequence,
            minter_id: minter_id.to_string(),
            plate_id: plate_id.to_string(),
            action,
            value_destroyed,
            value_signed,
            consumed,
            cycle,
            signature: AuthSignature([0; 64]),
        };
        r.signature = key.sign_digest(&selector(&r));
        r
    }

    pub fn verify(&self, minter: &PublicKey) -> bool {
        minter.verify(selector(self).as_bytes(), &self.signature)
    }
}

/// Encodes the signed fields only; the signature is not part of the
/// selector.
impl Canonical for MonitoringRecord {
    const TAG: u8 = tags::MONITORING_RECORD;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.u64(self.sequence)
            .str(&self.minter_id)
            .str(&self.plate_id)
            .u8(match self.action {
                Action::Recycle => 0,
                Action::Redeem => 1,
            })
            .u64(self.value_destroyed)
            .u64(self.value_signed)
            .str(&self.consumed.to_string())
            .u64(self.cycle);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let sequence = dec.u64()?;
        let minter_id = dec.str()?;
        let plate_id = dec.str()?;
        let action = match dec.u8()? {
            0 => Action::Recycle,
            1 => Action::Redeem,
            _ => return Err(CodecError::Invalid("monitoring action")),
        };
        Ok(MonitoringRecord {
            sequence,
            minter_id,
            plate_id,
            action,
            value_destroyed: dec.u64()?,
            value_signed: dec.u64()?,
            consumed: ConsumedRef::parse(&dec.str()?)
                .ok_or(CodecError::Invalid("consumed reference"))?,
            cycle: dec.u64()?,
            signature: AuthSignature([0; 64]),
        })
    }
}

impl fmt::Display for MonitoringRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {} {} {} {}",
            self.sequence,
            self.minter_id,
            self.plate_id,
            self.action.as_str(),
            self.value_destroyed,
            self.value_signed,
            self.consumed,
            self.cycle,
            self.signature.to_hex()
        )
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("monitoring ledger line {line}: {reason}")]
pub struct MonitoringParseError {
    pub line: usize,
    pub reason: String,
}

pub fn render<'a>(records: impl IntoIterator<Item = &'a MonitoringRecord>) -> String {
    records.into_iter().map(|r| format!("{r}\n")).collect()
}

pub fn parse(text: &str) -> Result<Vec<MonitoringRecord>, MonitoringParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let err = |reason: &str| MonitoringParseError {
                line: i + 1,
                reason: reason.to_string(),
            };
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 9 {
                return Err(err("expected 9 fields"));
            }
            let action = match f[3] {
                "recycle" => Action::Recycle,
                "redeem" => Action::Redeem,
                _ => return Err(err("action")),
            };
            Ok(MonitoringRecord {
                sequence: f[0].parse().map_err(|_| err("sequence"))?,
                minter_id: f[1].to_string(),
                plate_id: f[2].to_string(),
                action,
                value_destroyed: f[4].parse().map_err(|_| err("value destroyed"))?,
                value_signed: f[5].parse().map_err(|_| err("value signed"))?,
                consumed: ConsumedRef::parse(f[6]).ok_or_else(|| err("consumed reference"))?,
                cycle: f[7].parse().map_err(|_| err("cycle"))?,
                signature: AuthSignature::from_hex(f[8]).map_err(|_| err("signature"))?,
            })
        })
        .collect()
}

/// Issued and redeemed totals for one plate, as reconstructed from records.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Totals {
    pub issued: u64,
    pub redeemed: u64,
}

impl Totals {
    pub fn in_flight(&self) -> i128 {
        self.issued as i128 - self.redeemed as i128
    }
}

pub fn totals_by_plate<'a>(
    records: impl IntoIterator<Item = &'a MonitoringRecord>,
) -> BTreeMap<PlateId, Totals> {
    let mut out: BTreeMap<PlateId, Totals> = BTreeMap::new();
    for r in records {
        if r.value_signed > 0 {
            out.entry(r.plate_id.clone()).or_default().issued += r.value_signed;
        }
        if let Some(p) = r.consumed.redeemed_plate() {
            out.entry(p.to_string()).or_default().redeemed += r.value_destroyed;
        }
    }
    out
}

/// Issued minus redeemed for `plate_id`, computed from records alone.
pub fn audit_in_flight<'a>(
    records: impl IntoIterator<Item = &'a MonitoringRecord>,
    plate_id: &str,
) -> i128 {
    totals_by_plate(records)
        .get(plate_id)
        .map(Totals::in_flight)
        .unwrap_or(0)
}

/// The public part of a plate, as published for auditors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlateSnapshot {
    pub plate_id: PlateId,
    pub minter_id: String,
    pub denomination: u64,
    pub cap_in_flight: u64,
    pub cap_cumulative: u64,
    pub expiry: u64,
    pub issued_total: u64,
    pub redeemed_total: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Alarm {
    /// Redemptions attributed to the plate exceed its recorded issuance.
    RedeemedExceedsIssued { issued: u64, redeemed: u64 },
    /// Recorded in-flight value is above the plate's cap.
    InFlightOverCap { in_flight: i128, cap: u64 },
    /// The plate's own counters disagree with its records.
    CounterMismatch {
        records: (u64, u64),
        counters: (u64, u64),
    },
}

impl fmt::Display for Alarm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alarm::RedeemedExceedsIssued { issued, redeemed } => {
                write!(f, "redeemed {redeemed} exceeds issued {issued}")
            }
            Alarm::InFlightOverCap { in_flight, cap } => {
                write!(f, "in-flight {in_flight} exceeds cap {cap}")
            }
            Alarm::CounterMismatch { records, counters } => write!(
                f,
                "records show issued/redeemed {}/{} but counters show {}/{}",
                records.0, records.1, counters.0, counters.1
            ),
        }
    }
}

pub fn detect_plate_compromise<'a>(
    records: impl IntoIterator<Item = &'a MonitoringRecord>,
    plate: &PlateSnapshot,
) -> Vec<Alarm> {
    let t = totals_by_plate(records)
        .remove(&plate.plate_id)
        .unwrap_or_default();
    let mut alarms = Vec::new();
    if t.redeemed > t.issued {
        alarms.push(Alarm::RedeemedExceedsIssued {
            issued: t.issued,
            redeemed: t.redeemed,
        });
    }
    if t.in_flight() > plate.cap_in_flight as i128 {
        alarms.push(Alarm::InFlightOverCap {
            in_flight: t.in_flight(),
            cap: plate.cap_in_flight,
        });
    }
    if (t.issued, t.redeemed) != (plate.issued_total, plate.redeemed_total) {
        alarms.push(Alarm::CounterMismatch {
            records: (t.issued, t.redeemed),
            counters: (plate.issued_total, plate.redeemed_total),
        });
    }
    alarms
}

/// Record-level problems found while auditing a merged ledger.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RecordFault {
    BadSignature {
        minter_id: String,
        sequence: u64,
    },
    UnknownMinter {
        minter_id: String,
        sequence: u64,
    },
    /// A recycle that signed a different value than it destroyed.
    UnbalancedRecycle {
        minter_id: String,
        sequence: u64,
    },
    /// Sequence numbers of one minter are not 0, 1, 2, ...
    SequenceGap {
        minter_id: String,
        expected: u64,
        found: u64,
    },
}

impl fmt::Display for RecordFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordFault::BadSignature {
                minter_id,
                sequence,
            } => {
                write!(f, "record {minter_id}/{sequence} has a bad signature")
            }
            RecordFault::UnknownMinter {
                minter_id,
                sequence,
            } => {
                write!(f, "record {minter_id}/{sequence} names an unknown minter")
            }
            RecordFault::UnbalancedRecycle {
                minter_id,
                sequence,
            } => {
                write!(
                    f,
                    "recycle {minter_id}/{sequence} breaks the minting invariant"
                )
            }
            RecordFault::SequenceGap {
                minter_id,
                expected,
                found,
            } => write!(
                f,
                "minter {minter_id}: expected record {expected}, found {found}"
            ),
        }
    }
}

pub fn check_records<'a>(
    records: impl IntoIterator<Item = &'a MonitoringRecord>,
    minters: &BTreeMap<String, PublicKey>,
) -> Vec<RecordFault> {
    let mut next: BTreeMap<&str, u64> = BTreeMap::new();
    let mut faults = Vec::new();
    for r in records {
        let id = r.minter_id.clone();
        match minters.get(&r.minter_id) {
            None => faults.push(RecordFault::UnknownMinter {
                minter_id: id.clone(),
                sequence: r.sequence,
            }),
            Some(k) if !r.verify(k) => faults.push(RecordFault::BadSignature {
                minter_id: id.clone(),
                sequence: r.sequence,
            }),
            Some(_) => {}
        }
        if r.action == Action::Recycle && r.value_destroyed != r.value_signed {
            faults.push(RecordFault::UnbalancedRecycle {
                minter_id: id.clone(),
                sequence: r.sequence,
            });
        }
        let expected = next.entry(&r.minter_id).or_insert(0);
        if r.sequence != *expected {
            faults.push(RecordFault::SequenceGap {
                minter_id: id,
                expected: *expected,
                found: r.sequence,
            });
        }
        *expected = r.sequence + 1;
    }
    faults
}

/// Auditor input: plate snapshots and minter record keys.
///
/// ```text
/// minter <id> <ed25519 public key hex>
/// plate <id> <minter> <denomination> <cap_in_flight> <cap_cumulative> <expiry> <issued> <redeemed>
/// ```
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PlateRegistry {
    pub minters: BTreeMap<String, PublicKey>,
    pub plates: Vec<PlateSnapshot>,
}

impl PlateRegistry {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, k) in &self.minters {
            out.push_str(&format!("minter {id} {}\n", k.to_hex()));
        }
        for p in &self.plates {
            out.push_str(&format!(
                "plate {} {} {} {} {} {} {} {}\n",
                p.plate_id,
                p.minter_id,
                p.denomination,
                p.cap_in_flight,
                p.cap_cumulative,
                p.expiry,
                p.issued_total,
                p.redeemed_total
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<PlateRegistry, String> {
        let mut reg = PlateRegistry::default();
        for (n, line) in text.lines().enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || format!("plates line {}: malformed", n + 1);
            match f.first().copied() {
                None => {}
                Some("minter") if f.len() == 3 => {
                    reg.minters.insert(
                        f[1].to_string(),
                        PublicKey::from_hex(f[2]).map_err(|_| bad())?,
                    );
                }
                Some("plate") if f.len() == 9 => {
                    let num = |i: usize| f[i].parse::<u64>().map_err(|_| bad());
                    reg.plates.push(PlateSnapshot {
                        plate_id: f[1].to_string(),
                        minter_id: f[2].to_string(),
                        denomination: num(3)?,
                        cap_in_flight: num(4)?,
                        cap_cumulative: num(5)?,
                        expiry: num(6)?,
                        issued_total: num(7)?,
                        redeemed_total: num(8)?,
                    });
                }
                _ => return Err(bad()),
            }
        }
        Ok(reg)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub faults: Vec<RecordFault>,
    /// Per plate: in-flight from records, and any alarms.
    pub plates: Vec<(PlateId, i128, Vec<Alarm>)>,
}

impl AuditReport {
    pub fn clean(&self) -> bool {
        self.faults.is_empty() && self.plates.iter().all(|(_, _, a)| a.is_empty())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (id, in_flight, alarms) in &self.plates {
            let status = if alarms.is_empty() { "ok" } else { "ALARM" };
            out.push_str(&format!("plate {id} in-flight {in_flight} {status}\n"));
            for a in alarms {
                out.push_str(&format!("  alarm: {a}\n"));
            }
        }
        for f in &self.faults {
            out.push_str(&format!("fault: {f}\n"));
        }
        out.push_str(if self.clean() {
            "audit: clean\n"
        } else {
            "audit: FAILED\n"
        });
        out
    }
}

pub fn audit(records: &[MonitoringRecord], registry: &PlateRegistry) -> AuditReport {
    AuditReport {
        faults: check_records(records, &registry.minters),
        plates: registry
            .plates
            .iter()
            .map(|p| {
                (
                    p.plate_id.clone(),
                    audit_in_flight(records, &p.plate_id),
                    detect_plate_compromise(records, p),
                )
            })
            .collect(),
    }
}
