//! USO assets: a genesis record, a hash chain of ownership updates, and a
//! proof of provenance that anchors every update in relay commitments.
//!
//! Verification consults only the asset bytes and a set of trust roots.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::blindsig::{self, IssuerPublicKey, Signature};
use crate::codec::{selector, tags, Canonical, CodecError, Decoder, Digest, Encoder};
use crate::keys::{AuthKeyPair, AuthSignature, PublicKey};
use crate::relay::{
    CycleEntry, InclusionProof, RelayCommitment, RelayDirectory, RelayId, RelayTrust,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssetError {
    #[error("denomination certificate does not verify for denomination {0}")]
    BadCertificate(u64),
    #[error("signing key does not own the current state")]
    NotOwner,
    #[error("the first transfer must carry the validity signature")]
    MissingValiditySignature,
    #[error("validity signature does not verify on the genesis record")]
    InvalidValiditySignature,
    #[error("current owner is hash-locked and the unlock secret is missing or wrong")]
    Locked,
    #[error("proof step does not match the pending update")]
    StepMismatch,
}

/// The issuer's statement that `plate_key` signs tokens worth `denomination`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DenominationCertificate {
    pub denomination: u64,
    pub plate_key: IssuerPublicKey,
    pub issuer_signature: AuthSignature,
}

struct DenominationClaim<'a> {
    denomination: u64,
    plate_key: &'a IssuerPublicKey,
}

impl DenominationClaim<'_> {
    fn digest(&self) -> Digest {
        let mut enc = Encoder::new();
        enc.u8(tags::DENOMINATION_CLAIM)
            .u64(self.denomination)
            .object(self.plate_key);
        Digest::hash(&enc.finish())
    }
}

impl DenominationCertificate {
    pub fn issue(issuer: &AuthKeyPair, denomination: u64, plate_key: IssuerPublicKey) -> Self {
        let claim = DenominationClaim {
            denomination,
            plate_key: &plate_key,
        }
        .digest();
        DenominationCertificate {
            denomination,
            issuer_signature: issuer.sign_digest(&claim),
            plate_key,
        }
    }

    pub fn verify(&self, issuer: &PublicKey) -> bool {
        let claim = DenominationClaim {
            denomination: self.denomination,
            plate_key: &self.plate_key,
        }
        .digest();
        issuer.verify(claim.as_bytes(), &self.issuer_signature)
    }
}

impl Canonical for DenominationCertificate {
    const TAG: u8 = tags::DENOMINATION_CERTIFICATE;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.u64(self.denomination).object(&self.plate_key);
        self.issuer_signature.encode(enc);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(DenominationCertificate {
            denomination: dec.u64()?,
            plate_key: dec.object()?,
            issuer_signature: AuthSignature::decode(dec)?,
        })
    }
}

/// Who controls a state: a public key, optionally behind a hash lock whose
/// preimage must be revealed in the next update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct OwnerLock {
    pub key: PublicKey,
    pub hashlock: Option<Digest>,
}

impl OwnerLock {
    pub fn key(key: PublicKey) -> Self {
        OwnerLock {
            key,
            hashlock: None,
        }
    }

    pub fn locked(key: PublicKey, secret: &[u8; 32]) -> Self {
        OwnerLock {
            key,
            hashlock: Some(Digest::hash(secret)),
        }
    }

    fn unlocked_by(&self, secret: Option<&[u8; 32]>) -> bool {
        match (&self.hashlock, secret) {
            (None, _) => true,
            (Some(lock), Some(s)) => Digest::hash(s) == *lock,
            (Some(_), None) => false,
        }
    }
}

impl Canonical for OwnerLock {
    const TAG: u8 = tags::OWNER_LOCK;

    fn encode_fields(&self, enc: &mut Encoder) {
        self.key.encode(enc);
        enc.option(self.hashlock.as_ref(), |e, d| {
            e.digest(d);
        });
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(OwnerLock {
            key: PublicKey::decode(dec)?,
            hashlock: dec.option(|d| d.digest())?,
        })
    }
}

/// `F0`: the template a wallet creates and has blind-signed.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GenesisRecord {
    pub owner: OwnerLock,
    /// Digest of a published commitment of the asset's home relay.
    pub relay_anchor: Digest,
    pub certificate: DenominationCertificate,
    pub denomination: u64,
}

impl GenesisRecord {
    pub fn digest(&self) -> Digest {
        selector(self)
    }
}

impl Canonical for GenesisRecord {
    const TAG: u8 = tags::GENESIS_RECORD;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.object(&self.owner)
            .digest(&self.relay_anchor)
            .object(&self.certificate)
            .u64(self.denomination);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(GenesisRecord {
            owner: dec.object()?,
            relay_anchor: dec.digest()?,
            certificate: dec.object()?,
            denomination: dec.u64()?,
        })
    }
}

/// The signed part of an update.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UpdateBody {
    pub previous_state: Digest,
    pub validity_signature: Option<Signature>,
    pub new_owner: OwnerLock,
    pub recipient_commitment: Option<Digest>,
    /// Preimage of the previous owner's hash lock, when it had one.
    pub unlock_secret: Option<[u8; 32]>,
}

impl Canonical for UpdateBody {
    const TAG: u8 = tags::UPDATE_BODY;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.digest(&self.previous_state)
            .option(self.validity_signature.as_ref(), |e, s| {
                e.object(s);
            })
            .object(&self.new_owner)
            .option(self.recipient_commitment.as_ref(), |e, d| {
                e.digest(d);
            })
            .option(self.unlock_secret.as_ref(), |e, s| {
                e.fixed(s);
            });
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(UpdateBody {
            previous_state: dec.digest()?,
            validity_signature: dec.option(|d| d.object())?,
            new_owner: dec.object()?,
            recipient_commitment: dec.option(|d| d.digest())?,
            unlock_secret: dec.option(|d| d.fixed::<32>())?,
        })
    }
}

/// `F1, F2, ...`: an ownership transfer authorized by the previous owner.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AssetUpdate {
    pub body: UpdateBody,
    pub owner_authorization: AuthSignature,
}

impl AssetUpdate {
    pub fn digest(&self) -> Digest {
        selector(self)
    }
}

impl Canonical for AssetUpdate {
    const TAG: u8 = tags::ASSET_UPDATE;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.object(&self.body);
        self.owner_authorization.encode(enc);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(AssetUpdate {
            body: dec.object()?,
            owner_authorization: AuthSignature::decode(dec)?,
        })
    }
}

/// Links a child relay commitment into its parent's commitment.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AggregationHop {
    pub inclusion: InclusionProof,
    pub commitment: RelayCommitment,
}

impl Canonical for AggregationHop {
    const TAG: u8 = tags::AGGREGATION_HOP;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.object(&self.inclusion).object(&self.commitment);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(AggregationHop {
            inclusion: dec.object()?,
            commitment: dec.object()?,
        })
    }
}

/// Anchors one update: the digest pair, its inclusion proof, the home relay
/// commitment, and any aggregation hops above it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PopStep {
    pub entry: CycleEntry,
    pub inclusion: InclusionProof,
    pub commitment: RelayCommitment,
    pub aggregation: Vec<AggregationHop>,
}

impl PopStep {
    /// The highest commitment this step reaches.
    pub fn top_commitment(&self) -> &RelayCommitment {
        self.aggregation
            .last()
            .map(|h| &h.commitment)
            .unwrap_or(&self.commitment)
    }
}

impl Canonical for PopStep {
    const TAG: u8 = tags::POP_STEP;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.object(&self.entry)
            .object(&self.inclusion)
            .object(&self.commitment)
            .list(&self.aggregation, |e, h| {
                e.object(h);
            });
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(PopStep {
            entry: dec.object()?,
            inclusion: dec.object()?,
            commitment: dec.object()?,
            aggregation: dec.list(|d| d.object())?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProofOfProvenance {
    /// The commitment named by the genesis `relay_anchor`.
    pub anchor: RelayCommitment,
    pub steps: Vec<PopStep>,
}

impl Canonical for ProofOfProvenance {
    const TAG: u8 = tags::PROOF_OF_PROVENANCE;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.object(&self.anchor).list(&self.steps, |e, s| {
            e.object(s);
        });
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(ProofOfProvenance {
            anchor: dec.object()?,
            steps: dec.list(|d| d.object())?,
        })
    }
}

/// An asset value. Operations return new values; nothing is mutated in
/// place.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Asset {
    pub genesis: GenesisRecord,
    pub updates: Vec<AssetUpdate>,
    pub proof: ProofOfProvenance,
}

impl Asset {
    pub fn new(genesis: GenesisRecord, anchor: RelayCommitment) -> Self {
        Asset {
            genesis,
            updates: Vec::new(),
            proof: ProofOfProvenance {
                anchor,
                steps: Vec::new(),
            },
        }
    }

    pub fn denomination(&self) -> u64 {
        self.genesis.denomination
    }

    pub fn home_relay(&self) -> &str {
        self.proof.anchor.relay_id()
    }

    /// Selector of the latest state (genesis or last update).
    pub fn state_digest(&self) -> Digest {
        self.updates
            .last()
            .map(|u| u.digest())
            .unwrap_or_else(|| self.genesis.digest())
    }

    pub fn current_owner(&self) -> &OwnerLock {
        self.updates
            .last()
            .map(|u| &u.body.new_owner)
            .unwrap_or(&self.genesis.owner)
    }

    /// Digest of the first update, if any. Identifies the asset once spent.
    pub fn first_update_digest(&self) -> Option<Digest> {
        self.updates.first().map(|u| u.digest())
    }

    pub fn hops(&self) -> usize {
        self.updates.len()
    }

    /// Number of updates still waiting for a proof step.
    pub fn unanchored(&self) -> usize {
        self.updates.len().saturating_sub(self.proof.steps.len())
    }

    /// The digest pair registering update `i`.
    pub fn entry_for(&self, i: usize) -> Option<CycleEntry> {
        let update = self.updates.get(i)?;
        let prev = if i == 0 {
            self.genesis.digest()
        } else {
            self.updates[i - 1].digest()
        };
        Some(CycleEntry::new(prev, update.digest()))
    }

    /// The digest pair of the newest update.
    pub fn last_entry(&self) -> Option<CycleEntry> {
        self.updates
            .len()
            .checked_sub(1)
            .and_then(|i| self.entry_for(i))
    }

    /// The asset as it was before its newest update.
    pub fn without_last_update(&self) -> Asset {
        let mut prev = self.clone();
        prev.updates.pop();
        prev.proof.steps.truncate(prev.updates.len());
        prev
    }

    pub fn with_update(&self, update: AssetUpdate) -> Asset {
        let mut next = self.clone();
        next.updates.push(update);
        next
    }

    /// Attaches the proof step for the next unanchored update.
    pub fn with_step(&self, step: PopStep) -> Result<Asset, AssetError> {
        let i = self.proof.steps.len();
        if self.entry_for(i) != Some(step.entry) {
            return Err(AssetError::StepMismatch);
        }
        let mut next = self.clone();
        next.proof.steps.push(step);
        Ok(next)
    }

    /// Appends an aggregation hop to step `i`.
    pub fn with_aggregation(&self, i: usize, hop: AggregationHop) -> Asset {
        let mut next = self.clone();
        if let Some(step) = next.proof.steps.get_mut(i) {
            step.aggregation.push(hop);
        }
        next
    }

    pub fn to_hex(&self) -> String {
        self.to_canonical().to_hex()
    }

    pub fn from_hex(s: &str) -> Result<Asset, CodecError> {
        let bytes = hex::decode(s.trim()).map_err(|e| CodecError::Hex(e.to_string()))?;
        Asset::from_canonical(&bytes)
    }
}

impl Canonical for Asset {
    const TAG: u8 = tags::ASSET;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.object(&self.genesis)
            .list(&self.updates, |e, u| {
                e.object(u);
            })
            .object(&self.proof);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Asset {
            genesis: dec.object()?,
            updates: dec.list(|d| d.object())?,
            proof: dec.object()?,
        })
    }
}

/// The keys an offline verifier trusts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrustRoots {
    pub central_bank: PublicKey,
    pub relays: RelayDirectory,
}

impl TrustRoots {
    pub fn relay(&self, id: &str) -> Option<&RelayTrust> {
        self.relays.get(id)
    }

    pub fn is_root(&self, id: &str) -> bool {
        self.relays.get(id).is_some_and(|t| t.parent.is_none())
    }

    fn endorsed(&self, c: &RelayCommitment) -> bool {
        self.relays.get(c.relay_id()).is_some_and(|t| t.endorsed(c))
    }

    /// Text form: `central-bank <hex>`, then per relay
    /// `relay <id> <parent|-> <quorum> <endorser hex>...`.
    pub fn to_text(&self) -> String {
        let mut out = format!("central-bank {}\n", self.central_bank.to_hex());
        for (id, t) in &self.relays {
            out.push_str(&format!(
                "relay {} {} {}",
                id,
                t.parent.as_deref().unwrap_or("-"),
                t.quorum
            ));
            for e in &t.endorsers {
                out.push(' ');
                out.push_str(&e.to_hex());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<TrustRoots, String> {
        let mut central = None;
        let mut relays = RelayDirectory::new();
        for (n, line) in text.lines().enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = |what: &str| format!("trust roots line {}: {what}", n + 1);
            match f.first().copied() {
                None => continue,
                Some("central-bank") if f.len() == 2 => {
                    central = Some(PublicKey::from_hex(f[1]).map_err(|_| bad("central bank key"))?)
                }
                Some("relay") if f.len() >= 4 => {
                    let parent = (f[2] != "-").then(|| f[2].to_string());
                    let quorum = f[3].parse().map_err(|_| bad("quorum"))?;
                    let endorsers = f[4..]
                        .iter()
                        .map(|h| PublicKey::from_hex(h))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| bad("endorser key"))?;
                    relays.insert(
                        f[1].to_string(),
                        RelayTrust {
                            endorsers,
                            quorum,
                            parent,
                        },
                    );
                }
                _ => return Err(bad("unrecognised line")),
            }
        }
        Ok(TrustRoots {
            central_bank: central.ok_or("trust roots: missing central-bank line")?,
            relays,
        })
    }
}

/// How far an asset's proof reaches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Finality {
    /// Some check failed.
    Invalid,
    /// Structurally valid, but the newest update has no proof step yet.
    Pending,
    /// Anchored at the home relay, not yet aggregated into a root relay.
    LocallyFinal,
    /// Anchored through to a root relay.
    GloballyFinal,
}

impl fmt::Display for Finality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Finality::Invalid => "invalid",
            Finality::Pending => "pending",
            Finality::LocallyFinal => "locally final, globally pending",
            Finality::GloballyFinal => "globally final",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationReport {
    pub denomination: u64,
    pub hops: usize,
    pub certificate: bool,
    pub validity_signature: bool,
    pub chain_integrity: bool,
    pub anchor: bool,
    /// Per update: `Some(true)` anchored, `Some(false)` bad proof, `None`
    /// no proof step yet.
    pub anchoring: Vec<Option<bool>>,
    pub finality: Finality,
    /// Recipient commitment carried by each update, in order.
    pub recipient_commitments: Vec<Option<Digest>>,
    pub findings: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        matches!(
            self.finality,
            Finality::LocallyFinal | Finality::GloballyFinal
        )
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let verdict = if self.passed() { "pass" } else { "fail" };
        out.push_str(&format!("verdict: {verdict}\n"));
        out.push_str(&format!("finality: {}\n", self.finality));
        out.push_str(&format!("denomination: {}\n", self.denomination));
        out.push_str(&format!("hops: {}\n", self.hops));
        out.push_str(&format!("certificate: {}\n", ok(self.certificate)));
        out.push_str(&format!(
            "validity-signature: {}\n",
            ok(self.validity_signature)
        ));
        out.push_str(&format!("chain-integrity: {}\n", ok(self.chain_integrity)));
        out.push_str(&format!("anchor: {}\n", ok(self.anchor)));
        for (i, a) in self.anchoring.iter().enumerate() {
            let s = match a {
                Some(true) => "ok",
                Some(false) => "FAIL",
                None => "missing",
            };
            out.push_str(&format!("update-{}-anchoring: {s}\n", i + 1));
        }
        for f in &self.findings {
            out.push_str(&format!("finding: {f}\n"));
        }
        out
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

pub fn create_genesis(
    owner: OwnerLock,
    relay_anchor: Digest,
    certificate: DenominationCertificate,
    denomination: u64,
    issuer: &PublicKey,
) -> Result<GenesisRecord, AssetError> {
    if certificate.denomination != denomination || !certificate.verify(issuer) {
        return Err(AssetError::BadCertificate(denomination));
    }
    Ok(GenesisRecord {
        owner,
        relay_anchor,
        certificate,
        denomination,
    })
}

/// Builds the next update of `asset`, signed by the current owner.
pub fn create_transfer(
    asset: &Asset,
    validity_signature: Option<&Signature>,
    recipient: OwnerLock,
    recipient_commitment: Option<Digest>,
    owner_secret: &AuthKeyPair,
    unlock_secret: Option<[u8; 32]>,
) -> Result<AssetUpdate, AssetError> {
    let owner = asset.current_owner();
    if owner_secret.public() != owner.key {
        return Err(AssetError::NotOwner);
    }
    if !owner.unlocked_by(unlock_secret.as_ref()) {
        return Err(AssetError::Locked);
    }
    let validity_signature = if asset.updates.is_empty() {
        let sig = validity_signature.ok_or(AssetError::MissingValiditySignature)?;
        if !blindsig::verify(
            &asset.genesis.digest(),
            sig,
            &asset.genesis.certificate.plate_key,
        ) {
            return Err(AssetError::InvalidValiditySignature);
        }
        Some(sig.clone())
    } else {
        None
    };
    let body = UpdateBody {
        previous_state: asset.state_digest(),
        validity_signature,
        new_owner: recipient,
        recipient_commitment,
        unlock_secret: owner.hashlock.and(unlock_secret),
    };
    let owner_authorization = owner_secret.sign_digest(&selector(&body));
    Ok(AssetUpdate {
        body,
        owner_authorization,
    })
}

/// Checks that `key` (and `secret`, for a hash-locked state) can exercise
/// control over the asset's current state.
pub fn check_control(
    asset: &Asset,
    key: &PublicKey,
    secret: Option<&[u8; 32]>,
) -> Result<(), AssetError> {
    let owner = asset.current_owner();
    if owner.key != *key {
        return Err(AssetError::NotOwner);
    }
    if !owner.unlocked_by(secret) {
        return Err(AssetError::Locked);
    }
    Ok(())
}

fn step_finality(
    step: &PopStep,
    trust: &TrustRoots,
    findings: &mut Vec<String>,
    i: usize,
) -> Finality {
    let mut current = &step.commitment;
    for (h, hop) in step.aggregation.iter().enumerate() {
        let expected_parent = trust
            .relay(current.relay_id())
            .and_then(|t| t.parent.as_deref());
        let leaf = CycleEntry::new(current.position().digest(), current.digest());
        let good = expected_parent == Some(hop.commitment.relay_id())
            && hop.inclusion.leaf == leaf
            && hop.inclusion.verify(&hop.commitment)
            && trust.endorsed(&hop.commitment);
        if !good {
            findings.push(format!(
                "update {}: aggregation hop {} does not verify",
                i + 1,
                h + 1
            ));
            return Finality::Invalid;
        }
        current = &hop.commitment;
    }
    if trust.is_root(current.relay_id()) {
        Finality::GloballyFinal
    } else {
        Finality::LocallyFinal
    }
}

/// Offline verification against `trust` alone.
pub fn verify_asset(asset: &Asset, trust: &TrustRoots) -> VerificationReport {
    let g = &asset.genesis;
    let mut findings = Vec::new();

    let certificate =
        g.certificate.denomination == g.denomination && g.certificate.verify(&trust.central_bank);
    if !certificate {
        findings.push("denomination certificate does not verify under the central bank key".into());
    }

    let genesis_digest = g.digest();
    let validity_signature = match asset.updates.first() {
        Some(u) => match &u.body.validity_signature {
            Some(sig) => blindsig::verify(&genesis_digest, sig, &g.certificate.plate_key),
            None => false,
        },
        None => false,
    };
    if !validity_signature {
        findings.push("first update lacks a valid validity signature".into());
    }

    let mut chain_integrity = true;
    let mut prev_digest = genesis_digest;
    let mut prev_owner = g.owner;
    for (i, u) in asset.updates.iter().enumerate() {
        let mut good = u.body.previous_state == prev_digest
            && prev_owner
                .key
                .verify(selector(&u.body).as_bytes(), &u.owner_authorization)
            && prev_owner.unlocked_by(u.body.unlock_secret.as_ref());
        if i > 0 && u.body.validity_signature.is_some() {
            good = false;
        }
        if !good {
            chain_integrity = false;
            findings.push(format!(
                "update {} is not authorized by the previous owner",
                i + 1
            ));
        }
        prev_digest = u.digest();
        prev_owner = u.body.new_owner;
    }

    let anchor_c = &asset.proof.anchor;
    let home: RelayId = anchor_c.relay_id().to_string();
    let anchor = anchor_c.digest() == g.relay_anchor && trust.endorsed(anchor_c);
    if !anchor {
        findings.push("relay anchor is not an endorsed commitment of a trusted relay".into());
    }

    let mut anchoring = Vec::with_capacity(asset.updates.len());
    let mut step_finalities = Vec::new();
    let mut last_seq = anchor_c.sequence();
    if asset.proof.steps.len() > asset.updates.len() {
        findings.push("proof has more steps than the asset has updates".into());
    }
    for i in 0..asset.updates.len() {
        let Some(step) = asset.proof.steps.get(i) else {
            anchoring.push(None);
            continue;
        };
        let expected = asset.entry_for(i);
        let good = Some(step.entry) == expected
            && step.inclusion.leaf == step.entry
            && step.commitment.relay_id() == home
            && step.inclusion.verify(&step.commitment)
            && trust.endorsed(&step.commitment)
            && if i == 0 {
                step.commitment.sequence() > anchor_c.sequence()
            } else {
                step.commitment.sequence() >= last_seq
            };
        if good {
            last_seq = step.commitment.sequence();
            step_finalities.push(step_finality(step, trust, &mut findings, i));
        } else {
            findings.push(format!(
                "update {} is not anchored in its home relay",
                i + 1
            ));
        }
        anchoring.push(Some(good));
    }

    let structurally_ok = certificate
        && validity_signature
        && chain_integrity
        && anchor
        && asset.proof.steps.len() <= asset.updates.len()
        && anchoring.iter().all(|a| *a != Some(false));
    let finality = if !structurally_ok || step_finalities.contains(&Finality::Invalid) {
        Finality::Invalid
    } else if anchoring.iter().any(|a| a.is_none()) {
        Finality::Pending
    } else {
        step_finalities
            .iter()
            .copied()
            .min()
            .unwrap_or(Finality::Invalid)
    };

    VerificationReport {
        denomination: g.denomination,
        hops: asset.updates.len(),
        certificate,
        validity_signature,
        chain_integrity,
        anchor,
        anchoring,
        finality,
        recipient_commitments: asset
            .updates
            .iter()
            .map(|u| u.body.recipient_commitment)
            .collect(),
        findings,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PrivacyFinding {
    /// The same owner key appears in more than one genesis record.
    ReusedOwnerKey { key: PublicKey, count: usize },
}

/// Flags key reuse across a wallet's genesis records. Reuse is allowed by
/// the protocol but links the assets to each other.
pub fn privacy_lint<'a>(
    records: impl IntoIterator<Item = &'a GenesisRecord>,
) -> Vec<PrivacyFinding> {
    let mut counts: BTreeMap<PublicKey, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(r.owner.key).or_default() += 1;
    }
    counts
        .into_iter()
        .filter(|(_, c)| *c > 1)
        .map(|(key, count)| PrivacyFinding::ReusedOwnerKey { key, count })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blindsig::{
        blind, sign_blinded, unblind, BlindingFactor, IssuerKeyPair, KeyProfile,
    };
    use crate::instrumentation;
    use crate::relay::{Relay, RelayConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Fixture {
        rng: ChaCha20Rng,
        bank: AuthKeyPair,
        plate: IssuerKeyPair,
        cert: DenominationCertificate,
        relay: Relay,
        root: Relay,
    }

    impl Fixture {
        fn new() -> Self {
            let mut rng = ChaCha20Rng::seed_from_u64(77);
            let bank = AuthKeyPair::generate(&mut rng);
            let plate = IssuerKeyPair::generate(&mut rng, KeyProfile::Test, 100).unwrap();
            let cert = DenominationCertificate::issue(&bank, 100, plate.public().clone());
            let mut relay =
                Relay::new(RelayConfig::new("local").with_parent("root"), &mut rng).unwrap();
            let mut root = Relay::new(RelayConfig::new("root"), &mut rng).unwrap();
            root.register_child("local".into(), relay.trust());
            relay.commit_cycle(0).unwrap();
            root.commit_cycle(0).unwrap();
            Fixture {
                rng,
                bank,
                plate,
                cert,
                relay,
                root,
            }
        }

        fn trust(&self) -> TrustRoots {
            let mut relays = RelayDirectory::new();
            relays.insert("local".into(), self.relay.trust());
            relays.insert("root".into(), self.root.trust());
            TrustRoots {
                central_bank: self.bank.public(),
                relays,
            }
        }

        /// Withdraw to a fresh key and return the unsigned-transfer-ready
        /// asset, its validity signature, and the owner key.
        fn withdraw(&mut self) -> (Asset, Signature, AuthKeyPair) {
            let owner = AuthKeyPair::generate(&mut self.rng);
            let anchor = self.relay.latest().unwrap().clone();
            let g = create_genesis(
                OwnerLock::key(owner.public()),
                anchor.digest(),
                self.cert.clone(),
                100,
                &self.bank.public(),
            )
            .unwrap();
            let factor = BlindingFactor::random(&mut self.rng, self.plate.public());
            let blinded = blind(&g.digest(), &factor, self.plate.public()).unwrap();
            let sig = unblind(&sign_blinded(&blinded, &self.plate).unwrap(), factor);
            (Asset::new(g, anchor), sig, owner)
        }

        fn register(&mut self, asset: &Asset, cycle: u64) -> Asset {
            let entry = asset.last_entry().unwrap();
            self.relay.submit(entry).unwrap();
            let c = self.relay.commit_cycle(cycle).unwrap();
            let inclusion = self.relay.prove_inclusion(&entry).unwrap();
            asset
                .with_step(PopStep {
                    entry,
                    inclusion,
                    commitment: c,
                    aggregation: vec![],
                })
                .unwrap()
        }

        fn aggregate(&mut self, asset: &Asset, i: usize, cycle: u64) -> Asset {
            let child = asset.proof.steps[i].commitment.clone();
            self.root.aggregate(&child).unwrap();
            self.root.commit_cycle(cycle).unwrap();
            let (inclusion, commitment) = self.root.prove_aggregation(&child).unwrap();
            asset.with_aggregation(
                i,
                AggregationHop {
                    inclusion,
                    commitment,
                },
            )
        }
    }

    fn act_one(fx: &mut Fixture) -> (Asset, AuthKeyPair) {
        let (a, sig, alice) = fx.withdraw();
        let bob = AuthKeyPair::generate(&mut fx.rng);
        let u = create_transfer(
            &a,
            Some(&sig),
            OwnerLock::key(bob.public()),
            None,
            &alice,
            None,
        )
        .unwrap();
        let a = fx.register(&a.with_update(u), 1);
        (a, bob)
    }

    #[test]
    fn act_one_asset_verifies_offline() {
        let mut fx = Fixture::new();
        let (a, _) = act_one(&mut fx);
        let trust = fx.trust();
        instrumentation::reset();
        let report = verify_asset(&a, &trust);
        assert_eq!(instrumentation::snapshot().total(), 0);
        assert!(report.passed(), "{}", report.render());
        assert_eq!(report.finality, Finality::LocallyFinal);
        assert!(report.render().contains("locally final, globally pending"));

        let a = fx.aggregate(&a, 0, 1);
        assert_eq!(verify_asset(&a, &trust).finality, Finality::GloballyFinal);
    }

    #[test]
    fn hex_round_trip() {
        let mut fx = Fixture::new();
        let (a, _) = act_one(&mut fx);
        assert_eq!(Asset::from_hex(&a.to_hex()).unwrap(), a);
    }

    #[test]
    fn genesis_rejects_mismatched_certificate() {
        let fx = Fixture::new();
        let r = create_genesis(
            OwnerLock::key(fx.bank.public()),
            Digest::ZERO,
            fx.cert.clone(),
            50,
            &fx.bank.public(),
        );
        assert_eq!(r, Err(AssetError::BadCertificate(50)));
    }

    #[test]
    fn transfer_errors() {
        let mut fx = Fixture::new();
        let (a, sig, alice) = fx.withdraw();
        let mallory = AuthKeyPair::generate(&mut fx.rng);
        let to = OwnerLock::key(mallory.public());
        assert_eq!(
            create_transfer(&a, Some(&sig), to, None, &mallory, None),
            Err(AssetError::NotOwner)
        );
        assert_eq!(
            create_transfer(&a, None, to, None, &alice, None),
            Err(AssetError::MissingValiditySignature)
        );
        let (_, other_sig, _) = fx.withdraw();
        assert_eq!(
            create_transfer(&a, Some(&other_sig), to, None, &alice, None),
            Err(AssetError::InvalidValiditySignature)
        );
    }

    #[test]
    fn forged_commitment_fails_anchoring() {
        let mut fx = Fixture::new();
        let (mut a, _) = act_one(&mut fx);
        let forged = fx.relay.forge_fork(1, Digest::hash(b"x")).unwrap();
        a.proof.steps[0].commitment = forged;
        let report = verify_asset(&a, &fx.trust());
        assert_eq!(report.finality, Finality::Invalid);
        assert_eq!(report.anchoring, vec![Some(false)]);
    }

    #[test]
    fn unanchored_update_is_pending() {
        let mut fx = Fixture::new();
        let (a, bob) = act_one(&mut fx);
        let carol = AuthKeyPair::generate(&mut fx.rng);
        let u =
            create_transfer(&a, None, OwnerLock::key(carol.public()), None, &bob, None).unwrap();
        let a = a.with_update(u);
        let report = verify_asset(&a, &fx.trust());
        assert_eq!(report.finality, Finality::Pending);
        assert_eq!(report.anchoring, vec![Some(true), None]);
    }

    #[test]
    fn hashlocked_owner_needs_secret() {
        let mut fx = Fixture::new();
        let (a, sig, alice) = fx.withdraw();
        let bob = AuthKeyPair::generate(&mut fx.rng);
        let secret = [9u8; 32];
        let u = create_transfer(
            &a,
            Some(&sig),
            OwnerLock::locked(bob.public(), &secret),
            None,
            &alice,
            None,
        )
        .unwrap();
        let a = fx.register(&a.with_update(u), 1);
        assert!(verify_asset(&a, &fx.trust()).passed());
        let carol = OwnerLock::key(AuthKeyPair::generate(&mut fx.rng).public());
        assert_eq!(
            create_transfer(&a, None, carol, None, &bob, None),
            Err(AssetError::Locked)
        );
        assert_eq!(
            create_transfer(&a, None, carol, None, &bob, Some([1; 32])),
            Err(AssetError::Locked)
        );
        let u = create_transfer(&a, None, carol, None, &bob, Some(secret)).unwrap();
        let a = fx.register(&a.with_update(u), 2);
        assert!(verify_asset(&a, &fx.trust()).passed());
        assert!(check_control(&a, &carol.key, None).is_ok());
    }

    #[test]
    fn double_spend_at_each_position_cannot_be_anchored() {
        let mut fx = Fixture::new();
        let (a0, sig, alice) = fx.withdraw();
        let keys: Vec<AuthKeyPair> = (0..3).map(|_| AuthKeyPair::generate(&mut fx.rng)).collect();
        let mut history = vec![a0.clone()];
        let mut owners = vec![alice];
        let mut a = a0;
        for (i, k) in keys.iter().enumerate() {
            let v = (i == 0).then_some(&sig);
            let u = create_transfer(
                &a,
                v,
                OwnerLock::key(k.public()),
                None,
                owners.last().unwrap(),
                None,
            )
            .unwrap();
            a = fx.register(&a.with_update(u), i as u64 + 1);
            history.push(a.clone());
            owners.push(k.clone());
        }
        for pos in 0..3 {
            let base = &history[pos];
            let thief = AuthKeyPair::generate(&mut fx.rng);
            let v = (pos == 0).then_some(&sig);
            let u = create_transfer(
                base,
                v,
                OwnerLock::key(thief.public()),
                None,
                &owners[pos],
                None,
            )
            .unwrap();
            let forked = base.with_update(u);
            let err = fx.relay.submit(forked.last_entry().unwrap()).unwrap_err();
            assert!(matches!(
                err,
                crate::relay::RelayError::ConflictingSuccessor { .. }
            ));
            // borrowing the honest proof step does not help
            let mut stolen = forked.clone();
            stolen
                .proof
                .steps
                .push(history[pos + 1].proof.steps[pos].clone());
            assert!(!verify_asset(&stolen, &fx.trust()).passed());
        }
    }

    #[test]
    fn updates_carry_no_sender_identity() {
        let mut fx = Fixture::new();
        let (a, _) = act_one(&mut fx);
        let g = a.genesis.to_canonical();
        let u = a.updates[0].to_canonical();
        for needle in [b"alice".as_slice(), b"wallet", b"account"] {
            assert!(!g.0.windows(needle.len()).any(|w| w == needle));
            assert!(!u.0.windows(needle.len()).any(|w| w == needle));
        }
        // only the owner key of genesis is present; the update names only B
        let alice_key = a.genesis.owner.key.0;
        assert!(!u.0.windows(32).any(|w| w == alice_key));
    }

    #[test]
    fn privacy_lint_flags_reuse() {
        let mut fx = Fixture::new();
        let (a, _, _) = fx.withdraw();
        let (b, _, _) = fx.withdraw();
        assert!(privacy_lint([&a.genesis, &b.genesis]).is_empty());
        let mut c = b.genesis.clone();
        c.owner = a.genesis.owner;
        let f = privacy_lint([&a.genesis, &b.genesis, &c]);
        assert_eq!(
            f,
            vec![PrivacyFinding::ReusedOwnerKey {
                key: a.genesis.owner.key,
                count: 2
            }]
        );
    }

    #[test]
    fn trust_roots_text_round_trip() {
        let fx = Fixture::new();
        let t = fx.trust();
        assert_eq!(TrustRoots::from_text(&t.to_text()).unwrap(), t);
        assert!(TrustRoots::from_text("relay x").is_err());
    }
}
