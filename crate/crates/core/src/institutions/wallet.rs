use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};

use crate::asset::{
    check_control, create_genesis, create_transfer, verify_asset, Asset, AssetError,
    DenominationCertificate, OwnerLock, TrustRoots,
};
use crate::blindsig::{blind, unblind, verify, BlindedMessage, BlindingFactor, Signature};
use crate::codec::Digest;
use crate::keys::{AuthKeyPair, PublicKey};
use crate::relay::RelayCommitment;

use super::{PayError, WithdrawError};

/// An asset the wallet controls.
#[derive(Clone, Debug)]
pub struct HeldAsset {
    pub asset: Asset,
    pub key: AuthKeyPair,
    /// Set until the first transfer consumes it.
    pub validity: Option<Signature>,
    /// Hash-lock preimage, when the current owner lock has one.
    pub secret: Option<[u8; 32]>,
    /// First cycle in which a freshly withdrawn asset may be spent.
    pub spendable_from: u64,
}

impl HeldAsset {
    pub fn denomination(&self) -> u64 {
        self.asset.denomination()
    }
}

#[derive(Clone, Debug)]
struct PendingWithdrawal {
    template: Asset,
    factor: BlindingFactor,
    key: AuthKeyPair,
}

#[derive(Clone, Debug)]
struct ReceiveKey {
    key: AuthKeyPair,
    secret: Option<[u8; 32]>,
}

/// A non-custodial wallet. `holder_id` labels the wallet inside the
/// simulator only and is never encoded into a protocol object.
#[derive(Clone, Debug)]
pub struct Wallet {
    pub holder_id: String,
    pub preferred_relay: String,
    held: Vec<HeldAsset>,
    pending: BTreeMap<u64, PendingWithdrawal>,
    receiving: BTreeMap<PublicKey, ReceiveKey>,
    next_request: u64,
}

impl Wallet {
    pub fn new(holder_id: impl Into<String>, preferred_relay: impl Into<String>) -> Self {
        Wallet {
            holder_id: holder_id.into(),
            preferred_relay: preferred_relay.into(),
            held: Vec::new(),
            pending: BTreeMap::new(),
            receiving: BTreeMap::new(),
            next_request: 0,
        }
    }

    pub fn held(&self) -> &[HeldAsset] {
        &self.held
    }

    pub fn balance(&self) -> u64 {
        self.held.iter().map(|h| h.denomination()).sum()
    }

    pub fn pending_withdrawals(&self) -> usize {
        self.pending.len()
    }

    /// Step 1: a fresh key and genesis template, blinded for the plate.
    pub fn start_withdrawal<R: RngCore + CryptoRng>(
        &mut self,
        rng: &mut R,
        certificate: &DenominationCertificate,
        anchor: &RelayCommitment,
        central_bank: &PublicKey,
    ) -> Result<(u64, BlindedMessage), WithdrawError> {
        let key = AuthKeyPair::generate(rng);
        let genesis = create_genesis(
            OwnerLock::key(key.public()),
            anchor.digest(),
            certificate.clone(),
            certificate.denomination,
            central_bank,
        )?;
        let plate_key = &certificate.plate_key;
        let factor = BlindingFactor::random(rng, plate_key);
        let blinded = blind(&genesis.digest(), &factor, plate_key)?;
        let id = self.next_request;
        self.next_request += 1;
        self.pending.insert(
            id,
            PendingWithdrawal {
                template: Asset::new(genesis, anchor.clone()),
                factor,
                key,
            },
        );
        Ok((id, blinded))
    }

    /// Unblinds the returned signature; the blinding factor is dropped
    /// here whatever the outcome.
    pub fn finish_withdrawal(
        &mut self,
        request: u64,
        blinded_signature: &Signature,
        spendable_from: u64,
    ) -> Result<&HeldAsset, WithdrawError> {
        let p = self
            .pending
            .remove(&request)
            .ok_or(WithdrawError::UnknownRequest(request))?;
        let plate_key = p.template.genesis.certificate.plate_key.clone();
        let sig = unblind(blinded_signature, p.factor);
        if !verify(&p.template.genesis.digest(), &sig, &plate_key) {
            return Err(WithdrawError::BadSignature);
        }
        self.held.push(HeldAsset {
            asset: p.template,
            key: p.key,
            validity: Some(sig),
            secret: None,
            spendable_from,
        });
        Ok(self.held.last().unwrap())
    }

    pub fn abandon_withdrawal(&mut self, request: u64) {
        self.pending.remove(&request);
    }

    /// A fresh key to receive one payment.
    pub fn receive_key<R: RngCore + CryptoRng>(&mut self, rng: &mut R) -> PublicKey {
        let key = AuthKeyPair::generate(rng);
        let public = key.public();
        self.receiving
            .insert(public, ReceiveKey { key, secret: None });
        public
    }

    /// Index of a spendable asset of this denomination.
    pub fn find(&self, denomination: u64, cycle: u64) -> Option<usize> {
        self.held
            .iter()
            .position(|h| h.denomination() == denomination && h.spendable_from <= cycle)
    }

    pub fn find_any(&self, cycle: u64) -> Option<usize> {
        self.held.iter().position(|h| h.spendable_from <= cycle)
    }

    /// Builds the transfer of held asset `index` to `to` without giving
    /// the asset up.
    pub fn prepare_payment(
        &self,
        index: usize,
        to: OwnerLock,
        recipient_commitment: Option<Digest>,
        cycle: u64,
    ) -> Result<Asset, PayError> {
        let h = self.held.get(index).ok_or(PayError::UnknownAsset(index))?;
        if h.spendable_from > cycle {
            return Err(PayError::CoolingOff {
                until: h.spendable_from,
            });
        }
        let update = create_transfer(
            &h.asset,
            h.validity.as_ref(),
            to,
            recipient_commitment,
            &h.key,
            h.secret,
        )?;
        Ok(h.asset.with_update(update))
    }

    /// Builds the transfer of held asset `index` to `to` and gives the asset
    /// up. The result still needs registering at its home relay.
    pub fn pay(
        &mut self,
        index: usize,
        to: OwnerLock,
        recipient_commitment: Option<Digest>,
        cycle: u64,
    ) -> Result<Asset, PayError> {
        let moved = self.prepare_payment(index, to, recipient_commitment, cycle)?;
        self.held.remove(index);
        Ok(moved)
    }

    /// Takes an incoming asset after checking it verifies and that this
    /// wallet can control its current state. Accepts assets still pending
    /// registration when `allow_pending` is set (the recipient registers
    /// them itself).
    pub fn accept(
        &mut self,
        asset: Asset,
        trust: &TrustRoots,
        allow_pending: bool,
        cycle: u64,
    ) -> Result<(), PayError> {
        let rk = self.check_incoming_key(&asset, trust, allow_pending)?;
        self.receiving.remove(&asset.current_owner().key);
        self.held.push(HeldAsset {
            asset,
            key: rk.key,
            validity: None,
            secret: rk.secret,
            spendable_from: cycle,
        });
        Ok(())
    }

    /// The checks of [`Wallet::accept`] without taking the asset.
    pub fn check_incoming(
        &self,
        asset: &Asset,
        trust: &TrustRoots,
        allow_pending: bool,
    ) -> Result<(), PayError> {
        self.check_incoming_key(asset, trust, allow_pending)
            .map(|_| ())
    }

    fn check_incoming_key(
        &self,
        asset: &Asset,
        trust: &TrustRoots,
        allow_pending: bool,
    ) -> Result<ReceiveKey, PayError> {
        let report = verify_asset(asset, trust);
        let ok = report.passed()
            || (allow_pending
                && report.finality == crate::asset::Finality::Pending
                && asset.unanchored() == 1);
        if !ok {
            return Err(PayError::Rejected(report.render()));
        }
        let owner = asset.current_owner();
        let rk = self
            .receiving
            .get(&owner.key)
            .ok_or(PayError::Asset(AssetError::NotOwner))?
            .clone();
        // a hash-locked asset is kept even without its secret; it just
        // cannot be moved until the secret arrives
        if owner.hashlock.is_none() || rk.secret.is_some() {
            check_control(asset, &owner.key, rk.secret.as_ref())?;
        }
        Ok(rk)
    }

    /// Whether held asset `index` can be moved now.
    pub fn can_claim(&self, index: usize) -> Result<(), AssetError> {
        let h = self.held.get(index).ok_or(AssetError::NotOwner)?;
        check_control(&h.asset, &h.key.public(), h.secret.as_ref())
    }

    /// Records a hash-lock preimage for a receiving key.
    pub fn learn_secret(&mut self, key: &PublicKey, secret: [u8; 32]) {
        if let Some(rk) = self.receiving.get_mut(key) {
            rk.secret = Some(secret);
        }
        for h in &mut self.held {
            if h.asset.current_owner().key == *key {
                h.secret = Some(secret);
            }
        }
    }

    /// Replaces a held asset with a version carrying more proof.
    pub fn refresh(&mut self, index: usize, asset: Asset) {
        if let Some(h) = self.held.get_mut(index) {
            if h.asset.state_digest() == asset.state_digest() {
                h.asset = asset;
            }
        }
    }

    pub fn held_mut(&mut self) -> impl Iterator<Item = &mut HeldAsset> {
        self.held.iter_mut()
    }

    pub fn take(&mut self, index: usize) -> Option<HeldAsset> {
        (index < self.held.len()).then(|| self.held.remove(index))
    }

    pub fn put(&mut self, held: HeldAsset) {
        self.held.push(held);
    }
}
