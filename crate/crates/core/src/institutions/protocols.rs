//! Synchronous versions of the multi-party protocols. Each runs a whole
//! exchange in one call, registering updates through a [`Registrar`]. The
//! simulator drives the same building blocks through its message queue
//! instead.

use rand::{CryptoRng, RngCore};

use crate::asset::{Asset, OwnerLock, PopStep, TrustRoots};
use crate::blindsig::{BlindedMessage, Signature};
use crate::codec::Digest;
use crate::keys::PublicKey;
use crate::mint::Minter;
use crate::relay::{Relay, RelayError};

use super::{
    Bank, CentralBank, DepositError, PayError, RecipientCertificate, Wallet, WithdrawError,
};

/// Gets the newest update of an asset committed at its home relay.
pub trait Registrar {
    fn register(&mut self, asset: &Asset) -> Result<Asset, RelayError>;
}

/// Registers by committing a relay cycle on the spot.
pub struct ImmediateRelay<'a> {
    pub relay: &'a mut Relay,
    pub clock: u64,
}

impl Registrar for ImmediateRelay<'_> {
    fn register(&mut self, asset: &Asset) -> Result<Asset, RelayError> {
        let entry = asset.last_entry().ok_or(RelayError::UnknownEntry)?;
        self.relay.submit(entry)?;
        let commitment = self.relay.commit_cycle(self.clock)?;
        self.clock += 1;
        let inclusion = self.relay.prove_inclusion(&entry)?;
        asset
            .with_step(PopStep {
                entry,
                inclusion,
                commitment,
                aggregation: Vec::new(),
            })
            .map_err(|_| RelayError::UnknownEntry)
    }
}

/// Fig. Step 2: the wallet blinds a fresh template, the bank debits the
/// account and has the minter sign, the wallet unblinds. Returns the index
/// of the new held asset.
#[allow(clippy::too_many_arguments)]
pub fn withdraw<R: RngCore + CryptoRng>(
    rng: &mut R,
    wallet: &mut Wallet,
    bank: &mut Bank,
    account_id: &str,
    denomination: u64,
    minter: &mut Minter,
    central_bank: &mut CentralBank,
    anchor_relay: &Relay,
    cycle: u64,
    cooling_off: u64,
) -> Result<usize, WithdrawError> {
    let certificate = minter
        .plate_for(denomination, cycle)
        .ok_or(WithdrawError::PlateUnavailable(denomination))?
        .certificate
        .clone();
    let anchor = anchor_relay
        .latest()
        .ok_or(WithdrawError::Asset(crate::asset::AssetError::StepMismatch))?
        .clone();
    let (request, blinded) =
        wallet.start_withdrawal(rng, &certificate, &anchor, &central_bank.public_key())?;
    let (sig, _) = match bank.withdraw(
        account_id,
        denomination,
        &blinded,
        minter,
        central_bank,
        cycle,
    ) {
        Ok(v) => v,
        Err(e) => {
            wallet.abandon_withdrawal(request);
            return Err(e);
        }
    };
    wallet.finish_withdrawal(request, &sig, cycle + cooling_off)?;
    Ok(wallet.held().len() - 1)
}

/// Who sends the update to the relay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PaymentOption {
    /// Option 1: the recipient registers the update.
    RecipientRegisters,
    /// Option 2: the payer registers, then hands over asset and proof.
    PayerRegisters,
}

/// The recipient side of a payment, prepared before the payer signs.
#[derive(Clone, Debug)]
pub struct PaymentTarget {
    pub lock: OwnerLock,
    pub commitment: Option<Digest>,
    /// Certificate for `lock.key` and the key of the bank that issued it.
    pub certificate: Option<(RecipientCertificate, PublicKey)>,
}

impl PaymentTarget {
    pub fn fresh<R: RngCore + CryptoRng>(
        rng: &mut R,
        payee: &mut Wallet,
        commitment: Option<Digest>,
    ) -> Self {
        PaymentTarget {
            lock: OwnerLock::key(payee.receive_key(rng)),
            commitment,
            certificate: None,
        }
    }
}

/// Fig. Step 4, both options.
#[allow(clippy::too_many_arguments)]
pub fn pay(
    payer: &mut Wallet,
    index: usize,
    payee: &mut Wallet,
    target: &PaymentTarget,
    option: PaymentOption,
    registrar: &mut impl Registrar,
    trust: &TrustRoots,
    cycle: u64,
) -> Result<(), PayError> {
    if let Some((cert, bank_key)) = &target.certificate {
        if !cert.verify(bank_key, &target.lock.key) {
            return Err(PayError::BadRecipientCertificate);
        }
    }
    let asset = payer.pay(index, target.lock, target.commitment, cycle)?;
    match option {
        PaymentOption::RecipientRegisters => {
            // the recipient checks everything except the new anchor first
            let mut staged = payee.clone();
            staged.accept(asset.clone(), trust, true, cycle)?;
            let registered = registrar.register(&asset)?;
            payee.accept(registered, trust, false, cycle)
        }
        PaymentOption::PayerRegisters => {
            let registered = registrar.register(&asset)?;
            payee.accept(registered, trust, false, cycle)
        }
    }
}

/// The holder transfers a held asset to a one-time bank key carrying the
/// account commitment; the bank credits once the transfer is anchored.
#[allow(clippy::too_many_arguments)]
pub fn deposit<R: RngCore + CryptoRng>(
    rng: &mut R,
    holder: &mut Wallet,
    index: usize,
    bank: &mut Bank,
    account_id: &str,
    registrar: &mut impl Registrar,
    trust: &TrustRoots,
    cycle: u64,
) -> Result<u64, DepositError> {
    let (lock, commitment) = bank.deposit_lock(rng, account_id)?;
    let checked = holder
        .prepare_payment(index, lock, Some(commitment), cycle)
        .map_err(DepositError::from)
        .and_then(|moved| bank.check_deposit(&moved, trust).map(|_| moved))
        .and_then(|moved| registrar.register(&moved).map_err(DepositError::from));
    let registered = match checked {
        Ok(a) => a,
        Err(e) => {
            bank.cancel_deposit(&lock);
            return Err(e);
        }
    };
    holder.take(index);
    let (_, value) = bank.complete_deposit(registered, trust, cycle)?;
    Ok(value)
}

/// Moves every bank holding to the minter's key so it can be recycled or
/// redeemed.
pub fn surrender_holdings(
    bank: &mut Bank,
    minter: PublicKey,
    registrar: &mut impl Registrar,
) -> Result<usize, RelayError> {
    let mut n = 0;
    while bank.holdings_len() > 0 {
        let a = bank.surrender(0, minter).ok_or(RelayError::UnknownEntry)?;
        bank.add_to_vault(registrar.register(&a)?);
        n += 1;
    }
    Ok(n)
}

/// A merchant deposits an overpaying asset and the bank returns a blind
/// signature of the change value for the payer. The deposited asset is
/// redeemed for reserves and a voucher of the change value is recycled
/// against the payer's request.
#[allow(clippy::too_many_arguments)]
pub fn deposit_with_change<R: RngCore + CryptoRng>(
    rng: &mut R,
    merchant: &mut Wallet,
    index: usize,
    bank: &mut Bank,
    account_id: &str,
    owed: u64,
    change_request: &BlindedMessage,
    change_denomination: u64,
    minter: &mut Minter,
    central_bank: &mut CentralBank,
    registrar: &mut impl Registrar,
    trust: &TrustRoots,
    cycle: u64,
) -> Result<(u64, Signature), DepositError> {
    let value = merchant
        .held()
        .get(index)
        .ok_or(PayError::UnknownAsset(index))?
        .denomination();
    if owed >= value {
        return Err(DepositError::NoChangeDue { owed, value });
    }
    let overpayment = value - owed;
    if change_denomination != overpayment {
        return Err(DepositError::ValueMismatch {
            requested: change_denomination,
            overpayment,
        });
    }
    if minter.plate_for(overpayment, cycle).is_none() {
        return Err(WithdrawError::PlateUnavailable(overpayment).into());
    }
    deposit(
        rng, merchant, index, bank, account_id, registrar, trust, cycle,
    )?;
    bank.debit(account_id, overpayment)?;
    let last = bank.holdings_len() - 1;
    let surrendered = bank
        .surrender(last, minter.public_key())
        .ok_or(RelayError::UnknownEntry)?;
    let surrendered = registrar.register(&surrendered)?;
    let redemption = minter.redeem(&surrendered, cycle)?;
    central_bank.credit_reserves(&bank.id, redemption.value);
    let (sig, _) = bank.fund_signature(overpayment, change_request, minter, central_bank, cycle)?;
    Ok((owed, sig))
}
