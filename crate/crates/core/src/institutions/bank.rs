use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};

use crate::asset::{create_transfer, verify_asset, Asset, Finality, OwnerLock, TrustRoots};
use crate::blindsig::{BlindedMessage, Signature};
use crate::codec::Digest;
use crate::keys::{AuthKeyPair, PublicKey};
use crate::mint::{Consumed, Minter, Voucher};

use super::account::{AccountDetails, BankAccount, RecipientCertificate};
use super::central_bank::CentralBank;
use super::compliance::{check_compliance, ComplianceReport, ComplianceRule, Verdict};
use super::{DepositError, WithdrawError};

/// How a withdrawal was paid for at the minter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Funding {
    Vault,
    Voucher,
    /// A voucher bought from the central bank for this withdrawal.
    FreshVoucher,
}

#[derive(Clone, Debug)]
struct PendingDeposit {
    key: AuthKeyPair,
    account_id: String,
}

/// What a bank can see of one withdrawal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WithdrawalView {
    pub account_id: String,
    pub cycle: u64,
    pub denomination: u64,
    pub blinded: BlindedMessage,
}

/// What a bank can see of one deposit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepositView {
    pub account_id: String,
    pub cycle: u64,
    pub asset: Asset,
}

#[derive(Clone, Debug)]
pub struct Bank {
    pub id: String,
    key: AuthKeyPair,
    accounts: BTreeMap<String, BankAccount>,
    vouchers: Vec<Voucher>,
    /// Deposited assets owned by one-time bank keys.
    holdings: Vec<(Asset, AuthKeyPair)>,
    /// Assets surrendered to the minter and anchored, ready to recycle or
    /// redeem.
    vault: Vec<Asset>,
    pending: BTreeMap<PublicKey, PendingDeposit>,
    pub rules: ComplianceRule,
    /// Operator decision that external evidence was supplied.
    pub evidence_override: bool,
    pub withdrawals: Vec<WithdrawalView>,
    pub deposits: Vec<DepositView>,
}

impl Bank {
    pub fn new(id: impl Into<String>, key: AuthKeyPair, rules: ComplianceRule) -> Self {
        Bank {
            id: id.into(),
            key,
            accounts: BTreeMap::new(),
            vouchers: Vec::new(),
            holdings: Vec::new(),
            vault: Vec::new(),
            pending: BTreeMap::new(),
            rules,
            evidence_override: false,
            withdrawals: Vec::new(),
            deposits: Vec::new(),
        }
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public()
    }

    pub fn open_account<R: RngCore + CryptoRng>(
        &mut self,
        rng: &mut R,
        account_id: impl Into<String>,
        owner: impl Into<String>,
        balance: u64,
    ) -> Digest {
        let account_id = account_id.into();
        let mut salt = [0u8; 16];
        rng.fill_bytes(&mut salt);
        let account = BankAccount {
            account_id: account_id.clone(),
            owner: owner.into(),
            balance,
            details: AccountDetails {
                bank_id: self.id.clone(),
                account_id: account_id.clone(),
                salt,
            },
        };
        let c = account.commitment();
        self.accounts.insert(account_id, account);
        c
    }

    pub fn account(&self, id: &str) -> Option<&BankAccount> {
        self.accounts.get(id)
    }

    pub fn accounts(&self) -> impl Iterator<Item = &BankAccount> {
        self.accounts.values()
    }

    pub fn total_balances(&self) -> u64 {
        self.accounts.values().map(|a| a.balance).sum()
    }

    pub fn certify_recipient(&self, recipient: PublicKey) -> RecipientCertificate {
        RecipientCertificate::issue(&self.key, &self.id, recipient)
    }

    pub fn add_vouchers(&mut self, vouchers: impl IntoIterator<Item = Voucher>) {
        self.vouchers.extend(vouchers);
    }

    pub fn vouchers(&self) -> &[Voucher] {
        &self.vouchers
    }

    pub fn holdings(&self) -> impl Iterator<Item = &Asset> {
        self.holdings.iter().map(|(a, _)| a)
    }

    pub fn vault(&self) -> &[Asset] {
        &self.vault
    }

    /// Checks a deposit transfer before it is registered: the asset must
    /// verify apart from the newest (deposit) update's anchor, and the
    /// history before the deposit must satisfy the current rules.
    pub fn check_deposit(
        &self,
        transfer: &Asset,
        trust: &TrustRoots,
    ) -> Result<ComplianceReport, DepositError> {
        let report = verify_asset(transfer, trust);
        let acceptable =
            report.passed() || (report.finality == Finality::Pending && transfer.unanchored() == 1);
        if !acceptable || transfer.hops() == 0 {
            return Err(DepositError::VerificationFailed(report.render()));
        }
        let c = check_compliance(&transfer.without_last_update(), &self.rules);
        match c.verdict {
            Verdict::Pass => Ok(c),
            Verdict::NeedsExternalEvidence if self.evidence_override => Ok(c),
            Verdict::NeedsExternalEvidence => Err(DepositError::NeedsExternalEvidence(c)),
            Verdict::Fail => Err(DepositError::ComplianceFailed(c)),
        }
    }

    /// A one-time key the depositor transfers the asset to.
    pub fn deposit_lock<R: RngCore + CryptoRng>(
        &mut self,
        rng: &mut R,
        account_id: &str,
    ) -> Result<(OwnerLock, Digest), DepositError> {
        let account = self
            .accounts
            .get(account_id)
            .ok_or_else(|| DepositError::UnknownAccount(account_id.to_string()))?;
        let commitment = account.commitment();
        let key = AuthKeyPair::generate(rng);
        let lock = OwnerLock::key(key.public());
        self.pending.insert(
            key.public(),
            PendingDeposit {
                key,
                account_id: account_id.to_string(),
            },
        );
        Ok((lock, commitment))
    }

    /// Credits an asset that now verifies with a pending deposit key as
    /// owner.
    pub fn complete_deposit(
        &mut self,
        asset: Asset,
        trust: &TrustRoots,
        cycle: u64,
    ) -> Result<(String, u64), DepositError> {
        let report = verify_asset(&asset, trust);
        if !report.passed() {
            return Err(DepositError::VerificationFailed(report.render()));
        }
        let owner = asset.current_owner().key;
        let p = self
            .pending
            .remove(&owner)
            .ok_or(DepositError::UnknownDepositKey)?;
        let value = asset.denomination();
        let account = self
            .accounts
            .get_mut(&p.account_id)
            .ok_or_else(|| DepositError::UnknownAccount(p.account_id.clone()))?;
        account.balance += value;
        self.deposits.push(DepositView {
            account_id: p.account_id.clone(),
            cycle,
            asset: asset.clone(),
        });
        self.holdings.push((asset, p.key));
        Ok((p.account_id, value))
    }

    pub fn cancel_deposit(&mut self, lock: &OwnerLock) {
        self.pending.remove(&lock.key);
    }

    pub fn debit(&mut self, account_id: &str, value: u64) -> Result<(), WithdrawError> {
        let a = self
            .accounts
            .get_mut(account_id)
            .ok_or_else(|| WithdrawError::UnknownAccount(account_id.to_string()))?;
        if a.balance < value {
            return Err(WithdrawError::InsufficientFunds {
                balance: a.balance,
                requested: value,
            });
        }
        a.balance -= value;
        Ok(())
    }

    pub fn credit(&mut self, account_id: &str, value: u64) {
        if let Some(a) = self.accounts.get_mut(account_id) {
            a.balance += value;
        }
    }

    /// Builds the transfer of one holding to `minter`. The result must be
    /// registered and then returned through [`Bank::add_to_vault`].
    pub fn surrender(&mut self, index: usize, minter: PublicKey) -> Option<Asset> {
        if index >= self.holdings.len() {
            return None;
        }
        let (asset, key) = self.holdings.remove(index);
        let update =
            create_transfer(&asset, None, OwnerLock::key(minter), None, &key, None).ok()?;
        Some(asset.with_update(update))
    }

    /// Holdings and vault assets, for attaching newer proof.
    pub fn assets_mut(&mut self) -> impl Iterator<Item = &mut Asset> {
        self.holdings
            .iter_mut()
            .map(|(a, _)| a)
            .chain(self.vault.iter_mut())
    }

    pub fn holdings_len(&self) -> usize {
        self.holdings.len()
    }

    pub fn add_to_vault(&mut self, asset: Asset) {
        self.vault.push(asset);
    }

    /// Debits the account and pays the minter for a blind signature on
    /// `blinded`.
    #[allow(clippy::too_many_arguments)]
    pub fn withdraw(
        &mut self,
        account_id: &str,
        denomination: u64,
        blinded: &BlindedMessage,
        minter: &mut Minter,
        central_bank: &mut CentralBank,
        cycle: u64,
    ) -> Result<(Signature, Funding), WithdrawError> {
        let balance = self
            .accounts
            .get(account_id)
            .ok_or_else(|| WithdrawError::UnknownAccount(account_id.to_string()))?
            .balance;
        if balance < denomination {
            return Err(WithdrawError::InsufficientFunds {
                balance,
                requested: denomination,
            });
        }
        let out = self.fund_signature(denomination, blinded, minter, central_bank, cycle)?;
        self.debit(account_id, denomination)?;
        self.withdrawals.push(WithdrawalView {
            account_id: account_id.to_string(),
            cycle,
            denomination,
            blinded: blinded.clone(),
        });
        Ok(out)
    }

    /// Pays the minter for one signature. Prefers a vault asset, then a
    /// voucher in stock, then a voucher bought with reserves.
    pub fn fund_signature(
        &mut self,
        denomination: u64,
        blinded: &BlindedMessage,
        minter: &mut Minter,
        central_bank: &mut CentralBank,
        cycle: u64,
    ) -> Result<(Signature, Funding), WithdrawError> {
        let plate_id = minter
            .plate_for(denomination, cycle)
            .ok_or(WithdrawError::PlateUnavailable(denomination))?
            .plate_id
            .clone();
        if let Some(i) = self
            .vault
            .iter()
            .position(|a| a.denomination() == denomination)
        {
            let (s, _) =
                minter.recycle(&plate_id, Consumed::Asset(&self.vault[i]), blinded, cycle)?;
            self.vault.remove(i);
            return Ok((s, Funding::Vault));
        }
        if let Some(i) = self.vouchers.iter().position(|v| v.value() == denomination) {
            let (s, _) = minter.recycle(
                &plate_id,
                Consumed::Voucher(&self.vouchers[i]),
                blinded,
                cycle,
            )?;
            self.vouchers.remove(i);
            return Ok((s, Funding::Voucher));
        }
        let v = central_bank
            .issue_vouchers(&self.id, denomination, denomination)?
            .remove(0);
        match minter.recycle(&plate_id, Consumed::Voucher(&v), blinded, cycle) {
            Ok((s, _)) => Ok((s, Funding::FreshVoucher)),
            Err(e) => {
                self.vouchers.push(v);
                Err(e.into())
            }
        }
    }

    /// Brings every vault asset to the minter for reserves.
    pub fn redeem_vault(
        &mut self,
        minter: &mut Minter,
        central_bank: &mut CentralBank,
        cycle: u64,
    ) -> Result<u64, DepositError> {
        let mut total = 0;
        while let Some(a) = self.vault.pop() {
            match minter.redeem(&a, cycle) {
                Ok(r) => {
                    central_bank.credit_reserves(&self.id, r.value);
                    total += r.value;
                }
                Err(e) => {
                    self.vault.push(a);
                    return Err(e.into());
                }
            }
        }
        Ok(total)
    }

    /// Removes the vault asset used to fund change, if any.
    pub fn take_vault_asset(&mut self, denomination: u64) -> Option<Asset> {
        let i = self
            .vault
            .iter()
            .position(|a| a.denomination() == denomination)?;
        Some(self.vault.remove(i))
    }
}
