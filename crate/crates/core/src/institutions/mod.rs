//! Wallets, commercial banks and the central bank, and the protocols that
//! connect them: withdrawal, payment, deposit (with change), and compliance.

pub mod account;
pub mod bank;
pub mod central_bank;
pub mod compliance;
pub mod protocols;
pub mod wallet;

use thiserror::Error;

use crate::asset::AssetError;
use crate::blindsig::BlindError;
use crate::mint::MintError;
use crate::relay::RelayError;

pub use account::{AccountDetails, BankAccount, RecipientCertificate};
pub use bank::{Bank, Funding};
pub use central_bank::CentralBank;
pub use compliance::{
    check_compliance, CommitmentRule, ComplianceReport, ComplianceRule, Finding, Verdict,
};
pub use wallet::{HeldAsset, Wallet};

pub const DEFAULT_COOLING_OFF: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WithdrawError {
    #[error("insufficient funds: balance {balance}, requested {requested}")]
    InsufficientFunds { balance: u64, requested: u64 },
    #[error("no plate available for denomination {0}")]
    PlateUnavailable(u64),
    #[error("insufficient reserves: {available} available, {requested} requested")]
    InsufficientReserves { available: u64, requested: u64 },
    #[error("value {value} is not a multiple of denomination {denomination}")]
    VoucherSplit { value: u64, denomination: u64 },
    #[error("unknown account {0}")]
    UnknownAccount(String),
    #[error("unknown withdrawal request {0}")]
    UnknownRequest(u64),
    #[error("returned signature does not verify")]
    BadSignature,
    #[error(transparent)]
    Mint(#[from] MintError),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Blind(#[from] BlindError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PayError {
    #[error("asset cooling off until cycle {until}")]
    CoolingOff { until: u64 },
    #[error("no held asset at index {0}")]
    UnknownAsset(usize),
    #[error("payment conflict: {0}")]
    PaymentConflict(RelayError),
    #[error("relay: {0}")]
    Relay(RelayError),
    #[error("recipient certificate does not verify")]
    BadRecipientCertificate,
    #[error("recipient rejected the asset:\n{0}")]
    Rejected(String),
    #[error(transparent)]
    Asset(#[from] AssetError),
}

impl From<RelayError> for PayError {
    fn from(e: RelayError) -> Self {
        match e {
            RelayError::ConflictingSuccessor { .. } => PayError::PaymentConflict(e),
            other => PayError::Relay(other),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DepositError {
    #[error("asset does not verify:\n{0}")]
    VerificationFailed(String),
    #[error("compliance failed:\n{}", .0.render())]
    ComplianceFailed(ComplianceReport),
    #[error("external evidence required:\n{}", .0.render())]
    NeedsExternalEvidence(ComplianceReport),
    #[error("asset already spent")]
    AlreadySpent,
    #[error("unknown account {0}")]
    UnknownAccount(String),
    #[error("asset is not owned by a pending deposit key")]
    UnknownDepositKey,
    #[error("change request of {requested} does not match overpayment {overpayment}")]
    ValueMismatch { requested: u64, overpayment: u64 },
    #[error("amount owed {owed} is not below asset value {value}")]
    NoChangeDue { owed: u64, value: u64 },
    #[error(transparent)]
    Withdraw(#[from] WithdrawError),
    #[error(transparent)]
    Mint(#[from] MintError),
    #[error(transparent)]
    Pay(#[from] PayError),
    #[error("relay: {0}")]
    Relay(RelayError),
}

impl From<RelayError> for DepositError {
    fn from(e: RelayError) -> Self {
        match e {
            RelayError::ConflictingSuccessor { .. } => DepositError::AlreadySpent,
            other => DepositError::Relay(other),
        }
    }
}
