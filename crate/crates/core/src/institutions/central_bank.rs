use std::collections::BTreeMap;

use crate::keys::{AuthKeyPair, PublicKey};
use crate::mint::Voucher;

use super::WithdrawError;

/// The central bank's reserve ledger and voucher desk.
#[derive(Clone, Debug)]
pub struct CentralBank {
    key: AuthKeyPair,
    reserves: BTreeMap<String, u64>,
    next_voucher: u64,
    vouchers_issued: u64,
}

impl CentralBank {
    pub fn new(key: AuthKeyPair) -> Self {
        CentralBank {
            key,
            reserves: BTreeMap::new(),
            next_voucher: 0,
            vouchers_issued: 0,
        }
    }

    pub fn key(&self) -> &AuthKeyPair {
        &self.key
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public()
    }

    pub fn reserves(&self, bank: &str) -> u64 {
        self.reserves.get(bank).copied().unwrap_or(0)
    }

    pub fn total_reserves(&self) -> u64 {
        self.reserves.values().sum()
    }

    pub fn credit_reserves(&mut self, bank: &str, value: u64) {
        *self.reserves.entry(bank.to_string()).or_default() += value;
    }

    /// Total face value of vouchers ever issued.
    pub fn vouchers_issued(&self) -> u64 {
        self.vouchers_issued
    }

    /// Sells `value` worth of vouchers of `denomination` for reserves.
    pub fn issue_vouchers(
        &mut self,
        bank: &str,
        value: u64,
        denomination: u64,
    ) -> Result<Vec<Voucher>, WithdrawError> {
        if denomination == 0 || !value.is_multiple_of(denomination) {
            return Err(WithdrawError::VoucherSplit {
                value,
                denomination,
            });
        }
        let available = self.reserves(bank);
        if available < value {
            return Err(WithdrawError::InsufficientReserves {
                available,
                requested: value,
            });
        }
        self.reserves.insert(bank.to_string(), available - value);
        self.vouchers_issued += value;
        Ok((0..value / denomination)
            .map(|_| {
                self.next_voucher += 1;
                Voucher::issue(
                    &self.key,
                    format!("v{:06}", self.next_voucher),
                    denomination,
                )
            })
            .collect())
    }
}
