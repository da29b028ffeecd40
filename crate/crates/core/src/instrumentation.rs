//! Per-thread access counters for the online services.
//!
//! Offline verification must never reach a relay, mint or bank. Every
//! stateful service entry point bumps its counter here so tests (and the
//! `verify` command) can show that a verification touched none of them.

use std::cell::Cell;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Service {
    Relay,
    Mint,
    Bank,
}

thread_local! {
    static COUNTERS: [Cell<u64>; 3] = const { [Cell::new(0), Cell::new(0), Cell::new(0)] };
}

fn slot(s: Service) -> usize {
    match s {
        Service::Relay => 0,
        Service::Mint => 1,
        Service::Bank => 2,
    }
}

pub fn touch(s: Service) {
    COUNTERS.with(|c| c[slot(s)].set(c[slot(s)].get() + 1));
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AccessCounts {
    pub relay: u64,
    pub mint: u64,
    pub bank: u64,
}

impl AccessCounts {
    pub fn total(&self) -> u64 {
        self.relay + self.mint + self.bank
    }

    /// Accesses since `earlier`.
    pub fn since(&self, earlier: &AccessCounts) -> AccessCounts {
        AccessCounts {
            relay: self.relay - earlier.relay,
            mint: self.mint - earlier.mint,
            bank: self.bank - earlier.bank,
        }
    }
}

pub fn snapshot() -> AccessCounts {
    COUNTERS.with(|c| AccessCounts {
        relay: c[0].get(),
        mint: c[1].get(),
        bank: c[2].get(),
    })
}

pub fn reset() {
    COUNTERS.with(|c| c.iter().for_each(|x| x.set(0)));
}
