//! Can the issuer side link withdrawals to deposits?
//!
//! A run withdraws one asset per payer in a single window, lets each payer
//! pay a random merchant after a random delay, and has merchants deposit
//! after another random delay. The matcher then sees exactly what the bank
//! and the minter record (accounts, cycles, blinded messages, deposited
//! asset bytes) and pairs every deposit with a withdrawal.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{Beta, ContinuousCDF};

use super::config::{PlateSpec, SimulationConfig};
use super::scenario::Scenario;
use super::world::World;
use super::SimError;
use crate::institutions::Bank;

#[derive(Clone, Debug, PartialEq)]
pub struct LinkageTrial {
    pub seed: u64,
    pub deposits: usize,
    pub matches: usize,
    /// 95% Clopper-Pearson interval for the match rate.
    pub interval: (f64, f64),
}

impl LinkageTrial {
    pub fn contains(&self, p: f64) -> bool {
        self.interval.0 <= p && p <= self.interval.1
    }
}

/// Exact binomial confidence interval for `k` successes in `n` trials.
pub fn clopper_pearson(k: usize, n: usize, alpha: f64) -> (f64, f64) {
    assert!(n > 0 && k <= n);
    let (k, n) = (k as f64, n as f64);
    let lower = if k == 0.0 {
        0.0
    } else {
        beta_quantile(k, n - k + 1.0, alpha / 2.0)
    };
    let upper = if k == n {
        1.0
    } else {
        beta_quantile(k + 1.0, n - k, 1.0 - alpha / 2.0)
    };
    (lower, upper)
}

// statrs' own inverse stops at about 1e-5; its cdf is exact enough to
// bisect on.
fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let beta = Beta::new(a, b).unwrap();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = (lo + hi) / 2.0;
        if beta.cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / 2.0
}

/// Scenario text for `n` payers. With `leaky` set, withdrawals are spread
/// one per cycle and every delay is fixed, which hands the matcher the
/// ordering it needs.
pub fn linkage_scenario(seed: u64, n: usize, leaky: bool) -> String {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = format!(
        "relay root\nrelay local parent=root\nbank b1 reserves={}\n",
        100 * n
    );
    for i in 0..n {
        out.push_str(&format!(
            "account b1 p{i:03} 100\nwallet p{i:03} bank=b1 account=p{i:03}\n\
             account b1 m{i:03} 0\nwallet m{i:03} bank=b1 account=m{i:03}\n"
        ));
    }
    let mut merchants: Vec<usize> = (0..n).collect();
    merchants.shuffle(&mut rng);
    let mut order: Vec<usize> = (0..n).collect();
    if !leaky {
        order.shuffle(&mut rng);
    }
    let mut ops: Vec<(u64, String)> = Vec::new();
    for (slot, &i) in order.iter().enumerate() {
        let withdraw = if leaky { 1 + slot as u64 } else { 1 };
        let (pay_delay, deposit_delay) = if leaky {
            (10, 1)
        } else {
            (10 + rng.gen_range(0..100), 1 + rng.gen_range(0..100))
        };
        let option = rng.gen_range(1..=2);
        let m = merchants[i];
        let pay = withdraw + pay_delay;
        ops.push((withdraw, format!("withdraw p{i:03} 100")));
        ops.push((pay, format!("pay p{i:03} m{m:03} 100 option={option}")));
        ops.push((pay + deposit_delay, format!("deposit m{m:03} 100")));
    }
    // stable: same-cycle operations keep the shuffled order
    ops.sort_by_key(|(c, _)| *c);
    for (c, op) in ops {
        out.push_str(&format!("at {c} {op}\n"));
    }
    out
}

/// Pairs each deposit with a withdrawal using only bank-side records.
/// Deposits are taken in order of first spend (visible in the asset) and
/// matched first-in first-out against withdrawals of the same value made
/// no earlier than the asset's anchor. Returns, per deposit, the guessed
/// withdrawing account.
pub fn match_deposits(bank: &Bank) -> Vec<(usize, String)> {
    let mut deposits: Vec<(u64, u64, usize)> = bank
        .deposits
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let first_spend = d
                .asset
                .proof
                .steps
                .first()
                .map(|s| s.commitment.body.timestamp)
                .unwrap_or(d.cycle);
            (first_spend, d.cycle, i)
        })
        .collect();
    deposits.sort();
    let mut used = vec![false; bank.withdrawals.len()];
    let mut out = Vec::new();
    for (first_spend, _, i) in deposits {
        let d = &bank.deposits[i];
        let anchor = d.asset.proof.anchor.body.timestamp;
        let pick = bank
            .withdrawals
            .iter()
            .enumerate()
            .filter(|(j, w)| {
                !used[*j]
                    && w.denomination == d.asset.denomination()
                    && w.cycle >= anchor
                    && w.cycle <= first_spend
            })
            .min_by_key(|(j, w)| (w.cycle, *j))
            .map(|(j, _)| j);
        if let Some(j) = pick {
            used[j] = true;
            out.push((i, bank.withdrawals[j].account_id.clone()));
        }
    }
    out
}

/// One full run and the matcher's score against ground truth.
pub fn linkage_trial(seed: u64, n: usize, leaky: bool) -> Result<LinkageTrial, SimError> {
    let scenario = Scenario::parse(&linkage_scenario(seed, n, leaky))?;
    let mut config = SimulationConfig {
        seed,
        flush_cycles: 2,
        ..SimulationConfig::default()
    };
    config.plates = PlateSpec::defaults()
        .into_iter()
        .filter(|p| p.denomination == 100)
        .collect();
    let mut world = World::new(&config, &scenario)?;
    let plan = scenario.by_cycle();
    for cycle in 0..=scenario.last_cycle() + config.flush_cycles {
        world.run_cycle(plan.get(&cycle).map(|v| v.as_slice()).unwrap_or(&[]));
    }
    if let Some(v) = world.violations.first() {
        return Err(SimError::InvariantViolation {
            cycle: v.cycle,
            id: v.id,
            detail: v.detail.clone(),
        });
    }
    let bank = &world.banks["b1"];
    let guesses = match_deposits(bank);
    let matches = guesses
        .iter()
        .filter(|(i, guess)| {
            let g = bank.deposits[*i].asset.genesis.digest();
            world.withdrawn_by.get(&g) == Some(guess)
        })
        .count();
    let deposits = bank.deposits.len();
    Ok(LinkageTrial {
        seed,
        deposits,
        matches,
        interval: clopper_pearson(matches, deposits.max(1), 0.05),
    })
}
