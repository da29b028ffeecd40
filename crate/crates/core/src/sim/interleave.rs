//! Exhaustive schedule enumeration for a double-spend race.
//!
//! The holder of an asset signs two conflicting transfers and hands one to
//! each of two recipients, who both try to register. Every order in which
//! the resulting messages can be delivered, and every placement of the
//! relay commit among them, is explored from a cloned world.

use super::config::{PlateSpec, SimulationConfig};
use super::scenario::{Op, Scenario};
use super::world::{TxOutcome, World};
use super::SimError;
use crate::asset::verify_asset;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InterleavingReport {
    /// Updates on the asset before the conflicting pair.
    pub position: usize,
    pub interleavings: u64,
    pub max_pending: usize,
    pub failures: Vec<String>,
}

impl InterleavingReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty() && self.interleavings > 0
    }
}

const SETUP: &str = "\
relay root
bank b1 reserves=1000
account b1 alice 100
wallet alice bank=b1 account=alice
wallet h1
wallet h2
wallet bob
wallet carol
at 1 withdraw alice 100
at 2 pay alice h1 100 option=2
at 3 pay h1 h2 100 option=2
";

/// Builds the world just before the double spend at `position` (0, 1 or
/// 2) and returns it with the double-spending holder.
pub fn race_world(position: usize, seed: u64) -> Result<(World, &'static str), SimError> {
    let holders = ["alice", "h1", "h2"];
    let holder = *holders.get(position).ok_or_else(|| {
        SimError::ConfigInvalid(format!("position {position} out of range 0..=2"))
    })?;
    let mut config = SimulationConfig {
        seed,
        cooling_off: 0,
        ..SimulationConfig::default()
    };
    config.plates = PlateSpec::defaults()
        .into_iter()
        .filter(|p| p.denomination == 100)
        .collect();
    let mut scenario = Scenario::parse(SETUP)?;
    scenario.ops.retain(|s| s.cycle <= 1 + position as u64);
    let mut world = World::new(&config, &scenario)?;
    let plan = scenario.by_cycle();
    for cycle in 0..=2 + position as u64 {
        world.run_cycle(plan.get(&cycle).map(|v| v.as_slice()).unwrap_or(&[]));
    }
    Ok((world, holder))
}

pub fn enumerate_double_spend(position: usize, seed: u64) -> Result<InterleavingReport, SimError> {
    let (mut world, holder) = race_world(position, seed)?;
    let before = world.outcomes.len();
    world.apply_op(&Op::DoubleSpend {
        wallet: holder.into(),
        first: "bob".into(),
        second: "carol".into(),
        denomination: Some(100),
    });
    let genesis = world.wallets.values().flat_map(|w| w.held()).count();
    if genesis != 0 || world.pending_messages().len() != 2 {
        return Err(SimError::ConfigInvalid(
            "double spend did not start two transfers".into(),
        ));
    }
    let mut report = InterleavingReport {
        position,
        ..Default::default()
    };
    explore(world, before, &mut report);
    Ok(report)
}

fn explore(world: World, before: usize, report: &mut InterleavingReport) {
    report.max_pending = report.max_pending.max(world.pending_messages().len());
    let steps = world.enabled_steps();
    if steps.is_empty() {
        report.interleavings += 1;
        if let Some(f) = judge(world, before) {
            if report.failures.len() < 10 {
                report.failures.push(f);
            }
        }
        return;
    }
    for s in &steps {
        let mut next = world.clone();
        next.apply_step(s);
        explore(next, before, report);
    }
}

fn judge(mut world: World, before: usize) -> Option<String> {
    let outcomes: Vec<TxOutcome> = world.outcomes.values().skip(before).copied().collect();
    let finals = outcomes.iter().filter(|o| **o == TxOutcome::Final).count();
    let conflicts = outcomes
        .iter()
        .filter(|o| **o == TxOutcome::Conflict)
        .count();
    let verifying: usize = ["bob", "carol"]
        .iter()
        .map(|w| {
            world.wallets[*w]
                .held()
                .iter()
                .filter(|h| verify_asset(&h.asset, &world.trust).passed())
                .count()
        })
        .sum();
    world.check_invariants();
    if finals == 1 && conflicts == 1 && verifying == 1 && world.violations.is_empty() {
        None
    } else {
        Some(format!(
            "finals {finals} conflicts {conflicts} verifying {verifying} violations {:?}",
            world.violations
        ))
    }
}
