//! Deterministic discrete-cycle simulator.
//!
//! Actors (wallets, banks, relays) exchange messages through one queue with
//! per-edge latency; the central bank, the minter and bank back offices are
//! called directly. Each cycle runs scheduled operations, delivers due
//! messages, commits relays from the leaves up, attaches fresh proof to
//! held assets and then checks the global invariants.

pub mod builtin;
pub mod config;
pub mod interleave;
pub mod scenario;
pub mod unlinkability;
pub mod world;

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::codec::Canonical;
use crate::mint::monitoring;
use crate::relay::ledger;

pub use config::SimulationConfig;
pub use scenario::{Op, Scenario};
pub use world::{ExpectResult, Violation, World};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("scenario line {line}: {msg}")]
    Scenario { line: usize, msg: String },
    #[error("invariant {id} violated at cycle {cycle}: {detail}")]
    InvariantViolation {
        cycle: u64,
        id: &'static str,
        detail: String,
    },
}

/// Everything a run writes out.
#[derive(Clone, Debug)]
pub struct RunResults {
    pub metrics: String,
    pub events: String,
    pub summary: String,
    pub relay_ledgers: BTreeMap<String, String>,
    pub monitoring: String,
    pub plates: String,
    pub trust_roots: String,
    pub exports: Vec<(String, String)>,
    pub evidence: Vec<String>,
    pub violations: Vec<Violation>,
    pub expectations: Vec<ExpectResult>,
    pub final_in_flight: i128,
    pub cycles: u64,
}

impl RunResults {
    pub fn ok(&self) -> bool {
        self.violations.is_empty() && self.expectations.iter().all(|e| e.ok)
    }

    pub fn first_violation(&self) -> Option<SimError> {
        self.violations
            .first()
            .map(|v| SimError::InvariantViolation {
                cycle: v.cycle,
                id: v.id,
                detail: v.detail.clone(),
            })
    }

    /// Output files as (relative path, contents), in a fixed order.
    pub fn files(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("metrics.txt".to_string(), self.metrics.clone()),
            ("events.log".to_string(), self.events.clone()),
            ("summary.txt".to_string(), self.summary.clone()),
            ("monitoring.ledger".to_string(), self.monitoring.clone()),
            ("plates.txt".to_string(), self.plates.clone()),
            ("trust_roots.txt".to_string(), self.trust_roots.clone()),
        ];
        for (id, text) in &self.relay_ledgers {
            out.push((format!("relay-{id}.ledger"), text.clone()));
        }
        for (name, hex) in &self.exports {
            out.push((format!("assets/{name}"), format!("{hex}\n")));
        }
        for (i, hex) in self.evidence.iter().enumerate() {
            out.push((format!("evidence/{i}.hex"), format!("{hex}\n")));
        }
        out
    }

    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        for (name, text) in self.files() {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, text)?;
        }
        Ok(())
    }
}

/// Runs a scenario to completion: every scheduled cycle, then
/// `config.flush_cycles` idle cycles. Stops at the end of the first cycle
/// with an invariant violation.
pub fn run_scenario(
    config: &SimulationConfig,
    scenario: &Scenario,
) -> Result<RunResults, SimError> {
    let mut world = World::new(config, scenario)?;
    let mut schedule = scenario.clone();
    for (i, f) in config.faults.iter().enumerate() {
        schedule.ops.insert(i, fault_op(f)?);
    }
    let plan = schedule.by_cycle();
    let last = schedule.last_cycle() + config.flush_cycles;
    for cycle in 0..=last {
        let ops: Vec<&scenario::Scheduled> = plan.get(&cycle).cloned().unwrap_or_default();
        world.run_cycle(&ops);
        if !world.violations.is_empty() {
            break;
        }
    }
    Ok(results(&world, config))
}

fn fault_op(f: &config::FaultSpec) -> Result<scenario::Scheduled, SimError> {
    let peer = || {
        f.peer
            .clone()
            .ok_or_else(|| SimError::ConfigInvalid(format!("fault {} needs a peer", f.kind)))
    };
    let index = || {
        f.index
            .ok_or_else(|| SimError::ConfigInvalid(format!("fault {} needs an index", f.kind)))
    };
    let op = match f.kind.as_str() {
        "partition" => Op::Partition {
            a: f.target.clone(),
            b: peer()?,
        },
        "heal" => Op::Heal {
            a: f.target.clone(),
            b: peer()?,
        },
        "equivocate" => Op::Equivocate {
            relay: f.target.clone(),
        },
        "endorser-offline" => Op::Endorser {
            relay: f.target.clone(),
            index: index()?,
            online: false,
        },
        "endorser-online" => Op::Endorser {
            relay: f.target.clone(),
            index: index()?,
            online: true,
        },
        "unbalanced-record" => Op::UnbalancedRecord {
            plate: f.target.clone(),
        },
        "unrecorded-signature" => Op::UnrecordedSignature {
            wallet: f.target.clone(),
            denomination: index()? as u64,
        },
        other => {
            return Err(SimError::ConfigInvalid(format!(
                "unknown fault kind {other:?}"
            )))
        }
    };
    Ok(scenario::Scheduled {
        cycle: f.cycle,
        line: 0,
        op,
    })
}

fn results(world: &World, config: &SimulationConfig) -> RunResults {
    let mut events = String::new();
    for e in &world.events {
        events.push_str(&format!("cycle={} {} {}\n", e.cycle, e.kind, e.detail));
    }
    let mut summary = format!(
        "seed {}\nminter {} operated by {}\ncycles {}\nfinal in-flight {}\nreserves {}\nevidence {}\n",
        config.seed,
        world.minter.id(),
        world.operator,
        world.cycle,
        world.in_flight(),
        world.central_bank.total_reserves(),
        world.evidence.len(),
    );
    for x in &world.expectations {
        summary.push_str(&format!(
            "expect cycle {} line {} {}: {} (actual {})\n",
            x.cycle,
            x.line,
            x.text,
            if x.ok { "pass" } else { "FAIL" },
            x.actual
        ));
    }
    for v in &world.violations {
        summary.push_str(&format!(
            "invariant {} violated at cycle {}: {}\n",
            v.id, v.cycle, v.detail
        ));
    }
    let ok = world.violations.is_empty() && world.expectations.iter().all(|e| e.ok);
    summary.push_str(if ok {
        "result: pass\n"
    } else {
        "result: FAIL\n"
    });
    RunResults {
        metrics: world.metrics.iter().map(|l| format!("{l}\n")).collect(),
        events,
        summary,
        relay_ledgers: world
            .relays()
            .map(|r| (r.id().to_string(), ledger::render(r.commitments())))
            .collect(),
        monitoring: monitoring::render(world.minter.records()),
        plates: world.plate_registry().to_text(),
        trust_roots: world.trust.to_text(),
        exports: world.exports.clone(),
        evidence: world
            .evidence
            .iter()
            .map(|e| hex::encode(e.to_canonical()))
            .collect(),
        violations: world.violations.clone(),
        expectations: world.expectations.clone(),
        final_in_flight: world.in_flight(),
        cycles: world.cycle,
    }
}

#[cfg(test)]
mod tests;
