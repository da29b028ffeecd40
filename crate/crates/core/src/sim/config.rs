use std::collections::BTreeSet;

use serde::Deserialize;

use crate::blindsig::KeyProfile;
use crate::institutions::{CommitmentRule, ComplianceRule, DEFAULT_COOLING_OFF};
use crate::mint::{PlateLimits, DEFAULT_DENOMINATIONS};
use crate::relay::validate_relay_id;

use super::SimError;

#[derive(Clone, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct RelaySpec {
    pub id: String,
    #[serde(default)]
    pub parent: Option<String>,
    #[serde(default = "one")]
    pub period: u64,
    #[serde(default = "three")]
    pub endorsers: usize,
    #[serde(default)]
    pub quorum: Option<usize>,
}

fn one() -> u64 {
    1
}

fn three() -> usize {
    3
}

#[derive(Clone, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct PlateSpec {
    pub id: String,
    pub denomination: u64,
    pub cap_in_flight: u64,
    pub cap_cumulative: u64,
    pub expiry: u64,
}

impl PlateSpec {
    pub fn limits(&self) -> PlateLimits {
        PlateLimits {
            cap_in_flight: self.cap_in_flight,
            cap_cumulative: self.cap_cumulative,
            expiry: self.expiry,
        }
    }

    /// One plate per standard denomination with roomy limits.
    pub fn defaults() -> Vec<PlateSpec> {
        DEFAULT_DENOMINATIONS
            .iter()
            .map(|&d| PlateSpec {
                id: format!("p{d}"),
                denomination: d,
                cap_in_flight: 10_000 * d,
                cap_cumulative: 100_000 * d,
                expiry: 1_000_000,
            })
            .collect()
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct BankSpec {
    pub id: String,
    #[serde(default)]
    pub reserves: u64,
}

#[derive(Clone, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct EdgeLatency {
    pub a: String,
    pub b: String,
    pub cycles: u64,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct LatencySpec {
    pub default: u64,
    pub edges: Vec<EdgeLatency>,
}

impl LatencySpec {
    pub fn between(&self, a: &str, b: &str) -> u64 {
        self.edges
            .iter()
            .find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
            .map(|e| e.cycles)
            .unwrap_or(self.default)
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct RulesSpec {
    pub max_hops: Option<u32>,
    pub recipient_commitment: Option<String>,
    pub evidence_threshold: Option<u64>,
}

impl RulesSpec {
    pub fn to_rule(&self) -> Result<ComplianceRule, SimError> {
        let recipient_commitment = match &self.recipient_commitment {
            None => CommitmentRule::Off,
            Some(s) => s
                .parse::<CommitmentRule>()
                .map_err(SimError::ConfigInvalid)?,
        };
        Ok(ComplianceRule {
            max_hops: self.max_hops,
            recipient_commitment,
            deposit_evidence_threshold: self.evidence_threshold,
        })
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct MinterSpec {
    #[serde(default = "minter_id")]
    pub id: String,
    /// Who runs the minter. Recorded in the summary only.
    #[serde(default = "unspecified")]
    pub operator: String,
}

fn minter_id() -> String {
    "m1".into()
}

fn unspecified() -> String {
    "unspecified".into()
}

impl Default for MinterSpec {
    fn default() -> Self {
        MinterSpec {
            id: minter_id(),
            operator: unspecified(),
        }
    }
}

/// A scheduled fault. `kind` is one of partition, heal, equivocate,
/// endorser-offline, endorser-online, unrecorded-signature,
/// unbalanced-record.
#[derive(Clone, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub cycle: u64,
    pub kind: String,
    pub target: String,
    #[serde(default)]
    pub peer: Option<String>,
    #[serde(default)]
    pub index: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub seed: u64,
    /// Cycles a withdrawn asset waits before it can be spent.
    pub cooling_off: u64,
    /// "test" (512-bit plates) or "production" (2048-bit).
    pub key_profile: String,
    /// Idle cycles run after the last scheduled operation.
    pub flush_cycles: u64,
    /// Banks move deposited assets to the minter as soon as they are credited.
    pub surrender_deposits: bool,
    pub minter: MinterSpec,
    pub latency: LatencySpec,
    pub plates: Vec<PlateSpec>,
    pub relays: Vec<RelaySpec>,
    pub banks: Vec<BankSpec>,
    pub rules: RulesSpec,
    pub faults: Vec<FaultSpec>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            seed: 1,
            cooling_off: DEFAULT_COOLING_OFF,
            key_profile: "test".into(),
            flush_cycles: 5,
            surrender_deposits: true,
            minter: MinterSpec::default(),
            latency: LatencySpec::default(),
            plates: PlateSpec::defaults(),
            relays: Vec::new(),
            banks: Vec::new(),
            rules: RulesSpec::default(),
            faults: Vec::new(),
        }
    }
}

impl SimulationConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::ConfigInvalid(e.to_string()))
    }

    pub fn key_profile(&self) -> Result<KeyProfile, SimError> {
        match self.key_profile.as_str() {
            "test" => Ok(KeyProfile::Test),
            "production" => Ok(KeyProfile::Production),
            other => Err(SimError::ConfigInvalid(format!(
                "unknown key profile {other:?} (test, production)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::ConfigInvalid(m));
        self.key_profile()?;
        self.rules.to_rule()?;
        let mut ids = BTreeSet::new();
        for r in &self.relays {
            validate_relay_id(&r.id).map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
            if !ids.insert(r.id.as_str()) {
                return bad(format!("relay {} declared twice", r.id));
            }
        }
        for r in &self.relays {
            if let Some(p) = &r.parent {
                if !ids.contains(p.as_str()) {
                    return bad(format!("relay {} has unknown parent {p}", r.id));
                }
            }
            // walking up from any relay must end at a root
            let mut seen = BTreeSet::new();
            let mut at = Some(r);
            while let Some(node) = at {
                if !seen.insert(node.id.as_str()) {
                    return bad(format!("relay topology has a cycle through {}", r.id));
                }
                at = node
                    .parent
                    .as_ref()
                    .and_then(|p| self.relays.iter().find(|x| &x.id == p));
            }
        }
        let mut plates = BTreeSet::new();
        for p in &self.plates {
            if p.denomination == 0 {
                return bad(format!("plate {} has zero denomination", p.id));
            }
            if !plates.insert(p.id.as_str()) {
                return bad(format!("plate {} declared twice", p.id));
            }
        }
        let mut banks = BTreeSet::new();
        for b in &self.banks {
            if !banks.insert(b.id.as_str()) {
                return bad(format!("bank {} declared twice", b.id));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let c = SimulationConfig::from_toml(
            r#"
seed = 9
cooling_off = 2
minter = { id = "m9", operator = "central-bank" }
[latency]
default = 1
edges = [{ a = "local", b = "root", cycles = 3 }]
[[relays]]
id = "root"
[[relays]]
id = "local"
parent = "root"
period = 2
[[plates]]
id = "p7"
denomination = 7
cap_in_flight = 70
cap_cumulative = 700
expiry = 99
[[banks]]
id = "b1"
reserves = 500
[rules]
max_hops = 2
recipient_commitment = "chained"
[[faults]]
cycle = 4
kind = "partition"
target = "local"
peer = "root"
"#,
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.latency.between("root", "local"), 3);
        assert_eq!(c.latency.between("root", "w1"), 1);
        assert_eq!(c.plates.len(), 1);
        assert_eq!(
            c.rules.to_rule().unwrap().recipient_commitment,
            CommitmentRule::ChainedHops
        );
        assert_eq!(c.minter.operator, "central-bank");
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(SimulationConfig::from_toml("sede = 1").is_err());
        let mut c = SimulationConfig {
            relays: vec![
                RelaySpec {
                    id: "a".into(),
                    parent: Some("b".into()),
                    period: 1,
                    endorsers: 3,
                    quorum: None,
                },
                RelaySpec {
                    id: "b".into(),
                    parent: Some("a".into()),
                    period: 1,
                    endorsers: 3,
                    quorum: None,
                },
            ],
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(SimError::ConfigInvalid(m)) if m.contains("cycle")));
        c.relays[1].parent = Some("zz".into());
        assert!(c.validate().is_err());
        let c = SimulationConfig {
            key_profile: "huge".into(),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
