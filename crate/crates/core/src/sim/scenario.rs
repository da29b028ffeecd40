//! Line-oriented scenario files.
//!
//! ```text
//! relay root
//! relay local parent=root period=1
//! bank b1 reserves=1000
//! account b1 alice 150
//! wallet alice bank=b1 account=alice relay=local
//! rule b1 max_hops=3 commitment=all
//! at 1 withdraw alice 100
//! at 11 pay alice bob 100 option=2 commit=yes
//! at 12 expect finality bob local
//! ```
//!
//! Operations scheduled for the same cycle run in file order, before the
//! relays commit. `expect` lines are checked at the end of their cycle.

use std::collections::BTreeMap;
use std::fmt;

use crate::institutions::{CommitmentRule, ComplianceRule};

use super::config::{BankSpec, RelaySpec};
use super::SimError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccountSpec {
    pub bank: String,
    pub account: String,
    pub balance: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalletSpec {
    pub id: String,
    pub bank: Option<String>,
    pub account: Option<String>,
    pub relay: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RuleChange {
    MaxHops(Option<u32>),
    Commitment(CommitmentRule),
    EvidenceThreshold(Option<u64>),
}

impl RuleChange {
    pub fn apply(&self, rule: &mut ComplianceRule) {
        match self {
            RuleChange::MaxHops(m) => rule.max_hops = *m,
            RuleChange::Commitment(c) => rule.recipient_commitment = *c,
            RuleChange::EvidenceThreshold(t) => rule.deposit_evidence_threshold = *t,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FinalityWant {
    Pending,
    Local,
    Global,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expectation {
    InFlight(u64),
    PlateInFlight(String, u64),
    Reserves(String, u64),
    Balance(String, String, u64),
    Holds(String, usize),
    Value(String, u64),
    Finality(String, FinalityWant),
    Claimable(String, usize),
    Evidence(usize),
    Event(String, usize),
    RevealRelayAccesses(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Op {
    Withdraw {
        wallet: String,
        denomination: u64,
    },
    Pay {
        from: String,
        to: String,
        denomination: Option<u64>,
        /// 1: recipient registers; 2: payer registers.
        option: u8,
        commit: bool,
    },
    Deposit {
        wallet: String,
        denomination: Option<u64>,
    },
    Redeem {
        bank: String,
    },
    Vouchers {
        bank: String,
        value: u64,
        denomination: u64,
    },
    Rule {
        bank: String,
        changes: Vec<RuleChange>,
    },
    Override {
        bank: String,
        on: bool,
    },
    Partition {
        a: String,
        b: String,
    },
    Heal {
        a: String,
        b: String,
    },
    Equivocate {
        relay: String,
    },
    Endorser {
        relay: String,
        index: usize,
        online: bool,
    },
    DoubleSpend {
        wallet: String,
        first: String,
        second: String,
        denomination: Option<u64>,
    },
    PreTransfer {
        from: String,
        to: String,
        count: usize,
        denomination: u64,
    },
    Reveal {
        from: String,
        to: String,
        count: usize,
    },
    Claim {
        wallet: String,
    },
    Recover {
        from: String,
        to: String,
    },
    Export {
        wallet: String,
    },
    UnrecordedSignature {
        wallet: String,
        denomination: u64,
    },
    UnbalancedRecord {
        plate: String,
    },
    Expect(Expectation),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scheduled {
    pub cycle: u64,
    pub line: usize,
    pub op: Op,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Scenario {
    pub relays: Vec<RelaySpec>,
    pub banks: Vec<BankSpec>,
    pub accounts: Vec<AccountSpec>,
    pub wallets: Vec<WalletSpec>,
    pub rules: Vec<(String, Vec<RuleChange>)>,
    pub ops: Vec<Scheduled>,
}

impl Scenario {
    pub fn last_cycle(&self) -> u64 {
        self.ops.iter().map(|s| s.cycle).max().unwrap_or(0)
    }

    /// Operations grouped by cycle, file order kept within a cycle.
    pub fn by_cycle(&self) -> BTreeMap<u64, Vec<&Scheduled>> {
        let mut out: BTreeMap<u64, Vec<&Scheduled>> = BTreeMap::new();
        for s in &self.ops {
            out.entry(s.cycle).or_default().push(s);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Scenario, SimError> {
        let mut sc = Scenario::default();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            let err = |msg: String| SimError::Scenario { line, msg };
            let mut w = Words::new(&words, line);
            match w.next()? {
                "relay" => {
                    let id = w.next()?.to_string();
                    let kv = w.options(&["parent", "period", "endorsers", "quorum"])?;
                    sc.relays.push(RelaySpec {
                        id,
                        parent: kv.get("parent").cloned(),
                        period: opt_num(&kv, "period", line)?.unwrap_or(1),
                        endorsers: opt_num(&kv, "endorsers", line)?.unwrap_or(3) as usize,
                        quorum: opt_num(&kv, "quorum", line)?.map(|q| q as usize),
                    });
                }
                "bank" => {
                    let id = w.next()?.to_string();
                    let kv = w.options(&["reserves"])?;
                    sc.banks.push(BankSpec {
                        id,
                        reserves: opt_num(&kv, "reserves", line)?.unwrap_or(0),
                    });
                }
                "account" => {
                    let bank = w.next()?.to_string();
                    let account = w.next()?.to_string();
                    let balance = w.num()?;
                    w.end()?;
                    sc.accounts.push(AccountSpec {
                        bank,
                        account,
                        balance,
                    });
                }
                "wallet" => {
                    let id = w.next()?.to_string();
                    let kv = w.options(&["bank", "account", "relay"])?;
                    if kv.contains_key("bank") != kv.contains_key("account") {
                        return Err(err(
                            "wallet needs both bank= and account=, or neither".into()
                        ));
                    }
                    sc.wallets.push(WalletSpec {
                        id,
                        bank: kv.get("bank").cloned(),
                        account: kv.get("account").cloned(),
                        relay: kv.get("relay").cloned(),
                    });
                }
                "rule" => {
                    let bank = w.next()?.to_string();
                    let changes = rule_changes(&mut w)?;
                    sc.rules.push((bank, changes));
                }
                "at" => {
                    let cycle = w.num()?;
                    let op = parse_op(&mut w)?;
                    sc.ops.push(Scheduled { cycle, line, op });
                }
                other => return Err(err(format!("unknown directive {other:?}"))),
            }
        }
        Ok(sc)
    }
}

struct Words<'a> {
    words: &'a [&'a str],
    at: usize,
    line: usize,
}

impl<'a> Words<'a> {
    fn new(words: &'a [&'a str], line: usize) -> Self {
        Words { words, at: 0, line }
    }

    fn err(&self, msg: impl Into<String>) -> SimError {
        SimError::Scenario {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str, SimError> {
        let w = self
            .words
            .get(self.at)
            .copied()
            .ok_or_else(|| self.err("missing argument"))?;
        self.at += 1;
        Ok(w)
    }

    fn peek_plain(&self) -> Option<&'a str> {
        self.words
            .get(self.at)
            .copied()
            .filter(|w| !w.contains('='))
    }

    fn num(&mut self) -> Result<u64, SimError> {
        let w = self.next()?;
        w.parse()
            .map_err(|_| self.err(format!("expected a number, found {w:?}")))
    }

    fn opt_num(&mut self) -> Result<Option<u64>, SimError> {
        match self.peek_plain() {
            Some(_) => self.num().map(Some),
            None => Ok(None),
        }
    }

    fn end(&self) -> Result<(), SimError> {
        match self.words.get(self.at) {
            None => Ok(()),
            Some(w) => Err(self.err(format!("unexpected argument {w:?}"))),
        }
    }

    fn options(&mut self, allowed: &[&str]) -> Result<BTreeMap<String, String>, SimError> {
        let mut out = BTreeMap::new();
        while self.at < self.words.len() {
            let w = self.next()?;
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| self.err(format!("expected key=value, found {w:?}")))?;
            if !allowed.contains(&k) {
                return Err(self.err(format!("unknown option {k:?}")));
            }
            out.insert(k.to_string(), v.to_string());
        }
        Ok(out)
    }
}

fn opt_num(kv: &BTreeMap<String, String>, key: &str, line: usize) -> Result<Option<u64>, SimError> {
    kv.get(key)
        .map(|v| {
            v.parse().map_err(|_| SimError::Scenario {
                line,
                msg: format!("{key} must be a number"),
            })
        })
        .transpose()
}

fn yes_no(v: &str, w: &Words<'_>) -> Result<bool, SimError> {
    match v {
        "yes" | "on" | "true" => Ok(true),
        "no" | "off" | "false" => Ok(false),
        _ => Err(w.err(format!("expected yes or no, found {v:?}"))),
    }
}

fn limit(v: &str, w: &Words<'_>) -> Result<Option<u64>, SimError> {
    if v == "none" {
        return Ok(None);
    }
    v.parse()
        .map(Some)
        .map_err(|_| w.err(format!("expected a number or none, found {v:?}")))
}

fn rule_changes(w: &mut Words<'_>) -> Result<Vec<RuleChange>, SimError> {
    let kv = w.options(&["max_hops", "commitment", "evidence"])?;
    let mut out = Vec::new();
    for (k, v) in &kv {
        out.push(match k.as_str() {
            "max_hops" => RuleChange::MaxHops(limit(v, w)?.map(|m| m as u32)),
            "commitment" => RuleChange::Commitment(v.parse().map_err(|e: String| w.err(e))?),
            _ => RuleChange::EvidenceThreshold(limit(v, w)?),
        });
    }
    if out.is_empty() {
        return Err(w.err("rule needs at least one of max_hops=, commitment=, evidence="));
    }
    Ok(out)
}

fn parse_op(w: &mut Words<'_>) -> Result<Op, SimError> {
    let name = w.next()?;
    let op = match name {
        "withdraw" => Op::Withdraw {
            wallet: w.next()?.into(),
            denomination: w.num()?,
        },
        "pay" => {
            let from = w.next()?.into();
            let to = w.next()?.into();
            let denomination = w.opt_num()?;
            let kv = w.options(&["option", "commit"])?;
            let option = match kv.get("option").map(String::as_str) {
                None | Some("1") => 1,
                Some("2") => 2,
                Some(o) => return Err(w.err(format!("option must be 1 or 2, found {o:?}"))),
            };
            let commit = kv
                .get("commit")
                .map(|v| yes_no(v, w))
                .transpose()?
                .unwrap_or(false);
            return Ok(Op::Pay {
                from,
                to,
                denomination,
                option,
                commit,
            });
        }
        "deposit" => Op::Deposit {
            wallet: w.next()?.into(),
            denomination: w.opt_num()?,
        },
        "redeem" => Op::Redeem {
            bank: w.next()?.into(),
        },
        "vouchers" => Op::Vouchers {
            bank: w.next()?.into(),
            value: w.num()?,
            denomination: w.num()?,
        },
        "rule" => {
            let bank = w.next()?.into();
            return Ok(Op::Rule {
                bank,
                changes: rule_changes(w)?,
            });
        }
        "override" => {
            let bank = w.next()?.into();
            let v = w.next()?;
            Op::Override {
                bank,
                on: yes_no(v, w)?,
            }
        }
        "partition" => Op::Partition {
            a: w.next()?.into(),
            b: w.next()?.into(),
        },
        "heal" => Op::Heal {
            a: w.next()?.into(),
            b: w.next()?.into(),
        },
        "equivocate" => Op::Equivocate {
            relay: w.next()?.into(),
        },
        "endorser" => {
            let relay = w.next()?.into();
            let index = w.num()? as usize;
            let online = match w.next()? {
                "online" => true,
                "offline" => false,
                s => return Err(w.err(format!("expected online or offline, found {s:?}"))),
            };
            Op::Endorser {
                relay,
                index,
                online,
            }
        }
        "double-spend" => Op::DoubleSpend {
            wallet: w.next()?.into(),
            first: w.next()?.into(),
            second: w.next()?.into(),
            denomination: w.opt_num()?,
        },
        "pretransfer" => Op::PreTransfer {
            from: w.next()?.into(),
            to: w.next()?.into(),
            count: w.num()? as usize,
            denomination: w.num()?,
        },
        "reveal" => Op::Reveal {
            from: w.next()?.into(),
            to: w.next()?.into(),
            count: w.num()? as usize,
        },
        "claim" => Op::Claim {
            wallet: w.next()?.into(),
        },
        "recover" => Op::Recover {
            from: w.next()?.into(),
            to: w.next()?.into(),
        },
        "export" => Op::Export {
            wallet: w.next()?.into(),
        },
        "unrecorded-signature" => Op::UnrecordedSignature {
            wallet: w.next()?.into(),
            denomination: w.num()?,
        },
        "unbalanced-record" => Op::UnbalancedRecord {
            plate: w.next()?.into(),
        },
        "expect" => Op::Expect(parse_expectation(w)?),
        other => return Err(w.err(format!("unknown operation {other:?}"))),
    };
    w.end()?;
    Ok(op)
}

fn parse_expectation(w: &mut Words<'_>) -> Result<Expectation, SimError> {
    Ok(match w.next()? {
        "in-flight" => {
            let a = w.next()?;
            match a.parse() {
                Ok(n) => Expectation::InFlight(n),
                Err(_) => Expectation::PlateInFlight(a.into(), w.num()?),
            }
        }
        "reserves" => Expectation::Reserves(w.next()?.into(), w.num()?),
        "balance" => {
            let a = w.next()?;
            let (bank, account) = a
                .split_once('/')
                .ok_or_else(|| w.err("balance takes bank/account"))?;
            Expectation::Balance(bank.into(), account.into(), w.num()?)
        }
        "holds" => Expectation::Holds(w.next()?.into(), w.num()? as usize),
        "value" => Expectation::Value(w.next()?.into(), w.num()?),
        "finality" => {
            let wallet = w.next()?.into();
            let f = match w.next()? {
                "pending" => FinalityWant::Pending,
                "local" => FinalityWant::Local,
                "global" => FinalityWant::Global,
                s => return Err(w.err(format!("finality is pending, local or global, not {s:?}"))),
            };
            Expectation::Finality(wallet, f)
        }
        "claimable" => Expectation::Claimable(w.next()?.into(), w.num()? as usize),
        "evidence" => Expectation::Evidence(w.num()? as usize),
        "event" => Expectation::Event(w.next()?.into(), w.num()? as usize),
        "reveal-relay-accesses" => Expectation::RevealRelayAccesses(w.num()?),
        s => return Err(w.err(format!("unknown expectation {s:?}"))),
    })
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::InFlight(n) => write!(f, "in-flight {n}"),
            Expectation::PlateInFlight(p, n) => write!(f, "in-flight {p} {n}"),
            Expectation::Reserves(b, n) => write!(f, "reserves {b} {n}"),
            Expectation::Balance(b, a, n) => write!(f, "balance {b}/{a} {n}"),
            Expectation::Holds(w, n) => write!(f, "holds {w} {n}"),
            Expectation::Value(w, n) => write!(f, "value {w} {n}"),
            Expectation::Finality(w, x) => write!(
                f,
                "finality {w} {}",
                match x {
                    FinalityWant::Pending => "pending",
                    FinalityWant::Local => "local",
                    FinalityWant::Global => "global",
                }
            ),
            Expectation::Claimable(w, n) => write!(f, "claimable {w} {n}"),
            Expectation::Evidence(n) => write!(f, "evidence {n}"),
            Expectation::Event(k, n) => write!(f, "event {k} {n}"),
            Expectation::RevealRelayAccesses(n) => write!(f, "reveal-relay-accesses {n}"),
        }
    }
}
