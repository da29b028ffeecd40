use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::asset::{verify_asset, AggregationHop, Asset, Finality, OwnerLock, PopStep, TrustRoots};
use crate::blindsig;
use crate::codec::Digest;
use crate::institutions::{Bank, CentralBank, ComplianceRule, DepositError, HeldAsset, Wallet};
use crate::instrumentation;
use crate::keys::{AuthKeyPair, PublicKey};
use crate::mint::monitoring::{check_records, PlateRegistry, RecordFault};
use crate::mint::{Minter, MintingPlate};
use crate::relay::{
    detect_equivocation, one_successor_violations, verify_commitment_chain, CycleEntry,
    EquivocationEvidence, Relay, RelayCommitment, RelayConfig, RelayDirectory, RelayError,
};

use super::config::{RelaySpec, SimulationConfig};
use super::scenario::{Expectation, FinalityWant, Op, Scenario, Scheduled};
use super::SimError;

#[derive(Clone, Debug)]
pub enum Body {
    /// An asset handed from one holder to another.
    Transfer {
        tx: u64,
        asset: Box<Asset>,
    },
    Submit {
        tx: u64,
        entry: CycleEntry,
    },
    SubmitResult {
        tx: u64,
        result: Result<(), RelayError>,
    },
    Aggregate {
        commitment: RelayCommitment,
    },
    AggregateAck {
        digest: Digest,
    },
}

#[derive(Clone, Debug)]
pub struct Message {
    pub id: u64,
    pub from: String,
    pub to: String,
    pub due: u64,
    pub body: Body,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum TxKind {
    Payment {
        payer: String,
        payee: String,
        option: u8,
    },
    Deposit {
        holder: String,
        bank: String,
        lock: OwnerLock,
    },
    Surrender {
        bank: String,
    },
}

#[derive(Clone, Debug)]
struct Tx {
    kind: TxKind,
    /// The unregistered transfer.
    asset: Asset,
    /// Who registers it.
    submitter: String,
    /// Returned to this wallet if the transfer fails.
    origin: Option<(String, HeldAsset)>,
    /// The relay accepted the entry.
    queued: bool,
    /// Anchored; for option 2 payments, on its way to the payee.
    registered: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxOutcome {
    Final,
    Conflict,
    Failed,
}

#[derive(Clone, Debug)]
struct Swap {
    from: String,
    to: String,
    key: PublicKey,
    secret: [u8; 32],
    revealed: bool,
    recovered: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub cycle: u64,
    pub kind: String,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub cycle: u64,
    pub id: &'static str,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpectResult {
    pub cycle: u64,
    pub line: usize,
    pub text: String,
    pub ok: bool,
    pub actual: String,
}

/// One step the scheduler may take; used by the interleaving enumerator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Deliver(u64),
    Commit(String),
}

/// The whole simulated economy. Cloning it snapshots every actor.
#[derive(Clone, Debug)]
pub struct World {
    pub cycle: u64,
    rng: ChaCha20Rng,
    cooling_off: u64,
    surrender_deposits: bool,
    latency: super::config::LatencySpec,
    pub central_bank: CentralBank,
    pub minter: Minter,
    relays: BTreeMap<String, Relay>,
    /// Relay ids, deepest first.
    commit_order: Vec<(usize, String)>,
    pub banks: BTreeMap<String, Bank>,
    pub wallets: BTreeMap<String, Wallet>,
    accounts: BTreeMap<String, (String, String)>,
    pub trust: TrustRoots,
    queue: BTreeMap<u64, Message>,
    next_message: u64,
    partitions: BTreeSet<(String, String)>,
    outbox: BTreeMap<String, Vec<RelayCommitment>>,
    txs: BTreeMap<u64, Tx>,
    next_tx: u64,
    pub outcomes: BTreeMap<u64, TxOutcome>,
    swaps: Vec<Swap>,
    pub evidence: Vec<EquivocationEvidence>,
    pub events: Vec<Event>,
    event_counts: BTreeMap<String, usize>,
    pub metrics: Vec<String>,
    pub violations: Vec<Violation>,
    pub expectations: Vec<ExpectResult>,
    pub exports: Vec<(String, String)>,
    pub reveal_relay_accesses: u64,
    initial_money: u64,
    records_checked: usize,
    cache: BTreeMap<(Digest, usize, usize), Finality>,
    /// Ground truth for experiments: who withdrew each genesis.
    pub withdrawn_by: BTreeMap<Digest, String>,
    anomalies: BTreeSet<&'static str>,
    pub operator: String,
}

fn edge(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

fn cache_key(a: &Asset) -> (Digest, usize, usize) {
    (
        a.state_digest(),
        a.proof.steps.len(),
        a.proof.steps.iter().map(|s| s.aggregation.len()).sum(),
    )
}

impl World {
    pub fn new(config: &SimulationConfig, scenario: &Scenario) -> Result<World, SimError> {
        let mut merged = config.clone();
        merged.relays.extend(scenario.relays.iter().cloned());
        merged.banks.extend(scenario.banks.iter().cloned());
        if merged.relays.is_empty() {
            merged.relays = vec![
                RelaySpec {
                    id: "root".into(),
                    parent: None,
                    period: 1,
                    endorsers: 3,
                    quorum: None,
                },
                RelaySpec {
                    id: "local".into(),
                    parent: Some("root".into()),
                    period: 1,
                    endorsers: 3,
                    quorum: None,
                },
            ];
        }
        merged.validate()?;
        let invalid = |m: String| SimError::ConfigInvalid(m);

        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let mut central_bank = CentralBank::new(AuthKeyPair::generate(&mut rng));

        let mut relays = BTreeMap::new();
        for r in &merged.relays {
            let mut c = RelayConfig::new(r.id.clone())
                .with_period(r.period)
                .with_endorsers(r.endorsers, r.quorum);
            c.parent = r.parent.clone();
            let relay = Relay::new(c, &mut rng).map_err(|e| invalid(e.to_string()))?;
            relays.insert(r.id.clone(), relay);
        }
        let mut directory = RelayDirectory::new();
        for r in &merged.relays {
            let t = relays[&r.id].trust();
            if let Some(p) = &r.parent {
                relays
                    .get_mut(p)
                    .unwrap()
                    .register_child(r.id.clone(), t.clone());
            }
            directory.insert(r.id.clone(), t);
        }
        let depth = |id: &str| {
            let mut d = 0;
            let mut at = merged.relays.iter().find(|r| r.id == id);
            while let Some(r) = at.and_then(|r| r.parent.as_ref()) {
                d += 1;
                at = merged.relays.iter().find(|x| &x.id == r);
            }
            d
        };
        let mut commit_order: Vec<(usize, String)> = merged
            .relays
            .iter()
            .map(|r| (depth(&r.id), r.id.clone()))
            .collect();
        commit_order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, id) in &commit_order {
            relays
                .get_mut(id)
                .unwrap()
                .commit_cycle(0)
                .map_err(|e| invalid(e.to_string()))?;
        }
        let trust = TrustRoots {
            central_bank: central_bank.public_key(),
            relays: directory,
        };

        let profile = merged.key_profile()?;
        let mut minter = Minter::new(
            merged.minter.id.clone(),
            AuthKeyPair::generate(&mut rng),
            trust.clone(),
        );
        for p in &merged.plates {
            let plate = MintingPlate::create(
                &mut rng,
                central_bank.key(),
                p.id.clone(),
                p.denomination,
                p.limits(),
                profile,
            )
            .map_err(|e| invalid(e.to_string()))?;
            minter.install_plate(plate);
        }

        let base_rule: ComplianceRule = merged.rules.to_rule()?;
        let mut banks = BTreeMap::new();
        for b in &merged.banks {
            banks.insert(
                b.id.clone(),
                Bank::new(b.id.clone(), AuthKeyPair::generate(&mut rng), base_rule),
            );
            central_bank.credit_reserves(&b.id, b.reserves);
        }
        for (bank, changes) in &scenario.rules {
            let targets: Vec<String> = if bank == "*" {
                banks.keys().cloned().collect()
            } else if banks.contains_key(bank) {
                vec![bank.clone()]
            } else {
                return Err(invalid(format!("rule for unknown bank {bank}")));
            };
            for t in targets {
                let b = banks.get_mut(&t).unwrap();
                for c in changes {
                    c.apply(&mut b.rules);
                }
            }
        }
        for a in &scenario.accounts {
            let bank = banks.get_mut(&a.bank).ok_or_else(|| {
                invalid(format!("account {} at unknown bank {}", a.account, a.bank))
            })?;
            if bank.account(&a.account).is_some() {
                return Err(invalid(format!(
                    "account {}/{} declared twice",
                    a.bank, a.account
                )));
            }
            bank.open_account(&mut rng, a.account.clone(), a.account.clone(), a.balance);
        }

        // wallets default to the first declared leaf relay
        let leaf = merged
            .relays
            .iter()
            .find(|r| {
                !merged
                    .relays
                    .iter()
                    .any(|c| c.parent.as_ref() == Some(&r.id))
            })
            .map(|r| r.id.clone())
            .unwrap();
        let mut wallets = BTreeMap::new();
        let mut accounts = BTreeMap::new();
        for w in &scenario.wallets {
            let relay = w.relay.clone().unwrap_or_else(|| leaf.clone());
            if !relays.contains_key(&relay) {
                return Err(invalid(format!(
                    "wallet {} uses unknown relay {relay}",
                    w.id
                )));
            }
            if wallets
                .insert(w.id.clone(), Wallet::new(w.id.clone(), relay))
                .is_some()
            {
                return Err(invalid(format!("wallet {} declared twice", w.id)));
            }
            if let (Some(b), Some(a)) = (&w.bank, &w.account) {
                if banks.get(b).and_then(|bank| bank.account(a)).is_none() {
                    return Err(invalid(format!(
                        "wallet {} uses unknown account {b}/{a}",
                        w.id
                    )));
                }
                accounts.insert(w.id.clone(), (b.clone(), a.clone()));
            }
        }
        let mut names = BTreeSet::new();
        for n in relays.keys().chain(banks.keys()).chain(wallets.keys()) {
            if !names.insert(n.clone()) {
                return Err(invalid(format!("name {n} is used by two actors")));
            }
        }

        let initial_money = central_bank.total_reserves();
        let world = World {
            cycle: 0,
            rng,
            cooling_off: config.cooling_off,
            surrender_deposits: config.surrender_deposits,
            latency: config.latency.clone(),
            central_bank,
            minter,
            relays,
            commit_order,
            banks,
            wallets,
            accounts,
            trust,
            queue: BTreeMap::new(),
            next_message: 0,
            partitions: BTreeSet::new(),
            outbox: BTreeMap::new(),
            txs: BTreeMap::new(),
            next_tx: 0,
            outcomes: BTreeMap::new(),
            swaps: Vec::new(),
            evidence: Vec::new(),
            events: Vec::new(),
            event_counts: BTreeMap::new(),
            metrics: Vec::new(),
            violations: Vec::new(),
            expectations: Vec::new(),
            exports: Vec::new(),
            reveal_relay_accesses: 0,
            initial_money,
            records_checked: 0,
            cache: BTreeMap::new(),
            withdrawn_by: BTreeMap::new(),
            anomalies: BTreeSet::new(),
            operator: merged.minter.operator.clone(),
        };
        for s in &scenario.ops {
            world.check_references(s)?;
        }
        Ok(world)
    }

    fn check_references(&self, s: &Scheduled) -> Result<(), SimError> {
        let err = |msg: String| Err(SimError::Scenario { line: s.line, msg });
        let wallet = |w: &str| self.wallets.contains_key(w);
        let bank = |b: &str| self.banks.contains_key(b) || b == "*";
        let node = |n: &str| wallet(n) || self.banks.contains_key(n) || self.relays.contains_key(n);
        let (wallets, banks, nodes, relays): (Vec<&str>, Vec<&str>, Vec<&str>, Vec<&str>) =
            match &s.op {
                Op::Withdraw { wallet, .. } | Op::Claim { wallet } | Op::Export { wallet } => {
                    (vec![wallet], vec![], vec![], vec![])
                }
                Op::UnrecordedSignature { wallet, .. } => (vec![wallet], vec![], vec![], vec![]),
                Op::Deposit { wallet, .. } => {
                    if !self.accounts.contains_key(wallet) {
                        return err(format!("wallet {wallet} has no bank account to deposit to"));
                    }
                    (vec![wallet], vec![], vec![], vec![])
                }
                Op::Pay { from, to, .. } => (vec![from, to], vec![], vec![], vec![]),
                Op::DoubleSpend {
                    wallet,
                    first,
                    second,
                    ..
                } => (vec![wallet, first, second], vec![], vec![], vec![]),
                Op::PreTransfer { from, to, .. }
                | Op::Reveal { from, to, .. }
                | Op::Recover { from, to } => (vec![from, to], vec![], vec![], vec![]),
                Op::Redeem { bank }
                | Op::Vouchers { bank, .. }
                | Op::Rule { bank, .. }
                | Op::Override { bank, .. } => (vec![], vec![bank], vec![], vec![]),
                Op::Partition { a, b } | Op::Heal { a, b } => (vec![], vec![], vec![a, b], vec![]),
                Op::Equivocate { relay } | Op::Endorser { relay, .. } => {
                    (vec![], vec![], vec![], vec![relay])
                }
                Op::UnbalancedRecord { plate } => {
                    if self.minter.plate(plate).is_none() {
                        return err(format!("unknown plate {plate}"));
                    }
                    (vec![], vec![], vec![], vec![])
                }
                Op::Expect(e) => match e {
                    Expectation::Holds(w, _)
                    | Expectation::Value(w, _)
                    | Expectation::Finality(w, _)
                    | Expectation::Claimable(w, _) => (vec![w], vec![], vec![], vec![]),
                    Expectation::Reserves(b, _) | Expectation::Balance(b, _, _) => {
                        (vec![], vec![b], vec![], vec![])
                    }
                    _ => (vec![], vec![], vec![], vec![]),
                },
            };
        for w in wallets {
            if !wallet(w) {
                return err(format!("unknown wallet {w}"));
            }
        }
        for b in banks {
            if !bank(b) {
                return err(format!("unknown bank {b}"));
            }
        }
        for n in nodes {
            if !node(n) {
                return err(format!("unknown actor or relay {n}"));
            }
        }
        for r in relays {
            if !self.relays.contains_key(r) {
                return err(format!("unknown relay {r}"));
            }
        }
        Ok(())
    }

    pub fn relay(&self, id: &str) -> Option<&Relay> {
        self.relays.get(id)
    }

    pub fn relays(&self) -> impl Iterator<Item = &Relay> {
        self.relays.values()
    }

    pub fn event_count(&self, kind: &str) -> usize {
        self.event_counts.get(kind).copied().unwrap_or(0)
    }

    fn log(&mut self, kind: &str, detail: impl Into<String>) {
        *self.event_counts.entry(kind.to_string()).or_default() += 1;
        self.events.push(Event {
            cycle: self.cycle,
            kind: kind.to_string(),
            detail: detail.into(),
        });
    }

    fn send(&mut self, from: &str, to: &str, body: Body) {
        let id = self.next_message;
        self.next_message += 1;
        let due = self.cycle + self.latency.between(from, to);
        self.queue.insert(
            id,
            Message {
                id,
                from: from.to_string(),
                to: to.to_string(),
                due,
                body,
            },
        );
    }

    fn partitioned(&self, a: &str, b: &str) -> bool {
        self.partitions.contains(&edge(a, b))
    }

    pub fn pending_messages(&self) -> Vec<u64> {
        self.queue.keys().copied().collect()
    }

    pub fn message(&self, id: u64) -> Option<&Message> {
        self.queue.get(&id)
    }

    /// Every step a scheduler could take next, ignoring delivery times.
    pub fn enabled_steps(&self) -> Vec<Step> {
        let mut out: Vec<Step> = self.queue.keys().map(|&id| Step::Deliver(id)).collect();
        for (id, r) in &self.relays {
            if r.pending_len() > 0 {
                out.push(Step::Commit(id.clone()));
            }
        }
        out
    }

    pub fn apply_step(&mut self, step: &Step) {
        match step {
            Step::Deliver(id) => self.deliver(*id),
            Step::Commit(relay) => self.commit_relay(relay),
        }
        self.collect_proofs();
    }

    /// Delivers one queued message, or drops it across a partition.
    pub fn deliver(&mut self, id: u64) {
        let Some(m) = self.queue.remove(&id) else {
            return;
        };
        if self.partitioned(&m.from, &m.to) {
            self.anomalies.insert("partition");
            self.log(
                "dropped",
                format!("{} -> {} {}", m.from, m.to, body_name(&m.body)),
            );
            match m.body {
                // the child relay resends unacknowledged commitments itself
                Body::Aggregate { .. } | Body::AggregateAck { .. } => {}
                body => {
                    let id = self.next_message;
                    self.next_message += 1;
                    self.queue.insert(
                        id,
                        Message {
                            id,
                            due: self.cycle + 1,
                            body,
                            ..m
                        },
                    );
                }
            }
            return;
        }
        match m.body {
            Body::Transfer { tx, asset } => self.on_transfer(tx, *asset),
            Body::Submit { tx, entry } => {
                let result = self
                    .relays
                    .get_mut(&m.to)
                    .map(|r| r.submit(entry).map(|_| ()))
                    .unwrap_or(Err(RelayError::UnknownEntry));
                self.send(&m.to, &m.from, Body::SubmitResult { tx, result });
            }
            Body::SubmitResult { tx, result } => match result {
                Ok(()) => {
                    if let Some(t) = self.txs.get_mut(&tx) {
                        t.queued = true;
                    }
                }
                Err(e @ RelayError::ConflictingSuccessor { .. }) => {
                    self.anomalies.insert("conflict");
                    self.log("conflicting-successor", format!("tx {tx}: {e}"));
                    self.fail(tx, TxOutcome::Conflict);
                }
                Err(e) => {
                    self.log("submit-failed", format!("tx {tx}: {e}"));
                    self.fail(tx, TxOutcome::Failed);
                }
            },
            Body::Aggregate { commitment } => self.on_aggregate(&m.from, &m.to, commitment),
            Body::AggregateAck { digest } => {
                if let Some(out) = self.outbox.get_mut(&m.to) {
                    out.retain(|c| c.digest() != digest);
                }
            }
        }
    }

    fn on_aggregate(&mut self, child: &str, parent: &str, commitment: RelayCommitment) {
        let Some(p) = self.relays.get_mut(parent) else {
            return;
        };
        match p.aggregate(&commitment) {
            Ok(_) => {}
            Err(RelayError::ConflictingSuccessor { .. }) => {
                let existing = p
                    .aggregated_commitment(commitment.relay_id(), commitment.sequence())
                    .cloned();
                if let Some(ev) = existing.and_then(|e| detect_equivocation(&e, &commitment)) {
                    if !self.evidence.contains(&ev) {
                        self.anomalies.insert("equivocation");
                        self.log(
                            "equivocation-evidence",
                            format!(
                                "relay {} sequence {}",
                                commitment.relay_id(),
                                commitment.sequence()
                            ),
                        );
                        self.evidence.push(ev);
                    }
                }
            }
            Err(e) => self.log("aggregate-failed", format!("{child} -> {parent}: {e}")),
        }
        let digest = commitment.digest();
        self.send(parent, child, Body::AggregateAck { digest });
    }

    fn on_transfer(&mut self, tx: u64, asset: Asset) {
        let Some(t) = self.txs.get(&tx).cloned() else {
            return;
        };
        let TxKind::Payment { payee, .. } = &t.kind else {
            return;
        };
        if asset.unanchored() > 0 {
            // option 1: the payee checks what it can, then registers
            let ok = self.wallets[payee].check_incoming(&asset, &self.trust, true);
            match ok {
                Ok(()) => {
                    let entry = asset.last_entry().unwrap();
                    let relay = asset.home_relay().to_string();
                    let payee = payee.clone();
                    self.send(&payee, &relay, Body::Submit { tx, entry });
                }
                Err(e) => {
                    self.log(
                        "payment-rejected",
                        format!("tx {tx}: {}", first_line(&e.to_string())),
                    );
                    self.fail(tx, TxOutcome::Failed);
                }
            }
        } else {
            self.settle_payment(tx, asset);
        }
    }

    fn settle_payment(&mut self, tx: u64, asset: Asset) {
        let Some(t) = self.txs.remove(&tx) else {
            return;
        };
        let TxKind::Payment {
            payer,
            payee,
            option,
        } = &t.kind
        else {
            return;
        };
        let value = asset.denomination();
        let cycle = self.cycle;
        match self
            .wallets
            .get_mut(payee)
            .unwrap()
            .accept(asset, &self.trust, false, cycle)
        {
            Ok(()) => {
                self.outcomes.insert(tx, TxOutcome::Final);
                self.log(
                    "payment-final",
                    format!("tx {tx} {payer} -> {payee} value {value} option {option}"),
                );
            }
            Err(e) => {
                self.log(
                    "payment-rejected",
                    format!("tx {tx}: {}", first_line(&e.to_string())),
                );
                self.txs.insert(tx, t);
                self.fail(tx, TxOutcome::Failed);
            }
        }
    }

    fn fail(&mut self, tx: u64, outcome: TxOutcome) {
        let Some(t) = self.txs.remove(&tx) else {
            return;
        };
        self.outcomes.insert(tx, outcome);
        if let TxKind::Deposit { bank, lock, .. } = &t.kind {
            self.banks.get_mut(bank).unwrap().cancel_deposit(lock);
        }
        if let Some((w, held)) = t.origin {
            self.wallets.get_mut(&w).unwrap().put(held);
        }
    }

    fn start_tx(
        &mut self,
        kind: TxKind,
        asset: Asset,
        submitter: &str,
        origin: Option<(String, HeldAsset)>,
    ) -> u64 {
        let tx = self.next_tx;
        self.next_tx += 1;
        let entry = asset.last_entry().unwrap();
        let relay = asset.home_relay().to_string();
        let option1 = matches!(kind, TxKind::Payment { option: 1, .. });
        let payer_payee = match &kind {
            TxKind::Payment { payer, payee, .. } => Some((payer.clone(), payee.clone())),
            _ => None,
        };
        self.txs.insert(
            tx,
            Tx {
                kind,
                asset: asset.clone(),
                submitter: submitter.to_string(),
                origin,
                queued: false,
                registered: false,
            },
        );
        match payer_payee {
            Some((payer, payee)) if option1 => {
                self.send(
                    &payer,
                    &payee,
                    Body::Transfer {
                        tx,
                        asset: Box::new(asset),
                    },
                );
            }
            _ => self.send(submitter, &relay, Body::Submit { tx, entry }),
        }
        tx
    }

    /// Attaches proof to every accepted entry that is now committed and
    /// moves each transaction on.
    pub fn collect_proofs(&mut self) {
        let ready: Vec<u64> = self
            .txs
            .iter()
            .filter(|(_, t)| t.queued && !t.registered)
            .map(|(id, _)| *id)
            .collect();
        for tx in ready {
            let t = &self.txs[&tx];
            let relay_id = t.asset.home_relay().to_string();
            if self.partitioned(&t.submitter, &relay_id) {
                continue;
            }
            let entry = t.asset.last_entry().unwrap();
            let relay = &self.relays[&relay_id];
            let Ok(inclusion) = relay.prove_inclusion(&entry) else {
                continue;
            };
            let commitment = relay.commitment(inclusion.sequence).unwrap().clone();
            let registered = match t.asset.with_step(PopStep {
                entry,
                inclusion,
                commitment,
                aggregation: Vec::new(),
            }) {
                Ok(a) => a,
                Err(e) => {
                    self.log("proof-failed", format!("tx {tx}: {e}"));
                    continue;
                }
            };
            self.txs.get_mut(&tx).unwrap().registered = true;
            self.registered(tx, registered);
        }
    }

    fn registered(&mut self, tx: u64, asset: Asset) {
        let t = self.txs[&tx].clone();
        match &t.kind {
            TxKind::Payment {
                payer,
                payee,
                option,
            } => {
                if *option == 1 {
                    self.settle_payment(tx, asset);
                } else {
                    self.txs.get_mut(&tx).unwrap().asset = asset.clone();
                    self.send(
                        payer,
                        payee,
                        Body::Transfer {
                            tx,
                            asset: Box::new(asset),
                        },
                    );
                }
            }
            TxKind::Deposit { holder, bank, .. } => {
                self.txs.remove(&tx);
                let hops = asset.without_last_update();
                let commitments: Vec<String> = hops
                    .updates
                    .iter()
                    .map(|u| {
                        u.body
                            .recipient_commitment
                            .map(|d| d.to_hex()[..12].to_string())
                            .unwrap_or("-".into())
                    })
                    .collect();
                let cycle = self.cycle;
                match self
                    .banks
                    .get_mut(bank)
                    .unwrap()
                    .complete_deposit(asset, &self.trust, cycle)
                {
                    Ok((account, value)) => {
                        self.outcomes.insert(tx, TxOutcome::Final);
                        self.log(
                            "deposit-credited",
                            format!(
                                "tx {tx} {holder} -> {bank}/{account} value {value} hops {} commitments {}",
                                hops.hops(),
                                commitments.join(",")
                            ),
                        );
                        if self.surrender_deposits {
                            self.surrender_last(bank);
                        }
                    }
                    Err(e) => {
                        self.outcomes.insert(tx, TxOutcome::Failed);
                        self.log(
                            "deposit-failed",
                            format!("tx {tx}: {}", first_line(&e.to_string())),
                        );
                    }
                }
            }
            TxKind::Surrender { bank } => {
                self.txs.remove(&tx);
                self.outcomes.insert(tx, TxOutcome::Final);
                self.banks.get_mut(bank).unwrap().add_to_vault(asset);
                self.log("surrendered", format!("tx {tx} {bank}"));
            }
        }
    }

    fn surrender_last(&mut self, bank_id: &str) {
        let minter = self.minter.public_key();
        let bank = self.banks.get_mut(bank_id).unwrap();
        let last = bank.holdings_len() - 1;
        if let Some(a) = bank.surrender(last, minter) {
            self.start_tx(
                TxKind::Surrender {
                    bank: bank_id.to_string(),
                },
                a,
                bank_id,
                None,
            );
        }
    }

    /// Commits one relay's cycle and sends every unacknowledged commitment
    /// to its parent.
    pub fn commit_relay(&mut self, id: &str) {
        let cycle = self.cycle;
        let relay = self.relays.get_mut(id).unwrap();
        let parent = relay.parent().map(str::to_string);
        match relay.commit_cycle(cycle) {
            Ok(c) => {
                if parent.is_some() {
                    self.outbox.entry(id.to_string()).or_default().push(c);
                }
            }
            Err(e) => {
                self.anomalies.insert("quorum");
                self.log("quorum-unavailable", format!("{id}: {e}"));
            }
        }
        if let Some(p) = parent {
            let pending = self.outbox.get(id).cloned().unwrap_or_default();
            for commitment in pending {
                self.send(id, &p, Body::Aggregate { commitment });
            }
        }
    }

    fn deliver_due(&mut self) {
        loop {
            let next = self
                .queue
                .values()
                .filter(|m| m.due <= self.cycle)
                .min_by_key(|m| (m.due, m.id))
                .map(|m| m.id);
            match next {
                Some(id) => self.deliver(id),
                None => break,
            }
        }
    }

    /// Extends every held proof with any aggregation the parents now have.
    fn refresh_proofs(&mut self) {
        let relays = &self.relays;
        for w in self.wallets.values_mut() {
            for h in w.held_mut() {
                if let Some(a) = extend_proof(relays, &h.asset) {
                    h.asset = a;
                }
            }
        }
        for b in self.banks.values_mut() {
            for a in b.assets_mut() {
                if let Some(x) = extend_proof(relays, a) {
                    *a = x;
                }
            }
        }
    }

    /// One full cycle: operations, deliveries, relay commits from the
    /// leaves up, proof collection, invariants, expectations, metrics.
    pub fn run_cycle(&mut self, ops: &[&Scheduled]) {
        self.anomalies.clear();
        let mut expects = Vec::new();
        for s in ops {
            match &s.op {
                Op::Expect(e) => expects.push((s.line, e.clone())),
                op => self.apply_op(op),
            }
        }
        self.deliver_due();
        let order = self.commit_order.clone();
        for (_, id) in &order {
            if self.relays[id].is_due(self.cycle) {
                self.commit_relay(id);
                self.deliver_due();
            }
        }
        self.collect_proofs();
        self.deliver_due();
        self.refresh_proofs();
        self.check_invariants();
        for (line, e) in expects {
            let (ok, actual) = self.evaluate(&e);
            if !ok {
                self.anomalies.insert("expectation");
            }
            self.expectations.push(ExpectResult {
                cycle: self.cycle,
                line,
                text: e.to_string(),
                ok,
                actual,
            });
        }
        self.snapshot();
        self.cycle += 1;
    }

    pub fn has_work(&self) -> bool {
        !self.queue.is_empty()
            || !self.txs.is_empty()
            || self.relays.values().any(|r| r.pending_len() > 0)
    }

    fn pick(&self, wallet: &str, denomination: Option<u64>) -> Option<usize> {
        let w = &self.wallets[wallet];
        w.held().iter().enumerate().position(|(i, h)| {
            denomination.is_none_or(|d| h.denomination() == d)
                && h.spendable_from <= self.cycle
                && w.can_claim(i).is_ok()
        })
    }

    fn commitment_of(&self, wallet: &str) -> Option<Digest> {
        let (b, a) = self.accounts.get(wallet)?;
        Some(self.banks[b].account(a)?.commitment())
    }

    pub fn apply_op(&mut self, op: &Op) {
        let cycle = self.cycle;
        match op {
            Op::Withdraw {
                wallet,
                denomination,
            } => self.withdraw(wallet, *denomination),
            Op::Pay {
                from,
                to,
                denomination,
                option,
                commit,
            } => {
                let commitment = if *commit {
                    match self.commitment_of(to) {
                        Some(c) => Some(c),
                        None => {
                            self.log(
                                "op-skipped",
                                format!("pay: {to} has no account to commit to"),
                            );
                            return;
                        }
                    }
                } else {
                    None
                };
                let key = self.wallets.get_mut(to).unwrap().receive_key(&mut self.rng);
                self.pay(
                    from,
                    to,
                    *denomination,
                    OwnerLock::key(key),
                    commitment,
                    *option,
                );
            }
            Op::Deposit {
                wallet,
                denomination,
            } => self.deposit(wallet, *denomination),
            Op::Redeem { bank } => {
                let b = self.banks.get_mut(bank).unwrap();
                match b.redeem_vault(&mut self.minter, &mut self.central_bank, cycle) {
                    Ok(v) => self.log("redeemed", format!("{bank} value {v}")),
                    Err(e) => self.log("redeem-failed", format!("{bank}: {e}")),
                }
            }
            Op::Vouchers {
                bank,
                value,
                denomination,
            } => {
                match self
                    .central_bank
                    .issue_vouchers(bank, *value, *denomination)
                {
                    Ok(v) => {
                        self.banks.get_mut(bank).unwrap().add_vouchers(v);
                        self.log(
                            "vouchers",
                            format!("{bank} value {value} denomination {denomination}"),
                        );
                    }
                    Err(e) => self.log("vouchers-failed", format!("{bank}: {e}")),
                }
            }
            Op::Rule { bank, changes } => {
                let targets: Vec<String> = if bank == "*" {
                    self.banks.keys().cloned().collect()
                } else {
                    vec![bank.clone()]
                };
                for t in targets {
                    let b = self.banks.get_mut(&t).unwrap();
                    for c in changes {
                        c.apply(&mut b.rules);
                    }
                    let r = b.rules;
                    self.log("rule", format!("{t} {r:?}"));
                }
            }
            Op::Override { bank, on } => {
                self.banks.get_mut(bank).unwrap().evidence_override = *on;
                self.log("override", format!("{bank} {on}"));
            }
            Op::Partition { a, b } => {
                self.partitions.insert(edge(a, b));
                self.log("partition", format!("{a} {b}"));
            }
            Op::Heal { a, b } => {
                self.partitions.remove(&edge(a, b));
                self.log("heal", format!("{a} {b}"));
            }
            Op::Equivocate { relay } => {
                let r = &self.relays[relay];
                let mut junk = [0u8; 32];
                self.rng.fill_bytes(&mut junk);
                let fork = r
                    .latest()
                    .and_then(|c| r.forge_fork(c.sequence(), Digest::hash(&junk)));
                match (fork, r.parent().is_some()) {
                    (Some(f), true) => {
                        self.log(
                            "fault",
                            format!("{relay} equivocates at sequence {}", f.sequence()),
                        );
                        self.outbox.entry(relay.clone()).or_default().push(f);
                    }
                    _ => self.log(
                        "op-skipped",
                        format!("equivocate: {relay} has no parent to show a fork to"),
                    ),
                }
            }
            Op::Endorser {
                relay,
                index,
                online,
            } => {
                self.relays
                    .get_mut(relay)
                    .unwrap()
                    .set_endorser_online(*index, *online);
                self.log("fault", format!("{relay} endorser {index} online={online}"));
            }
            Op::DoubleSpend {
                wallet,
                first,
                second,
                denomination,
            } => self.double_spend(wallet, first, second, *denomination),
            Op::PreTransfer {
                from,
                to,
                count,
                denomination,
            } => {
                for _ in 0..*count {
                    let mut secret = [0u8; 32];
                    self.rng.fill_bytes(&mut secret);
                    let key = self.wallets.get_mut(to).unwrap().receive_key(&mut self.rng);
                    if self.pay(
                        from,
                        to,
                        Some(*denomination),
                        OwnerLock::locked(key, &secret),
                        None,
                        2,
                    ) {
                        self.swaps.push(Swap {
                            from: from.clone(),
                            to: to.clone(),
                            key,
                            secret,
                            revealed: false,
                            recovered: false,
                        });
                    }
                }
            }
            Op::Reveal { from, to, count } => self.reveal(from, to, *count),
            Op::Claim { wallet } => {
                let w = &self.wallets[wallet];
                let results: Vec<bool> = (0..w.held().len())
                    .map(|i| w.can_claim(i).is_ok())
                    .collect();
                for (i, ok) in results.into_iter().enumerate() {
                    if ok {
                        self.log("claim-ok", format!("{wallet} asset {i}"));
                    } else {
                        self.log(
                            "claim-denied",
                            format!("{wallet} asset {i}: hash lock secret not revealed"),
                        );
                    }
                }
            }
            Op::Recover { from, to } => self.recover(from, to),
            Op::Export { wallet } => {
                let files: Vec<(String, String)> = self.wallets[wallet]
                    .held()
                    .iter()
                    .enumerate()
                    .map(|(i, h)| (format!("{wallet}-c{cycle}-{i}.hex"), h.asset.to_hex()))
                    .collect();
                self.log("export", format!("{wallet} {} assets", files.len()));
                self.exports.extend(files);
            }
            Op::UnrecordedSignature {
                wallet,
                denomination,
            } => {
                self.unrecorded(wallet, *denomination);
            }
            Op::UnbalancedRecord { plate } => {
                let _ = self.minter.inject_unbalanced_record(plate, cycle);
                self.log("fault", format!("unbalanced record on {plate}"));
            }
            Op::Expect(_) => {}
        }
    }

    fn withdraw(&mut self, wallet: &str, denomination: u64) {
        let cycle = self.cycle;
        let Some((bank_id, account)) = self.accounts.get(wallet).cloned() else {
            self.log("withdraw-failed", format!("{wallet}: no bank account"));
            return;
        };
        let Some(plate) = self.minter.plate_for(denomination, cycle) else {
            self.log(
                "withdraw-failed",
                format!("{wallet}: no plate for {denomination}"),
            );
            return;
        };
        let certificate = plate.certificate.clone();
        let w = self.wallets.get_mut(wallet).unwrap();
        let anchor = self.relays[&w.preferred_relay].latest().unwrap().clone();
        let cb = self.central_bank.public_key();
        let (request, blinded) = match w.start_withdrawal(&mut self.rng, &certificate, &anchor, &cb)
        {
            Ok(x) => x,
            Err(e) => {
                self.log("withdraw-failed", format!("{wallet}: {e}"));
                return;
            }
        };
        let bank = self.banks.get_mut(&bank_id).unwrap();
        match bank.withdraw(
            &account,
            denomination,
            &blinded,
            &mut self.minter,
            &mut self.central_bank,
            cycle,
        ) {
            Ok((sig, funding)) => {
                let w = self.wallets.get_mut(wallet).unwrap();
                match w.finish_withdrawal(request, &sig, cycle + self.cooling_off) {
                    Ok(h) => {
                        let g = h.asset.genesis.digest();
                        self.withdrawn_by.insert(g, wallet.to_string());
                        self.log(
                            "withdrawal",
                            format!("{wallet} value {denomination} funding {funding:?}"),
                        );
                    }
                    Err(e) => self.log("withdraw-failed", format!("{wallet}: {e}")),
                }
            }
            Err(e) => {
                self.wallets
                    .get_mut(wallet)
                    .unwrap()
                    .abandon_withdrawal(request);
                self.log("withdraw-failed", format!("{wallet}: {e}"));
            }
        }
    }

    fn unrecorded(&mut self, wallet: &str, denomination: u64) {
        let cycle = self.cycle;
        let Some(plate) = self.minter.plate_for(denomination, cycle) else {
            return;
        };
        let (plate_id, certificate) = (plate.plate_id.clone(), plate.certificate.clone());
        let w = self.wallets.get_mut(wallet).unwrap();
        let anchor = self.relays[&w.preferred_relay].latest().unwrap().clone();
        let cb = self.central_bank.public_key();
        if let Ok((request, blinded)) =
            w.start_withdrawal(&mut self.rng, &certificate, &anchor, &cb)
        {
            if let Ok(sig) = self.minter.sign_unrecorded(&plate_id, &blinded) {
                let _ = w.finish_withdrawal(request, &sig, cycle);
                self.log(
                    "fault",
                    format!("unrecorded {denomination} signature to {wallet}"),
                );
            }
        }
    }

    /// Returns whether a transfer started.
    fn pay(
        &mut self,
        from: &str,
        to: &str,
        denomination: Option<u64>,
        lock: OwnerLock,
        commitment: Option<Digest>,
        option: u8,
    ) -> bool {
        let cycle = self.cycle;
        let Some(i) = self.pick(from, denomination) else {
            self.log("op-skipped", format!("pay: {from} has no spendable asset"));
            return false;
        };
        let w = self.wallets.get_mut(from).unwrap();
        let moved = match w.prepare_payment(i, lock, commitment, cycle) {
            Ok(a) => a,
            Err(e) => {
                self.log("pay-failed", format!("{from}: {e}"));
                return false;
            }
        };
        let held = w.take(i).unwrap();
        let kind = TxKind::Payment {
            payer: from.to_string(),
            payee: to.to_string(),
            option,
        };
        let submitter = if option == 1 { to } else { from };
        self.start_tx(kind, moved, submitter, Some((from.to_string(), held)));
        true
    }

    fn double_spend(&mut self, wallet: &str, first: &str, second: &str, denomination: Option<u64>) {
        let cycle = self.cycle;
        let Some(i) = self.pick(wallet, denomination) else {
            self.log(
                "op-skipped",
                format!("double-spend: {wallet} has no spendable asset"),
            );
            return;
        };
        let mut moved = Vec::new();
        for to in [first, second] {
            let key = self.wallets.get_mut(to).unwrap().receive_key(&mut self.rng);
            match self.wallets[wallet].prepare_payment(i, OwnerLock::key(key), None, cycle) {
                Ok(a) => moved.push((to.to_string(), a)),
                Err(e) => {
                    self.log("pay-failed", format!("{wallet}: {e}"));
                    return;
                }
            }
        }
        self.wallets.get_mut(wallet).unwrap().take(i);
        self.log(
            "fault",
            format!("{wallet} double-spends to {first} and {second}"),
        );
        for (to, a) in moved {
            let kind = TxKind::Payment {
                payer: wallet.to_string(),
                payee: to.clone(),
                option: 1,
            };
            self.start_tx(kind, a, &to, None);
        }
    }

    fn deposit(&mut self, wallet: &str, denomination: Option<u64>) {
        let cycle = self.cycle;
        let (bank_id, account) = self.accounts[wallet].clone();
        let Some(i) = self.pick(wallet, denomination) else {
            self.log(
                "op-skipped",
                format!("deposit: {wallet} has no spendable asset"),
            );
            return;
        };
        let bank = self.banks.get_mut(&bank_id).unwrap();
        let (lock, commitment) = match bank.deposit_lock(&mut self.rng, &account) {
            Ok(x) => x,
            Err(e) => {
                self.log("deposit-rejected", format!("{wallet}: {e}"));
                return;
            }
        };
        let w = &self.wallets[wallet];
        let checked = w
            .prepare_payment(i, lock, Some(commitment), cycle)
            .map_err(DepositError::from)
            .and_then(|a| bank.check_deposit(&a, &self.trust).map(|_| a));
        let moved = match checked {
            Ok(a) => a,
            Err(e) => {
                bank.cancel_deposit(&lock);
                let kind = match &e {
                    DepositError::NeedsExternalEvidence(_) => "deposit-needs-evidence",
                    _ => "deposit-rejected",
                };
                let detail = match &e {
                    DepositError::ComplianceFailed(r) | DepositError::NeedsExternalEvidence(r) => r
                        .findings
                        .iter()
                        .map(|f| f.to_string())
                        .collect::<Vec<_>>()
                        .join("; "),
                    other => first_line(&other.to_string()),
                };
                self.log(kind, format!("{wallet} -> {bank_id}/{account}: {detail}"));
                return;
            }
        };
        let held = self.wallets.get_mut(wallet).unwrap().take(i).unwrap();
        let kind = TxKind::Deposit {
            holder: wallet.to_string(),
            bank: bank_id,
            lock,
        };
        self.start_tx(kind, moved, wallet, Some((wallet.to_string(), held)));
    }

    fn reveal(&mut self, from: &str, to: &str, count: usize) {
        let before = instrumentation::snapshot();
        let mut revealed = 0;
        for i in 0..self.swaps.len() {
            if revealed == count {
                break;
            }
            let s = &self.swaps[i];
            if s.from != from || s.to != to || s.revealed || s.recovered {
                continue;
            }
            let (key, secret) = (s.key, s.secret);
            let w = self.wallets.get_mut(to).unwrap();
            w.learn_secret(&key, secret);
            let idx = w
                .held()
                .iter()
                .position(|h| h.asset.current_owner().key == key);
            let verified = idx.is_some_and(|i| {
                verify_asset(&w.held()[i].asset, &self.trust).passed() && w.can_claim(i).is_ok()
            });
            self.swaps[i].revealed = true;
            revealed += 1;
            self.log("reveal", format!("{from} -> {to} verified={verified}"));
        }
        let used = instrumentation::snapshot().since(&before);
        self.reveal_relay_accesses += used.relay + used.mint + used.bank;
    }

    /// Abstract atomic swap: the payer hands the recipient each unrevealed
    /// secret only in exchange for the asset moving back to a fresh payer
    /// key.
    fn recover(&mut self, from: &str, to: &str) {
        let cycle = self.cycle;
        for i in 0..self.swaps.len() {
            let s = self.swaps[i].clone();
            if s.from != from || s.to != to || s.revealed || s.recovered {
                continue;
            }
            let back = self
                .wallets
                .get_mut(from)
                .unwrap()
                .receive_key(&mut self.rng);
            let w = self.wallets.get_mut(to).unwrap();
            w.learn_secret(&s.key, s.secret);
            let Some(idx) = w
                .held()
                .iter()
                .position(|h| h.asset.current_owner().key == s.key)
            else {
                continue;
            };
            let moved = match w.prepare_payment(idx, OwnerLock::key(back), None, cycle) {
                Ok(a) => a,
                Err(e) => {
                    self.log("recover-failed", format!("{to}: {e}"));
                    continue;
                }
            };
            let held = w.take(idx).unwrap();
            self.swaps[i].recovered = true;
            self.log("swap-recovered", format!("{to} -> {from}"));
            let kind = TxKind::Payment {
                payer: to.to_string(),
                payee: from.to_string(),
                option: 2,
            };
            self.start_tx(kind, moved, to, Some((to.to_string(), held)));
        }
    }

    fn finality(&mut self, a: &Asset) -> Finality {
        let key = cache_key(a);
        if let Some(f) = self.cache.get(&key) {
            return *f;
        }
        let f = verify_asset(a, &self.trust).finality;
        let f = if f == Finality::Pending && a.unanchored() > 1 {
            Finality::Invalid
        } else {
            f
        };
        self.cache.insert(key, f);
        f
    }

    /// Every asset copy in the world, with who holds it.
    fn copies(&self) -> Vec<(&'static str, Asset, Option<blindsig::Signature>)> {
        let mut out = Vec::new();
        for w in self.wallets.values() {
            out.extend(
                w.held()
                    .iter()
                    .map(|h| ("wallets", h.asset.clone(), h.validity.clone())),
            );
        }
        for b in self.banks.values() {
            out.extend(b.holdings().map(|a| ("banks", a.clone(), None)));
            out.extend(b.vault().iter().map(|a| ("banks", a.clone(), None)));
        }
        for t in self.txs.values() {
            out.push(("transit", t.asset.clone(), None));
        }
        out
    }

    /// A fresh withdrawal has no updates yet; its validity signature is
    /// held beside it until the first transfer.
    fn fresh_valid(&self, a: &Asset, validity: Option<&blindsig::Signature>) -> bool {
        let g = &a.genesis;
        let anchor = &a.proof.anchor;
        validity.is_some_and(|sig| blindsig::verify(&g.digest(), sig, &g.certificate.plate_key))
            && g.certificate.denomination == g.denomination
            && g.certificate.verify(&self.trust.central_bank)
            && anchor.digest() == g.relay_anchor
            && self
                .trust
                .relay(anchor.relay_id())
                .is_some_and(|t| t.endorsed(anchor))
    }

    pub fn in_flight(&self) -> i128 {
        self.minter.plates().map(|p| p.in_flight()).sum()
    }

    /// Face value of distinct live assets that verify (or await their
    /// newest anchor).
    pub fn outstanding(&mut self) -> (i128, BTreeMap<&'static str, usize>) {
        let mut seen = BTreeSet::new();
        let mut total = 0i128;
        let mut counts = BTreeMap::new();
        for (class, a, validity) in self.copies() {
            *counts.entry(class).or_default() += 1;
            if a.updates.is_empty() {
                if !self.fresh_valid(&a, validity.as_ref()) {
                    continue;
                }
            } else if self.finality(&a) == Finality::Invalid {
                continue;
            }
            if a.first_update_digest()
                .is_some_and(|d| self.minter.is_spent(&d))
            {
                continue;
            }
            if seen.insert(a.genesis.digest()) {
                total += a.denomination() as i128;
            }
        }
        (total, counts)
    }

    fn violate(&mut self, id: &'static str, detail: String) {
        self.anomalies.insert("invariant");
        self.log("invariant-violation", format!("{id}: {detail}"));
        self.violations.push(Violation {
            cycle: self.cycle,
            id,
            detail,
        });
    }

    pub fn check_invariants(&mut self) {
        let in_flight = self.in_flight();
        let (outstanding, _) = self.outstanding();
        if in_flight != outstanding {
            self.violate(
                "conservation",
                format!("plates report {in_flight} in flight, {outstanding} outstanding"),
            );
        }
        let vouchers: u64 = self
            .banks
            .values()
            .flat_map(|b| b.vouchers())
            .map(|v| v.value())
            .sum();
        let money = self.central_bank.total_reserves() as i128 + vouchers as i128 + in_flight;
        if money != self.initial_money as i128 {
            self.violate(
                "central-bank-money",
                format!(
                    "reserves + vouchers + in-flight = {money}, started at {}",
                    self.initial_money
                ),
            );
        }
        let mut found = Vec::new();
        for r in self.relays.values() {
            let v = one_successor_violations(r.committed_entries());
            if !v.is_empty() {
                found.push((
                    "one-successor",
                    format!(
                        "relay {} has {} states with two successors",
                        r.id(),
                        v.len()
                    ),
                ));
            }
            let chain: Vec<RelayCommitment> = r.commitments().cloned().collect();
            if let Err(e) = verify_commitment_chain(&chain) {
                found.push(("chain-integrity", format!("relay {}: {e}", r.id())));
            }
        }
        // records are append-only, so only new ones need checking
        let minters = BTreeMap::from([(self.minter.id().to_string(), self.minter.public_key())]);
        let fresh = &self.minter.records()[self.records_checked..];
        for f in check_records(fresh, &minters) {
            if matches!(
                f,
                RecordFault::UnbalancedRecycle { .. } | RecordFault::BadSignature { .. }
            ) {
                found.push(("minting-invariant", f.to_string()));
            }
        }
        for (i, r) in fresh.iter().enumerate() {
            if r.sequence != (self.records_checked + i) as u64 {
                found.push((
                    "minting-invariant",
                    format!("record {} out of sequence", r.sequence),
                ));
            }
        }
        self.records_checked = self.minter.records().len();
        for p in self.minter.plates() {
            if p.in_flight() > p.limits.cap_in_flight as i128
                || p.issued_total() > p.limits.cap_cumulative
            {
                found.push(("plate-caps", format!("plate {} over its caps", p.plate_id)));
            }
        }
        // no two verifying copies of one asset on different branches
        let mut by_genesis: BTreeMap<Digest, Vec<Asset>> = BTreeMap::new();
        for (_, a, _) in self.copies() {
            if self.finality(&a) >= Finality::LocallyFinal {
                by_genesis.entry(a.genesis.digest()).or_default().push(a);
            }
        }
        for (g, copies) in by_genesis {
            for (i, a) in copies.iter().enumerate() {
                for b in &copies[i + 1..] {
                    let (short, long) = if a.updates.len() <= b.updates.len() {
                        (a, b)
                    } else {
                        (b, a)
                    };
                    if long.updates[..short.updates.len()] != short.updates[..] {
                        found.push((
                            "no-fork",
                            format!("two verifying branches of {}", &g.to_hex()[..12]),
                        ));
                    }
                }
            }
        }
        for (id, d) in found {
            self.violate(id, d);
        }
    }

    fn evaluate(&mut self, e: &Expectation) -> (bool, String) {
        let num = |want: i128, got: i128| (want == got, got.to_string());
        match e {
            Expectation::InFlight(n) => num(*n as i128, self.in_flight()),
            Expectation::PlateInFlight(p, n) => num(
                *n as i128,
                self.minter.plate(p).map(|p| p.in_flight()).unwrap_or(-1),
            ),
            Expectation::Reserves(b, n) => num(*n as i128, self.central_bank.reserves(b) as i128),
            Expectation::Balance(b, a, n) => num(
                *n as i128,
                self.banks[b]
                    .account(a)
                    .map(|x| x.balance as i128)
                    .unwrap_or(-1),
            ),
            Expectation::Holds(w, n) => num(*n as i128, self.wallets[w].held().len() as i128),
            Expectation::Value(w, n) => num(*n as i128, self.wallets[w].balance() as i128),
            Expectation::Claimable(w, n) => {
                let wl = &self.wallets[w];
                let c = (0..wl.held().len())
                    .filter(|&i| wl.can_claim(i).is_ok())
                    .count();
                num(*n as i128, c as i128)
            }
            Expectation::Evidence(n) => {
                let valid = self
                    .evidence
                    .iter()
                    .filter(|e| e.verify(&self.trust.relays))
                    .count();
                num(*n as i128, valid as i128)
            }
            Expectation::Event(k, n) => num(*n as i128, self.event_count(k) as i128),
            Expectation::RevealRelayAccesses(n) => {
                num(*n as i128, self.reveal_relay_accesses as i128)
            }
            Expectation::Finality(w, want) => {
                let assets: Vec<Asset> = self.wallets[w]
                    .held()
                    .iter()
                    .map(|h| h.asset.clone())
                    .collect();
                let got: Vec<Finality> = assets.iter().map(|a| self.finality(a)).collect();
                let target = match want {
                    FinalityWant::Pending => Finality::Pending,
                    FinalityWant::Local => Finality::LocallyFinal,
                    FinalityWant::Global => Finality::GloballyFinal,
                };
                let ok = !got.is_empty() && got.iter().all(|f| *f == target);
                let actual = if got.is_empty() {
                    "no assets".to_string()
                } else {
                    got.iter()
                        .map(|f| f.to_string())
                        .collect::<Vec<_>>()
                        .join("; ")
                };
                (ok, actual)
            }
        }
    }

    fn snapshot(&mut self) {
        let (outstanding, counts) = self.outstanding();
        let plates: Vec<String> = self
            .minter
            .plates()
            .map(|p| format!("{}:{}", p.plate_id, p.in_flight()))
            .collect();
        let vouchers: u64 = self
            .banks
            .values()
            .flat_map(|b| b.vouchers())
            .map(|v| v.value())
            .sum();
        let balances: u64 = self.banks.values().map(|b| b.total_balances()).sum();
        let anomalies = if self.anomalies.is_empty() {
            "-".to_string()
        } else {
            self.anomalies.iter().copied().collect::<Vec<_>>().join(",")
        };
        let line = format!(
            "cycle={} in_flight={} plates={} outstanding={} reserves={} vouchers={} balances={} assets=wallets:{},banks:{},transit:{} evidence={} anomalies={}",
            self.cycle,
            self.in_flight(),
            plates.join(","),
            outstanding,
            self.central_bank.total_reserves(),
            vouchers,
            balances,
            counts.get("wallets").unwrap_or(&0),
            counts.get("banks").unwrap_or(&0),
            counts.get("transit").unwrap_or(&0),
            self.evidence.len(),
            anomalies
        );
        self.metrics.push(line);
    }

    pub fn plate_registry(&self) -> PlateRegistry {
        PlateRegistry {
            minters: BTreeMap::from([(self.minter.id().to_string(), self.minter.public_key())]),
            plates: self.minter.snapshots(),
        }
    }
}

fn body_name(b: &Body) -> &'static str {
    match b {
        Body::Transfer { .. } => "transfer",
        Body::Submit { .. } => "submit",
        Body::SubmitResult { .. } => "submit-result",
        Body::Aggregate { .. } => "aggregate",
        Body::AggregateAck { .. } => "aggregate-ack",
    }
}

fn first_line(s: &str) -> String {
    s.lines().next().unwrap_or("").to_string()
}

/// Adds aggregation hops for every proof step whose top commitment the
/// parent relay has since committed.
pub fn extend_proof(relays: &BTreeMap<String, Relay>, asset: &Asset) -> Option<Asset> {
    let mut out: Option<Asset> = None;
    for i in 0..asset.proof.steps.len() {
        loop {
            let cur = out.as_ref().unwrap_or(asset);
            let top = cur.proof.steps[i].top_commitment();
            let Some(parent) = relays.get(top.relay_id()).and_then(|r| r.parent()) else {
                break;
            };
            let Some(p) = relays.get(parent) else {
                break;
            };
            match p.prove_aggregation(top) {
                Ok((inclusion, commitment)) => {
                    out = Some(cur.with_aggregation(
                        i,
                        AggregationHop {
                            inclusion,
                            commitment,
                        },
                    ));
                }
                Err(_) => break,
            }
        }
    }
    out
}
