//! Built-in scenarios and the randomized scenario generator.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::scenario::Scenario;
use super::SimError;

/// The operational model end to end: withdraw, pay with both options,
/// deposit, surrender and redeem until nothing is left in flight.
pub const ACT1_ACT2: &str = "\
relay root
relay local parent=root
bank b1 reserves=1000
account b1 alice 150
account b1 bob 0
wallet alice bank=b1 account=alice relay=local
wallet bob bank=b1 account=bob relay=local
at 1 withdraw alice 100
at 1 withdraw alice 50
at 1 expect in-flight 150
at 1 expect reserves b1 850
at 11 pay alice bob 100 option=1
at 11 pay alice bob 50 option=2
at 11 expect finality bob global
at 11 expect value bob 150
at 12 export bob
at 12 deposit bob
at 12 deposit bob
at 12 expect balance b1/bob 150
at 14 redeem b1
at 15 expect in-flight 0
at 15 expect reserves b1 1000
at 15 expect balance b1/alice 0
";

/// A local relay loses its uplink for cycles 10 to 19. A payment anchored
/// there is locally final during the partition and globally final once the
/// backlog is aggregated.
pub const DISCONNECTED: &str = "\
relay root
relay local parent=root
bank b1 reserves=1000
account b1 alice 100
account b1 bob 0
wallet alice bank=b1 account=alice relay=local
wallet bob bank=b1 account=bob relay=local
at 1 withdraw alice 100
at 10 partition local root
at 12 pay alice bob 100 option=2
at 12 expect finality bob local
at 19 expect finality bob local
at 20 heal local root
at 20 expect finality bob global
at 22 deposit bob
at 24 redeem b1
at 25 expect in-flight 0
at 25 expect evidence 0
";

/// As [`DISCONNECTED`], with the local relay showing its parent a forked
/// commitment while cut off.
pub const DISCONNECTED_EQUIVOCATION: &str = "\
relay root
relay local parent=root
bank b1 reserves=1000
account b1 alice 100
account b1 bob 0
wallet alice bank=b1 account=alice relay=local
wallet bob bank=b1 account=bob relay=local
at 1 withdraw alice 100
at 10 partition local root
at 12 pay alice bob 100 option=2
at 12 expect finality bob local
at 15 equivocate local
at 19 expect evidence 0
at 20 heal local root
at 20 expect evidence 1
at 20 expect finality bob global
";

/// Five assets pre-transferred under hash locks, three consummated offline
/// by revealing secrets, two swapped back afterwards.
pub const TIME_SHIFTED: &str = "\
relay root
relay local parent=root
bank b1 reserves=1000
account b1 alice 50
account b1 bob 0
wallet alice bank=b1 account=alice relay=local
wallet bob bank=b1 account=bob relay=local
at 1 withdraw alice 10
at 1 withdraw alice 10
at 1 withdraw alice 10
at 1 withdraw alice 10
at 1 withdraw alice 10
at 11 pretransfer alice bob 5 10
at 11 expect holds bob 5
at 11 expect claimable bob 0
at 12 partition alice local
at 12 partition bob local
at 13 reveal alice bob 3
at 13 claim bob
at 13 expect claimable bob 3
at 13 expect event claim-denied 2
at 13 expect reveal-relay-accesses 0
at 16 heal alice local
at 16 heal bob local
at 16 recover alice bob
at 17 expect holds bob 3
at 17 expect value bob 30
at 17 expect value alice 20
at 17 expect in-flight 50
";

/// Onward transfers carrying recipient commitments. The 100 travels three
/// hops with commitments and is credited; the 50 loses its commitment at
/// hop 2 and is refused; the 10 is deposited after one hop.
pub const CHAINED: &str = "\
relay root
relay local parent=root
bank b1 reserves=1000
account b1 alice 160
account b1 bob 0
account b1 carol 0
account b1 dave 0
account b1 erin 0
wallet alice bank=b1 account=alice
wallet bob bank=b1 account=bob
wallet carol bank=b1 account=carol
wallet dave bank=b1 account=dave
wallet erin bank=b1 account=erin
rule b1 max_hops=3 commitment=all
at 1 withdraw alice 100
at 1 withdraw alice 50
at 1 withdraw alice 10
at 11 pay alice bob 100 commit=yes
at 11 pay alice bob 50 commit=yes
at 11 pay alice erin 10 commit=yes
at 12 pay bob carol 100 commit=yes
at 12 pay bob carol 50 commit=no
at 12 deposit erin
at 13 pay carol dave 100 commit=yes
at 13 pay carol dave 50 commit=yes
at 14 deposit dave 100
at 14 deposit dave 50
at 15 expect balance b1/dave 100
at 15 expect balance b1/erin 10
at 15 expect event deposit-credited 2
at 15 expect event deposit-rejected 1
at 15 expect holds dave 1
";

/// The holder signs two conflicting transfers; both recipients try to
/// register.
pub const DOUBLE_SPEND: &str = "\
relay root
relay local parent=root
bank b1 reserves=1000
account b1 alice 100
wallet alice bank=b1 account=alice
wallet bob
wallet carol
at 1 withdraw alice 100
at 11 double-spend alice bob carol
at 11 expect event conflicting-successor 1
at 11 expect event payment-final 1
at 12 expect in-flight 100
";

pub const NAMES: [&str; 7] = [
    "act1-act2",
    "disconnected",
    "disconnected-equivocation",
    "time-shifted",
    "chained",
    "double-spend",
    "random",
];

/// Scenario text for a built-in name. `random` depends on the seed.
pub fn builtin(name: &str, seed: u64) -> Option<String> {
    Some(match name {
        "act1-act2" => ACT1_ACT2.to_string(),
        "disconnected" => DISCONNECTED.to_string(),
        "disconnected-equivocation" => DISCONNECTED_EQUIVOCATION.to_string(),
        "time-shifted" => TIME_SHIFTED.to_string(),
        "chained" => CHAINED.to_string(),
        "double-spend" => DOUBLE_SPEND.to_string(),
        "random" => random_scenario(seed, 240),
        _ => return None,
    })
}

pub fn parse_builtin(name: &str, seed: u64) -> Option<Result<Scenario, SimError>> {
    builtin(name, seed).map(|t| Scenario::parse(&t))
}

/// A seeded mix of withdrawals, payments, deposits, redemptions, voucher
/// purchases and uplink partitions across two banks and two local relays.
pub fn random_scenario(seed: u64, operations: usize) -> String {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let wallets: Vec<String> = (0..8).map(|i| format!("w{i}")).collect();
    let mut out = String::from(
        "relay root\nrelay east parent=root\nrelay west parent=root period=2\n\
         bank b1 reserves=100000\nbank b2 reserves=100000\nrule b2 max_hops=4 commitment=chained\n",
    );
    for (i, w) in wallets.iter().enumerate() {
        let bank = if i % 2 == 0 { "b1" } else { "b2" };
        let relay = if i % 3 == 0 { "west" } else { "east" };
        out.push_str(&format!(
            "account {bank} {w} 5000\nwallet {w} bank={bank} account={w} relay={relay}\n"
        ));
    }
    let denominations = [1u64, 5, 10, 50, 100];
    let mut partitioned: Option<(String, u64)> = None;
    let mut lines = Vec::new();
    for n in 0..operations {
        // the first stretch is withdrawal-heavy so wallets have something
        let cycle = 1 + (n as u64 * 120) / operations as u64;
        let roll = rng.gen_range(0..100);
        let w = wallets.choose(&mut rng).unwrap();
        let d = denominations.choose(&mut rng).unwrap();
        let line = if cycle < 12 || roll < 25 {
            format!("at {cycle} withdraw {w} {d}")
        } else if roll < 65 {
            let to = wallets.choose(&mut rng).unwrap();
            let option = rng.gen_range(1..=2);
            let commit = if rng.gen_bool(0.7) { "yes" } else { "no" };
            format!("at {cycle} pay {w} {to} option={option} commit={commit}")
        } else if roll < 85 {
            format!("at {cycle} deposit {w}")
        } else if roll < 90 {
            let b = if rng.gen_bool(0.5) { "b1" } else { "b2" };
            format!("at {cycle} redeem {b}")
        } else if roll < 95 {
            let b = if rng.gen_bool(0.5) { "b1" } else { "b2" };
            format!("at {cycle} vouchers {b} {} {d}", d * rng.gen_range(1..4))
        } else {
            match partitioned.take() {
                Some((relay, since)) if cycle > since => format!("at {cycle} heal {relay} root"),
                Some(p) => {
                    partitioned = Some(p);
                    format!("at {cycle} deposit {w}")
                }
                None => {
                    let relay = if rng.gen_bool(0.5) { "east" } else { "west" };
                    partitioned = Some((relay.to_string(), cycle));
                    format!("at {cycle} partition {relay} root")
                }
            }
        };
        lines.push(line);
    }
    if let Some((relay, _)) = partitioned {
        lines.push(format!("at 121 heal {relay} root"));
    }
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}
