use super::builtin::{self, builtin};
use super::config::SimulationConfig;
use super::interleave::enumerate_double_spend;
use super::scenario::Scenario;
use super::unlinkability::{clopper_pearson, linkage_trial};
use super::{run_scenario, RunResults};

fn run_text(text: &str, seed: u64) -> RunResults {
    let config = SimulationConfig {
        seed,
        ..SimulationConfig::default()
    };
    run_scenario(&config, &Scenario::parse(text).unwrap()).unwrap()
}

fn assert_ok(r: &RunResults) {
    assert!(r.ok(), "{}\n{}", r.summary, r.events);
}

#[test]
fn act_one_act_two_ends_with_nothing_in_flight() {
    let r = run_text(builtin::ACT1_ACT2, 1);
    assert_ok(&r);
    assert_eq!(r.final_in_flight, 0);
    assert_eq!(r.exports.len(), 2);
    assert!(r.metrics.lines().all(|l| l.starts_with("cycle=")));
}

fn run_builtin(name: &str, seed: u64) -> RunResults {
    let text = builtin(name, seed).unwrap();
    run_text(&text, seed)
}

#[test]
fn disconnected_payments_settle_after_heal() {
    let r = run_builtin("disconnected", 1);
    assert_ok(&r);
}

#[test]
fn equivocating_child_yields_evidence() {
    let r = run_builtin("disconnected-equivocation", 1);
    assert_ok(&r);
    assert!(!r.evidence.is_empty());
}

#[test]
fn time_shifted_swap_recovers() {
    let r = run_builtin("time-shifted", 1);
    assert_ok(&r);
}

#[test]
fn chained_rule_rejects_at_hop_two() {
    let r = run_builtin("chained", 1);
    assert_ok(&r);
    assert!(
        r.events
            .lines()
            .any(|l| l.contains("deposit-rejected") && l.contains("hop 2")),
        "{}",
        r.events
    );
}

#[test]
fn double_spend_has_one_winner() {
    let r = run_builtin("double-spend", 1);
    assert_ok(&r);
}

#[test]
fn random_scenarios_hold_invariants() {
    for seed in 1..=3 {
        let r = run_builtin("random", seed);
        assert!(r.violations.is_empty(), "seed {seed}: {}", r.summary);
    }
}

#[test]
fn same_seed_same_files() {
    let a = run_builtin("disconnected", 7);
    let b = run_builtin("disconnected", 7);
    assert_eq!(a.files(), b.files());
}

#[test]
fn double_spend_races_resolve_in_every_order() {
    for position in 0..=2 {
        let r = enumerate_double_spend(position, 3).unwrap();
        assert!(r.ok(), "position {position}: {:?}", r.failures);
        assert!(
            r.max_pending <= 6,
            "position {position}: {} pending",
            r.max_pending
        );
        assert!(r.interleavings >= 2);
    }
}

fn binomial_cdf(k: usize, n: usize, p: f64) -> f64 {
    let mut term = (1.0 - p).powi(n as i32);
    let mut sum = term;
    for i in 0..k {
        term *= (n - i) as f64 / (i + 1) as f64 * p / (1.0 - p);
        sum += term;
    }
    sum
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = (lo + hi) / 2.0;
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo + hi) / 2.0
}

#[test]
fn clopper_pearson_matches_binomial_tails() {
    let (lo, hi) = clopper_pearson(0, 100, 0.05);
    assert_eq!(lo, 0.0);
    assert!(
        (hi - (1.0 - 0.025f64.powf(0.01))).abs() < 1e-9,
        "{hi} vs {}",
        1.0 - 0.025f64.powf(0.01)
    );
    let (lo, hi) = clopper_pearson(100, 100, 0.05);
    assert!((lo - 0.025f64.powf(0.01)).abs() < 1e-9);
    assert_eq!(hi, 1.0);
    for (k, n) in [(1, 100), (3, 100), (17, 40), (50, 100)] {
        let (lo, hi) = clopper_pearson(k, n, 0.05);
        // upper: P(X <= k) = 0.025, lower: P(X >= k) = 0.025
        let want_hi = bisect(1e-12, 1.0 - 1e-12, |p| binomial_cdf(k, n, p) - 0.025);
        let want_lo = bisect(1e-12, 1.0 - 1e-12, |p| {
            1.0 - binomial_cdf(k - 1, n, p) - 0.025
        });
        assert!(
            (hi - want_hi).abs() < 1e-7,
            "k={k} n={n}: {hi} vs {want_hi}"
        );
        assert!(
            (lo - want_lo).abs() < 1e-7,
            "k={k} n={n}: {lo} vs {want_lo}"
        );
    }
}

#[test]
fn blinded_withdrawals_resist_linkage() {
    let t = linkage_trial(11, 30, false).unwrap();
    assert_eq!(t.deposits, 30);
    assert!(t.matches <= 6, "{t:?}");
}

#[test]
fn leaky_schedule_is_linkable() {
    let t = linkage_trial(11, 30, true).unwrap();
    assert_eq!(t.deposits, 30);
    assert!(t.matches >= 27, "{t:?}");
}

#[test]
fn config_faults_become_scheduled_ops() {
    let config = SimulationConfig::from_toml(
        "seed = 4\n[[faults]]\ncycle = 3\nkind = \"partition\"\ntarget = \"alice\"\npeer = \"root\"\n\
         [[faults]]\ncycle = 6\nkind = \"heal\"\ntarget = \"alice\"\npeer = \"root\"\n",
    )
    .unwrap();
    let scenario = Scenario::parse(
        "relay root\nbank b1 reserves=100\naccount b1 alice 50\nwallet alice bank=b1 account=alice\nat 1 withdraw alice 10\n",
    )
    .unwrap();
    let r = run_scenario(&config, &scenario).unwrap();
    assert_ok(&r);
    let lines: Vec<&str> = r.events.lines().collect();
    assert!(
        lines.iter().any(|l| l.contains("partition")),
        "{}",
        r.events
    );
    assert!(lines.iter().any(|l| l.contains("heal")), "{}", r.events);
}

fn kinds(r: &RunResults) -> Vec<String> {
    r.events
        .lines()
        .filter_map(|l| l.split_whitespace().nth(1))
        .filter(|k| !matches!(*k, "partition" | "heal" | "dropped"))
        .map(str::to_string)
        .collect()
}

#[test]
fn without_partition_payment_is_ordinary() {
    let plain: String = builtin::DISCONNECTED
        .lines()
        .filter(|l| {
            !l.contains("partition") && !l.contains("heal") && !l.contains("expect finality")
        })
        .map(|l| format!("{l}\n"))
        .collect();
    let cut = run_builtin("disconnected", 1);
    let ordinary = run_text(&format!("{plain}at 12 expect finality bob global\n"), 1);
    assert_ok(&cut);
    assert_ok(&ordinary);
    assert_eq!(kinds(&cut), kinds(&ordinary));
    assert_eq!(cut.final_in_flight, ordinary.final_in_flight);
}

#[test]
fn no_offline_spends_recovers_everything() {
    let text: String = builtin::TIME_SHIFTED
        .lines()
        .take_while(|l| !l.starts_with("at 13"))
        .map(|l| format!("{l}\n"))
        .collect::<String>()
        + "at 13 claim bob\n\
           at 13 expect claimable bob 0\n\
           at 13 expect event claim-denied 5\n\
           at 16 heal alice local\n\
           at 16 heal bob local\n\
           at 16 recover alice bob\n\
           at 17 expect holds bob 0\n\
           at 17 expect value alice 50\n\
           at 17 expect event swap-recovered 5\n";
    let r = run_text(&text, 1);
    assert_ok(&r);
}
