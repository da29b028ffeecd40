use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use uso_cbdc::asset::{verify_asset, Asset, TrustRoots};
use uso_cbdc::blindsig::{IssuerKeyPair, KeyProfile};
use uso_cbdc::codec::Canonical;
use uso_cbdc::instrumentation;
use uso_cbdc::keys::AuthKeyPair;
use uso_cbdc::mint::monitoring::{self, PlateRegistry};
use uso_cbdc::sim::{builtin, run_scenario, Scenario, SimError, SimulationConfig};
use uso_cbdc::vectors;

#[derive(Parser)]
#[command(
    name = "cbdc",
    version,
    about = "USO digital cash simulator and offline tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a built-in scenario by name.
    Run {
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Idle cycles after the last scheduled operation.
        #[arg(long)]
        flush_cycles: Option<u64>,
    },
    /// Verify an exported asset offline against trust roots.
    Verify {
        asset: PathBuf,
        #[arg(long)]
        trust: PathBuf,
    },
    /// Audit minter monitoring ledgers against a plate registry.
    Audit {
        #[arg(required = true)]
        ledgers: Vec<PathBuf>,
        #[arg(long)]
        plates: PathBuf,
    },
    /// Generate a minting plate key and an actor key.
    Keys {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Profile::Test)]
        profile: Profile,
        #[arg(long, default_value_t = 100)]
        denomination: u64,
    },
    /// Print the golden test vectors.
    Vectors,
    /// List the built-in scenarios.
    Builtins,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Test,
    Production,
}

enum Failure {
    Usage(String),
    Failed(String),
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn usage(e: SimError) -> Failure {
    match e {
        SimError::InvariantViolation { .. } => Failure::Failed(e.to_string()),
        _ => Failure::Usage(e.to_string()),
    }
}

fn run(
    scenario: &str,
    seed: Option<u64>,
    config: Option<&Path>,
    out: Option<&Path>,
    flush_cycles: Option<u64>,
) -> Result<(), Failure> {
    let mut cfg = match config {
        Some(p) => SimulationConfig::from_toml(&read(p)?).map_err(usage)?,
        None => SimulationConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(f) = flush_cycles {
        cfg.flush_cycles = f;
    }
    let text = if Path::new(scenario).is_file() {
        read(Path::new(scenario))?
    } else {
        builtin::builtin(scenario, cfg.seed).ok_or_else(|| {
            Failure::Usage(format!(
                "{scenario}: no such file or built-in scenario (built-ins: {})",
                builtin::NAMES.join(", ")
            ))
        })?
    };
    let parsed = Scenario::parse(&text).map_err(usage)?;
    let results = run_scenario(&cfg, &parsed).map_err(usage)?;
    if let Some(dir) = out {
        results
            .write_to(dir)
            .map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
    }
    print!("{}", results.summary);
    match results.first_violation() {
        Some(v) => Err(Failure::Failed(v.to_string())),
        None if !results.ok() => Err(Failure::Failed("expectations failed".into())),
        None => Ok(()),
    }
}

fn verify(asset: &Path, trust: &Path) -> Result<(), Failure> {
    let trust = TrustRoots::from_text(&read(trust)?)
        .map_err(|e| Failure::Usage(format!("trust roots: {e}")))?;
    let text = read(asset)?;
    let bytes = hex::decode(text.trim())
        .map_err(|e| Failure::Failed(format!("finding: asset is not hex: {e}")))?;
    let asset = Asset::from_canonical(&bytes)
        .map_err(|e| Failure::Failed(format!("finding: asset does not decode: {e}")))?;
    instrumentation::reset();
    let report = verify_asset(&asset, &trust);
    let counts = instrumentation::snapshot();
    print!("{}", report.render());
    println!(
        "service accesses: relay={} mint={} bank={}",
        counts.relay, counts.mint, counts.bank
    );
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Failed("verification failed".into()))
    }
}

fn audit(ledgers: &[PathBuf], plates: &Path) -> Result<(), Failure> {
    let registry = PlateRegistry::from_text(&read(plates)?)
        .map_err(|e| Failure::Usage(format!("plates: {e}")))?;
    let mut records = Vec::new();
    for l in ledgers {
        let parsed = monitoring::parse(&read(l)?)
            .map_err(|e| Failure::Usage(format!("{}: {e}", l.display())))?;
        records.extend(parsed);
    }
    let report = monitoring::audit(&records, &registry);
    print!("{}", report.render());
    if report.clean() {
        Ok(())
    } else {
        Err(Failure::Failed("audit found faults".into()))
    }
}

fn keys(seed: u64, profile: Profile, denomination: u64) -> Result<(), Failure> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let profile = match profile {
        Profile::Test => KeyProfile::Test,
        Profile::Production => KeyProfile::Production,
    };
    let plate = IssuerKeyPair::generate(&mut rng, profile, denomination)
        .map_err(|e| Failure::Failed(e.to_string()))?;
    let actor = AuthKeyPair::generate(&mut rng);
    println!("plate.denomination {denomination}");
    println!("plate.public {}", plate.public().to_canonical().to_hex());
    println!("plate.secret {}", hex::encode(plate.secret_bytes()));
    println!("actor.public {}", actor.public().to_hex());
    println!("actor.secret {}", hex::encode(actor.secret_bytes()));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run {
            scenario,
            seed,
            config,
            out,
            flush_cycles,
        } => run(
            scenario,
            *seed,
            config.as_deref(),
            out.as_deref(),
            *flush_cycles,
        ),
        Command::Verify { asset, trust } => verify(asset, trust),
        Command::Audit { ledgers, plates } => audit(ledgers, plates),
        Command::Keys {
            seed,
            profile,
            denomination,
        } => keys(*seed, *profile, *denomination),
        Command::Vectors => {
            print!("{}", vectors::golden());
            Ok(())
        }
        Command::Builtins => {
            for n in builtin::NAMES {
                println!("{n}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Failed(m)) => {
            eprintln!("failed: {m}");
            ExitCode::from(1)
        }
    }
}
