//! Python bindings: blind signatures, offline asset verification, the
//! simulator and the monitoring audit.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use uso_cbdc::asset::{self, Asset, TrustRoots};
use uso_cbdc::blindsig::{
    self, BlindedMessage, BlindingFactor, IssuerKeyPair, KeyProfile, Signature,
};
use uso_cbdc::codec::{Canonical, Digest};
use uso_cbdc::institutions::{self, CommitmentRule, ComplianceRule};
use uso_cbdc::mint::monitoring::{self, PlateRegistry};
use uso_cbdc::sim::{self, builtin, unlinkability, Scenario, SimulationConfig};
use uso_cbdc::vectors;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn digest(message: &[u8]) -> PyResult<Digest> {
    let bytes: [u8; 32] = message
        .try_into()
        .map_err(|_| value_error(format!("message must be 32 bytes, got {}", message.len())))?;
    Ok(Digest(bytes))
}

/// A minting plate's RSA key, generated from a seed.
#[pyclass(module = "uso_cbdc_py")]
struct PlateKey {
    key: IssuerKeyPair,
    rng: ChaCha20Rng,
}

#[pymethods]
impl PlateKey {
    #[new]
    #[pyo3(signature = (denomination, seed=1, production=false))]
    fn new(denomination: u64, seed: u64, production: bool) -> PyResult<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let profile = if production {
            KeyProfile::Production
        } else {
            KeyProfile::Test
        };
        let key = IssuerKeyPair::generate(&mut rng, profile, denomination).map_err(value_error)?;
        Ok(PlateKey { key, rng })
    }

    #[getter]
    fn denomination(&self) -> u64 {
        self.key.denomination()
    }

    #[getter]
    fn public_key(&self) -> Vec<u8> {
        self.key.public().to_canonical().0
    }

    /// Blinds a 32-byte message; returns (blinded, factor).
    fn blind(&mut self, message: &[u8]) -> PyResult<(Vec<u8>, Vec<u8>)> {
        let m = digest(message)?;
        let factor = BlindingFactor::random(&mut self.rng, self.key.public());
        let blinded = blindsig::blind(&m, &factor, self.key.public()).map_err(value_error)?;
        Ok((blinded.0, factor.to_bytes()))
    }

    fn sign_blinded(&self, blinded: Vec<u8>) -> PyResult<Vec<u8>> {
        let sig =
            blindsig::sign_blinded(&BlindedMessage(blinded), &self.key).map_err(value_error)?;
        Ok(sig.to_canonical().0)
    }

    fn unblind(&self, signature: &[u8], factor: &[u8]) -> PyResult<Vec<u8>> {
        let sig = Signature::from_canonical(signature).map_err(value_error)?;
        let factor = BlindingFactor::from_bytes(factor, self.key.public()).map_err(value_error)?;
        Ok(blindsig::unblind(&sig, factor).to_canonical().0)
    }

    fn verify(&self, message: &[u8], signature: &[u8]) -> PyResult<bool> {
        let m = digest(message)?;
        let sig = match Signature::from_canonical(signature) {
            Ok(s) => s,
            Err(_) => return Ok(false),
        };
        Ok(blindsig::verify(&m, &sig, self.key.public()))
    }
}

#[pyclass(module = "uso_cbdc_py", get_all)]
struct VerificationReport {
    passed: bool,
    finality: String,
    denomination: u64,
    hops: usize,
    findings: Vec<String>,
    text: String,
}

/// Verifies a hex-encoded asset against trust roots in their text form.
#[pyfunction]
fn verify_asset(asset_hex: &str, trust_roots: &str) -> PyResult<VerificationReport> {
    let trust = TrustRoots::from_text(trust_roots).map_err(value_error)?;
    let bytes = hex::decode(asset_hex.trim()).map_err(value_error)?;
    let a = Asset::from_canonical(&bytes).map_err(value_error)?;
    let r = asset::verify_asset(&a, &trust);
    Ok(VerificationReport {
        passed: r.passed(),
        finality: r.finality.to_string(),
        denomination: r.denomination,
        hops: r.hops,
        findings: r.findings.clone(),
        text: r.render(),
    })
}

/// Compliance verdict and findings for a hex-encoded asset.
#[pyfunction]
#[pyo3(signature = (asset_hex, max_hops=None, commitment="off", evidence_threshold=None))]
fn check_compliance(
    asset_hex: &str,
    max_hops: Option<u32>,
    commitment: &str,
    evidence_threshold: Option<u64>,
) -> PyResult<(String, Vec<String>)> {
    let bytes = hex::decode(asset_hex.trim()).map_err(value_error)?;
    let a = Asset::from_canonical(&bytes).map_err(value_error)?;
    let rules = ComplianceRule {
        max_hops,
        recipient_commitment: commitment.parse::<CommitmentRule>().map_err(value_error)?,
        deposit_evidence_threshold: evidence_threshold,
    };
    let r = institutions::check_compliance(&a, &rules);
    Ok((
        r.verdict.to_string(),
        r.findings.iter().map(|f| f.to_string()).collect(),
    ))
}

#[pyclass(module = "uso_cbdc_py", get_all)]
struct RunResults {
    ok: bool,
    summary: String,
    metrics: String,
    events: String,
    final_in_flight: i128,
    violations: Vec<String>,
    files: BTreeMap<String, String>,
}

/// Runs a scenario given as text or as a built-in name.
#[pyfunction]
#[pyo3(signature = (scenario, seed=1, flush_cycles=None, config=None))]
fn run_scenario(
    scenario: &str,
    seed: u64,
    flush_cycles: Option<u64>,
    config: Option<&str>,
) -> PyResult<RunResults> {
    let mut cfg = match config {
        Some(t) => SimulationConfig::from_toml(t).map_err(value_error)?,
        None => SimulationConfig::default(),
    };
    cfg.seed = seed;
    if let Some(f) = flush_cycles {
        cfg.flush_cycles = f;
    }
    let text = builtin::builtin(scenario, seed).unwrap_or_else(|| scenario.to_string());
    let parsed = Scenario::parse(&text).map_err(value_error)?;
    let r = sim::run_scenario(&cfg, &parsed).map_err(value_error)?;
    Ok(RunResults {
        ok: r.ok(),
        summary: r.summary.clone(),
        metrics: r.metrics.clone(),
        events: r.events.clone(),
        final_in_flight: r.final_in_flight,
        violations: r
            .violations
            .iter()
            .map(|v| format!("{} at cycle {}: {}", v.id, v.cycle, v.detail))
            .collect(),
        files: r.files().into_iter().collect(),
    })
}

/// Audits monitoring ledger text against a plate registry; returns
/// (clean, report).
#[pyfunction]
fn audit(ledger: &str, plates: &str) -> PyResult<(bool, String)> {
    let registry = PlateRegistry::from_text(plates).map_err(value_error)?;
    let records = monitoring::parse(ledger).map_err(value_error)?;
    let report = monitoring::audit(&records, &registry);
    Ok((report.clean(), report.render()))
}

#[pyfunction]
fn builtin_names() -> Vec<&'static str> {
    builtin::NAMES.to_vec()
}

#[pyfunction]
fn golden_vectors() -> String {
    vectors::golden()
}

#[pyfunction]
#[pyo3(signature = (k, n, alpha=0.05))]
fn clopper_pearson(k: usize, n: usize, alpha: f64) -> PyResult<(f64, f64)> {
    if n == 0 || k > n {
        return Err(value_error("need 0 <= k <= n and n > 0"));
    }
    Ok(unlinkability::clopper_pearson(k, n, alpha))
}

#[pymodule]
fn uso_cbdc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PlateKey>()?;
    m.add_class::<VerificationReport>()?;
    m.add_class::<RunResults>()?;
    m.add_function(wrap_pyfunction!(verify_asset, m)?)?;
    m.add_function(wrap_pyfunction!(check_compliance, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_names, m)?)?;
    m.add_function(wrap_pyfunction!(golden_vectors, m)?)?;
    m.add_function(wrap_pyfunction!(clopper_pearson, m)?)?;
    Ok(())
}
