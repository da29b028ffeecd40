//! Regulatory checks a bank (or a merchant running the same program) applies
//! to an asset before accepting it. Pure function of the asset bytes and the
//! rule set.

use std::fmt;
use std::str::FromStr;

use crate::asset::Asset;
use crate::codec::Digest;

/// Which hops must carry a recipient commitment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CommitmentRule {
    #[default]
    Off,
    AllHops,
    /// Only onward transfers, i.e. hop 2 and later.
    ChainedHops,
}

impl CommitmentRule {
    fn required_at(self, hop: usize) -> bool {
        match self {
            CommitmentRule::Off => false,
            CommitmentRule::AllHops => true,
            CommitmentRule::ChainedHops => hop >= 2,
        }
    }
}

impl FromStr for CommitmentRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(CommitmentRule::Off),
            "all" | "on" => Ok(CommitmentRule::AllHops),
            "chained" => Ok(CommitmentRule::ChainedHops),
            _ => Err(format!("unknown commitment rule {s:?} (off, all, chained)")),
        }
    }
}

impl fmt::Display for CommitmentRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommitmentRule::Off => "off",
            CommitmentRule::AllHops => "all",
            CommitmentRule::ChainedHops => "chained",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct ComplianceRule {
    /// `None` means unlimited.
    pub max_hops: Option<u32>,
    pub recipient_commitment: CommitmentRule,
    /// Deposits strictly above this value need external evidence.
    pub deposit_evidence_threshold: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    NeedsExternalEvidence,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::NeedsExternalEvidence => "needs-external-evidence",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Finding {
    TooManyHops { hops: usize, max: u32 },
    MissingCommitment { hop: usize },
    AboveEvidenceThreshold { value: u64, threshold: u64 },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::TooManyHops { hops, max } => write!(f, "{hops} hops exceeds limit {max}"),
            Finding::MissingCommitment { hop } => {
                write!(f, "hop {hop} lacks a recipient commitment")
            }
            Finding::AboveEvidenceThreshold { value, threshold } => {
                write!(f, "value {value} above evidence threshold {threshold}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplianceReport {
    pub verdict: Verdict,
    pub findings: Vec<Finding>,
    /// Recipient commitment of each hop, reconstructed from the asset.
    pub hop_commitments: Vec<Option<Digest>>,
}

impl ComplianceReport {
    pub fn render(&self) -> String {
        let mut out = format!("compliance: {}\n", self.verdict);
        for f in &self.findings {
            out.push_str(&format!("  {f}\n"));
        }
        for (i, c) in self.hop_commitments.iter().enumerate() {
            let c = c.map(|d| d.to_hex()).unwrap_or_else(|| "-".into());
            out.push_str(&format!("  hop {} commitment {c}\n", i + 1));
        }
        out
    }
}

/// Hop count is the number of updates on the asset as presented.
pub fn check_compliance(asset: &Asset, rules: &ComplianceRule) -> ComplianceReport {
    let hops = asset.hops();
    let hop_commitments: Vec<Option<Digest>> = asset
        .updates
        .iter()
        .map(|u| u.body.recipient_commitment)
        .collect();
    let mut findings = Vec::new();
    if let Some(max) = rules.max_hops {
        if hops > max as usize {
            findings.push(Finding::TooManyHops { hops, max });
        }
    }
    for (i, c) in hop_commitments.iter().enumerate() {
        if c.is_none() && rules.recipient_commitment.required_at(i + 1) {
            findings.push(Finding::MissingCommitment { hop: i + 1 });
        }
    }
    let failed = !findings.is_empty();
    let mut needs_evidence = false;
    if let Some(threshold) = rules.deposit_evidence_threshold {
        if asset.denomination() > threshold {
            needs_evidence = true;
            findings.push(Finding::AboveEvidenceThreshold {
                value: asset.denomination(),
                threshold,
            });
        }
    }
    let verdict = if failed {
        Verdict::Fail
    } else if needs_evidence {
        Verdict::NeedsExternalEvidence
    } else {
        Verdict::Pass
    };
    ComplianceReport {
        verdict,
        findings,
        hop_commitments,
    }
}
