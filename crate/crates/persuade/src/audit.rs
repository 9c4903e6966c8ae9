//! Independent incentive re-checks for returned schemes.
//!
//! Every solver report embeds an audit computed from the scheme itself, not
//! from the LP that produced it. A scheme passes when no incentive constraint
//! is violated by more than `AUDIT_TOL` beyond its declared epsilon.

use crate::election::{Candidate, ElectionInstance, Posterior};
use crate::private::PrivateMarginals;
use serde::Serialize;

pub const AUDIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct PersuasivenessAudit {
    /// Declared slack the scheme is allowed (0 for exact persuasiveness).
    pub epsilon: f64,
    /// Largest incentive violation found, clamped at 0.
    pub max_violation: f64,
    pub pass: bool,
    /// Human-readable location of the worst violation, if any was positive.
    pub worst_site: Option<String>,
}

impl PersuasivenessAudit {
    fn from_violations(epsilon: f64, sites: Vec<(String, f64)>) -> Self {
        let (worst_site, max_violation) = sites
            .into_iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .map(|(site, v)| (Some(site), v.max(0.0)))
            .unwrap_or((None, 0.0));
        PersuasivenessAudit {
            epsilon,
            max_violation,
            pass: max_violation <= AUDIT_TOL,
            worst_site: if max_violation > 0.0 { worst_site } else { None },
        }
    }
}

/// Check both incentive directions of private marginals:
/// when recommended `c0`, following must be weakly optimal in prior-weighted
/// expectation, and symmetrically for `c1`.
pub fn audit_private_marginals(
    instance: &ElectionInstance,
    marginals: &PrivateMarginals,
) -> PersuasivenessAudit {
    let mut sites = Vec::new();
    for (r, (_, voter)) in instance.voters().enumerate() {
        let mut follow_c0 = 0.0;
        let mut follow_c1 = 0.0;
        for (theta, &mu) in instance.prior().iter().enumerate() {
            let phi = marginals.phi[r][theta];
            let net = voter.net_utility(theta);
            follow_c0 += mu * phi * net;
            follow_c1 += mu * (1.0 - phi) * (-net);
        }
        sites.push((format!("voter {} c0-side", voter.id), -follow_c0));
        sites.push((format!("voter {} c1-side", voter.id), -follow_c1));
    }
    PersuasivenessAudit::from_violations(0.0, sites)
}

/// Check a weighted family of posteriors: every voter asked to vote `c0` at a
/// supported posterior must have expected net utility at least `-epsilon`.
pub fn audit_posterior_family(
    instance: &ElectionInstance,
    posteriors: &[(f64, &Posterior)],
    epsilon: f64,
    label: &str,
) -> PersuasivenessAudit {
    let mut sites = Vec::new();
    for (idx, (weight, posterior)) in posteriors.iter().enumerate() {
        if *weight <= 0.0 {
            continue;
        }
        let profile = instance.best_response(posterior, epsilon);
        for ((_, voter), &vote) in instance.voters().zip(profile.votes()) {
            if vote == Candidate::C0 {
                let utility = instance.expected_net_utility(voter, posterior);
                sites.push((
                    format!("{label} posterior {idx} voter {}", voter.id),
                    -epsilon - utility,
                ));
            }
        }
    }
    PersuasivenessAudit::from_violations(epsilon, sites)
}

/// Merge per-district audits into one (used by the semi-public solver).
pub fn merge_audits(parts: Vec<PersuasivenessAudit>) -> PersuasivenessAudit {
    let epsilon = parts.first().map(|a| a.epsilon).unwrap_or(0.0);
    let worst = parts
        .into_iter()
        .max_by(|a, b| a.max_violation.partial_cmp(&b.max_violation).unwrap());
    match worst {
        Some(audit) => audit,
        None => PersuasivenessAudit {
            epsilon,
            max_violation: 0.0,
            pass: true,
            worst_site: None,
        },
    }
}
