//! Instance file format, instance generators and report serialization.
//!
//! Instances are JSON documents:
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "states": ["theta_A", "theta_B"],
//!   "prior": [0.5, 0.5],
//!   "districts": [
//!     {"id": "d1", "voters": [{"id": "r1", "u_c0": [1.0, 0.0], "u_c1": [0.0, 1.0]}]}
//!   ]
//! }
//! ```

use crate::election::{Candidate, District, ElectionInstance, RelaxationParams, Voter};
use crate::oracle::StabilityReport;
use crate::private::PrivateSolveReport;
use crate::public::{recover_direct_scheme, PublicError, PublicSolveReport};
use crate::semipublic::{couple_district_schemes, SemiPublicError, SemiPublicSolveReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    FormatVersion(u32),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    #[serde(default = "default_version")]
    format_version: u32,
    states: Vec<String>,
    prior: Vec<f64>,
    districts: Vec<DistrictFile>,
}

fn default_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Debug, Serialize, Deserialize)]
struct DistrictFile {
    id: String,
    voters: Vec<VoterFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VoterFile {
    id: String,
    u_c0: Vec<f64>,
    u_c1: Vec<f64>,
}

/// Parse an instance from JSON bytes; errors name the offending JSON path.
pub fn parse_instance(bytes: &[u8]) -> Result<ElectionInstance, ParseError> {
    let file: InstanceFile = serde_json::from_slice(bytes)?;
    if file.format_version != FORMAT_VERSION {
        return Err(ParseError::FormatVersion(file.format_version));
    }
    let n_states = file.states.len();
    if n_states == 0 {
        return Err(invalid("states", "must be nonempty"));
    }
    if file.prior.len() != n_states {
        return Err(invalid(
            "prior",
            format!("has {} entries, expected {}", file.prior.len(), n_states),
        ));
    }
    let sum: f64 = file.prior.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(invalid("prior", format!("sums to {sum}")));
    }
    if file.districts.is_empty() {
        return Err(invalid("districts", "must be nonempty"));
    }
    for (d, district) in file.districts.iter().enumerate() {
        if district.voters.is_empty() {
            return Err(invalid(format!("districts[{d}].voters"), "must be nonempty"));
        }
        for (v, voter) in district.voters.iter().enumerate() {
            for (field, vec) in [("u_c0", &voter.u_c0), ("u_c1", &voter.u_c1)] {
                let path = format!("districts[{d}].voters[{v}].{field}");
                if vec.len() != n_states {
                    return Err(invalid(
                        path,
                        format!("has {} entries, expected {}", vec.len(), n_states),
                    ));
                }
                if let Some(bad) = vec.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                    return Err(invalid(path, format!("utility {bad} outside [0, 1]")));
                }
            }
        }
    }
    let districts = file
        .districts
        .into_iter()
        .map(|d| District {
            id: d.id,
            voters: d
                .voters
                .into_iter()
                .map(|v| Voter {
                    id: v.id,
                    utility_c0: v.u_c0,
                    utility_c1: v.u_c1,
                })
                .collect(),
        })
        .collect();
    ElectionInstance::new(file.states, file.prior, districts)
        .map_err(|e| invalid("instance", e.to_string()))
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ParseError {
    ParseError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

/// Serialize an instance; floats use the shortest representation that parses
/// back bit-exactly, so `parse(serialize(x)) == x`.
pub fn serialize_instance(instance: &ElectionInstance) -> String {
    let file = InstanceFile {
        format_version: FORMAT_VERSION,
        states: instance.states().to_vec(),
        prior: instance.prior().to_vec(),
        districts: instance
            .districts()
            .iter()
            .map(|d| DistrictFile {
                id: d.id.clone(),
                voters: d
                    .voters
                    .iter()
                    .map(|v| VoterFile {
                        id: v.id.clone(),
                        u_c0: v.utility_c0.clone(),
                        u_c1: v.utility_c1.clone(),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("instance serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceFamily {
    UniformRandom,
    Example1,
    ThresholdAdversarial,
}

#[derive(Debug, Clone)]
pub struct GenerateSpec {
    pub family: InstanceFamily,
    pub n_states: usize,
    pub n_districts: usize,
    pub voters_per_district: usize,
    pub seed: u64,
}

/// Deterministic instance generator; `example1` ignores the dimensions.
pub fn generate_instance(spec: &GenerateSpec) -> ElectionInstance {
    match spec.family {
        InstanceFamily::Example1 => example1_instance(),
        InstanceFamily::UniformRandom => uniform_random(spec),
        InstanceFamily::ThresholdAdversarial => threshold_adversarial(spec),
    }
}

fn uniform_random(spec: &GenerateSpec) -> ElectionInstance {
    assert!(spec.n_states > 0 && spec.n_districts > 0 && spec.voters_per_district > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let states = (0..spec.n_states).map(|s| format!("s{s}")).collect();
    // Dirichlet(1) prior via normalized exponentials.
    let raw: Vec<f64> = (0..spec.n_states)
        .map(|_| -rng.gen::<f64>().max(1e-12).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    let prior: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let districts = (0..spec.n_districts)
        .map(|d| District {
            id: format!("d{d}"),
            voters: (0..spec.voters_per_district)
                .map(|v| Voter {
                    id: format!("d{d}v{v}"),
                    utility_c0: (0..spec.n_states).map(|_| rng.gen()).collect(),
                    utility_c1: (0..spec.n_states).map(|_| rng.gen()).collect(),
                })
                .collect(),
        })
        .collect();
    ElectionInstance::new(states, prior, districts).expect("generated instance is valid")
}

/// Every district is decided by a single swing voter: `K_d - 1` committed
/// supporters, `n - K_d` committed opponents, one voter with random
/// state-dependent leanings. Outcomes sit exactly at the majority threshold.
fn threshold_adversarial(spec: &GenerateSpec) -> ElectionInstance {
    assert!(spec.n_states > 0 && spec.n_districts > 0 && spec.voters_per_district > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let states = (0..spec.n_states).map(|s| format!("s{s}")).collect();
    let prior = vec![1.0 / spec.n_states as f64; spec.n_states];
    let n = spec.voters_per_district;
    let k = n.div_ceil(2);
    let districts = (0..spec.n_districts)
        .map(|d| {
            let mut voters = Vec::with_capacity(n);
            for v in 0..k - 1 {
                voters.push(Voter {
                    id: format!("d{d}sup{v}"),
                    utility_c0: vec![1.0; spec.n_states],
                    utility_c1: vec![0.0; spec.n_states],
                });
            }
            voters.push(Voter {
                id: format!("d{d}swing"),
                utility_c0: (0..spec.n_states)
                    .map(|_| if rng.gen::<bool>() { 0.9 } else { 0.1 })
                    .collect(),
                utility_c1: vec![0.5; spec.n_states],
            });
            for v in 0..n - k {
                voters.push(Voter {
                    id: format!("d{d}opp{v}"),
                    utility_c0: vec![0.0; spec.n_states],
                    utility_c1: vec![1.0; spec.n_states],
                });
            }
            District {
                id: format!("d{d}"),
                voters,
            }
        })
        .collect();
    ElectionInstance::new(states, prior, districts).expect("generated instance is valid")
}

fn votes_as_bits(votes: &[Candidate]) -> String {
    votes
        .iter()
        .map(|c| if *c == Candidate::C0 { '1' } else { '0' })
        .collect()
}

#[derive(Serialize)]
struct ReportEnvelope<T: Serialize> {
    format_version: u32,
    kind: &'static str,
    #[serde(flatten)]
    report: T,
}

fn envelope<T: Serialize>(kind: &'static str, report: &T) -> String {
    serde_json::to_string_pretty(&ReportEnvelope {
        format_version: FORMAT_VERSION,
        kind,
        report,
    })
    .expect("report serializes")
}

pub fn private_report_json(report: &PrivateSolveReport) -> String {
    envelope("private-solve-report", report)
}

/// Repaired marginals as CSV: one row per voter, one column per state.
pub fn private_marginals_csv(instance: &ElectionInstance, report: &PrivateSolveReport) -> String {
    let mut out = String::from("voter");
    for state in instance.states() {
        write!(out, ",{state}").unwrap();
    }
    out.push('\n');
    for ((_, voter), row) in instance.voters().zip(&report.marginals.phi) {
        write!(out, "{}", voter.id).unwrap();
        for phi in row {
            write!(out, ",{phi}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct PublicReportJson<'a> {
    value: f64,
    relax: RelaxationParams,
    grid_stats: &'a crate::public::GridStats,
    audit: &'a crate::audit::PersuasivenessAudit,
    lp: &'a crate::lp::LpDiagnostics,
    /// Supported posteriors: grid counts, weight and the induced profile
    /// (`1` = votes for the target candidate).
    support: Vec<PublicSupportEntry>,
}

#[derive(Serialize)]
struct PublicSupportEntry {
    counts: Vec<u32>,
    weight: f64,
    profile: String,
}

pub fn public_report_json(report: &PublicSolveReport) -> String {
    let scheme = &report.scheme;
    let support = scheme
        .support
        .iter()
        .zip(&scheme.responses)
        .map(|(&i, profile)| PublicSupportEntry {
            counts: scheme.grid.posteriors()[i].counts().unwrap().to_vec(),
            weight: scheme.gamma[i],
            profile: votes_as_bits(profile.votes()),
        })
        .collect();
    envelope(
        "public-solve-report",
        &PublicReportJson {
            value: report.value,
            relax: scheme.relax,
            grid_stats: &report.grid_stats,
            audit: &report.audit,
            lp: &report.lp,
            support,
        },
    )
}

/// Per-state signal tables: the direct scheme's recommended profiles.
pub fn public_signals_csv(
    instance: &ElectionInstance,
    report: &PublicSolveReport,
) -> Result<String, PublicError> {
    let direct = recover_direct_scheme(&report.scheme, instance)?;
    let mut out = String::from("state,profile,probability\n");
    for (theta, table) in direct.iter().enumerate() {
        for (profile, prob) in table {
            writeln!(
                out,
                "{},{},{prob}",
                instance.states()[theta],
                votes_as_bits(profile.votes())
            )
            .unwrap();
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct SemiPublicReportJson<'a> {
    value: f64,
    epsilon: f64,
    delta: f64,
    aggregate_win_probs: &'a [f64],
    district_win_probs: &'a [Vec<f64>],
    audit: &'a crate::audit::PersuasivenessAudit,
    lp: &'a crate::lp::LpDiagnostics,
    districts: Vec<SemiPublicDistrictJson>,
}

#[derive(Serialize)]
struct SemiPublicDistrictJson {
    id: String,
    support: Vec<PublicSupportEntry>,
}

pub fn semipublic_report_json(
    instance: &ElectionInstance,
    report: &SemiPublicSolveReport,
) -> String {
    let scheme = &report.scheme;
    let districts = instance
        .districts()
        .iter()
        .enumerate()
        .map(|(d, district)| SemiPublicDistrictJson {
            id: district.id.clone(),
            support: scheme.per_district_gamma[d]
                .iter()
                .enumerate()
                .filter(|(_, &g)| g > crate::public::SUPPORT_FLOOR)
                .map(|(i, &g)| {
                    let posterior = &scheme.grid.posteriors()[i];
                    let profile = instance.best_response(posterior, scheme.epsilon);
                    PublicSupportEntry {
                        counts: posterior.counts().unwrap().to_vec(),
                        weight: g,
                        profile: votes_as_bits(
                            &profile.votes()[instance.district_range(d)],
                        ),
                    }
                })
                .collect(),
        })
        .collect();
    envelope(
        "semipublic-solve-report",
        &SemiPublicReportJson {
            value: report.value,
            epsilon: scheme.epsilon,
            delta: scheme.delta,
            aggregate_win_probs: &scheme.aggregate_win_probs,
            district_win_probs: &scheme.district_win_probs,
            audit: &report.audit,
            lp: &report.lp,
            districts,
        },
    )
}

/// Simulation trace of the coupled semi-public scheme: states drawn from the
/// prior, posteriors from the coupling, votes from best responses.
pub fn semipublic_simulation_csv(
    instance: &ElectionInstance,
    report: &SemiPublicSolveReport,
    trials: u64,
    seed: u64,
) -> Result<String, SemiPublicError> {
    let scheme = &report.scheme;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("trial,state,posteriors,votes,label_wins,winner\n");
    for trial in 0..trials {
        let mut pick: f64 = rng.gen();
        let mut theta = 0;
        for (i, &mu) in instance.prior().iter().enumerate() {
            theta = i;
            if pick < mu {
                break;
            }
            pick -= mu;
        }
        let draw = couple_district_schemes(scheme, instance, theta, rng.gen(), seed)?;
        let mut votes = String::new();
        let mut won_districts = 0usize;
        let mut posteriors = String::new();
        for (d, &idx) in draw.posterior_index.iter().enumerate() {
            let posterior = &scheme.grid.posteriors()[idx];
            if d > 0 {
                posteriors.push(';');
            }
            let counts = posterior.counts().unwrap();
            write!(
                posteriors,
                "{}",
                counts
                    .iter()
                    .map(|n| n.to_string())
                    .collect::<Vec<_>>()
                    .join("/")
            )
            .unwrap();
            let response = instance.best_response(posterior, scheme.epsilon);
            let district_votes = &response.votes()[instance.district_range(d)];
            if crate::election::eval_district(district_votes, scheme.delta)
                == crate::election::Candidate::C0
            {
                won_districts += 1;
            }
            votes.push_str(&votes_as_bits(district_votes));
        }
        let winner = won_districts >= instance.election_threshold();
        writeln!(
            out,
            "{trial},{},{posteriors},{votes},{},{}",
            instance.states()[theta],
            draw.win_labels.iter().filter(|&&w| w).count(),
            u8::from(winner)
        )
        .unwrap();
    }
    Ok(out)
}

pub fn stability_report_json(report: &StabilityReport) -> String {
    envelope("stability-report", report)
}

/// One row per Monte-Carlo cell.
pub fn stability_cells_csv(report: &StabilityReport) -> String {
    let mut out = String::from("base,alpha,model,trials,mean,std_err,bound,violation\n");
    for cell in &report.cells {
        writeln!(
            out,
            "{},{},{:?},{},{},{},{},{}",
            cell.base_label,
            cell.alpha,
            cell.model,
            report.trials_per_cell,
            cell.mean,
            cell.std_err,
            cell.bound,
            u8::from(cell.violation)
        )
        .unwrap();
    }
    out
}

/// Net utilities of the seven-voter, three-state majority election used as a
/// golden instance: rows are voters r1..r7, columns states A, B, C.
pub const EXAMPLE1_NET_UTILITIES: [[f64; 3]; 7] = [
    [0.5, -1.0, -1.0],
    [0.5, -1.0, -1.0],
    [-1.0, 0.5, -1.0],
    [-1.0, 0.5, -1.0],
    [-1.0, -1.0, 0.5],
    [-1.0, -1.0, 0.5],
    [0.5, 0.5, 0.5],
];

/// The golden single-district instance. Candidate utilities lift the net
/// values with the fixed mapping `+1/2 -> (0.75, 0.25)` and `-1 -> (0, 1)`;
/// only net utilities enter any computation, so the lift is value-neutral.
pub fn example1_instance() -> ElectionInstance {
    let states = vec![
        "theta_A".to_string(),
        "theta_B".to_string(),
        "theta_C".to_string(),
    ];
    let prior = vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
    let voters = EXAMPLE1_NET_UTILITIES
        .iter()
        .enumerate()
        .map(|(i, nets)| {
            let mut u_c0 = Vec::with_capacity(3);
            let mut u_c1 = Vec::with_capacity(3);
            for &net in nets {
                if net == 0.5 {
                    u_c0.push(0.75);
                    u_c1.push(0.25);
                } else {
                    u_c0.push(0.0);
                    u_c1.push(1.0);
                }
            }
            Voter {
                id: format!("r{}", i + 1),
                utility_c0: u_c0,
                utility_c1: u_c1,
            }
        })
        .collect();
    ElectionInstance::new(
        states,
        prior,
        vec![District {
            id: "d1".to_string(),
            voters,
        }],
    )
    .expect("golden instance is valid")
}
