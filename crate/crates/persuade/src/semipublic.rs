//! Semi-public signaling: one posterior distribution per district.
//!
//! Each district gets its own Bayes-plausible distribution over q-uniform
//! posteriors; district win probabilities are bounded by the mass on
//! posteriors whose best response carries the (delta-relaxed) district, and
//! the cross-district aggregation reuses the same min-formula as the private
//! LP with the unrelaxed election threshold. `couple_district_schemes` turns
//! the LP quantities into one correlated scheme: an outer circle coupling
//! decides which districts win, inner conditional draws pick the posteriors.

use crate::audit::{audit_posterior_family, merge_audits, PersuasivenessAudit};
use crate::election::{eval_district, ElectionInstance, Posterior};
use crate::lp::{clamp_unit, solve_lp, LpDiagnostics, LpModel, LpStatus, Sense};
use crate::private::{add_min_formula, MarginalCoupling};
use crate::public::{enumerate_q_uniform_capped, PublicError, QGrid, DEFAULT_GRID_CAP};
use crate::rng::counter_uniform;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SemiPublicError {
    #[error(transparent)]
    Grid(#[from] PublicError),
    #[error("LP backend failed: {0}")]
    Numerical(String),
    #[error("state {0} has zero prior; conditional coupling is undefined")]
    ZeroPriorState(usize),
    #[error(
        "district {district}, state {state}: win probability {win_prob} exceeds \
         the winning posterior mass {winning_mass}"
    )]
    Inconsistent {
        district: usize,
        state: usize,
        win_prob: f64,
        winning_mass: f64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct SemiPublicScheme {
    pub epsilon: f64,
    pub delta: f64,
    /// `gamma^d`: weight per grid posterior, indexed `[district][grid index]`.
    pub per_district_gamma: Vec<Vec<f64>>,
    /// `a^delta_{d,theta}`, indexed `[district][state]`.
    pub district_win_probs: Vec<Vec<f64>>,
    /// `alpha_theta` per state.
    pub aggregate_win_probs: Vec<f64>,
    /// Whether the district's best response at a grid posterior wins the
    /// delta-relaxed district, indexed `[district][grid index]`.
    pub district_wins: Vec<Vec<bool>>,
    pub grid: QGrid,
}

#[derive(Debug, Clone, Serialize)]
pub struct SemiPublicSolveReport {
    pub value: f64,
    pub scheme: SemiPublicScheme,
    pub audit: PersuasivenessAudit,
    pub lp: LpDiagnostics,
}

/// District-level best response: votes of the district's voters only.
fn district_response(
    instance: &ElectionInstance,
    district: usize,
    posterior: &Posterior,
    epsilon: f64,
) -> Vec<crate::election::Candidate> {
    let profile = instance.best_response(posterior, epsilon);
    profile.votes()[instance.district_range(district)].to_vec()
}

pub fn solve_semipublic(
    instance: &ElectionInstance,
    q: u32,
    epsilon: f64,
    delta: f64,
) -> Result<SemiPublicSolveReport, SemiPublicError> {
    solve_semipublic_capped(instance, q, epsilon, delta, DEFAULT_GRID_CAP)
}

pub fn solve_semipublic_capped(
    instance: &ElectionInstance,
    q: u32,
    epsilon: f64,
    delta: f64,
    cap: usize,
) -> Result<SemiPublicSolveReport, SemiPublicError> {
    let n_states = instance.n_states();
    let n_districts = instance.n_districts();
    let grid = enumerate_q_uniform_capped(q, n_states, cap)?;

    // Indicator of W^d_delta(b^{p,eps}) = c0 per district and grid point.
    let district_wins: Vec<Vec<bool>> = (0..n_districts)
        .map(|d| {
            grid.posteriors()
                .iter()
                .map(|p| {
                    let votes = district_response(instance, d, p, epsilon);
                    eval_district(&votes, delta) == crate::election::Candidate::C0
                })
                .collect()
        })
        .collect();

    let mut model = LpModel::new("semipublic-dbe");
    let alpha: Vec<_> = (0..n_states)
        .map(|th| model.add_var(format!("alpha_{th}"), 0.0, 1.0))
        .collect();
    let a: Vec<Vec<_>> = (0..n_districts)
        .map(|d| {
            (0..n_states)
                .map(|th| model.add_var(format!("a_{d}_{th}"), 0.0, 1.0))
                .collect()
        })
        .collect();
    let gamma: Vec<Vec<_>> = (0..n_districts)
        .map(|d| {
            (0..grid.len())
                .map(|i| model.add_var(format!("gamma_{d}_{i}"), 0.0, 1.0))
                .collect::<Vec<_>>()
        })
        .collect();

    for (d, gamma_d) in gamma.iter().enumerate() {
        // gamma^d is a distribution.
        let simplex = gamma_d.iter().map(|&g| (g, 1.0)).collect();
        model.add_constraint(format!("simplex_{d}"), simplex, Sense::Eq, 1.0);
        for (th, &mu) in instance.prior().iter().enumerate() {
            if mu <= 0.0 {
                // Unreachable state: its Bayes and win-probability rows are
                // dropped; alpha_theta carries no objective weight there.
                continue;
            }
            // Bayes plausibility per district.
            let bayes = gamma_d
                .iter()
                .zip(grid.posteriors())
                .map(|(&g, p)| (g, p.probs()[th]))
                .collect();
            model.add_constraint(format!("bayes_{d}_{th}"), bayes, Sense::Eq, mu);
            // a^delta bounded by the winning posterior mass given the state.
            let mut terms = vec![(a[d][th], 1.0)];
            for (i, &g) in gamma_d.iter().enumerate() {
                if district_wins[d][i] {
                    terms.push((g, -grid.posteriors()[i].probs()[th] / mu));
                }
            }
            model.add_constraint(format!("win_{d}_{th}"), terms, Sense::Le, 0.0);
        }
    }

    // Aggregation with the unrelaxed election threshold.
    let k_election = instance.election_threshold();
    for th in 0..n_states {
        let sources: Vec<_> = (0..n_districts).map(|d| a[d][th]).collect();
        add_min_formula(&mut model, &format!("agg_{th}"), alpha[th], k_election, &sources);
    }

    model.set_objective(
        (0..n_states)
            .map(|th| (alpha[th], instance.prior()[th]))
            .collect(),
    );

    let sol = solve_lp(&model);
    if sol.status != LpStatus::Optimal {
        return Err(SemiPublicError::Numerical(format!(
            "semipublic LP ended {:?} ({})",
            sol.status, sol.diagnostics.status_raw
        )));
    }

    let per_district_gamma: Vec<Vec<f64>> = gamma
        .iter()
        .map(|row| row.iter().map(|&g| sol.value(g).max(0.0)).collect())
        .collect();
    let scheme = SemiPublicScheme {
        epsilon,
        delta,
        per_district_gamma,
        district_win_probs: a
            .iter()
            .map(|row| row.iter().map(|&v| clamp_unit(sol.value(v))).collect())
            .collect(),
        aggregate_win_probs: alpha
            .iter()
            .map(|&v| clamp_unit(sol.value(v)))
            .collect(),
        district_wins,
        grid,
    };

    let audits = (0..n_districts)
        .map(|d| {
            let supported: Vec<(f64, &Posterior)> = scheme.per_district_gamma[d]
                .iter()
                .zip(scheme.grid.posteriors())
                .filter(|(&g, _)| g > crate::public::SUPPORT_FLOOR)
                .map(|(&g, p)| (g, p))
                .collect();
            audit_posterior_family(instance, &supported, epsilon, &format!("district {d}"))
        })
        .collect();

    Ok(SemiPublicSolveReport {
        value: clamp_unit(sol.objective),
        scheme,
        audit: merge_audits(audits),
        lp: sol.diagnostics,
    })
}

/// One correlated realization of the semi-public scheme at state `theta`.
#[derive(Debug, Clone, Serialize)]
pub struct DistrictAssignment {
    /// Which districts the outer coupling marked as winning.
    pub win_labels: Vec<bool>,
    /// Grid index of the posterior sent to each district.
    pub posterior_index: Vec<usize>,
}

/// Sample the joint scheme: the outer uniform `u` couples district win
/// labels through the circle coupling on `a^delta_{d,theta}` (so the label
/// win-count hits at least `K_D` with exactly the aggregated probability),
/// then each district draws a posterior conditioned on its label. Auxiliary
/// uniforms derive from `(seed, theta, district, u)` via the counter mixer.
///
/// The marginal law of district `d`'s posterior under `theta` is exactly
/// `gamma^d_p p_theta / mu_theta`; when the LP leaves slack in the win
/// probability the excess winning mass spills into the lose branch.
pub fn couple_district_schemes(
    scheme: &SemiPublicScheme,
    instance: &ElectionInstance,
    theta: usize,
    u: f64,
    seed: u64,
) -> Result<DistrictAssignment, SemiPublicError> {
    let mu = instance.prior()[theta];
    if mu <= 0.0 {
        return Err(SemiPublicError::ZeroPriorState(theta));
    }
    let n_districts = instance.n_districts();

    // Posterior law per district conditioned on the state, and its winning
    // mass; the label probability is clamped to the attainable mass before
    // the outer coupling is built.
    let mut laws: Vec<Vec<f64>> = Vec::with_capacity(n_districts);
    let mut winning_masses = Vec::with_capacity(n_districts);
    let mut a_vec = Vec::with_capacity(n_districts);
    for d in 0..n_districts {
        let raw: Vec<f64> = scheme.per_district_gamma[d]
            .iter()
            .zip(scheme.grid.posteriors())
            .map(|(&g, p)| g * p.probs()[theta] / mu)
            .collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let winning_mass: f64 = w
            .iter()
            .enumerate()
            .filter(|(i, _)| scheme.district_wins[d][*i])
            .map(|(_, &x)| x)
            .sum();
        let a_d = scheme.district_win_probs[d][theta];
        if a_d > winning_mass + 1e-7 {
            return Err(SemiPublicError::Inconsistent {
                district: d,
                state: theta,
                win_prob: a_d,
                winning_mass,
            });
        }
        laws.push(w);
        winning_masses.push(winning_mass);
        a_vec.push(a_d.min(winning_mass));
    }

    let coupling = MarginalCoupling::new(&a_vec, instance.election_threshold())
        .map_err(|e| SemiPublicError::Numerical(e.to_string()))?;
    let mut win_labels = vec![false; n_districts];
    for d in coupling.select(u) {
        win_labels[d] = true;
    }

    let mut posterior_index = Vec::with_capacity(n_districts);
    for d in 0..n_districts {
        let w = &laws[d];
        let winning_mass = winning_masses[d];
        let a_d = a_vec[d];
        let u_d = counter_uniform(&[seed, theta as u64, d as u64, u.to_bits()]);
        let branch: Vec<f64> = if win_labels[d] {
            // Conditional on the win label: winning posteriors only.
            w.iter()
                .enumerate()
                .map(|(i, &x)| {
                    if scheme.district_wins[d][i] {
                        x / winning_mass
                    } else {
                        0.0
                    }
                })
                .collect()
        } else {
            // Lose branch: the leftover law, including any winning mass the
            // LP did not need.
            w.iter()
                .enumerate()
                .map(|(i, &x)| {
                    let used = if scheme.district_wins[d][i] && winning_mass > 0.0 {
                        x * a_d / winning_mass
                    } else {
                        0.0
                    };
                    (x - used) / (1.0 - a_d)
                })
                .collect()
        };
        posterior_index.push(draw_index(&branch, u_d));
    }
    Ok(DistrictAssignment {
        win_labels,
        posterior_index,
    })
}

fn draw_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}
