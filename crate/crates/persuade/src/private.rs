//! Optimal private signaling.
//!
//! `solve_private` builds one LP over per-voter marginal recommendation
//! probabilities. For each state the probability that at least `K` of `n`
//! recommendation events can be made to occur simultaneously equals
//!
//! ```text
//! min { min_{m < K} (sum of the n-m smallest marginals) / (K - m) ; 1 }
//! ```
//!
//! and the LP encodes that min twice: over voters within a district, and over
//! districts for the whole election. `couple_marginals` realizes the bound
//! with an explicit coupling, and `exact_private_oracle` re-solves small
//! instances over full joint recommendation distributions for validation.

use crate::audit::{audit_private_marginals, PersuasivenessAudit};
use crate::election::ElectionInstance;
use crate::lp::{clamp_unit, solve_lp, LpDiagnostics, LpModel, LpStatus, Sense, VarId};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrivateError {
    #[error("LP backend failed: {0}")]
    Numerical(String),
    #[error("coverage requires 1 <= k <= n (k = {k}, n = {n})")]
    BadCoverageArgs { k: usize, n: usize },
    #[error("marginal probability {0} outside [0, 1]")]
    BadMarginal(f64),
    #[error("exact oracle supports at most {cap} voters, instance has {got}")]
    CapExceeded { cap: usize, got: usize },
}

/// Per-voter, per-state probability of recommending `C0` (voters in the
/// instance's global order).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivateMarginals {
    pub phi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrivateSolveReport {
    /// `sum_theta mu_theta alpha_theta`, the optimal winning probability.
    pub value: f64,
    /// Marginals after repair (`phi = 1` wherever the voter already favors `C0`).
    pub marginals: PrivateMarginals,
    /// `a_{d,theta}`: district win probability, indexed `[district][state]`.
    pub district_win_probs: Vec<Vec<f64>>,
    /// `alpha_theta`: election win probability per state.
    pub aggregate_win_probs: Vec<f64>,
    pub audit: PersuasivenessAudit,
    pub lp: LpDiagnostics,
}

/// Maximum probability that at least `k` of `n` events with the given
/// marginals occur simultaneously, over all couplings.
pub fn max_coverage_probability(probabilities: &[f64], k: usize) -> Result<f64, PrivateError> {
    let n = probabilities.len();
    if k == 0 || k > n {
        return Err(PrivateError::BadCoverageArgs { k, n });
    }
    for &p in probabilities {
        if !(-1e-9..=1.0 + 1e-9).contains(&p) || p.is_nan() {
            return Err(PrivateError::BadMarginal(p));
        }
    }
    let mut sorted: Vec<f64> = probabilities.iter().map(|p| p.clamp(0.0, 1.0)).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // prefix[j] = sum of the j smallest entries.
    let mut prefix = vec![0.0; n + 1];
    for (j, &p) in sorted.iter().enumerate() {
        prefix[j + 1] = prefix[j] + p;
    }
    let mut best = 1.0f64;
    for m in 0..k {
        best = best.min(prefix[n - m] / (k - m) as f64);
    }
    Ok(best.max(0.0))
}

/// A coupling of Bernoulli events that attains `max_coverage_probability`.
///
/// Let `a` be that maximum. Each event becomes a subset of the unit circle
/// with measure equal to its marginal: a piece of length `min(p_i, a)` laid
/// consecutively inside `[0, a)` with wrap-around modulo `a` (indices in
/// descending-marginal order), plus the excess `p_i - a`, if any, parked in
/// `[a, 1)`. Every point of `[0, a)` is then covered by at least `k` events
/// while at most `k - 1` events exceed `a`, so `Pr(|set| >= k) = a` exactly
/// and each index appears with probability exactly `p_i`.
#[derive(Debug, Clone)]
pub struct MarginalCoupling {
    coverage: f64,
    /// `(index, piece_start, piece_len, excess_len)` per event.
    arcs: Vec<(usize, f64, f64, f64)>,
}

impl MarginalCoupling {
    pub fn new(probabilities: &[f64], k: usize) -> Result<Self, PrivateError> {
        let coverage = max_coverage_probability(probabilities, k)?;
        let mut order: Vec<usize> = (0..probabilities.len()).collect();
        order.sort_by(|&i, &j| probabilities[j].partial_cmp(&probabilities[i]).unwrap());
        let mut arcs = Vec::with_capacity(order.len());
        let mut cursor = 0.0f64;
        for &i in &order {
            let p = probabilities[i].clamp(0.0, 1.0);
            let piece = p.min(coverage);
            let start = if coverage > 0.0 {
                cursor.rem_euclid(coverage)
            } else {
                0.0
            };
            arcs.push((i, start, piece, p - piece));
            cursor += piece;
        }
        Ok(Self { coverage, arcs })
    }

    /// `Pr(|select(u)| >= k)` under `u ~ Uniform[0, 1)`.
    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    /// Events realized at seed `u`, as ascending original indices.
    pub fn select(&self, u: f64) -> Vec<usize> {
        debug_assert!((0.0..1.0).contains(&u));
        let mut chosen = Vec::new();
        for &(index, start, piece, excess) in &self.arcs {
            let hit = if u < self.coverage {
                piece > 0.0 && (u - start).rem_euclid(self.coverage) < piece
            } else {
                u - self.coverage < excess
            };
            if hit {
                chosen.push(index);
            }
        }
        chosen.sort_unstable();
        chosen
    }
}

/// One-shot form of [`MarginalCoupling`]: the event subset realized at `u`.
pub fn couple_marginals(
    probabilities: &[f64],
    k: usize,
    u: f64,
) -> Result<Vec<usize>, PrivateError> {
    Ok(MarginalCoupling::new(probabilities, k)?.select(u))
}

/// Set `phi = 1` wherever the voter weakly favors `C0`. The repaired
/// marginals dominate the input, keep the `C0`-side incentive constraint and
/// gain the `C1`-side one (`C1` is then only recommended when optimal).
pub fn repair_marginals(
    instance: &ElectionInstance,
    marginals: &PrivateMarginals,
) -> PrivateMarginals {
    let phi = instance
        .voters()
        .zip(&marginals.phi)
        .map(|((_, voter), row)| {
            row.iter()
                .enumerate()
                .map(|(theta, &p)| {
                    if voter.net_utility(theta) >= 0.0 {
                        1.0
                    } else {
                        p.clamp(0.0, 1.0)
                    }
                })
                .collect()
        })
        .collect();
    PrivateMarginals { phi }
}

/// Encode `target <= (sum of the n-m smallest sources) / (k-m)` for every
/// `m < k`, via the dual of the smallest-entries selection LP: the sum of the
/// `w` smallest entries of `x` equals `max { w*t + sum_r z_r : z <= 0,
/// t + z_r <= x_r }`. The `z` multipliers must be nonpositive for the dual
/// bound to hold, hence their upper bound of 0.
pub(crate) fn add_min_formula(
    model: &mut LpModel,
    prefix: &str,
    target: VarId,
    k: usize,
    sources: &[VarId],
) {
    let n = sources.len();
    for m in 0..k {
        let sum = model.add_var(
            format!("{prefix}_v{m}"),
            f64::NEG_INFINITY,
            f64::INFINITY,
        );
        let offset = model.add_var(
            format!("{prefix}_t{m}"),
            f64::NEG_INFINITY,
            f64::INFINITY,
        );
        let z: Vec<VarId> = (0..n)
            .map(|r| model.add_var(format!("{prefix}_z{m}_{r}"), f64::NEG_INFINITY, 0.0))
            .collect();
        // (k-m) * target <= v_m
        model.add_constraint(
            format!("{prefix}_cap{m}"),
            vec![(target, (k - m) as f64), (sum, -1.0)],
            Sense::Le,
            0.0,
        );
        // v_m <= (n-m) t_m + sum_r z_{m,r}
        let mut terms = vec![(sum, 1.0), (offset, -((n - m) as f64))];
        for &zr in &z {
            terms.push((zr, -1.0));
        }
        model.add_constraint(format!("{prefix}_sum{m}"), terms, Sense::Le, 0.0);
        // t_m + z_{m,r} <= source_r
        for (r, &source) in sources.iter().enumerate() {
            model.add_constraint(
                format!("{prefix}_src{m}_{r}"),
                vec![(offset, 1.0), (z[r], 1.0), (source, -1.0)],
                Sense::Le,
                0.0,
            );
        }
    }
}

/// Optimal private signaling value and scheme marginals.
pub fn solve_private(instance: &ElectionInstance) -> Result<PrivateSolveReport, PrivateError> {
    let n_states = instance.n_states();
    let n_districts = instance.n_districts();
    let k_election = instance.election_threshold();
    let mut model = LpModel::new("private-dbe");

    let alpha: Vec<VarId> = (0..n_states)
        .map(|th| model.add_var(format!("alpha_{th}"), 0.0, 1.0))
        .collect();
    let a: Vec<Vec<VarId>> = (0..n_districts)
        .map(|d| {
            (0..n_states)
                .map(|th| model.add_var(format!("a_{d}_{th}"), 0.0, 1.0))
                .collect()
        })
        .collect();
    let phi: Vec<Vec<VarId>> = instance
        .voters()
        .enumerate()
        .map(|(r, _)| {
            (0..n_states)
                .map(|th| model.add_var(format!("phi_{r}_{th}"), 0.0, 1.0))
                .collect()
        })
        .collect();

    // Incentive constraints on the c0 recommendation.
    for (r, (_, voter)) in instance.voters().enumerate() {
        let terms: Vec<(VarId, f64)> = (0..n_states)
            .map(|th| (phi[r][th], instance.prior()[th] * voter.net_utility(th)))
            .collect();
        model.add_constraint(format!("incentive_{r}"), terms, Sense::Ge, 0.0);
    }

    for th in 0..n_states {
        // District level: a_{d,th} from the voters' marginals.
        for (d, a_row) in a.iter().enumerate() {
            let range = instance.district_range(d);
            let sources: Vec<VarId> = range.map(|r| phi[r][th]).collect();
            add_min_formula(
                &mut model,
                &format!("dist_{d}_{th}"),
                a_row[th],
                instance.district_threshold(d),
                &sources,
            );
        }
        // Election level: alpha_th from the district probabilities.
        let sources: Vec<VarId> = (0..n_districts).map(|d| a[d][th]).collect();
        add_min_formula(
            &mut model,
            &format!("agg_{th}"),
            alpha[th],
            k_election,
            &sources,
        );
    }

    let objective = (0..n_states)
        .map(|th| (alpha[th], instance.prior()[th]))
        .collect();
    model.set_objective(objective);

    let sol = solve_lp(&model);
    if sol.status != LpStatus::Optimal {
        return Err(PrivateError::Numerical(format!(
            "private LP ended {:?} ({})",
            sol.status, sol.diagnostics.status_raw
        )));
    }

    let raw = PrivateMarginals {
        phi: phi
            .iter()
            .map(|row| row.iter().map(|&v| sol.value(v)).collect())
            .collect(),
    };
    let marginals = repair_marginals(instance, &raw);
    let audit = audit_private_marginals(instance, &marginals);
    Ok(PrivateSolveReport {
        value: clamp_unit(sol.objective),
        marginals,
        district_win_probs: a
            .iter()
            .map(|row| row.iter().map(|&v| clamp_unit(sol.value(v))).collect())
            .collect(),
        aggregate_win_probs: alpha
            .iter()
            .map(|&v| clamp_unit(sol.value(v)))
            .collect(),
        audit,
        lp: sol.diagnostics,
    })
}

/// One realization of the joint private scheme at a given state.
#[derive(Debug, Clone)]
pub struct PrivateDraw {
    /// Recommended profile (the coupled recommendation events).
    pub profile: crate::election::VoteProfile,
    /// Which districts the outer coupling marked as winning.
    pub win_labels: Vec<bool>,
}

/// Sample the full joint scheme by two-level coupling: an outer uniform
/// couples district win labels through the circle coupling on `a_{d,theta}`,
/// then each district draws its voters' recommendation events conditioned on
/// the label. The voter coupling's at-least-`K_d` event is exactly the
/// initial segment `[0, coverage)` of its seed space, so conditioning is an
/// inverse map on the seed rather than rejection; when the LP leaves slack
/// (`a_d` below the attainable coverage) the excess winning seeds spill into
/// the lose branch, keeping every voter's marginal exact.
pub fn sample_private_profile(
    instance: &ElectionInstance,
    report: &PrivateSolveReport,
    theta: usize,
    u: f64,
    seed: u64,
) -> Result<PrivateDraw, PrivateError> {
    use crate::election::{Candidate, VoteProfile};
    use crate::rng::counter_uniform;

    let n_districts = instance.n_districts();
    let mut couplings = Vec::with_capacity(n_districts);
    let mut a_vec = Vec::with_capacity(n_districts);
    for d in 0..n_districts {
        let phis: Vec<f64> = instance
            .district_range(d)
            .map(|r| report.marginals.phi[r][theta])
            .collect();
        let coupling = MarginalCoupling::new(&phis, instance.district_threshold(d))?;
        // Repair only raises marginals, so the attainable coverage dominates
        // the LP's win probability up to solver tolerance.
        a_vec.push(report.district_win_probs[d][theta].min(coupling.coverage()));
        couplings.push(coupling);
    }
    let outer = MarginalCoupling::new(&a_vec, instance.election_threshold())?;
    let mut win_labels = vec![false; n_districts];
    for d in outer.select(u) {
        win_labels[d] = true;
    }

    let mut votes = vec![Candidate::C1; instance.n_voters()];
    for (d, coupling) in couplings.iter().enumerate() {
        let cov = coupling.coverage();
        let a_d = a_vec[d];
        let u_d = counter_uniform(&[seed, theta as u64, d as u64, u.to_bits()]);
        let u_inner = if win_labels[d] {
            // Win label: uniform over the winning seed region [0, cov).
            cov * u_d
        } else {
            // Lose label: leftover mixture of the excess winning seeds and
            // the losing region.
            let excess = if a_d < 1.0 { (cov - a_d) / (1.0 - a_d) } else { 0.0 };
            if u_d < excess {
                cov * (u_d / excess)
            } else if excess < 1.0 {
                cov + (1.0 - cov) * ((u_d - excess) / (1.0 - excess))
            } else {
                cov * u_d
            }
        };
        let start = instance.district_range(d).start;
        for i in coupling.select(u_inner.clamp(0.0, 1.0 - f64::EPSILON)) {
            votes[start + i] = Candidate::C0;
        }
    }
    Ok(PrivateDraw {
        profile: VoteProfile::new(votes),
        win_labels,
    })
}

const ORACLE_VOTER_CAP: usize = 14;

/// Exact optimum over full joint recommendation schemes: one simplex of
/// profile probabilities per state, both-sided incentive constraints, and the
/// unrelaxed election outcome in the objective. Exponential in voters, so
/// capped at 14.
pub fn exact_private_oracle(instance: &ElectionInstance) -> Result<f64, PrivateError> {
    let n = instance.n_voters();
    if n > ORACLE_VOTER_CAP {
        return Err(PrivateError::CapExceeded {
            cap: ORACLE_VOTER_CAP,
            got: n,
        });
    }
    let n_states = instance.n_states();
    let n_profiles = 1usize << n;

    // Bit r of a mask set = voter r votes c0; precompute district bit ranges.
    let district_masks: Vec<(u64, usize)> = (0..instance.n_districts())
        .map(|d| {
            let range = instance.district_range(d);
            let mask = ((1u64 << range.len()) - 1) << range.start;
            (mask, instance.district_threshold(d))
        })
        .collect();
    let k_election = instance.election_threshold();
    let wins = |mask: u64| -> bool {
        district_masks
            .iter()
            .filter(|(dm, kd)| ((mask & dm).count_ones() as usize) >= *kd)
            .count()
            >= k_election
    };

    let mut model = LpModel::new("private-oracle");
    let vars: Vec<Vec<VarId>> = (0..n_states)
        .map(|th| {
            (0..n_profiles)
                .map(|c| model.add_var(format!("phi_{th}_{c}"), 0.0, 1.0))
                .collect()
        })
        .collect();

    for (th, row) in vars.iter().enumerate() {
        let terms = row.iter().map(|&v| (v, 1.0)).collect();
        model.add_constraint(format!("simplex_{th}"), terms, Sense::Eq, 1.0);
    }
    for (r, (_, voter)) in instance.voters().enumerate() {
        let bit = 1u64 << r;
        let mut c0_terms = Vec::new();
        let mut c1_terms = Vec::new();
        for (th, row) in vars.iter().enumerate() {
            let weight = instance.prior()[th] * voter.net_utility(th);
            for (c, &var) in row.iter().enumerate() {
                if (c as u64) & bit != 0 {
                    c0_terms.push((var, weight));
                } else {
                    c1_terms.push((var, -weight));
                }
            }
        }
        model.add_constraint(format!("ic_c0_{r}"), c0_terms, Sense::Ge, 0.0);
        model.add_constraint(format!("ic_c1_{r}"), c1_terms, Sense::Ge, 0.0);
    }

    let mut objective = Vec::new();
    for (th, row) in vars.iter().enumerate() {
        let mu = instance.prior()[th];
        for (c, &var) in row.iter().enumerate() {
            if wins(c as u64) {
                objective.push((var, mu));
            }
        }
    }
    model.set_objective(objective);

    let sol = solve_lp(&model);
    if sol.status != LpStatus::Optimal {
        return Err(PrivateError::Numerical(format!(
            "oracle LP ended {:?} ({})",
            sol.status, sol.diagnostics.status_raw
        )));
    }
    Ok(clamp_unit(sol.objective))
}
