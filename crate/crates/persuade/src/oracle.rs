//! Validation oracles and stability checks.
//!
//! The public oracle computes the exact optimal persuasive public value for
//! up to three states by concavifying over the vertices of the arrangement
//! of voter-indifference hyperplanes inside the belief simplex: the sender's
//! value is piecewise constant on arrangement cells, weakly higher on cell
//! boundaries under sender-preferred tie-breaking, and vote-monotone, so an
//! optimal posterior distribution supported on vertices exists.
//!
//! The stability lab estimates `E[g(noisy)] >= h(base) (1 - alpha beta)` over
//! seeded perturbation families and reports any violation beyond three
//! standard errors, including a deliberately falsifiable negative control.

use crate::election::{
    Candidate, ElectionInstance, Posterior, RelaxationParams, VoteProfile,
};
use crate::lp::{clamp_unit, solve_lp, LpModel, LpStatus, Sense};
use crate::public::decompose_posterior;
use crate::rng::mix_key;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

const ORACLE_STATE_CAP: usize = 3;
const ORACLE_VOTER_CAP: usize = 24;
const VERTEX_DEDUP_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("public oracle supports at most {cap} states, instance has {got}")]
    StateCap { cap: usize, got: usize },
    #[error("public oracle supports at most {cap} voters, instance has {got}")]
    VoterCap { cap: usize, got: usize },
    #[error("LP backend failed: {0}")]
    Numerical(String),
    #[error("alpha must lie in [0, 1] (got {0})")]
    BadAlpha(f64),
    #[error("distribution has no explicit support")]
    NoSupport,
}

/// Vertices of the voter-indifference arrangement restricted to the simplex:
/// simplex corners, hyperplane/facet and hyperplane/hyperplane intersections.
pub fn arrangement_vertices(instance: &ElectionInstance) -> Result<Vec<Posterior>, OracleError> {
    let n_states = instance.n_states();
    if n_states > ORACLE_STATE_CAP {
        return Err(OracleError::StateCap {
            cap: ORACLE_STATE_CAP,
            got: n_states,
        });
    }
    if instance.n_voters() > ORACLE_VOTER_CAP {
        return Err(OracleError::VoterCap {
            cap: ORACLE_VOTER_CAP,
            got: instance.n_voters(),
        });
    }
    let nets: Vec<Vec<f64>> = instance
        .voters()
        .map(|(_, v)| (0..n_states).map(|th| v.net_utility(th)).collect())
        .collect();

    let mut points: Vec<Vec<f64>> = Vec::new();
    match n_states {
        1 => points.push(vec![1.0]),
        2 => {
            points.push(vec![0.0, 1.0]);
            points.push(vec![1.0, 0.0]);
            for u in &nets {
                // x u0 + (1-x) u1 = 0
                let denom = u[1] - u[0];
                if denom.abs() > 1e-12 {
                    let x = u[1] / denom;
                    if (-1e-9..=1.0 + 1e-9).contains(&x) {
                        let x = x.clamp(0.0, 1.0);
                        points.push(vec![x, 1.0 - x]);
                    }
                }
            }
        }
        3 => {
            // Lines: voter hyperplanes u.p = 0 and facets p_theta = 0, all
            // intersected with the affine hull 1.p = 1.
            let mut lines: Vec<[f64; 3]> = Vec::new();
            for u in &nets {
                lines.push([u[0], u[1], u[2]]);
            }
            lines.push([1.0, 0.0, 0.0]);
            lines.push([0.0, 1.0, 0.0]);
            lines.push([0.0, 0.0, 1.0]);
            for i in 0..lines.len() {
                for j in i + 1..lines.len() {
                    if let Some(p) = intersect_on_simplex(&lines[i], &lines[j]) {
                        points.push(p);
                    }
                }
            }
            // Corners are facet-facet intersections and always present, but
            // add them explicitly in case of degenerate voter rows.
            for theta in 0..3 {
                let mut corner = vec![0.0; 3];
                corner[theta] = 1.0;
                points.push(corner);
            }
        }
        _ => unreachable!("state cap enforced above"),
    }

    let mut vertices: Vec<Vec<f64>> = Vec::new();
    'outer: for p in points {
        for existing in &vertices {
            let dist: f64 = existing
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if dist <= VERTEX_DEDUP_TOL {
                continue 'outer;
            }
        }
        vertices.push(p);
    }
    Ok(vertices
        .into_iter()
        .map(|p| Posterior::new(p).expect("vertex lies on the simplex"))
        .collect())
}

/// Solve rows `a.p = 0`, `b.p = 0`, `1.p = 1`; keep solutions inside the
/// simplex (clamping out float dust).
fn intersect_on_simplex(a: &[f64; 3], b: &[f64; 3]) -> Option<Vec<f64>> {
    let m = [[a[0], a[1], a[2]], [b[0], b[1], b[2]], [1.0, 1.0, 1.0]];
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-12 {
        return None;
    }
    // Cramer's rule with rhs (0, 0, 1).
    let minors = [
        m[0][1] * m[1][2] - m[0][2] * m[1][1],
        m[0][0] * m[1][2] - m[0][2] * m[1][0],
        m[0][0] * m[1][1] - m[0][1] * m[1][0],
    ];
    let p = [minors[0] / det, -minors[1] / det, minors[2] / det];
    if p.iter().any(|&x| !(-1e-9..=1.0 + 1e-9).contains(&x)) {
        return None;
    }
    let clamped: Vec<f64> = p.iter().map(|&x| x.clamp(0.0, 1.0)).collect();
    let sum: f64 = clamped.iter().sum();
    Some(clamped.into_iter().map(|x| x / sum).collect())
}

/// Exact optimal persuasive public value for small state spaces.
pub fn exact_public_oracle(instance: &ElectionInstance) -> Result<f64, OracleError> {
    let vertices = arrangement_vertices(instance)?;
    let exact = RelaxationParams::exact();
    let values: Vec<f64> = vertices
        .iter()
        .map(|p| instance.posterior_value(p, &exact))
        .collect();

    let mut model = LpModel::new("public-oracle");
    let gamma: Vec<_> = (0..vertices.len())
        .map(|i| model.add_var(format!("gamma_{i}"), 0.0, 1.0))
        .collect();
    for (theta, &mu) in instance.prior().iter().enumerate() {
        let terms = gamma
            .iter()
            .zip(&vertices)
            .map(|(&g, v)| (g, v.probs()[theta]))
            .collect();
        model.add_constraint(format!("bayes_{theta}"), terms, Sense::Eq, mu);
    }
    model.set_objective(gamma.iter().zip(&values).map(|(&g, &v)| (g, v)).collect());
    let sol = solve_lp(&model);
    if sol.status != LpStatus::Optimal {
        return Err(OracleError::Numerical(format!(
            "oracle LP ended {:?} ({})",
            sol.status, sol.diagnostics.status_raw
        )));
    }
    Ok(clamp_unit(sol.objective))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationModel {
    /// Each voter deviates independently with probability alpha.
    Independent,
    /// One shared coin flips every voter at once.
    CommonCause,
    /// Two-point support concentrating all corruption on the base's
    /// c0-voters: with mass alpha they all defect to c1.
    AdversarialMass,
}

/// An alpha-noisy distribution around a base profile: every voter deviates
/// with marginal probability at most alpha.
#[derive(Debug, Clone)]
pub struct NoisyDistribution {
    pub base: VoteProfile,
    pub alpha: f64,
    pub model: CorrelationModel,
    /// Explicit support, present for finitely supported models.
    pub support: Option<Vec<(VoteProfile, f64)>>,
}

impl NoisyDistribution {
    pub fn new(
        base: VoteProfile,
        alpha: f64,
        model: CorrelationModel,
    ) -> Result<Self, OracleError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(OracleError::BadAlpha(alpha));
        }
        let support = match model {
            CorrelationModel::AdversarialMass => {
                let mut corrupted = base.clone();
                for vote in corrupted.votes_mut() {
                    if *vote == Candidate::C0 {
                        *vote = Candidate::C1;
                    }
                }
                Some(vec![(corrupted, alpha), (base.clone(), 1.0 - alpha)])
            }
            _ => None,
        };
        Ok(Self {
            base,
            alpha,
            model,
            support,
        })
    }

    pub fn from_support(
        base: VoteProfile,
        alpha: f64,
        support: Vec<(VoteProfile, f64)>,
    ) -> Result<Self, OracleError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(OracleError::BadAlpha(alpha));
        }
        Ok(Self {
            base,
            alpha,
            model: CorrelationModel::AdversarialMass,
            support: Some(support),
        })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> VoteProfile {
        if let Some(support) = &self.support {
            let mut u: f64 = rng.gen();
            for (profile, mass) in support {
                if u < *mass {
                    return profile.clone();
                }
                u -= mass;
            }
            return support.last().expect("nonempty support").0.clone();
        }
        let mut profile = self.base.clone();
        match self.model {
            CorrelationModel::Independent => {
                for vote in profile.votes_mut() {
                    if rng.gen::<f64>() < self.alpha {
                        *vote = flip(*vote);
                    }
                }
            }
            CorrelationModel::CommonCause => {
                if rng.gen::<f64>() < self.alpha {
                    for vote in profile.votes_mut() {
                        *vote = flip(*vote);
                    }
                }
            }
            CorrelationModel::AdversarialMass => unreachable!("has explicit support"),
        }
        profile
    }
}

fn flip(c: Candidate) -> Candidate {
    match c {
        Candidate::C0 => Candidate::C1,
        Candidate::C1 => Candidate::C0,
    }
}

/// Seeded stream of perturbed profiles.
pub fn sample_alpha_noisy(
    base: &VoteProfile,
    alpha: f64,
    model: CorrelationModel,
    seed: u64,
    trials: u64,
) -> Result<impl Iterator<Item = VoteProfile>, OracleError> {
    let dist = NoisyDistribution::new(base.clone(), alpha, model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..trials).map(move |_| dist.sample(&mut rng)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelaxedRule {
    /// Districts relaxed, aggregation exact.
    WDelta,
    /// Both levels relaxed.
    WDeltaDelta,
}

impl RelaxedRule {
    pub fn relax(&self, delta: f64) -> RelaxationParams {
        match self {
            RelaxedRule::WDelta => RelaxationParams {
                delta_district: delta,
                delta_aggregate: 0.0,
                epsilon: 0.0,
            },
            RelaxedRule::WDeltaDelta => RelaxationParams {
                delta_district: delta,
                delta_aggregate: delta,
                epsilon: 0.0,
            },
        }
    }
}

/// The unrelaxed baseline the relaxed rules are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BaselineRule {
    W,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityCell {
    pub base_label: String,
    pub alpha: f64,
    pub model: CorrelationModel,
    pub mean: f64,
    pub std_err: f64,
    /// `(1 - alpha beta) h(base)`.
    pub bound: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub g: RelaxedRule,
    pub delta: f64,
    pub beta: f64,
    pub trials_per_cell: u64,
    pub seed: u64,
    /// Monte-Carlo evidence only: three perturbation families are sampled,
    /// not the full space of alpha-noisy distributions.
    pub families: Vec<CorrelationModel>,
    pub cells: Vec<StabilityCell>,
    pub violation_count: usize,
    /// Smallest observed `E[g] / h(base)` over all cells.
    pub worst_ratio: f64,
    pub skipped_vacuous_bases: usize,
}

/// Base profiles for stability runs: seeded random winners plus one
/// threshold-critical winner (exactly `K_D` districts at exactly `K_d`
/// votes), on which every c0 voter is pivotal.
pub fn stability_bases(
    instance: &ElectionInstance,
    seed: u64,
    random_count: usize,
) -> Vec<(String, VoteProfile)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exact = RelaxationParams::exact();
    let mut bases = vec![(
        "threshold-critical".to_string(),
        threshold_critical_base(instance),
    )];
    let mut found = 0;
    let mut attempts = 0;
    while found < random_count && attempts < 10_000 {
        attempts += 1;
        let votes = (0..instance.n_voters())
            .map(|_| {
                if rng.gen::<bool>() {
                    Candidate::C0
                } else {
                    Candidate::C1
                }
            })
            .collect();
        let profile = VoteProfile::new(votes);
        if instance.eval_election(&profile, &exact).unwrap() {
            bases.push((format!("random-{found}"), profile));
            found += 1;
        }
    }
    bases
}

/// Exactly `K_D` districts win, each with exactly `K_d` c0 votes.
pub fn threshold_critical_base(instance: &ElectionInstance) -> VoteProfile {
    let k_election = instance.election_threshold();
    let mut votes = vec![Candidate::C1; instance.n_voters()];
    for d in 0..k_election {
        let range = instance.district_range(d);
        let k_d = instance.district_threshold(d);
        for r in range.take(k_d) {
            votes[r] = Candidate::C0;
        }
    }
    VoteProfile::new(votes)
}

/// Estimate the comparative-stability inequality on sampled bases and
/// perturbation families. Bases where the baseline loses are vacuous and
/// skipped. A cell violates when the sample mean undercuts the bound by more
/// than three standard errors.
#[allow(clippy::too_many_arguments)]
pub fn check_comparative_stability(
    instance: &ElectionInstance,
    g: RelaxedRule,
    _h: BaselineRule,
    delta: f64,
    beta: f64,
    alphas: &[f64],
    trials: u64,
    seed: u64,
) -> StabilityReport {
    let families = [
        CorrelationModel::Independent,
        CorrelationModel::CommonCause,
        CorrelationModel::AdversarialMass,
    ];
    let bases = stability_bases(instance, seed, 3);
    run_stability(instance, g, delta, beta, alphas, trials, seed, &families, &bases)
}

/// Falsifiable configuration: beta an order of magnitude below the proven
/// constant, adversarial mass aimed at a threshold-critical base. A healthy
/// harness must report violations here (for delta > 0.1).
pub fn negative_control(
    instance: &ElectionInstance,
    delta: f64,
    alphas: &[f64],
    trials: u64,
    seed: u64,
) -> StabilityReport {
    let bases = vec![(
        "threshold-critical".to_string(),
        threshold_critical_base(instance),
    )];
    run_stability(
        instance,
        RelaxedRule::WDelta,
        delta,
        0.1 / delta,
        alphas,
        trials,
        seed,
        &[CorrelationModel::AdversarialMass],
        &bases,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_stability(
    instance: &ElectionInstance,
    g: RelaxedRule,
    delta: f64,
    beta: f64,
    alphas: &[f64],
    trials: u64,
    seed: u64,
    families: &[CorrelationModel],
    bases: &[(String, VoteProfile)],
) -> StabilityReport {
    let exact = RelaxationParams::exact();
    let relax = g.relax(delta);
    let mut skipped = 0usize;
    let mut jobs = Vec::new();
    for (label, base) in bases {
        if !instance.eval_election(base, &exact).unwrap() {
            skipped += 1;
            continue;
        }
        for &alpha in alphas {
            for &model in families {
                jobs.push((label.clone(), base.clone(), alpha, model));
            }
        }
    }

    let cells: Vec<StabilityCell> = jobs
        .into_par_iter()
        .enumerate()
        .map(|(job, (base_label, base, alpha, model))| {
            let cell_seed = mix_key(&[seed, job as u64, alpha.to_bits(), model as u64]);
            let dist = NoisyDistribution::new(base, alpha, model).expect("alpha validated");
            let mut rng = ChaCha8Rng::seed_from_u64(cell_seed);
            let mut wins = 0u64;
            for _ in 0..trials {
                let perturbed = dist.sample(&mut rng);
                if instance.eval_election(&perturbed, &relax).unwrap() {
                    wins += 1;
                }
            }
            let mean = wins as f64 / trials as f64;
            let std_err = (mean * (1.0 - mean) / trials as f64).sqrt();
            let bound = 1.0 - alpha * beta;
            StabilityCell {
                base_label,
                alpha,
                model,
                mean,
                std_err,
                bound,
                violation: mean < bound - 3.0 * std_err,
            }
        })
        .collect();

    let violation_count = cells.iter().filter(|c| c.violation).count();
    let worst_ratio = cells.iter().map(|c| c.mean).fold(1.0, f64::min);
    StabilityReport {
        g,
        delta,
        beta,
        trials_per_cell: trials,
        seed,
        families: families.to_vec(),
        cells,
        violation_count,
        worst_ratio,
        skipped_vacuous_bases: skipped,
    }
}

/// Rewrite a finitely supported perturbation so that no profile grants c0 a
/// vote the base did not have: each profile's c0-set is intersected with the
/// base's and masses merged. Mass is conserved, `E[W_delta]` cannot
/// increase, and the one-sided corruption probabilities
/// `Pr(y_r = c1 and base_r = c0)` are untouched.
pub fn algorithm1_transform(
    dist: &NoisyDistribution,
    base: &VoteProfile,
) -> Result<NoisyDistribution, OracleError> {
    let support = dist.support.as_ref().ok_or(OracleError::NoSupport)?;
    let mut merged: Vec<(VoteProfile, f64)> = Vec::new();
    for (profile, mass) in support {
        let votes = profile
            .votes()
            .iter()
            .zip(base.votes())
            .map(|(&c, &b)| {
                if c == Candidate::C0 && b == Candidate::C0 {
                    Candidate::C0
                } else {
                    Candidate::C1
                }
            })
            .collect();
        let intersected = VoteProfile::new(votes);
        match merged.iter_mut().find(|(p, _)| *p == intersected) {
            Some((_, w)) => *w += mass,
            None => merged.push((intersected, *mass)),
        }
    }
    NoisyDistribution::from_support(dist.base.clone(), dist.alpha, merged)
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma4Record {
    pub q: u32,
    pub eta: f64,
    pub delta: f64,
    pub epsilon: f64,
    /// `sum_p gamma_p p_theta W_delta(b^{p,eps})` per state.
    pub lhs: Vec<f64>,
    /// `(1 - eta) p*_theta W(b^{p*})` per state.
    pub rhs: Vec<f64>,
    pub holds: bool,
}

/// Per-state decomposition guarantee: check that decomposing `p_star` into
/// q-uniform posteriors loses at most an `eta` fraction of the relaxed value
/// in every state. Asserted only where the theoretical `q` is enumerable;
/// elsewhere reported.
pub fn lemma4_decomposition_check(
    instance: &ElectionInstance,
    p_star: &Posterior,
    q: u32,
    eta: f64,
    delta: f64,
    epsilon: f64,
) -> Result<Lemma4Record, OracleError> {
    let decomposition = decompose_posterior(p_star, q)
        .map_err(|e| OracleError::Numerical(e.to_string()))?;
    let relax = RelaxationParams {
        delta_district: delta,
        delta_aggregate: 0.0,
        epsilon,
    };
    let base_wins = instance.posterior_value(p_star, &RelaxationParams::exact());
    let mut lhs = vec![0.0; instance.n_states()];
    for (posterior, weight) in decomposition.posteriors() {
        let value = instance.posterior_value(&posterior, &relax);
        for (theta, l) in lhs.iter_mut().enumerate() {
            *l += weight * posterior.probs()[theta] * value;
        }
    }
    let rhs: Vec<f64> = p_star
        .probs()
        .iter()
        .map(|&p| (1.0 - eta) * p * base_wins)
        .collect();
    let holds = lhs
        .iter()
        .zip(&rhs)
        .all(|(l, r)| *l >= *r - 1e-9);
    Ok(Lemma4Record {
        q,
        eta,
        delta,
        epsilon,
        lhs,
        rhs,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::election::{District, ElectionInstance, Voter};
    use crate::io::example1_instance;

    fn single_voter_inst() -> ElectionInstance {
        ElectionInstance::new(
            vec!["s0".into(), "s1".into()],
            vec![0.3, 0.7],
            vec![District {
                id: "d".into(),
                voters: vec![Voter {
                    id: "v".into(),
                    utility_c0: vec![1.0, 0.0],
                    utility_c1: vec![0.0, 1.0],
                }],
            }],
        )
        .unwrap()
    }

    #[test]
    fn oracle_single_voter_concavification() {
        let value = exact_public_oracle(&single_voter_inst()).unwrap();
        assert!((value - 0.6).abs() < 1e-9, "oracle {value}");
    }

    #[test]
    fn oracle_example1_is_zero() {
        let value = exact_public_oracle(&example1_instance()).unwrap();
        assert!(value.abs() < 1e-9, "oracle {value}");
    }

    #[test]
    fn oracle_winning_prior_is_one() {
        let inst = ElectionInstance::new(
            vec!["s0".into(), "s1".into()],
            vec![0.5, 0.5],
            vec![District {
                id: "d".into(),
                voters: vec![Voter {
                    id: "v".into(),
                    utility_c0: vec![1.0, 1.0],
                    utility_c1: vec![0.0, 0.0],
                }],
            }],
        )
        .unwrap();
        let value = exact_public_oracle(&inst).unwrap();
        assert!((value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn oracle_enforces_caps() {
        let voters = (0..25)
            .map(|i| Voter {
                id: format!("v{i}"),
                utility_c0: vec![1.0],
                utility_c1: vec![0.0],
            })
            .collect();
        let inst = ElectionInstance::new(
            vec!["s".into()],
            vec![1.0],
            vec![District {
                id: "d".into(),
                voters,
            }],
        )
        .unwrap();
        assert!(matches!(
            exact_public_oracle(&inst),
            Err(OracleError::VoterCap { .. })
        ));
    }

    #[test]
    fn noisy_zero_alpha_is_degenerate() {
        let base = VoteProfile::new(vec![Candidate::C0, Candidate::C1]);
        for model in [
            CorrelationModel::Independent,
            CorrelationModel::CommonCause,
            CorrelationModel::AdversarialMass,
        ] {
            for profile in sample_alpha_noisy(&base, 0.0, model, 5, 50).unwrap() {
                assert_eq!(profile, base);
            }
        }
    }

    #[test]
    fn noisy_independent_flip_rate() {
        let base = VoteProfile::new(vec![Candidate::C0; 4]);
        let trials = 100_000u64;
        let mut flips = vec![0u64; 4];
        for profile in
            sample_alpha_noisy(&base, 0.5, CorrelationModel::Independent, 11, trials).unwrap()
        {
            for (r, (&c, &b)) in profile.votes().iter().zip(base.votes()).enumerate() {
                if c != b {
                    flips[r] += 1;
                }
            }
        }
        for &f in &flips {
            let rate = f as f64 / trials as f64;
            // 4 sigma for a fair coin over 1e5 trials (four voters tested).
            assert!((rate - 0.5).abs() < 0.0064, "rate {rate}");
        }
    }

    #[test]
    fn adversarial_mass_targets_c0_voters() {
        let base = VoteProfile::new(vec![Candidate::C0, Candidate::C1, Candidate::C0]);
        let dist = NoisyDistribution::new(base.clone(), 0.25, CorrelationModel::AdversarialMass)
            .unwrap();
        let support = dist.support.as_ref().unwrap();
        assert_eq!(support.len(), 2);
        assert_eq!(support[0].1, 0.25);
        assert!(support[0].0.c0_voters().is_empty());
        assert_eq!(support[1].0, base);
    }

    #[test]
    fn algorithm1_base_all_c0_is_identity() {
        let base = VoteProfile::new(vec![Candidate::C0; 3]);
        let dist =
            NoisyDistribution::new(base.clone(), 0.3, CorrelationModel::AdversarialMass).unwrap();
        let out = algorithm1_transform(&dist, &base).unwrap();
        assert_eq!(out.support.unwrap(), dist.support.unwrap());
    }

    #[test]
    fn algorithm1_strips_spurious_votes_and_merges() {
        let base = VoteProfile::new(vec![Candidate::C0, Candidate::C1, Candidate::C1]);
        // Two profiles that both intersect to the base itself.
        let spurious1 = VoteProfile::new(vec![Candidate::C0, Candidate::C0, Candidate::C1]);
        let spurious2 = VoteProfile::new(vec![Candidate::C0, Candidate::C1, Candidate::C0]);
        let dist = NoisyDistribution::from_support(
            base.clone(),
            0.5,
            vec![(spurious1, 0.25), (spurious2, 0.35), (base.clone(), 0.4)],
        )
        .unwrap();
        let out = algorithm1_transform(&dist, &base).unwrap();
        let support = out.support.unwrap();
        assert_eq!(support.len(), 1);
        assert_eq!(support[0].0, base);
        assert!((support[0].1 - 1.0).abs() < 1e-12);
        // No supported profile may give c0 a voter outside the base's set.
        for (profile, _) in &support {
            for (&c, &b) in profile.votes().iter().zip(base.votes()) {
                assert!(!(c == Candidate::C0 && b == Candidate::C1));
            }
        }
    }

    #[test]
    fn algorithm1_never_increases_relaxed_value() {
        // Four-voter district: enumerate a support with spurious c0 votes
        // and compare E[W_delta] before and after the transform directly.
        let voters = (0..4)
            .map(|i| Voter {
                id: format!("v{i}"),
                utility_c0: vec![0.5],
                utility_c1: vec![0.5],
            })
            .collect();
        let inst = ElectionInstance::new(
            vec!["s".into()],
            vec![1.0],
            vec![District {
                id: "d".into(),
                voters,
            }],
        )
        .unwrap();
        let relax = crate::election::RelaxationParams::new(0.4, 0.0, 0.0).unwrap();
        let base = VoteProfile::new(vec![
            Candidate::C0,
            Candidate::C0,
            Candidate::C1,
            Candidate::C1,
        ]);
        let with_spurious = VoteProfile::new(vec![
            Candidate::C1,
            Candidate::C1,
            Candidate::C0,
            Candidate::C0,
        ]);
        let partial = VoteProfile::new(vec![
            Candidate::C0,
            Candidate::C1,
            Candidate::C0,
            Candidate::C1,
        ]);
        let dist = NoisyDistribution::from_support(
            base.clone(),
            0.6,
            vec![(with_spurious, 0.3), (partial, 0.3), (base.clone(), 0.4)],
        )
        .unwrap();
        let expected = |d: &NoisyDistribution| -> f64 {
            d.support
                .as_ref()
                .unwrap()
                .iter()
                .map(|(profile, mass)| {
                    mass * f64::from(u8::from(inst.eval_election(profile, &relax).unwrap()))
                })
                .sum()
        };
        let before = expected(&dist);
        let out = algorithm1_transform(&dist, &base).unwrap();
        let after = expected(&out);
        // Mass conserved exactly.
        let total: f64 = out.support.as_ref().unwrap().iter().map(|(_, m)| m).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(after <= before + 1e-12, "after {after} before {before}");
        // One-sided corruption preserved per voter.
        for r in base.c0_voters() {
            let mass = |d: &NoisyDistribution| -> f64 {
                d.support
                    .as_ref()
                    .unwrap()
                    .iter()
                    .filter(|(p, _)| p.votes()[r] == Candidate::C1)
                    .map(|(_, m)| m)
                    .sum()
            };
            assert!((mass(&dist) - mass(&out)).abs() < 1e-12);
        }
    }

    #[test]
    fn lemma4_desk_scale_is_reported_not_asserted() {
        // At desk-scale parameters the theoretical grid bound is far beyond
        // any enumerable q, so the record is informational.
        let inst = example1_instance();
        let q_needed = crate::public::theoretical_q(0.3, 1.0 / 0.3, 0.05);
        assert!(q_needed > 16.0);
        let p_star = Posterior::new(vec![0.4, 0.35, 0.25]).unwrap();
        let record = lemma4_decomposition_check(&inst, &p_star, 8, 0.3, 0.3, 0.05).unwrap();
        println!(
            "lemma4 desk-scale record (q=8): holds={} lhs={:?} rhs={:?}",
            record.holds, record.lhs, record.rhs
        );
    }

    fn nine_voter_district() -> ElectionInstance {
        let voters = (0..9)
            .map(|i| Voter {
                id: format!("v{i}"),
                utility_c0: vec![0.5],
                utility_c1: vec![0.5],
            })
            .collect();
        ElectionInstance::new(
            vec!["s".into()],
            vec![1.0],
            vec![District {
                id: "d".into(),
                voters,
            }],
        )
        .unwrap()
    }

    #[test]
    fn lemma2_holds_on_nine_voters() {
        let inst = nine_voter_district();
        let delta = 0.2;
        let report = check_comparative_stability(
            &inst,
            RelaxedRule::WDelta,
            BaselineRule::W,
            delta,
            1.0 / delta,
            &[0.05, 0.1],
            10_000,
            42,
        );
        assert_eq!(report.violation_count, 0, "{:#?}", report.cells);
    }

    #[test]
    fn negative_control_detects_weak_beta() {
        let inst = nine_voter_district();
        let report = negative_control(&inst, 0.4, &[0.05, 0.1], 10_000, 42);
        assert!(report.violation_count > 0);
    }

    #[test]
    fn lemma4_trivial_epsilon_regime() {
        // eta = 0.9, delta = 0.9, eps = 2: theoretical q is about 12.8, so
        // q = 13 is enumerable and the guarantee must hold.
        let inst = example1_instance();
        let q_needed = crate::public::theoretical_q(0.9, 1.0 / 0.9, 2.0);
        assert!(q_needed <= 16.0, "q {q_needed}");
        let p_star = Posterior::new(vec![0.5, 0.25, 0.25]).unwrap();
        let record =
            lemma4_decomposition_check(&inst, &p_star, q_needed.ceil() as u32, 0.9, 0.9, 2.0)
                .unwrap();
        assert!(record.holds, "{record:?}");
    }
}
