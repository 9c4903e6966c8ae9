//! Public signaling over grids of q-uniform posteriors.
//!
//! A public scheme is a Bayes-plausible distribution over posteriors. On the
//! grid of posteriors whose entries are multiples of `1/q` this becomes one
//! LP: maximize the weighted posterior values subject to the barycenter
//! matching the prior. `decompose_posterior` gives the constructive step
//! behind the approximation guarantee: the law of the empirical distribution
//! of `q` i.i.d. draws from an arbitrary posterior is a grid distribution
//! with the same barycenter.

use crate::audit::{audit_posterior_family, PersuasivenessAudit};
use crate::election::{ElectionInstance, Posterior, RelaxationParams, VoteProfile};
use crate::lp::{clamp_unit, solve_lp, LpDiagnostics, LpModel, LpStatus, Sense};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Grid weights below this are treated as unsupported.
pub const SUPPORT_FLOOR: f64 = 1e-9;

/// Multinomial weights below this are truncated by `decompose_posterior`.
pub const DECOMPOSE_FLOOR: f64 = 1e-12;

pub const DEFAULT_GRID_CAP: usize = 2_000_000;

#[derive(Debug, Error)]
pub enum PublicError {
    #[error("grid needs q >= 1 and at least one state")]
    BadGridArgs,
    #[error("grid of size {size} exceeds the cap {cap}")]
    GridCap { size: u128, cap: usize },
    #[error("LP backend failed: {0}")]
    Numerical(String),
    #[error("state {state} has zero prior but the scheme reaches it with mass {mass}")]
    ZeroPriorMass { state: usize, mass: f64 },
}

/// The complete grid of q-uniform posteriors over a state space, in
/// lexicographic count order.
#[derive(Debug, Clone, Serialize)]
pub struct QGrid {
    q: u32,
    n_states: usize,
    posteriors: Vec<Posterior>,
}

impl QGrid {
    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn len(&self) -> usize {
        self.posteriors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posteriors.is_empty()
    }

    pub fn posteriors(&self) -> &[Posterior] {
        &self.posteriors
    }
}

/// Number of q-uniform posteriors: `C(q + n - 1, n - 1)`.
pub fn grid_size(q: u32, n_states: usize) -> u128 {
    let n = u128::from(q) + n_states as u128 - 1;
    let k = n_states as u128 - 1;
    let mut result = 1u128;
    for i in 0..k {
        result = result.saturating_mul(n - i) / (i + 1);
    }
    result
}

/// Enumerate every q-uniform posterior (all compositions of `q` into
/// `n_states` nonnegative counts), guarded by the default size cap.
pub fn enumerate_q_uniform(q: u32, n_states: usize) -> Result<QGrid, PublicError> {
    enumerate_q_uniform_capped(q, n_states, DEFAULT_GRID_CAP)
}

pub fn enumerate_q_uniform_capped(
    q: u32,
    n_states: usize,
    cap: usize,
) -> Result<QGrid, PublicError> {
    if q == 0 || n_states == 0 {
        return Err(PublicError::BadGridArgs);
    }
    let size = grid_size(q, n_states);
    if size > cap as u128 {
        return Err(PublicError::GridCap { size, cap });
    }
    let mut posteriors = Vec::with_capacity(size as usize);
    let mut counts = vec![0u32; n_states];
    compositions(q, 0, &mut counts, &mut posteriors);
    debug_assert_eq!(posteriors.len() as u128, size);
    Ok(QGrid {
        q,
        n_states,
        posteriors,
    })
}

fn compositions(remaining: u32, index: usize, counts: &mut Vec<u32>, out: &mut Vec<Posterior>) {
    if index == counts.len() - 1 {
        counts[index] = remaining;
        out.push(Posterior::from_counts(counts.clone(), counts.iter().sum()));
        return;
    }
    for value in 0..=remaining {
        counts[index] = value;
        compositions(remaining - value, index + 1, counts, out);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PublicScheme {
    pub relax: RelaxationParams,
    /// Weight per grid posterior, aligned with the grid's order.
    pub gamma: Vec<f64>,
    /// Indices of posteriors with weight above `SUPPORT_FLOOR`.
    pub support: Vec<usize>,
    /// Best responses cached for the supported posteriors, aligned with
    /// `support`.
    pub responses: Vec<VoteProfile>,
    pub grid: QGrid,
}

impl PublicScheme {
    /// Largest deviation of the barycenter from the prior.
    pub fn bayes_residual(&self, instance: &ElectionInstance) -> f64 {
        let mut worst = 0.0f64;
        for (theta, &mu) in instance.prior().iter().enumerate() {
            let mass: f64 = self
                .gamma
                .iter()
                .zip(self.grid.posteriors())
                .map(|(g, p)| g * p.probs()[theta])
                .sum();
            worst = worst.max((mass - mu).abs());
        }
        worst
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridStats {
    pub q: u32,
    pub size: usize,
    pub winning_posteriors: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PublicSolveReport {
    pub value: f64,
    pub scheme: PublicScheme,
    pub grid_stats: GridStats,
    pub audit: PersuasivenessAudit,
    pub lp: LpDiagnostics,
}

/// Optimal grid-restricted public scheme for the relaxed objective.
pub fn solve_public(
    instance: &ElectionInstance,
    q: u32,
    relax: &RelaxationParams,
) -> Result<PublicSolveReport, PublicError> {
    solve_public_capped(instance, q, relax, DEFAULT_GRID_CAP)
}

pub fn solve_public_capped(
    instance: &ElectionInstance,
    q: u32,
    relax: &RelaxationParams,
    cap: usize,
) -> Result<PublicSolveReport, PublicError> {
    let grid = enumerate_q_uniform_capped(q, instance.n_states(), cap)?;
    let values: Vec<f64> = grid
        .posteriors()
        .par_iter()
        .map(|p| instance.posterior_value(p, relax))
        .collect();

    let mut model = LpModel::new("public-dbe");
    let gamma: Vec<_> = (0..grid.len())
        .map(|i| model.add_var(format!("gamma_{i}"), 0.0, 1.0))
        .collect();
    for (theta, &mu) in instance.prior().iter().enumerate() {
        let terms = gamma
            .iter()
            .zip(grid.posteriors())
            .map(|(&g, p)| (g, p.probs()[theta]))
            .collect();
        model.add_constraint(format!("bayes_{theta}"), terms, Sense::Eq, mu);
    }
    model.set_objective(
        gamma
            .iter()
            .zip(&values)
            .map(|(&g, &v)| (g, v))
            .collect(),
    );

    let sol = solve_lp(&model);
    if sol.status != LpStatus::Optimal {
        return Err(PublicError::Numerical(format!(
            "public LP ended {:?} ({})",
            sol.status, sol.diagnostics.status_raw
        )));
    }

    let weights: Vec<f64> = gamma.iter().map(|&g| sol.value(g).max(0.0)).collect();
    let support: Vec<usize> = weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > SUPPORT_FLOOR)
        .map(|(i, _)| i)
        .collect();
    let responses: Vec<VoteProfile> = support
        .iter()
        .map(|&i| instance.best_response(&grid.posteriors()[i], relax.epsilon))
        .collect();
    let winning = values.iter().filter(|&&v| v > 0.5).count();
    let scheme = PublicScheme {
        relax: *relax,
        gamma: weights,
        support: support.clone(),
        responses,
        grid,
    };
    let supported: Vec<(f64, &Posterior)> = support
        .iter()
        .map(|&i| (scheme.gamma[i], &scheme.grid.posteriors()[i]))
        .collect();
    let audit = audit_posterior_family(instance, &supported, relax.epsilon, "public");
    Ok(PublicSolveReport {
        value: clamp_unit(sol.objective),
        grid_stats: GridStats {
            q,
            size: scheme.grid.len(),
            winning_posteriors: winning,
        },
        scheme,
        audit,
        lp: sol.diagnostics,
    })
}

/// A weighted set of q-uniform posteriors averaging to a target posterior.
#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    pub q: u32,
    /// `(counts, weight)` pairs; counts sum to `q`.
    pub entries: Vec<(Vec<u32>, f64)>,
    /// Probability mass dropped by the truncation floor.
    pub truncated_mass: f64,
    /// Barycenter error after truncation and renormalization.
    pub barycenter_residual: f64,
}

impl Decomposition {
    pub fn posteriors(&self) -> impl Iterator<Item = (Posterior, f64)> + '_ {
        self.entries
            .iter()
            .map(|(counts, w)| (Posterior::from_counts(counts.clone(), self.q), *w))
    }
}

/// Decompose a posterior into q-uniform posteriors with multinomial weights:
/// the law of the empirical distribution of `q` i.i.d. draws. The barycenter
/// equals the input exactly; truncation below `DECOMPOSE_FLOOR` is
/// renormalized and the dropped mass reported.
pub fn decompose_posterior(target: &Posterior, q: u32) -> Result<Decomposition, PublicError> {
    let n_states = target.len();
    let grid = enumerate_q_uniform(q, n_states)?;
    let mut entries = Vec::new();
    let mut truncated = 0.0;
    for posterior in grid.posteriors() {
        let counts = posterior.counts().expect("grid posteriors carry counts");
        let weight = multinomial_pmf(q, counts, target.probs());
        if weight >= DECOMPOSE_FLOOR {
            entries.push((counts.to_vec(), weight));
        } else {
            truncated += weight;
        }
    }
    let total: f64 = entries.iter().map(|(_, w)| w).sum();
    for (_, w) in &mut entries {
        *w /= total;
    }
    let mut residual = 0.0f64;
    for (theta, &p) in target.probs().iter().enumerate() {
        let mass: f64 = entries
            .iter()
            .map(|(counts, w)| w * f64::from(counts[theta]) / f64::from(q))
            .sum();
        residual = residual.max((mass - p).abs());
    }
    Ok(Decomposition {
        q,
        entries,
        truncated_mass: truncated,
        barycenter_residual: residual,
    })
}

/// `q! / prod(n_theta!) * prod(p_theta^{n_theta})`, evaluated stably as an
/// incremental product of binomials.
fn multinomial_pmf(q: u32, counts: &[u32], probs: &[f64]) -> f64 {
    let mut pmf = 1.0f64;
    let mut drawn = 0u32;
    for (&n, &p) in counts.iter().zip(probs) {
        // C(q - drawn, n) * p^n
        let mut coeff = 1.0f64;
        for j in 0..n {
            coeff *= f64::from(q - drawn - j) / f64::from(j + 1);
        }
        pmf *= coeff * p.powi(n as i32);
        drawn += n;
    }
    pmf
}

/// Per-state distribution over recommended vote profiles equivalent to a
/// posterior-weighted scheme: `Pr(c | theta) = sum_{p: b^p = c} gamma_p
/// p_theta / mu_theta`.
pub type DirectScheme = Vec<Vec<(VoteProfile, f64)>>;

pub fn recover_direct_scheme(
    scheme: &PublicScheme,
    instance: &ElectionInstance,
) -> Result<DirectScheme, PublicError> {
    let mut per_state = Vec::with_capacity(instance.n_states());
    for (theta, &mu) in instance.prior().iter().enumerate() {
        let mass: f64 = scheme
            .support
            .iter()
            .map(|&i| scheme.gamma[i] * scheme.grid.posteriors()[i].probs()[theta])
            .sum();
        if mu <= 0.0 {
            if mass > 1e-12 {
                return Err(PublicError::ZeroPriorMass { state: theta, mass });
            }
            per_state.push(Vec::new());
            continue;
        }
        let mut table: Vec<(VoteProfile, f64)> = Vec::new();
        for (slot, &i) in scheme.support.iter().enumerate() {
            let weight = scheme.gamma[i] * scheme.grid.posteriors()[i].probs()[theta] / mu;
            if weight == 0.0 {
                continue;
            }
            let profile = &scheme.responses[slot];
            match table.iter_mut().find(|(c, _)| c == profile) {
                Some((_, w)) => *w += weight,
                None => table.push((profile.clone(), weight)),
            }
        }
        per_state.push(table);
    }
    Ok(per_state)
}

/// Grid granularity for which the decomposition guarantee holds:
/// `32 log(4 / (eta min{1, 1/beta})) / epsilon^2`.
pub fn theoretical_q(eta: f64, beta: f64, epsilon: f64) -> f64 {
    assert!(eta > 0.0 && eta <= 1.0 && beta > 0.0 && epsilon > 0.0);
    32.0 * (4.0 / (eta * (1.0f64).min(1.0 / beta))).ln() / (epsilon * epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::election::{District, ElectionInstance, Voter};
    use crate::io::example1_instance;

    fn single_voter_instance() -> ElectionInstance {
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
    fn grid_sizes_match_stars_and_bars() {
        assert_eq!(enumerate_q_uniform(2, 2).unwrap().len(), 3);
        assert_eq!(enumerate_q_uniform(4, 3).unwrap().len(), 15);
        // q = 1 gives the simplex vertices.
        let grid = enumerate_q_uniform(1, 4).unwrap();
        assert_eq!(grid.len(), 4);
        for p in grid.posteriors() {
            assert_eq!(p.probs().iter().filter(|&&x| x == 1.0).count(), 1);
        }
    }

    #[test]
    fn grid_cap_refuses_large_grids() {
        assert!(matches!(
            enumerate_q_uniform_capped(1000, 6, 1000),
            Err(PublicError::GridCap { .. })
        ));
    }

    #[test]
    fn single_voter_concavification() {
        let inst = single_voter_instance();
        let report = solve_public(&inst, 2, &RelaxationParams::exact()).unwrap();
        assert!((report.value - 0.6).abs() < 1e-6, "value {}", report.value);
        assert!(report.audit.pass);
        assert!(report.scheme.bayes_residual(&inst) < 1e-7);
    }

    #[test]
    fn winning_prior_gets_a_point_mass() {
        // Prior (0.5, 0.5) is 2-uniform and already wins.
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
        let report = solve_public(&inst, 2, &RelaxationParams::exact()).unwrap();
        assert!((report.value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn example1_has_zero_public_value() {
        let inst = example1_instance();
        for q in [2, 4, 6] {
            let report = solve_public(&inst, q, &RelaxationParams::exact()).unwrap();
            assert!(report.value.abs() < 1e-6, "q={q} value {}", report.value);
        }
    }

    #[test]
    fn decompose_single_state_is_trivial() {
        let p = Posterior::new(vec![1.0]).unwrap();
        let d = decompose_posterior(&p, 4).unwrap();
        assert_eq!(d.entries, vec![(vec![4], 1.0)]);
        assert_eq!(d.barycenter_residual, 0.0);
    }

    #[test]
    fn decompose_fair_coin_q2() {
        let p = Posterior::new(vec![0.5, 0.5]).unwrap();
        let d = decompose_posterior(&p, 2).unwrap();
        // Binomial(2, 1/2): weights 1/4, 1/2, 1/4 in lexicographic count order.
        let weights: Vec<f64> = d.entries.iter().map(|(_, w)| *w).collect();
        assert_eq!(d.entries[0].0, vec![0, 2]);
        assert!((weights[0] - 0.25).abs() < 1e-12);
        assert!((weights[1] - 0.5).abs() < 1e-12);
        assert!((weights[2] - 0.25).abs() < 1e-12);
        assert!(d.barycenter_residual < 1e-12);
    }

    #[test]
    fn decompose_vertex_is_a_point_mass() {
        let p = Posterior::new(vec![1.0, 0.0, 0.0]).unwrap();
        let d = decompose_posterior(&p, 5).unwrap();
        assert_eq!(d.entries.len(), 1);
        assert_eq!(d.entries[0].0, vec![5, 0, 0]);
        assert_eq!(d.entries[0].1, 1.0);
    }

    #[test]
    fn recover_point_mass_scheme() {
        let inst = single_voter_instance();
        // mu itself is not 2-uniform here, so use the solved scheme instead.
        let report = solve_public(&inst, 2, &RelaxationParams::exact()).unwrap();
        let direct = recover_direct_scheme(&report.scheme, &inst).unwrap();
        for (theta, table) in direct.iter().enumerate() {
            let total: f64 = table.iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-7, "state {theta} sums to {total}");
        }
        // In state 0 the winning profile is recommended with probability 1.
        let state0 = &direct[0];
        let winning_mass: f64 = state0
            .iter()
            .filter(|(c, _)| c.votes()[0] == crate::election::Candidate::C0)
            .map(|(_, w)| w)
            .sum();
        assert!((winning_mass - 1.0).abs() < 1e-6, "mass {winning_mass}");
    }

    #[test]
    fn theoretical_q_formula() {
        let q = theoretical_q(0.5, 2.0, 0.1);
        assert!((q - 32.0 * (16.0f64).ln() / 0.01).abs() < 1e-9);
        // beta <= 1 leaves only eta in the bound.
        let q = theoretical_q(0.5, 0.5, 0.1);
        assert!((q - 32.0 * (8.0f64).ln() / 0.01).abs() < 1e-9);
    }
}
