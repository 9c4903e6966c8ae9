//! Election domain model: instances, voting rules, posteriors and best responses.
//!
//! An election has two candidates, `C0` (the sender's target) and `C1`. Voters
//! are grouped into districts; each district elects the candidate with at
//! least `K_d = ceil(|R^d|/2)` votes, and `C0` wins the election when it wins
//! at least `K_D = ceil(|D|/2)` districts. Both thresholds can be relaxed by a
//! multiplicative factor `1 - delta`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when breaking ties in the sender's favor. A voter whose
/// expected net utility is within `TIE_EPS` of the acceptance threshold is
/// treated as (weakly) preferring `C0`. This absorbs float dust at
/// indifference points that are exact in rational arithmetic (grid posteriors,
/// arrangement vertices) and matches the persuasiveness audit tolerance.
pub const TIE_EPS: f64 = 1e-9;

/// Guard subtracted before rounding `(1 - delta) * k` up, so that products
/// that are mathematically integral do not get bumped by float noise.
const THRESHOLD_GUARD: f64 = 1e-12;

/// Tolerance for probability vectors summing to one.
pub const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Candidate {
    C0,
    C1,
}

#[derive(Debug, Error)]
pub enum ElectionError {
    #[error("prior must sum to 1 (got {0})")]
    PriorSum(f64),
    #[error("prior entry {index} is negative ({value})")]
    PriorNegative { index: usize, value: f64 },
    #[error("instance needs at least one state")]
    NoStates,
    #[error("instance needs at least one district")]
    NoDistricts,
    #[error("district {0} has no voters")]
    EmptyDistrict(String),
    #[error("voter {voter}: utility vector for {candidate} has length {got}, expected {want}")]
    UtilityLength {
        voter: String,
        candidate: &'static str,
        got: usize,
        want: usize,
    },
    #[error("voter {voter}: utility {value} outside [0, 1]")]
    UtilityRange { voter: String, value: f64 },
    #[error("duplicate voter id {0}")]
    DuplicateVoter(String),
    #[error("unknown voter id {0}")]
    UnknownVoter(String),
    #[error("unknown state {0}")]
    UnknownState(String),
    #[error("vote profile has {got} votes, instance has {want} voters")]
    ProfileLength { got: usize, want: usize },
    #[error("posterior entry {index} is negative ({value})")]
    PosteriorNegative { index: usize, value: f64 },
    #[error("posterior must sum to 1 (got {0})")]
    PosteriorSum(f64),
    #[error("posterior has {got} entries, instance has {want} states")]
    PosteriorLength { got: usize, want: usize },
    #[error("relaxation parameter {name} = {value} outside its range")]
    RelaxationRange { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Voter {
    pub id: String,
    /// Utility of candidate `C0` per state, entries in [0, 1].
    pub utility_c0: Vec<f64>,
    /// Utility of candidate `C1` per state, entries in [0, 1].
    pub utility_c1: Vec<f64>,
}

impl Voter {
    /// Net utility `u_r(theta) = u_r(theta, c0) - u_r(theta, c1)`, in [-1, 1].
    pub fn net_utility(&self, state: usize) -> f64 {
        self.utility_c0[state] - self.utility_c1[state]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct District {
    pub id: String,
    pub voters: Vec<Voter>,
}

/// A two-candidate district-based election instance.
///
/// Voters carry a global index: districts in declaration order, voters within
/// a district in declaration order. `VoteProfile`s use the same ordering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElectionInstance {
    states: Vec<String>,
    prior: Vec<f64>,
    districts: Vec<District>,
}

impl ElectionInstance {
    pub fn new(
        states: Vec<String>,
        prior: Vec<f64>,
        districts: Vec<District>,
    ) -> Result<Self, ElectionError> {
        if states.is_empty() {
            return Err(ElectionError::NoStates);
        }
        if prior.len() != states.len() {
            return Err(ElectionError::PosteriorLength {
                got: prior.len(),
                want: states.len(),
            });
        }
        for (index, &value) in prior.iter().enumerate() {
            if value < 0.0 || !value.is_finite() {
                return Err(ElectionError::PriorNegative { index, value });
            }
        }
        let sum: f64 = prior.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ElectionError::PriorSum(sum));
        }
        if districts.is_empty() {
            return Err(ElectionError::NoDistricts);
        }
        let mut seen = std::collections::HashSet::new();
        for district in &districts {
            if district.voters.is_empty() {
                return Err(ElectionError::EmptyDistrict(district.id.clone()));
            }
            for voter in &district.voters {
                if !seen.insert(voter.id.clone()) {
                    return Err(ElectionError::DuplicateVoter(voter.id.clone()));
                }
                for (vec, candidate) in [
                    (&voter.utility_c0, "c0"),
                    (&voter.utility_c1, "c1"),
                ] {
                    if vec.len() != states.len() {
                        return Err(ElectionError::UtilityLength {
                            voter: voter.id.clone(),
                            candidate,
                            got: vec.len(),
                            want: states.len(),
                        });
                    }
                    for &value in vec.iter() {
                        if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                            return Err(ElectionError::UtilityRange {
                                voter: voter.id.clone(),
                                value,
                            });
                        }
                    }
                }
            }
        }
        Ok(Self {
            states,
            prior,
            districts,
        })
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn districts(&self) -> &[District] {
        &self.districts
    }

    pub fn n_districts(&self) -> usize {
        self.districts.len()
    }

    pub fn n_voters(&self) -> usize {
        self.districts.iter().map(|d| d.voters.len()).sum()
    }

    /// District win threshold `K_d = ceil(|R^d|/2)`.
    pub fn district_threshold(&self, district: usize) -> usize {
        self.districts[district].voters.len().div_ceil(2)
    }

    /// Election win threshold `K_D = ceil(|D|/2)`.
    pub fn election_threshold(&self) -> usize {
        self.districts.len().div_ceil(2)
    }

    /// Iterate voters in global order together with their district index.
    pub fn voters(&self) -> impl Iterator<Item = (usize, &Voter)> {
        self.districts
            .iter()
            .enumerate()
            .flat_map(|(d, district)| district.voters.iter().map(move |v| (d, v)))
    }

    /// Global index range `[start, end)` of a district's voters.
    pub fn district_range(&self, district: usize) -> std::ops::Range<usize> {
        let start: usize = self.districts[..district]
            .iter()
            .map(|d| d.voters.len())
            .sum();
        start..start + self.districts[district].voters.len()
    }

    fn state_index(&self, state: &str) -> Result<usize, ElectionError> {
        self.states
            .iter()
            .position(|s| s == state)
            .ok_or_else(|| ElectionError::UnknownState(state.to_string()))
    }

    fn voter_by_id(&self, voter_id: &str) -> Result<&Voter, ElectionError> {
        self.voters()
            .map(|(_, v)| v)
            .find(|v| v.id == voter_id)
            .ok_or_else(|| ElectionError::UnknownVoter(voter_id.to_string()))
    }

    /// Net utility `u_r(theta) = u_r(theta, c0) - u_r(theta, c1)` looked up by id.
    pub fn net_utility(&self, voter_id: &str, state: &str) -> Result<f64, ElectionError> {
        let state = self.state_index(state)?;
        Ok(self.voter_by_id(voter_id)?.net_utility(state))
    }

    /// Expected net utility of a voter under a posterior belief.
    pub fn expected_net_utility(&self, voter: &Voter, posterior: &Posterior) -> f64 {
        posterior
            .probs()
            .iter()
            .enumerate()
            .map(|(theta, p)| p * voter.net_utility(theta))
            .sum()
    }

    /// The epsilon-best response `b^{p,eps}`: voter `r` votes `C0` iff
    /// `sum_theta p_theta u_r(theta) >= -eps` (ties broken for the sender,
    /// which attains the argmax for every vote-monotone objective).
    pub fn best_response(&self, posterior: &Posterior, epsilon: f64) -> VoteProfile {
        debug_assert!(epsilon >= 0.0, "epsilon must be nonnegative");
        let votes = self
            .voters()
            .map(|(_, voter)| {
                if self.expected_net_utility(voter, posterior) >= -epsilon - TIE_EPS {
                    Candidate::C0
                } else {
                    Candidate::C1
                }
            })
            .collect();
        VoteProfile { votes }
    }

    /// Sender's utility of a posterior: the election outcome under the
    /// epsilon-best response, with the requested threshold relaxations.
    pub fn posterior_value(&self, posterior: &Posterior, relax: &RelaxationParams) -> f64 {
        let profile = self.best_response(posterior, relax.epsilon);
        if self.eval_election(&profile, relax).expect("profile shape") {
            1.0
        } else {
            0.0
        }
    }

    /// `W_dd`: true iff `C0` wins at least `ceil((1-delta_aggregate) K_D)`
    /// districts, each district evaluated at `delta_district`.
    pub fn eval_election(
        &self,
        profile: &VoteProfile,
        relax: &RelaxationParams,
    ) -> Result<bool, ElectionError> {
        if profile.votes.len() != self.n_voters() {
            return Err(ElectionError::ProfileLength {
                got: profile.votes.len(),
                want: self.n_voters(),
            });
        }
        let mut won = 0usize;
        for d in 0..self.districts.len() {
            let slice = &profile.votes[self.district_range(d)];
            if eval_district(slice, relax.delta_district) == Candidate::C0 {
                won += 1;
            }
        }
        Ok(won >= relaxed_threshold(self.election_threshold(), relax.delta_aggregate))
    }
}

/// `ceil((1 - delta) * k)` with a guard against float noise at exact integers.
pub fn relaxed_threshold(k: usize, delta: f64) -> usize {
    (((1.0 - delta) * k as f64) - THRESHOLD_GUARD).ceil().max(0.0) as usize
}

/// `W^d_delta`: `C0` iff at least `ceil((1-delta) * ceil(n/2))` of the slice
/// vote for it.
pub fn eval_district(votes: &[Candidate], delta: f64) -> Candidate {
    assert!(!votes.is_empty(), "district slice must be nonempty");
    assert!((0.0..1.0).contains(&delta), "delta must lie in [0, 1)");
    let k = votes.len().div_ceil(2);
    let c0_votes = votes.iter().filter(|&&c| c == Candidate::C0).count();
    if c0_votes >= relaxed_threshold(k, delta) {
        Candidate::C0
    } else {
        Candidate::C1
    }
}

/// One vote per voter, in the instance's global order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VoteProfile {
    votes: Vec<Candidate>,
}

impl VoteProfile {
    pub fn new(votes: Vec<Candidate>) -> Self {
        Self { votes }
    }

    pub fn votes(&self) -> &[Candidate] {
        &self.votes
    }

    pub fn votes_mut(&mut self) -> &mut [Candidate] {
        &mut self.votes
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    /// Voters currently voting `C0` (the set `V_{c0}`), as global indices.
    pub fn c0_voters(&self) -> Vec<usize> {
        self.votes
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == Candidate::C0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Parameters of the relaxed problem; `(0, 0, 0)` recovers the exact one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationParams {
    pub delta_district: f64,
    pub delta_aggregate: f64,
    pub epsilon: f64,
}

impl RelaxationParams {
    pub fn new(
        delta_district: f64,
        delta_aggregate: f64,
        epsilon: f64,
    ) -> Result<Self, ElectionError> {
        for (name, value, hi_open) in [
            ("delta_district", delta_district, true),
            ("delta_aggregate", delta_aggregate, true),
            ("epsilon", epsilon, false),
        ] {
            let ok = value.is_finite() && value >= 0.0 && (!hi_open || value < 1.0);
            if !ok {
                return Err(ElectionError::RelaxationRange { name, value });
            }
        }
        Ok(Self {
            delta_district,
            delta_aggregate,
            epsilon,
        })
    }

    pub fn exact() -> Self {
        Self {
            delta_district: 0.0,
            delta_aggregate: 0.0,
            epsilon: 0.0,
        }
    }
}

/// A belief over states. When built from integer counts it is `q`-uniform and
/// the counts are kept so that grid membership checks stay exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    probs: Vec<f64>,
    counts: Option<Vec<u32>>,
}

impl Posterior {
    pub fn new(probs: Vec<f64>) -> Result<Self, ElectionError> {
        for (index, &value) in probs.iter().enumerate() {
            if value < 0.0 || !value.is_finite() {
                return Err(ElectionError::PosteriorNegative { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(ElectionError::PosteriorSum(sum));
        }
        Ok(Self {
            probs,
            counts: None,
        })
    }

    /// Rescale a nonnegative vector onto the simplex first, then validate.
    pub fn normalized(mut probs: Vec<f64>) -> Result<Self, ElectionError> {
        let sum: f64 = probs.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(ElectionError::PosteriorSum(sum));
        }
        for p in &mut probs {
            *p /= sum;
        }
        Self::new(probs)
    }

    /// Exact `q`-uniform posterior `n_theta / q` from integer counts.
    pub fn from_counts(counts: Vec<u32>, q: u32) -> Self {
        assert!(q > 0, "q must be positive");
        let total: u32 = counts.iter().sum();
        assert_eq!(total, q, "counts must sum to q");
        let probs = counts.iter().map(|&n| f64::from(n) / f64::from(q)).collect();
        Self {
            probs,
            counts: Some(counts),
        }
    }

    pub fn point_mass(state: usize, n_states: usize) -> Self {
        let mut counts = vec![0u32; n_states];
        counts[state] = 1;
        Self::from_counts(counts, 1)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Granularity `q` when the posterior was built from counts.
    pub fn q(&self) -> Option<u32> {
        self.counts.as_ref().map(|c| c.iter().sum())
    }

    pub fn counts(&self) -> Option<&[u32]> {
        self.counts.as_deref()
    }
}
