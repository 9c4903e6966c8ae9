//! Cross-solver consistency: the marginal LP against the joint oracle, the
//! value sandwich, and grid monotonicity.

use persuade::election::RelaxationParams;
use persuade::io::{generate_instance, GenerateSpec, InstanceFamily};
use persuade::oracle::exact_public_oracle;
use persuade::private::{exact_private_oracle, repair_marginals, solve_private};
use persuade::public::solve_public;
use persuade::semipublic::solve_semipublic;

fn random_instance(seed: u64, n_states: usize, n_districts: usize, vpd: usize) -> persuade::election::ElectionInstance {
    let family = if seed % 5 == 4 {
        InstanceFamily::ThresholdAdversarial
    } else {
        InstanceFamily::UniformRandom
    };
    generate_instance(&GenerateSpec {
        family,
        n_states,
        n_districts,
        voters_per_district: vpd,
        seed,
    })
}

#[test]
fn private_lp_matches_joint_oracle() {
    for seed in 0..12u64 {
        let n_states = 1 + (seed % 3) as usize;
        let n_districts = 1 + (seed % 2) as usize;
        let vpd = 2 + (seed % 3) as usize;
        let inst = random_instance(seed, n_states, n_districts, vpd);
        let lp = solve_private(&inst).unwrap();
        let oracle = exact_private_oracle(&inst).unwrap();
        assert!(
            (lp.value - oracle).abs() <= 1e-6,
            "seed {seed}: lp {} oracle {}",
            lp.value,
            oracle
        );
    }
}

#[test]
fn repair_preserves_the_incentive_chain() {
    for seed in 0..8u64 {
        let inst = random_instance(seed, 2, 1, 5);
        let report = solve_private(&inst).unwrap();
        let repaired = repair_marginals(&inst, &report.marginals);
        for (r, (_, voter)) in inst.voters().enumerate() {
            let weighted = |phi: &[f64]| -> f64 {
                phi.iter()
                    .enumerate()
                    .map(|(th, p)| inst.prior()[th] * p * voter.net_utility(th))
                    .sum()
            };
            let after = weighted(&repaired.phi[r]);
            let before = weighted(&report.marginals.phi[r]);
            assert!(after >= before - 1e-9, "seed {seed} voter {r}");
            assert!(before >= -1e-7, "seed {seed} voter {r}: {before}");
        }
    }
}

#[test]
fn value_sandwich_small() {
    for seed in 0..6u64 {
        let inst = random_instance(seed, 2, 2, 3);
        let q = 4;
        let public = solve_public(&inst, q, &RelaxationParams::exact()).unwrap();
        let semi = solve_semipublic(&inst, q, 0.0, 0.0).unwrap();
        let private = solve_private(&inst).unwrap();
        assert!(
            public.value <= semi.value + 1e-6,
            "seed {seed}: public {} semi {}",
            public.value,
            semi.value
        );
        assert!(
            semi.value <= private.value + 1e-6,
            "seed {seed}: semi {} private {}",
            semi.value,
            private.value
        );
    }
}

#[test]
fn public_value_monotone_under_grid_refinement() {
    for seed in 0..6u64 {
        let inst = random_instance(seed, 2, 1, 5);
        let relax = RelaxationParams::new(0.2, 0.0, 0.05).unwrap();
        let coarse = solve_public(&inst, 3, &relax).unwrap();
        let fine = solve_public(&inst, 6, &relax).unwrap();
        // Every 3-grid point is a 6-grid point.
        assert!(
            fine.value >= coarse.value - 1e-6,
            "seed {seed}: coarse {} fine {}",
            coarse.value,
            fine.value
        );
    }
}

#[test]
fn public_value_monotone_in_relaxations() {
    for seed in 0..6u64 {
        let inst = random_instance(seed, 2, 2, 3);
        let base = solve_public(&inst, 4, &RelaxationParams::exact()).unwrap();
        for relax in [
            RelaxationParams::new(0.0, 0.0, 0.1).unwrap(),
            RelaxationParams::new(0.3, 0.0, 0.0).unwrap(),
            RelaxationParams::new(0.0, 0.3, 0.0).unwrap(),
            RelaxationParams::new(0.3, 0.3, 0.1).unwrap(),
        ] {
            let relaxed = solve_public(&inst, 4, &relax).unwrap();
            assert!(
                relaxed.value >= base.value - 1e-6,
                "seed {seed} relax {relax:?}: {} vs {}",
                relaxed.value,
                base.value
            );
        }
    }
}

#[test]
fn theoretical_grid_regime_meets_the_corollary_bound() {
    // With two states the grid is linear in q, so the bound's granularity is
    // actually enumerable at large epsilon: q = 32 log(4/(eta delta^2)) /
    // eps^2 with eta = 0.5, delta = 0.5, eps = 0.4 gives q ~ 694.
    let (eta, delta, eps) = (0.5, 0.5, 0.4);
    let q_needed = persuade::public::theoretical_q(eta, 1.0 / (delta * delta), eps).ceil() as u32;
    assert!(persuade::public::grid_size(q_needed, 2) <= 2_000_000);
    let relax = RelaxationParams::new(delta, delta, eps).unwrap();
    for seed in 0..4u64 {
        let inst = random_instance(seed, 2, 1, 7);
        let oracle = exact_public_oracle(&inst).unwrap();
        let relaxed = solve_public(&inst, q_needed, &relax).unwrap().value;
        assert!(
            relaxed >= (1.0 - eta) * oracle - 1e-6,
            "seed {seed}: relaxed {relaxed} vs (1-eta) oracle {}",
            (1.0 - eta) * oracle
        );
    }
}

#[test]
fn grid_restriction_never_beats_the_oracle() {
    for seed in 0..8u64 {
        let inst = random_instance(seed, 2, 1, 5);
        let oracle = exact_public_oracle(&inst).unwrap();
        for q in [2, 4, 8] {
            let grid = solve_public(&inst, q, &RelaxationParams::exact()).unwrap();
            assert!(
                grid.value <= oracle + 1e-6,
                "seed {seed} q {q}: grid {} oracle {}",
                grid.value,
                oracle
            );
        }
    }
}
