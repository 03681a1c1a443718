//! Learner properties: recursive accumulators against explicit sums, and
//! the invariants every update must preserve.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtb_core::regret::history::*;
use rtb_core::regret::*;

fn params(step: StepSize, delta: f64, mu: f64, estimator: Estimator, form: RegretForm) -> LearnerParams {
    LearnerParams {
        step,
        delta_explore: delta,
        mu,
        alpha: 0.1,
        estimator,
        form,
    }
}

/// Plays `len` stages with utilities drawn from the seed, returning the
/// learner and the recorded history.
fn play(p: LearnerParams, len: usize, seed: u64, umax: f64) -> (RegretState, Vec<StageRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut learner = RegretState::new(p).unwrap();
    let mut records = Vec::new();
    for _ in 0..len {
        let strategy = learner.strategy();
        let action = learner.sample(&mut rng);
        let reward: f64 = rng.random_range(0.0..=1.0);
        let cost: f64 = rng.random_range(0.0..=umax - 1.0);
        let utility = match action {
            Action::Forward => reward - cost,
            Action::Drop => reward,
        };
        let scaled_cost = rng.random_range(0.0..2.0);
        learner
            .update(StageObservation {
                action,
                utility,
                reward,
                scaled_expected_cost: Some(scaled_cost),
            })
            .unwrap();
        records.push(StageRecord {
            action,
            utility,
            reward,
            strategy,
            scaled_expected_cost: scaled_cost,
        });
    }
    (learner, records)
}

fn any_form() -> impl Strategy<Value = RegretForm> {
    prop_oneof![Just(RegretForm::Averaged), Just(RegretForm::Recursive)]
}

fn any_step() -> impl Strategy<Value = StepSize> {
    prop_oneof![(0.001f64..=1.0).prop_map(StepSize::Constant), Just(StepSize::Decaying)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn recursive_averages_match_explicit_sums(
        eps in 0.01f64..=1.0,
        delta in 0.01f64..0.9,
        mu in 0.05f64..10.0,
        len in 1usize..=50,
        seed in any::<u64>(),
    ) {
        let p = params(StepSize::Constant(eps), delta, mu, Estimator::Proxy, RegretForm::Averaged);
        let (learner, records) = play(p, len, seed, 3.0);
        for a in Action::ALL {
            let explicit = discounted_actual_average(&records, a, eps);
            prop_assert!((learner.actual_average(a) - explicit).abs() < 1e-10);
            let potential = proxy_potential_average(&records, a.other(), eps).unwrap();
            prop_assert!((learner.potential_average(a) - potential).abs() < 1e-10);
        }
    }

    #[test]
    fn csi_average_matches_explicit_sum(
        eps in 0.01f64..=1.0,
        delta in 0.01f64..0.9,
        len in 1usize..=50,
        seed in any::<u64>(),
    ) {
        let p = params(StepSize::Constant(eps), delta, 1.0, Estimator::Csi, RegretForm::Averaged);
        let (learner, records) = play(p, len, seed, 3.0);
        let explicit = csi_potential_average(&records, eps).unwrap();
        prop_assert!((learner.potential_average(Action::Forward) - explicit).abs() < 1e-10);
        let drop = proxy_potential_average(&records, Action::Forward, eps).unwrap();
        prop_assert!((learner.potential_average(Action::Drop) - drop).abs() < 1e-10);
    }

    #[test]
    fn regrets_nonnegative_and_strategy_floored(
        step in any_step(),
        form in any_form(),
        delta in 0.0f64..0.99,
        mu in 0.01f64..20.0,
        len in 1usize..200,
        seed in any::<u64>(),
    ) {
        let p = params(step, delta, mu, Estimator::Proxy, form);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut learner = RegretState::new(p).unwrap();
        for _ in 0..len {
            let action = learner.sample(&mut rng);
            let utility = rng.random_range(-3.0..1.0);
            let Ok(()) = learner.update(StageObservation { action, utility, reward: utility, scaled_expected_cost: None }) else {
                // only a zero-probability draw can fail, which needs delta = 0
                prop_assert_eq!(delta, 0.0);
                break;
            };
            for a in Action::ALL {
                prop_assert!(learner.regret(a, a.other()) >= 0.0);
            }
            let s = learner.strategy();
            prop_assert!((s[0] + s[1] - 1.0).abs() <= 1e-12);
            prop_assert!(s.iter().all(|&x| x >= delta / 2.0 - 1e-15));
        }
    }

    #[test]
    fn regret_bounded_by_weighted_utility(
        eps in 0.01f64..=1.0,
        delta in 0.02f64..0.9,
        form in any_form(),
        len in 1usize..200,
        seed in any::<u64>(),
    ) {
        let umax = 3.0;
        let p = params(StepSize::Constant(eps), delta, 1.0, Estimator::Proxy, form);
        let (learner, _) = play(p, len, seed, umax);
        let ratio = (1.0 - delta / 2.0) / (delta / 2.0);
        let bound = umax * ratio.max(1.0);
        for a in Action::ALL {
            prop_assert!(learner.regret(a, a.other()) <= bound + 1e-9);
        }
    }

    #[test]
    fn switch_probability_formula(q in 0.0f64..10.0, delta in 0.0f64..0.99, mu in 0.01f64..10.0) {
        for current in Action::ALL {
            let s = strategy_from_regret(q, current, delta, mu).unwrap();
            let expect = (1.0 - delta) * (q / mu).min(0.5) + delta / 2.0;
            prop_assert!((s[current.other().index()] - expect).abs() < 1e-15);
            prop_assert!(s[current.index()] >= 0.5 - 1e-15);
        }
    }
}

#[test]
fn auto_mu_bounds_the_utility_range() {
    // |r - α·c| <= 1 + α·cap, so Q / μ stays below 1/2 for the averaged form
    // with unit importance weights
    let mu = LearnerParams::auto_mu(0.1, 24);
    assert!((mu - 6.8).abs() < 1e-12);
    assert!((LearnerParams::auto_mu(0.3, 24) - 16.4).abs() < 1e-12);
}
