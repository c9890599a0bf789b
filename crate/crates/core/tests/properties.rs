use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stackelberg_core::bandit::{learn_bandit, BanditLearnConfig};
use stackelberg_core::game::{best_response_set, near_best, GameSampler, NoiseModel, PayoffTable, TieBreaking};
use stackelberg_core::instances::{random_game, random_mdp, Structure};
use stackelberg_core::linear::{core_set, max_leverage, weighted_least_squares, FeatureMap};
use stackelberg_core::lp::{best_case_best_response, mix, solve_lp, worst_case_best_response, occupancy_program, Sense};
use stackelberg_core::mdp::{occupancy_of_policy, policy_value, rollout, value_iteration, Channel, MdpSimulator, Policy, Shape};
use stackelberg_core::reward_free::build_empirical_model;
use stackelberg_core::simultaneous::{learn_simultaneous_optimistic, learn_simultaneous_pessimistic, SimultaneousConfig};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_policy(shape: Shape, r: &mut ChaCha8Rng) -> Policy {
    let mut probs = Vec::with_capacity(shape.cells());
    for _ in 0..shape.horizon * shape.states {
        let w: Vec<f64> = (0..shape.actions).map(|_| r.gen::<f64>() + 1e-3).collect();
        let total: f64 = w.iter().sum();
        probs.extend(w.iter().map(|x| x / total));
    }
    Policy::new(shape, probs).unwrap()
}

fn small_shape() -> impl Strategy<Value = Shape> {
    (1usize..4, 1usize..4, 1usize..4).prop_map(|(h, s, b)| Shape::new(h, s, b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn response_sets_sandwich_under_bounded_error(seed in any::<u64>(), eps in 0.01f64..0.5, na in 1usize..6, nb in 1usize..6) {
        let mut r = rng(seed);
        let g = random_game(na, nb, Structure::General, &mut r).unwrap();
        let mu2 = g.mean_follower();
        let noisy: Vec<f64> = mu2.as_slice().iter().map(|x| x + eps / 8.0 * r.gen_range(-1.0..=1.0)).collect();
        let noisy = PayoffTable::new(na, nb, noisy).unwrap();
        for a in 0..na {
            let inner = best_response_set(mu2, a, eps / 2.0).unwrap();
            let middle = near_best(noisy.row(a), 0.75 * eps, 0.0);
            let outer = best_response_set(mu2, a, eps).unwrap();
            prop_assert!(inner.members.iter().all(|b| middle.contains(b)));
            prop_assert!(middle.iter().all(|b| outer.members.contains(b)));
        }
    }

    #[test]
    fn bandit_queries_are_exact(seed in any::<u64>(), na in 1usize..4, nb in 1usize..4, n in 1u64..50) {
        let g = random_game(na, nb, Structure::General, &mut rng(seed)).unwrap();
        let mut cfg = BanditLearnConfig::new(0.25, 0.1, TieBreaking::Pessimistic);
        cfg.samples_override = Some(n);
        let mut s = GameSampler::new(&g, seed);
        let out = learn_bandit(&mut s, &cfg).unwrap();
        prop_assert_eq!(out.total_queries, n * (na * nb) as u64);
        prop_assert_eq!(s.queries(), out.total_queries);
    }

    #[test]
    fn occupancy_matches_dynamic_programming(seed in any::<u64>(), shape in small_shape()) {
        let mut r = rng(seed);
        let mdp = random_mdp(shape, &mut r).unwrap();
        let policy = random_policy(shape, &mut r);
        let occ = occupancy_of_policy(&mdp, &policy).unwrap();
        prop_assert!(occ.max_violation(&mdp) <= 1e-12);
        for ch in [Channel::Leader, Channel::Follower] {
            let dp = policy_value(&mdp, &policy, ch).unwrap();
            prop_assert!((dp - occ.dot(mdp.rewards(ch))).abs() <= 1e-9);
        }
    }

    #[test]
    fn occupancy_programs_are_monotone(seed in any::<u64>(), shape in small_shape(), t in 0.0f64..1.0) {
        let mut r = rng(seed);
        let mdp = random_mdp(shape, &mut r).unwrap();
        let (v2, _) = value_iteration(&mdp, Channel::Follower);
        let lo = v2 * t;
        let hi = v2 * t + (v2 - v2 * t) * r.gen::<f64>();
        let w_lo = worst_case_best_response(&mdp, lo).unwrap();
        let w_hi = worst_case_best_response(&mdp, hi).unwrap();
        prop_assert!(w_hi.value >= w_lo.value - 1e-9);
        let b_lo = best_case_best_response(&mdp, lo).unwrap();
        let b_hi = best_case_best_response(&mdp, hi).unwrap();
        prop_assert!(b_hi.value <= b_lo.value + 1e-9);
        for sol in [&w_lo, &w_hi, &b_lo, &b_hi] {
            prop_assert!(sol.occupancy.max_violation(&mdp) <= 1e-8);
            prop_assert!(sol.follower_value >= lo - 1e-8);
        }
        let free = worst_case_best_response(&mdp, f64::NEG_INFINITY).unwrap();
        let unconstrained_min = -value_iteration(&mdp.with_rewards(
            mdp.rewards(Channel::Leader).iter().map(|x| 1.0 - x).collect(),
            mdp.rewards(Channel::Follower).to_vec(),
        ).unwrap(), Channel::Leader).0 + shape.horizon as f64;
        prop_assert!((free.value - unconstrained_min).abs() <= 1e-9);
    }

    #[test]
    fn lp_solutions_are_bitwise_deterministic(seed in any::<u64>(), shape in small_shape()) {
        let mdp = random_mdp(shape, &mut rng(seed)).unwrap();
        let (v2, _) = value_iteration(&mdp, Channel::Follower);
        let lp = occupancy_program(&mdp, v2 - 0.1, Sense::Minimize).unwrap();
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp(&lp).unwrap();
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        prop_assert!(a.x.iter().zip(&b.x).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn empirical_models_are_stochastic(seed in any::<u64>(), shape in small_shape(), episodes in 0usize..6) {
        let mut r = rng(seed);
        let mdp = random_mdp(shape, &mut r).unwrap();
        let mut sim = MdpSimulator::new(&mdp, rng(seed ^ 1));
        let policy = Policy::uniform(shape);
        let mut data = Vec::new();
        for _ in 0..episodes {
            data.extend(rollout(&mut sim, &policy, &mut r).unwrap());
        }
        let model = build_empirical_model(shape, mdp.initial_state(), &data).unwrap();
        for h in 0..shape.horizon.saturating_sub(1) {
            for s in 0..shape.states {
                for b in 0..shape.actions {
                    let row = &model.transitions()[shape.transition_row(h, s, b)];
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                    prop_assert!(row.iter().all(|&p| p >= 0.0));
                }
            }
        }
        prop_assert!(model.to_mdp().is_ok());
    }

    #[test]
    fn core_sets_bound_leverage(seed in any::<u64>(), d in 1usize..7, na in 1usize..6, nb in 1usize..6) {
        let features = FeatureMap::random_unit(na, nb, d, &mut rng(seed)).unwrap();
        let core = core_set(&features).unwrap();
        prop_assert!(max_leverage(&features, &core).unwrap() <= 2.0 * core.rank as f64 + 1e-9);
        prop_assert!((core.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(core.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn least_squares_is_linear(seed in any::<u64>(), d in 1usize..5, c in -2.0f64..2.0) {
        let mut r = rng(seed);
        let features = FeatureMap::random_unit(4, 4, d, &mut r).unwrap();
        let core = core_set(&features).unwrap();
        let k = core.members.len();
        let x: Vec<f64> = (0..k).map(|_| r.gen()).collect();
        let y: Vec<f64> = (0..k).map(|_| r.gen()).collect();
        let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + c * b).collect();
        let tx = weighted_least_squares(&features, &core, &x).unwrap();
        let ty = weighted_least_squares(&features, &core, &y).unwrap();
        let tc = weighted_least_squares(&features, &core, &combo).unwrap();
        for i in 0..d {
            prop_assert!((tc[i] - tx[i] - c * ty[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn mixed_learners_return_valid_strategies(seed in any::<u64>(), na in 1usize..4, nb in 1usize..4) {
        let g = random_game(na, nb, Structure::General, &mut rng(seed)).unwrap();
        let mut cfg = SimultaneousConfig::new(0.25, 0.1);
        cfg.samples_override = Some(20);
        for pessimistic in [false, true] {
            let mut s = GameSampler::new(&g, seed);
            let out = if pessimistic {
                learn_simultaneous_pessimistic(&mut s, &cfg).unwrap()
            } else {
                learn_simultaneous_optimistic(&mut s, &cfg).unwrap()
            };
            prop_assert!(out.strategy.iter().all(|&p| p >= 0.0));
            prop_assert!((out.strategy.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let mu2 = PayoffTable::new(na, nb, out.mu2_hat.clone()).unwrap();
            let w = mix(&mu2, &out.strategy);
            let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(w[out.b_hat] >= top - 0.75 * 0.25 - 1e-9);
            if !pessimistic {
                prop_assert!(out.lp_calls <= nb);
            }
        }
    }

    #[test]
    fn deterministic_games_reproduce_oracles(seed in any::<u64>(), na in 1usize..5, nb in 1usize..5) {
        let g = random_game(na, nb, Structure::General, &mut rng(seed)).unwrap()
            .with_noise(NoiseModel::Deterministic).unwrap();
        let mut cfg = BanditLearnConfig::new(0.2, 0.1, TieBreaking::Pessimistic);
        cfg.samples_override = Some(1);
        let out = learn_bandit(&mut GameSampler::new(&g, 0), &cfg).unwrap();
        let (_, best) = g.stackelberg(0.15, TieBreaking::Pessimistic).unwrap();
        prop_assert_eq!(out.phi_hat[out.a_hat], best);
    }
}
