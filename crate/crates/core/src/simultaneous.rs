//! Learners for simultaneous-move matrix games where the leader commits to a
//! mixed strategy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{estimate_means, sample_budget, DEFAULT_HOEFFDING_CONSTANT};
use crate::error::{param, Error, Result};
use crate::game::{extremum_over, near_best, PairSampler, PayoffTable, TieBreaking, EXACT_TOLERANCE};
use crate::lp::{best_mixed_leader_strategy, clean_simplex, mix, solve_lp, LinearProgram, LpStatus, Sense};

/// Margin that keeps excluded follower actions strictly outside the response set.
pub const EXCLUSION_MARGIN: f64 = 1e-9;
pub const DEFAULT_MAX_ENUMERATED_ACTIONS: usize = 12;

/// Follower response and leader value at a mixed strategy.
pub fn mixed_response(
    mu1: &PayoffTable,
    mu2: &PayoffTable,
    strategy: &[f64],
    epsilon: f64,
    tie: TieBreaking,
    tolerance: f64,
) -> (usize, f64) {
    let members = near_best(&mix(mu2, strategy), epsilon, tolerance);
    extremum_over(&mix(mu1, strategy), &members, tie)
}

/// Strategy, response and value found for one response-set cell.
type Candidate = (Vec<f64>, usize, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedChoice {
    pub strategy: Vec<f64>,
    pub b_hat: usize,
    /// Leader value of `strategy` against the pessimistic response.
    pub value: f64,
    pub lp_calls: usize,
}

/// Approximate `sup_pi min_{b in BR_t(pi)} mu1(pi, b)` by enumerating the
/// response set `T` and its best column `b*`, one program per pair.
///
/// Membership uses `tolerance` when evaluating candidates; pass `0.0` for
/// estimates and [`EXACT_TOLERANCE`] for exact means.
pub fn pessimistic_sup(
    mu1: &PayoffTable,
    mu2: &PayoffTable,
    threshold: f64,
    tolerance: f64,
    max_actions: usize,
) -> Result<MixedChoice> {
    let (na, nb) = (mu1.rows(), mu1.cols());
    if nb > max_actions || nb >= usize::BITS as usize {
        return Err(param("B", format!("{nb} follower actions exceed the enumeration cap {max_actions}")));
    }
    let nvar = na + 1;
    let cells: Vec<(usize, usize)> = (1usize..(1 << nb))
        .flat_map(|mask| (0..nb).filter(move |b| mask >> b & 1 == 1).map(move |top| (mask, top)))
        .collect();
    let solve_cell = |&(mask, top): &(usize, usize)| -> Result<Option<Candidate>> {
        let inside: Vec<usize> = (0..nb).filter(|b| mask >> b & 1 == 1).collect();
        let mut objective = vec![0.0; nvar];
        objective[na] = 1.0;
        let mut lp = LinearProgram::new(objective, Sense::Maximize);
        lp.set_bounds(na, f64::NEG_INFINITY, f64::INFINITY);
        let mut simplex = vec![1.0; nvar];
        simplex[na] = 0.0;
        lp.add_eq(simplex, 1.0);
        let diff = |b: usize, c: usize| -> Vec<f64> {
            let mut row: Vec<f64> = (0..na).map(|a| mu2.get(a, b) - mu2.get(a, c)).collect();
            row.push(0.0);
            row
        };
        for &b in &inside {
            // t <= mu1(pi, b)
            let mut row: Vec<f64> = (0..na).map(|a| -mu1.get(a, b)).collect();
            row.push(1.0);
            lp.add_le(row, 0.0);
            for c in (0..nb).filter(|&c| c != b) {
                lp.add_ge(diff(b, c), -threshold);
            }
        }
        for b in (0..nb).filter(|b| mask >> b & 1 == 0) {
            lp.add_ge(diff(top, b), threshold + EXCLUSION_MARGIN);
        }
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Ok(None);
        }
        let strategy = clean_simplex(sol.x[..na].to_vec());
        let (b_hat, value) = mixed_response(mu1, mu2, &strategy, threshold, TieBreaking::Pessimistic, tolerance);
        Ok(Some((strategy, b_hat, value)))
    };
    let solved: Vec<Result<Option<Candidate>>> = cells.par_iter().map(solve_cell).collect();
    let mut best: Option<MixedChoice> = None;
    for cell in solved {
        let Some((strategy, b_hat, value)) = cell? else { continue };
        if best.as_ref().is_none_or(|incumbent| value > incumbent.value) {
            best = Some(MixedChoice {
                strategy,
                b_hat,
                value,
                lp_calls: 0,
            });
        }
    }
    let calls = cells.len();
    let mut choice = best.ok_or_else(|| Error::Numerical("no response set is feasible".into()))?;
    choice.lp_calls = calls;
    Ok(choice)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimultaneousConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub hoeffding_constant: f64,
    pub samples_override: Option<u64>,
    pub max_enumerated_actions: usize,
}

impl SimultaneousConfig {
    pub fn new(epsilon: f64, delta: f64) -> Self {
        Self {
            epsilon,
            delta,
            hoeffding_constant: DEFAULT_HOEFFDING_CONSTANT,
            samples_override: None,
            max_enumerated_actions: DEFAULT_MAX_ENUMERATED_ACTIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimultaneousResult {
    pub strategy: Vec<f64>,
    pub b_hat: usize,
    /// Estimated leader value of `strategy`.
    pub value_hat: f64,
    pub lp_calls: usize,
    pub samples_per_pair: u64,
    pub total_queries: u64,
    pub mu1_hat: Vec<f64>,
    pub mu2_hat: Vec<f64>,
}

fn sample_all<S: PairSampler + ?Sized>(sampler: &mut S, cfg: &SimultaneousConfig) -> Result<(PayoffTable, PayoffTable, u64)> {
    let (na, nb) = (sampler.num_leader_actions(), sampler.num_follower_actions());
    let n = match cfg.samples_override {
        Some(0) => return Err(param("samples_override", "must be positive")),
        Some(n) => n,
        None => sample_budget(na, nb, cfg.epsilon, cfg.delta, cfg.hoeffding_constant)?,
    };
    let (mu1, mu2) = estimate_means(sampler, n)?;
    Ok((mu1, mu2, n))
}

/// Optimistic learner: one leader-strategy program per follower action on
/// the estimates, with response slack `3 eps / 4`.
pub fn learn_simultaneous_optimistic<S: PairSampler + ?Sized>(sampler: &mut S, cfg: &SimultaneousConfig) -> Result<SimultaneousResult> {
    let (mu1, mu2, n) = sample_all(sampler, cfg)?;
    let sol = best_mixed_leader_strategy(&mu1, &mu2, 0.75 * cfg.epsilon)?;
    Ok(SimultaneousResult {
        strategy: sol.strategy,
        b_hat: sol.follower_action,
        value_hat: sol.value,
        lp_calls: sol.lp_calls,
        samples_per_pair: n,
        total_queries: n * (mu1.rows() * mu1.cols()) as u64,
        mu1_hat: mu1.as_slice().to_vec(),
        mu2_hat: mu2.as_slice().to_vec(),
    })
}

/// Pessimistic learner: enumerates response sets on the estimates with
/// threshold `3 eps / 4`. Refuses when `B` exceeds the configured cap.
pub fn learn_simultaneous_pessimistic<S: PairSampler + ?Sized>(sampler: &mut S, cfg: &SimultaneousConfig) -> Result<SimultaneousResult> {
    let nb = sampler.num_follower_actions();
    if nb > cfg.max_enumerated_actions {
        return Err(param("B", format!("{nb} follower actions exceed the enumeration cap {}", cfg.max_enumerated_actions)));
    }
    let (mu1, mu2, n) = sample_all(sampler, cfg)?;
    let choice = pessimistic_sup(&mu1, &mu2, 0.75 * cfg.epsilon, 0.0, cfg.max_enumerated_actions)?;
    Ok(SimultaneousResult {
        strategy: choice.strategy,
        b_hat: choice.b_hat,
        value_hat: choice.value,
        lp_calls: choice.lp_calls,
        samples_per_pair: n,
        total_queries: n * (mu1.rows() * mu1.cols()) as u64,
        mu1_hat: mu1.as_slice().to_vec(),
        mu2_hat: mu2.as_slice().to_vec(),
    })
}

/// Every point of the simplex grid with spacing `1 / steps`.
pub fn simplex_grid(dim: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(dim: usize, left: usize, steps: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if prefix.len() + 1 == dim {
            prefix.push(left);
            out.push(prefix.iter().map(|&k| k as f64 / steps as f64).collect());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(dim, left - k, steps, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if dim > 0 {
        rec(dim, steps, steps, &mut Vec::with_capacity(dim), &mut out);
    }
    out
}

/// Optimistic gap over mixed strategies, evaluated on `candidates`.
///
/// Returns `max (psi_eps(pi) - psi_0(pi))` over candidates with
/// `psi_eps(pi) >= sup psi_0 - eps`, where `sup psi_0` is solved exactly.
/// Restricting to candidates can only lower the result.
pub fn optimistic_gap_on(mu1: &PayoffTable, mu2: &PayoffTable, epsilon: f64, candidates: &[Vec<f64>]) -> Result<f64> {
    let sup = best_mixed_leader_strategy(mu1, mu2, 0.0)?.value;
    let mut gap: f64 = 0.0;
    for pi in candidates {
        let (_, psi_eps) = mixed_response(mu1, mu2, pi, epsilon, TieBreaking::Optimistic, EXACT_TOLERANCE);
        if psi_eps >= sup - epsilon - EXACT_TOLERANCE {
            let (_, psi0) = mixed_response(mu1, mu2, pi, 0.0, TieBreaking::Optimistic, EXACT_TOLERANCE);
            gap = gap.max(psi_eps - psi0);
        }
    }
    Ok(gap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedOutcome {
    pub value_at_hat: f64,
    pub relaxed_value_at_hat: f64,
    pub best_value: f64,
    pub gap: f64,
    pub leader_ok: bool,
    pub follower_ok: bool,
}

/// Checks the optimistic guarantee `psi_0(pi) >= sup psi_0 - gap~_eps - eps`
/// with the gap taken over a simplex grid plus `pi` itself.
pub fn evaluate_optimistic_mixed(
    mu1: &PayoffTable,
    mu2: &PayoffTable,
    strategy: &[f64],
    b_hat: usize,
    epsilon: f64,
    grid_steps: usize,
) -> Result<MixedOutcome> {
    let best_value = best_mixed_leader_strategy(mu1, mu2, 0.0)?.value;
    let mut candidates = simplex_grid(mu1.rows(), grid_steps);
    candidates.push(strategy.to_vec());
    let gap = optimistic_gap_on(mu1, mu2, epsilon, &candidates)?;
    let (_, value_at_hat) = mixed_response(mu1, mu2, strategy, 0.0, TieBreaking::Optimistic, EXACT_TOLERANCE);
    let (_, relaxed_value_at_hat) = mixed_response(mu1, mu2, strategy, epsilon / 2.0, TieBreaking::Optimistic, EXACT_TOLERANCE);
    Ok(MixedOutcome {
        value_at_hat,
        relaxed_value_at_hat,
        best_value,
        gap,
        leader_ok: value_at_hat >= best_value - gap - epsilon - crate::lp::LP_VALUE_TOL,
        follower_ok: follower_within(mu2, strategy, b_hat, epsilon),
    })
}

/// Checks the pessimistic guarantee `phi_{eps/2}(pi) >= sup phi_eps - eps`.
pub fn evaluate_pessimistic_mixed(
    mu1: &PayoffTable,
    mu2: &PayoffTable,
    strategy: &[f64],
    b_hat: usize,
    epsilon: f64,
) -> Result<MixedOutcome> {
    let cap = mu1.cols().max(DEFAULT_MAX_ENUMERATED_ACTIONS);
    let sup0 = pessimistic_sup(mu1, mu2, 0.0, EXACT_TOLERANCE, cap)?.value;
    let sup_eps = pessimistic_sup(mu1, mu2, epsilon, EXACT_TOLERANCE, cap)?.value;
    let (_, value_at_hat) = mixed_response(mu1, mu2, strategy, 0.0, TieBreaking::Pessimistic, EXACT_TOLERANCE);
    let (_, relaxed_value_at_hat) = mixed_response(mu1, mu2, strategy, epsilon / 2.0, TieBreaking::Pessimistic, EXACT_TOLERANCE);
    let gap = (sup0 - sup_eps).max(0.0);
    Ok(MixedOutcome {
        value_at_hat,
        relaxed_value_at_hat,
        best_value: sup0,
        gap,
        leader_ok: relaxed_value_at_hat >= sup_eps - epsilon - crate::lp::LP_VALUE_TOL,
        follower_ok: follower_within(mu2, strategy, b_hat, epsilon),
    })
}

fn follower_within(mu2: &PayoffTable, strategy: &[f64], b: usize, epsilon: f64) -> bool {
    let w = mix(mu2, strategy);
    let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    w[b] >= top - epsilon - EXACT_TOLERANCE
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{BanditGame, GameSampler, NoiseModel};
    use crate::instances::{random_game, mixed_commitment_game, Structure};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mixed_commitment_optimistic() {
        let g = mixed_commitment_game();
        let mut cfg = SimultaneousConfig::new(1e-6, 0.1);
        cfg.samples_override = Some(1);
        let r = learn_simultaneous_optimistic(&mut GameSampler::new(&g, 0), &cfg).unwrap();
        assert_eq!(r.b_hat, 1);
        assert!((r.value_hat - 3.5).abs() < 1e-5);
        assert!((r.strategy[0] - 0.5).abs() < 1e-5);
        assert_eq!(r.lp_calls, 2);
    }

    #[test]
    fn mixed_commitment_pessimistic_approaches_half() {
        let g = mixed_commitment_game();
        let eps = 0.01;
        let mut cfg = SimultaneousConfig::new(eps, 0.1);
        cfg.samples_override = Some(1);
        let r = learn_simultaneous_pessimistic(&mut GameSampler::new(&g, 0), &cfg).unwrap();
        assert_eq!(r.b_hat, 1);
        assert!(r.value_hat >= 3.5 - eps / 2.0 - 1e-6, "{}", r.value_hat);
        assert!(r.value_hat <= 3.5);
        assert_eq!(r.lp_calls, 2 * 2);
    }

    #[test]
    fn single_leader_action() {
        let g = BanditGame::from_rows(&[vec![0.3, 0.8, 0.5]], &[vec![0.9, 0.6, 0.85]], NoiseModel::Deterministic).unwrap();
        let mut cfg = SimultaneousConfig::new(0.2, 0.1);
        cfg.samples_override = Some(1);
        let o = learn_simultaneous_optimistic(&mut GameSampler::new(&g, 0), &cfg).unwrap();
        assert_eq!((o.b_hat, o.value_hat), (2, 0.5));
        let p = learn_simultaneous_pessimistic(&mut GameSampler::new(&g, 0), &cfg).unwrap();
        let phi = g.phi_value(0, 0.15, TieBreaking::Pessimistic).unwrap();
        assert_eq!(p.value_hat, phi);
        assert_eq!(p.strategy, vec![1.0]);
    }

    #[test]
    fn pessimistic_sup_matches_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let eps = 0.2;
        for _ in 0..30 {
            let g = random_game(2, 3, Structure::General, &mut rng).unwrap();
            let (mu1, mu2) = (g.mean_leader(), g.mean_follower());
            let sup = pessimistic_sup(mu1, mu2, eps, EXACT_TOLERANCE, 12).unwrap();
            let grid = (0..=1000)
                .map(|i| {
                    let p = i as f64 / 1000.0;
                    mixed_response(mu1, mu2, &[p, 1.0 - p], eps, TieBreaking::Pessimistic, EXACT_TOLERANCE).1
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(sup.value >= grid - 1e-9, "{} < {}", sup.value, grid);
            assert!(sup.value <= grid + 2e-3 + eps / 2.0);
            let (b, v) = mixed_response(mu1, mu2, &sup.strategy, eps, TieBreaking::Pessimistic, EXACT_TOLERANCE);
            assert_eq!((b, v), (sup.b_hat, sup.value));
        }
    }

    #[test]
    fn refuses_large_enumeration() {
        let g = random_game(2, 13, Structure::General, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut cfg = SimultaneousConfig::new(0.2, 0.1);
        cfg.samples_override = Some(1);
        assert!(learn_simultaneous_pessimistic(&mut GameSampler::new(&g, 0), &cfg).is_err());
    }

    #[test]
    fn outputs_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for seed in 0..10 {
            let g = random_game(3, 3, Structure::General, &mut rng).unwrap();
            let mut cfg = SimultaneousConfig::new(0.25, 0.1);
            cfg.samples_override = Some(200);
            for pess in [true, false] {
                let mut s = GameSampler::new(&g, seed);
                let r = if pess {
                    learn_simultaneous_pessimistic(&mut s, &cfg).unwrap()
                } else {
                    learn_simultaneous_optimistic(&mut s, &cfg).unwrap()
                };
                assert!((r.strategy.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(r.strategy.iter().all(|&p| p >= 0.0));
                let mu2 = PayoffTable::new(3, 3, r.mu2_hat.clone()).unwrap();
                let w = mix(&mu2, &r.strategy);
                let top = w.iter().copied().fold(f64::MIN, f64::max);
                assert!(w[r.b_hat] >= top - 0.1875 - 1e-8);
            }
        }
    }

    #[test]
    fn grid_has_expected_size() {
        assert_eq!(simplex_grid(3, 10).len(), 66);
        assert_eq!(simplex_grid(1, 10), vec![vec![1.0]]);
        assert!(simplex_grid(2, 4).iter().all(|p| (p.iter().sum::<f64>() - 1.0).abs() < 1e-15));
    }
}
