//! Bandit-RL games: the leader's action selects the MDP the follower plays.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_index, param, Error, Result};
use crate::game::{argmax, TieBreaking, EXACT_TOLERANCE};
use crate::lp::{constrained_best_response, LP_VALUE_TOL};
use crate::mdp::{policy_value, value_iteration, Channel, EpisodicEnv, EpisodicMdp, MdpSimulator, Policy, Shape};
use crate::reward_free::{explore, EmpiricalModel, ExploreConfig};

/// One episodic MDP per leader action, all of the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<EpisodicMdp>", into = "Vec<EpisodicMdp>")]
pub struct BanditRlGame {
    arms: Vec<EpisodicMdp>,
}

impl BanditRlGame {
    pub fn new(arms: Vec<EpisodicMdp>) -> Result<Self> {
        let Some(first) = arms.first() else {
            return Err(Error::EmptyDimension("leader actions"));
        };
        if arms.iter().any(|m| m.shape() != first.shape()) {
            return Err(param("arms", "all MDPs must share one shape"));
        }
        Ok(Self { arms })
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn shape(&self) -> Shape {
        self.arms[0].shape()
    }

    pub fn arm(&self, a: usize) -> &EpisodicMdp {
        &self.arms[a]
    }

    pub fn arms(&self) -> &[EpisodicMdp] {
        &self.arms
    }
}

impl TryFrom<Vec<EpisodicMdp>> for BanditRlGame {
    type Error = Error;

    fn try_from(arms: Vec<EpisodicMdp>) -> Result<Self> {
        Self::new(arms)
    }
}

impl From<BanditRlGame> for Vec<EpisodicMdp> {
    fn from(g: BanditRlGame) -> Self {
        g.arms
    }
}

/// Leader value at `a` against `epsilon`-optimal follower policies.
pub fn exact_phi_rl(game: &BanditRlGame, a: usize, epsilon: f64, tie: TieBreaking) -> Result<f64> {
    check_index("leader action", a, game.num_arms())?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(param("epsilon", "must be finite and >= 0"));
    }
    Ok(relaxed_response(game.arm(a), epsilon, tie)?.0)
}

/// Value and policy of the constrained response at threshold `V2* - epsilon`.
fn relaxed_response(mdp: &EpisodicMdp, epsilon: f64, tie: TieBreaking) -> Result<(f64, Policy)> {
    let (v2, _) = value_iteration(mdp, Channel::Follower);
    let sol = constrained_best_response(mdp, v2 - epsilon, tie)?;
    Ok((sol.value, sol.policy))
}

pub fn phi_values_rl(game: &BanditRlGame, epsilon: f64, tie: TieBreaking) -> Result<Vec<f64>> {
    (0..game.num_arms()).map(|a| exact_phi_rl(game, a, epsilon, tie)).collect()
}

/// `max_a phi_0(a) - max_a phi_eps(a)` with LP-valued `phi`.
pub fn gap_rl(game: &BanditRlGame, epsilon: f64) -> Result<f64> {
    let max = |v: Vec<f64>| v.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let exact = max(phi_values_rl(game, 0.0, TieBreaking::Pessimistic)?);
    let relaxed = max(phi_values_rl(game, epsilon, TieBreaking::Pessimistic)?);
    Ok((exact - relaxed).max(0.0))
}

/// Optimistic gap with LP-valued `psi`.
pub fn optimistic_gap_rl(game: &BanditRlGame, epsilon: f64) -> Result<f64> {
    let psi0 = phi_values_rl(game, 0.0, TieBreaking::Optimistic)?;
    let psi_eps = phi_values_rl(game, epsilon, TieBreaking::Optimistic)?;
    let best = psi0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(psi0
        .iter()
        .zip(&psi_eps)
        .filter(|(_, &pe)| pe >= best - epsilon - LP_VALUE_TOL)
        .map(|(&p0, &pe)| pe - p0)
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlLearnConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub tie: TieBreaking,
    pub explore: ExploreConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlLearnResult {
    pub a_hat: usize,
    pub policy: Policy,
    pub phi_hat: Vec<f64>,
    pub follower_optimum_hat: Vec<f64>,
    pub models: Vec<EmpiricalModel>,
    pub episodes: u64,
}

/// Explores every arm, then evaluates each arm's constrained response on its
/// empirical model at threshold `V2_hat* - 3 eps / 4`.
pub fn learn_bandit_rl<E: EpisodicEnv>(envs: &mut [E], cfg: &RlLearnConfig, seed: u64) -> Result<RlLearnResult> {
    crate::bandit::check_accuracy(cfg.epsilon, cfg.delta)?;
    if envs.is_empty() {
        return Err(Error::EmptyDimension("leader actions"));
    }
    let shape = envs[0].shape();
    if envs.iter().any(|e| e.shape() != shape) {
        return Err(param("envs", "all environments must share one shape"));
    }
    let mut phi_hat = Vec::with_capacity(envs.len());
    let mut follower_optimum_hat = Vec::with_capacity(envs.len());
    let mut policies = Vec::with_capacity(envs.len());
    let mut models = Vec::with_capacity(envs.len());
    let mut episodes = 0;
    for (a, env) in envs.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(a as u64);
        let out = explore(env, &cfg.explore, &mut rng)?;
        episodes += out.episodes;
        let estimate = out.model.to_mdp()?;
        let (v2_hat, _) = value_iteration(&estimate, Channel::Follower);
        let sol = constrained_best_response(&estimate, v2_hat - 0.75 * cfg.epsilon, cfg.tie).map_err(|e| match e {
            Error::ThresholdUnreachable { .. } => Error::Numerical(format!("relaxed threshold infeasible for arm {a}")),
            other => other,
        })?;
        phi_hat.push(sol.value);
        follower_optimum_hat.push(v2_hat);
        policies.push(sol.policy);
        models.push(out.model);
    }
    let a_hat = argmax(&phi_hat);
    Ok(RlLearnResult {
        a_hat,
        policy: policies.swap_remove(a_hat),
        phi_hat,
        follower_optimum_hat,
        models,
        episodes,
    })
}

/// Runs [`learn_bandit_rl`] against simulators of `game`.
pub fn learn_bandit_rl_simulated(game: &BanditRlGame, cfg: &RlLearnConfig, seed: u64) -> Result<RlLearnResult> {
    let mut envs: Vec<_> = game
        .arms()
        .iter()
        .enumerate()
        .map(|(a, m)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            rng.set_stream(a as u64);
            MdpSimulator::new(m, rng)
        })
        .collect();
    learn_bandit_rl(&mut envs, cfg, seed)
}

/// Exact-oracle evaluation of `(a_hat, policy)` on the true game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlOutcome {
    pub value_at_hat: f64,
    pub relaxed_value_at_hat: f64,
    pub best_value: f64,
    pub gap: f64,
    pub follower_value: f64,
    pub follower_optimum: f64,
    pub leader_ok: bool,
    pub follower_ok: bool,
}

pub fn evaluate_rl_outcome(game: &BanditRlGame, a_hat: usize, policy: &Policy, epsilon: f64, tie: TieBreaking) -> Result<RlOutcome> {
    let values = phi_values_rl(game, 0.0, tie)?;
    let best_value = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let relaxed_value_at_hat = exact_phi_rl(game, a_hat, epsilon / 2.0, tie)?;
    let gap = match tie {
        TieBreaking::Pessimistic => gap_rl(game, epsilon)?,
        TieBreaking::Optimistic => optimistic_gap_rl(game, epsilon)?,
    };
    let target = best_value - gap - epsilon - LP_VALUE_TOL;
    let leader_ok = match tie {
        TieBreaking::Pessimistic => relaxed_value_at_hat >= target,
        TieBreaking::Optimistic => values[a_hat] >= target,
    };
    let mdp = game.arm(a_hat);
    let follower_value = policy_value(mdp, policy, Channel::Follower)?;
    let (follower_optimum, _) = value_iteration(mdp, Channel::Follower);
    Ok(RlOutcome {
        value_at_hat: values[a_hat],
        relaxed_value_at_hat,
        best_value,
        gap,
        follower_value,
        follower_optimum,
        leader_ok,
        follower_ok: follower_value >= follower_optimum - epsilon - EXACT_TOLERANCE,
    })
}
