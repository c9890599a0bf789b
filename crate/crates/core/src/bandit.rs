//! Uniform-allocation learner for tabular bandit games.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::game::{argmax, extremum_over, near_best, BanditGame, PairSampler, PayoffTable, TieBreaking, EXACT_TOLERANCE};

pub const DEFAULT_HOEFFDING_CONSTANT: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditLearnConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub tie: TieBreaking,
    pub hoeffding_constant: f64,
    /// Replaces the computed per-pair budget when set.
    pub samples_override: Option<u64>,
}

impl BanditLearnConfig {
    pub fn new(epsilon: f64, delta: f64, tie: TieBreaking) -> Self {
        Self {
            epsilon,
            delta,
            tie,
            hoeffding_constant: DEFAULT_HOEFFDING_CONSTANT,
            samples_override: None,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        check_accuracy(self.epsilon, self.delta)?;
        if !(self.hoeffding_constant.is_finite() && self.hoeffding_constant > 0.0) {
            return Err(param("hoeffding_constant", "must be positive"));
        }
        if self.samples_override == Some(0) {
            return Err(param("samples_override", "must be positive"));
        }
        Ok(())
    }
}

pub(crate) fn check_accuracy(epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(param("epsilon", format!("must lie in (0, 1), got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(param("delta", format!("must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Per-pair sample count `ceil(C ln(4AB/delta) / eps^2)`.
pub fn sample_budget(na: usize, nb: usize, epsilon: f64, delta: f64, constant: f64) -> Result<u64> {
    if na == 0 || nb == 0 {
        return Err(Error::EmptyDimension("actions"));
    }
    check_accuracy(epsilon, delta)?;
    if !(constant.is_finite() && constant > 0.0) {
        return Err(param("constant", "must be positive"));
    }
    let n = (constant * (4.0 * (na * nb) as f64 / delta).ln() / (epsilon * epsilon)).ceil();
    Ok((n as u64).max(1))
}

/// Leader choice derived from estimated mean tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedChoice {
    pub a_hat: usize,
    pub b_hat: usize,
    /// Estimated response set per leader action.
    pub response_sets: Vec<Vec<usize>>,
    /// Estimated leader value per leader action.
    pub phi_hat: Vec<f64>,
}

/// Picks `(a_hat, b_hat)` from estimates with response threshold `threshold`.
///
/// Membership is the plain inequality on estimates, without tolerance.
pub fn choose_from_estimates(mu1: &PayoffTable, mu2: &PayoffTable, threshold: f64, tie: TieBreaking) -> EstimatedChoice {
    let mut response_sets = Vec::with_capacity(mu1.rows());
    let mut phi_hat = Vec::with_capacity(mu1.rows());
    let mut responses = Vec::with_capacity(mu1.rows());
    for a in 0..mu1.rows() {
        let set = near_best(mu2.row(a), threshold, 0.0);
        let (b, v) = extremum_over(mu1.row(a), &set, tie);
        response_sets.push(set);
        phi_hat.push(v);
        responses.push(b);
    }
    let a_hat = argmax(&phi_hat);
    EstimatedChoice {
        a_hat,
        b_hat: responses[a_hat],
        response_sets,
        phi_hat,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditLearnResult {
    pub a_hat: usize,
    pub b_hat: usize,
    pub samples_per_pair: u64,
    pub total_queries: u64,
    pub mu1_hat: Vec<f64>,
    pub mu2_hat: Vec<f64>,
    pub response_sets: Vec<Vec<usize>>,
    pub phi_hat: Vec<f64>,
}

/// Empirical means of both channels after `n` queries of every pair.
pub fn estimate_means<S: PairSampler + ?Sized>(sampler: &mut S, n: u64) -> Result<(PayoffTable, PayoffTable)> {
    let (na, nb) = (sampler.num_leader_actions(), sampler.num_follower_actions());
    let mut mu1 = Vec::with_capacity(na * nb);
    let mut mu2 = Vec::with_capacity(na * nb);
    for a in 0..na {
        for b in 0..nb {
            let (s1, s2) = sample_pair(sampler, a, b, n)?;
            mu1.push(s1);
            mu2.push(s2);
        }
    }
    Ok((PayoffTable::new(na, nb, mu1)?, PayoffTable::new(na, nb, mu2)?))
}

/// Mean of `n` observations of one pair.
pub(crate) fn sample_pair<S: PairSampler + ?Sized>(sampler: &mut S, a: usize, b: usize, n: u64) -> Result<(f64, f64)> {
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let (r1, r2) = sampler.query(a, b)?;
        s1 += r1;
        s2 += r2;
    }
    Ok((s1 / n as f64, s2 / n as f64))
}

/// Queries every pair `N` times and commits to the best estimated leader action.
pub fn learn_bandit<S: PairSampler + ?Sized>(sampler: &mut S, cfg: &BanditLearnConfig) -> Result<BanditLearnResult> {
    cfg.validate()?;
    let (na, nb) = (sampler.num_leader_actions(), sampler.num_follower_actions());
    let n = match cfg.samples_override {
        Some(n) => n,
        None => sample_budget(na, nb, cfg.epsilon, cfg.delta, cfg.hoeffding_constant)?,
    };
    let (mu1, mu2) = estimate_means(sampler, n)?;
    let choice = choose_from_estimates(&mu1, &mu2, 0.75 * cfg.epsilon, cfg.tie);
    Ok(BanditLearnResult {
        a_hat: choice.a_hat,
        b_hat: choice.b_hat,
        samples_per_pair: n,
        total_queries: n * (na * nb) as u64,
        mu1_hat: mu1.as_slice().to_vec(),
        mu2_hat: mu2.as_slice().to_vec(),
        response_sets: choice.response_sets,
        phi_hat: choice.phi_hat,
    })
}

/// Exact-oracle evaluation of a learner's output `(a_hat, b_hat)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditOutcome {
    /// `phi_0(a_hat)` (or `psi_0` under optimistic ties).
    pub value_at_hat: f64,
    /// `phi_{eps/2}(a_hat)` (or `psi_{eps/2}`).
    pub relaxed_value_at_hat: f64,
    /// `max_a phi_0(a)` (or `psi_0`).
    pub best_value: f64,
    /// `gap_eps` (or the optimistic gap).
    pub gap: f64,
    pub leader_ok: bool,
    pub follower_ok: bool,
}

/// Checks the leader and follower guarantees on the true game.
///
/// Pessimistic: `phi_{eps/2}(a_hat) >= max phi_0 - gap_eps - eps`.
/// Optimistic: `psi_0(a_hat) >= max psi_0 - gap~_eps - eps`.
/// Both: `mu2(a_hat, b_hat) >= max_b mu2(a_hat, b) - eps`.
pub fn evaluate_bandit_outcome(
    game: &BanditGame,
    a_hat: usize,
    b_hat: usize,
    epsilon: f64,
    tie: TieBreaking,
) -> Result<BanditOutcome> {
    let value_at_hat = game.phi_value(a_hat, 0.0, tie)?;
    let relaxed_value_at_hat = game.phi_value(a_hat, epsilon / 2.0, tie)?;
    let (_, best_value) = game.stackelberg(0.0, tie)?;
    let gap = game.gap_for(epsilon, tie)?;
    let target = best_value - gap - epsilon - EXACT_TOLERANCE;
    let leader_ok = match tie {
        TieBreaking::Pessimistic => relaxed_value_at_hat >= target,
        TieBreaking::Optimistic => value_at_hat >= target,
    };
    let row = game.mean_follower().row(a_hat);
    let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let follower_ok = row[b_hat] >= top - epsilon - EXACT_TOLERANCE;
    Ok(BanditOutcome {
        value_at_hat,
        relaxed_value_at_hat,
        best_value,
        gap,
        leader_ok,
        follower_ok,
    })
}
