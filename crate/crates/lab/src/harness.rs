//! Trial orchestration and exact-oracle scoring.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stackelberg_core::bandit::{evaluate_bandit_outcome, learn_bandit, sample_budget, BanditLearnConfig};
use stackelberg_core::bandit_rl::{evaluate_rl_outcome, learn_bandit_rl_simulated, RlLearnConfig};
use stackelberg_core::game::{BanditGame, GameSampler, TieBreaking, EXACT_TOLERANCE};
use stackelberg_core::linear::{learn_linear, linear_sample_budget, LinearLearnConfig};
use stackelberg_core::reward_free::ExploreConfig;
use stackelberg_core::simultaneous::{
    evaluate_optimistic_mixed, evaluate_pessimistic_mixed, learn_simultaneous_optimistic, learn_simultaneous_pessimistic, SimultaneousConfig,
};

use crate::config::{ExperimentConfig, Instance, Setting};
use crate::HarnessError;

/// Environment variable holding the worker count; unset or 0 uses all cores.
pub const THREADS_ENV: &str = "STACKELBERG_LAB_THREADS";

/// One learner run scored against the true instance.
///
/// Value columns hold `phi` under pessimistic ties and `psi` under
/// optimistic ones. Failed trials carry the message in `error`, NaN values
/// and false flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub setting: Setting,
    pub tie: TieBreaking,
    pub cell: usize,
    pub trial: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub budget_multiplier: f64,
    pub n_total_queries: u64,
    pub choice: String,
    /// Value of the chosen action with exact responses.
    pub value_at_hat: f64,
    /// Value of the chosen action with `eps/2`-approximate responses.
    pub relaxed_value_at_hat: f64,
    /// Best exact value over leader actions (or strategies).
    pub best_value: f64,
    pub gap: f64,
    pub leader_ok: bool,
    pub follower_ok: bool,
    pub wall_time_ms: f64,
    pub error: String,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        !self.error.is_empty()
    }

    /// `best - value`, the leader's shortfall against the exact optimum.
    pub fn deficit(&self) -> f64 {
        self.best_value - self.value_at_hat
    }

    /// Recomputes the leader flag from the numeric columns.
    pub fn leader_flag_from_values(&self) -> bool {
        let lhs = match self.tie {
            TieBreaking::Pessimistic => self.relaxed_value_at_hat,
            TieBreaking::Optimistic => self.value_at_hat,
        };
        lhs >= self.best_value - self.gap - self.epsilon - 1e-9
    }
}

fn digest_u64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest has 32 bytes"))
}

/// Seed of `(cell, trial)` under `base`.
pub fn trial_seed(base: u64, cell: usize, trial: usize) -> u64 {
    digest_u64(&[b"trial", &base.to_le_bytes(), &(cell as u64).to_le_bytes(), &(trial as u64).to_le_bytes()])
}

/// Seed of the instance drawn for `trial`; shared by every cell.
pub fn instance_seed(base: u64, trial: usize) -> u64 {
    digest_u64(&[b"instance", &base.to_le_bytes(), &(trial as u64).to_le_bytes()])
}

fn thread_pool() -> Result<rayon::ThreadPool, HarnessError> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| HarnessError::Config(format!("{THREADS_ENV}={v} is not a thread count")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))
}

/// Runs every `(cell, trial)` of the sweep and returns records sorted by
/// cell, then trial. Learner and oracle errors are recorded per trial.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>, HarnessError> {
    cfg.validate()?;
    let shared = if cfg.instance.resamples() {
        None
    } else {
        Some(cfg.instance.load(cfg.setting, None)?)
    };
    let jobs: Vec<(usize, usize)> = (0..cfg.cells()).flat_map(|c| (0..cfg.trials).map(move |t| (c, t))).collect();
    let pool = thread_pool()?;
    let records = pool.install(|| {
        jobs.par_iter()
            .map(|&(cell, trial)| {
                let start = Instant::now();
                let seed = trial_seed(cfg.base_seed, cell, trial);
                let (epsilon, multiplier) = cfg.cell(cell);
                let mut record = TrialRecord {
                    setting: cfg.setting,
                    tie: cfg.tie,
                    cell,
                    trial,
                    seed,
                    epsilon,
                    budget_multiplier: multiplier,
                    n_total_queries: 0,
                    choice: String::new(),
                    value_at_hat: f64::NAN,
                    relaxed_value_at_hat: f64::NAN,
                    best_value: f64::NAN,
                    gap: f64::NAN,
                    leader_ok: false,
                    follower_ok: false,
                    wall_time_ms: 0.0,
                    error: String::new(),
                };
                let outcome = match &shared {
                    Some(instance) => run_trial(cfg, instance, epsilon, multiplier, seed, &mut record),
                    None => cfg
                        .instance
                        .load(cfg.setting, Some(instance_seed(cfg.base_seed, trial)))
                        .and_then(|instance| run_trial(cfg, &instance, epsilon, multiplier, seed, &mut record)),
                };
                if let Err(e) = outcome {
                    record.error = e.to_string();
                    record.leader_ok = false;
                    record.follower_ok = false;
                }
                if cfg.constants.record_wall_time {
                    record.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
                }
                record
            })
            .collect::<Vec<_>>()
    });
    Ok(records)
}

fn scaled(n: u64, multiplier: f64) -> u64 {
    ((n as f64 * multiplier).ceil() as u64).max(1)
}

fn bandit_game(instance: &Instance, setting: Setting) -> Result<&BanditGame, HarnessError> {
    match instance {
        Instance::Bandit(g) => Ok(g),
        _ => Err(HarnessError::Config(format!("{setting} needs a tabular game"))),
    }
}

fn run_trial(cfg: &ExperimentConfig, instance: &Instance, epsilon: f64, multiplier: f64, seed: u64, rec: &mut TrialRecord) -> Result<(), HarnessError> {
    let c = cfg.constants;
    match cfg.setting {
        Setting::Bandit => {
            let game = bandit_game(instance, cfg.setting)?;
            let (na, nb) = (game.num_leader_actions(), game.num_follower_actions());
            let mut lc = BanditLearnConfig::new(epsilon, cfg.delta, cfg.tie);
            lc.hoeffding_constant = c.hoeffding;
            lc.samples_override = Some(scaled(sample_budget(na, nb, epsilon, cfg.delta, c.hoeffding)?, multiplier));
            let out = learn_bandit(&mut GameSampler::new(game, seed), &lc)?;
            let o = evaluate_bandit_outcome(game, out.a_hat, out.b_hat, epsilon, cfg.tie)?;
            rec.n_total_queries = out.total_queries;
            rec.choice = format!("a={};b={}", out.a_hat, out.b_hat);
            fill(rec, o.value_at_hat, o.relaxed_value_at_hat, o.best_value, o.gap, o.leader_ok, o.follower_ok);
        }
        Setting::Linear => {
            let Instance::Linear(game) = instance else {
                return Err(HarnessError::Config("linear setting needs a linear game".into()));
            };
            let truth = game.to_bandit_game()?;
            let mut lc = LinearLearnConfig::new(epsilon, cfg.delta, cfg.tie);
            lc.constant = c.hoeffding;
            lc.samples_override = Some(scaled(linear_sample_budget(game.features().dim(), epsilon, cfg.delta, c.hoeffding)?, multiplier));
            let out = learn_linear(&mut GameSampler::new(&truth, seed), game.features(), &lc)?;
            let o = evaluate_bandit_outcome(&truth, out.a_hat, out.b_hat, epsilon, cfg.tie)?;
            rec.n_total_queries = out.total_queries;
            rec.choice = format!("a={};b={}", out.a_hat, out.b_hat);
            fill(rec, o.value_at_hat, o.relaxed_value_at_hat, o.best_value, o.gap, o.leader_ok, o.follower_ok);
        }
        Setting::BanditRl => {
            let Instance::BanditRl(game) = instance else {
                return Err(HarnessError::Config("bandit-rl setting needs a bandit-RL game".into()));
            };
            let explore = ExploreConfig::from_orders(
                game.shape(),
                epsilon,
                cfg.delta,
                c.explore_multiplier * multiplier,
                c.data_multiplier * multiplier,
            )?;
            let lc = RlLearnConfig {
                epsilon,
                delta: cfg.delta,
                tie: cfg.tie,
                explore,
            };
            let out = learn_bandit_rl_simulated(game, &lc, seed)?;
            let o = evaluate_rl_outcome(game, out.a_hat, &out.policy, epsilon, cfg.tie)?;
            let bytes: Vec<u8> = out.policy.probs().iter().flat_map(|p| p.to_le_bytes()).collect();
            rec.n_total_queries = out.episodes;
            rec.choice = format!("a={};policy={:016x}", out.a_hat, digest_u64(&[&bytes]));
            fill(rec, o.value_at_hat, o.relaxed_value_at_hat, o.best_value, o.gap, o.leader_ok, o.follower_ok);
        }
        Setting::Simultaneous => {
            let game = bandit_game(instance, cfg.setting)?;
            let (na, nb) = (game.num_leader_actions(), game.num_follower_actions());
            let mut sc = SimultaneousConfig::new(epsilon, cfg.delta);
            sc.hoeffding_constant = c.hoeffding;
            sc.samples_override = Some(scaled(sample_budget(na, nb, epsilon, cfg.delta, c.hoeffding)?, multiplier));
            let mut sampler = GameSampler::new(game, seed);
            let (mu1, mu2) = (game.mean_leader(), game.mean_follower());
            let (out, o) = match cfg.tie {
                TieBreaking::Pessimistic => {
                    let out = learn_simultaneous_pessimistic(&mut sampler, &sc)?;
                    let o = evaluate_pessimistic_mixed(mu1, mu2, &out.strategy, out.b_hat, epsilon)?;
                    (out, o)
                }
                TieBreaking::Optimistic => {
                    let out = learn_simultaneous_optimistic(&mut sampler, &sc)?;
                    if out.lp_calls > nb {
                        return Err(HarnessError::Invariant(format!("optimistic learner used {} programs for {nb} actions", out.lp_calls)));
                    }
                    let o = evaluate_optimistic_mixed(mu1, mu2, &out.strategy, out.b_hat, epsilon, c.grid_steps)?;
                    (out, o)
                }
            };
            let pi: Vec<String> = out.strategy.iter().map(|p| format!("{p:.6}")).collect();
            rec.n_total_queries = out.total_queries;
            rec.choice = format!("pi={};b={}", pi.join(","), out.b_hat);
            fill(rec, o.value_at_hat, o.relaxed_value_at_hat, o.best_value, o.gap, o.leader_ok, o.follower_ok);
        }
    }
    Ok(())
}

fn fill(rec: &mut TrialRecord, value: f64, relaxed: f64, best: f64, gap: f64, leader_ok: bool, follower_ok: bool) {
    rec.value_at_hat = value;
    rec.relaxed_value_at_hat = relaxed;
    rec.best_value = best;
    rec.gap = gap;
    rec.leader_ok = leader_ok;
    rec.follower_ok = follower_ok;
}

/// One point of the relaxed-value curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub epsilon: f64,
    pub max_phi: f64,
    pub gap: f64,
}

/// `max_a phi_eps(a)` and `gap_eps` on a sorted copy of `grid`.
pub fn gap_curve(game: &BanditGame, grid: &[f64]) -> Result<Vec<GapPoint>, HarnessError> {
    let mut eps: Vec<f64> = grid.to_vec();
    if let Some(e) = eps.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(HarnessError::Config(format!("epsilon {e} must be nonnegative")));
    }
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    let mut points = Vec::with_capacity(eps.len());
    for e in eps {
        let (_, max_phi) = game.stackelberg(e, TieBreaking::Pessimistic)?;
        let gap = game.gap(e)?;
        if let Some(prev) = points.last().map(|p: &GapPoint| p.max_phi) {
            if max_phi > prev + EXACT_TOLERANCE {
                return Err(HarnessError::Invariant(format!("relaxed value increased at epsilon {e}")));
            }
        }
        points.push(GapPoint { epsilon: e, max_phi, gap });
    }
    Ok(points)
}
