//! Experiment configuration and instance loading.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stackelberg_core::bandit::DEFAULT_HOEFFDING_CONSTANT;
use stackelberg_core::bandit_rl::BanditRlGame;
use stackelberg_core::game::{BanditGame, TieBreaking};
use stackelberg_core::instances::{embed_as_bandit_rl, one_hot_linear_embedding, random_bandit_rl, random_linear_game, InstanceDescriptor};
use stackelberg_core::linear::LinearGame;
use stackelberg_core::mdp::Shape;

use crate::HarnessError;

/// Pinned reward-free budget multipliers, see [`ExploreConfig::from_orders`].
///
/// [`ExploreConfig::from_orders`]: stackelberg_core::reward_free::ExploreConfig::from_orders
pub const DEFAULT_EXPLORE_MULTIPLIER: f64 = 1e-3;
pub const DEFAULT_DATA_MULTIPLIER: f64 = 0.25;
pub const DEFAULT_GRID_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    Bandit,
    BanditRl,
    Linear,
    Simultaneous,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::Bandit => "bandit",
            Setting::BanditRl => "bandit-rl",
            Setting::Linear => "linear",
            Setting::Simultaneous => "simultaneous",
        }
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the game comes from. With `resample`, every trial index draws a
/// fresh random instance; the draw does not depend on the sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceSpec {
    Descriptor {
        descriptor: InstanceDescriptor,
        /// Which game to use when the family yields several.
        #[serde(default)]
        member: usize,
        #[serde(default)]
        resample: bool,
    },
    File {
        path: PathBuf,
    },
    RandomMdp {
        arms: usize,
        horizon: usize,
        states: usize,
        actions: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        resample: bool,
    },
    RandomLinear {
        leader_actions: usize,
        follower_actions: usize,
        dim: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        resample: bool,
    },
}

impl InstanceSpec {
    pub fn resamples(&self) -> bool {
        match self {
            InstanceSpec::Descriptor { resample, .. } | InstanceSpec::RandomMdp { resample, .. } | InstanceSpec::RandomLinear { resample, .. } => *resample,
            InstanceSpec::File { .. } => false,
        }
    }

    /// Resolves a relative file path against `base`.
    pub fn rebase(&mut self, base: &Path) {
        if let InstanceSpec::File { path } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    /// Builds the instance for `setting`; `seed` replaces the stored seed.
    pub fn load(&self, setting: Setting, seed: Option<u64>) -> Result<Instance, HarnessError> {
        match self {
            InstanceSpec::Descriptor { descriptor, member, .. } => {
                let mut d = descriptor.clone();
                if let Some(s) = seed {
                    d.seed = s;
                }
                let mut games = d.build()?;
                if *member >= games.len() {
                    return Err(HarnessError::Config(format!("member {member} out of range for {}", d.family.name())));
                }
                let game = games.swap_remove(*member);
                Ok(match setting {
                    Setting::Bandit | Setting::Simultaneous => Instance::Bandit(game),
                    Setting::BanditRl => Instance::BanditRl(embed_as_bandit_rl(&game)?),
                    Setting::Linear => Instance::Linear(one_hot_linear_embedding(&game)?),
                })
            }
            InstanceSpec::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
                Ok(match setting {
                    Setting::Bandit | Setting::Simultaneous => Instance::Bandit(serde_json::from_str(&text)?),
                    Setting::BanditRl => Instance::BanditRl(serde_json::from_str(&text)?),
                    Setting::Linear => Instance::Linear(serde_json::from_str(&text)?),
                })
            }
            InstanceSpec::RandomMdp {
                arms,
                horizon,
                states,
                actions,
                seed: stored,
                ..
            } => {
                if setting != Setting::BanditRl {
                    return Err(HarnessError::Config(format!("random-mdp instances need the bandit-rl setting, not {setting}")));
                }
                let shape = Shape::new(*horizon, *states, *actions)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(*stored));
                Ok(Instance::BanditRl(random_bandit_rl(*arms, shape, &mut rng)?))
            }
            InstanceSpec::RandomLinear {
                leader_actions,
                follower_actions,
                dim,
                seed: stored,
                ..
            } => {
                if setting != Setting::Linear {
                    return Err(HarnessError::Config(format!("random-linear instances need the linear setting, not {setting}")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(*stored));
                Ok(Instance::Linear(random_linear_game(*leader_actions, *follower_actions, *dim, &mut rng)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Bandit(BanditGame),
    BanditRl(BanditRlGame),
    Linear(LinearGame),
}

/// Constants that are fixed across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constants {
    pub hoeffding: f64,
    pub explore_multiplier: f64,
    pub data_multiplier: f64,
    /// Simplex grid resolution for the optimistic mixed-strategy gap oracle.
    pub grid_steps: usize,
    /// Records measured wall time; off by default so outputs are reproducible.
    pub record_wall_time: bool,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            hoeffding: DEFAULT_HOEFFDING_CONSTANT,
            explore_multiplier: DEFAULT_EXPLORE_MULTIPLIER,
            data_multiplier: DEFAULT_DATA_MULTIPLIER,
            grid_steps: DEFAULT_GRID_STEPS,
            record_wall_time: false,
        }
    }
}

fn unit_multiplier() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub setting: Setting,
    pub instance: InstanceSpec,
    pub epsilons: Vec<f64>,
    pub delta: f64,
    /// Scales every sample budget; one sweep cell per (epsilon, multiplier).
    #[serde(default = "unit_multiplier")]
    pub budget_multipliers: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub tie: TieBreaking,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub constants: Constants,
}

impl ExperimentConfig {
    pub fn new(setting: Setting, instance: InstanceSpec, epsilons: Vec<f64>, delta: f64, trials: usize) -> Self {
        Self {
            setting,
            instance,
            epsilons,
            delta,
            budget_multipliers: unit_multiplier(),
            trials,
            base_seed: 0,
            tie: TieBreaking::Pessimistic,
            output: None,
            constants: Constants::default(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        if let Some(dir) = path.parent() {
            cfg.instance.rebase(dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.epsilons.is_empty() {
            return bad("epsilon grid is empty".into());
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return bad(format!("epsilon {e} must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta {} must lie in (0, 1)", self.delta));
        }
        if self.budget_multipliers.is_empty() {
            return bad("budget multiplier grid is empty".into());
        }
        if let Some(m) = self.budget_multipliers.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return bad(format!("budget multiplier {m} must be positive"));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        let c = &self.constants;
        if !(c.hoeffding > 0.0 && c.explore_multiplier >= 0.0 && c.data_multiplier > 0.0 && c.grid_steps > 0) {
            return bad("constants must be positive".into());
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.epsilons.len() * self.budget_multipliers.len()
    }

    /// `(epsilon, multiplier)` of a cell; multipliers vary fastest.
    pub fn cell(&self, index: usize) -> (f64, f64) {
        let m = self.budget_multipliers.len();
        (self.epsilons[index / m], self.budget_multipliers[index % m])
    }
}
