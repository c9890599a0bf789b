//! Reward-free exploration of one episodic environment.
//!
//! Phase one learns, for every `(h, s)`, a policy that tries to reach `s` at
//! step `h`, using optimistic value iteration on the indicator reward with
//! visit-count bonuses. Phase two replays those policies (switching to uniform
//! actions from the target step on) and fits an empirical model to the data.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_index, param, Error, Result};
use crate::game::NoiseModel;
use crate::mdp::{
    backward_induction, enumerate_deterministic_policies, policy_value, sample_index, Channel, EpisodicEnv,
    EpisodicMdp, Policy, Shape, Transition,
};

/// Policy enumeration cap used by [`uniform_value_error`].
pub const DEFAULT_POLICY_CAP: u128 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub exploration_episodes: u64,
    pub data_episodes: u64,
    pub epsilon: f64,
    pub delta: f64,
    /// Reach probability above which a state counts as significant.
    pub significance: f64,
}

impl ExploreConfig {
    /// Budgets `m0 H^7 S^4 B / eps` and `m1 H^5 S^2 B / eps^2`, rounded up.
    pub fn from_orders(shape: Shape, epsilon: f64, delta: f64, explore_multiplier: f64, data_multiplier: f64) -> Result<Self> {
        crate::bandit::check_accuracy(epsilon, delta)?;
        if !(explore_multiplier >= 0.0 && data_multiplier > 0.0) {
            return Err(param("multipliers", "must be nonnegative (exploration) and positive (data)"));
        }
        let (h, s, b) = (shape.horizon as f64, shape.states as f64, shape.actions as f64);
        let n0 = (explore_multiplier * h.powi(7) * s.powi(4) * b / epsilon).ceil() as u64;
        let n1 = (data_multiplier * h.powi(5) * s.powi(2) * b / (epsilon * epsilon)).ceil() as u64;
        Ok(Self {
            exploration_episodes: n0,
            data_episodes: n1.max(1),
            epsilon,
            delta,
            significance: epsilon / (2.0 * h * h * s),
        })
    }

    fn validate(&self) -> Result<()> {
        if self.data_episodes == 0 {
            return Err(param("data_episodes", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(param("delta", "must lie in (0, 1)"));
        }
        if self.significance.is_nan() || self.significance <= 0.0 {
            return Err(param("significance", "must be positive"));
        }
        Ok(())
    }
}

/// Empirical transitions and mean rewards with visit counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalModel {
    shape: Shape,
    initial_state: usize,
    transitions: Vec<f64>,
    r1: Vec<f64>,
    r2: Vec<f64>,
    counts: Vec<u64>,
    episodes: u64,
}

impl EmpiricalModel {
    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, h: usize, s: usize, b: usize) -> u64 {
        self.counts[self.shape.cell(h, s, b)]
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    pub fn rewards(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::Leader => &self.r1,
            Channel::Follower => &self.r2,
        }
    }

    /// Smallest empirical visitation frequency over all cells.
    pub fn min_cell_mass(&self) -> f64 {
        let n = self.episodes.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).fold(f64::INFINITY, f64::min)
    }

    /// The estimate as a noiseless MDP, for planning and evaluation.
    pub fn to_mdp(&self) -> Result<EpisodicMdp> {
        EpisodicMdp::new(
            self.shape,
            self.transitions.clone(),
            self.r1.clone(),
            self.r2.clone(),
            self.initial_state,
            NoiseModel::Deterministic,
        )
    }
}

/// Streaming counterpart of [`build_empirical_model`].
#[derive(Debug, Clone)]
pub struct ModelAccumulator {
    shape: Shape,
    initial_state: usize,
    counts: Vec<u64>,
    next_counts: Vec<u64>,
    sum1: Vec<f64>,
    sum2: Vec<f64>,
    episodes: u64,
}

impl ModelAccumulator {
    pub fn new(shape: Shape, initial_state: usize) -> Result<Self> {
        check_index("initial state", initial_state, shape.states)?;
        Ok(Self {
            shape,
            initial_state,
            counts: vec![0; shape.cells()],
            next_counts: vec![0; shape.cells() * shape.states],
            sum1: vec![0.0; shape.cells()],
            sum2: vec![0.0; shape.cells()],
            episodes: 0,
        })
    }

    pub fn add(&mut self, t: &Transition) -> Result<()> {
        let sh = self.shape;
        if t.h >= sh.horizon || t.s >= sh.states || t.b >= sh.actions {
            return Err(Error::MalformedTuple(format!("index out of range in {t:?}")));
        }
        if !(t.r1.is_finite() && t.r2.is_finite()) {
            return Err(Error::MalformedTuple(format!("non-finite reward in {t:?}")));
        }
        let last = t.h + 1 == sh.horizon;
        match (last, t.next) {
            (true, None) => {}
            (false, Some(s2)) if s2 < sh.states => {
                self.next_counts[sh.cell(t.h, t.s, t.b) * sh.states + s2] += 1;
            }
            _ => return Err(Error::MalformedTuple(format!("bad successor in {t:?}"))),
        }
        let c = sh.cell(t.h, t.s, t.b);
        self.counts[c] += 1;
        self.sum1[c] += t.r1;
        self.sum2[c] += t.r2;
        if t.h == 0 {
            self.episodes += 1;
        }
        Ok(())
    }

    /// Zero-count cells get uniform transitions and zero rewards.
    pub fn finish(&self) -> EmpiricalModel {
        let sh = self.shape;
        let mut transitions = vec![0.0; sh.transition_len()];
        let uniform = 1.0 / sh.states as f64;
        for h in 0..sh.horizon.saturating_sub(1) {
            for s in 0..sh.states {
                for b in 0..sh.actions {
                    let c = sh.cell(h, s, b);
                    let row = &mut transitions[sh.transition_row(h, s, b)];
                    if self.counts[c] == 0 {
                        row.fill(uniform);
                    } else {
                        let n = self.counts[c] as f64;
                        for (s2, p) in row.iter_mut().enumerate() {
                            *p = self.next_counts[c * sh.states + s2] as f64 / n;
                        }
                    }
                }
            }
        }
        let mean = |sums: &[f64]| -> Vec<f64> {
            sums.iter()
                .zip(&self.counts)
                .map(|(&x, &n)| if n == 0 { 0.0 } else { x / n as f64 })
                .collect()
        };
        EmpiricalModel {
            shape: sh,
            initial_state: self.initial_state,
            transitions,
            r1: mean(&self.sum1),
            r2: mean(&self.sum2),
            counts: self.counts.clone(),
            episodes: self.episodes,
        }
    }
}

/// Empirical frequencies and means from a batch of transitions.
pub fn build_empirical_model(shape: Shape, initial_state: usize, data: &[Transition]) -> Result<EmpiricalModel> {
    let mut acc = ModelAccumulator::new(shape, initial_state)?;
    for t in data {
        acc.add(t)?;
    }
    Ok(acc.finish())
}

/// Exploration policy paired with the step at which it switches to uniform actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverPolicy {
    pub policy: Policy,
    pub switch_step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreOutput {
    pub model: EmpiricalModel,
    pub cover: Vec<CoverPolicy>,
    pub episodes: u64,
}

/// Transition counts shared by the phase-one learners.
struct OptimisticPlanner {
    shape: Shape,
    counts: Vec<u64>,
    next_counts: Vec<u64>,
    log_term: f64,
}

impl OptimisticPlanner {
    fn new(shape: Shape, episodes: u64, delta: f64) -> Self {
        let sa = (shape.cells() * shape.states) as f64;
        Self {
            shape,
            counts: vec![0; shape.cells()],
            next_counts: vec![0; shape.cells() * shape.states],
            log_term: (4.0 * sa * (episodes.max(1) as f64) / delta).ln(),
        }
    }

    fn record(&mut self, t: &Transition) {
        if let Some(s2) = t.next {
            let c = self.shape.cell(t.h, t.s, t.b);
            self.counts[c] += 1;
            self.next_counts[c * self.shape.states + s2] += 1;
        }
    }

    /// Greedy policy for optimistic reach values of `(target_h, target_s)`.
    fn plan(&self, target_h: usize, target_s: usize) -> Vec<usize> {
        let sh = self.shape;
        let reach = Shape {
            horizon: target_h + 1,
            ..sh
        };
        let mut rewards = vec![0.0; reach.cells()];
        for b in 0..sh.actions {
            rewards[reach.cell(target_h, target_s, b)] = 1.0;
        }
        let mut transitions = vec![0.0; reach.transition_len()];
        for h in 0..target_h {
            for s in 0..sh.states {
                for b in 0..sh.actions {
                    let c = sh.cell(h, s, b);
                    let n = self.counts[c];
                    let row = &mut transitions[reach.transition_row(h, s, b)];
                    if n == 0 {
                        row.fill(1.0 / sh.states as f64);
                        rewards[reach.cell(h, s, b)] += 1.0;
                    } else {
                        for (s2, p) in row.iter_mut().enumerate() {
                            *p = self.next_counts[c * sh.states + s2] as f64 / n as f64;
                        }
                        rewards[reach.cell(h, s, b)] += (2.0 * self.log_term / n as f64).sqrt().min(1.0);
                    }
                }
            }
        }
        let (_, choices) = backward_induction(reach, &transitions, &rewards);
        let mut full = vec![0; sh.horizon * sh.states];
        full[..choices.len()].copy_from_slice(&choices);
        full
    }
}

fn play_episode<E, R>(env: &mut E, rng: &mut R, mut act: impl FnMut(usize, usize, &mut R) -> usize) -> Result<Vec<Transition>>
where
    E: EpisodicEnv + ?Sized,
    R: Rng,
{
    let sh = env.shape();
    let mut s = env.initial_state();
    let mut out = Vec::with_capacity(sh.horizon);
    for h in 0..sh.horizon {
        let b = act(h, s, rng);
        let t = env.step(h, s, b)?;
        if t.h != h || t.s != s || t.b != b {
            return Err(Error::Sampler(format!("environment echoed {t:?} for ({h}, {s}, {b})")));
        }
        out.push(t);
        if let Some(next) = t.next {
            s = next;
        }
    }
    Ok(out)
}

/// Runs both exploration phases; episode total is
/// `exploration_episodes + data_episodes`.
pub fn explore<E, R>(env: &mut E, cfg: &ExploreConfig, rng: &mut R) -> Result<ExploreOutput>
where
    E: EpisodicEnv + ?Sized,
    R: Rng,
{
    cfg.validate()?;
    let sh = env.shape();
    let targets: Vec<(usize, usize)> = (1..sh.horizon).flat_map(|h| (0..sh.states).map(move |s| (h, s))).collect();

    let mut planner = OptimisticPlanner::new(sh, cfg.exploration_episodes, cfg.delta);
    let mut cover = vec![CoverPolicy {
        policy: Policy::uniform(sh),
        switch_step: 0,
    }];
    if !targets.is_empty() {
        let per = cfg.exploration_episodes / targets.len() as u64;
        let extra = cfg.exploration_episodes % targets.len() as u64;
        for (i, &(th, ts)) in targets.iter().enumerate() {
            let episodes = per + u64::from((i as u64) < extra);
            for _ in 0..episodes {
                let choices = planner.plan(th, ts);
                let data = play_episode(env, rng, |h, s, _| choices[h * sh.states + s])?;
                data.iter().for_each(|t| planner.record(t));
            }
            let choices = planner.plan(th, ts);
            cover.push(CoverPolicy {
                policy: Policy::deterministic(sh, &choices)?,
                switch_step: th,
            });
        }
    }

    let mut acc = ModelAccumulator::new(sh, env.initial_state())?;
    let uniform = vec![1.0 / sh.actions as f64; sh.actions];
    for _ in 0..cfg.data_episodes {
        let k = rng.gen_range(0..cover.len());
        let cp = &cover[k];
        let data = play_episode(env, rng, |h, s, r| {
            if h < cp.switch_step {
                cp.policy.sample_action(h, s, r)
            } else {
                sample_index(&uniform, r)
            }
        })?;
        for t in &data {
            acc.add(t)?;
        }
    }
    Ok(ExploreOutput {
        model: acc.finish(),
        cover,
        episodes: cfg.exploration_episodes + cfg.data_episodes,
    })
}

/// `max_pi |V_model(pi) - V_mdp(pi)|` over deterministic policies.
pub fn uniform_value_error(model: &EmpiricalModel, mdp: &EpisodicMdp, channel: Channel, cap: u128) -> Result<f64> {
    if model.shape() != mdp.shape() {
        return Err(param("model", "shape does not match the MDP"));
    }
    let estimate = model.to_mdp()?;
    let mut worst: f64 = 0.0;
    for pi in enumerate_deterministic_policies(mdp.shape(), cap)? {
        let diff = policy_value(&estimate, &pi, channel)? - policy_value(mdp, &pi, channel)?;
        worst = worst.max(diff.abs());
    }
    Ok(worst)
}

/// `(h, s)` pairs reachable with probability at least `significance` under
/// some policy but never visited in the model's data.
pub fn unvisited_significant_states(model: &EmpiricalModel, mdp: &EpisodicMdp, significance: f64) -> Vec<(usize, usize)> {
    let sh = mdp.shape();
    let mut out = Vec::new();
    for h in 0..sh.horizon {
        for s in 0..sh.states {
            let reach = Shape { horizon: h + 1, ..sh };
            let mut rewards = vec![0.0; reach.cells()];
            for b in 0..sh.actions {
                rewards[reach.cell(h, s, b)] = 1.0;
            }
            let transitions = &mdp.transitions()[..reach.transition_len()];
            let (values, _) = backward_induction(reach, transitions, &rewards);
            let max_reach = values[mdp.initial_state()];
            let visits: u64 = (0..sh.actions).map(|b| model.count(h, s, b)).sum();
            if max_reach >= significance && visits == 0 {
                out.push((h, s));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::random_mdp;
    use crate::mdp::MdpSimulator;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn tuple(h: usize, s: usize, b: usize, r1: f64, r2: f64, next: Option<usize>) -> Transition {
        Transition { h, s, b, r1, r2, next }
    }

    #[test]
    fn single_tuple_and_conflicts() {
        let sh = Shape::new(2, 3, 2).unwrap();
        let m = build_empirical_model(sh, 0, &[tuple(0, 0, 1, 1.0, 0.0, Some(2))]).unwrap();
        assert_eq!(&m.transitions()[sh.transition_row(0, 0, 1)], &[0.0, 0.0, 1.0]);
        assert_eq!(m.rewards(Channel::Leader)[sh.cell(0, 0, 1)], 1.0);
        let third = 1.0 / 3.0;
        assert_eq!(&m.transitions()[sh.transition_row(0, 1, 0)], &[third; 3]);
        assert_eq!(m.rewards(Channel::Follower)[sh.cell(1, 2, 0)], 0.0);

        let m = build_empirical_model(
            sh,
            0,
            &[tuple(0, 0, 0, 0.0, 0.0, Some(1)), tuple(0, 0, 0, 1.0, 1.0, Some(2))],
        )
        .unwrap();
        assert_eq!(&m.transitions()[sh.transition_row(0, 0, 0)], &[0.0, 0.5, 0.5]);
        assert!(m.to_mdp().is_ok());
    }

    #[test]
    fn malformed_tuples_rejected() {
        let sh = Shape::new(2, 2, 2).unwrap();
        for t in [
            tuple(2, 0, 0, 0.0, 0.0, None),
            tuple(0, 0, 0, 0.0, 0.0, None),
            tuple(1, 0, 0, 0.0, 0.0, Some(1)),
            tuple(0, 0, 0, 0.0, 0.0, Some(5)),
            tuple(0, 0, 0, f64::NAN, 0.0, Some(1)),
        ] {
            assert!(matches!(build_empirical_model(sh, 0, &[t]), Err(Error::MalformedTuple(_))));
        }
    }

    #[test]
    fn transition_frequencies_within_ci() {
        let sh = Shape::new(2, 3, 1).unwrap();
        let p = [0.2, 0.5, 0.3];
        let mut r = rng(1);
        let data: Vec<Transition> = (0..10_000)
            .map(|_| tuple(0, 0, 0, 0.0, 0.0, Some(sample_index(&p, &mut r))))
            .collect();
        let m = build_empirical_model(sh, 0, &data).unwrap();
        for (hat, truth) in m.transitions()[sh.transition_row(0, 0, 0)].iter().zip(p) {
            let se = (truth * (1.0 - truth) / 10_000.0_f64).sqrt();
            assert!((hat - truth).abs() <= 4.0 * se);
        }
    }

    #[test]
    fn value_error_identities() {
        let mdp = random_mdp(Shape::new(2, 2, 2).unwrap(), &mut rng(2)).unwrap();
        let sh = mdp.shape();
        let exact = EmpiricalModel {
            shape: sh,
            initial_state: 0,
            transitions: mdp.transitions().to_vec(),
            r1: mdp.rewards(Channel::Leader).to_vec(),
            r2: mdp.rewards(Channel::Follower).to_vec(),
            counts: vec![1; sh.cells()],
            episodes: 1,
        };
        assert_eq!(uniform_value_error(&exact, &mdp, Channel::Leader, 1 << 10).unwrap(), 0.0);
        let shifted = EmpiricalModel {
            r1: exact.r1.iter().map(|x| x + 0.01).collect(),
            ..exact.clone()
        };
        let e = uniform_value_error(&shifted, &mdp, Channel::Leader, 1 << 10).unwrap();
        assert!((e - 0.02).abs() < 1e-12);
        let mut r = rng(3);
        let noisy = EmpiricalModel {
            r2: exact.r2.iter().map(|x| x + r.gen_range(-0.05..0.05)).collect(),
            ..exact.clone()
        };
        assert!(uniform_value_error(&noisy, &mdp, Channel::Follower, 1 << 10).unwrap() <= 2.0 * 0.05);
        assert!(uniform_value_error(&noisy, &mdp, Channel::Follower, 4).is_err());
    }

    #[test]
    fn pure_bandit_hoeffding_budget() {
        // S = 1: N_data >= 32 B ln(4HB/delta) / eps^2 gives error <= eps w.p. >= 1 - delta.
        let sh = Shape::new(1, 1, 3).unwrap();
        let (eps, delta): (f64, f64) = (0.2, 0.1);
        let n = (32.0 * 3.0 * (4.0 * 3.0 / delta).ln() / (eps * eps)).ceil() as u64;
        let mut ok = 0;
        for seed in 0..100 {
            let mdp = random_mdp(sh, &mut rng(seed)).unwrap();
            let cfg = ExploreConfig {
                exploration_episodes: 0,
                data_episodes: n,
                epsilon: eps,
                delta,
                significance: eps / 2.0,
            };
            let mut env = MdpSimulator::new(&mdp, rng(1000 + seed));
            let out = explore(&mut env, &cfg, &mut rng(2000 + seed)).unwrap();
            let e = [Channel::Leader, Channel::Follower]
                .iter()
                .map(|&c| uniform_value_error(&out.model, &mdp, c, 64).unwrap())
                .fold(0.0, f64::max);
            ok += usize::from(e <= eps);
        }
        assert!(ok >= 90, "{ok}");
    }

    #[test]
    fn deterministic_path_gives_exact_transitions() {
        let sh = Shape::new(3, 2, 2).unwrap();
        let mut t = Vec::new();
        for _ in 0..2 {
            for _ in 0..2 {
                t.extend([1.0, 0.0, 0.0, 1.0]);
            }
        }
        let mdp = EpisodicMdp::new(sh, t.clone(), vec![0.5; 12], vec![0.5; 12], 0, NoiseModel::Bernoulli).unwrap();
        let cfg = ExploreConfig {
            exploration_episodes: 20,
            data_episodes: 200,
            epsilon: 0.2,
            delta: 0.1,
            significance: 0.01,
        };
        let out = explore(&mut MdpSimulator::new(&mdp, rng(1)), &cfg, &mut rng(2)).unwrap();
        for h in 0..2 {
            for s in 0..2 {
                for b in 0..2 {
                    if out.model.count(h, s, b) > 0 {
                        assert_eq!(
                            &out.model.transitions()[sh.transition_row(h, s, b)],
                            &t[sh.transition_row(h, s, b)]
                        );
                    }
                }
            }
        }
        assert_eq!(out.episodes, 220);
        assert_eq!(out.cover.len(), 1 + 2 * 2);
    }

    #[test]
    fn significant_states_visited_and_error_shrinks() {
        let sh = Shape::new(3, 3, 2).unwrap();
        let mut covered = 0;
        let mut small = Vec::new();
        let mut large = Vec::new();
        for seed in 0..20 {
            let mdp = random_mdp(sh, &mut rng(seed)).unwrap();
            for (mult, sink) in [(0.01, &mut small), (0.04, &mut large)] {
                let cfg = ExploreConfig::from_orders(sh, 0.2, 0.1, 1e-3, mult).unwrap();
                let out = explore(&mut MdpSimulator::new(&mdp, rng(100 + seed)), &cfg, &mut rng(200 + seed)).unwrap();
                let e = uniform_value_error(&out.model, &mdp, Channel::Leader, 1 << 12).unwrap();
                sink.push(e);
                if mult == 0.01 {
                    covered += usize::from(unvisited_significant_states(&out.model, &mdp, cfg.significance).is_empty());
                    assert!(out.model.min_cell_mass() >= 0.0);
                }
            }
        }
        assert!(covered >= 18);
        let median = |v: &mut Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        assert!(median(&mut large) <= median(&mut small));
    }
}
