//! Tabular episodic MDPs with two reward channels.
//!
//! Steps are indexed `0..H` and transitions exist for `h < H - 1` only.
//! The initial state is deterministic. Transition tables are row-major
//! `[h][s][b][s']`; rewards, occupancies and policies are `[h][s][b]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_index, param, Error, Result};
use crate::game::NoiseModel;

/// Row-sum tolerance for transition and policy rows.
pub const ROW_TOLERANCE: f64 = 1e-9;
/// Tolerance for occupancy-measure invariants.
pub const FLOW_TOLERANCE: f64 = 1e-8;

/// Which player's reward a value refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Leader,
    Follower,
}

/// `(H, S, B)` shape shared by MDPs, policies and occupancy measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub horizon: usize,
    pub states: usize,
    pub actions: usize,
}

impl Shape {
    pub fn new(horizon: usize, states: usize, actions: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::EmptyDimension("horizon"));
        }
        if states == 0 {
            return Err(Error::EmptyDimension("states"));
        }
        if actions == 0 {
            return Err(Error::EmptyDimension("actions"));
        }
        Ok(Self {
            horizon,
            states,
            actions,
        })
    }

    /// Number of `(h, s, b)` cells.
    pub fn cells(&self) -> usize {
        self.horizon * self.states * self.actions
    }

    #[inline]
    pub fn cell(&self, h: usize, s: usize, b: usize) -> usize {
        (h * self.states + s) * self.actions + b
    }

    pub fn transition_len(&self) -> usize {
        (self.horizon - 1) * self.states * self.actions * self.states
    }

    #[inline]
    pub fn transition_row(&self, h: usize, s: usize, b: usize) -> std::ops::Range<usize> {
        let start = self.cell(h, s, b) * self.states;
        start..start + self.states
    }
}

#[derive(Serialize, Deserialize)]
struct MdpDoc {
    #[serde(rename = "H")]
    horizon: usize,
    #[serde(rename = "S")]
    states: usize,
    #[serde(rename = "B")]
    actions: usize,
    s1: usize,
    /// `[h][s][b][s']`, `H - 1` outer entries.
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[h][s][b]`.
    r1: Vec<Vec<Vec<f64>>>,
    r2: Vec<Vec<Vec<f64>>>,
    noise: NoiseModel,
}

/// Episodic MDP played by the follower; `r1` is the leader's reward channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDoc", into = "MdpDoc")]
pub struct EpisodicMdp {
    shape: Shape,
    transitions: Vec<f64>,
    r1: Vec<f64>,
    r2: Vec<f64>,
    initial_state: usize,
    noise: NoiseModel,
}

impl EpisodicMdp {
    pub fn new(
        shape: Shape,
        transitions: Vec<f64>,
        r1: Vec<f64>,
        r2: Vec<f64>,
        initial_state: usize,
        noise: NoiseModel,
    ) -> Result<Self> {
        let shape = Shape::new(shape.horizon, shape.states, shape.actions)?;
        if transitions.len() != shape.transition_len() {
            return Err(Error::Shape {
                name: "transitions",
                expected: shape.transition_len(),
                got: transitions.len(),
            });
        }
        for (name, table) in [("r1", &r1), ("r2", &r2)] {
            if table.len() != shape.cells() {
                return Err(Error::Shape {
                    name,
                    expected: shape.cells(),
                    got: table.len(),
                });
            }
        }
        check_index("initial state", initial_state, shape.states)?;
        noise.validate()?;
        for row in transitions.chunks(shape.states) {
            check_distribution("transitions", row)?;
        }
        for &v in &r1 {
            noise.check_mean("r1", v)?;
        }
        for &v in &r2 {
            noise.check_mean("r2", v)?;
        }
        Ok(Self {
            shape,
            transitions,
            r1,
            r2,
            initial_state,
            noise,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    pub fn next_state_distribution(&self, h: usize, s: usize, b: usize) -> &[f64] {
        &self.transitions[self.shape.transition_row(h, s, b)]
    }

    pub fn rewards(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::Leader => &self.r1,
            Channel::Follower => &self.r2,
        }
    }

    pub fn reward(&self, channel: Channel, h: usize, s: usize, b: usize) -> f64 {
        self.rewards(channel)[self.shape.cell(h, s, b)]
    }

    /// Same dynamics with different mean rewards (noise kept).
    pub fn with_rewards(&self, r1: Vec<f64>, r2: Vec<f64>) -> Result<Self> {
        Self::new(self.shape, self.transitions.clone(), r1, r2, self.initial_state, self.noise)
    }

    pub fn with_noise(&self, noise: NoiseModel) -> Result<Self> {
        Self::new(
            self.shape,
            self.transitions.clone(),
            self.r1.clone(),
            self.r2.clone(),
            self.initial_state,
            noise,
        )
    }
}

impl TryFrom<MdpDoc> for EpisodicMdp {
    type Error = Error;

    fn try_from(doc: MdpDoc) -> Result<Self> {
        let shape = Shape::new(doc.horizon, doc.states, doc.actions)?;
        let flatten3 = |name: &'static str, t: Vec<Vec<Vec<f64>>>| -> Result<Vec<f64>> {
            if t.len() != shape.horizon
                || t.iter().any(|x| x.len() != shape.states || x.iter().any(|y| y.len() != shape.actions))
            {
                return Err(Error::Shape {
                    name,
                    expected: shape.cells(),
                    got: t.iter().flatten().flatten().count(),
                });
            }
            Ok(t.into_iter().flatten().flatten().collect())
        };
        let r1 = flatten3("r1", doc.r1)?;
        let r2 = flatten3("r2", doc.r2)?;
        let transitions: Vec<f64> = doc
            .transitions
            .into_iter()
            .flatten()
            .flatten()
            .flatten()
            .collect();
        EpisodicMdp::new(shape, transitions, r1, r2, doc.s1, doc.noise)
    }
}

impl From<EpisodicMdp> for MdpDoc {
    fn from(m: EpisodicMdp) -> Self {
        let Shape {
            horizon,
            states,
            actions,
        } = m.shape;
        let nest3 = |t: &[f64]| -> Vec<Vec<Vec<f64>>> {
            t.chunks(states * actions)
                .map(|hs| hs.chunks(actions).map(<[f64]>::to_vec).collect())
                .collect()
        };
        let transitions = m
            .transitions
            .chunks(states * actions * states)
            .map(|hs| {
                hs.chunks(actions * states)
                    .map(|sb| sb.chunks(states).map(<[f64]>::to_vec).collect())
                    .collect()
            })
            .collect();
        MdpDoc {
            horizon,
            states,
            actions,
            s1: m.initial_state,
            transitions,
            r1: nest3(&m.r1),
            r2: nest3(&m.r2),
            noise: m.noise,
        }
    }
}

fn check_distribution(name: &'static str, row: &[f64]) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if row.iter().any(|&p| !(p.is_finite() && p >= 0.0)) || (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::NotADistribution(name));
    }
    Ok(())
}

/// Markov policy `pi_h(b | s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    shape: Shape,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(shape: Shape, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != shape.cells() {
            return Err(Error::Shape {
                name: "policy",
                expected: shape.cells(),
                got: probs.len(),
            });
        }
        for row in probs.chunks(shape.actions) {
            check_distribution("policy", row)?;
        }
        Ok(Self { shape, probs })
    }

    pub fn uniform(shape: Shape) -> Self {
        let p = 1.0 / shape.actions as f64;
        Self {
            shape,
            probs: vec![p; shape.cells()],
        }
    }

    /// Deterministic policy from one action per `(h, s)`, row-major.
    pub fn deterministic(shape: Shape, choices: &[usize]) -> Result<Self> {
        if choices.len() != shape.horizon * shape.states {
            return Err(Error::Shape {
                name: "choices",
                expected: shape.horizon * shape.states,
                got: choices.len(),
            });
        }
        let mut probs = vec![0.0; shape.cells()];
        for (hs, &b) in choices.iter().enumerate() {
            check_index("action", b, shape.actions)?;
            probs[hs * shape.actions + b] = 1.0;
        }
        Ok(Self { shape, probs })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn action_distribution(&self, h: usize, s: usize) -> &[f64] {
        let start = self.shape.cell(h, s, 0);
        &self.probs[start..start + self.shape.actions]
    }

    pub fn prob(&self, h: usize, s: usize, b: usize) -> f64 {
        self.probs[self.shape.cell(h, s, b)]
    }

    /// Action at `(h, s)` when the policy is deterministic.
    pub fn deterministic_action(&self, h: usize, s: usize) -> Option<usize> {
        let row = self.action_distribution(h, s);
        row.iter().position(|&p| p == 1.0)
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, h: usize, s: usize, rng: &mut R) -> usize {
        sample_index(self.action_distribution(h, s), rng)
    }

    /// Largest `|pi - other|` over `(h, s)` rows where `mask(h, s)` holds.
    pub fn max_deviation(&self, other: &Policy, mask: impl Fn(usize, usize) -> bool) -> f64 {
        let mut worst: f64 = 0.0;
        for h in 0..self.shape.horizon {
            for s in 0..self.shape.states {
                if mask(h, s) {
                    for b in 0..self.shape.actions {
                        worst = worst.max((self.prob(h, s, b) - other.prob(h, s, b)).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Per-step state-action visitation probabilities `d_h(s, b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    shape: Shape,
    d: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn from_raw(shape: Shape, d: Vec<f64>) -> Result<Self> {
        if d.len() != shape.cells() {
            return Err(Error::Shape {
                name: "occupancy",
                expected: shape.cells(),
                got: d.len(),
            });
        }
        Ok(Self { shape, d })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.d
    }

    pub fn get(&self, h: usize, s: usize, b: usize) -> f64 {
        self.d[self.shape.cell(h, s, b)]
    }

    /// State visitation `sum_b d_h(s, b)`.
    pub fn state_mass(&self, h: usize, s: usize) -> f64 {
        let start = self.shape.cell(h, s, 0);
        self.d[start..start + self.shape.actions].iter().sum()
    }

    /// `sum_{h,s,b} d_h(s,b) r_h(s,b)`.
    pub fn dot(&self, rewards: &[f64]) -> f64 {
        self.d.iter().zip(rewards).map(|(d, r)| d * r).sum()
    }

    /// Largest violation of the occupancy constraints.
    pub fn max_violation(&self, mdp: &EpisodicMdp) -> f64 {
        let sh = self.shape;
        let mut worst: f64 = self.d.iter().map(|&x| (-x).max(0.0)).fold(0.0, f64::max);
        for s in 0..sh.states {
            let target = if s == mdp.initial_state() { 1.0 } else { 0.0 };
            worst = worst.max((self.state_mass(0, s) - target).abs());
        }
        for h in 0..sh.horizon - 1 {
            let inflow = self.push_forward(mdp, h);
            for (s2, inflow) in inflow.iter().enumerate() {
                worst = worst.max((inflow - self.state_mass(h + 1, s2)).abs());
            }
        }
        worst
    }

    fn push_forward(&self, mdp: &EpisodicMdp, h: usize) -> Vec<f64> {
        let sh = self.shape;
        let mut inflow = vec![0.0; sh.states];
        for s in 0..sh.states {
            for b in 0..sh.actions {
                let mass = self.get(h, s, b);
                if mass != 0.0 {
                    for (s2, p) in mdp.next_state_distribution(h, s, b).iter().enumerate() {
                        inflow[s2] += mass * p;
                    }
                }
            }
        }
        inflow
    }

    pub fn validate(&self, mdp: &EpisodicMdp) -> Result<()> {
        if self.shape != mdp.shape() {
            return Err(Error::Occupancy("shape mismatch".into()));
        }
        if self.d.iter().any(|x| !x.is_finite() || *x < -FLOW_TOLERANCE) {
            return Err(Error::Occupancy("nonnegativity".into()));
        }
        let v = self.max_violation(mdp);
        if v > FLOW_TOLERANCE {
            return Err(Error::Occupancy(format!("flow conservation (residual {v:.3e})")));
        }
        Ok(())
    }
}

fn check_shapes(mdp: &EpisodicMdp, policy: &Policy) -> Result<()> {
    if mdp.shape() != policy.shape() {
        return Err(param("policy", "shape does not match the MDP"));
    }
    Ok(())
}

/// Expected return of `policy` on one channel, by backward evaluation.
pub fn policy_value(mdp: &EpisodicMdp, policy: &Policy, channel: Channel) -> Result<f64> {
    check_shapes(mdp, policy)?;
    let sh = mdp.shape();
    let rewards = mdp.rewards(channel);
    let mut next = vec![0.0; sh.states];
    for h in (0..sh.horizon).rev() {
        let mut current = vec![0.0; sh.states];
        for (s, value) in current.iter_mut().enumerate() {
            for b in 0..sh.actions {
                let p = policy.prob(h, s, b);
                if p == 0.0 {
                    continue;
                }
                let mut q = rewards[sh.cell(h, s, b)];
                if h + 1 < sh.horizon {
                    q += dot(mdp.next_state_distribution(h, s, b), &next);
                }
                *value += p * q;
            }
        }
        next = current;
    }
    Ok(next[mdp.initial_state()])
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Backward induction on arbitrary dynamics and rewards.
///
/// Returns `V_h(s)` for `h in 0..=H` (row `H` is zero) and the greedy action
/// per `(h, s)`, ties to the lowest index.
pub fn backward_induction(shape: Shape, transitions: &[f64], rewards: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut values = vec![0.0; (shape.horizon + 1) * shape.states];
    let mut choices = vec![0; shape.horizon * shape.states];
    for h in (0..shape.horizon).rev() {
        let (head, tail) = values.split_at_mut((h + 1) * shape.states);
        let next = &tail[..shape.states];
        let current = &mut head[h * shape.states..];
        for s in 0..shape.states {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for b in 0..shape.actions {
                let mut q = rewards[shape.cell(h, s, b)];
                if h + 1 < shape.horizon {
                    q += dot(&transitions[shape.transition_row(h, s, b)], next);
                }
                if q > best {
                    best = q;
                    arg = b;
                }
            }
            current[s] = best;
            choices[h * shape.states + s] = arg;
        }
    }
    (values, choices)
}

/// Optimal value and a deterministic optimal policy for one channel.
pub fn value_iteration(mdp: &EpisodicMdp, channel: Channel) -> (f64, Policy) {
    let sh = mdp.shape();
    let (values, choices) = backward_induction(sh, mdp.transitions(), mdp.rewards(channel));
    let policy = Policy::deterministic(sh, &choices).expect("choices are in range");
    (values[mdp.initial_state()], policy)
}

/// Visitation probabilities of `policy`, by forward propagation.
pub fn occupancy_of_policy(mdp: &EpisodicMdp, policy: &Policy) -> Result<OccupancyMeasure> {
    check_shapes(mdp, policy)?;
    let sh = mdp.shape();
    let mut d = vec![0.0; sh.cells()];
    let mut states = vec![0.0; sh.states];
    states[mdp.initial_state()] = 1.0;
    for h in 0..sh.horizon {
        let mut next = vec![0.0; sh.states];
        for (s, &mass) in states.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for b in 0..sh.actions {
                let m = mass * policy.prob(h, s, b);
                d[sh.cell(h, s, b)] = m;
                if h + 1 < sh.horizon && m != 0.0 {
                    for (s2, p) in mdp.next_state_distribution(h, s, b).iter().enumerate() {
                        next[s2] += m * p;
                    }
                }
            }
        }
        states = next;
    }
    OccupancyMeasure::from_raw(sh, d)
}

/// Policy inducing `occupancy`; unvisited states get the uniform action.
pub fn policy_of_occupancy(mdp: &EpisodicMdp, occupancy: &OccupancyMeasure) -> Result<Policy> {
    occupancy.validate(mdp)?;
    Ok(policy_from_visitation(occupancy))
}

/// Normalizes each `(h, s)` block with the `0/0 = 1/B` convention.
pub(crate) fn policy_from_visitation(occupancy: &OccupancyMeasure) -> Policy {
    let sh = occupancy.shape();
    let mut probs = vec![0.0; sh.cells()];
    let uniform = 1.0 / sh.actions as f64;
    for (block, out) in occupancy.values().chunks(sh.actions).zip(probs.chunks_mut(sh.actions)) {
        let clipped: Vec<f64> = block.iter().map(|&x| x.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        if total > 0.0 {
            for (o, x) in out.iter_mut().zip(&clipped) {
                *o = x / total;
            }
        } else {
            out.fill(uniform);
        }
    }
    Policy {
        shape: sh,
        probs,
    }
}

/// Every deterministic Markov policy, in mixed-radix order over `(h, s)`.
pub fn enumerate_deterministic_policies(shape: Shape, cap: u128) -> Result<Vec<Policy>> {
    let slots = (shape.horizon * shape.states) as u32;
    let needed = (shape.actions as u128).checked_pow(slots).unwrap_or(u128::MAX);
    if needed > cap {
        return Err(Error::EnumerationCap { needed, cap });
    }
    let mut out = Vec::with_capacity(needed as usize);
    let mut digits = vec![0usize; slots as usize];
    loop {
        out.push(Policy::deterministic(shape, &digits)?);
        let mut i = 0;
        loop {
            if i == digits.len() {
                return Ok(out);
            }
            digits[i] += 1;
            if digits[i] < shape.actions {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave `acc` just under 1; fall back to the last positive entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// One observed step `(h, s, b, r1, r2, s')`; `next` is `None` at the last step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub h: usize,
    pub s: usize,
    pub b: usize,
    pub r1: f64,
    pub r2: f64,
    pub next: Option<usize>,
}

/// An environment the follower can play episodes in.
pub trait EpisodicEnv {
    fn shape(&self) -> Shape;
    fn initial_state(&self) -> usize;
    /// Plays `b` in state `s` at step `h`.
    fn step(&mut self, h: usize, s: usize, b: usize) -> Result<Transition>;
}

/// Simulator sampling rewards and transitions from an [`EpisodicMdp`].
pub struct MdpSimulator<'m, R> {
    mdp: &'m EpisodicMdp,
    rng: R,
}

impl<'m, R: Rng> MdpSimulator<'m, R> {
    pub fn new(mdp: &'m EpisodicMdp, rng: R) -> Self {
        Self { mdp, rng }
    }
}

impl<R: Rng> EpisodicEnv for MdpSimulator<'_, R> {
    fn shape(&self) -> Shape {
        self.mdp.shape()
    }

    fn initial_state(&self) -> usize {
        self.mdp.initial_state()
    }

    fn step(&mut self, h: usize, s: usize, b: usize) -> Result<Transition> {
        let sh = self.mdp.shape();
        check_index("step", h, sh.horizon)?;
        check_index("state", s, sh.states)?;
        check_index("action", b, sh.actions)?;
        let noise = self.mdp.noise();
        let r1 = noise.draw(self.mdp.reward(Channel::Leader, h, s, b), &mut self.rng);
        let r2 = noise.draw(self.mdp.reward(Channel::Follower, h, s, b), &mut self.rng);
        let next = if h + 1 < sh.horizon {
            Some(sample_index(self.mdp.next_state_distribution(h, s, b), &mut self.rng))
        } else {
            None
        };
        Ok(Transition { h, s, b, r1, r2, next })
    }
}

/// Plays one episode of `policy`, returning its transitions.
pub fn rollout<E: EpisodicEnv + ?Sized, R: Rng + ?Sized>(
    env: &mut E,
    policy: &Policy,
    rng: &mut R,
) -> Result<Vec<Transition>> {
    let sh = env.shape();
    let mut s = env.initial_state();
    let mut out = Vec::with_capacity(sh.horizon);
    for h in 0..sh.horizon {
        let b = policy.sample_action(h, s, rng);
        let t = env.step(h, s, b)?;
        out.push(t);
        if let Some(next) = t.next {
            s = next;
        }
    }
    Ok(out)
}
