//! Two-player general-sum bandit games.
//!
//! A [`BanditGame`] holds the exact mean-reward tables of both players. The
//! oracles in this module (best-response sets, the pessimistic `phi` and
//! optimistic `psi` value functions, Stackelberg actions and gaps) are all
//! evaluated on those exact means and serve as ground truth for the learners.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_index, param, Error, Result};

/// Absolute tolerance for best-response membership on exact means.
pub const EXACT_TOLERANCE: f64 = 1e-12;

/// How observed rewards scatter around their means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Rewards are `Ber(mean)` draws; means must lie in `[0, 1]`.
    Bernoulli,
    /// Rewards are `mean + sigma * z` with `z` standard normal.
    Gaussian { sigma: f64 },
    /// Rewards equal their means.
    Deterministic,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian { sigma } if !(sigma.is_finite() && sigma >= 0.0) => {
                Err(Error::NoiseScale(sigma))
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn check_mean(&self, name: &'static str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        if matches!(self, NoiseModel::Bernoulli) && !(0.0..=1.0).contains(&value) {
            return Err(Error::BernoulliRange { name, value });
        }
        Ok(())
    }

    /// Draws one observation with the given mean.
    pub fn draw<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::Bernoulli => {
                if rng.gen_bool(mean) {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseModel::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sigma * z
            }
            NoiseModel::Deterministic => mean,
        }
    }
}

/// Follower tie-breaking rule inside a best-response set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieBreaking {
    /// Ties are broken against the leader (min over the set).
    #[default]
    Pessimistic,
    /// Ties are broken in favor of the leader (max over the set).
    Optimistic,
}

impl TieBreaking {
    /// Returns `true` when `candidate` should replace `incumbent`.
    fn prefers(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            TieBreaking::Pessimistic => candidate < incumbent,
            TieBreaking::Optimistic => candidate > incumbent,
        }
    }
}

impl std::fmt::Display for TieBreaking {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TieBreaking::Pessimistic => f.write_str("pessimistic"),
            TieBreaking::Optimistic => f.write_str("optimistic"),
        }
    }
}

/// Dense row-major `rows x cols` table of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffTable {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PayoffTable {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::EmptyDimension("rows"));
        }
        if cols == 0 {
            return Err(Error::EmptyDimension("cols"));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape {
                name: "table",
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("table"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape {
                name: "table row",
                expected: cols,
                got: rows.iter().map(Vec::len).find(|&l| l != cols).unwrap_or(0),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.rows, self.cols, self.data.iter().map(|&x| f(x)).collect())
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &PayoffTable) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

/// Follower actions within `epsilon` of the best response to one leader action.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponseSet {
    pub leader_action: usize,
    pub epsilon: f64,
    pub members: Vec<usize>,
}

impl BestResponseSet {
    pub fn contains(&self, b: usize) -> bool {
        self.members.binary_search(&b).is_ok()
    }

    pub fn is_subset_of(&self, other: &BestResponseSet) -> bool {
        self.members.iter().all(|&b| other.contains(b))
    }
}

/// Indices `b` with `row[b] >= max(row) - epsilon - tolerance`, ascending.
pub fn near_best(row: &[f64], epsilon: f64, tolerance: f64) -> Vec<usize> {
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cutoff = best - epsilon - tolerance;
    row.iter()
        .enumerate()
        .filter(|(_, &v)| v >= cutoff)
        .map(|(b, _)| b)
        .collect()
}

/// Lowest-index extremum of `values` over `members` (min or max per tie rule).
pub fn extremum_over(values: &[f64], members: &[usize], tie: TieBreaking) -> (usize, f64) {
    let mut best = members[0];
    for &b in &members[1..] {
        if tie.prefers(values[b], values[best]) {
            best = b;
        }
    }
    (best, values[best])
}

/// Lowest-index argmax of a nonempty slice.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon >= 0.0 {
        Ok(())
    } else {
        Err(param("epsilon", format!("must be finite and >= 0, got {epsilon}")))
    }
}

/// Best-response set of a follower table at leader action `a`, on exact means.
pub fn best_response_set(mu2: &PayoffTable, a: usize, epsilon: f64) -> Result<BestResponseSet> {
    check_index("leader action", a, mu2.rows())?;
    check_epsilon(epsilon)?;
    Ok(BestResponseSet {
        leader_action: a,
        epsilon,
        members: near_best(mu2.row(a), epsilon, EXACT_TOLERANCE),
    })
}

/// Follower response and leader value at `a` from a pair of tables.
///
/// `tolerance` widens the membership test; pass [`EXACT_TOLERANCE`] for exact
/// means and `0.0` for estimates.
pub fn response_value(
    mu1: &PayoffTable,
    mu2: &PayoffTable,
    a: usize,
    epsilon: f64,
    tie: TieBreaking,
    tolerance: f64,
) -> (usize, f64) {
    let members = near_best(mu2.row(a), epsilon, tolerance);
    extremum_over(mu1.row(a), &members, tie)
}

#[derive(Serialize, Deserialize)]
struct GameDoc {
    #[serde(rename = "A")]
    a: usize,
    #[serde(rename = "B")]
    b: usize,
    mu1: Vec<f64>,
    mu2: Vec<f64>,
    noise: NoiseModel,
}

/// A bandit game: exact means of both players plus the observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GameDoc", into = "GameDoc")]
pub struct BanditGame {
    mu1: PayoffTable,
    mu2: PayoffTable,
    noise: NoiseModel,
}

impl TryFrom<GameDoc> for BanditGame {
    type Error = Error;

    fn try_from(doc: GameDoc) -> Result<Self> {
        BanditGame::new(
            PayoffTable::new(doc.a, doc.b, doc.mu1)?,
            PayoffTable::new(doc.a, doc.b, doc.mu2)?,
            doc.noise,
        )
    }
}

impl From<BanditGame> for GameDoc {
    fn from(g: BanditGame) -> Self {
        GameDoc {
            a: g.mu1.rows,
            b: g.mu1.cols,
            mu1: g.mu1.data,
            mu2: g.mu2.data,
            noise: g.noise,
        }
    }
}

impl BanditGame {
    pub fn new(mu1: PayoffTable, mu2: PayoffTable, noise: NoiseModel) -> Result<Self> {
        if mu1.rows != mu2.rows || mu1.cols != mu2.cols {
            return Err(Error::Shape {
                name: "mu2",
                expected: mu1.data.len(),
                got: mu2.data.len(),
            });
        }
        noise.validate()?;
        for &v in &mu1.data {
            noise.check_mean("mu1", v)?;
        }
        for &v in &mu2.data {
            noise.check_mean("mu2", v)?;
        }
        Ok(Self { mu1, mu2, noise })
    }

    pub fn from_rows(mu1: &[Vec<f64>], mu2: &[Vec<f64>], noise: NoiseModel) -> Result<Self> {
        Self::new(PayoffTable::from_rows(mu1)?, PayoffTable::from_rows(mu2)?, noise)
    }

    pub fn num_leader_actions(&self) -> usize {
        self.mu1.rows
    }

    pub fn num_follower_actions(&self) -> usize {
        self.mu1.cols
    }

    pub fn mean_leader(&self) -> &PayoffTable {
        &self.mu1
    }

    pub fn mean_follower(&self) -> &PayoffTable {
        &self.mu2
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    /// Same means under a different noise model.
    pub fn with_noise(&self, noise: NoiseModel) -> Result<Self> {
        Self::new(self.mu1.clone(), self.mu2.clone(), noise)
    }

    /// One noisy observation `(r1, r2)` of the pair `(a, b)`.
    pub fn sample_rewards<R: Rng + ?Sized>(&self, a: usize, b: usize, rng: &mut R) -> Result<(f64, f64)> {
        check_index("leader action", a, self.num_leader_actions())?;
        check_index("follower action", b, self.num_follower_actions())?;
        let r1 = self.noise.draw(self.mu1.get(a, b), rng);
        let r2 = self.noise.draw(self.mu2.get(a, b), rng);
        Ok((r1, r2))
    }

    pub fn best_response_set(&self, a: usize, epsilon: f64) -> Result<BestResponseSet> {
        best_response_set(&self.mu2, a, epsilon)
    }

    /// `phi_eps(a)` (pessimistic) or `psi_eps(a)` (optimistic).
    pub fn phi_value(&self, a: usize, epsilon: f64, tie: TieBreaking) -> Result<f64> {
        check_index("leader action", a, self.num_leader_actions())?;
        check_epsilon(epsilon)?;
        Ok(response_value(&self.mu1, &self.mu2, a, epsilon, tie, EXACT_TOLERANCE).1)
    }

    /// Value of every leader action.
    pub fn phi_values(&self, epsilon: f64, tie: TieBreaking) -> Result<Vec<f64>> {
        (0..self.num_leader_actions())
            .map(|a| self.phi_value(a, epsilon, tie))
            .collect()
    }

    /// Lowest-index maximizer of the value function and its value.
    pub fn stackelberg(&self, epsilon: f64, tie: TieBreaking) -> Result<(usize, f64)> {
        let values = self.phi_values(epsilon, tie)?;
        let a = argmax(&values);
        Ok((a, values[a]))
    }

    /// `max_a phi_0(a) - max_a phi_eps(a)`.
    pub fn gap(&self, epsilon: f64) -> Result<f64> {
        let (_, exact) = self.stackelberg(0.0, TieBreaking::Pessimistic)?;
        let (_, relaxed) = self.stackelberg(epsilon, TieBreaking::Pessimistic)?;
        Ok(exact - relaxed)
    }

    /// Optimistic gap: max of `psi_eps - psi_0` over the actions whose
    /// `psi_eps` is within `epsilon` of `max psi_0`.
    pub fn optimistic_gap(&self, epsilon: f64) -> Result<f64> {
        let psi0 = self.phi_values(0.0, TieBreaking::Optimistic)?;
        let psi_eps = self.phi_values(epsilon, TieBreaking::Optimistic)?;
        let best = psi0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(psi0
            .iter()
            .zip(&psi_eps)
            .filter(|(_, &pe)| pe >= best - epsilon - EXACT_TOLERANCE)
            .map(|(&p0, &pe)| pe - p0)
            .fold(0.0, f64::max))
    }

    /// [`gap`](Self::gap) or [`optimistic_gap`](Self::optimistic_gap) by tie rule.
    pub fn gap_for(&self, epsilon: f64, tie: TieBreaking) -> Result<f64> {
        match tie {
            TieBreaking::Pessimistic => self.gap(epsilon),
            TieBreaking::Optimistic => self.optimistic_gap(epsilon),
        }
    }
}

/// Source of noisy `(r1, r2)` observations for action pairs.
pub trait PairSampler {
    fn num_leader_actions(&self) -> usize;
    fn num_follower_actions(&self) -> usize;
    fn query(&mut self, a: usize, b: usize) -> Result<(f64, f64)>;
}

/// Simulator backed by a [`BanditGame`].
///
/// Each pair `(a, b)` draws from its own seeded stream, so the `j`-th
/// observation of a pair does not depend on the order in which pairs are
/// queried.
pub struct GameSampler<'g> {
    game: &'g BanditGame,
    seed: u64,
    streams: HashMap<usize, ChaCha8Rng>,
    queries: u64,
}

impl<'g> GameSampler<'g> {
    pub fn new(game: &'g BanditGame, seed: u64) -> Self {
        Self {
            game,
            seed,
            streams: HashMap::new(),
            queries: 0,
        }
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }
}

impl PairSampler for GameSampler<'_> {
    fn num_leader_actions(&self) -> usize {
        self.game.num_leader_actions()
    }

    fn num_follower_actions(&self) -> usize {
        self.game.num_follower_actions()
    }

    fn query(&mut self, a: usize, b: usize) -> Result<(f64, f64)> {
        check_index("leader action", a, self.game.num_leader_actions())?;
        check_index("follower action", b, self.game.num_follower_actions())?;
        let pair = a * self.game.num_follower_actions() + b;
        let seed = self.seed;
        let rng = self.streams.entry(pair).or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(pair as u64);
            rng
        });
        self.queries += 1;
        self.game.sample_rewards(a, b, rng)
    }
}
