//! Linear bandit games, G-optimal core sets and the core-set learner.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{check_accuracy, choose_from_estimates, sample_pair};
use crate::error::{check_index, param, Error, Result};
use crate::game::{BanditGame, NoiseModel, PairSampler, PayoffTable, TieBreaking};
use crate::mdp::Channel;

/// Row-major features `phi(a, b)` in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    leader_actions: usize,
    follower_actions: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(leader_actions: usize, follower_actions: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if leader_actions == 0 || follower_actions == 0 {
            return Err(Error::EmptyDimension("actions"));
        }
        if dim == 0 {
            return Err(Error::EmptyDimension("feature dimension"));
        }
        let expected = leader_actions * follower_actions * dim;
        if data.len() != expected {
            return Err(Error::Shape {
                name: "features",
                expected,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(Self {
            leader_actions,
            follower_actions,
            dim,
            data,
        })
    }

    /// Features as a point cloud, one pair per point.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(param("points", "dimensions differ"));
        }
        Self::new(points.len(), 1, dim, points.concat())
    }

    /// Indicator features, `d = A * B`.
    pub fn one_hot(leader_actions: usize, follower_actions: usize) -> Result<Self> {
        let d = leader_actions * follower_actions;
        let mut data = vec![0.0; d * d];
        for k in 0..d {
            data[k * d + k] = 1.0;
        }
        Self::new(leader_actions, follower_actions, d, data)
    }

    /// Independent uniform draws from the unit sphere.
    pub fn random_unit<R: Rng + ?Sized>(leader_actions: usize, follower_actions: usize, dim: usize, rng: &mut R) -> Result<Self> {
        let data = (0..leader_actions * follower_actions)
            .flat_map(|_| crate::instances::random_unit_vector(dim, rng))
            .collect();
        Self::new(leader_actions, follower_actions, dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_leader_actions(&self) -> usize {
        self.leader_actions
    }

    pub fn num_follower_actions(&self) -> usize {
        self.follower_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.leader_actions * self.follower_actions
    }

    /// Row-major pair index to `(a, b)`.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        (k / self.follower_actions, k % self.follower_actions)
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn feature(&self, a: usize, b: usize) -> &[f64] {
        self.point(a * self.follower_actions + b)
    }

    /// `phi(a, b) . theta` for every pair, as a table.
    pub fn predict(&self, theta: &[f64]) -> Result<PayoffTable> {
        if theta.len() != self.dim {
            return Err(Error::Shape {
                name: "theta",
                expected: self.dim,
                got: theta.len(),
            });
        }
        let values = (0..self.num_pairs()).map(|k| dot(self.point(k), theta)).collect();
        PayoffTable::new(self.leader_actions, self.follower_actions, values)
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearGame {
    features: FeatureMap,
    theta1: Vec<f64>,
    theta2: Vec<f64>,
    noise: NoiseModel,
}

impl LinearGame {
    pub fn new(features: FeatureMap, theta1: Vec<f64>, theta2: Vec<f64>, noise: NoiseModel) -> Result<Self> {
        let g = Self {
            features,
            theta1,
            theta2,
            noise,
        };
        g.to_bandit_game()?;
        Ok(g)
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn theta(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::Leader => &self.theta1,
            Channel::Follower => &self.theta2,
        }
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    /// The tabular game with means `phi . theta`.
    pub fn to_bandit_game(&self) -> Result<BanditGame> {
        BanditGame::new(
            self.features.predict(&self.theta1)?,
            self.features.predict(&self.theta2)?,
            self.noise,
        )
    }
}

/// Weighted support with bounded leverage over the whole feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreSet {
    /// Pair indices into the feature map.
    pub members: Vec<usize>,
    pub weights: Vec<f64>,
    /// Dimension of the span of the features.
    pub rank: usize,
    /// `max_k phi_k^T V(rho)^+ phi_k` over every feature.
    pub max_leverage: f64,
    /// Orthonormal basis of the span, one row per direction.
    basis: Vec<Vec<f64>>,
}

impl CoreSet {
    /// Soft support target `4 r ln ln r + 16`.
    pub fn support_target(&self) -> f64 {
        support_bound(self.rank)
    }
}

pub fn support_bound(d: usize) -> f64 {
    let d = d as f64;
    4.0 * d * d.ln().ln() + 16.0
}

/// Orthonormal basis of the span of `points`; the identity when full rank.
fn span_basis(features: &FeatureMap) -> Vec<Vec<f64>> {
    let d = features.dim();
    let n = features.num_pairs();
    let gram = DMatrix::from_fn(d, d, |i, j| (0..n).map(|k| features.point(k)[i] * features.point(k)[j]).sum::<f64>());
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i] > 1e-10 * top.max(1e-300)).collect();
    if keep.len() == d {
        return (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                e
            })
            .collect();
    }
    keep.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect()
}

fn reduce(basis: &[Vec<f64>], x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(basis.len(), basis.iter().map(|u| dot(u, x)))
}

fn leverages(points: &[DVector<f64>], weights: &[f64]) -> Option<Vec<f64>> {
    let r = points[0].len();
    let mut m = DMatrix::zeros(r, r);
    for (p, &w) in points.iter().zip(weights) {
        if w > 0.0 {
            m.ger(w, p, p, 1.0);
        }
    }
    let chol = Cholesky::<f64, Dyn>::new(m)?;
    Some(
        points
            .iter()
            .map(|p| {
                let y = chol.l().solve_lower_triangular(p).expect("triangular factor is nonsingular");
                y.norm_squared()
            })
            .collect(),
    )
}

/// Greedy volumetric start: repeatedly take the point with the largest
/// residual after projecting out the points already chosen.
fn greedy_basis(points: &[DVector<f64>]) -> Vec<usize> {
    let r = points[0].len();
    let mut residual: Vec<DVector<f64>> = points.to_vec();
    let mut chosen = Vec::with_capacity(r);
    for _ in 0..r {
        let mut best = 0;
        let mut best_norm = -1.0;
        for (k, v) in residual.iter().enumerate() {
            let n = v.norm_squared();
            if n > best_norm {
                best = k;
                best_norm = n;
            }
        }
        if best_norm <= 1e-24 {
            break;
        }
        chosen.push(best);
        let u = residual[best].clone() / best_norm.sqrt();
        for v in residual.iter_mut() {
            let c = u.dot(v);
            v.axpy(-c, &u, 1.0);
        }
    }
    chosen
}

const MAX_DESIGN_ITERATIONS: usize = 100_000;

/// G-optimal core set by Frank-Wolfe with away steps.
///
/// Stops once every feature has leverage at most `2 r`, `r` the rank of the features.
pub fn core_set(features: &FeatureMap) -> Result<CoreSet> {
    let basis = span_basis(features);
    let r = basis.len();
    if r == 0 {
        return Err(param("features", "all features are zero"));
    }
    let points: Vec<DVector<f64>> = (0..features.num_pairs()).map(|k| reduce(&basis, features.point(k))).collect();
    let start = greedy_basis(&points);
    if start.len() < r {
        return Err(Error::SingularDesign);
    }
    let mut weights = vec![0.0; points.len()];
    for &k in &start {
        weights[k] = 1.0 / r as f64;
    }
    let rf = r as f64;
    let target = 2.0 * rf;
    for _ in 0..MAX_DESIGN_ITERATIONS {
        let g = leverages(&points, &weights).ok_or(Error::SingularDesign)?;
        let j = crate::game::argmax(&g);
        if g[j] <= target {
            break;
        }
        // Support point with the smallest leverage.
        let k = (0..points.len())
            .filter(|&i| weights[i] > 0.0)
            .min_by(|&x, &y| g[x].total_cmp(&g[y]))
            .expect("support is nonempty");
        if g[j] - rf >= rf - g[k] {
            let alpha = (g[j] - rf) / (rf * (g[j] - 1.0));
            weights.iter_mut().for_each(|w| *w *= 1.0 - alpha);
            weights[j] += alpha;
        } else {
            let rho = weights[k];
            let max_beta = rho / (1.0 - rho);
            let beta = if g[k] <= 1.0 {
                max_beta
            } else {
                ((rf - g[k]) / (rf * (g[k] - 1.0))).min(max_beta)
            };
            weights.iter_mut().for_each(|w| *w *= 1.0 + beta);
            weights[k] -= beta;
            if beta == max_beta || weights[k] < 1e-15 {
                weights[k] = 0.0;
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
    }
    let g = leverages(&points, &weights).ok_or(Error::SingularDesign)?;
    let max_leverage = g.iter().copied().fold(0.0, f64::max);
    if max_leverage > target {
        return Err(Error::Numerical(format!("design did not reach leverage {target}: {max_leverage}")));
    }
    let members: Vec<usize> = (0..points.len()).filter(|&k| weights[k] > 0.0).collect();
    let w: Vec<f64> = members.iter().map(|&k| weights[k]).collect();
    Ok(CoreSet {
        members,
        weights: w,
        rank: r,
        max_leverage,
        basis,
    })
}

/// Exhaustive leverage scan of `features` under the core-set weights.
pub fn max_leverage(features: &FeatureMap, core: &CoreSet) -> Result<f64> {
    let points: Vec<DVector<f64>> = core.members.iter().map(|&k| reduce(&core.basis, features.point(k))).collect();
    let all: Vec<DVector<f64>> = (0..features.num_pairs()).map(|k| reduce(&core.basis, features.point(k))).collect();
    let mut m = DMatrix::zeros(core.rank, core.rank);
    for (p, &w) in points.iter().zip(&core.weights) {
        m.ger(w, p, p, 1.0);
    }
    let chol = Cholesky::<f64, Dyn>::new(m).ok_or(Error::SingularDesign)?;
    Ok(all
        .iter()
        .map(|p| chol.l().solve_lower_triangular(p).expect("nonsingular").norm_squared())
        .fold(0.0, f64::max))
}

/// `theta = V(rho)^{-1} sum_j rho_j phi_j mu_j`, solved within the span of the features.
pub fn weighted_least_squares(features: &FeatureMap, core: &CoreSet, means: &[f64]) -> Result<Vec<f64>> {
    if means.len() != core.members.len() {
        return Err(Error::Shape {
            name: "means",
            expected: core.members.len(),
            got: means.len(),
        });
    }
    let r = core.rank;
    let mut v = DMatrix::zeros(r, r);
    let mut rhs = DVector::zeros(r);
    for ((&k, &w), &mu) in core.members.iter().zip(&core.weights).zip(means) {
        check_index("core member", k, features.num_pairs())?;
        let x = reduce(&core.basis, features.point(k));
        v.ger(w, &x, &x, 1.0);
        rhs.axpy(w * mu, &x, 1.0);
    }
    let chol = Cholesky::<f64, Dyn>::new(v).ok_or(Error::SingularDesign)?;
    let z = chol.solve(&rhs);
    let d = features.dim();
    let mut theta = vec![0.0; d];
    for (u, &c) in core.basis.iter().zip(z.iter()) {
        for (t, &ui) in theta.iter_mut().zip(u) {
            *t += c * ui;
        }
    }
    Ok(theta)
}

/// Per-member budget `ceil(C d ln(4d/delta) / eps^2)`.
pub fn linear_sample_budget(d: usize, epsilon: f64, delta: f64, constant: f64) -> Result<u64> {
    if d == 0 {
        return Err(Error::EmptyDimension("feature dimension"));
    }
    check_accuracy(epsilon, delta)?;
    if !(constant.is_finite() && constant > 0.0) {
        return Err(param("constant", "must be positive"));
    }
    let n = (constant * d as f64 * (4.0 * d as f64 / delta).ln() / (epsilon * epsilon)).ceil();
    Ok((n as u64).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearLearnConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub tie: TieBreaking,
    pub constant: f64,
    /// Replaces the computed per-member budget when set.
    pub samples_override: Option<u64>,
}

impl LinearLearnConfig {
    pub fn new(epsilon: f64, delta: f64, tie: TieBreaking) -> Self {
        Self {
            epsilon,
            delta,
            tie,
            constant: crate::bandit::DEFAULT_HOEFFDING_CONSTANT,
            samples_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLearnResult {
    pub a_hat: usize,
    pub b_hat: usize,
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub core: CoreSet,
    pub samples_per_member: u64,
    pub total_queries: u64,
    /// Empirical means per core member, leader then follower.
    pub member_means: Vec<(f64, f64)>,
    pub phi_hat: Vec<f64>,
}

/// Samples the core set, fits both parameters and picks `(a_hat, b_hat)`
/// from the fitted means with response threshold `3 eps / 4`.
pub fn learn_linear<S: PairSampler + ?Sized>(sampler: &mut S, features: &FeatureMap, cfg: &LinearLearnConfig) -> Result<LinearLearnResult> {
    check_accuracy(cfg.epsilon, cfg.delta)?;
    if sampler.num_leader_actions() != features.num_leader_actions() || sampler.num_follower_actions() != features.num_follower_actions() {
        return Err(param("features", "action counts differ from the sampler"));
    }
    let n = match cfg.samples_override {
        Some(0) => return Err(param("samples_override", "must be positive")),
        Some(n) => n,
        None => linear_sample_budget(features.dim(), cfg.epsilon, cfg.delta, cfg.constant)?,
    };
    let core = core_set(features)?;
    let mut member_means = Vec::with_capacity(core.members.len());
    for &k in &core.members {
        let (a, b) = features.pair(k);
        member_means.push(sample_pair(sampler, a, b, n)?);
    }
    let m1: Vec<f64> = member_means.iter().map(|m| m.0).collect();
    let m2: Vec<f64> = member_means.iter().map(|m| m.1).collect();
    let theta1 = weighted_least_squares(features, &core, &m1)?;
    let theta2 = weighted_least_squares(features, &core, &m2)?;
    let choice = choose_from_estimates(&features.predict(&theta1)?, &features.predict(&theta2)?, 0.75 * cfg.epsilon, cfg.tie);
    Ok(LinearLearnResult {
        a_hat: choice.a_hat,
        b_hat: choice.b_hat,
        theta1,
        theta2,
        total_queries: n * core.members.len() as u64,
        samples_per_member: n,
        core,
        member_means,
        phi_hat: choice.phi_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::GameSampler;
    use crate::instances::{random_linear_game, random_unit_vector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn orthonormal_basis_core_set() {
        let f = FeatureMap::from_points(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let c = core_set(&f).unwrap();
        assert_eq!(c.members, vec![0, 1]);
        assert_eq!(c.weights, vec![0.5, 0.5]);
        assert!((c.max_leverage - 2.0).abs() < 1e-12);
        let f = FeatureMap::one_hot(2, 3).unwrap();
        let c = core_set(&f).unwrap();
        assert_eq!(c.members.len(), 6);
        assert!((c.max_leverage - 6.0).abs() < 1e-9);
    }

    #[test]
    fn random_sphere_bounds() {
        let mut r = rng(1);
        let points: Vec<Vec<f64>> = (0..500).map(|_| random_unit_vector(5, &mut r)).collect();
        let f = FeatureMap::from_points(&points).unwrap();
        let c = core_set(&f).unwrap();
        assert!(max_leverage(&f, &c).unwrap() <= 10.0 + 1e-9);
        assert!(c.members.len() as f64 <= support_bound(5));
        assert!((c.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_features() {
        // Points in a 2-dimensional subspace of R^4.
        let mut r = rng(2);
        let u = [0.5, 0.5, 0.5, 0.5];
        let v = [0.5, -0.5, 0.5, -0.5];
        let points: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let (x, y): (f64, f64) = (r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
                (0..4).map(|i| x * u[i] + y * v[i]).collect()
            })
            .collect();
        let f = FeatureMap::from_points(&points).unwrap();
        let c = core_set(&f).unwrap();
        assert_eq!(c.rank, 2);
        assert!(c.max_leverage <= 4.0);
        let theta: Vec<f64> = (0..4).map(|i| 0.3 * u[i] - 0.7 * v[i]).collect();
        let means: Vec<f64> = c.members.iter().map(|&k| dot(f.point(k), &theta)).collect();
        let fit = weighted_least_squares(&f, &c, &means).unwrap();
        for (a, b) in fit.iter().zip(&theta) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(core_set(&FeatureMap::from_points(&[vec![0.0, 0.0]]).unwrap()).is_err());
    }

    #[test]
    fn noiseless_interpolation_and_linearity() {
        let mut r = rng(3);
        let game = random_linear_game(6, 5, 4, &mut r).unwrap();
        let f = game.features();
        let c = core_set(f).unwrap();
        let truth = game.theta(Channel::Leader);
        let means: Vec<f64> = c.members.iter().map(|&k| dot(f.point(k), truth)).collect();
        let fit = weighted_least_squares(f, &c, &means).unwrap();
        for (a, b) in fit.iter().zip(truth) {
            assert!((a - b).abs() < 1e-10);
        }
        let other: Vec<f64> = (0..means.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let sum: Vec<f64> = means.iter().zip(&other).map(|(a, b)| 2.0 * a - b).collect();
        let t1 = weighted_least_squares(f, &c, &other).unwrap();
        let t2 = weighted_least_squares(f, &c, &sum).unwrap();
        for i in 0..4 {
            assert!((t2[i] - (2.0 * fit[i] - t1[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn realized_noise_bound() {
        // max_phi |phi.(theta_hat - theta)| <= sqrt(2 d) max_j |noise_j|.
        let mut r = rng(4);
        for _ in 0..50 {
            let game = random_linear_game(8, 8, 4, &mut r).unwrap();
            let f = game.features();
            let c = core_set(f).unwrap();
            let truth = game.theta(Channel::Follower);
            let noise: Vec<f64> = c.members.iter().map(|_| r.gen_range(-0.1..0.1)).collect();
            let means: Vec<f64> = c.members.iter().zip(&noise).map(|(&k, z)| dot(f.point(k), truth) + z).collect();
            let fit = weighted_least_squares(f, &c, &means).unwrap();
            let err = (0..f.num_pairs())
                .map(|k| (dot(f.point(k), &fit) - dot(f.point(k), truth)).abs())
                .fold(0.0, f64::max);
            let bound = (2.0 * 4.0f64).sqrt() * noise.iter().map(|z| z.abs()).fold(0.0, f64::max);
            assert!(err <= bound + 1e-12);
        }
    }

    #[test]
    fn budget_formula() {
        let n = linear_sample_budget(4, 0.25, 0.1, 32.0).unwrap();
        assert_eq!(n, (32.0 * 4.0 * (160.0f64).ln() / 0.0625).ceil() as u64);
    }

    #[test]
    fn deterministic_linear_game_recovers_oracle() {
        let mut r = rng(6);
        let base = random_linear_game(5, 5, 3, &mut r).unwrap();
        let det = LinearGame::new(
            base.features().clone(),
            base.theta(Channel::Leader).to_vec(),
            base.theta(Channel::Follower).to_vec(),
            NoiseModel::Deterministic,
        )
        .unwrap();
        let table = det.to_bandit_game().unwrap();
        let mut cfg = LinearLearnConfig::new(0.2, 0.1, TieBreaking::Pessimistic);
        cfg.samples_override = Some(3);
        let res = learn_linear(&mut GameSampler::new(&table, 0), det.features(), &cfg).unwrap();
        for (a, b) in res.theta1.iter().zip(det.theta(Channel::Leader)) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(res.total_queries, 3 * res.core.members.len() as u64);
    }

    #[test]
    fn wls_accuracy_at_budget() {
        // Gaussian noise at the default budget: max_phi error <= eps/8 in >= 1 - delta of runs.
        let (eps, delta) = (0.25, 0.1);
        let mut r = rng(8);
        let game = random_linear_game(10, 10, 4, &mut r).unwrap();
        let table = game.to_bandit_game().unwrap();
        let cfg = LinearLearnConfig::new(eps, delta, TieBreaking::Pessimistic);
        let mut ok = 0;
        let runs = 200;
        for seed in 0..runs {
            let res = learn_linear(&mut GameSampler::new(&table, seed), game.features(), &cfg).unwrap();
            let f = game.features();
            let err = (0..f.num_pairs())
                .map(|k| (dot(f.point(k), &res.theta1) - dot(f.point(k), game.theta(Channel::Leader))).abs())
                .fold(0.0, f64::max);
            ok += usize::from(err <= eps / 8.0);
        }
        assert!(ok as f64 >= runs as f64 * (1.0 - delta), "{ok}/{runs}");
    }
}
