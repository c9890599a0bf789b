//! Named constructions and random generators for games and MDPs.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bandit_rl::BanditRlGame;
use crate::error::{param, Result};
use crate::game::{BanditGame, NoiseModel, PayoffTable};
use crate::linear::{FeatureMap, LinearGame};
use crate::mdp::{EpisodicMdp, Shape};

/// Payoff structure of a random game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    General,
    /// `mu1 = 1 - mu2`.
    ZeroSum,
    /// `mu1 = mu2`.
    Cooperative,
}

/// The 2x2 example whose leader optimum over mixed strategies is strictly mixed.
pub fn mixed_commitment_game() -> BanditGame {
    BanditGame::from_rows(
        &[vec![2.0, 4.0], vec![1.0, 3.0]],
        &[vec![1.0, 0.0], vec![0.0, 1.0]],
        NoiseModel::Deterministic,
    )
    .expect("constant instance is valid")
}

/// Perturbation size `1 / sqrt(13.5 n)` used by [`lower_bound_pair`].
pub fn lower_bound_delta(n: u64) -> f64 {
    1.0 / (13.5 * n as f64).sqrt()
}

/// Two Bernoulli games that differ only in the follower's `a1` row.
pub fn lower_bound_pair(n: u64) -> Result<(BanditGame, BanditGame)> {
    if n == 0 {
        return Err(param("n", "must be at least 1"));
    }
    let d = lower_bound_delta(n);
    if d > 0.5 {
        return Err(param("n", format!("perturbation {d} exceeds 1/2")));
    }
    let mu1 = [vec![1.0, 0.0], vec![0.5, 0.5]];
    let hi = (1.0 + d) / 2.0;
    let lo = (1.0 - d) / 2.0;
    let plus = BanditGame::from_rows(&mu1, &[vec![hi, lo], vec![1.0, 1.0]], NoiseModel::Bernoulli)?;
    let minus = BanditGame::from_rows(&mu1, &[vec![lo, hi], vec![1.0, 1.0]], NoiseModel::Bernoulli)?;
    Ok((plus, minus))
}

/// Deterministic 2x2 game whose relaxed value drops by 1/2 between `eps1` and `eps2`.
pub fn gap_instance(eps1: f64, eps2: f64) -> Result<BanditGame> {
    if !(eps1.is_finite() && eps2.is_finite() && 0.0 <= eps1 && eps1 < eps2 && eps2 < 1.0) {
        return Err(param("epsilons", format!("need 0 <= eps1 < eps2 < 1, got ({eps1}, {eps2})")));
    }
    BanditGame::from_rows(
        &[vec![1.0, 0.0], vec![0.5, 0.5]],
        &[vec![(eps1 + eps2) / 2.0, 0.0], vec![1.0, 1.0]],
        NoiseModel::Deterministic,
    )
}

/// Parameters of one member of the lower-bound family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub leader_actions: usize,
    pub follower_actions: usize,
    pub epsilon: f64,
    pub gap: f64,
    pub a_star: usize,
    pub b_star1: usize,
    pub b_star2: usize,
}

/// Bernoulli game with `gap_eps = g` and a hidden leader action `a_star`.
///
/// Leader payoffs depend only on which third of the follower actions `b`
/// falls in; the follower is indifferent everywhere except at `a_star`,
/// where `b_star1` (first third) and `b_star2` (second third) stand out.
pub fn lower_bound_family(p: FamilyParams) -> Result<BanditGame> {
    let FamilyParams {
        leader_actions: na,
        follower_actions: nb,
        epsilon: eps,
        gap: g,
        a_star,
        b_star1,
        b_star2,
    } = p;
    if na == 0 {
        return Err(param("A", "must be positive"));
    }
    if nb == 0 || nb % 3 != 0 {
        return Err(param("B", format!("must be a positive multiple of 3, got {nb}")));
    }
    if !(eps > 0.0 && g >= 0.0 && 0.5 + g + eps <= 1.0 && 0.5 + 2.0 * eps <= 1.0) {
        return Err(param("epsilon/gap", format!("out of range: eps={eps}, g={g}")));
    }
    if a_star >= na {
        return Err(param("a_star", "out of range"));
    }
    let third = nb / 3;
    if b_star1 >= third {
        return Err(param("b_star1", "must lie in the first third"));
    }
    if !(third..2 * third).contains(&b_star2) {
        return Err(param("b_star2", "must lie in the second third"));
    }
    let leader_row: Vec<f64> = (0..nb)
        .map(|b| match b / third {
            0 => 0.5 + g + eps,
            1 => 0.5 + eps,
            _ => 0.5,
        })
        .collect();
    let mu1 = vec![leader_row; na];
    let mut mu2 = vec![vec![0.5; nb]; na];
    mu2[a_star][b_star1] = 0.5 + 2.0 * eps;
    mu2[a_star][b_star2] = 0.5 + 1.25 * eps;
    BanditGame::from_rows(&mu1, &mu2, NoiseModel::Bernoulli)
}

/// Bernoulli game with i.i.d. uniform means.
pub fn random_game<R: Rng + ?Sized>(na: usize, nb: usize, structure: Structure, rng: &mut R) -> Result<BanditGame> {
    let n = na * nb;
    let mu2: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let mu1: Vec<f64> = match structure {
        Structure::General => (0..n).map(|_| rng.gen::<f64>()).collect(),
        Structure::ZeroSum => mu2.iter().map(|x| 1.0 - x).collect(),
        Structure::Cooperative => mu2.clone(),
    };
    BanditGame::new(
        PayoffTable::new(na, nb, mu1)?,
        PayoffTable::new(na, nb, mu2)?,
        NoiseModel::Bernoulli,
    )
}

/// Linear view of a tabular game with indicator features, `d = A * B`.
pub fn one_hot_linear_embedding(game: &BanditGame) -> Result<LinearGame> {
    let na = game.num_leader_actions();
    let nb = game.num_follower_actions();
    LinearGame::new(
        FeatureMap::one_hot(na, nb)?,
        game.mean_leader().as_slice().to_vec(),
        game.mean_follower().as_slice().to_vec(),
        game.noise(),
    )
}

/// One single-state, single-step MDP per leader action.
pub fn embed_as_bandit_rl(game: &BanditGame) -> Result<BanditRlGame> {
    let nb = game.num_follower_actions();
    let shape = Shape::new(1, 1, nb)?;
    let arms = (0..game.num_leader_actions())
        .map(|a| {
            EpisodicMdp::new(
                shape,
                Vec::new(),
                game.mean_leader().row(a).to_vec(),
                game.mean_follower().row(a).to_vec(),
                0,
                game.noise(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    BanditRlGame::new(arms)
}

fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

/// Bernoulli MDP with flat-Dirichlet transition rows and uniform mean rewards.
pub fn random_mdp<R: Rng + ?Sized>(shape: Shape, rng: &mut R) -> Result<EpisodicMdp> {
    let shape = Shape::new(shape.horizon, shape.states, shape.actions)?;
    let rows = shape.transition_len() / shape.states;
    let transitions: Vec<f64> = (0..rows).flat_map(|_| random_simplex(shape.states, rng)).collect();
    let r1: Vec<f64> = (0..shape.cells()).map(|_| rng.gen::<f64>()).collect();
    let r2: Vec<f64> = (0..shape.cells()).map(|_| rng.gen::<f64>()).collect();
    EpisodicMdp::new(shape, transitions, r1, r2, 0, NoiseModel::Bernoulli)
}

/// `arms` independent random MDPs sharing one shape.
pub fn random_bandit_rl<R: Rng + ?Sized>(arms: usize, shape: Shape, rng: &mut R) -> Result<BanditRlGame> {
    let mdps = (0..arms).map(|_| random_mdp(shape, rng)).collect::<Result<Vec<_>>>()?;
    BanditRlGame::new(mdps)
}

/// Uniform draw from the unit sphere in `R^d`.
pub fn random_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Linear game with unit-sphere features and parameters and unit Gaussian noise.
pub fn random_linear_game<R: Rng + ?Sized>(na: usize, nb: usize, d: usize, rng: &mut R) -> Result<LinearGame> {
    let features = FeatureMap::random_unit(na, nb, d, rng)?;
    let theta1 = random_unit_vector(d, rng);
    let theta2 = random_unit_vector(d, rng);
    LinearGame::new(features, theta1, theta2, NoiseModel::Gaussian { sigma: 1.0 })
}

/// Named generator selectable from configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    LowerBoundPair,
    GapInstance,
    LowerBoundFamily,
    MixedCommitment,
    RandomGeneral,
    RandomZeroSum,
    RandomCooperative,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::LowerBoundPair,
        Family::GapInstance,
        Family::LowerBoundFamily,
        Family::MixedCommitment,
        Family::RandomGeneral,
        Family::RandomZeroSum,
        Family::RandomCooperative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::LowerBoundPair => "lower-bound-pair",
            Family::GapInstance => "gap-instance",
            Family::LowerBoundFamily => "lower-bound-family",
            Family::MixedCommitment => "mixed-commitment",
            Family::RandomGeneral => "random-general",
            Family::RandomZeroSum => "random-zero-sum",
            Family::RandomCooperative => "random-cooperative",
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Family::LowerBoundPair => &["n"],
            Family::GapInstance => &["eps1", "eps2"],
            Family::LowerBoundFamily => &["A", "B", "epsilon", "gap", "a_star", "b_star1", "b_star2"],
            Family::MixedCommitment => &[],
            Family::RandomGeneral | Family::RandomZeroSum | Family::RandomCooperative => &["A", "B"],
        }
    }
}

impl std::str::FromStr for Family {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| param("family", format!("unknown family `{s}`")))
    }
}

/// A generator plus its parameters; random families also use `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDescriptor {
    pub family: Family,
    #[serde(default)]
    pub params: std::collections::BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: u64,
}

impl InstanceDescriptor {
    pub fn new(family: Family, params: &[(&str, f64)], seed: u64) -> Self {
        Self {
            family,
            params: params.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            seed,
        }
    }

    fn real(&self, key: &'static str) -> Result<f64> {
        self.params.get(key).copied().ok_or_else(|| param(key, "missing parameter"))
    }

    fn count(&self, key: &'static str) -> Result<usize> {
        let v = self.real(key)?;
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(param(key, format!("expected a nonnegative integer, got {v}")));
        }
        Ok(v as usize)
    }

    /// Checks that exactly the family's parameters are present.
    pub fn validate(&self) -> Result<()> {
        let keys = self.family.keys();
        if let Some(k) = self.params.keys().find(|k| !keys.contains(&k.as_str())) {
            return Err(param("params", format!("`{k}` is not a parameter of {}", self.family.name())));
        }
        for k in keys {
            self.real(k)?;
        }
        Ok(())
    }

    /// Builds the games; the lower-bound pair yields two, every other family one.
    pub fn build(&self) -> Result<Vec<BanditGame>> {
        use rand::SeedableRng;
        self.validate()?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
        let random = |structure, rng: &mut rand_chacha::ChaCha8Rng| -> Result<Vec<BanditGame>> {
            let (na, nb) = (self.count("A")?, self.count("B")?);
            if na == 0 || nb == 0 {
                return Err(param("A/B", "must be positive"));
            }
            Ok(vec![random_game(na, nb, structure, rng)?])
        };
        match self.family {
            Family::LowerBoundPair => {
                let (p, m) = lower_bound_pair(self.count("n")? as u64)?;
                Ok(vec![p, m])
            }
            Family::GapInstance => Ok(vec![gap_instance(self.real("eps1")?, self.real("eps2")?)?]),
            Family::LowerBoundFamily => Ok(vec![lower_bound_family(FamilyParams {
                leader_actions: self.count("A")?,
                follower_actions: self.count("B")?,
                epsilon: self.real("epsilon")?,
                gap: self.real("gap")?,
                a_star: self.count("a_star")?,
                b_star1: self.count("b_star1")?,
                b_star2: self.count("b_star2")?,
            })?]),
            Family::MixedCommitment => Ok(vec![mixed_commitment_game()]),
            Family::RandomGeneral => random(Structure::General, &mut rng),
            Family::RandomZeroSum => random(Structure::ZeroSum, &mut rng),
            Family::RandomCooperative => random(Structure::Cooperative, &mut rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::TieBreaking::Pessimistic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lower_bound_pair_values() {
        for n in [1, 10, 1000, 123_456] {
            let (p, m) = lower_bound_pair(n).unwrap();
            assert_eq!(p.phi_values(0.0, Pessimistic).unwrap(), vec![1.0, 0.5]);
            assert_eq!(m.phi_values(0.0, Pessimistic).unwrap(), vec![0.0, 0.5]);
            assert_eq!(p.stackelberg(0.0, Pessimistic).unwrap(), (0, 1.0));
            assert_eq!(m.stackelberg(0.0, Pessimistic).unwrap(), (1, 0.5));
            assert_eq!(p.mean_leader(), m.mean_leader());
            assert_eq!(p.mean_follower().row(1), m.mean_follower().row(1));
            assert_ne!(p.mean_follower().row(0), m.mean_follower().row(0));
        }
        let d = lower_bound_delta(1000);
        assert!((d - 0.008_606_629_658_238_7).abs() < 1e-12);
        assert!(lower_bound_pair(0).is_err());
    }

    #[test]
    fn gap_instance_drop() {
        let g = gap_instance(0.0, 0.2).unwrap();
        assert_eq!(g.gap(0.2).unwrap(), 0.5);
        let (a2, _) = g.stackelberg(0.2, Pessimistic).unwrap();
        assert_eq!(g.phi_value(a2, 0.0, Pessimistic).unwrap(), 0.5);
        let g = gap_instance(0.1, 0.3).unwrap();
        let drop = g.stackelberg(0.1, Pessimistic).unwrap().1 - g.stackelberg(0.3, Pessimistic).unwrap().1;
        assert!(drop >= 0.5);
        assert!(gap_instance(0.2, 0.2).is_err());
        assert!(gap_instance(0.3, 0.2).is_err());
        assert!(gap_instance(0.0, 1.0).is_err());
    }

    #[test]
    fn family_example() {
        let p = FamilyParams {
            leader_actions: 3,
            follower_actions: 6,
            epsilon: 0.1,
            gap: 0.05,
            a_star: 1,
            b_star1: 0,
            b_star2: 3,
        };
        let g = lower_bound_family(p).unwrap();
        assert!((g.gap(0.1).unwrap() - 0.05).abs() < 1e-12);
        let phi0 = g.phi_values(0.0, Pessimistic).unwrap();
        assert!((phi0[1] - 0.65).abs() < 1e-12);
        for a in [0, 2] {
            assert_eq!(phi0[a], 0.5);
            assert_eq!(g.phi_value(a, 0.1, Pessimistic).unwrap(), 0.5);
            assert!((phi0[1] - phi0[a] - 0.15).abs() < 1e-12);
        }
    }

    #[test]
    fn family_rejects_bad_params() {
        let ok = FamilyParams {
            leader_actions: 2,
            follower_actions: 3,
            epsilon: 0.1,
            gap: 0.1,
            a_star: 0,
            b_star1: 0,
            b_star2: 1,
        };
        assert!(lower_bound_family(ok).is_ok());
        assert!(lower_bound_family(FamilyParams { follower_actions: 4, ..ok }).is_err());
        assert!(lower_bound_family(FamilyParams { b_star2: 2, ..ok }).is_err());
        assert!(lower_bound_family(FamilyParams { b_star1: 1, ..ok }).is_err());
        assert!(lower_bound_family(FamilyParams { a_star: 2, ..ok }).is_err());
        assert!(lower_bound_family(FamilyParams { gap: 0.45, ..ok }).is_err());
    }

    #[test]
    fn random_structures() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let z = random_game(4, 4, Structure::ZeroSum, &mut rng).unwrap();
            let c = random_game(4, 4, Structure::Cooperative, &mut rng).unwrap();
            for eps in [0.0, 0.05, 0.2, 0.7] {
                assert_eq!(z.gap(eps).unwrap(), 0.0);
                assert!(c.gap(eps).unwrap() <= eps + 1e-12);
            }
        }
        let a = random_game(3, 5, Structure::General, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = random_game(3, 5, Structure::General, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn embeddings_preserve_means() {
        let g = mixed_commitment_game();
        let lin = one_hot_linear_embedding(&g).unwrap();
        assert_eq!(lin.features().dim(), 4);
        assert_eq!(lin.theta(crate::mdp::Channel::Leader), &[2.0, 4.0, 1.0, 3.0]);
        assert_eq!(lin.to_bandit_game().unwrap(), g);

        let (m1, _) = lower_bound_pair(50).unwrap();
        let rl = embed_as_bandit_rl(&m1).unwrap();
        for a in 0..2 {
            let (v, _) = crate::mdp::value_iteration(rl.arm(a), crate::mdp::Channel::Follower);
            let best = m1.mean_follower().row(a).iter().copied().fold(f64::MIN, f64::max);
            assert_eq!(v, best);
        }
    }

    #[test]
    fn random_mdp_is_valid_and_seeded() {
        let sh = Shape::new(3, 3, 2).unwrap();
        let a = random_mdp(sh, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = random_mdp(sh, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        let lin = random_linear_game(5, 4, 3, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(lin.features().num_pairs(), 20);
    }

    #[test]
    fn descriptors_build_and_validate() {
        let d = InstanceDescriptor::new(Family::GapInstance, &[("eps1", 0.0), ("eps2", 0.2)], 0);
        assert_eq!(d.build().unwrap()[0], gap_instance(0.0, 0.2).unwrap());
        let d = InstanceDescriptor::new(Family::LowerBoundPair, &[("n", 1000.0)], 0);
        assert_eq!(d.build().unwrap().len(), 2);
        let d = InstanceDescriptor::new(Family::RandomZeroSum, &[("A", 3.0), ("B", 4.0)], 9);
        assert_eq!(d.build().unwrap(), d.build().unwrap());
        assert!(InstanceDescriptor::new(Family::MixedCommitment, &[("n", 1.0)], 0).build().is_err());
        assert!(InstanceDescriptor::new(Family::RandomGeneral, &[("A", 2.5), ("B", 2.0)], 0).build().is_err());
        assert!(InstanceDescriptor::new(Family::GapInstance, &[("eps1", 0.0)], 0).build().is_err());
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
            let json = serde_json::to_string(&f).unwrap();
            assert_eq!(json, format!("\"{}\"", f.name()));
        }
    }
}
