//! Dense two-phase simplex and the occupancy / leader-strategy programs built on it.
//!
//! Tolerances: primal feasibility [`FEASIBILITY_TOL`], reduced-cost optimality
//! [`OPTIMALITY_TOL`]. Pivoting uses Bland's rule, so results are deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::game::{near_best, PayoffTable, TieBreaking};
use crate::mdp::{
    policy_from_visitation, value_iteration, Channel, EpisodicMdp, OccupancyMeasure, Policy,
};

pub const FEASIBILITY_TOL: f64 = 1e-8;
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Slack for comparisons between LP optimal values.
pub const LP_VALUE_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl std::fmt::Display for LpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
        })
    }
}

/// `opt c.x` subject to `A_eq x = b_eq`, `A_ub x <= b_ub`, `lo <= x <= hi`.
///
/// Variables default to `[0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub ub_rows: Vec<Vec<f64>>,
    pub ub_rhs: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, sense: Sense) -> Self {
        let n = objective.len();
        Self {
            objective,
            sense,
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            ub_rows: Vec::new(),
            ub_rhs: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.ub_rows.push(row);
        self.ub_rhs.push(rhs);
    }

    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) {
        self.add_le(row.into_iter().map(|x| -x).collect(), -rhs);
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.bounds[var] = (lo, hi);
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if n == 0 {
            return Err(Error::EmptyDimension("variables"));
        }
        if self.eq_rows.len() != self.eq_rhs.len() || self.ub_rows.len() != self.ub_rhs.len() {
            return Err(param("lp", "row and right-hand-side counts differ"));
        }
        if self.bounds.len() != n {
            return Err(Error::Shape {
                name: "bounds",
                expected: n,
                got: self.bounds.len(),
            });
        }
        for row in self.eq_rows.iter().chain(&self.ub_rows) {
            if row.len() != n {
                return Err(Error::Shape {
                    name: "constraint row",
                    expected: n,
                    got: row.len(),
                });
            }
        }
        let finite = self
            .objective
            .iter()
            .chain(self.eq_rows.iter().flatten())
            .chain(self.ub_rows.iter().flatten())
            .chain(&self.eq_rhs)
            .chain(&self.ub_rhs)
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("lp coefficients"));
        }
        for &(lo, hi) in &self.bounds {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(param("bounds", format!("invalid interval [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let eq = self
            .eq_rows
            .iter()
            .zip(&self.eq_rhs)
            .map(|(r, b)| (dot(r) - b).abs());
        let ub = self
            .ub_rows
            .iter()
            .zip(&self.ub_rhs)
            .map(|(r, b)| (dot(r) - b).max(0.0));
        let bd = self
            .bounds
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0));
        eq.chain(ub).chain(bd).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub value: f64,
}

impl LpSolution {
    fn without_point(status: LpStatus, n: usize) -> Self {
        Self {
            status,
            x: vec![f64::NAN; n],
            value: f64::NAN,
        }
    }
}

/// How an original variable is rebuilt from nonnegative standard-form columns.
enum VarMap {
    /// `x = offset + y`.
    Shift { col: usize, offset: f64 },
    /// `x = offset - y`.
    Mirror { col: usize, offset: f64 },
    /// `x = y+ - y-`.
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    /// Rows of `[A | s] y = b` with `b >= 0`.
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    /// Column usable as an initial basic variable per row, if any.
    initial: Vec<Option<usize>>,
    maps: Vec<VarMap>,
}

fn standardize(lp: &LinearProgram) -> StandardForm {
    let n = lp.num_vars();
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0;
    let mut caps: Vec<(usize, f64)> = Vec::new();
    for &(lo, hi) in &lp.bounds {
        if lo.is_finite() {
            maps.push(VarMap::Shift { col: ncols, offset: lo });
            if hi.is_finite() {
                caps.push((ncols, hi - lo));
            }
            ncols += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Mirror { col: ncols, offset: hi });
            ncols += 1;
        } else {
            maps.push(VarMap::Split { pos: ncols, neg: ncols + 1 });
            ncols += 2;
        }
    }
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let translate = |row: &[f64]| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; ncols];
        let mut shift = 0.0;
        for (coef, map) in row.iter().zip(&maps) {
            match *map {
                VarMap::Shift { col, offset } => {
                    out[col] += coef;
                    shift += coef * offset;
                }
                VarMap::Mirror { col, offset } => {
                    out[col] -= coef;
                    shift += coef * offset;
                }
                VarMap::Split { pos, neg } => {
                    out[pos] += coef;
                    out[neg] -= coef;
                }
            }
        }
        (out, shift)
    };

    let signed_objective: Vec<f64> = lp.objective.iter().map(|c| sign * c).collect();
    let (mut cost, _) = translate(&signed_objective);

    let mut eq: Vec<(Vec<f64>, f64)> = Vec::new();
    for (row, &b) in lp.eq_rows.iter().zip(&lp.eq_rhs) {
        let (r, shift) = translate(row);
        eq.push((r, b - shift));
    }
    let mut ub: Vec<(Vec<f64>, f64)> = Vec::new();
    for (row, &b) in lp.ub_rows.iter().zip(&lp.ub_rhs) {
        let (r, shift) = translate(row);
        ub.push((r, b - shift));
    }
    for (col, cap) in caps {
        let mut r = vec![0.0; ncols];
        r[col] = 1.0;
        ub.push((r, cap));
    }

    let nslack = ub.len();
    let width = ncols + nslack;
    cost.resize(width, 0.0);
    let mut rows = Vec::with_capacity(eq.len() + nslack);
    let mut rhs = Vec::with_capacity(eq.len() + nslack);
    let mut initial = Vec::with_capacity(eq.len() + nslack);
    for (mut r, b) in eq {
        r.resize(width, 0.0);
        if b < 0.0 {
            r.iter_mut().for_each(|x| *x = -*x);
            rhs.push(-b);
        } else {
            rhs.push(b);
        }
        rows.push(r);
        initial.push(None);
    }
    for (k, (mut r, b)) in ub.into_iter().enumerate() {
        r.resize(width, 0.0);
        r[ncols + k] = 1.0;
        if b < 0.0 {
            r.iter_mut().for_each(|x| *x = -*x);
            rhs.push(-b);
            initial.push(None);
        } else {
            rhs.push(b);
            initial.push(Some(ncols + k));
        }
        rows.push(r);
    }
    StandardForm {
        rows,
        rhs,
        cost,
        initial,
        maps,
    }
}

/// Dense tableau; the last column holds the right-hand side.
struct Tableau {
    t: Vec<Vec<f64>>,
    /// Reduced costs; the last entry is minus the objective value.
    z: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.t[r][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for x in self.t[r].iter_mut() {
            *x /= p;
        }
        self.t[r][c] = 1.0;
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
                row[c] = 0.0;
            }
        }
        let f = self.z[c];
        if f != 0.0 {
            for (x, y) in self.z.iter_mut().zip(&pivot_row) {
                *x -= f * y;
            }
            self.z[c] = 0.0;
        }
        self.basis[r] = c;
    }

    fn set_costs(&mut self, cost: &[f64]) {
        let mut z = cost.to_vec();
        z.push(0.0);
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = z[b];
            if cb != 0.0 {
                for (x, y) in z.iter_mut().zip(&self.t[r]) {
                    *x -= cb * y;
                }
            }
        }
        self.z = z;
    }

    /// Bland's rule over columns `0..eligible`.
    fn optimize(&mut self, eligible: usize, pivots: &mut usize) -> Result<Outcome> {
        loop {
            let Some(c) = (0..eligible).find(|&j| self.z[j] < -OPTIMALITY_TOL) else {
                return Ok(Outcome::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.t.len() {
                let a = self.t[r][c];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, best)) => {
                            ratio < best - 1e-14 || (ratio <= best + 1e-14 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            self.pivot(r, c);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(Error::Numerical(format!("no convergence after {MAX_PIVOTS} pivots")));
            }
        }
    }
}

/// Solves `B x_B = b` by Gaussian elimination with partial pivoting.
fn solve_dense(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))?;
        if m[p][k].abs() < 1e-13 {
            return None;
        }
        m.swap(k, p);
        b.swap(k, p);
        let (upper, lower) = m.split_at_mut(k + 1);
        let pivot = &upper[k];
        for (i, row) in lower.iter_mut().enumerate().map(|(o, r)| (k + 1 + o, r)) {
            let f = row[k] / pivot[k];
            if f != 0.0 {
                for (x, &p) in row[k..n].iter_mut().zip(&pivot[k..n]) {
                    *x -= f * p;
                }
                b[i] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / m[k][k];
    }
    Some(x)
}

/// Two-phase simplex with Bland's rule.
///
/// Infeasible and unbounded programs are reported through
/// [`LpSolution::status`]; `Err` means malformed input or numerical breakdown.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.num_vars();
    let sf = standardize(lp);
    let m = sf.rows.len();
    let width_std = sf.cost.len();

    // Artificial columns for rows without an initial basic column.
    let art_rows: Vec<usize> = (0..m).filter(|&r| sf.initial[r].is_none()).collect();
    let width = width_std + art_rows.len();
    let mut t = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut next_art = width_std;
    for r in 0..m {
        let mut row = sf.rows[r].clone();
        row.resize(width, 0.0);
        match sf.initial[r] {
            Some(c) => basis.push(c),
            None => {
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
        }
        row.push(sf.rhs[r]);
        t.push(row);
    }
    let mut tab = Tableau {
        t,
        z: Vec::new(),
        basis,
        width,
    };
    let mut pivots = 0;

    if !art_rows.is_empty() {
        let mut phase1 = vec![0.0; width];
        phase1[width_std..].fill(1.0);
        tab.set_costs(&phase1);
        tab.optimize(width, &mut pivots)?;
        if -tab.z[width] > FEASIBILITY_TOL {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, n));
        }
        // Drive artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < tab.t.len() {
            if tab.basis[r] >= width_std {
                let entering = (0..width_std).find(|&j| tab.t[r][j].abs() > 1e-9);
                match entering {
                    Some(c) => {
                        tab.pivot(r, c);
                        r += 1;
                    }
                    None => {
                        tab.t.remove(r);
                        tab.basis.remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
    }

    let mut cost = sf.cost.clone();
    cost.resize(width, 0.0);
    tab.set_costs(&cost);
    if let Outcome::Unbounded = tab.optimize(width_std, &mut pivots)? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, n));
    }

    // Recompute basic values from the original rows to shed tableau drift.
    let kept_rows = select_independent_rows(&sf.rows, &tab.basis);
    let mut y = vec![0.0; width_std];
    let refactored = if kept_rows.len() == tab.basis.len() {
        let mat: Vec<Vec<f64>> = kept_rows
            .iter()
            .map(|&r| tab.basis.iter().map(|&c| sf.rows[r][c]).collect())
            .collect();
        let b: Vec<f64> = kept_rows.iter().map(|&r| sf.rhs[r]).collect();
        solve_dense(mat, b)
    } else {
        None
    };
    match refactored {
        Some(xb) => {
            for (&c, v) in tab.basis.iter().zip(xb) {
                y[c] = v;
            }
        }
        None => {
            for (r, &c) in tab.basis.iter().enumerate() {
                y[c] = tab.rhs(r);
            }
        }
    }
    for v in y.iter_mut() {
        if *v < 0.0 && *v > -FEASIBILITY_TOL {
            *v = 0.0;
        }
    }

    let x: Vec<f64> = sf
        .maps
        .iter()
        .map(|map| match *map {
            VarMap::Shift { col, offset } => offset + y[col],
            VarMap::Mirror { col, offset } => offset - y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let violation = lp.max_violation(&x);
    if violation > FEASIBILITY_TOL {
        return Err(Error::Numerical(format!("optimal basis violates constraints by {violation:.3e}")));
    }
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        value,
    })
}

/// Greedy choice of rows whose restriction to `cols` has full rank.
fn select_independent_rows(rows: &[Vec<f64>], cols: &[usize]) -> Vec<usize> {
    let k = cols.len();
    let mut basis_rows: Vec<Vec<f64>> = Vec::new();
    let mut chosen = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        if chosen.len() == k {
            break;
        }
        let mut v: Vec<f64> = cols.iter().map(|&c| row[c]).collect();
        // Gram-Schmidt against already chosen rows.
        for b in &basis_rows {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = cols.iter().map(|&c| row[c].abs()).fold(0.0, f64::max);
        if norm > 1e-9 * scale.max(1.0) {
            basis_rows.push(v.into_iter().map(|x| x / norm).collect());
            chosen.push(r);
        }
    }
    chosen
}

/// Solution of a constrained follower-response program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSolution {
    pub policy: Policy,
    pub occupancy: OccupancyMeasure,
    /// Leader value of the optimal occupancy.
    pub value: f64,
    /// Follower value of the optimal occupancy.
    pub follower_value: f64,
}

/// Occupancy-measure program over `mdp` with a follower-value floor.
pub fn occupancy_program(mdp: &EpisodicMdp, threshold: f64, sense: Sense) -> Result<LinearProgram> {
    if threshold.is_nan() {
        return Err(param("threshold", "NaN"));
    }
    let sh = mdp.shape();
    let n = sh.cells();
    let mut lp = LinearProgram::new(mdp.rewards(Channel::Leader).to_vec(), sense);
    for s in 0..sh.states {
        let mut row = vec![0.0; n];
        for b in 0..sh.actions {
            row[sh.cell(0, s, b)] = 1.0;
        }
        lp.add_eq(row, if s == mdp.initial_state() { 1.0 } else { 0.0 });
    }
    for h in 0..sh.horizon - 1 {
        for s2 in 0..sh.states {
            let mut row = vec![0.0; n];
            for s in 0..sh.states {
                for b in 0..sh.actions {
                    row[sh.cell(h, s, b)] = mdp.next_state_distribution(h, s, b)[s2];
                }
            }
            for b in 0..sh.actions {
                row[sh.cell(h + 1, s2, b)] -= 1.0;
            }
            lp.add_eq(row, 0.0);
        }
    }
    if threshold > f64::NEG_INFINITY {
        lp.add_ge(mdp.rewards(Channel::Follower).to_vec(), threshold);
    }
    Ok(lp)
}

fn constrained_response(mdp: &EpisodicMdp, threshold: f64, sense: Sense) -> Result<ResponseSolution> {
    let (achievable, _) = value_iteration(mdp, Channel::Follower);
    if threshold == f64::INFINITY {
        return Err(Error::ThresholdUnreachable { threshold, achievable });
    }
    let lp = occupancy_program(mdp, threshold, sense)?;
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::ThresholdUnreachable { threshold, achievable }),
        LpStatus::Unbounded => return Err(Error::Lp(LpStatus::Unbounded)),
    }
    let occupancy = OccupancyMeasure::from_raw(mdp.shape(), sol.x)?;
    let policy = policy_from_visitation(&occupancy);
    let follower_value = occupancy.dot(mdp.rewards(Channel::Follower));
    Ok(ResponseSolution {
        policy,
        occupancy,
        value: sol.value,
        follower_value,
    })
}

/// Minimizes the leader value over follower policies with value at least `threshold`.
///
/// `threshold = -inf` drops the follower constraint.
pub fn worst_case_best_response(mdp: &EpisodicMdp, threshold: f64) -> Result<ResponseSolution> {
    constrained_response(mdp, threshold, Sense::Minimize)
}

/// Maximizing counterpart of [`worst_case_best_response`].
pub fn best_case_best_response(mdp: &EpisodicMdp, threshold: f64) -> Result<ResponseSolution> {
    constrained_response(mdp, threshold, Sense::Maximize)
}

/// Constrained response under a tie-breaking rule.
pub fn constrained_best_response(mdp: &EpisodicMdp, threshold: f64, tie: TieBreaking) -> Result<ResponseSolution> {
    match tie {
        TieBreaking::Pessimistic => worst_case_best_response(mdp, threshold),
        TieBreaking::Optimistic => best_case_best_response(mdp, threshold),
    }
}

/// Leader mixed strategy maximizing her value among those inducing a given response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategySolution {
    pub strategy: Vec<f64>,
    pub follower_action: usize,
    pub value: f64,
    pub lp_calls: usize,
}

/// Mixture `sum_a pi_a table[a][b]` for every column `b`.
pub fn mix(table: &PayoffTable, strategy: &[f64]) -> Vec<f64> {
    (0..table.cols())
        .map(|b| (0..table.rows()).map(|a| strategy[a] * table.get(a, b)).sum())
        .collect()
}

/// One program per follower action `b`: maximize the leader's mixed value
/// at `b` subject to `b` being within `slack` of the follower's best column.
pub fn best_mixed_leader_strategy(mu1: &PayoffTable, mu2: &PayoffTable, slack: f64) -> Result<MixedStrategySolution> {
    if !(slack.is_finite() && slack >= 0.0) {
        return Err(param("slack", format!("must be finite and >= 0, got {slack}")));
    }
    if mu1.rows() != mu2.rows() || mu1.cols() != mu2.cols() {
        return Err(param("tables", "leader and follower tables differ in shape"));
    }
    let (na, nb) = (mu1.rows(), mu1.cols());
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    for b in 0..nb {
        let mut lp = LinearProgram::new(mu1.column(b), Sense::Maximize);
        lp.add_eq(vec![1.0; na], 1.0);
        for b2 in (0..nb).filter(|&b2| b2 != b) {
            let row: Vec<f64> = (0..na).map(|a| mu2.get(a, b) - mu2.get(a, b2)).collect();
            lp.add_ge(row, -slack);
        }
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            continue;
        }
        let replace = match &best {
            None => true,
            Some((_, _, v)) => sol.value > *v + 1e-12,
        };
        if replace {
            best = Some((b, sol.x, sol.value));
        }
    }
    let (follower_action, strategy, value) =
        best.ok_or_else(|| Error::Numerical("no follower action is feasible".into()))?;
    Ok(MixedStrategySolution {
        strategy: clean_simplex(strategy),
        follower_action,
        value,
        lp_calls: nb,
    })
}

/// Clamps round-off negatives and renormalizes a simplex point.
pub(crate) fn clean_simplex(mut p: Vec<f64>) -> Vec<f64> {
    for x in p.iter_mut() {
        *x = x.max(0.0);
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

/// Follower columns within `epsilon` of the best under `strategy` (no tolerance).
pub fn mixed_best_response(mu2: &PayoffTable, strategy: &[f64], epsilon: f64, tolerance: f64) -> Vec<usize> {
    near_best(&mix(mu2, strategy), epsilon, tolerance)
}
