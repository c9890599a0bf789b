//! Aggregation of trial records.

use serde::{Deserialize, Serialize};

use crate::harness::TrialRecord;
use crate::HarnessError;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959964;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub successes: usize,
    pub trials: usize,
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Rate {
    pub fn new(successes: usize, trials: usize) -> Self {
        let (lower, upper) = wilson_interval(successes, trials, Z95);
        Self {
            successes,
            trials,
            rate: successes as f64 / trials as f64,
            lower,
            upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub epsilon: f64,
    pub budget_multiplier: f64,
    pub trials: usize,
    pub errors: usize,
    pub leader: Rate,
    pub follower: Rate,
    pub joint: Rate,
    /// Mean of `best_value - value_at_hat` over successful runs.
    pub mean_deficit: f64,
    pub mean_queries: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
}

/// Per-cell success rates; failed trials count against every rate.
pub fn summarize(records: &[TrialRecord]) -> Result<Summary, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Config("no records to summarize".into()));
    }
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.cell, r.trial));
    let mut cells = Vec::new();
    for group in sorted.chunk_by(|a, b| a.cell == b.cell) {
        let n = group.len();
        let count = |f: &dyn Fn(&TrialRecord) -> bool| group.iter().filter(|r| f(r)).count();
        let ok: Vec<&&TrialRecord> = group.iter().filter(|r| !r.failed()).collect();
        let mean = |f: &dyn Fn(&TrialRecord) -> f64| {
            if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
            }
        };
        cells.push(CellSummary {
            cell: group[0].cell,
            epsilon: group[0].epsilon,
            budget_multiplier: group[0].budget_multiplier,
            trials: n,
            errors: count(&|r| r.failed()),
            leader: Rate::new(count(&|r| r.leader_ok), n),
            follower: Rate::new(count(&|r| r.follower_ok), n),
            joint: Rate::new(count(&|r| r.leader_ok && r.follower_ok), n),
            mean_deficit: mean(&|r| r.deficit()),
            mean_queries: mean(&|r| r.n_total_queries as f64),
        });
    }
    Ok(Summary { cells })
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "cell  epsilon  budget  trials  errors  leader [95% CI]          follower [95% CI]        deficit   queries")?;
        for c in &self.cells {
            writeln!(
                f,
                "{:<5} {:<8} {:<7} {:<7} {:<7} {:.3} [{:.3}, {:.3}]     {:.3} [{:.3}, {:.3}]     {:<9.4} {:.0}",
                c.cell,
                c.epsilon,
                c.budget_multiplier,
                c.trials,
                c.errors,
                c.leader.rate,
                c.leader.lower,
                c.leader.upper,
                c.follower.rate,
                c.follower.lower,
                c.follower.upper,
                c.mean_deficit,
                c.mean_queries
            )?;
        }
        Ok(())
    }
}
