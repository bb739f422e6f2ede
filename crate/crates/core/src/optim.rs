//! Pieces shared by the population optimizers: objectives, search bounds,
//! cached-cost candidates, the evaluation wave and the run trace.

use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A cost to minimize. Implementations must be pure: the same position always
/// yields the same cost, whichever thread asks.
pub trait Objective: Sync {
    fn cost(&self, position: &[f64]) -> f64;
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn cost(&self, position: &[f64]) -> f64 {
        self(position)
    }
}

/// `sum(x_i^2)`, minimum 0 at the origin.
pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bounds {
    Uniform { low: f64, high: f64 },
    PerDimension(Vec<(f64, f64)>),
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds::Uniform {
            low: -1.0,
            high: 1.0,
        }
    }
}

impl Bounds {
    pub fn uniform(low: f64, high: f64) -> Self {
        Bounds::Uniform { low, high }
    }

    /// Per-dimension `(low, high)` pairs for a problem of dimension `dim`.
    pub fn resolve(&self, dim: usize) -> Result<SearchBox> {
        let ranges = match self {
            Bounds::Uniform { low, high } => vec![(*low, *high); dim],
            Bounds::PerDimension(r) => {
                if r.len() != dim {
                    return Err(Error::Config(format!(
                        "{} bound pairs given for a {dim}-dimensional problem",
                        r.len()
                    )));
                }
                r.clone()
            }
        };
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "bounds for dimension {i} must satisfy low < high, got ({lo}, {hi})"
                )));
            }
        }
        Ok(SearchBox { ranges })
    }
}

/// Resolved box constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchBox {
    ranges: Vec<(f64, f64)>,
}

impl SearchBox {
    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn range(&self, i: usize) -> (f64, f64) {
        self.ranges[i]
    }

    pub fn width(&self, i: usize) -> f64 {
        self.ranges[i].1 - self.ranges[i].0
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.ranges) {
            *v = v.clamp(lo, hi);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.ranges.len()
            && x.iter()
                .zip(&self.ranges)
                .all(|(v, &(lo, hi))| *v >= lo && *v <= hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.ranges
            .iter()
            .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect()
    }
}

/// One candidate solution with its cached cost.
///
/// `id` is a stable identity that follows the candidate through role changes;
/// it keys the candidate's random substreams.
#[derive(Debug, Clone, PartialEq)]
pub struct Country {
    pub id: usize,
    pub position: Vec<f64>,
    pub cost: f64,
}

impl Country {
    pub fn new(id: usize, position: Vec<f64>, cost: f64) -> Self {
        Self { id, position, cost }
    }
}

/// Evaluates batches of positions, optionally on a private thread pool.
///
/// Results are returned in input order, so the thread count never changes
/// the outcome.
pub struct Evaluator<'a, O: Objective + ?Sized> {
    objective: &'a O,
    pool: Option<rayon::ThreadPool>,
    calls: AtomicU64,
}

impl<'a, O: Objective + ?Sized> Evaluator<'a, O> {
    pub fn new(objective: &'a O, threads: usize) -> Result<Self> {
        let pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            objective,
            pool,
            calls: AtomicU64::new(0),
        })
    }

    pub fn sequential(objective: &'a O) -> Self {
        Self {
            objective,
            pool: None,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn eval(&self, position: &[f64]) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let c = self.objective.cost(position);
        if !c.is_finite() {
            return Err(Error::objective(c, position));
        }
        Ok(c)
    }

    pub fn eval_many(&self, positions: &[&[f64]]) -> Result<Vec<f64>> {
        match &self.pool {
            None => positions.iter().map(|p| self.eval(p)).collect(),
            Some(pool) => pool.install(|| positions.par_iter().map(|p| self.eval(p)).collect()),
        }
    }

    /// Runs `f` over `0..n` on the pool (if any), collecting in index order.
    pub fn map_indexed<T: Send>(&self, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        match &self.pool {
            None => (0..n).map(f).collect(),
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// Decade (ICA) or generation (GA), starting at 1.
    pub iteration: usize,
    /// Lowest cost observed so far.
    pub best_cost: f64,
    /// Mean imperialist cost (ICA) or mean population cost (GA).
    pub mean_cost: f64,
    /// Surviving empires (ICA); 0 for GA.
    pub num_empires: usize,
    /// Cumulative objective evaluations.
    pub objective_calls: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub best: Country,
}

/// Which optimizer produced a trace; selects the name of the first CSV
/// column. For GA the `mean_imperialist_cost` column holds the mean
/// population cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Ica,
    Ga,
}

impl RunTrace {
    pub fn best_costs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.best_cost).collect()
    }

    pub fn write_csv<W: Write>(&self, kind: TraceKind, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header = match kind {
            TraceKind::Ica => [
                "decade",
                "best_cost",
                "mean_imperialist_cost",
                "num_empires",
                "objective_calls",
            ],
            TraceKind::Ga => [
                "generation",
                "best_cost",
                "mean_imperialist_cost",
                "num_empires",
                "objective_calls",
            ],
        };
        w.write_record(header)?;
        for r in &self.rows {
            w.write_record([
                r.iteration.to_string(),
                format!("{:.16e}", r.best_cost),
                format!("{:.16e}", r.mean_cost),
                r.num_empires.to_string(),
                r.objective_calls.to_string(),
            ])?;
        }
        w.flush()
    }
}
