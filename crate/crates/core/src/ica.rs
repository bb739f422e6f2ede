//! Imperialist Competitive Algorithm over flat real vectors.
//!
//! A population of countries is scored by the objective; the best become
//! imperialists and the rest are handed out as colonies in proportion to each
//! imperialist's normalized power. Every decade then runs:
//!
//! 1. assimilation: each colony moves toward its imperialist by
//!    `U(0, beta) * (imperialist - colony)` independently per dimension,
//! 2. revolution: `floor(rate * colonies)` colonies per empire are resampled
//!    uniformly in the search box,
//! 3. swap: a colony cheaper than its imperialist takes over the empire,
//! 4. competition: the weakest colony of the weakest empire (by total cost
//!    `imperialist + zeta * mean(colonies)`) moves to an empire drawn with
//!    probability proportional to its power; an empire left without colonies
//!    collapses at the next competition and its imperialist becomes a colony of
//!    the winner.
//!
//! The run stops after `num_decades`, or earlier once a single empire remains
//! whose colonies' mean cost is within `convergence_epsilon` of its
//! imperialist's.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::optim::{Bounds, Country, Evaluator, Objective, RunTrace, SearchBox, TraceRow};
use crate::rng::{substream, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct IcaConfig {
    pub num_countries: usize,
    pub num_imperialists: usize,
    pub num_decades: usize,
    /// `beta`: upper end of the per-dimension assimilation draw.
    pub assimilation_coefficient: f64,
    /// `zeta`: weight of the mean colony cost in an empire's total cost.
    pub colony_power_weight: f64,
    /// Fraction of each empire's colonies resampled per decade; 0 disables.
    pub revolution_rate: f64,
    pub bounds: Bounds,
    pub convergence_epsilon: f64,
    pub seed: u64,
    pub threads: usize,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            num_countries: 1000,
            num_imperialists: 100,
            num_decades: 200,
            assimilation_coefficient: 2.0,
            colony_power_weight: 0.05,
            revolution_rate: 0.1,
            bounds: Bounds::default(),
            convergence_epsilon: 1e-6,
            seed: 0,
            threads: 1,
        }
    }
}

impl IcaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("ica: {m}")));
        if self.num_imperialists < 1 || self.num_imperialists >= self.num_countries {
            return bad("need 1 <= num_imperialists < num_countries");
        }
        if self.num_decades < 1 {
            return bad("num_decades must be at least 1");
        }
        if !(self.assimilation_coefficient > 0.0 && self.assimilation_coefficient.is_finite()) {
            return bad("assimilation_coefficient must be positive");
        }
        if !(0.0..=1.0).contains(&self.colony_power_weight) {
            return bad("colony_power_weight must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.revolution_rate) {
            return bad("revolution_rate must lie in [0, 1]");
        }
        if !(self.convergence_epsilon >= 0.0) {
            return bad("convergence_epsilon must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Empire {
    pub imperialist: Country,
    pub colonies: Vec<Country>,
}

impl Empire {
    pub fn new(imperialist: Country, colonies: Vec<Country>) -> Self {
        Self {
            imperialist,
            colonies,
        }
    }

    /// Mean colony cost; 0 for an empire without colonies.
    pub fn mean_colony_cost(&self) -> f64 {
        if self.colonies.is_empty() {
            0.0
        } else {
            self.colonies.iter().map(|c| c.cost).sum::<f64>() / self.colonies.len() as f64
        }
    }

    pub fn total_cost(&self, zeta: f64) -> f64 {
        self.imperialist.cost + zeta * self.mean_colony_cost()
    }

    pub fn size(&self) -> usize {
        1 + self.colonies.len()
    }

    /// Promotes the cheapest colony if it is strictly cheaper than the
    /// imperialist (lowest index wins ties). Returns whether a swap happened.
    pub fn swap_if_better(&mut self) -> bool {
        let mut best: Option<usize> = None;
        for (i, c) in self.colonies.iter().enumerate() {
            let threshold = best.map_or(self.imperialist.cost, |b| self.colonies[b].cost);
            if c.cost < threshold {
                best = Some(i);
            }
        }
        match best {
            Some(i) => {
                std::mem::swap(&mut self.imperialist, &mut self.colonies[i]);
                true
            }
            None => false,
        }
    }

    fn spread(&self) -> f64 {
        if self.colonies.is_empty() {
            0.0
        } else {
            (self.mean_colony_cost() - self.imperialist.cost).abs()
        }
    }
}

/// Per-decade inputs shared by the stochastic steps.
pub struct StepContext<'a, 'o, O: Objective + ?Sized> {
    pub seed: u64,
    pub decade: u64,
    pub bounds: &'a SearchBox,
    pub evaluator: &'a Evaluator<'o, O>,
}

/// Moves `colony` toward `imperialist`: per dimension
/// `colony += beta * u * (imperialist - colony)` with `u = unit_draw()` in
/// `[0, 1)`, then clamps to the box.
pub fn assimilate_position_with(
    colony: &mut [f64],
    imperialist: &[f64],
    beta: f64,
    bounds: &SearchBox,
    mut unit_draw: impl FnMut() -> f64,
) {
    for (c, &imp) in colony.iter_mut().zip(imperialist) {
        *c += beta * unit_draw() * (imp - *c);
    }
    bounds.clamp(colony);
}

pub fn assimilate_position<R: Rng + ?Sized>(
    colony: &mut [f64],
    imperialist: &[f64],
    beta: f64,
    bounds: &SearchBox,
    rng: &mut R,
) {
    assimilate_position_with(colony, imperialist, beta, bounds, || rng.random::<f64>());
}

/// Assimilates every colony of every empire, then re-evaluates them in one wave.
pub fn assimilate_all<O: Objective + ?Sized>(
    empires: &mut [Empire],
    beta: f64,
    ctx: &StepContext<'_, '_, O>,
) -> Result<()> {
    let slots: Vec<(usize, usize)> = empires
        .iter()
        .enumerate()
        .flat_map(|(e, emp)| (0..emp.colonies.len()).map(move |c| (e, c)))
        .collect();
    let moved: Vec<Vec<f64>> = {
        let empires = &*empires;
        ctx.evaluator.map_indexed(slots.len(), |k| {
            let (e, c) = slots[k];
            let colony = &empires[e].colonies[c];
            let mut pos = colony.position.clone();
            let mut rng = substream(
                ctx.seed,
                Purpose::IcaAssimilate,
                ctx.decade,
                colony.id as u64,
            );
            assimilate_position(
                &mut pos,
                &empires[e].imperialist.position,
                beta,
                ctx.bounds,
                &mut rng,
            );
            pos
        })
    };
    let refs: Vec<&[f64]> = moved.iter().map(|p| p.as_slice()).collect();
    let costs = ctx.evaluator.eval_many(&refs)?;
    for ((&(e, c), pos), cost) in slots.iter().zip(moved).zip(costs) {
        let colony = &mut empires[e].colonies[c];
        colony.position = pos;
        colony.cost = cost;
    }
    Ok(())
}

/// Number of colonies revolution replaces in an empire of `colonies` colonies.
pub fn revolution_count(rate: f64, colonies: usize) -> usize {
    // the epsilon absorbs products like 0.29 * 100 = 28.999999999999996
    ((rate * colonies as f64 + 1e-9).floor() as usize).min(colonies)
}

/// Resamples `floor(rate * |colonies|)` randomly chosen colonies per empire.
/// Returns the number of colonies replaced.
pub fn revolve_all<O: Objective + ?Sized>(
    empires: &mut [Empire],
    rate: f64,
    ctx: &StepContext<'_, '_, O>,
) -> Result<usize> {
    let mut slots = Vec::new();
    for (e, emp) in empires.iter().enumerate() {
        let k = revolution_count(rate, emp.colonies.len());
        if k == 0 {
            continue;
        }
        let mut rng = substream(
            ctx.seed,
            Purpose::IcaRevolveChoice,
            ctx.decade,
            emp.imperialist.id as u64,
        );
        let mut chosen = rand::seq::index::sample(&mut rng, emp.colonies.len(), k).into_vec();
        chosen.sort_unstable();
        slots.extend(chosen.into_iter().map(|c| (e, c)));
    }
    if slots.is_empty() {
        return Ok(0);
    }
    let fresh: Vec<Vec<f64>> = slots
        .iter()
        .map(|&(e, c)| {
            let id = empires[e].colonies[c].id as u64;
            let mut rng = substream(ctx.seed, Purpose::IcaRevolvePosition, ctx.decade, id);
            ctx.bounds.sample(&mut rng)
        })
        .collect();
    let refs: Vec<&[f64]> = fresh.iter().map(|p| p.as_slice()).collect();
    let costs = ctx.evaluator.eval_many(&refs)?;
    for ((&(e, c), pos), cost) in slots.iter().zip(fresh).zip(costs) {
        let colony = &mut empires[e].colonies[c];
        colony.position = pos;
        colony.cost = cost;
    }
    Ok(slots.len())
}

/// What one competition event did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Competition {
    /// A colony moved between empires (indices valid before the call).
    Transfer {
        from: usize,
        to: usize,
        country: usize,
    },
    /// A colony-less empire dissolved into the winner (indices valid before
    /// the call).
    Collapse { dissolved: usize, into: usize },
    /// Fewer than two empires; nothing to do.
    None,
}

/// Picks the empire receiving the loser's country: probability proportional
/// to `max_total - total_n` among every empire but the loser, uniform when all
/// those powers are zero.
fn pick_winner<R: Rng + ?Sized>(totals: &[f64], loser: usize, rng: &mut R) -> usize {
    let max_total = totals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let candidates: Vec<usize> = (0..totals.len()).filter(|&i| i != loser).collect();
    let powers: Vec<f64> = candidates
        .iter()
        .map(|&i| (max_total - totals[i]).max(0.0))
        .collect();
    let sum: f64 = powers.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return candidates[rng.random_range(0..candidates.len())];
    }
    let mut target = rng.random::<f64>() * sum;
    for (&i, &p) in candidates.iter().zip(&powers) {
        if target < p {
            return i;
        }
        target -= p;
    }
    // rounding left `target` marginally past the end
    *candidates
        .iter()
        .zip(&powers)
        .rev()
        .find(|(_, &p)| p > 0.0)
        .map(|(i, _)| i)
        .expect("positive power sum implies a positive entry")
}

/// One imperialistic competition event.
///
/// If some empire has no colonies left, the weakest such empire dissolves and
/// its imperialist joins the winner as a colony. Otherwise the costliest
/// colony of the empire with the highest total cost moves to the winner.
pub fn compete<R: Rng + ?Sized>(empires: &mut Vec<Empire>, zeta: f64, rng: &mut R) -> Competition {
    if empires.len() < 2 {
        return Competition::None;
    }
    let totals: Vec<f64> = empires.iter().map(|e| e.total_cost(zeta)).collect();
    let argmax = |idx: &mut dyn Iterator<Item = usize>| {
        idx.fold(None, |best: Option<usize>, i| match best {
            Some(b) if totals[b] >= totals[i] => Some(b),
            _ => Some(i),
        })
    };

    let empty = argmax(&mut (0..empires.len()).filter(|&i| empires[i].colonies.is_empty()));
    if let Some(loser) = empty {
        let winner = pick_winner(&totals, loser, rng);
        let dissolved = empires.remove(loser);
        let winner_idx = if winner > loser { winner - 1 } else { winner };
        empires[winner_idx].colonies.push(dissolved.imperialist);
        return Competition::Collapse {
            dissolved: loser,
            into: winner,
        };
    }

    let loser = argmax(&mut (0..empires.len())).expect("at least two empires");
    let winner = pick_winner(&totals, loser, rng);
    let colonies = &empires[loser].colonies;
    let mut worst = 0;
    for (i, c) in colonies.iter().enumerate() {
        if c.cost > colonies[worst].cost {
            worst = i;
        }
    }
    let moved = empires[loser].colonies.remove(worst);
    let country = moved.id;
    empires[winner].colonies.push(moved);
    Competition::Transfer {
        from: loser,
        to: winner,
        country,
    }
}

/// Splits `n_colonies` among `powers.len()` empires: one each first (to the
/// strongest when there are too few), the rest by largest remainder on the
/// normalized powers. Ties go to the lower index.
fn allocate_colonies(powers: &[f64], n_colonies: usize) -> Vec<usize> {
    let n = powers.len();
    let mut counts = vec![0usize; n];
    if n_colonies < n {
        for c in counts.iter_mut().take(n_colonies) {
            *c = 1;
        }
        return counts;
    }
    counts.iter_mut().for_each(|c| *c = 1);
    let rest = n_colonies - n;
    let quotas: Vec<f64> = powers.iter().map(|p| p * rest as f64).collect();
    let mut assigned = 0;
    for (c, q) in counts.iter_mut().zip(&quotas) {
        let f = q.floor() as usize;
        *c += f;
        assigned += f;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut left = rest.saturating_sub(assigned);
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Normalized imperialist powers `|C_n / sum C_i|` with
/// `C_n = cost_n - max imperialist cost`; uniform when all costs are equal.
pub fn imperialist_powers(costs: &[f64]) -> Vec<f64> {
    let max = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let normalized: Vec<f64> = costs.iter().map(|c| c - max).collect();
    let sum: f64 = normalized.iter().sum();
    if sum == 0.0 || !sum.is_finite() {
        return vec![1.0 / costs.len() as f64; costs.len()];
    }
    normalized.iter().map(|c| (c / sum).abs()).collect()
}

pub(crate) fn initialize_with<O: Objective + ?Sized>(
    config: &IcaConfig,
    bounds: &SearchBox,
    evaluator: &Evaluator<'_, O>,
) -> Result<Vec<Empire>> {
    let positions: Vec<Vec<f64>> = (0..config.num_countries)
        .map(|id| bounds.sample(&mut substream(config.seed, Purpose::IcaInit, 0, id as u64)))
        .collect();
    let refs: Vec<&[f64]> = positions.iter().map(|p| p.as_slice()).collect();
    let costs = evaluator.eval_many(&refs)?;
    let mut countries: Vec<Country> = positions
        .into_iter()
        .zip(costs)
        .enumerate()
        .map(|(id, (p, c))| Country::new(id, p, c))
        .collect();
    countries.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.id.cmp(&b.id)));

    let mut colonies = countries.split_off(config.num_imperialists);
    let imperialists = countries;
    let powers = imperialist_powers(&imperialists.iter().map(|c| c.cost).collect::<Vec<_>>());
    let counts = allocate_colonies(&powers, colonies.len());
    colonies.shuffle(&mut substream(config.seed, Purpose::IcaAssign, 0, 0));

    let mut rest = colonies.into_iter();
    Ok(imperialists
        .into_iter()
        .zip(counts)
        .map(|(imp, n)| Empire::new(imp, rest.by_ref().take(n).collect()))
        .collect())
}

/// Builds the initial empires. Deterministic in `config.seed`.
pub fn initialize<O: Objective + ?Sized>(
    config: &IcaConfig,
    objective: &O,
    dim: usize,
) -> Result<Vec<Empire>> {
    config.validate()?;
    if dim == 0 {
        return Err(Error::Config("ica: dimension must be at least 1".into()));
    }
    let bounds = config.bounds.resolve(dim)?;
    let evaluator = Evaluator::new(objective, config.threads)?;
    initialize_with(config, &bounds, &evaluator)
}

fn cheapest(empires: &[Empire]) -> &Country {
    empires
        .iter()
        .flat_map(|e| std::iter::once(&e.imperialist).chain(&e.colonies))
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("at least one empire")
}

fn observe(best: &mut Country, empires: &[Empire]) {
    let c = cheapest(empires);
    if c.cost < best.cost {
        *best = c.clone();
    }
}

/// Hook called with the empires after each decade; lets tests watch the
/// population without duplicating the loop.
pub trait DecadeObserver {
    fn after_swap(&mut self, _decade: usize, _empires: &[Empire]) {}
    fn end_of_decade(&mut self, _decade: usize, _empires: &[Empire]) {}
}

impl DecadeObserver for () {}

pub fn run<O: Objective + ?Sized>(
    config: &IcaConfig,
    objective: &O,
    dim: usize,
) -> Result<(Country, RunTrace)> {
    run_observed(config, objective, dim, &mut ())
}

pub fn run_observed<O: Objective + ?Sized, W: DecadeObserver + ?Sized>(
    config: &IcaConfig,
    objective: &O,
    dim: usize,
    observer: &mut W,
) -> Result<(Country, RunTrace)> {
    config.validate()?;
    if dim == 0 {
        return Err(Error::Config("ica: dimension must be at least 1".into()));
    }
    let bounds = config.bounds.resolve(dim)?;
    let evaluator = Evaluator::new(objective, config.threads)?;
    let mut empires = initialize_with(config, &bounds, &evaluator)?;
    let mut best = cheapest(&empires).clone();
    let mut rows = Vec::with_capacity(config.num_decades);

    for decade in 1..=config.num_decades {
        let ctx = StepContext {
            seed: config.seed,
            decade: decade as u64,
            bounds: &bounds,
            evaluator: &evaluator,
        };
        assimilate_all(&mut empires, config.assimilation_coefficient, &ctx)?;
        observe(&mut best, &empires);
        if config.revolution_rate > 0.0
            && revolve_all(&mut empires, config.revolution_rate, &ctx)? > 0
        {
            observe(&mut best, &empires);
        }
        for e in empires.iter_mut() {
            e.swap_if_better();
        }
        observer.after_swap(decade, &empires);

        let mut rng = substream(config.seed, Purpose::IcaCompete, decade as u64, 0);
        compete(&mut empires, config.colony_power_weight, &mut rng);
        // a transferred country may undercut its new imperialist
        for e in empires.iter_mut() {
            e.swap_if_better();
        }
        observer.end_of_decade(decade, &empires);

        let mean_imp =
            empires.iter().map(|e| e.imperialist.cost).sum::<f64>() / empires.len() as f64;
        rows.push(TraceRow {
            iteration: decade,
            best_cost: best.cost,
            mean_cost: mean_imp,
            num_empires: empires.len(),
            objective_calls: evaluator.calls(),
        });
        if empires.len() == 1 && empires[0].spread() < config.convergence_epsilon {
            break;
        }
    }

    Ok((best.clone(), RunTrace { rows, best }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::sphere;

    fn country(id: usize, cost: f64) -> Country {
        Country::new(id, vec![cost], cost)
    }

    fn small_config(countries: usize, imps: usize) -> IcaConfig {
        IcaConfig {
            num_countries: countries,
            num_imperialists: imps,
            num_decades: 10,
            bounds: Bounds::uniform(-5.0, 5.0),
            seed: 3,
            ..IcaConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(IcaConfig::default().validate().is_ok());
        let mut c = IcaConfig::default();
        c.num_imperialists = 1000;
        assert!(c.validate().is_err());
        c = IcaConfig::default();
        c.assimilation_coefficient = 0.0;
        assert!(c.validate().is_err());
        c = IcaConfig::default();
        c.colony_power_weight = 1.5;
        assert!(c.validate().is_err());
        c = IcaConfig::default();
        c.num_decades = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn initialize_conserves_countries() {
        let e = initialize(&small_config(10, 3), &sphere, 2).unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(e.iter().map(|e| e.colonies.len()).sum::<usize>(), 7);
        assert!(e.iter().all(|e| !e.colonies.is_empty()));
        let mut ids: Vec<usize> = e
            .iter()
            .flat_map(|e| std::iter::once(e.imperialist.id).chain(e.colonies.iter().map(|c| c.id)))
            .collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn imperialists_are_the_cheapest() {
        let e = initialize(&small_config(30, 4), &sphere, 3).unwrap();
        let worst_imp = e.iter().map(|e| e.imperialist.cost).fold(0.0, f64::max);
        assert!(e
            .iter()
            .flat_map(|e| &e.colonies)
            .all(|c| c.cost >= worst_imp));
    }

    #[test]
    fn equal_costs_split_evenly() {
        let flat = |_: &[f64]| 1.0;
        let e = initialize(&small_config(23, 4), &flat, 2).unwrap();
        let counts: Vec<usize> = e.iter().map(|e| e.colonies.len()).collect();
        assert_eq!(counts.iter().sum::<usize>(), 19);
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "{counts:?}");
    }

    #[test]
    fn too_few_colonies_go_to_the_strongest() {
        let e = initialize(&small_config(10, 7), &sphere, 2).unwrap();
        let counts: Vec<usize> = e.iter().map(|e| e.colonies.len()).collect();
        assert_eq!(counts, vec![1, 1, 1, 0, 0, 0, 0]);
    }

    #[test]
    fn initialize_deterministic() {
        let a = initialize(&small_config(40, 5), &sphere, 4).unwrap();
        let b = initialize(&small_config(40, 5), &sphere, 4).unwrap();
        assert_eq!(a, b);
        let mut other = small_config(40, 5);
        other.seed = 4;
        assert_ne!(a, initialize(&other, &sphere, 4).unwrap());
    }

    #[test]
    fn nan_objective_fails_initialize() {
        let bad = |x: &[f64]| if x[0] > 0.0 { f64::NAN } else { 0.0 };
        assert!(matches!(
            initialize(&small_config(20, 2), &bad, 2),
            Err(Error::Objective { .. })
        ));
    }

    #[test]
    fn allocation_follows_power() {
        let counts = allocate_colonies(&[0.7, 0.3, 0.0], 13);
        assert_eq!(counts.iter().sum::<usize>(), 13);
        assert!(counts[0] > counts[1] && counts[1] > counts[2]);
        assert_eq!(counts[2], 1);
    }

    #[test]
    fn powers_normalize() {
        let p = imperialist_powers(&[1.0, 2.0, 4.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(p[2], 0.0);
        assert!(p[0] > p[1]);
        assert_eq!(imperialist_powers(&[2.0, 2.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn assimilate_fixed_point_and_endpoint() {
        let b = Bounds::uniform(-5.0, 5.0).resolve(3).unwrap();
        let imp = [1.0, -2.0, 3.0];
        let mut at_imp = imp.to_vec();
        assimilate_position_with(&mut at_imp, &imp, 2.0, &b, || 0.7);
        assert_eq!(at_imp, imp.to_vec());

        let mut colony = vec![-4.0, 4.0, 0.0];
        assimilate_position_with(&mut colony, &imp, 1.0, &b, || 1.0);
        assert_eq!(colony, imp.to_vec());
    }

    #[test]
    fn assimilate_clamps_overshoot() {
        let b = Bounds::uniform(-1.0, 1.0).resolve(1).unwrap();
        let mut colony = vec![-1.0];
        assimilate_position_with(&mut colony, &[0.9], 2.0, &b, || 0.99);
        assert_eq!(colony, vec![1.0]);
    }

    #[test]
    fn revolution_counts() {
        assert_eq!(revolution_count(0.0, 24), 0);
        assert_eq!(revolution_count(1.0, 24), 24);
        assert_eq!(revolution_count(0.1, 24), 2);
        assert_eq!(revolution_count(0.1, 9), 0);
    }

    #[test]
    fn revolve_replaces_exactly_floor() {
        let b = Bounds::uniform(-1.0, 1.0).resolve(2).unwrap();
        let ev = Evaluator::sequential(&sphere);
        let ctx = StepContext {
            seed: 1,
            decade: 1,
            bounds: &b,
            evaluator: &ev,
        };
        let colonies: Vec<Country> = (1..=24)
            .map(|i| Country::new(i, vec![0.5, 0.5], 0.5))
            .collect();
        let original = vec![Empire::new(Country::new(0, vec![0.0, 0.0], 0.0), colonies)];

        let mut e = original.clone();
        assert_eq!(revolve_all(&mut e, 0.0, &ctx).unwrap(), 0);
        assert_eq!(e, original);

        let mut e = original.clone();
        assert_eq!(revolve_all(&mut e, 0.1, &ctx).unwrap(), 2);
        let changed = e[0]
            .colonies
            .iter()
            .zip(&original[0].colonies)
            .filter(|(a, b)| a.position != b.position)
            .count();
        assert_eq!(changed, 2);
        assert!(e[0].colonies.iter().all(|c| c.cost == sphere(&c.position)));

        let mut e = original.clone();
        assert_eq!(revolve_all(&mut e, 1.0, &ctx).unwrap(), 24);
        assert!(e[0]
            .colonies
            .iter()
            .zip(&original[0].colonies)
            .all(|(a, b)| a.position != b.position));
        assert_eq!(e[0].imperialist, original[0].imperialist);
    }

    #[test]
    fn swap_rules() {
        let mut e = Empire::new(country(0, 1.0), vec![country(1, 2.0), country(2, 0.5)]);
        assert!(e.swap_if_better());
        assert_eq!(e.imperialist.id, 2);
        assert_eq!(e.colonies[1].id, 0);

        let mut e = Empire::new(country(0, 0.1), vec![country(1, 2.0), country(2, 0.5)]);
        let before = e.clone();
        assert!(!e.swap_if_better());
        assert_eq!(e, before);

        let mut e = Empire::new(
            country(0, 1.0),
            vec![country(1, 0.3), country(2, 0.2), country(3, 0.2)],
        );
        e.swap_if_better();
        assert_eq!(e.imperialist.id, 2);

        let mut e = Empire::new(country(0, 1.0), vec![country(1, 1.0)]);
        assert!(!e.swap_if_better());
    }

    #[test]
    fn total_cost_blends_colonies() {
        let e = Empire::new(country(0, 1.0), vec![country(1, 2.0), country(2, 4.0)]);
        assert!((e.total_cost(0.05) - 1.15).abs() < 1e-15);
        assert_eq!(Empire::new(country(0, 1.0), vec![]).total_cost(0.5), 1.0);
    }

    #[test]
    fn weakest_empire_dissolves_after_two_events() {
        let mut empires = vec![
            Empire::new(country(0, 0.1), vec![country(1, 0.2), country(2, 0.3)]),
            Empire::new(country(3, 0.9), vec![country(4, 1.0)]),
        ];
        let mut rng = substream(0, Purpose::IcaCompete, 0, 0);
        assert_eq!(
            compete(&mut empires, 0.05, &mut rng),
            Competition::Transfer {
                from: 1,
                to: 0,
                country: 4
            }
        );
        assert_eq!(empires.len(), 2);
        assert!(empires[1].colonies.is_empty());
        assert_eq!(
            compete(&mut empires, 0.05, &mut rng),
            Competition::Collapse {
                dissolved: 1,
                into: 0
            }
        );
        assert_eq!(empires.len(), 1);
        assert_eq!(empires[0].size(), 5);
        assert_eq!(compete(&mut empires, 0.05, &mut rng), Competition::None);
    }

    #[test]
    fn equal_power_winner_is_uniform() {
        // weakest is index 0 (ties keep the first); winners spread over 1..4
        let mut hits = [0usize; 4];
        let mut rng = substream(9, Purpose::IcaCompete, 0, 0);
        for _ in 0..20_000 {
            let mut empires: Vec<Empire> = (0..4)
                .map(|i| Empire::new(country(2 * i, 1.0), vec![country(2 * i + 1, 1.0)]))
                .collect();
            if let Competition::Transfer { from, to, .. } = compete(&mut empires, 0.05, &mut rng) {
                assert_eq!(from, 0);
                hits[to] += 1;
            }
        }
        assert_eq!(hits[0], 0);
        for &h in &hits[1..] {
            let f = h as f64 / 20_000.0;
            assert!((f - 1.0 / 3.0).abs() < 0.02, "{hits:?}");
        }
    }

    #[test]
    fn constant_objective_flat_trace() {
        let flat = |_: &[f64]| 2.5;
        let mut c = small_config(30, 3);
        c.num_decades = 20;
        let (best, trace) = run(&c, &flat, 3).unwrap();
        assert_eq!(best.cost, 2.5);
        assert!(trace.rows.iter().all(|r| r.best_cost == 2.5));
    }

    #[test]
    fn single_decade_single_row() {
        let mut c = small_config(30, 3);
        c.num_decades = 1;
        let (_, trace) = run(&c, &sphere, 2).unwrap();
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.rows[0].iteration, 1);
    }

    #[test]
    fn threads_do_not_change_results() {
        let mut c = small_config(60, 6);
        c.num_decades = 30;
        let a = run(&c, &sphere, 5).unwrap();
        c.threads = 4;
        let b = run(&c, &sphere, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn call_count_tracked() {
        let mut c = small_config(20, 2);
        c.num_decades = 3;
        c.revolution_rate = 0.0;
        let (_, trace) = run(&c, &sphere, 2).unwrap();
        // initial wave, then one call per colony per decade
        let first = trace.rows[0].objective_calls;
        assert_eq!(first, 20 + 18);
        // a collapsed imperialist becomes a colony of the winner
        for w in trace.rows.windows(2) {
            let colonies = 20 - w[0].num_empires as u64;
            assert_eq!(w[1].objective_calls - w[0].objective_calls, colonies);
        }
    }
}
